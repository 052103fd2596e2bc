use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geodesic::{dot, norm, scaled, UnitVector};
use crate::tasks::sampling::{rotate, uniform_direction};

/// One directional lobe whose axis turns with position:
/// `mu(x) = R(rotation_axis, twist . x) base_axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLobe {
    pub amplitude: f64,
    pub sharpness: f64,
    pub base_axis: UnitVector,
    pub rotation_axis: UnitVector,
    pub twist: [f64; 3],
}

impl FieldLobe {
    pub fn axis_at(&self, x: &[f64; 3]) -> [f64; 3] {
        let angle = dot(&self.twist, x);
        let v = rotate(self.base_axis.as_array(), self.rotation_axis.as_array(), angle);
        scaled(&v, 1.0 / norm(&v))
    }
}

/// `f(x, d) = offset + sum_k a_k exp(lambda_k (d . mu_k(x) - 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticField5D {
    pub offset: f64,
    pub lobes: Vec<FieldLobe>,
}

impl SyntheticField5D {
    pub fn constant(value: f64) -> Self {
        Self { offset: value, lobes: Vec::new() }
    }

    /// `k` lobes with sharpness in `[2, 8]` and up to about one radian of
    /// axis rotation across the unit cube.
    pub fn random(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lobes = (0..k)
            .map(|_| FieldLobe {
                amplitude: rng.gen_range(0.5..1.5),
                sharpness: rng.gen_range(2.0..8.0),
                base_axis: uniform_direction(&mut rng),
                rotation_axis: uniform_direction(&mut rng),
                twist: std::array::from_fn(|_| rng.gen_range(-0.6..0.6)),
            })
            .collect();
        Self { offset: 0.0, lobes }
    }

    /// Upper bound of the field, `offset + sum a_k`.
    pub fn max_value(&self) -> f64 {
        self.offset + self.lobes.iter().map(|l| l.amplitude).sum::<f64>()
    }
}

pub fn synthetic_field(x: &[f64; 3], d: &UnitVector, field: &SyntheticField5D) -> f64 {
    field.offset
        + field
            .lobes
            .iter()
            .map(|l| l.amplitude * (l.sharpness * (dot(d.as_array(), &l.axis_at(x)) - 1.0)).exp())
            .sum::<f64>()
}
