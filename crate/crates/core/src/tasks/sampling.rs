use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geodesic::{cross, dot, norm, scaled, UnitVector};

/// One uniform direction: uniform `z` in `[-1, 1]`, uniform azimuth.
#[inline]
pub fn uniform_direction<R: Rng>(rng: &mut R) -> UnitVector {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    UnitVector::new_unchecked([r * phi.cos(), r * phi.sin(), z])
}

pub fn sample_uniform_sphere(seed: u64, n: usize) -> Vec<UnitVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| uniform_direction(&mut rng)).collect()
}

/// `n` nearly evenly spaced points on a golden-angle spiral.
pub fn fibonacci_sphere(n: usize) -> Vec<UnitVector> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            UnitVector::new_unchecked([r * phi.cos(), r * phi.sin(), z])
        })
        .collect()
}

/// Rotation of `v` by `angle` about the unit `axis` (Rodrigues).
pub fn rotate(v: &[f64; 3], axis: &[f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let k = cross(axis, v);
    let kd = dot(axis, v) * (1.0 - c);
    std::array::from_fn(|i| v[i] * c + k[i] * s + axis[i] * kd)
}

/// Some unit vector orthogonal to `v`, chosen from `rng`.
pub fn random_perpendicular<R: Rng>(v: &UnitVector, rng: &mut R) -> [f64; 3] {
    loop {
        let r = uniform_direction(rng);
        let c = cross(v.as_array(), r.as_array());
        let n = norm(&c);
        if n > 1e-3 {
            return scaled(&c, 1.0 / n);
        }
    }
}

/// Each direction rotated by `angle` about a random axis orthogonal to it.
pub fn rotated_directions(dirs: &[UnitVector], angle: f64, seed: u64) -> Vec<UnitVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dirs.iter()
        .map(|d| {
            let axis = random_perpendicular(d, &mut rng);
            UnitVector::normalize(rotate(d.as_array(), &axis, angle)).expect("rotation keeps length")
        })
        .collect()
}

/// Smallest angle between any `a` and any `b`, in radians.
pub fn min_angular_gap(a: &[UnitVector], b: &[UnitVector]) -> f64 {
    let mut best = f64::INFINITY;
    for x in a {
        for y in b {
            best = best.min(x.angle_to(y));
        }
    }
    best
}

/// Errors unless every held-out direction is more than `min_gap` from every
/// training direction.
pub fn check_split(train: &[UnitVector], held_out: &[UnitVector], min_gap: f64) -> Result<()> {
    let gap = min_angular_gap(train, held_out);
    if gap > min_gap {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "held-out directions come within {:.4} degrees of the training set",
            gap.to_degrees()
        )))
    }
}
