use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline_grids::{polar_map, polar_unmap};
use crate::error::{Error, Result};
use crate::geodesic::{dot, UnitVector};
use crate::tasks::sampling::uniform_direction;

/// A lat-long radiance map. Row 0 is the `+z` pole; column `j` spans
/// longitudes `[j, j + 1) / width` of the range `(-pi, pi]` measured from `-x`,
/// matching [`polar_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvMap {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl EnvMap {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("{width}x{height} environment map")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} RGB map",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NonFinite(format!("radiance value {v}")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(&UnitVector) -> [f64; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for i in 0..height {
            for j in 0..width {
                let rgb = f(&texel_direction(width, height, i, j));
                pixels.extend(rgb.iter().map(|&c| c as f32));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn texel(&self, row: usize, col: usize) -> [f32; 3] {
        let o = (row * self.width + col) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn texel_direction(&self, row: usize, col: usize) -> UnitVector {
        texel_direction(self.width, self.height, row, col)
    }

    /// Colatitude of the centre of `row`.
    pub fn row_colatitude(&self, row: usize) -> f64 {
        (row as f64 + 0.5) / self.height as f64 * PI
    }

    /// Bilinear lookup with wrapped longitude and clamped rows.
    pub fn lookup(&self, d: &UnitVector) -> [f64; 3] {
        let [u, v] = polar_map(d);
        let s = u * self.width as f64 - 0.5;
        let t = (v * self.height as f64 - 0.5).clamp(0.0, (self.height - 1) as f64);
        let s0 = s.floor();
        let fs = s - s0;
        let j0 = (s0 as i64).rem_euclid(self.width as i64) as usize;
        let j1 = (j0 + 1) % self.width;
        let i0 = (t.floor() as usize).min(self.height - 1);
        let i1 = (i0 + 1).min(self.height - 1);
        let ft = t - i0 as f64;
        let (a, b, c, e) = (self.texel(i0, j0), self.texel(i0, j1), self.texel(i1, j0), self.texel(i1, j1));
        std::array::from_fn(|k| {
            let top = a[k] as f64 * (1.0 - fs) + b[k] as f64 * fs;
            let bottom = c[k] as f64 * (1.0 - fs) + e[k] as f64 * fs;
            top * (1.0 - ft) + bottom * ft
        })
    }

    pub fn is_constant(&self) -> bool {
        self.pixels.chunks(3).all(|p| p == &self.pixels[..3])
    }
}

fn texel_direction(width: usize, height: usize, row: usize, col: usize) -> UnitVector {
    polar_unmap([(col as f64 + 0.5) / width as f64, (row as f64 + 0.5) / height as f64])
}

/// Convenience wrapper for [`EnvMap::lookup`].
pub fn envmap_lookup(map: &EnvMap, d: &UnitVector) -> [f64; 3] {
    map.lookup(d)
}

/// Built-in targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Procedural {
    /// Uniform unit radiance.
    Constant,
    /// Smooth per-channel variation over the sphere.
    Gradient,
    /// Many narrow random lobes, statistically the same everywhere.
    IsotropicNoise,
    /// A sky gradient plus a few small, bright lights.
    PointLights,
}

struct Lobe {
    axis: UnitVector,
    sharpness: f64,
    rgb: [f64; 3],
}

fn lobe_sum(lobes: &[Lobe], d: &UnitVector) -> [f64; 3] {
    let mut out = [0.0; 3];
    for l in lobes {
        let w = (l.sharpness * (dot(d.as_array(), l.axis.as_array()) - 1.0)).exp();
        for k in 0..3 {
            out[k] += w * l.rgb[k];
        }
    }
    out
}

pub const NOISE_LOBES: usize = 96;
pub const NOISE_SHARPNESS: f64 = 200.0;

impl Procedural {
    pub fn generate(self, width: usize, height: usize, seed: u64) -> Result<EnvMap> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Procedural::Constant => EnvMap::from_fn(width, height, |_| [1.0, 1.0, 1.0]),
            Procedural::Gradient => EnvMap::from_fn(width, height, |d| {
                [0.5 + 0.4 * d.z(), 0.5 + 0.3 * d.x(), 0.6 + 0.2 * d.y()]
            }),
            Procedural::IsotropicNoise => {
                let lobes: Vec<Lobe> = (0..NOISE_LOBES)
                    .map(|_| Lobe {
                        axis: uniform_direction(&mut rng),
                        sharpness: NOISE_SHARPNESS,
                        rgb: std::array::from_fn(|_| rng.gen_range(0.5..1.5)),
                    })
                    .collect();
                EnvMap::from_fn(width, height, |d| lobe_sum(&lobes, d).map(|c| 0.2 + c))
            }
            Procedural::PointLights => {
                let lobes: Vec<Lobe> = (0..5)
                    .map(|_| {
                        let a: f64 = rng.gen_range(5.0..30.0);
                        let mut axis = uniform_direction(&mut rng);
                        if axis.z() < 0.0 {
                            axis = axis.neg();
                        }
                        Lobe {
                            axis,
                            sharpness: rng.gen_range(300.0..1500.0),
                            rgb: [a, a * rng.gen_range(0.7..1.0), a * rng.gen_range(0.4..0.9)],
                        }
                    })
                    .collect();
                EnvMap::from_fn(width, height, |d| {
                    let sky = if d.z() > 0.0 {
                        [0.3 + 0.2 * d.z(), 0.4 + 0.3 * d.z(), 0.6 + 0.6 * d.z()]
                    } else {
                        [0.08, 0.07, 0.06]
                    };
                    let l = lobe_sum(&lobes, d);
                    std::array::from_fn(|k| sky[k] + l[k])
                })
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Procedural::Constant => "constant",
            Procedural::Gradient => "gradient",
            Procedural::IsotropicNoise => "isotropic-noise",
            Procedural::PointLights => "point-lights",
        }
    }
}
