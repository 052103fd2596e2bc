//! Vertex discretization, the spherical and joint spatial hashes, and the
//! hybrid dense/hashed row index functions.
//!
//! All products and XORs run in wrapping `u32` arithmetic, so hash values are
//! identical on every platform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{vertex_count, Vec3};

/// Default discretization scale: coordinates map onto 21-bit integers.
pub const DEFAULT_GAMMA: u32 = 1 << 20;

/// Smallest accepted discretization scale.
pub const MIN_GAMMA: u32 = 1 << 16;

/// The usual spatial hash constants; the leading 1 keeps the first axis coherent.
pub const SPATIAL_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

pub const DIRECTION_PRIMES: [u32; 3] = [3_674_653_429, 2_097_192_037, 1_434_869_437];

/// Constants shared by the hash-sphere and hash-grid-sphere indexers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashConfig {
    pub gamma: u32,
    pub primes_sphere: [u32; 3],
    pub primes_joint_spatial: [u32; 3],
    pub primes_joint_dir: [u32; 3],
    /// Per-level row cap `T`; must be a power of two.
    pub table_cap: u32,
}

impl Default for HashConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            primes_sphere: SPATIAL_PRIMES,
            primes_joint_spatial: SPATIAL_PRIMES,
            primes_joint_dir: DIRECTION_PRIMES,
            table_cap: 1 << 14,
        }
    }
}

impl HashConfig {
    pub fn with_table_cap(table_cap: u32) -> Self {
        Self { table_cap, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma < MIN_GAMMA || self.gamma > (1 << 31) {
            return Err(Error::Config(format!(
                "gamma {} outside [2^16, 2^31]",
                self.gamma
            )));
        }
        if !self.table_cap.is_power_of_two() {
            return Err(Error::Config(format!(
                "table cap {} is not a power of two",
                self.table_cap
            )));
        }
        let s = self.primes_sphere;
        if s[0] == s[1] || s[1] == s[2] || s[0] == s[2] {
            return Err(Error::Config("sphere primes must be distinct".into()));
        }
        let joint: Vec<u32> = self
            .primes_joint_spatial
            .iter()
            .chain(self.primes_joint_dir.iter())
            .copied()
            .collect();
        for i in 0..joint.len() {
            for j in i + 1..joint.len() {
                if joint[i] == joint[j] {
                    return Err(Error::Config("joint primes must be pairwise distinct".into()));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn reduce(&self, h: u32) -> u32 {
        h & (self.table_cap - 1)
    }
}

/// `floor((1 + v) * gamma)` with `v` clamped to `[-1, 1]`.
#[inline]
pub fn discretize(v: f64, gamma: u32) -> u32 {
    let v = v.clamp(-1.0, 1.0);
    ((1.0 + v) * gamma as f64).floor() as u32
}

#[inline]
fn direction_term(v: &Vec3, primes: &[u32; 3], gamma: u32) -> u32 {
    discretize(v[0], gamma).wrapping_mul(primes[0])
        ^ discretize(v[1], gamma).wrapping_mul(primes[1])
        ^ discretize(v[2], gamma).wrapping_mul(primes[2])
}

/// XOR of the discretized coordinates times the sphere primes.
#[inline]
pub fn hash_sphere(v: &Vec3, cfg: &HashConfig) -> u32 {
    direction_term(v, &cfg.primes_sphere, cfg.gamma)
}

/// Directional half of [`hash_joint`], reusable across the eight corners.
#[inline]
pub fn hash_joint_direction(v: &Vec3, cfg: &HashConfig) -> u32 {
    direction_term(v, &cfg.primes_joint_dir, cfg.gamma)
}

/// Spatial half of [`hash_joint`].
#[inline]
pub fn hash_joint_corner(c: [u32; 3], cfg: &HashConfig) -> u32 {
    let p = &cfg.primes_joint_spatial;
    c[0].wrapping_mul(p[0]) ^ c[1].wrapping_mul(p[1]) ^ c[2].wrapping_mul(p[2])
}

/// Hash of a (voxel corner, directional vertex) pair.
#[inline]
pub fn hash_joint(c: [u32; 3], v: &Vec3, cfg: &HashConfig) -> u32 {
    hash_joint_corner(c, cfg) ^ hash_joint_direction(v, cfg)
}

/// True when a grid of `grid_size` entries is stored densely under cap `t`.
#[inline]
pub fn is_dense(grid_size: u64, table_cap: u32) -> bool {
    grid_size <= table_cap as u64
}

/// Row index of a directional vertex at `level`.
///
/// Dense levels (`|V_l| <= T`) use the vertex's unique index; hashed levels
/// use `hash_sphere(v) mod T`.
pub fn phi_sphere(
    level: u32,
    vertex_dense_index: Option<u32>,
    v: &Vec3,
    cfg: &HashConfig,
) -> Result<u32> {
    let n = vertex_count(level);
    if is_dense(n, cfg.table_cap) {
        match vertex_dense_index {
            Some(i) if (i as u64) < n => Ok(i),
            Some(i) => Err(Error::Index(format!(
                "dense vertex index {i} out of range for level {level} ({n} vertices)"
            ))),
            None => Err(Error::Index(format!("level {level} is dense but no vertex index given"))),
        }
    } else {
        Ok(cfg.reduce(hash_sphere(v, cfg)))
    }
}

/// Row-major `(z, y, x)` linear index on a `side^3` corner lattice.
#[inline]
pub fn corner_linear_index(c: [u32; 3], side: u64) -> u64 {
    (c[2] as u64 * side + c[1] as u64) * side + c[0] as u64
}

/// Row index of a (corner, vertex) pair at a joint level.
///
/// `resolution` is `N_l`, so the corner lattice has `(N_l + 1)^3` points and
/// `grid_size = (N_l + 1)^3 * |V_m(l)|`. Dense levels use the mixed-radix index
/// `corner * |V| + vertex`.
pub fn phi_joint(
    dir_level: u32,
    corner: [u32; 3],
    vertex_dense_index: Option<u32>,
    v: &Vec3,
    resolution: u32,
    cfg: &HashConfig,
) -> Result<u32> {
    let side = resolution as u64 + 1;
    let nv = vertex_count(dir_level);
    let grid_size = side.saturating_pow(3).saturating_mul(nv);
    if corner.iter().any(|&c| c as u64 >= side) {
        return Err(Error::Index(format!("corner {corner:?} outside lattice of side {side}")));
    }
    if is_dense(grid_size, cfg.table_cap) {
        match vertex_dense_index {
            Some(i) if (i as u64) < nv => Ok((corner_linear_index(corner, side) * nv + i as u64) as u32),
            Some(i) => Err(Error::Index(format!(
                "dense vertex index {i} out of range for directional level {dir_level}"
            ))),
            None => Err(Error::Index("dense joint level needs a vertex index".into())),
        }
    } else {
        Ok(cfg.reduce(hash_joint(corner, v, cfg)))
    }
}
