//! The hash-grid-sphere joint spatio-directional encoding.
//!
//! Level `l` pairs a spatial voxel grid of resolution `N_l` with the geodesic
//! grid at directional depth `m(l) = min(floor(l / 2), L_d)`. The 8 voxel
//! corners and 3 triangle vertices form 24 (corner, vertex) pairs, each read
//! from the level's table and blended with weight `w_c * beta_v`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::encoding::{check_tables, init_tables, Encoding, ParamTable, Tap};
use crate::error::{Error, Result};
use crate::geodesic::{
    build_dense_tables, icosahedron_intersection, refine_triangle, vertex_count, DenseVertexTables,
    UnitVector, MAX_DENSE_LEVEL,
};
use crate::hashing::{hash_joint_corner, hash_joint_direction, is_dense, phi_joint, HashConfig};
use crate::scalar::Real;

pub const MAX_JOINT_LEVELS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub levels: u32,
    /// Spatial resolution `N_0` of level 0.
    pub base_resolution: u32,
    /// Per-level growth `b`, with `N_l = floor(N_0 * b^l)`.
    pub scale: f64,
    /// Cap `L_d` on the directional depth.
    pub dir_level_cap: u32,
    pub features: usize,
    pub hash: HashConfig,
    /// Axis-aligned box mapped affinely onto the unit cube.
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            base_resolution: 16,
            scale: 2.0,
            dir_level_cap: 4,
            features: 2,
            hash: HashConfig::with_table_cap(1 << 16),
            bounds_min: [0.0; 3],
            bounds_max: [1.0; 3],
        }
    }
}

impl JointConfig {
    pub fn table_cap(&self) -> u32 {
        self.hash.table_cap
    }

    /// `N_l`.
    pub fn resolution(&self, level: u32) -> u32 {
        (self.base_resolution as f64 * self.scale.powi(level as i32)).floor() as u32
    }

    /// `|C_l| = (N_l + 1)^3`, the corner lattice size.
    pub fn corner_count(&self, level: u32) -> u64 {
        (self.resolution(level) as u64 + 1).saturating_pow(3)
    }

    pub fn grid_size(&self, level: u32) -> u64 {
        self.corner_count(level)
            .saturating_mul(vertex_count(directional_level(level, self)))
    }

    pub fn is_dense_level(&self, level: u32) -> bool {
        is_dense(self.grid_size(level), self.table_cap())
    }

    pub fn rows_per_level(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|l| self.grid_size(l).min(self.table_cap() as u64) as usize)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.rows_per_level().iter().sum::<usize>() * self.features
    }

    /// Deepest directional level that some dense joint level indexes.
    fn max_dense_dir_level(&self) -> Option<u32> {
        (0..self.levels)
            .filter(|&l| self.is_dense_level(l))
            .map(|l| directional_level(l, self))
            .max()
    }

    pub fn validate(&self) -> Result<()> {
        self.hash.validate()?;
        if self.levels == 0 || self.levels > MAX_JOINT_LEVELS {
            return Err(Error::Config(format!(
                "levels must be in 1..={MAX_JOINT_LEVELS}, got {}",
                self.levels
            )));
        }
        if ![1, 2, 4, 8].contains(&self.features) {
            return Err(Error::Config(format!("unsupported features per level {}", self.features)));
        }
        if self.base_resolution == 0 || !(self.scale > 1.0) || !self.scale.is_finite() {
            return Err(Error::Config("need base resolution >= 1 and scale > 1".into()));
        }
        if self.dir_level_cap > 12 {
            return Err(Error::Config("directional level cap above 12".into()));
        }
        let top = self.base_resolution as f64 * self.scale.powi(self.levels as i32 - 1);
        if top >= (1u64 << 24) as f64 {
            return Err(Error::Config(format!("finest resolution {top} is too large")));
        }
        for l in 1..self.levels {
            if self.resolution(l) <= self.resolution(l - 1) {
                return Err(Error::Config(format!(
                    "spatial resolution does not grow between levels {} and {l}",
                    l - 1
                )));
            }
        }
        for i in 0..3 {
            if !(self.bounds_max[i] > self.bounds_min[i]) {
                return Err(Error::Config("empty spatial bounds".into()));
            }
        }
        if let Some(l) = self.max_dense_dir_level() {
            if l > MAX_DENSE_LEVEL {
                return Err(Error::Config(format!("dense directional level {l} too deep")));
            }
        }
        Ok(())
    }

    /// Affine map into the unit cube, clamped at the boundary.
    pub fn normalize_position(&self, p: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| {
            ((p[i] - self.bounds_min[i]) / (self.bounds_max[i] - self.bounds_min[i])).clamp(0.0, 1.0)
        })
    }
}

/// Directional depth used at spatial level `l`: `min(floor(l / 2), L_d)`.
pub fn directional_level(l: u32, cfg: &JointConfig) -> u32 {
    (l / 2).min(cfg.dir_level_cap)
}

/// The eight corners of the voxel containing a point, with trilinear weights.
///
/// Corner `k` is offset by bit 0 of `k` along x, bit 1 along y, bit 2 along z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelCorners {
    pub corners: [[u32; 3]; 8],
    pub weights: [f64; 8],
}

/// Voxel lookup on an `n^3` grid over `[0,1]^3` (corner lattice `(n+1)^3`).
/// Coordinates outside the cube are clamped.
pub fn trilinear_corners(x: &[f64; 3], n: u32) -> VoxelCorners {
    let mut cell = [0u32; 3];
    let mut frac = [0.0; 3];
    for i in 0..3 {
        let s = x[i].clamp(0.0, 1.0) * n as f64;
        let c = (s.floor() as u32).min(n.saturating_sub(1));
        cell[i] = c;
        frac[i] = (s - c as f64).clamp(0.0, 1.0);
    }
    let mut corners = [[0u32; 3]; 8];
    let mut weights = [0.0; 8];
    for k in 0..8 {
        let mut w = 1.0;
        for i in 0..3 {
            let bit = (k >> i) & 1;
            corners[k][i] = cell[i] + bit as u32;
            w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
        }
        weights[k] = w;
    }
    VoxelCorners { corners, weights }
}

/// A position-direction query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatioDirectional {
    pub position: [f64; 3],
    pub direction: UnitVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashGridSphere<T> {
    config: JointConfig,
    tables: Vec<ParamTable<T>>,
    dense: Option<Arc<DenseVertexTables>>,
}

pub fn init_params<T: Real>(cfg: &JointConfig, seed: u64) -> Vec<ParamTable<T>> {
    init_tables(&cfg.rows_per_level(), cfg.features, seed)
}

impl<T: Real> HashGridSphere<T> {
    pub fn new(config: JointConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let tables = init_params(&config, seed);
        Self::with_tables(config, tables)
    }

    pub fn with_tables(config: JointConfig, tables: Vec<ParamTable<T>>) -> Result<Self> {
        config.validate()?;
        check_tables(&tables, &config.rows_per_level(), config.features)?;
        let dense = match config.max_dense_dir_level() {
            Some(l) => Some(Arc::new(build_dense_tables(l)?)),
            None => None,
        };
        Ok(Self { config, tables, dense })
    }

    pub fn config(&self) -> &JointConfig {
        &self.config
    }
}

impl<T: Real> Encoding<T> for HashGridSphere<T> {
    type Input = SpatioDirectional;

    fn levels(&self) -> usize {
        self.config.levels as usize
    }

    fn features(&self) -> usize {
        self.config.features
    }

    fn tables(&self) -> &[ParamTable<T>] {
        &self.tables
    }

    fn tables_mut(&mut self) -> &mut [ParamTable<T>] {
        &mut self.tables
    }

    fn auxiliary_bytes(&self) -> usize {
        self.dense.as_ref().map_or(0, |d| d.table_bytes())
    }

    fn taps(&self, input: &SpatioDirectional, out: &mut Vec<Tap>) -> Result<()> {
        let cfg = &self.config;
        let d = &input.direction;
        let x = cfg.normalize_position(&input.position);
        let mask = cfg.table_cap() - 1;

        let (_, mut tri, mut bary) = icosahedron_intersection(d)?;
        for level in 0..cfg.levels {
            let dl = directional_level(level, cfg);
            while tri.level < dl {
                let (_, child, b) = refine_triangle(&tri, d)?;
                tri = child;
                bary = b;
            }
            let n = cfg.resolution(level);
            let vox = trilinear_corners(&x, n);
            if cfg.is_dense_level(level) {
                let dense = self
                    .dense
                    .as_ref()
                    .ok_or_else(|| Error::Index("dense tables missing".into()))?;
                let idx = dense.face_vertices(dl, tri.face_id())?;
                for (c, w) in vox.corners.iter().zip(vox.weights) {
                    for k in 0..3 {
                        let row = phi_joint(dl, *c, Some(idx[k]), &tri.vertices[k], n, &cfg.hash)?;
                        out.push(Tap { level, row, weight: w * bary.0[k] });
                    }
                }
            } else {
                // same value as phi_joint's hashed branch, with the directional
                // halves shared across corners
                let dir_hash: [u32; 3] =
                    std::array::from_fn(|k| hash_joint_direction(&tri.vertices[k], &cfg.hash));
                for (c, w) in vox.corners.iter().zip(vox.weights) {
                    let ch = hash_joint_corner(*c, &cfg.hash);
                    for k in 0..3 {
                        out.push(Tap { level, row: (ch ^ dir_hash[k]) & mask, weight: w * bary.0[k] });
                    }
                }
            }
        }
        Ok(())
    }
}
