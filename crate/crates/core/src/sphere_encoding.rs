//! The hash-sphere directional encoding.
//!
//! Each level reads the three vertices of the geodesic triangle enclosing the
//! direction and blends their feature rows with the triangle's barycentric
//! weights. Levels whose vertex count fits in the table cap are indexed
//! densely through precomputed face tables; finer levels hash the vertex
//! positions produced on the fly by the traversal, so they need no stored
//! geometry.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::encoding::{check_tables, init_tables, Encoding, ParamTable, Tap};
use crate::error::{Error, Result};
use crate::geodesic::{
    build_dense_tables, icosahedron_intersection, refine_triangle, vertex_count, DenseVertexTables,
    UnitVector, MAX_DENSE_LEVEL,
};
use crate::hashing::{is_dense, phi_sphere, HashConfig};
use crate::scalar::Real;

pub const MAX_SPHERE_LEVELS: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashSphereConfig {
    pub levels: u32,
    pub features: usize,
    /// Carries the table cap `T` along with the hash constants.
    pub hash: HashConfig,
}

impl Default for HashSphereConfig {
    fn default() -> Self {
        Self { levels: 8, features: 2, hash: HashConfig::default() }
    }
}

impl HashSphereConfig {
    pub fn new(levels: u32, features: usize, table_cap: u32) -> Self {
        Self { levels, features, hash: HashConfig::with_table_cap(table_cap) }
    }

    pub fn table_cap(&self) -> u32 {
        self.hash.table_cap
    }

    pub fn validate(&self) -> Result<()> {
        self.hash.validate()?;
        if self.levels == 0 || self.levels > MAX_SPHERE_LEVELS {
            return Err(Error::Config(format!(
                "levels must be in 1..={MAX_SPHERE_LEVELS}, got {}",
                self.levels
            )));
        }
        if ![1, 2, 4, 8].contains(&self.features) {
            return Err(Error::Config(format!(
                "features per level must be 1, 2, 4 or 8, got {}",
                self.features
            )));
        }
        if let Some(l) = self.last_dense_level() {
            if l > MAX_DENSE_LEVEL {
                return Err(Error::Config(format!(
                    "table cap {} makes level {l} dense, beyond the supported {MAX_DENSE_LEVEL}",
                    self.table_cap()
                )));
            }
        }
        Ok(())
    }

    pub fn is_dense_level(&self, level: u32) -> bool {
        is_dense(vertex_count(level), self.table_cap())
    }

    /// Deepest level indexed densely, if any.
    pub fn last_dense_level(&self) -> Option<u32> {
        (0..self.levels).filter(|&l| self.is_dense_level(l)).last()
    }

    /// `min(T, |V_l|)` for every level.
    pub fn rows_per_level(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|l| vertex_count(l).min(self.table_cap() as u64) as usize)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.rows_per_level().iter().sum::<usize>() * self.features
    }
}

/// Seeded tables of the right shape for `cfg`.
pub fn init_params<T: Real>(cfg: &HashSphereConfig, seed: u64) -> Vec<ParamTable<T>> {
    init_tables(&cfg.rows_per_level(), cfg.features, seed)
}

/// A hash-sphere encoder: configuration, tables and dense face lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct HashSphere<T> {
    config: HashSphereConfig,
    tables: Vec<ParamTable<T>>,
    dense: Option<Arc<DenseVertexTables>>,
}

impl<T: Real> HashSphere<T> {
    pub fn new(config: HashSphereConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let tables = init_params(&config, seed);
        Self::with_tables(config, tables)
    }

    pub fn with_tables(config: HashSphereConfig, tables: Vec<ParamTable<T>>) -> Result<Self> {
        config.validate()?;
        check_tables(&tables, &config.rows_per_level(), config.features)?;
        let dense = match config.last_dense_level() {
            Some(l) => Some(Arc::new(build_dense_tables(l)?)),
            None => None,
        };
        Ok(Self { config, tables, dense })
    }

    pub fn config(&self) -> &HashSphereConfig {
        &self.config
    }

    pub fn dense_tables(&self) -> Option<&DenseVertexTables> {
        self.dense.as_deref()
    }
}

impl<T: Real> Encoding<T> for HashSphere<T> {
    type Input = UnitVector;

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

    fn taps(&self, d: &UnitVector, out: &mut Vec<Tap>) -> Result<()> {
        let cfg = &self.config;
        let (_, mut tri, mut bary) = icosahedron_intersection(d)?;
        for level in 0..cfg.levels {
            if level > 0 {
                let (_, child, b) = refine_triangle(&tri, d)?;
                tri = child;
                bary = b;
            }
            let dense_idx = if cfg.is_dense_level(level) {
                let dense = self
                    .dense
                    .as_ref()
                    .ok_or_else(|| Error::Index("dense tables missing".into()))?;
                Some(dense.face_vertices(level, tri.face_id())?)
            } else {
                None
            };
            for k in 0..3 {
                let row = phi_sphere(level, dense_idx.map(|i| i[k]), &tri.vertices[k], &cfg.hash)?;
                out.push(Tap { level, row, weight: bary.0[k] });
            }
        }
        Ok(())
    }
}
