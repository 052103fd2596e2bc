//! Multiresolution hash grids over a parameterization of the sphere, used as
//! comparison encodings: 2D over polar (longitude, colatitude) coordinates and
//! 3D over the Cartesian components of the direction.
//!
//! The polar grid is a plain unit square: the longitude seam and the poles are
//! not stitched, so the baseline keeps the distortions it is compared on.

use serde::{Deserialize, Serialize};

use crate::encoding::{check_tables, init_tables, Encoding, ParamTable, Tap};
use crate::error::{Error, Result};
use crate::geodesic::UnitVector;
use crate::hashing::SPATIAL_PRIMES;
use crate::scalar::Real;

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEncodingConfig {
    /// 2 or 3.
    pub dims: usize,
    pub base_resolution: u32,
    pub scale: f64,
    pub levels: u32,
    pub features: usize,
    /// Row cap per level. Any positive value; hashed rows use `mod T`.
    pub table_cap: u32,
    pub primes: [u32; 3],
}

impl GridEncodingConfig {
    /// Base resolution 8, scale 2, two features per level.
    pub fn new(dims: usize, levels: u32, table_cap: u32) -> Self {
        Self {
            dims,
            base_resolution: 8,
            scale: 2.0,
            levels,
            features: 2,
            table_cap,
            primes: SPATIAL_PRIMES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims != 2 && self.dims != 3 {
            return Err(Error::Config(format!("grid dimensionality {} not in {{2, 3}}", self.dims)));
        }
        if self.levels == 0 || self.levels > 16 {
            return Err(Error::Config(format!("levels {} not in 1..=16", self.levels)));
        }
        if ![1, 2, 4, 8].contains(&self.features) {
            return Err(Error::Config(format!("unsupported features per level {}", self.features)));
        }
        if self.table_cap == 0 {
            return Err(Error::Config("table cap must be positive".into()));
        }
        if self.base_resolution == 0 || !(self.scale >= 1.0) || !self.scale.is_finite() {
            return Err(Error::Config("need base resolution >= 1 and scale >= 1".into()));
        }
        let top = self.base_resolution as f64 * self.scale.powi(self.levels as i32 - 1);
        if top >= (1u64 << 24) as f64 {
            return Err(Error::Config(format!("finest resolution {top} is too large")));
        }
        Ok(())
    }

    pub fn resolution(&self, level: u32) -> u32 {
        (self.base_resolution as f64 * self.scale.powi(level as i32)).floor() as u32
    }

    /// `(N_l + 1)^k`.
    pub fn grid_size(&self, level: u32) -> u64 {
        (self.resolution(level) as u64 + 1).saturating_pow(self.dims as u32)
    }

    pub fn is_dense_level(&self, level: u32) -> bool {
        self.grid_size(level) <= self.table_cap as u64
    }

    pub fn rows_per_level(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|l| self.grid_size(l).min(self.table_cap as u64) as usize)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.rows_per_level().iter().sum::<usize>() * self.features
    }
}

/// Table cap whose total row count is closest to `target_rows`, everything
/// else in `cfg` fixed. Used to line a grid baseline up with another
/// encoder's memory budget.
pub fn table_cap_for_rows(cfg: &GridEncodingConfig, target_rows: usize) -> u32 {
    let rows = |t: u32| GridEncodingConfig { table_cap: t, ..*cfg }.rows_per_level().iter().sum::<usize>();
    let (mut lo, mut hi) = (1u32, u32::MAX / 2);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if rows(mid) >= target_rows {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo > 1 && target_rows.abs_diff(rows(lo - 1)) < target_rows.abs_diff(rows(lo)) {
        lo - 1
    } else {
        lo
    }
}

/// Multiresolution grid over `[0,1]^k` with hybrid dense/hashed tables.
/// Inputs are 3-vectors; only the first `k` components are read.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid<T> {
    config: GridEncodingConfig,
    tables: Vec<ParamTable<T>>,
}

impl<T: Real> HashGrid<T> {
    pub fn new(config: GridEncodingConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let tables = init_tables(&config.rows_per_level(), config.features, seed);
        Self::with_tables(config, tables)
    }

    pub fn with_tables(config: GridEncodingConfig, tables: Vec<ParamTable<T>>) -> Result<Self> {
        config.validate()?;
        check_tables(&tables, &config.rows_per_level(), config.features)?;
        Ok(Self { config, tables })
    }

    pub fn config(&self) -> &GridEncodingConfig {
        &self.config
    }

    #[inline]
    fn row_index(&self, level: u32, corner: &[u32; 3]) -> u32 {
        let k = self.config.dims;
        if self.config.is_dense_level(level) {
            let side = self.config.resolution(level) as u64 + 1;
            let mut idx = 0u64;
            for i in (0..k).rev() {
                idx = idx * side + corner[i] as u64;
            }
            idx as u32
        } else {
            let mut h = 0u32;
            for i in 0..k {
                h ^= corner[i].wrapping_mul(self.config.primes[i]);
            }
            h % self.config.table_cap
        }
    }
}

impl<T: Real> Encoding<T> for HashGrid<T> {
    type Input = [f64; 3];

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

    fn taps(&self, p: &[f64; 3], out: &mut Vec<Tap>) -> Result<()> {
        let k = self.config.dims;
        if p[..k].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid input {p:?}")));
        }
        for level in 0..self.config.levels {
            let n = self.config.resolution(level);
            let mut cell = [0u32; 3];
            let mut frac = [0.0; 3];
            for i in 0..k {
                let s = p[i].clamp(0.0, 1.0) * n as f64;
                let c = (s.floor() as u32).min(n - 1);
                cell[i] = c;
                frac[i] = (s - c as f64).clamp(0.0, 1.0);
            }
            for mask in 0..(1usize << k) {
                let mut corner = [0u32; 3];
                let mut w = 1.0;
                for i in 0..k {
                    let bit = (mask >> i) & 1;
                    corner[i] = cell[i] + bit as u32;
                    w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
                }
                out.push(Tap { level, row: self.row_index(level, &corner), weight: w });
            }
        }
        Ok(())
    }
}

/// Longitude and colatitude scaled to `[0,1]^2`; `+z` maps to `v = 0`.
pub fn polar_map(d: &UnitVector) -> [f64; 2] {
    let u = (d.y().atan2(d.x()) + PI) / (2.0 * PI);
    let v = d.z().clamp(-1.0, 1.0).acos() / PI;
    [u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)]
}

/// Inverse of [`polar_map`].
pub fn polar_unmap(uv: [f64; 2]) -> UnitVector {
    let phi = uv[0] * 2.0 * PI - PI;
    let theta = uv[1] * PI;
    UnitVector::new_unchecked([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()])
}

/// `(d + 1) / 2` componentwise.
pub fn cartesian_map(d: &UnitVector) -> [f64; 3] {
    let a = d.as_array();
    [(a[0] + 1.0) * 0.5, (a[1] + 1.0) * 0.5, (a[2] + 1.0) * 0.5]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionMap {
    Polar,
    Cartesian,
}

impl DirectionMap {
    pub fn dims(&self) -> usize {
        match self {
            DirectionMap::Polar => 2,
            DirectionMap::Cartesian => 3,
        }
    }

    pub fn apply(&self, d: &UnitVector) -> [f64; 3] {
        match self {
            DirectionMap::Polar => {
                let [u, v] = polar_map(d);
                [u, v, 0.0]
            }
            DirectionMap::Cartesian => cartesian_map(d),
        }
    }
}

/// A [`HashGrid`] fed with mapped directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalGrid<T> {
    grid: HashGrid<T>,
    map: DirectionMap,
}

impl<T: Real> DirectionalGrid<T> {
    pub fn new(map: DirectionMap, mut config: GridEncodingConfig, seed: u64) -> Result<Self> {
        config.dims = map.dims();
        Ok(Self { grid: HashGrid::new(config, seed)?, map })
    }

    pub fn from_grid(map: DirectionMap, grid: HashGrid<T>) -> Result<Self> {
        if grid.config().dims != map.dims() {
            return Err(Error::Config(format!(
                "{map:?} mapping needs a {}-D grid, got {}-D",
                map.dims(),
                grid.config().dims
            )));
        }
        Ok(Self { grid, map })
    }

    pub fn map(&self) -> DirectionMap {
        self.map
    }

    pub fn grid(&self) -> &HashGrid<T> {
        &self.grid
    }

    pub fn config(&self) -> &GridEncodingConfig {
        self.grid.config()
    }
}

impl<T: Real> Encoding<T> for DirectionalGrid<T> {
    type Input = UnitVector;

    fn levels(&self) -> usize {
        self.grid.levels()
    }

    fn features(&self) -> usize {
        self.grid.features()
    }

    fn tables(&self) -> &[ParamTable<T>] {
        self.grid.tables()
    }

    fn tables_mut(&mut self) -> &mut [ParamTable<T>] {
        self.grid.tables_mut()
    }

    fn taps(&self, d: &UnitVector, out: &mut Vec<Tap>) -> Result<()> {
        self.grid.taps(&self.map.apply(d), out)
    }
}
