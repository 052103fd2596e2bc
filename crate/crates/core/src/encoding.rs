//! Shared machinery for the multilevel encodings: parameter tables, the
//! interpolation taps that every encoder reduces to, and sparse gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Half-width of the uniform initialization range for encoding tables.
pub const INIT_RANGE: f64 = 1e-4;

/// One level's learnable feature rows, `rows x features`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable<T> {
    rows: usize,
    features: usize,
    values: Vec<T>,
}

impl<T: Real> ParamTable<T> {
    pub fn zeros(rows: usize, features: usize) -> Self {
        Self { rows, features, values: vec![T::zero(); rows * features] }
    }

    pub fn filled(rows: usize, features: usize, value: T) -> Self {
        Self { rows, features, values: vec![value; rows * features] }
    }

    pub fn from_values(rows: usize, features: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * features {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{features} table",
                values.len()
            )));
        }
        Ok(Self { rows, features, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.features..(r + 1) * self.features]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.values[r * self.features..(r + 1) * self.features]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Uniform `[-1e-4, 1e-4]` tables with the given row counts, level by level.
pub fn init_tables<T: Real>(rows: &[usize], features: usize, seed: u64) -> Vec<ParamTable<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.iter()
        .map(|&r| {
            let values = (0..r * features)
                .map(|_| T::of(rng.gen_range(-INIT_RANGE..=INIT_RANGE)))
                .collect();
            ParamTable { rows: r, features, values }
        })
        .collect()
}

/// A single weighted table read: `weight * tables[level].row(row)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub level: u32,
    pub row: u32,
    pub weight: f64,
}

/// Per-level sparse gradient accumulation.
///
/// Entries are appended in evaluation order. Rows hit more than once (hash
/// collisions, repeated samples) are summed when reduced, in a fixed order, so
/// results do not depend on how work was split across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer<T> {
    features: usize,
    levels: Vec<LevelGradient<T>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct LevelGradient<T> {
    rows: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> GradientBuffer<T> {
    pub fn new(levels: usize, features: usize) -> Self {
        Self {
            features,
            levels: (0..levels).map(|_| LevelGradient { rows: Vec::new(), values: Vec::new() }).collect(),
        }
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn clear(&mut self) {
        for l in &mut self.levels {
            l.rows.clear();
            l.values.clear();
        }
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(|l| l.rows.is_empty())
    }

    /// Appends `scale * grad` for `row` of `level`.
    #[inline]
    pub fn push_scaled(&mut self, level: usize, row: u32, scale: T, grad: &[T]) {
        let l = &mut self.levels[level];
        l.rows.push(row);
        l.values.extend(grad.iter().map(|&g| scale * g));
    }

    /// Number of raw entries, before merging repeated rows.
    pub fn entry_count(&self) -> usize {
        self.levels.iter().map(|l| l.rows.len()).sum()
    }

    /// Sorted-row reduction: one `(row, summed gradient)` per distinct row.
    pub fn reduced(&self, level: usize) -> Vec<(u32, Vec<T>)> {
        let l = &self.levels[level];
        let f = self.features;
        let mut order: Vec<usize> = (0..l.rows.len()).collect();
        order.sort_by_key(|&i| l.rows[i]);
        let mut out: Vec<(u32, Vec<T>)> = Vec::new();
        for i in order {
            let g = &l.values[i * f..(i + 1) * f];
            match out.last_mut() {
                Some((row, acc)) if *row == l.rows[i] => {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
                _ => out.push((l.rows[i], g.to_vec())),
            }
        }
        out
    }

    /// Distinct rows touched at `level`.
    pub fn touched_rows(&self, level: usize) -> usize {
        let mut rows = self.levels[level].rows.clone();
        rows.sort_unstable();
        rows.dedup();
        rows.len()
    }

    /// Adds every entry into dense per-level gradients, in insertion order.
    pub fn scatter_into(&self, dense: &mut [Vec<T>]) -> Result<()> {
        if dense.len() != self.levels.len() {
            return Err(Error::Shape(format!(
                "{} dense gradient levels for a {}-level buffer",
                dense.len(),
                self.levels.len()
            )));
        }
        let f = self.features;
        for (l, d) in self.levels.iter().zip(dense.iter_mut()) {
            for (i, &row) in l.rows.iter().enumerate() {
                let dst = &mut d[row as usize * f..(row as usize + 1) * f];
                for (a, &v) in dst.iter_mut().zip(&l.values[i * f..(i + 1) * f]) {
                    *a += v;
                }
            }
        }
        Ok(())
    }
}

/// A multilevel interpolating feature encoding.
///
/// Implementors only describe which rows are read and with what weight; the
/// forward pass, its batch form and the backward pass follow from linearity.
pub trait Encoding<T: Real> {
    type Input;

    fn levels(&self) -> usize;

    fn features(&self) -> usize;

    fn tables(&self) -> &[ParamTable<T>];

    fn tables_mut(&mut self) -> &mut [ParamTable<T>];

    /// Appends this input's taps to `out`, level 0 first.
    fn taps(&self, input: &Self::Input, out: &mut Vec<Tap>) -> Result<()>;

    fn output_width(&self) -> usize {
        self.levels() * self.features()
    }

    fn parameter_count(&self) -> usize {
        self.tables().iter().map(|t| t.values().len()).sum()
    }

    /// Metadata bytes the encoder keeps besides its tables (dense lookups).
    fn auxiliary_bytes(&self) -> usize {
        0
    }

    /// Forward pass into `out`, reusing `scratch` for the taps.
    fn encode_into(&self, input: &Self::Input, out: &mut [T], scratch: &mut Vec<Tap>) -> Result<()> {
        if out.len() != self.output_width() {
            return Err(Error::Shape(format!(
                "output buffer of {} for {} features",
                out.len(),
                self.output_width()
            )));
        }
        scratch.clear();
        self.taps(input, scratch)?;
        gather(self.tables(), self.features(), scratch, out);
        Ok(())
    }

    fn encode(&self, input: &Self::Input) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.output_width()];
        self.encode_into(input, &mut out, &mut Vec::new())?;
        Ok(out)
    }

    /// Order-preserving batch form of [`Encoding::encode`].
    fn encode_batch(&self, inputs: &[Self::Input]) -> Result<Vec<Vec<T>>> {
        let mut scratch = Vec::new();
        inputs
            .iter()
            .map(|x| {
                let mut out = vec![T::zero(); self.output_width()];
                self.encode_into(x, &mut out, &mut scratch)?;
                Ok(out)
            })
            .collect()
    }

    /// Scatters `weight * upstream_level` into `grads` for every tap.
    /// No gradient flows to the input.
    fn backward(&self, input: &Self::Input, upstream: &[T], grads: &mut GradientBuffer<T>) -> Result<()> {
        let mut taps = Vec::new();
        self.taps(input, &mut taps)?;
        scatter(&taps, self.features(), self.levels(), upstream, grads)
    }
}

/// `out[l*F..] = sum of weight * row` over the taps of each level.
#[inline]
pub fn gather<T: Real>(tables: &[ParamTable<T>], features: usize, taps: &[Tap], out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for tap in taps {
        let l = tap.level as usize;
        let w = T::of(tap.weight);
        let row = tables[l].row(tap.row as usize);
        for (o, &r) in out[l * features..(l + 1) * features].iter_mut().zip(row) {
            *o += w * r;
        }
    }
}

/// Backward of [`gather`].
pub fn scatter<T: Real>(
    taps: &[Tap],
    features: usize,
    levels: usize,
    upstream: &[T],
    grads: &mut GradientBuffer<T>,
) -> Result<()> {
    if upstream.len() != levels * features {
        return Err(Error::Shape(format!(
            "upstream gradient of {} for {} features",
            upstream.len(),
            levels * features
        )));
    }
    if grads.levels() != levels || grads.features() != features {
        return Err(Error::Shape("gradient buffer does not match encoder".into()));
    }
    for tap in taps {
        let l = tap.level as usize;
        let up = &upstream[l * features..(l + 1) * features];
        if up.iter().all(|v| v.is_zero()) {
            continue;
        }
        grads.push_scaled(l, tap.row, T::of(tap.weight), up);
    }
    Ok(())
}

pub(crate) fn check_tables<T: Real>(tables: &[ParamTable<T>], rows: &[usize], features: usize) -> Result<()> {
    if tables.len() != rows.len() {
        return Err(Error::Config(format!(
            "{} tables supplied for {} levels",
            tables.len(),
            rows.len()
        )));
    }
    for (l, (t, &r)) in tables.iter().zip(rows).enumerate() {
        if t.rows() != r || t.features() != features {
            return Err(Error::Config(format!(
                "level {l} table is {}x{}, expected {r}x{features}",
                t.rows(),
                t.features()
            )));
        }
    }
    Ok(())
}
