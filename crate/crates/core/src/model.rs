//! An encoder followed by an MLP head, with a joint forward/backward pass.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline_grids::{DirectionMap, DirectionalGrid};
use crate::encoding::{gather, scatter, Encoding, GradientBuffer, ParamTable, Tap};
use crate::error::{Error, Result};
use crate::joint_encoding::{HashGridSphere, SpatioDirectional};
use crate::nn::{ForwardCache, Mlp, MlpConfig};
use crate::scalar::Real;
use crate::sphere_encoding::HashSphere;

/// Which encoder a model uses. The discriminants are the on-disk and CSV codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    HashSphere = 0,
    GridPolar = 1,
    GridCartesian = 2,
    Joint = 3,
}

impl EncoderKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Self::HashSphere, Self::GridPolar, Self::GridCartesian, Self::Joint].get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::HashSphere => "hashsphere",
            Self::GridPolar => "grid2d-polar",
            Self::GridCartesian => "grid3d-cartesian",
            Self::Joint => "hashgridsphere",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelEncoder<T> {
    Sphere(HashSphere<T>),
    Grid(DirectionalGrid<T>),
    Joint(HashGridSphere<T>),
}

macro_rules! dispatch {
    ($self:expr, $e:ident => $body:expr) => {
        match $self {
            ModelEncoder::Sphere($e) => $body,
            ModelEncoder::Grid($e) => $body,
            ModelEncoder::Joint($e) => $body,
        }
    };
}

impl<T: Real> ModelEncoder<T> {
    pub fn kind(&self) -> EncoderKind {
        match self {
            ModelEncoder::Sphere(_) => EncoderKind::HashSphere,
            ModelEncoder::Grid(g) => match g.map() {
                DirectionMap::Polar => EncoderKind::GridPolar,
                DirectionMap::Cartesian => EncoderKind::GridCartesian,
            },
            ModelEncoder::Joint(_) => EncoderKind::Joint,
        }
    }

    pub fn levels(&self) -> usize {
        dispatch!(self, e => e.levels())
    }

    pub fn features(&self) -> usize {
        dispatch!(self, e => e.features())
    }

    pub fn output_width(&self) -> usize {
        self.levels() * self.features()
    }

    pub fn tables(&self) -> &[ParamTable<T>] {
        dispatch!(self, e => e.tables())
    }

    pub fn tables_mut(&mut self) -> &mut [ParamTable<T>] {
        dispatch!(self, e => e.tables_mut())
    }

    pub fn parameter_count(&self) -> usize {
        dispatch!(self, e => e.parameter_count())
    }

    pub fn auxiliary_bytes(&self) -> usize {
        dispatch!(self, e => e.auxiliary_bytes())
    }

    /// Directional encoders read only `q.direction`.
    pub fn taps(&self, q: &SpatioDirectional, out: &mut Vec<Tap>) -> Result<()> {
        match self {
            ModelEncoder::Sphere(e) => e.taps(&q.direction, out),
            ModelEncoder::Grid(e) => e.taps(&q.direction, out),
            ModelEncoder::Joint(e) => e.taps(q, out),
        }
    }
}

/// Training provenance stored with a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelMeta {
    pub seed: u64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub encoder: ModelEncoder<T>,
    pub mlp: Mlp<T>,
    pub meta: ModelMeta,
}

/// Per-query scratch for [`Model::forward`] and [`Model::backward`].
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    taps: Vec<Tap>,
    features: Vec<T>,
    cache: ForwardCache<T>,
    feature_grad: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn cache(&self) -> &ForwardCache<T> {
        &self.cache
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }
}

/// Gradients of every trainable parameter of a [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients<T> {
    pub tables: GradientBuffer<T>,
    pub mlp: Vec<T>,
}

impl<T: Real> ModelGradients<T> {
    pub fn clear(&mut self) {
        self.tables.clear();
        self.mlp.iter_mut().for_each(|g| *g = T::zero());
    }
}

impl<T: Real> Model<T> {
    pub fn new(encoder: ModelEncoder<T>, mlp: Mlp<T>, meta: ModelMeta) -> Result<Self> {
        if mlp.config().input_width != encoder.output_width() {
            return Err(Error::Config(format!(
                "MLP input width {} does not match encoder output {}",
                mlp.config().input_width,
                encoder.output_width()
            )));
        }
        Ok(Self { encoder, mlp, meta })
    }

    /// Builds the MLP from `mlp_config` with its input width taken from the
    /// encoder.
    pub fn with_head(encoder: ModelEncoder<T>, mut mlp_config: MlpConfig, seed: u64) -> Result<Self> {
        mlp_config.input_width = encoder.output_width();
        let mlp = Mlp::new(mlp_config, seed.wrapping_add(1))?;
        Self::new(encoder, mlp, ModelMeta { seed, steps: 0 })
    }

    pub fn kind(&self) -> EncoderKind {
        self.encoder.kind()
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace {
            taps: Vec::new(),
            features: vec![T::zero(); self.encoder.output_width()],
            cache: self.mlp.new_cache(),
            feature_grad: vec![T::zero(); self.encoder.output_width()],
        }
    }

    pub fn gradients(&self) -> ModelGradients<T> {
        ModelGradients {
            tables: GradientBuffer::new(self.encoder.levels(), self.encoder.features()),
            mlp: vec![T::zero(); self.mlp.parameter_count()],
        }
    }

    pub fn forward<'w>(&self, q: &SpatioDirectional, ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        ws.taps.clear();
        self.encoder.taps(q, &mut ws.taps)?;
        ws.features.resize(self.encoder.output_width(), T::zero());
        gather(self.encoder.tables(), self.encoder.features(), &ws.taps, &mut ws.features);
        self.mlp.forward(&ws.features, &mut ws.cache)
    }

    /// Accumulates the gradient of `upstream . output` for the query last
    /// passed to [`Model::forward`] with `ws`.
    pub fn backward(&self, ws: &mut Workspace<T>, upstream: &[T], grads: &mut ModelGradients<T>) -> Result<()> {
        ws.feature_grad.resize(self.encoder.output_width(), T::zero());
        self.mlp.backward(&ws.cache, upstream, &mut grads.mlp, &mut ws.feature_grad)?;
        scatter(
            &ws.taps,
            self.encoder.features(),
            self.encoder.levels(),
            &ws.feature_grad,
            &mut grads.tables,
        )
    }

    pub fn predict(&self, q: &SpatioDirectional) -> Result<Vec<T>> {
        let mut ws = self.workspace();
        Ok(self.forward(q, &mut ws)?.to_vec())
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.mlp.parameter_count()
    }

    /// Parameter buffers in optimizer order: one per table level, then the MLP.
    pub fn parameter_groups_mut(&mut self) -> Vec<&mut [T]> {
        let mut groups: Vec<&mut [T]> = self.encoder.tables_mut().iter_mut().map(|t| t.values_mut()).collect();
        groups.push(self.mlp.params_mut());
        groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.encoder.tables().iter().map(|t| t.values().len()).collect();
        sizes.push(self.mlp.parameter_count());
        sizes
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.tables().iter().all(|t| t.is_finite()) && self.mlp.params().iter().all(|v| v.is_finite())
    }
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes: usize,
    pub skipped: usize,
}

/// Parameter location for a probe: `(group, index)` in
/// [`Model::parameter_groups_mut`] order.
type Probe = (usize, usize);

/// Compares analytic gradients of `sum_q u_q . model(q)` with central finite
/// differences at `probes` parameters. Half of the probes sample table
/// entries read by the queries, the rest sample MLP parameters. Probes whose
/// perturbation moves a pre-activation across zero are skipped and replaced.
pub fn gradient_check(
    model: &Model<f64>,
    queries: &[SpatioDirectional],
    probes: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_w = model.mlp.config().output_width;
    let u: Vec<Vec<f64>> = queries.iter().map(|_| (0..out_w).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();

    let mut ws = model.workspace();
    let mut grads = model.gradients();
    for (q, uq) in queries.iter().zip(&u) {
        model.forward(q, &mut ws)?;
        model.backward(&mut ws, uq, &mut grads)?;
    }
    let levels = model.encoder.levels();
    let f = model.encoder.features();
    let mut dense: Vec<Vec<f64>> = model.encoder.tables().iter().map(|t| vec![0.0; t.values().len()]).collect();
    grads.tables.scatter_into(&mut dense)?;

    let mut table_candidates: Vec<Probe> = Vec::new();
    for l in 0..levels {
        for (row, _) in grads.tables.reduced(l) {
            for k in 0..f {
                table_candidates.push((l, row as usize * f + k));
            }
        }
    }
    let mlp_candidates: Vec<Probe> = (0..model.mlp.parameter_count()).map(|i| (levels, i)).collect();

    let evaluate = |m: &Model<f64>| -> Result<(f64, Vec<Vec<bool>>)> {
        let mut ws = m.workspace();
        let mut total = 0.0;
        let mut patterns = Vec::with_capacity(queries.len());
        for (q, uq) in queries.iter().zip(&u) {
            let y = m.forward(q, &mut ws)?;
            total += y.iter().zip(uq).map(|(a, b)| a * b).sum::<f64>();
            patterns.push(ws.cache().sign_pattern());
        }
        Ok((total, patterns))
    };
    let (_, base_pattern) = evaluate(model)?;

    let mut report = GradCheckReport { max_relative_error: 0.0, probes: 0, skipped: 0 };
    let mut attempts = 0;
    while report.probes < probes {
        attempts += 1;
        if attempts > probes * 20 {
            return Err(Error::Config("too many gradient probes straddle activation kinks".into()));
        }
        let pool = if report.probes % 2 == 0 && !table_candidates.is_empty() {
            &table_candidates
        } else {
            &mlp_candidates
        };
        let &(group, idx) = pool.choose(&mut rng).expect("MLP has parameters");
        let analytic = if group < levels { dense[group][idx] } else { grads.mlp[idx] };
        let shifted = |delta: f64| -> Result<(f64, Vec<Vec<bool>>)> {
            let mut m = model.clone();
            m.parameter_groups_mut()[group][idx] += delta;
            evaluate(&m)
        };
        let (fp, pp) = shifted(step)?;
        let (fm, pm) = shifted(-step)?;
        if pp != base_pattern || pm != base_pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        let err = relative_error(analytic, numeric);
        report.max_relative_error = report.max_relative_error.max(err);
        report.probes += 1;
    }
    Ok(report)
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}
