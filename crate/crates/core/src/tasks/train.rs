use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline_grids::{DirectionMap, DirectionalGrid, GridEncodingConfig};
use crate::error::{Error, Result};
use crate::geodesic::UnitVector;
use crate::joint_encoding::{HashGridSphere, JointConfig, SpatioDirectional};
use crate::model::{EncoderKind, Model, ModelEncoder, ModelGradients};
use crate::nn::{l2_regularization, relative_l2_element, AdamConfig, AdamState, MlpConfig};
use crate::sphere_encoding::{HashSphere, HashSphereConfig};
use crate::tasks::envmap::EnvMap;
use crate::tasks::field::{synthetic_field, SyntheticField5D};
use crate::tasks::metrics::{error_metrics, memory_footprint, BandAccumulator, ErrorMetrics};
use crate::tasks::sampling::{check_split, fibonacci_sphere, rotated_directions, uniform_direction};

/// Samples per gradient work unit. Chunk results are merged in chunk order,
/// so the outcome does not depend on the number of worker threads.
pub const CHUNK_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// 512 steps of 2^14 directions at learning rate 0.01.
    pub fn envmap() -> Self {
        Self { steps: 512, batch_size: 1 << 14, learning_rate: 0.01, l2_lambda: 0.0, seed: 0 }
    }

    /// 4096 steps of 2^12 samples at learning rate 0.005.
    pub fn joint() -> Self {
        Self { steps: 4096, batch_size: 1 << 12, learning_rate: 0.005, l2_lambda: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::Config("L2 weight must be >= 0".into()));
        }
        AdamConfig::with_learning_rate(self.learning_rate).validate()
    }
}

/// Encoder family plus its configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncoderSpec {
    HashSphere(HashSphereConfig),
    Grid(DirectionMap, GridEncodingConfig),
    Joint(JointConfig),
}

impl EncoderSpec {
    pub fn build<T: crate::scalar::Real>(&self, seed: u64) -> Result<ModelEncoder<T>> {
        Ok(match *self {
            EncoderSpec::HashSphere(c) => ModelEncoder::Sphere(HashSphere::new(c, seed)?),
            EncoderSpec::Grid(map, c) => ModelEncoder::Grid(DirectionalGrid::new(map, c, seed)?),
            EncoderSpec::Joint(c) => ModelEncoder::Joint(HashGridSphere::new(c, seed)?),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            EncoderSpec::HashSphere(_) => EncoderKind::HashSphere,
            EncoderSpec::Grid(DirectionMap::Polar, _) => EncoderKind::GridPolar,
            EncoderSpec::Grid(DirectionMap::Cartesian, _) => EncoderKind::GridCartesian,
            EncoderSpec::Joint(_) => EncoderKind::Joint,
        }
    }

    pub fn levels(&self) -> u32 {
        match self {
            EncoderSpec::HashSphere(c) => c.levels,
            EncoderSpec::Grid(_, c) => c.levels,
            EncoderSpec::Joint(c) => c.levels,
        }
    }

    pub fn features(&self) -> usize {
        match self {
            EncoderSpec::HashSphere(c) => c.features,
            EncoderSpec::Grid(_, c) => c.features,
            EncoderSpec::Joint(c) => c.features,
        }
    }

    pub fn table_cap(&self) -> u32 {
        match self {
            EncoderSpec::HashSphere(c) => c.table_cap(),
            EncoderSpec::Grid(_, c) => c.table_cap,
            EncoderSpec::Joint(c) => c.table_cap(),
        }
    }

    /// Rows of every level's table.
    pub fn rows_per_level(&self) -> Vec<usize> {
        match self {
            EncoderSpec::HashSphere(c) => c.rows_per_level(),
            EncoderSpec::Grid(_, c) => c.rows_per_level(),
            EncoderSpec::Joint(c) => c.rows_per_level(),
        }
    }
}

/// Outcome of one fitting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub encoder: u8,
    pub levels: u32,
    pub features: usize,
    pub table_cap: u32,
    pub train: TrainConfig,
    pub loss_curve: Vec<f64>,
    pub initial_relative_l2: f64,
    pub final_relative_l2: f64,
    pub final_psnr: f64,
    /// Mean relative error of each 10-degree latitude band, north first.
    /// Empty for spatio-directional runs.
    pub latitude_profile: Vec<f64>,
    /// Error on held-out directions, spatio-directional runs only.
    pub novel_relative_l2: Option<f64>,
    pub encoding_bytes: u64,
    pub mlp_bytes: u64,
    /// Dense lookup structures, not counted in the memory figure.
    pub auxiliary_bytes: u64,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn memory_bytes(&self) -> u64 {
        self.encoding_bytes + self.mlp_bytes
    }

    pub fn encoder_kind(&self) -> Option<EncoderKind> {
        EncoderKind::from_code(self.encoder)
    }

    fn new(model: &Model<f32>, train: TrainConfig, table_cap: u32) -> Self {
        Self {
            encoder: model.kind().code(),
            levels: model.encoder.levels() as u32,
            features: model.encoder.features(),
            table_cap,
            train,
            loss_curve: Vec::new(),
            initial_relative_l2: f64::NAN,
            final_relative_l2: f64::NAN,
            final_psnr: f64::NAN,
            latitude_profile: Vec::new(),
            novel_relative_l2: None,
            encoding_bytes: memory_footprint(model.encoder.parameter_count(), 0),
            mlp_bytes: memory_footprint(0, model.mlp.parameter_count()),
            auxiliary_bytes: model.encoder.auxiliary_bytes() as u64,
            wall_clock_seconds: 0.0,
        }
    }
}

fn chunk_gradients(
    model: &Model<f32>,
    queries: &[SpatioDirectional],
    targets: &[f32],
    inv_n: f64,
) -> Result<(f64, ModelGradients<f32>)> {
    let out_w = model.mlp.config().output_width;
    let mut ws = model.workspace();
    let mut grads = model.gradients();
    let mut up = vec![0.0f32; out_w];
    let mut loss = 0.0;
    for (q, t) in queries.iter().zip(targets.chunks_exact(out_w)) {
        let y = model.forward(q, &mut ws)?;
        for k in 0..out_w {
            let (l, g) = relative_l2_element(y[k] as f64, t[k] as f64);
            loss += l;
            up[k] = (g * inv_n) as f32;
        }
        model.backward(&mut ws, &up, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Runs `config.steps` Adam steps. `sample` fills one batch of queries and
/// row-major targets. Returns the per-step training loss.
pub fn fit<F>(model: &mut Model<f32>, config: &TrainConfig, mut sample: F) -> Result<Vec<f64>>
where
    F: FnMut(&mut ChaCha8Rng, &mut Vec<SpatioDirectional>, &mut Vec<f32>),
{
    config.validate()?;
    let out_w = model.mlp.config().output_width;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &model.group_sizes())?;
    let mut dense: Vec<Vec<f32>> = model.group_sizes().iter().map(|&n| vec![0.0; n]).collect();
    let mut queries = Vec::with_capacity(config.batch_size);
    let mut targets = Vec::with_capacity(config.batch_size * out_w);
    let mut curve = Vec::with_capacity(config.steps);
    let inv_n = 1.0 / (config.batch_size * out_w) as f64;
    let levels = model.encoder.levels();

    for step in 0..config.steps {
        queries.clear();
        targets.clear();
        sample(&mut rng, &mut queries, &mut targets);
        if queries.len() != config.batch_size || targets.len() != config.batch_size * out_w {
            return Err(Error::Shape("sampler produced a batch of the wrong size".into()));
        }
        let m: &Model<f32> = model;
        let chunks: Vec<Result<(f64, ModelGradients<f32>)>> = queries
            .par_chunks(CHUNK_SIZE)
            .zip(targets.par_chunks(CHUNK_SIZE * out_w))
            .map(|(q, t)| chunk_gradients(m, q, t, inv_n))
            .collect();
        dense.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        let mut loss = 0.0;
        for chunk in chunks {
            let (l, g) = chunk?;
            loss += l;
            g.tables.scatter_into(&mut dense[..levels])?;
            for (a, b) in dense[levels].iter_mut().zip(&g.mlp) {
                *a += *b;
            }
        }
        loss *= inv_n;
        if config.l2_lambda > 0.0 {
            for (t, g) in model.encoder.tables().iter().zip(dense.iter_mut()) {
                loss += l2_regularization(t.values(), config.l2_lambda, g)?;
            }
            loss += l2_regularization(model.mlp.params(), config.l2_lambda, &mut dense[levels])?;
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        let refs: Vec<&[f32]> = dense.iter().map(|g| g.as_slice()).collect();
        adam.step(&mut model.parameter_groups_mut(), &refs).map_err(|_| Error::Diverged { step, loss })?;
        model.meta.steps += 1;
        curve.push(loss);
    }
    Ok(curve)
}

/// Model output at every texel centre, row-major RGB.
pub fn predict_envmap(model: &Model<f32>, map: &EnvMap) -> Result<Vec<f64>> {
    let rows: Vec<Result<Vec<f64>>> = (0..map.height())
        .into_par_iter()
        .map(|i| {
            let mut ws = model.workspace();
            let mut out = Vec::with_capacity(map.width() * 3);
            for j in 0..map.width() {
                let q = SpatioDirectional { position: [0.0; 3], direction: map.texel_direction(i, j) };
                out.extend(model.forward(&q, &mut ws)?.iter().map(|&v| v as f64));
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(map.width() * map.height() * 3);
    for r in rows {
        all.extend(r?);
    }
    Ok(all)
}

/// Solid-angle weight of every texel, `sin(colatitude)`.
pub fn texel_weights(map: &EnvMap) -> Vec<f64> {
    (0..map.height())
        .flat_map(|i| std::iter::repeat(map.row_colatitude(i).sin()).take(map.width()))
        .collect()
}

/// Relative-L2 and PSNR of texel-centre predictions.
pub fn envmap_metrics(pred: &[f64], map: &EnvMap) -> Result<ErrorMetrics> {
    let target: Vec<f64> = map.pixels().iter().map(|&v| v as f64).collect();
    error_metrics(pred, &target, &texel_weights(map), 3)
}

/// Per-band mean relative error of texel-centre predictions.
pub fn envmap_profile(pred: &[f64], map: &EnvMap) -> Vec<f64> {
    let mut acc = BandAccumulator::default();
    for i in 0..map.height() {
        let theta = map.row_colatitude(i);
        for j in 0..map.width() {
            let o = (i * map.width() + j) * 3;
            let r = map.texel(i, j).map(|v| v as f64);
            acc.add(theta, theta.sin(), &pred[o..o + 3], &r);
        }
    }
    acc.profile()
}

pub fn latitude_error_profile(model: &Model<f32>, map: &EnvMap) -> Result<Vec<f64>> {
    Ok(envmap_profile(&predict_envmap(model, map)?, map))
}

/// Fits `spec` plus an MLP head to `map` from uniformly sampled directions.
pub fn train_envmap(
    map: &EnvMap,
    spec: &EncoderSpec,
    mlp: MlpConfig,
    config: &TrainConfig,
) -> Result<(Model<f32>, TrainReport)> {
    if matches!(spec, EncoderSpec::Joint(_)) {
        return Err(Error::Config("environment maps need a directional encoder".into()));
    }
    let start = Instant::now();
    let mut model = Model::with_head(spec.build(config.seed)?, mlp, config.seed)?;
    let mut report = TrainReport::new(&model, *config, spec.table_cap());
    report.initial_relative_l2 = envmap_metrics(&predict_envmap(&model, map)?, map)?.relative_l2;
    let out_w = model.mlp.config().output_width;
    if out_w != 3 {
        return Err(Error::Config(format!("environment maps need 3 outputs, head has {out_w}")));
    }
    report.loss_curve = fit(&mut model, config, |rng, qs, ts| {
        for _ in 0..config.batch_size {
            let d = uniform_direction(rng);
            ts.extend(map.lookup(&d).iter().map(|&v| v as f32));
            qs.push(SpatioDirectional { position: [0.0; 3], direction: d });
        }
    })?;
    let pred = predict_envmap(&model, map)?;
    let m = envmap_metrics(&pred, map)?;
    report.final_relative_l2 = m.relative_l2;
    report.final_psnr = m.psnr;
    report.latitude_profile = envmap_profile(&pred, map);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Targets are `f / max f` scaled by this so the sigmoid head can reach them.
pub const JOINT_TARGET_SCALE: f64 = 0.9;
pub const CAMERA_COUNT: usize = 256;
pub const NOVEL_ROTATION_DEGREES: f64 = 1.8;
pub const MIN_SPLIT_GAP_DEGREES: f64 = 0.5;
pub const JOINT_EVAL_SAMPLES: usize = 1 << 14;

/// Training ("camera") directions and their rotated held-out twins.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSplit {
    pub train: Vec<UnitVector>,
    pub novel: Vec<UnitVector>,
}

impl DirectionSplit {
    pub fn new(seed: u64) -> Result<Self> {
        let train = fibonacci_sphere(CAMERA_COUNT);
        let novel = rotated_directions(&train, NOVEL_ROTATION_DEGREES.to_radians(), seed);
        check_split(&train, &novel, MIN_SPLIT_GAP_DEGREES.to_radians())?;
        Ok(Self { train, novel })
    }
}

/// The field value the network is trained to output.
pub fn scaled_field(field: &SyntheticField5D, x: &[f64; 3], d: &UnitVector) -> f64 {
    let max = field.max_value();
    let s = if max > 0.0 { JOINT_TARGET_SCALE / max } else { 1.0 };
    s * synthetic_field(x, d, field)
}

fn random_position<R: Rng>(cfg: &JointConfig, rng: &mut R) -> [f64; 3] {
    std::array::from_fn(|i| cfg.bounds_min[i] + rng.gen::<f64>() * (cfg.bounds_max[i] - cfg.bounds_min[i]))
}

/// Field positions are in the unit cube; `bounds` map world space onto it.
fn field_position(cfg: &JointConfig, p: &[f64; 3]) -> [f64; 3] {
    cfg.normalize_position(p)
}

/// Relative-L2 and PSNR over `JOINT_EVAL_SAMPLES` random positions paired
/// with the given directions in turn.
pub fn evaluate_joint(
    model: &Model<f32>,
    field: &SyntheticField5D,
    dirs: &[UnitVector],
    seed: u64,
) -> Result<ErrorMetrics> {
    let cfg = match &model.encoder {
        ModelEncoder::Joint(e) => *e.config(),
        _ => return Err(Error::Config("spatio-directional evaluation needs a joint encoder".into())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = model.workspace();
    let mut pred = Vec::with_capacity(JOINT_EVAL_SAMPLES);
    let mut target = Vec::with_capacity(JOINT_EVAL_SAMPLES);
    for i in 0..JOINT_EVAL_SAMPLES {
        let q = SpatioDirectional { position: random_position(&cfg, &mut rng), direction: dirs[i % dirs.len()] };
        pred.push(model.forward(&q, &mut ws)?[0] as f64);
        target.push(scaled_field(field, &field_position(&cfg, &q.position), &q.direction));
    }
    error_metrics(&pred, &target, &vec![1.0; pred.len()], 1)
}

/// Fits the joint encoder to `field` from the fixed camera directions and
/// reports errors on both the camera and the held-out directions.
pub fn train_joint(
    field: &SyntheticField5D,
    joint: JointConfig,
    mut mlp: MlpConfig,
    config: &TrainConfig,
) -> Result<(Model<f32>, TrainReport)> {
    let start = Instant::now();
    mlp.output_width = 1;
    let split = DirectionSplit::new(config.seed)?;
    let mut model = Model::with_head(EncoderSpec::Joint(joint).build(config.seed)?, mlp, config.seed)?;
    let mut report = TrainReport::new(&model, *config, joint.table_cap());
    let eval_seed = config.seed.wrapping_add(3);
    report.initial_relative_l2 = evaluate_joint(&model, field, &split.train, eval_seed)?.relative_l2;
    report.loss_curve = fit(&mut model, config, |rng, qs, ts| {
        for _ in 0..config.batch_size {
            let position = random_position(&joint, rng);
            let direction = split.train[rng.gen_range(0..split.train.len())];
            ts.push(scaled_field(field, &field_position(&joint, &position), &direction) as f32);
            qs.push(SpatioDirectional { position, direction });
        }
    })?;
    let train = evaluate_joint(&model, field, &split.train, eval_seed)?;
    let novel = evaluate_joint(&model, field, &split.novel, eval_seed)?;
    report.final_relative_l2 = train.relative_l2;
    report.final_psnr = train.psnr;
    report.novel_relative_l2 = Some(novel.relative_l2);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}
