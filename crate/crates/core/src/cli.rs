//! Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage
//! error (including a missing input file).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline_grids::{DirectionMap, GridEncodingConfig};
use crate::error::Error;
use crate::geodesic::{build_dense_tables, face_count, vertex_count, MAX_DENSE_LEVEL};
use crate::hashing::HashConfig;
use crate::io::{load_checkpoint, load_hdr, save_checkpoint, write_loss_log_file, write_pfm, write_results_csv};
use crate::joint_encoding::{JointConfig, SpatioDirectional};
use crate::model::{gradient_check, Model, ModelEncoder};
use crate::nn::{Activation, MlpConfig, OutputActivation};
use crate::sphere_encoding::HashSphereConfig;
use crate::tasks::envmap::{EnvMap, Procedural};
use crate::tasks::field::SyntheticField5D;
use crate::tasks::sampling::uniform_direction;
use crate::tasks::train::{
    envmap_metrics, envmap_profile, evaluate_joint, predict_envmap, train_envmap, train_joint, DirectionSplit,
    EncoderSpec, TrainConfig, TrainReport,
};
use crate::tasks::metrics::polar_ratio;

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "hashsphere", version, about = "Fit and evaluate geodesic hash encodings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress an environment map into an encoder and MLP.
    FitEnvmap(FitEnvmapArgs),
    /// Fit the joint encoder to a synthetic 5D field.
    FitJoint(FitJointArgs),
    /// Evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Write the geodesic grid of one level as a mesh.
    ExportGrid(ExportGridArgs),
    /// Fit every encoder over a grid of table caps and level counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Hashsphere,
    #[value(name = "grid2d-polar")]
    Grid2dPolar,
    #[value(name = "grid3d-cartesian")]
    Grid3dCartesian,
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    /// Lat-long HDR image (Radiance .hdr or .pfm).
    #[arg(long, conflicts_with = "procedural")]
    pub input: Option<PathBuf>,
    /// Built-in target, used when no input is given.
    #[arg(long, value_enum, default_value_t = Procedural::PointLights)]
    pub procedural: Procedural,
    /// Width of the procedural map.
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    /// Height of the procedural map.
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Seed of the procedural map.
    #[arg(long, default_value_t = 0)]
    pub map_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    #[arg(long, value_enum, default_value_t = EncoderArg::Hashsphere)]
    pub encoder: EncoderArg,
    /// Number of levels L.
    #[arg(long, default_value_t = 8)]
    pub levels: u32,
    /// Features per level F.
    #[arg(long, default_value_t = 2)]
    pub features: usize,
    /// Maximum rows per level T (a power of two for the hash-sphere).
    #[arg(long, default_value_t = 1 << 14)]
    pub table_cap: u32,
    /// Grid baselines: resolution of level 0.
    #[arg(long, default_value_t = 8)]
    pub base_resolution: u32,
    /// Grid baselines: per-level resolution growth.
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
    /// Discretization scale of the vertex hash.
    #[arg(long, default_value_t = crate::hashing::DEFAULT_GAMMA)]
    pub gamma: u32,
}

impl EncoderArgs {
    fn spec(&self, encoder: EncoderArg, table_cap: u32, levels: u32) -> EncoderSpec {
        let grid = |dims| GridEncodingConfig {
            dims,
            base_resolution: self.base_resolution,
            scale: self.scale,
            levels,
            features: self.features,
            table_cap,
            primes: crate::hashing::SPATIAL_PRIMES,
        };
        match encoder {
            EncoderArg::Hashsphere => EncoderSpec::HashSphere(HashSphereConfig {
                levels,
                features: self.features,
                hash: HashConfig { gamma: self.gamma, ..HashConfig::with_table_cap(table_cap) },
            }),
            EncoderArg::Grid2dPolar => EncoderSpec::Grid(DirectionMap::Polar, grid(2)),
            EncoderArg::Grid3dCartesian => EncoderSpec::Grid(DirectionMap::Cartesian, grid(3)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct HeadArgs {
    #[arg(long, default_value_t = 2)]
    pub hidden_layers: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden_width: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitEnvmapArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub head: HeadArgs,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    /// Directions per step.
    #[arg(long, default_value_t = 1 << 14)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// L2 regularization weight on all parameters.
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the checkpoint, results row and loss log.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FieldArgs {
    /// Number of lobes of the synthetic field.
    #[arg(long, default_value_t = 4)]
    pub lobes: usize,
    #[arg(long, default_value_t = 0)]
    pub field_seed: u64,
    /// Use a constant field of this value instead of lobes.
    #[arg(long)]
    pub constant: Option<f64>,
}

impl FieldArgs {
    fn field(&self) -> SyntheticField5D {
        match self.constant {
            Some(v) => SyntheticField5D::constant(v),
            None => SyntheticField5D::random(self.lobes, self.field_seed),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitJointArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long, default_value_t = 8)]
    pub levels: u32,
    /// Spatial resolution of level 0.
    #[arg(long, default_value_t = 16)]
    pub base_resolution: u32,
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
    /// Cap L_d on the directional subdivision depth.
    #[arg(long, default_value_t = 4)]
    pub dir_level_cap: u32,
    #[arg(long, default_value_t = 2)]
    pub features: usize,
    #[arg(long, default_value_t = 1 << 16)]
    pub table_cap: u32,
    #[command(flatten)]
    pub head: HeadArgs,
    #[arg(long, default_value_t = 4096)]
    pub steps: usize,
    #[arg(long, default_value_t = 1 << 12)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub field: FieldArgs,
    /// Also write texel-centre predictions of a directional model as PFM.
    #[arg(long)]
    pub dump_pfm: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradcheckEncoder {
    Hashsphere,
    #[value(name = "grid2d-polar")]
    Grid2dPolar,
    #[value(name = "grid3d-cartesian")]
    Grid3dCartesian,
    Hashgridsphere,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = GradcheckEncoder::Hashsphere)]
    pub encoder: GradcheckEncoder,
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    #[arg(long, default_value_t = 2)]
    pub features: usize,
    #[arg(long, default_value_t = 8)]
    pub hidden_width: usize,
    /// Parameters probed.
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
    /// Queries in the objective.
    #[arg(long, default_value_t = 8)]
    pub queries: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ExportGridArgs {
    /// Subdivision level, at most 8.
    #[arg(long, default_value_t = 2)]
    pub level: u32,
    #[arg(long, default_value = "grid.obj")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub head: HeadArgs,
    /// Encoders to fit.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hashsphere,grid2d-polar,grid3d-cartesian")]
    pub encoders: Vec<EncoderArg>,
    /// Table caps to sweep.
    #[arg(long, value_delimiter = ',', default_value = "16384,65536,262144")]
    pub table_caps: Vec<u32>,
    /// Level counts to sweep.
    #[arg(long = "level-counts", value_delimiter = ',', default_value = "8,10")]
    pub level_counts: Vec<u32>,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    #[arg(long, default_value_t = 1 << 14)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results table.
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    /// Directory for one loss log per run.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} not found", path.display())))
    }
}

fn load_target(t: &TargetArgs) -> CliResult<EnvMap> {
    match &t.input {
        Some(p) => {
            require_file(p)?;
            Ok(load_hdr(p)?)
        }
        None => Ok(t.procedural.generate(t.width, t.height, t.map_seed)?),
    }
}

fn envmap_head(h: &HeadArgs) -> MlpConfig {
    MlpConfig { hidden_layers: h.hidden_layers, hidden_width: h.hidden_width, ..MlpConfig::envmap(0) }
}

fn print_report(r: &TrainReport) {
    let kind = r.encoder_kind().map_or("?", |k| k.name());
    print!(
        "encoder={kind} levels={} table_cap={} memory_bytes={} initial_rel_l2={:.6e} rel_l2={:.6e} psnr={:.3}",
        r.levels,
        r.table_cap,
        r.memory_bytes(),
        r.initial_relative_l2,
        r.final_relative_l2,
        r.final_psnr
    );
    if r.latitude_profile.len() == crate::tasks::metrics::LATITUDE_BANDS {
        print!(" polar_ratio={:.4}", polar_ratio(&r.latitude_profile));
    }
    if let Some(n) = r.novel_relative_l2 {
        print!(" novel_rel_l2={n:.6e}");
    }
    println!();
}

fn write_run(out_dir: &Path, model: &Model<f32>, report: &TrainReport) -> CliResult {
    fs::create_dir_all(out_dir)?;
    save_checkpoint(model, out_dir.join("model.ckpt"))?;
    write_results_csv(std::slice::from_ref(report), out_dir.join("results.csv"))?;
    write_loss_log_file(&report.loss_curve, out_dir.join("loss.jsonl"))?;
    Ok(())
}

fn fit_envmap(a: &FitEnvmapArgs) -> CliResult {
    let map = load_target(&a.target)?;
    let spec = a.encoder.spec(a.encoder.encoder, a.encoder.table_cap, a.encoder.levels);
    let train = TrainConfig { steps: a.steps, batch_size: a.batch_size, learning_rate: a.lr, l2_lambda: a.l2, seed: a.seed };
    let (model, report) = train_envmap(&map, &spec, envmap_head(&a.head), &train)?;
    write_run(&a.out_dir, &model, &report)?;
    print_report(&report);
    Ok(())
}

fn fit_joint(a: &FitJointArgs) -> CliResult {
    let joint = JointConfig {
        levels: a.levels,
        base_resolution: a.base_resolution,
        scale: a.scale,
        dir_level_cap: a.dir_level_cap,
        features: a.features,
        hash: HashConfig::with_table_cap(a.table_cap),
        ..JointConfig::default()
    };
    let head = MlpConfig {
        hidden_layers: a.head.hidden_layers,
        hidden_width: a.head.hidden_width,
        hidden_activation: Activation::LeakyRelu,
        output_activation: OutputActivation::Sigmoid,
        ..MlpConfig::radiance(0, 1)
    };
    let train = TrainConfig { steps: a.steps, batch_size: a.batch_size, learning_rate: a.lr, l2_lambda: a.l2, seed: a.seed };
    let (model, report) = train_joint(&a.field.field(), joint, head, &train)?;
    write_run(&a.out_dir, &model, &report)?;
    print_report(&report);
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult {
    require_file(&a.checkpoint)?;
    let model: Model<f32> = load_checkpoint(&a.checkpoint)?;
    if let ModelEncoder::Joint(_) = model.encoder {
        let field = a.field.field();
        let split = DirectionSplit::new(model.meta.seed)?;
        let seed = model.meta.seed.wrapping_add(3);
        let train = evaluate_joint(&model, &field, &split.train, seed)?;
        let novel = evaluate_joint(&model, &field, &split.novel, seed)?;
        println!(
            "encoder={} rel_l2={:.6e} psnr={:.3} novel_rel_l2={:.6e}",
            model.kind().name(),
            train.relative_l2,
            train.psnr,
            novel.relative_l2
        );
        return Ok(());
    }
    let map = load_target(&a.target)?;
    let pred = predict_envmap(&model, &map)?;
    let m = envmap_metrics(&pred, &map)?;
    let profile = envmap_profile(&pred, &map);
    println!(
        "encoder={} rel_l2={:.6e} psnr={:.3} polar_ratio={:.4}",
        model.kind().name(),
        m.relative_l2,
        m.psnr,
        polar_ratio(&profile)
    );
    if let Some(p) = &a.dump_pfm {
        let rgb: Vec<f32> = pred.iter().map(|&v| v as f32).collect();
        write_pfm(p, map.width(), map.height(), &rgb)?;
    }
    Ok(())
}

/// Runs the gradient check described by `a`; returns the largest error.
pub fn run_gradcheck(a: &GradcheckArgs) -> crate::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let spec = match a.encoder {
        GradcheckEncoder::Hashsphere => EncoderSpec::HashSphere(HashSphereConfig::new(a.levels, a.features, 1 << 8)),
        GradcheckEncoder::Grid2dPolar => EncoderSpec::Grid(DirectionMap::Polar, GridEncodingConfig {
            features: a.features,
            ..GridEncodingConfig::new(2, a.levels, 1 << 8)
        }),
        GradcheckEncoder::Grid3dCartesian => EncoderSpec::Grid(DirectionMap::Cartesian, GridEncodingConfig {
            features: a.features,
            ..GridEncodingConfig::new(3, a.levels, 1 << 8)
        }),
        GradcheckEncoder::Hashgridsphere => EncoderSpec::Joint(JointConfig {
            levels: a.levels,
            base_resolution: 2,
            features: a.features,
            hash: HashConfig::with_table_cap(1 << 8),
            ..JointConfig::default()
        }),
    };
    let head = MlpConfig {
        input_width: 0,
        hidden_layers: 2,
        hidden_width: a.hidden_width,
        hidden_activation: Activation::LeakyRelu,
        output_activation: OutputActivation::Sigmoid,
        output_width: 3,
    };
    let mut model: Model<f64> = Model::with_head(spec.build(a.seed)?, head, a.seed)?;
    use rand::Rng;
    for t in model.encoder.tables_mut() {
        t.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    let queries: Vec<SpatioDirectional> = (0..a.queries)
        .map(|_| SpatioDirectional {
            position: [rng.gen(), rng.gen(), rng.gen()],
            direction: uniform_direction(&mut rng),
        })
        .collect();
    let report = gradient_check(&model, &queries, a.probes, a.step, a.seed.wrapping_add(1))?;
    Ok(report.max_relative_error)
}

fn gradcheck(a: &GradcheckArgs) -> CliResult {
    let err = run_gradcheck(a)?;
    println!("max_relative_error={err:.3e} probes={}", a.probes);
    if err < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Runtime(Error::Config(format!(
            "gradient mismatch {err:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
        ))))
    }
}

fn export_grid(a: &ExportGridArgs) -> CliResult {
    if a.level > MAX_DENSE_LEVEL {
        return Err(CliError::Usage(format!("level {} above {MAX_DENSE_LEVEL}", a.level)));
    }
    let tables = build_dense_tables(a.level)?;
    tables.write_mesh(a.level, BufWriter::new(File::create(&a.out)?))?;
    println!("vertices={} faces={}", vertex_count(a.level), face_count(a.level));
    Ok(())
}

fn sweep(a: &SweepArgs) -> CliResult {
    let map = load_target(&a.target)?;
    let train = TrainConfig { steps: a.steps, batch_size: a.batch_size, learning_rate: a.lr, l2_lambda: a.l2, seed: a.seed };
    if let Some(d) = &a.log_dir {
        fs::create_dir_all(d)?;
    }
    let mut reports = Vec::new();
    for &enc in &a.encoders {
        for &levels in &a.level_counts {
            for &cap in &a.table_caps {
                let spec = a.encoder.spec(enc, cap, levels);
                let (_, r) = train_envmap(&map, &spec, envmap_head(&a.head), &train)?;
                print_report(&r);
                if let Some(d) = &a.log_dir {
                    let name = format!("{}_L{levels}_T{cap}.jsonl", spec.kind().name());
                    write_loss_log_file(&r.loss_curve, d.join(name))?;
                }
                reports.push(r);
            }
        }
    }
    write_results_csv(&reports, &a.out)?;
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::FitEnvmap(a) => fit_envmap(a),
        Command::FitJoint(a) => fit_joint(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::ExportGrid(a) => export_grid(a),
        Command::Sweep(a) => sweep(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
