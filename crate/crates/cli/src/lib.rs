//! Command-line experiment runner for `stein-ebm`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
//! configuration, 4 training diverged.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use stein_ebm::checkpoint::Checkpoint;
use stein_ebm::data_io::{
    load_dataset_csv, load_idx, load_idx_pair, make_gaussian_mixture, make_rbm_ground_truth, save_dataset_csv,
    Dataset, GIBBS_BURN_IN, GIBBS_THIN,
};
use stein_ebm::energy::{rbm_gibbs_sample, ring_centers};
use stein_ebm::evaluation::{metrics_csv, test_log_likelihood};
use stein_ebm::generator::{sample_noise, MlpGenerator};
use stein_ebm::steingan::{generator_init_stream, theta_init_stream, train, EvalSpec, TrainOutcome};
use stein_ebm::{
    DiagGaussianParams, Error, FiniteDifference, GbRbmParams, Method, ModelSpec, ParamVector, ParticleBatch,
    RngStream, TrainState,
};

use crate::config::{parse_value, qualify_key, read_config_tree, resolve_config, set_path, ConfigError, DataSpec, ExperimentConfig};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Stream index (below the data seed) used to synthesize datasets.
const DATA_STREAM: u64 = 7;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training diverged at iteration {0}")]
    Diverged(usize),
    #[error(transparent)]
    Runtime(Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { iteration } => CliError::Diverged(iteration),
            other => CliError::Runtime(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Runtime(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "stein-ebm", version, about = "Train and evaluate energy models with Stein variational methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train with SteinCD (one SVGD step on the data as negatives).
    TrainSteincd(TrainArgs),
    /// Train with CD-k using Langevin negatives.
    TrainCd(CdArgs),
    /// Train with Stein score matching.
    TrainSsm(SsmArgs),
    /// Train an energy model and a generator with SteinGAN.
    TrainSteingan(TrainArgs),
    /// Train with SteinCD-GAN(α).
    TrainMix(TrainArgs),
    /// Draw samples from a checkpoint.
    Sample(SampleArgs),
    /// Held-out log-likelihood of a checkpoint on a CSV dataset.
    Eval(EvalArgs),
    /// Run one training per value of a config field.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    /// JSON config file; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    theta_lr: Option<f64>,
    #[arg(long)]
    generator_lr: Option<f64>,
    #[arg(long)]
    svgd_step: Option<f64>,
    #[arg(long)]
    mix_alpha: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    /// Run directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Override any config field, e.g. `--set metrics.cadence=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct CdArgs {
    #[command(flatten)]
    common: TrainArgs,
    #[arg(long)]
    langevin_steps: Option<usize>,
    #[arg(long)]
    langevin_step: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    OneSided,
    Symmetric,
}

#[derive(Args, Debug)]
struct SsmArgs {
    #[command(flatten)]
    common: TrainArgs,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, short, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file to write.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV dataset with header `x0,…`.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Steincd,
    Cd,
    Ssm,
    Steingan,
    Mix,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Steincd => Method::SteinCd,
            MethodArg::Cd => Method::Cd,
            MethodArg::Ssm => Method::Ssm,
            MethodArg::Steingan => Method::SteinGan,
            MethodArg::Mix => Method::Mix,
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: TrainArgs,
    /// Field to vary; bare training fields such as `mix_alpha` are accepted.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, value_enum, default_value = "mix")]
    method: MethodArg,
}

fn method_name(method: Method) -> &'static str {
    match method {
        Method::Cd => "cd",
        Method::SteinCd => "steincd",
        Method::Ssm => "ssm",
        Method::SteinGan => "steingan",
        Method::Mix => "mix",
    }
}

/// Config tree after applying the file and all flag overrides.
fn config_tree(args: &TrainArgs, extra: &[(&str, Value)]) -> Result<Value, ConfigError> {
    let mut tree = match &args.config {
        Some(path) => read_config_tree(path)?,
        None => Value::Object(Default::default()),
    };
    let flags: [(&str, Option<Value>); 9] = [
        ("train.seed", args.seed.map(Value::from)),
        ("train.iterations", args.iterations.map(Value::from)),
        ("train.minibatch", args.minibatch.map(Value::from)),
        ("train.theta_lr", args.theta_lr.map(Value::from)),
        ("train.generator_lr", args.generator_lr.map(Value::from)),
        ("train.svgd_step", args.svgd_step.map(Value::from)),
        ("train.mix_alpha", args.mix_alpha.map(Value::from)),
        ("train.discount", args.discount.map(Value::from)),
        ("output_dir", args.output.as_ref().map(|p| Value::from(p.to_string_lossy().into_owned()))),
    ];
    for (path, value) in flags {
        if let Some(v) = value {
            set_path(&mut tree, path, v)?;
        }
    }
    for (path, value) in extra {
        set_path(&mut tree, path, value.clone())?;
    }
    for item in &args.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::new(item.clone(), "expected KEY=VALUE"))?;
        set_path(&mut tree, &qualify_key(key.trim()), parse_value(value.trim()))?;
    }
    Ok(tree)
}

/// Training and held-out points plus mode centers when known.
pub struct PreparedData {
    pub train: ParticleBatch,
    pub test: Option<ParticleBatch>,
    pub modes: Option<(Vec<Vec<f64>>, f64)>,
}

fn check_data_dim(path: &str, got: usize, want: usize) -> Result<(), ConfigError> {
    if got == want {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("data dimension {got} conflicts with model dimension {want}")))
    }
}

fn split_test(ds: Dataset, n_test: usize) -> (ParticleBatch, Option<ParticleBatch>) {
    let (train, test) = ds.split_at(ds.len().saturating_sub(n_test));
    (train.points, (!test.is_empty()).then_some(test.points))
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData, CliError> {
    let dim = config.model.dim();
    let data_rng = |seed: &Option<u64>| RngStream::new(seed.unwrap_or(config.train.seed)).split(DATA_STREAM);
    let mut modes = match config.model {
        ModelSpec::GaussianMixture { components, radius, std } => Some((ring_centers(components, radius), std)),
        _ => None,
    };
    let (train, test) = match &config.data {
        DataSpec::SyntheticRbm { hidden, param_scale, n_train, n_test, seed, .. } => {
            let hidden = hidden
                .or(match config.model {
                    ModelSpec::GbRbm { hidden, .. } => Some(hidden),
                    _ => None,
                })
                .ok_or_else(|| ConfigError::new("data.hidden", "required when the model is not an RBM"))?;
            let (ds, _) = make_rbm_ground_truth(dim, hidden, *param_scale, n_train + n_test, &mut data_rng(seed))?;
            split_test(ds, *n_test)
        }
        DataSpec::GaussianMixture { components, radius, std, n_train, n_test, seed } => {
            let centers = ring_centers(*components, *radius);
            let ds = make_gaussian_mixture(&centers, *std, n_train + n_test, &mut data_rng(seed))?;
            modes.get_or_insert((centers, *std));
            split_test(ds, *n_test)
        }
        DataSpec::Csv { train, test } => {
            let tr = load_dataset_csv(train)?;
            check_data_dim("data.train", tr.dim(), dim)?;
            let te = match test {
                Some(p) => {
                    let te = load_dataset_csv(p)?;
                    check_data_dim("data.test", te.dim(), dim)?;
                    Some(te.points)
                }
                None => None,
            };
            (tr.points, te)
        }
        DataSpec::Idx { images, labels, n_test } => {
            let ds = match labels {
                Some(l) => load_idx_pair(images, l)?,
                None => load_idx(images)?,
            };
            check_data_dim("data.images", ds.dim(), dim)?;
            split_test(ds, *n_test)
        }
    };
    if train.is_empty() {
        return Err(ConfigError::new("data", "training set is empty").into());
    }
    let modes = modes.map(|(c, std)| (c, config.metrics.mode_radius.unwrap_or(3.0 * std)));
    Ok(PreparedData { train, test, modes })
}

/// Initial parameters drawn from the run's init stream.
pub fn initial_theta(config: &ExperimentConfig) -> ParamVector {
    let mut rng = theta_init_stream(config.train.seed);
    match config.model {
        ModelSpec::GbRbm { visible, hidden } => {
            GbRbmParams::random(visible, hidden, config.init_scale, &mut rng).to_param_vector()
        }
        ModelSpec::DiagGaussian { dim } => DiagGaussianParams {
            mean: (0..dim).map(|_| config.init_scale * rng.normal()).collect(),
            log_var: vec![0.0; dim],
        }
        .to_param_vector(),
        ModelSpec::GaussianMixture { .. } => ParamVector::zeros(Default::default()),
    }
}

pub fn initial_generator(config: &ExperimentConfig) -> Result<MlpGenerator, CliError> {
    let mut sizes = config.generator.hidden.clone();
    sizes.push(config.model.dim());
    Ok(MlpGenerator::new(config.generator.noise_dim, &sizes, &mut generator_init_stream(config.train.seed))?)
}

/// Trains `method` under `config` without touching the filesystem beyond
/// reading input data.
pub fn run_training(config: &ExperimentConfig, method: Method) -> Result<(TrainOutcome, PreparedData), CliError> {
    let data = prepare_data(config)?;
    let model = config.model.build()?;
    let generator = if method.needs_generator() { Some(initial_generator(config)?) } else { None };
    let state = TrainState::new(model.as_ref(), initial_theta(config), generator, config.train.clone(), config.kernel)?;
    let eval = EvalSpec {
        cadence: config.metrics.cadence,
        test: data.test.clone(),
        modes: data.modes.clone(),
        samples: config.metrics.samples,
    };
    let outcome = train(model.as_ref(), &data.train, state, method, &eval, None)?;
    Ok((outcome, data))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs one experiment and writes its run directory.
pub fn run_experiment(config: &ExperimentConfig, method: Method, out_dir: &Path) -> Result<TrainOutcome, CliError> {
    let (outcome, data) = run_training(config, method)?;
    std::fs::create_dir_all(out_dir)?;
    let mut resolved = config.clone();
    resolved.output_dir = Some(out_dir.to_path_buf());
    let resolved_json = serde_json::to_string_pretty(&resolved).map_err(|e| CliError::Runtime(Error::Checkpoint(e.to_string())))?;
    write_text(&out_dir.join("config.resolved.json"), &(resolved_json + "\n"))?;
    write_text(&out_dir.join("metrics.csv"), &metrics_csv(&outcome.metrics))?;
    let ck = Checkpoint::new(
        config.model.clone(),
        &outcome.state.theta,
        outcome.state.generator.as_ref().map(|g| &g.generator),
        outcome.state.iteration,
        config.train.seed,
    );
    ck.save(&out_dir.join("checkpoint.json"))?;
    let info = serde_json::json!({
        "method": method_name(method),
        "rng_algorithm": stein_ebm::numerics::RNG_ALGORITHM,
        "seed": config.train.seed,
        "iterations": outcome.state.iteration,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_text(&out_dir.join("run_info.json"), &(serde_json::to_string_pretty(&info).expect("plain json") + "\n"))?;
    if let Some(test) = &data.test {
        save_dataset_csv(&out_dir.join("test.csv"), &Dataset::new(test.clone()))?;
    }
    Ok(outcome)
}

fn default_out_dir(method: Method, seed: u64) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-seed{seed}", method_name(method)))
}

fn cmd_train(args: &TrainArgs, method: Method, extra: &[(&str, Value)]) -> Result<(), CliError> {
    let config = resolve_config(config_tree(args, extra)?)?;
    let out = config.output_dir.clone().unwrap_or_else(|| default_out_dir(method, config.train.seed));
    let outcome = run_experiment(&config, method, &out)?;
    let mut stdout = std::io::stdout().lock();
    if let Some(last) = outcome.metrics.last() {
        writeln!(stdout, "iter {} test_ll {} stein_disc {}", last.iteration, last.test_log_likelihood, last.stein_discrepancy)?;
    }
    writeln!(stdout, "wrote {}", out.display())?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let method = Method::from(args.method);
    let key = qualify_key(&args.param);
    let base = args
        .common
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("sweep-{}", args.param)));
    // resolve every configuration before any training starts
    let mut runs = Vec::new();
    for value in &args.values {
        let mut common = args.common.clone();
        common.output = None;
        let dir = base.join(format!("{}={}", args.param, value));
        let extra = [(key.as_str(), parse_value(value))];
        let mut config = resolve_config(config_tree(&common, &extra)?)?;
        config.output_dir = Some(dir.clone());
        runs.push((config, dir));
    }
    let mut stdout = std::io::stdout().lock();
    for (config, dir) in runs {
        let outcome = run_experiment(&config, method, &dir)?;
        let ll = outcome.metrics.last().map_or(f64::NAN, |m| m.test_log_likelihood);
        writeln!(stdout, "{} test_ll {ll}", dir.display())?;
    }
    Ok(())
}

fn cmd_sample(args: &SampleArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let theta = ck.theta()?;
    let mut rng = RngStream::new(args.seed);
    let points = if let Some(g) = ck.generator()? {
        g.forward_batch(&sample_noise(args.n, g.noise_dim(), &mut rng))?
    } else {
        match ck.model {
            ModelSpec::GbRbm { visible, hidden } => {
                let params = GbRbmParams::from_param_vector(visible, hidden, &theta)?;
                rbm_gibbs_sample(&params, args.n, GIBBS_BURN_IN, GIBBS_THIN, &mut rng)?
            }
            ModelSpec::DiagGaussian { .. } => DiagGaussianParams::from_param_vector(&theta)?.sample(args.n, &mut rng),
            ModelSpec::GaussianMixture { components, radius, std } => {
                make_gaussian_mixture(&ring_centers(components, radius), std, args.n, &mut rng)?.points
            }
        }
    };
    save_dataset_csv(&args.output, &Dataset::new(points))?;
    writeln!(std::io::stdout().lock(), "wrote {} samples to {}", args.n, args.output.display())?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let model = ck.model.build()?;
    let data = load_dataset_csv(&args.data)?;
    check_data_dim("data", data.dim(), model.dim())?;
    let ll = test_log_likelihood(model.as_ref(), &ck.theta()?, &data.points)?;
    writeln!(std::io::stdout().lock(), "test_ll {ll}")?;
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::TrainSteincd(a) => cmd_train(&a, Method::SteinCd, &[]),
        Command::TrainCd(a) => {
            let mut extra = Vec::new();
            if let Some(k) = a.langevin_steps {
                extra.push(("train.langevin.steps", Value::from(k)));
            }
            if let Some(s) = a.langevin_step {
                extra.push(("train.langevin.step", Value::from(s)));
            }
            cmd_train(&a.common, Method::Cd, &extra)
        }
        Command::TrainSsm(a) => {
            let extra: Vec<(&str, Value)> = a
                .variant
                .map(|v| {
                    let v = match v {
                        VariantArg::OneSided => FiniteDifference::OneSided,
                        VariantArg::Symmetric => FiniteDifference::Symmetric,
                    };
                    ("train.ssm_variant", serde_json::to_value(v).expect("unit enum"))
                })
                .into_iter()
                .collect();
            cmd_train(&a.common, Method::Ssm, &extra)
        }
        Command::TrainSteingan(a) => cmd_train(&a, Method::SteinGan, &[]),
        Command::TrainMix(a) => cmd_train(&a, Method::Mix, &[]),
        Command::Sample(a) => cmd_sample(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
