//! Run configuration: flat `key = value` files, flag overrides, defaults.
//!
//! Precedence per key, strongest first: command-line flag, `IRMX_OUT`
//! (output directory only), config file, experiment default. Every command
//! is a pure function of the resolved [`RunConfig`], so identical inputs
//! always reproduce identical outputs.

use crate::error::CliError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Which subcommand is being configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Sem,
    Cls,
    Check,
    Trace,
}

impl Experiment {
    pub fn key(self) -> &'static str {
        match self {
            Experiment::Sem => "sem",
            Experiment::Cls => "cls",
            Experiment::Check => "check",
            Experiment::Trace => "trace",
        }
    }
}

/// Training objectives selectable via the `method` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Erm,
    IrmV1,
    VIrmV1,
    MmIrmV1,
}

/// Canonical reporting order; rows and summaries always follow it.
pub const METHOD_ORDER: [Method; 4] = [Method::Erm, Method::IrmV1, Method::VIrmV1, Method::MmIrmV1];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "ERM",
            Method::IrmV1 => "IRMv1",
            Method::VIrmV1 => "v-IRMv1",
            Method::MmIrmV1 => "mm-IRMv1",
        }
    }

    fn parse(token: &str) -> Result<Method, CliError> {
        METHOD_ORDER
            .into_iter()
            .find(|m| m.name() == token)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown method {token:?} (expected one of ERM, IRMv1, v-IRMv1, mm-IRMv1, or all)"
                ))
            })
    }
}

/// Every key accepted in config files and as a `--key value` flag.
pub const KNOWN_KEYS: [&str; 15] = [
    "experiment",
    "envs",
    "d",
    "n_per_env",
    "method",
    "lambda_grid",
    "alpha_min_grid",
    "gamma_grid",
    "lr",
    "iterations",
    "anneal_iters",
    "seeds",
    "bins",
    "out_dir",
    "log_stride",
];

/// Flag forms of the config keys. Long flag names match the file keys
/// byte for byte so a file line and a flag are interchangeable.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file ('#' lines are comments).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated environment parameters: SEM noise scales for `sem`,
    /// color-flip probabilities for `cls`/`trace`.
    #[arg(long = "envs")]
    pub envs: Option<String>,
    /// Invariant-feature dimension of the SEM task (inputs get 2d columns).
    #[arg(long = "d")]
    pub d: Option<String>,
    /// Training samples per environment.
    #[arg(long = "n_per_env")]
    pub n_per_env: Option<String>,
    /// Methods to run: `all` or a comma-separated subset of
    /// ERM,IRMv1,v-IRMv1,mm-IRMv1.
    #[arg(long = "method")]
    pub method: Option<String>,
    /// Penalty-weight grid for the penalized methods.
    #[arg(long = "lambda_grid")]
    pub lambda_grid: Option<String>,
    /// Weight lower-bound grid for mm-IRMv1.
    #[arg(long = "alpha_min_grid")]
    pub alpha_min_grid: Option<String>,
    /// Variance-weight grid for v-IRMv1.
    #[arg(long = "gamma_grid")]
    pub gamma_grid: Option<String>,
    /// Learning rate.
    #[arg(long = "lr")]
    pub lr: Option<String>,
    /// Full-batch update count per training run.
    #[arg(long = "iterations")]
    pub iterations: Option<String>,
    /// Leading iterations trained with the penalty weight forced to zero.
    #[arg(long = "anneal_iters")]
    pub anneal_iters: Option<String>,
    /// Comma-separated nonnegative seeds.
    #[arg(long = "seeds")]
    pub seeds: Option<String>,
    /// Calibration bin count for ECE/ACE.
    #[arg(long = "bins")]
    pub bins: Option<String>,
    /// Output directory (also settable via the IRMX_OUT env var).
    #[arg(long = "out_dir")]
    pub out_dir: Option<String>,
    /// Record every `log_stride`-th iteration in `trace`; must divide
    /// `iterations`.
    #[arg(long = "log_stride")]
    pub log_stride: Option<String>,
}

/// Fully resolved, validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Environment parameters (SEM scales or flip probabilities).
    pub envs: Vec<f64>,
    /// The textual env tokens, kept verbatim for the `env_set` CSV field.
    pub env_tokens: Vec<String>,
    pub d: usize,
    pub n_per_env: usize,
    pub methods: Vec<Method>,
    pub lambda_grid: Vec<f64>,
    pub alpha_min_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub lr: f64,
    pub iterations: u64,
    pub anneal_iters: u64,
    pub seeds: Vec<u64>,
    pub bins: usize,
    pub out_dir: PathBuf,
    pub log_stride: u64,
}

impl RunConfig {
    /// The `env_set` field written to result rows: the configured tokens
    /// joined with commas, e.g. `0.2,1`.
    pub fn env_set(&self) -> String {
        self.env_tokens.join(",")
    }
}

fn defaults(experiment: Experiment) -> BTreeMap<&'static str, &'static str> {
    let mut m = BTreeMap::new();
    m.insert("method", "all");
    m.insert("alpha_min_grid", "-1,-5,-10");
    m.insert("gamma_grid", "1,10,100");
    m.insert("seeds", "0,1,2");
    m.insert("bins", "15");
    m.insert("out_dir", "out");
    m.insert("log_stride", "1");
    m.insert("d", "5");
    match experiment {
        Experiment::Sem | Experiment::Check => {
            m.insert("envs", "0.2,2");
            m.insert("n_per_env", "1000");
            m.insert("lambda_grid", "1,10");
            m.insert("lr", "1e-3");
            m.insert("iterations", "20000");
            m.insert("anneal_iters", "0");
        }
        Experiment::Cls | Experiment::Trace => {
            m.insert("envs", "0.1,0.2");
            m.insert("n_per_env", "2000");
            m.insert("lambda_grid", "100,10000");
            m.insert("lr", "1e-2");
            m.insert("iterations", "500");
            m.insert("anneal_iters", "100");
            if experiment == Experiment::Trace {
                m.insert("method", "IRMv1,v-IRMv1,mm-IRMv1");
            }
        }
    }
    m
}

/// Parses a flat config file: one `key = value` per line, full-line `#`
/// comments, blank lines ignored. Unknown and duplicate keys are errors.
pub fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "{}:{}: expected `key = value`, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "{}:{}: unknown key {key:?}",
                path.display(),
                lineno + 1
            )));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(CliError::Config(format!(
                "{}:{}: duplicate key {key:?}",
                path.display(),
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn split_list(key: &str, value: &str) -> Result<Vec<String>, CliError> {
    let items: Vec<String> = value
        .split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if items.is_empty() {
        return Err(CliError::Config(format!("{key} must be a nonempty comma-separated list")));
    }
    Ok(items)
}

fn parse_f64(key: &str, token: &str) -> Result<f64, CliError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Config(format!("{key}: {token:?} is not a finite number")))
}

fn parse_u64(key: &str, token: &str) -> Result<u64, CliError> {
    token
        .parse::<u64>()
        .map_err(|_| CliError::Config(format!("{key}: {token:?} is not a nonnegative integer")))
}

fn parse_usize(key: &str, token: &str) -> Result<usize, CliError> {
    token
        .parse::<usize>()
        .map_err(|_| CliError::Config(format!("{key}: {token:?} is not a nonnegative integer")))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    split_list(key, value)?.iter().map(|t| parse_f64(key, t)).collect()
}

fn parse_methods(value: &str, experiment: Experiment) -> Result<Vec<Method>, CliError> {
    let requested: Vec<Method> = if value.trim() == "all" {
        METHOD_ORDER.to_vec()
    } else {
        split_list("method", value)?
            .iter()
            .map(|t| Method::parse(t))
            .collect::<Result<_, _>>()?
    };
    // canonical order, duplicates collapsed
    let methods: Vec<Method> =
        METHOD_ORDER.into_iter().filter(|m| requested.contains(m)).collect();
    if experiment == Experiment::Trace {
        if value.trim() == "all" {
            return Ok(methods.into_iter().filter(|&m| m != Method::Erm).collect());
        }
        if methods.contains(&Method::Erm) {
            return Err(CliError::Config(
                "trace runs the penalized methods only; ERM has no tail to compare".into(),
            ));
        }
    }
    Ok(methods)
}

/// Builds the effective configuration for `experiment` from flags, the
/// optional config file, and the `IRMX_OUT` override.
pub fn resolve(
    experiment: Experiment,
    args: &ConfigArgs,
    irmx_out: Option<String>,
) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => parse_file(path)?,
        None => BTreeMap::new(),
    };
    if let Some(exp) = file.get("experiment") {
        if exp != experiment.key() {
            return Err(CliError::Config(format!(
                "config file says experiment = {exp:?} but the {} command was invoked",
                experiment.key()
            )));
        }
    }
    let defaults = defaults(experiment);
    let pick = |flag_value: &Option<String>, key: &str| -> String {
        flag_value
            .clone()
            .or_else(|| file.get(key).cloned())
            .or_else(|| defaults.get(key).map(|s| s.to_string()))
            .unwrap_or_default()
    };

    let env_tokens = split_list("envs", &pick(&args.envs, "envs"))?;
    let envs: Vec<f64> =
        env_tokens.iter().map(|t| parse_f64("envs", t)).collect::<Result<_, _>>()?;
    let d = parse_usize("d", &pick(&args.d, "d"))?;
    let n_per_env = parse_usize("n_per_env", &pick(&args.n_per_env, "n_per_env"))?;
    let methods = parse_methods(&pick(&args.method, "method"), experiment)?;
    let lambda_grid = parse_f64_list("lambda_grid", &pick(&args.lambda_grid, "lambda_grid"))?;
    let alpha_min_grid =
        parse_f64_list("alpha_min_grid", &pick(&args.alpha_min_grid, "alpha_min_grid"))?;
    let gamma_grid = parse_f64_list("gamma_grid", &pick(&args.gamma_grid, "gamma_grid"))?;
    let lr = parse_f64("lr", &pick(&args.lr, "lr"))?;
    let iterations = parse_u64("iterations", &pick(&args.iterations, "iterations"))?;
    let anneal_iters = parse_u64("anneal_iters", &pick(&args.anneal_iters, "anneal_iters"))?;
    let seeds: Vec<u64> = split_list("seeds", &pick(&args.seeds, "seeds"))?
        .iter()
        .map(|t| parse_u64("seeds", t))
        .collect::<Result<_, _>>()?;
    let bins = parse_usize("bins", &pick(&args.bins, "bins"))?;
    let out_dir = PathBuf::from(pick(&args.out_dir.clone().or(irmx_out), "out_dir"));
    let log_stride = parse_u64("log_stride", &pick(&args.log_stride, "log_stride"))?;

    let cfg = RunConfig {
        experiment,
        envs,
        env_tokens,
        d,
        n_per_env,
        methods,
        lambda_grid,
        alpha_min_grid,
        gamma_grid,
        lr,
        iterations,
        anneal_iters,
        seeds,
        bins,
        out_dir,
        log_stride,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let fail = |msg: String| Err(CliError::Config(msg));
    if cfg.seeds.is_empty() {
        return fail("at least one seed is required".into());
    }
    if cfg.envs.is_empty() {
        return fail("at least one training environment is required".into());
    }
    if cfg.methods.is_empty() {
        return fail("at least one method is required".into());
    }
    if cfg.iterations == 0 {
        return fail("iterations must be >= 1".into());
    }
    if cfg.anneal_iters >= cfg.iterations {
        return fail(format!(
            "anneal_iters ({}) must be < iterations ({})",
            cfg.anneal_iters, cfg.iterations
        ));
    }
    if !(cfg.lr > 0.0) {
        return fail("lr must be positive".into());
    }
    if cfg.n_per_env < 2 {
        return fail("n_per_env must be >= 2 (the validation split needs both sides)".into());
    }
    if cfg.bins == 0 {
        return fail("bins must be >= 1".into());
    }
    if cfg.log_stride == 0 {
        return fail("log_stride must be >= 1".into());
    }
    match cfg.experiment {
        Experiment::Sem | Experiment::Check => {
            if cfg.d == 0 {
                return fail("d must be >= 1".into());
            }
            if cfg.envs.iter().any(|&e| e < 0.0) {
                return fail("SEM noise scales must be >= 0".into());
            }
        }
        Experiment::Cls | Experiment::Trace => {
            if cfg.envs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return fail("cls flip probabilities must lie in [0, 1]".into());
            }
        }
    }
    if cfg.experiment == Experiment::Trace && cfg.iterations % cfg.log_stride != 0 {
        return fail(format!(
            "log_stride ({}) must divide iterations ({})",
            cfg.log_stride, cfg.iterations
        ));
    }
    let needs_lambda = cfg.methods.iter().any(|&m| m != Method::Erm);
    if needs_lambda {
        if cfg.lambda_grid.is_empty() {
            return fail("lambda_grid must be nonempty for the penalized methods".into());
        }
        if cfg.lambda_grid.iter().any(|&l| l < 0.0) {
            return fail("lambda_grid values must be >= 0".into());
        }
    }
    if cfg.methods.contains(&Method::VIrmV1) && cfg.gamma_grid.iter().any(|&g| g < 0.0) {
        return fail("gamma_grid values must be >= 0".into());
    }
    if cfg.methods.contains(&Method::MmIrmV1) {
        let cap = 1.0 / cfg.envs.len() as f64;
        if cfg.alpha_min_grid.iter().any(|&a| a > cap) {
            return fail(format!(
                "alpha_min_grid values must be <= 1/{} for {} environments",
                cfg.envs.len(),
                cfg.envs.len()
            ));
        }
    }
    Ok(())
}
