//! Subcommand implementations: experiment execution and file emission.
//!
//! Every command is deterministic in its [`RunConfig`]: data, splits, and
//! model initializations all derive from the configured seeds through
//! fixed named streams, and outputs are written in one canonical order.

use crate::checks::{self, CheckReport, InjectedBug};
use crate::config::{Method, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_float, mean_std, write_csv, write_json};
use irmx_core::data::{generate_cls_env, generate_sem_env, EnvDataset, EnvSpec, CLS_INPUT_DIM};
use irmx_core::metrics::{
    accuracy, ace, causal_error, ece, noncausal_error, trace_tail, CalibrationInput, TailPoint,
};
use irmx_core::model::Model;
use irmx_core::penalty::{ExtrapolationParams, LossKind, PenaltyKind, PenaltySpec};
use irmx_core::rng::{streams, Rng};
use irmx_core::train::{
    grid_search, train, LogSpec, ModelSpec, ObjectiveConfig, OptimizerKind,
};
use irmx_core::CoreError;
use serde::Serialize;

/// Fraction of each environment held out for grid-search validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Starting weights for the regression experiments: all-ones, the point
/// whose invariant block already matches the generating coefficients.
/// From a zero start every penalized objective collapses onto the
/// all-zero predictor (the only point where the per-sample penalties
/// vanish) and the methods become indistinguishable.
pub const SEM_LINEAR_INIT: f64 = 1.0;

/// MLP shape for the classification analogue.
pub const CLS_DIMS: [usize; 4] = [CLS_INPUT_DIM, 16, 16, 1];
/// Color-flip probability and size of the held-out test environment.
pub const CLS_TEST_P: f64 = 0.9;
pub const CLS_TEST_N: usize = 10000;

/// How many logged tail iterations the trace command checkpoints.
pub const TRACE_TAIL: usize = 50;

/// The hyperparameter grid for one method. Order is deterministic:
/// lambda-major, then the method's extrapolation parameter.
pub fn build_grid(cfg: &RunConfig, method: Method, loss: LossKind) -> Vec<ObjectiveConfig> {
    let base = |penalty: PenaltySpec| ObjectiveConfig {
        penalty,
        loss,
        optimizer: OptimizerKind::Adam,
        learning_rate: cfg.lr,
        iterations: cfg.iterations,
        penalty_anneal_iters: cfg.anneal_iters,
    };
    let mut grid = Vec::new();
    match method {
        Method::Erm => grid.push(base(PenaltySpec::erm())),
        Method::IrmV1 => {
            for &lambda in &cfg.lambda_grid {
                grid.push(base(PenaltySpec {
                    kind: PenaltyKind::IrmV1,
                    lambda,
                    extrapolation: ExtrapolationParams::NONE,
                }));
            }
        }
        Method::MmIrmV1 => {
            for &lambda in &cfg.lambda_grid {
                for &alpha_min in &cfg.alpha_min_grid {
                    grid.push(base(PenaltySpec {
                        kind: PenaltyKind::Cmm,
                        lambda,
                        extrapolation: ExtrapolationParams { alpha_min, gamma: 0.0 },
                    }));
                }
            }
        }
        Method::VIrmV1 => {
            for &lambda in &cfg.lambda_grid {
                for &gamma in &cfg.gamma_grid {
                    grid.push(base(PenaltySpec {
                        kind: PenaltyKind::Cv,
                        lambda,
                        extrapolation: ExtrapolationParams { alpha_min: 0.0, gamma },
                    }));
                }
            }
        }
    }
    grid
}

/// The `(lambda, alpha_min, gamma)` triple reported for a winning config;
/// parameters a method does not use are reported as 0.
fn hyper_of(method: Method, cfg: &ObjectiveConfig) -> (f64, f64, f64) {
    match method {
        Method::Erm => (0.0, 0.0, 0.0),
        Method::IrmV1 => (cfg.penalty.lambda, 0.0, 0.0),
        Method::MmIrmV1 => (cfg.penalty.lambda, cfg.penalty.extrapolation.alpha_min, 0.0),
        Method::VIrmV1 => (cfg.penalty.lambda, 0.0, cfg.penalty.extrapolation.gamma),
    }
}

fn sem_envs_for_seed(cfg: &RunConfig, seed: u64) -> Result<Vec<EnvDataset>, CoreError> {
    cfg.envs
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            generate_sem_env(
                &EnvSpec::sem(e, cfg.n_per_env, cfg.d),
                &mut Rng::new(seed, streams::DATA + i as u64),
            )
        })
        .collect()
}

fn cls_envs_for_seed(cfg: &RunConfig, seed: u64) -> Result<(Vec<EnvDataset>, EnvDataset), CoreError> {
    let train_envs = cfg
        .envs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            generate_cls_env(
                &EnvSpec::cls(p, cfg.n_per_env),
                &mut Rng::new(seed, streams::DATA + i as u64),
            )
        })
        .collect::<Result<_, _>>()?;
    let test_env = generate_cls_env(
        &EnvSpec::cls(CLS_TEST_P, CLS_TEST_N),
        &mut Rng::new(seed, streams::EVAL),
    )?;
    Ok((train_envs, test_env))
}

/// Metrics of one completed regression run.
#[derive(Debug, Clone, PartialEq)]
pub struct SemResult {
    pub lambda: f64,
    pub alpha_min: f64,
    pub gamma: f64,
    pub causal_err: f64,
    pub noncausal_err: f64,
}

/// One `(method, seed)` row; `result` is None when every grid
/// configuration (or the final retrain) diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct SemRow {
    pub method: Method,
    pub seed: u64,
    pub result: Option<SemResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub seeds_completed: usize,
    pub seeds_diverged: usize,
    pub mean_causal_err: Option<f64>,
    pub std_causal_err: Option<f64>,
    pub mean_noncausal_err: Option<f64>,
    pub std_noncausal_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemSummary {
    pub experiment: &'static str,
    pub env_set: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone)]
pub struct SemOutput {
    pub rows: Vec<SemRow>,
    pub summary: SemSummary,
}

/// Regression benchmark: per (method, seed), grid-search on a validation
/// split, retrain the winner, and report invariant/spurious coefficient
/// errors. Writes `sem_results.csv` and `sem_summary.json`.
pub fn cmd_sem(cfg: &RunConfig) -> Result<SemOutput, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::io(&cfg.out_dir))?;
    let seed_envs: Vec<Vec<EnvDataset>> = cfg
        .seeds
        .iter()
        .map(|&seed| sem_envs_for_seed(cfg, seed))
        .collect::<Result<_, _>>()?;
    let model_spec = ModelSpec::Linear { dim: 2 * cfg.d, init: SEM_LINEAR_INIT };
    let log = LogSpec::final_only(cfg.iterations);

    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let grid = build_grid(cfg, method, LossKind::SquaredError);
        for (si, &seed) in cfg.seeds.iter().enumerate() {
            let outcome =
                grid_search(&seed_envs[si], &grid, VALIDATION_FRACTION, &model_spec, seed, &log);
            let result = match outcome {
                Ok(out) => {
                    let Model::Linear(lm) = &out.report.model else {
                        return Err(CliError::Config(
                            "regression training produced a non-linear model".into(),
                        ));
                    };
                    let (lambda, alpha_min, gamma) = hyper_of(method, &out.best);
                    Some(SemResult {
                        lambda,
                        alpha_min,
                        gamma,
                        causal_err: causal_error(lm, cfg.d)?,
                        noncausal_err: noncausal_error(lm, cfg.d)?,
                    })
                }
                Err(CoreError::AllConfigsDiverged) | Err(CoreError::Diverged { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            rows.push(SemRow { method, seed, result });
        }
    }

    let env_set = cfg.env_set();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut fields =
                vec![row.method.name().to_string(), env_set.clone(), row.seed.to_string()];
            match &row.result {
                Some(r) => fields.extend([
                    fmt_float(r.lambda),
                    fmt_float(r.alpha_min),
                    fmt_float(r.gamma),
                    fmt_float(r.causal_err),
                    fmt_float(r.noncausal_err),
                ]),
                // divergence flag: hyperparameters and metrics left empty
                None => fields.extend(std::iter::repeat(String::new()).take(5)),
            }
            fields
        })
        .collect();
    let csv_path = cfg.out_dir.join("sem_results.csv");
    write_csv(
        &csv_path,
        &["method", "env_set", "seed", "lambda", "alpha_min", "gamma", "causal_err", "noncausal_err"],
        &csv_rows,
    )?;

    let methods = cfg
        .methods
        .iter()
        .map(|&m| {
            let done: Vec<&SemResult> = rows
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.result.as_ref())
                .collect();
            let diverged = rows.iter().filter(|r| r.method == m && r.result.is_none()).count();
            let causal = mean_std(&done.iter().map(|r| r.causal_err).collect::<Vec<_>>());
            let noncausal = mean_std(&done.iter().map(|r| r.noncausal_err).collect::<Vec<_>>());
            MethodSummary {
                method: m.name().to_string(),
                seeds_completed: done.len(),
                seeds_diverged: diverged,
                mean_causal_err: causal.map(|v| v.0),
                std_causal_err: causal.map(|v| v.1),
                mean_noncausal_err: noncausal.map(|v| v.0),
                std_noncausal_err: noncausal.map(|v| v.1),
            }
        })
        .collect();
    let summary = SemSummary { experiment: "sem", env_set, seeds: cfg.seeds.clone(), methods };
    let summary_path = cfg.out_dir.join("sem_summary.json");
    write_json(&summary_path, &summary)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", summary_path.display());

    if rows.iter().all(|r| r.result.is_none()) {
        return Err(CliError::AllRunsDiverged);
    }
    Ok(SemOutput { rows, summary })
}

/// Metrics of one completed classification run (the selected
/// hyperparameters are kept for inspection; the CSV carries metrics only).
#[derive(Debug, Clone, PartialEq)]
pub struct ClsResult {
    pub lambda: f64,
    pub alpha_min: f64,
    pub gamma: f64,
    pub test_acc: f64,
    pub test_ece: f64,
    pub test_ace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClsRow {
    pub method: Method,
    pub seed: u64,
    pub result: Option<ClsResult>,
}

#[derive(Debug, Clone)]
pub struct ClsOutput {
    pub rows: Vec<ClsRow>,
}

/// Classification analogue: train on low-flip environments, evaluate
/// accuracy and calibration on the inverted test environment. Writes
/// `cls_results.csv`.
pub fn cmd_cls(cfg: &RunConfig) -> Result<ClsOutput, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::io(&cfg.out_dir))?;
    let seed_data: Vec<(Vec<EnvDataset>, EnvDataset)> = cfg
        .seeds
        .iter()
        .map(|&seed| cls_envs_for_seed(cfg, seed))
        .collect::<Result<_, _>>()?;
    let model_spec = ModelSpec::Mlp { dims: CLS_DIMS.to_vec() };
    let log = LogSpec::final_only(cfg.iterations);

    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let grid = build_grid(cfg, method, LossKind::BinaryCrossEntropyWithLogit);
        for (si, &seed) in cfg.seeds.iter().enumerate() {
            let (train_envs, test_env) = &seed_data[si];
            let outcome =
                grid_search(train_envs, &grid, VALIDATION_FRACTION, &model_spec, seed, &log);
            let result = match outcome {
                Ok(out) => {
                    let logits = out.report.model.forward(&test_env.x)?;
                    let calib = CalibrationInput::from_logits(&logits, &test_env.y)?;
                    let (lambda, alpha_min, gamma) = hyper_of(method, &out.best);
                    Some(ClsResult {
                        lambda,
                        alpha_min,
                        gamma,
                        test_acc: accuracy(&logits, &test_env.y)?,
                        test_ece: ece(&calib, cfg.bins)?,
                        test_ace: ace(&calib, cfg.bins)?,
                    })
                }
                Err(CoreError::AllConfigsDiverged) | Err(CoreError::Diverged { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            rows.push(ClsRow { method, seed, result });
        }
    }

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut fields = vec![row.method.name().to_string(), row.seed.to_string()];
            match &row.result {
                Some(r) => fields.extend([
                    fmt_float(r.test_acc),
                    fmt_float(r.test_ece),
                    fmt_float(r.test_ace),
                ]),
                None => fields.extend(std::iter::repeat(String::new()).take(3)),
            }
            fields
        })
        .collect();
    let csv_path = cfg.out_dir.join("cls_results.csv");
    write_csv(&csv_path, &["method", "seed", "test_acc", "test_ece", "test_ace"], &csv_rows)?;
    println!("wrote {}", csv_path.display());

    if rows.iter().all(|r| r.result.is_none()) {
        return Err(CliError::AllRunsDiverged);
    }
    Ok(ClsOutput { rows })
}

#[derive(Debug, Clone)]
pub struct TraceOutput {
    /// `(method, seed, tail point)` in canonical order.
    pub rows: Vec<(Method, u64, TailPoint)>,
}

/// Training-tail comparison on the classification task: each penalized
/// method trains once with the first grid entry's hyperparameters, and
/// the last [`TRACE_TAIL`] logged iterations are scored on the test
/// environment. Writes `trace.csv`.
pub fn cmd_trace(cfg: &RunConfig) -> Result<TraceOutput, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::io(&cfg.out_dir))?;
    let seed_data: Vec<(Vec<EnvDataset>, EnvDataset)> = cfg
        .seeds
        .iter()
        .map(|&seed| cls_envs_for_seed(cfg, seed))
        .collect::<Result<_, _>>()?;
    let model_spec = ModelSpec::Mlp { dims: CLS_DIMS.to_vec() };
    let log = LogSpec { stride: cfg.log_stride, checkpoint_tail: TRACE_TAIL };

    let mut rows = Vec::new();
    let mut attempted = 0usize;
    let mut diverged = 0usize;
    for &method in &cfg.methods {
        let objective = build_grid(cfg, method, LossKind::BinaryCrossEntropyWithLogit)
            .into_iter()
            .next()
            .expect("validated nonempty grid");
        for (si, &seed) in cfg.seeds.iter().enumerate() {
            attempted += 1;
            let (train_envs, test_env) = &seed_data[si];
            let init = model_spec.init(&mut Rng::new(seed, streams::FINAL_INIT))?;
            match train(init, train_envs, &objective, &log) {
                Ok(report) => {
                    let k = TRACE_TAIL.min(report.trace.len());
                    for point in trace_tail(&report, k, test_env, cfg.bins)? {
                        rows.push((method, seed, point));
                    }
                }
                Err(CoreError::Diverged { .. }) => diverged += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(method, seed, p)| {
            vec![
                method.name().to_string(),
                seed.to_string(),
                p.iteration.to_string(),
                fmt_float(p.train_j),
                fmt_float(p.test_acc),
                fmt_float(p.test_ece),
                fmt_float(p.test_ace),
            ]
        })
        .collect();
    let csv_path = cfg.out_dir.join("trace.csv");
    write_csv(
        &csv_path,
        &["method", "seed", "iter", "train_J", "test_acc", "test_ece", "test_ace"],
        &csv_rows,
    )?;
    println!("wrote {}", csv_path.display());

    if diverged == attempted {
        return Err(CliError::AllRunsDiverged);
    }
    Ok(TraceOutput { rows })
}

/// Runs the property suite, prints one line per property, and writes
/// `check_report.json`. Fails (exit 1) iff any property fails.
pub fn cmd_check(cfg: &RunConfig, inject: Option<InjectedBug>) -> Result<CheckReport, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::io(&cfg.out_dir))?;
    let report = checks::run_all(cfg.seeds[0], inject);
    for p in &report.properties {
        println!(
            "{} {}: {} cases, max discrepancy {:e}",
            if p.pass { "PASS" } else { "FAIL" },
            p.name,
            p.cases,
            p.max_discrepancy
        );
    }
    let path = cfg.out_dir.join("check_report.json");
    write_json(&path, &report)?;
    println!("wrote {}", path.display());
    if !report.all_pass {
        let failed = report.properties.iter().filter(|p| !p.pass).count();
        return Err(CliError::PropertiesFailed { failed, total: report.properties.len() });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, METHOD_ORDER};
    use std::path::PathBuf;

    fn tiny_sem_config(out_dir: PathBuf) -> RunConfig {
        RunConfig {
            experiment: Experiment::Sem,
            envs: vec![0.2, 1.0],
            env_tokens: vec!["0.2".into(), "1".into()],
            d: 2,
            n_per_env: 40,
            methods: METHOD_ORDER.to_vec(),
            lambda_grid: vec![1.0],
            alpha_min_grid: vec![-1.0],
            gamma_grid: vec![10.0],
            lr: 1e-3,
            iterations: 25,
            anneal_iters: 0,
            seeds: vec![0, 1],
            bins: 15,
            out_dir,
            log_stride: 1,
        }
    }

    #[test]
    fn grid_shapes_follow_method() {
        let cfg = RunConfig {
            lambda_grid: vec![1.0, 10.0],
            alpha_min_grid: vec![-1.0, -5.0, -10.0],
            gamma_grid: vec![1.0, 10.0, 100.0],
            ..tiny_sem_config(PathBuf::from("unused"))
        };
        assert_eq!(build_grid(&cfg, Method::Erm, LossKind::SquaredError).len(), 1);
        assert_eq!(build_grid(&cfg, Method::IrmV1, LossKind::SquaredError).len(), 2);
        let mm = build_grid(&cfg, Method::MmIrmV1, LossKind::SquaredError);
        assert_eq!(mm.len(), 6);
        // lambda-major order with the first entry at (lambda[0], alpha[0])
        assert_eq!(mm[0].penalty.lambda, 1.0);
        assert_eq!(mm[0].penalty.extrapolation.alpha_min, -1.0);
        assert_eq!(mm[1].penalty.extrapolation.alpha_min, -5.0);
        assert_eq!(mm[3].penalty.lambda, 10.0);
        let v = build_grid(&cfg, Method::VIrmV1, LossKind::SquaredError);
        assert_eq!(v.len(), 6);
        assert_eq!(v[0].penalty.extrapolation.gamma, 1.0);
    }

    #[test]
    fn hyper_reporting_zeroes_unused_parameters() {
        let cfg = tiny_sem_config(PathBuf::from("unused"));
        let mm = &build_grid(&cfg, Method::MmIrmV1, LossKind::SquaredError)[0];
        assert_eq!(hyper_of(Method::MmIrmV1, mm), (1.0, -1.0, 0.0));
        let v = &build_grid(&cfg, Method::VIrmV1, LossKind::SquaredError)[0];
        assert_eq!(hyper_of(Method::VIrmV1, v), (1.0, 0.0, 10.0));
        let erm = &build_grid(&cfg, Method::Erm, LossKind::SquaredError)[0];
        assert_eq!(hyper_of(Method::Erm, erm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sem_command_writes_one_row_per_method_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_sem_config(dir.path().to_path_buf());
        let out = cmd_sem(&cfg).unwrap();
        assert_eq!(out.rows.len(), 8);
        assert!(out.rows.iter().all(|r| r.result.is_some()));
        let text = std::fs::read_to_string(dir.path().join("sem_results.csv")).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("method,env_set,seed,"));
        assert!(text.contains("ERM,\"0.2,1\",0,"));
        assert!(dir.path().join("sem_summary.json").exists());
        // method-major canonical order
        assert_eq!(out.rows[0].method, Method::Erm);
        assert_eq!(out.rows[2].method, Method::IrmV1);
    }

    #[test]
    fn trace_rows_carry_the_requested_tail() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            experiment: Experiment::Trace,
            envs: vec![0.1, 0.2],
            env_tokens: vec!["0.1".into(), "0.2".into()],
            d: 5,
            n_per_env: 60,
            methods: vec![Method::IrmV1, Method::VIrmV1],
            lambda_grid: vec![10.0],
            alpha_min_grid: vec![-1.0],
            gamma_grid: vec![1.0],
            lr: 1e-2,
            iterations: 30,
            anneal_iters: 5,
            seeds: vec![0],
            bins: 5,
            out_dir: dir.path().to_path_buf(),
            log_stride: 10,
        };
        let out = cmd_trace(&cfg).unwrap();
        // 30 iterations at stride 10 log 3 rows, all within the tail of 50
        assert_eq!(out.rows.len(), 6);
        let iters: Vec<u64> = out.rows.iter().map(|(_, _, p)| p.iteration).collect();
        assert_eq!(iters, vec![10, 20, 30, 10, 20, 30]);
        let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert!(text.starts_with("method,seed,iter,train_J,"));
        assert_eq!(text.lines().count(), 7);
    }
}
