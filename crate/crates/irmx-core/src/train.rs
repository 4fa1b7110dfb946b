//! Full-batch training and grid search with validation-split selection.
//!
//! A training run is a dependent chain of full-batch updates on one
//! objective; everything is deterministic given `(envs, config, seed)`.
//! Grid search trains every configuration on a per-environment train split,
//! scores each on held-out validation risk, picks the minimizer (ties break
//! toward earlier grid entries, diverged runs are disqualified), and
//! retrains the winner on the full data.

use crate::data::EnvDataset;
use crate::model::{MlpModel, Model};
use crate::penalty::{self, LossKind, PenaltySpec};
use crate::rng::{streams, Rng};
use crate::{CoreError, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Update rule for the full-batch steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain gradient descent: `theta -= lr * grad`.
    GradientDescent,
    /// Adam with the standard moment constants (0.9, 0.999, 1e-8).
    Adam,
}

/// Everything that defines one training objective and its optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub penalty: PenaltySpec,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub iterations: u64,
    /// The effective penalty weight is 0 for this many leading iterations.
    pub penalty_anneal_iters: u64,
}

impl ObjectiveConfig {
    fn validate(&self, n_envs: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(CoreError::InvalidArgument("iterations must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(CoreError::InvalidArgument("learning_rate must be positive and finite"));
        }
        if self.penalty_anneal_iters >= self.iterations {
            return Err(CoreError::InvalidArgument("penalty_anneal_iters must be < iterations"));
        }
        if n_envs == 0 {
            return Err(CoreError::InvalidArgument("need at least one environment"));
        }
        // surface infeasible extrapolation parameters before training starts
        if self.penalty.kind == crate::penalty::PenaltyKind::Cmm
            && self.penalty.extrapolation.alpha_min > 1.0 / n_envs as f64
        {
            return Err(CoreError::InfeasibleAlphaMin {
                alpha_min: self.penalty.extrapolation.alpha_min,
                n_envs,
            });
        }
        Ok(())
    }

    /// The penalty spec in effect at 1-indexed step `step`.
    fn effective(&self, step: u64) -> PenaltySpec {
        let mut spec = self.penalty;
        if step <= self.penalty_anneal_iters {
            spec.lambda = 0.0;
        }
        spec
    }
}

/// How a model is (re)initialized for a training run.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Bias-free linear model with every weight set to `init`.
    ///
    /// The regression experiments start at `init = 1.0`, the point whose
    /// invariant block already matches the generating coefficients; with a
    /// zero start every penalized run collapses onto the all-zero predictor
    /// and the methods become indistinguishable.
    Linear { dim: usize, init: f64 },
    /// Seeded MLP: weights `~ N(0, 1/fan_in)`, biases zero.
    Mlp { dims: Vec<usize> },
}

impl ModelSpec {
    /// Builds the initial model; `rng` is only consumed for MLP weights.
    pub fn init(&self, rng: &mut Rng) -> Result<Model> {
        match self {
            ModelSpec::Linear { dim, init } => {
                if !init.is_finite() {
                    return Err(CoreError::InvalidArgument("linear init must be finite"));
                }
                let mut model = crate::model::LinearModel::zeros(*dim, false);
                model.w.iter_mut().for_each(|w| *w = *init);
                Ok(Model::Linear(model))
            }
            ModelSpec::Mlp { dims } => Ok(Model::Mlp(MlpModel::seeded(dims, rng)?)),
        }
    }
}

/// One logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-indexed update count after which this state was reached.
    pub iteration: u64,
    /// Per-environment risks at this state.
    pub risks: Vec<f64>,
    /// Per-environment penalties `J_e` at this state.
    pub js: Vec<f64>,
    /// Objective value at this state under the penalty weight in effect for
    /// the *next* update (so rows logged during annealing show the pure-risk
    /// objective actually being optimized).
    pub objective: f64,
}

/// Logging controls for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogSpec {
    /// Record every `stride`-th iteration; must divide `iterations`.
    pub stride: u64,
    /// Keep model snapshots for this many most recent logged iterations.
    pub checkpoint_tail: usize,
}

impl LogSpec {
    /// Log only the final iteration, no checkpoints.
    pub fn final_only(iterations: u64) -> Self {
        LogSpec { stride: iterations, checkpoint_tail: 0 }
    }
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: Model,
    pub trace: Vec<TraceRow>,
    /// `(iteration, model)` snapshots for the last `checkpoint_tail` logged
    /// iterations, oldest first.
    pub checkpoints: Vec<(u64, Model)>,
    /// Objective value at the final state (full penalty weight).
    pub final_objective: f64,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pow_b1: f64,
    pow_b2: f64,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], pow_b1: 1.0, pow_b2: 1.0 }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.pow_b1 *= ADAM_B1;
        self.pow_b2 *= ADAM_B2;
        let c1 = 1.0 - self.pow_b1;
        let c2 = 1.0 - self.pow_b2;
        for k in 0..theta.len() {
            self.m[k] = ADAM_B1 * self.m[k] + (1.0 - ADAM_B1) * grad[k];
            self.v[k] = ADAM_B2 * self.v[k] + (1.0 - ADAM_B2) * grad[k] * grad[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            theta[k] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
        }
    }
}

/// Trains `init` on `envs` under `cfg`, logging per `log`.
///
/// Iterations are 1-indexed; the state after step `t` is logged when
/// `t % log.stride == 0`, so with `stride = 1` the trace has `iterations`
/// rows and the last row always describes the returned model.
pub fn train(
    init: Model,
    envs: &[EnvDataset],
    cfg: &ObjectiveConfig,
    log: &LogSpec,
) -> Result<TrainReport> {
    cfg.validate(envs.len())?;
    if log.stride == 0 || cfg.iterations % log.stride != 0 {
        return Err(CoreError::InvalidArgument("log stride must divide iterations"));
    }

    let mut model = init;
    let mut theta = model.to_params();
    let mut adam = AdamState::new(theta.len());
    let mut trace = Vec::with_capacity((cfg.iterations / log.stride) as usize);
    let mut checkpoints: Vec<(u64, Model)> = Vec::new();

    let mut ev = penalty::objective_eval(&model, envs, cfg.loss, &cfg.effective(1))?;
    if !ev.value.is_finite() {
        return Err(CoreError::Diverged { iteration: 0 });
    }
    for step in 1..=cfg.iterations {
        match cfg.optimizer {
            OptimizerKind::GradientDescent => {
                for (t, g) in theta.iter_mut().zip(&ev.grad) {
                    *t -= cfg.learning_rate * g;
                }
            }
            OptimizerKind::Adam => adam.step(&mut theta, &ev.grad, cfg.learning_rate),
        }
        model.set_params(&theta)?;
        // evaluate the new state under the penalty weight of the next step
        // (or the full weight after the last step)
        ev = penalty::objective_eval(&model, envs, cfg.loss, &cfg.effective(step + 1))?;
        if !ev.value.is_finite() {
            return Err(CoreError::Diverged { iteration: step });
        }
        if step % log.stride == 0 {
            trace.push(TraceRow {
                iteration: step,
                risks: ev.risks.clone(),
                js: ev.js.clone(),
                objective: ev.value,
            });
            if log.checkpoint_tail > 0 {
                checkpoints.push((step, model.clone()));
                if checkpoints.len() > log.checkpoint_tail {
                    checkpoints.remove(0);
                }
            }
        }
    }
    Ok(TrainReport { model, trace, checkpoints, final_objective: ev.value })
}

/// Validation scores of one grid configuration; `None` means the run
/// diverged and is disqualified.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigScore {
    /// Mean held-out risk over environments (the selection score).
    pub val_risk: Option<f64>,
    /// Alternative score for inspection: held-out risk sum plus the
    /// lambda-weighted penalty computed on the held-out data.
    pub val_objective: Option<f64>,
}

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchReport {
    /// Index of the winning configuration in the input grid.
    pub best_index: usize,
    pub best: ObjectiveConfig,
    /// Report of the winner retrained on the full data.
    pub report: TrainReport,
    /// Scores for every configuration, in grid order.
    pub scores: Vec<ConfigScore>,
}

/// Splits each environment deterministically: a seeded shuffle of indices,
/// then the first `round(fraction * n)` (clamped to keep both sides
/// nonempty) become validation rows.
fn split_envs(
    envs: &[EnvDataset],
    fraction: f64,
    base_seed: u64,
) -> (Vec<EnvDataset>, Vec<EnvDataset>) {
    let mut train_envs = Vec::with_capacity(envs.len());
    let mut val_envs = Vec::with_capacity(envs.len());
    for (i, env) in envs.iter().enumerate() {
        let n = env.n();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = Rng::new(base_seed, streams::SPLIT + i as u64);
        for k in (1..n).rev() {
            let j = rng.next_below(k as u64 + 1) as usize;
            idx.swap(k, j);
        }
        let n_val = libm::round(fraction * n as f64) as usize;
        let n_val = n_val.clamp(1, n - 1);
        val_envs.push(env.subset(&idx[..n_val]));
        train_envs.push(env.subset(&idx[n_val..]));
    }
    (train_envs, val_envs)
}

/// Trains every configuration on the train split, scores on held-out
/// validation risk, and retrains the winner on the full data.
///
/// Model initialization streams are derived from `base_seed`: one stream per
/// grid configuration, plus a dedicated stream for the final retrain.
pub fn grid_search(
    envs: &[EnvDataset],
    grid: &[ObjectiveConfig],
    validation_fraction: f64,
    model_spec: &ModelSpec,
    base_seed: u64,
    log: &LogSpec,
) -> Result<GridSearchReport> {
    if grid.is_empty() {
        return Err(CoreError::InvalidArgument("grid must be nonempty"));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(CoreError::InvalidArgument("validation fraction must lie in (0, 1)"));
    }
    let (train_envs, val_envs) = split_envs(envs, validation_fraction, base_seed);

    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (ci, cfg) in grid.iter().enumerate() {
        let mut rng = Rng::new(base_seed, streams::GRID_INIT + ci as u64);
        let init = model_spec.init(&mut rng)?;
        let outcome = train(init, &train_envs, cfg, &LogSpec::final_only(cfg.iterations));
        let score = match outcome {
            Ok(report) => {
                let mut risk_sum = 0.0;
                for env in &val_envs {
                    risk_sum += penalty::risk(&report.model, env, cfg.loss)?;
                }
                let val_risk = risk_sum / val_envs.len() as f64;
                let pen = penalty::penalty_value(
                    &report.model,
                    &val_envs,
                    cfg.loss,
                    cfg.penalty.kind,
                    &cfg.penalty.extrapolation,
                )?;
                let val_objective = risk_sum + cfg.penalty.lambda * pen;
                if val_risk.is_finite() {
                    ConfigScore { val_risk: Some(val_risk), val_objective: Some(val_objective) }
                } else {
                    ConfigScore { val_risk: None, val_objective: None }
                }
            }
            Err(CoreError::Diverged { .. }) => ConfigScore { val_risk: None, val_objective: None },
            Err(e) => return Err(e),
        };
        if let Some(v) = score.val_risk {
            // strict inequality: ties keep the earlier grid entry
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((ci, v));
            }
        }
        scores.push(score);
    }
    let (best_index, _) = best.ok_or(CoreError::AllConfigsDiverged)?;
    let best_cfg = grid[best_index].clone();
    let mut rng = Rng::new(base_seed, streams::FINAL_INIT);
    let init = model_spec.init(&mut rng)?;
    let report = train(init, envs, &best_cfg, log)?;
    Ok(GridSearchReport { best_index, best: best_cfg, report, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_sem_env, EnvSpec};
    use crate::oracle::least_squares_fit;
    use crate::penalty::{ExtrapolationParams, PenaltyKind};

    fn sem_envs(e_values: &[f64], n: usize, d: usize, seed: u64) -> Vec<EnvDataset> {
        e_values
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                generate_sem_env(&EnvSpec::sem(e, n, d), &mut Rng::new(seed, streams::DATA + i as u64))
                    .unwrap()
            })
            .collect()
    }

    fn erm_cfg(iterations: u64, lr: f64) -> ObjectiveConfig {
        ObjectiveConfig {
            penalty: PenaltySpec::erm(),
            loss: LossKind::SquaredError,
            optimizer: OptimizerKind::GradientDescent,
            learning_rate: lr,
            iterations,
            penalty_anneal_iters: 0,
        }
    }

    #[test]
    fn zero_iterations_rejected_one_iteration_is_single_step() {
        let envs = sem_envs(&[0.5], 32, 2, 1);
        let spec = ModelSpec::Linear { dim: 4, init: 0.0 };
        let init = spec.init(&mut Rng::new(0, 0)).unwrap();
        assert!(train(init.clone(), &envs, &erm_cfg(0, 1e-3), &LogSpec::final_only(1)).is_err());

        let cfg = erm_cfg(1, 1e-3);
        let report = train(init.clone(), &envs, &cfg, &LogSpec::final_only(1)).unwrap();
        let (_, grad) =
            penalty::objective(&init, &envs, LossKind::SquaredError, &PenaltySpec::erm()).unwrap();
        let got = report.model.to_params();
        let init_p = init.to_params();
        for k in 0..got.len() {
            let want = init_p[k] - 1e-3 * grad[k];
            assert!((got[k] - want).abs() <= 1e-15, "coord {k}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let envs = sem_envs(&[0.2, 1.0], 64, 2, 3);
        let cfg = ObjectiveConfig {
            penalty: PenaltySpec {
                kind: PenaltyKind::Cv,
                lambda: 1.0,
                extrapolation: ExtrapolationParams { alpha_min: 0.0, gamma: 10.0 },
            },
            loss: LossKind::SquaredError,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            iterations: 200,
            penalty_anneal_iters: 0,
        };
        let spec = ModelSpec::Linear { dim: 4, init: 0.0 };
        let log = LogSpec { stride: 50, checkpoint_tail: 2 };
        let a = train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &log).unwrap();
        let b = train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &log).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_stride_and_checkpoints() {
        let envs = sem_envs(&[0.5], 32, 2, 5);
        let cfg = erm_cfg(10, 1e-3);
        let log = LogSpec { stride: 5, checkpoint_tail: 8 };
        let spec = ModelSpec::Linear { dim: 4, init: 0.0 };
        let report = train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &log).unwrap();
        assert_eq!(report.trace.len(), 2);
        assert_eq!(report.trace[0].iteration, 5);
        assert_eq!(report.trace[1].iteration, 10);
        assert_eq!(report.checkpoints.len(), 2);
        // final checkpoint is the returned model
        assert_eq!(report.checkpoints[1].1, report.model);
        // stride must divide iterations
        let bad = LogSpec { stride: 3, checkpoint_tail: 0 };
        assert!(train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &bad).is_err());
    }

    #[test]
    fn erm_objective_is_nonincreasing_under_gd() {
        let envs = sem_envs(&[0.2, 2.0], 128, 5, 7);
        let cfg = erm_cfg(500, 1e-3);
        let log = LogSpec { stride: 1, checkpoint_tail: 0 };
        let spec = ModelSpec::Linear { dim: 10, init: 0.0 };
        let report = train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &log).unwrap();
        assert_eq!(report.trace.len(), 500);
        for w in report.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
    }

    #[test]
    fn erm_reaches_the_least_squares_fixed_point() {
        // reduced-size version of the convergence contract (the acceptance
        // suite runs the full protocol)
        let envs = sem_envs(&[0.2, 2.0], 250, 5, 11);
        let cfg = erm_cfg(8000, 1e-3);
        let spec = ModelSpec::Linear { dim: 10, init: 0.0 };
        let report =
            train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &LogSpec::final_only(8000))
                .unwrap();
        let oracle = least_squares_fit(&envs).unwrap();
        let got = report.model.to_params();
        for k in 0..10 {
            assert!(
                (got[k] - oracle.w[k]).abs() <= 1e-3,
                "coord {k}: {} vs {}",
                got[k],
                oracle.w[k]
            );
        }
    }

    #[test]
    fn huge_lambda_drives_j_penalties_to_zero() {
        let envs = sem_envs(&[0.2, 1.0], 200, 5, 13);
        let cfg = ObjectiveConfig {
            penalty: PenaltySpec {
                kind: PenaltyKind::Cv,
                lambda: 1e8,
                extrapolation: ExtrapolationParams { alpha_min: 0.0, gamma: 1.0 },
            },
            loss: LossKind::SquaredError,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            iterations: 2000,
            penalty_anneal_iters: 0,
        };
        let spec = ModelSpec::Linear { dim: 10, init: 0.0 };
        let report =
            train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &LogSpec::final_only(2000))
                .unwrap();
        let last = report.trace.last().unwrap();
        for (i, &j) in last.js.iter().enumerate() {
            assert!(j < 1e-4, "env {i}: J = {j}");
        }
    }

    #[test]
    fn gd_with_huge_penalty_weight_reports_divergence() {
        let envs = sem_envs(&[0.2, 1.0], 100, 5, 17);
        let cfg = ObjectiveConfig {
            penalty: PenaltySpec {
                kind: PenaltyKind::JIrmV1,
                lambda: 1e8,
                extrapolation: ExtrapolationParams::NONE,
            },
            loss: LossKind::SquaredError,
            optimizer: OptimizerKind::GradientDescent,
            learning_rate: 1e-3,
            iterations: 1000,
            penalty_anneal_iters: 0,
        };
        let spec = ModelSpec::Linear { dim: 10, init: 0.0 };
        let err = train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &LogSpec::final_only(1000))
            .unwrap_err();
        assert!(matches!(err, CoreError::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn annealing_with_full_cover_matches_erm() {
        let envs = sem_envs(&[0.2, 1.0], 64, 2, 19);
        let spec = ModelSpec::Linear { dim: 4, init: 0.0 };
        let mut cfg = ObjectiveConfig {
            penalty: PenaltySpec {
                kind: PenaltyKind::JIrmV1,
                lambda: 1.0,
                extrapolation: ExtrapolationParams::NONE,
            },
            loss: LossKind::SquaredError,
            optimizer: OptimizerKind::GradientDescent,
            learning_rate: 1e-3,
            iterations: 100,
            penalty_anneal_iters: 99,
        };
        let log = LogSpec { stride: 1, checkpoint_tail: 2 };
        let annealed =
            train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &log).unwrap();
        let penalized = cfg.penalty;
        cfg.penalty = PenaltySpec::erm();
        cfg.penalty_anneal_iters = 0;
        let erm = train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &log).unwrap();
        // the first 99 steps are bit-identical to plain ERM
        assert_eq!(annealed.checkpoints[0].0, 99);
        assert_eq!(annealed.checkpoints[0].1, erm.checkpoints[0].1);
        // step 100 applies the penalty, so the final models differ
        assert_ne!(annealed.model, erm.model);
        // anneal >= iterations is rejected
        cfg.penalty = penalized;
        cfg.penalty_anneal_iters = 100;
        assert!(train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &LogSpec::final_only(100))
            .is_err());
    }

    #[test]
    fn grid_of_one_returns_that_config() {
        let envs = sem_envs(&[0.2, 1.0], 64, 2, 23);
        let grid = vec![erm_cfg(50, 1e-3)];
        let out = grid_search(&envs, &grid, 0.2, &ModelSpec::Linear { dim: 4, init: 0.0 }, 0, &LogSpec::final_only(50))
            .unwrap();
        assert_eq!(out.best_index, 0);
        assert_eq!(out.best, grid[0]);
        assert_eq!(out.scores.len(), 1);
        assert!(out.scores[0].val_risk.is_some());
    }

    #[test]
    fn diverged_config_is_disqualified() {
        let envs = sem_envs(&[0.2, 1.0], 64, 2, 29);
        let diverging = ObjectiveConfig {
            penalty: PenaltySpec {
                kind: PenaltyKind::JIrmV1,
                lambda: 1e8,
                extrapolation: ExtrapolationParams::NONE,
            },
            loss: LossKind::SquaredError,
            optimizer: OptimizerKind::GradientDescent,
            learning_rate: 1e-3,
            iterations: 500,
            penalty_anneal_iters: 0,
        };
        let grid = vec![diverging.clone(), erm_cfg(500, 1e-3)];
        let out = grid_search(&envs, &grid, 0.2, &ModelSpec::Linear { dim: 4, init: 0.0 }, 1, &LogSpec::final_only(500))
            .unwrap();
        assert_eq!(out.best_index, 1);
        assert_eq!(out.scores[0].val_risk, None);
        // all-diverged grids error out
        let err = grid_search(
            &envs,
            &[diverging],
            0.2,
            &ModelSpec::Linear { dim: 4, init: 0.0 },
            1,
            &LogSpec::final_only(500),
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::AllConfigsDiverged));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let envs = sem_envs(&[0.2], 32, 2, 31);
        assert!(grid_search(&envs, &[], 0.2, &ModelSpec::Linear { dim: 4, init: 0.0 }, 0, &LogSpec::final_only(1))
            .is_err());
    }

    #[test]
    fn validation_split_is_deterministic_and_proportioned() {
        let envs = sem_envs(&[0.2, 1.0], 100, 2, 37);
        let (tr1, va1) = split_envs(&envs, 0.2, 5);
        let (tr2, va2) = split_envs(&envs, 0.2, 5);
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        for (t, v) in tr1.iter().zip(&va1) {
            assert_eq!(t.n(), 80);
            assert_eq!(v.n(), 20);
        }
        // different seed, different split
        let (tr3, _) = split_envs(&envs, 0.2, 6);
        assert_ne!(tr1, tr3);
    }

    #[test]
    fn infeasible_alpha_min_is_rejected_before_training() {
        let envs = sem_envs(&[0.2, 1.0], 32, 2, 41);
        let cfg = ObjectiveConfig {
            penalty: PenaltySpec {
                kind: PenaltyKind::Cmm,
                lambda: 1.0,
                extrapolation: ExtrapolationParams { alpha_min: 0.9, gamma: 0.0 },
            },
            loss: LossKind::SquaredError,
            optimizer: OptimizerKind::GradientDescent,
            learning_rate: 1e-3,
            iterations: 10,
            penalty_anneal_iters: 0,
        };
        let spec = ModelSpec::Linear { dim: 4, init: 0.0 };
        let err = train(spec.init(&mut Rng::new(0, 0)).unwrap(), &envs, &cfg, &LogSpec::final_only(10))
            .unwrap_err();
        assert!(matches!(err, CoreError::InfeasibleAlphaMin { .. }));
    }
}
