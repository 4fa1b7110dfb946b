//! Risks and invariance penalties, with analytic gradients.
//!
//! For a feature map `phi` and a frozen scalar classifier `pi = 1`, define
//! per sample `h_i = d/dpi loss(pi * phi(x_i), y_i) |_{pi=1}`. Everything
//! else is built from `h`:
//!
//! * the stationarity penalty `(mean_i h_i)^2` — zero iff `pi = 1` is a
//!   stationary point of that environment's risk,
//! * the per-sample penalty `J_e = mean_i h_i^2`, which majorizes the
//!   stationarity penalty by Jensen's inequality and is linear in the
//!   empirical distribution,
//! * the worst-case extrapolated penalty `C_mm(J) = (1 - alpha_min m) max_e
//!   J_e + alpha_min sum_e J_e` (the maximum of `sum alpha_e J_e` over
//!   weights summing to 1 with `alpha_e >= alpha_min`; negative `alpha_min`
//!   reaches outside the convex hull of the training environments),
//! * the variance-weighted penalty `C_v(J) = gamma Var(J) + sum_e J_e`
//!   (variance with `1/m` normalization).
//!
//! Gradients never need an autodiff graph: with `h' = dh/dz` and `l' =
//! dloss/dz`, each term's parameter gradient is one cotangent backward pass
//! per environment (see `Model::backward_with_cotangent`), and the
//! extrapolated penalties chain through fixed per-environment weights.

use crate::data::EnvDataset;
use crate::model::Model;
use crate::{CoreError, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Absolute tolerance under which tied maximal `J_e` values share the argmax;
/// the lowest environment index wins (deterministic subgradient choice).
pub const CMM_TIE_EPS: f64 = 1e-12;

/// Pointwise loss on a scalar prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `(z - y)^2` for real targets.
    SquaredError,
    /// Binary cross-entropy on a logit: `softplus(z) - y z` for `y` in {0,1}.
    BinaryCrossEntropyWithLogit,
}

/// Which penalty a training objective adds to the summed risks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    /// No penalty (empirical risk minimization).
    None,
    /// Sum over environments of the stationarity penalty `(mean h)^2`.
    IrmV1,
    /// Sum over environments of the per-sample penalty `J_e = mean h^2`.
    JIrmV1,
    /// Worst-case extrapolated combination `C_mm` of the `J_e`.
    Cmm,
    /// Variance-weighted combination `C_v` of the `J_e`.
    Cv,
}

/// Extrapolation hyperparameters for `C_mm` / `C_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapolationParams {
    /// Lower bound on environment weights; must satisfy
    /// `alpha_min <= 1/|E|`. Negative values extrapolate beyond the convex
    /// hull.
    pub alpha_min: f64,
    /// Nonnegative variance weight in `C_v`.
    pub gamma: f64,
}

impl ExtrapolationParams {
    pub const NONE: ExtrapolationParams = ExtrapolationParams { alpha_min: 0.0, gamma: 0.0 };
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

impl LossKind {
    /// Loss value at prediction `z`, target `y`.
    fn value(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::SquaredError => (z - y) * (z - y),
            LossKind::BinaryCrossEntropyWithLogit => softplus(z) - y * z,
        }
    }

    /// `d loss / d z`.
    fn dz(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * (z - y),
            LossKind::BinaryCrossEntropyWithLogit => sigmoid(z) - y,
        }
    }

    /// `h = d/dpi loss(pi z, y)` at `pi = 1`.
    fn h(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * z * (z - y),
            LossKind::BinaryCrossEntropyWithLogit => z * (sigmoid(z) - y),
        }
    }

    /// `h' = dh/dz`.
    fn h_dz(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * (2.0 * z - y),
            LossKind::BinaryCrossEntropyWithLogit => {
                let s = sigmoid(z);
                (s - y) + z * s * (1.0 - s)
            }
        }
    }

    /// Checks target compatibility (`{0,1}` labels for the logistic loss).
    fn check_targets(self, y: &[f64]) -> Result<()> {
        if self == LossKind::BinaryCrossEntropyWithLogit
            && y.iter().any(|&v| v != 0.0 && v != 1.0)
        {
            return Err(CoreError::InvalidArgument(
                "logistic loss requires targets in {0, 1}",
            ));
        }
        Ok(())
    }
}

/// Per-environment evaluation shared by risks and penalty gradients.
struct EnvEval {
    n: usize,
    /// `d loss / d z` per sample.
    lp: Vec<f64>,
    /// `h` per sample.
    h: Vec<f64>,
    /// `h'` per sample.
    hp: Vec<f64>,
    risk: f64,
    /// `mean h` — the risk's derivative in `pi` at `pi = 1`.
    h_mean: f64,
    /// `mean h^2` — the per-sample penalty `J_e`.
    j: f64,
}

fn eval_env(model: &Model, env: &EnvDataset, loss: LossKind) -> Result<EnvEval> {
    loss.check_targets(&env.y)?;
    let z = model.forward(&env.x)?;
    let n = z.len();
    let mut lp = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut hp = vec![0.0; n];
    let (mut risk, mut h_sum, mut j_sum) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (zi, yi) = (z[i], env.y[i]);
        risk += loss.value(zi, yi);
        lp[i] = loss.dz(zi, yi);
        let hi = loss.h(zi, yi);
        h[i] = hi;
        hp[i] = loss.h_dz(zi, yi);
        h_sum += hi;
        j_sum += hi * hi;
    }
    let nf = n as f64;
    Ok(EnvEval { n, lp, h, hp, risk: risk / nf, h_mean: h_sum / nf, j: j_sum / nf })
}

/// Empirical risk `mean_i loss(phi(x_i), y_i)`.
pub fn risk(model: &Model, env: &EnvDataset, loss: LossKind) -> Result<f64> {
    loss.check_targets(&env.y)?;
    let z = model.forward(&env.x)?;
    let mut acc = 0.0;
    for (zi, yi) in z.iter().zip(&env.y) {
        acc += loss.value(*zi, *yi);
    }
    Ok(acc / z.len() as f64)
}

/// Risk of the scaled predictor `pi * phi`: `mean_i loss(pi phi(x_i), y_i)`.
/// Exposed so oracles can finite-difference the risk in `pi`.
pub fn risk_at_pi(pi: f64, model: &Model, env: &EnvDataset, loss: LossKind) -> Result<f64> {
    loss.check_targets(&env.y)?;
    let z = model.forward(&env.x)?;
    let mut acc = 0.0;
    for (zi, yi) in z.iter().zip(&env.y) {
        acc += loss.value(pi * zi, *yi);
    }
    Ok(acc / z.len() as f64)
}

/// Per-sample penalty at general `pi`: `mean_i (d/dpi loss(pi phi(x_i), y_i))^2`.
/// At `pi = 1` this equals [`j_penalty`].
pub fn j_at_pi(pi: f64, model: &Model, env: &EnvDataset, loss: LossKind) -> Result<f64> {
    loss.check_targets(&env.y)?;
    let z = model.forward(&env.x)?;
    let mut acc = 0.0;
    for (zi, yi) in z.iter().zip(&env.y) {
        // d/dpi loss(pi z, y) = z * dloss/dz at pi z
        let g = *zi * loss.dz(pi * *zi, *yi);
        acc += g * g;
    }
    Ok(acc / z.len() as f64)
}

/// The per-sample scalar gradients `h_i = d/dpi loss(pi phi(x_i), y_i)|_{pi=1}`.
pub fn pi_gradients(model: &Model, env: &EnvDataset, loss: LossKind) -> Result<Vec<f64>> {
    loss.check_targets(&env.y)?;
    let z = model.forward(&env.x)?;
    Ok(z.iter().zip(&env.y).map(|(zi, yi)| loss.h(*zi, *yi)).collect())
}

/// Stationarity penalty `(mean_i h_i)^2`.
pub fn irmv1_penalty(model: &Model, env: &EnvDataset, loss: LossKind) -> Result<f64> {
    let e = eval_env(model, env, loss)?;
    Ok(e.h_mean * e.h_mean)
}

/// Per-sample penalty `J_e = mean_i h_i^2`.
pub fn j_penalty(model: &Model, env: &EnvDataset, loss: LossKind) -> Result<f64> {
    Ok(eval_env(model, env, loss)?.j)
}

fn check_feasible(kind: PenaltyKind, params: &ExtrapolationParams, n_envs: usize) -> Result<()> {
    if n_envs == 0 {
        return Err(CoreError::InvalidArgument("need at least one environment"));
    }
    match kind {
        PenaltyKind::Cmm => {
            if params.alpha_min > 1.0 / n_envs as f64 {
                return Err(CoreError::InfeasibleAlphaMin { alpha_min: params.alpha_min, n_envs });
            }
        }
        PenaltyKind::Cv => {
            if !(params.gamma >= 0.0) {
                return Err(CoreError::InvalidArgument("gamma must be nonnegative"));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Worst-case extrapolated combination of per-environment penalties:
/// `(1 - alpha_min m) max_e J_e + alpha_min sum_e J_e`.
///
/// Equals the maximum of `sum_e alpha_e J_e` over the weight set
/// `{sum alpha = 1, alpha_e >= alpha_min}` (verified against an independent
/// vertex-enumeration oracle).
pub fn c_mm(j: &[f64], alpha_min: f64) -> Result<f64> {
    let m = j.len();
    check_feasible(PenaltyKind::Cmm, &ExtrapolationParams { alpha_min, gamma: 0.0 }, m)?;
    let max = j.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = j.iter().sum();
    Ok((1.0 - alpha_min * m as f64) * max + alpha_min * sum)
}

/// Variance-weighted combination `gamma * Var(J) + sum_e J_e`, with the
/// variance normalized by `1/m`.
pub fn c_v(j: &[f64], gamma: f64) -> Result<f64> {
    let m = j.len();
    check_feasible(PenaltyKind::Cv, &ExtrapolationParams { alpha_min: 0.0, gamma }, m)?;
    let mf = m as f64;
    let mean: f64 = j.iter().sum::<f64>() / mf;
    let var: f64 = j.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / mf;
    Ok(gamma * var + j.iter().sum::<f64>())
}

/// Index of the maximal entry; ties within [`CMM_TIE_EPS`] resolve to the
/// lowest index.
pub(crate) fn cmm_argmax(j: &[f64]) -> usize {
    let max = j.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    j.iter().position(|&x| x >= max - CMM_TIE_EPS).unwrap_or(0)
}

/// Per-environment chain-rule weights `d penalty / d J_e` for the combined
/// penalties.
fn combination_weights(kind: PenaltyKind, js: &[f64], params: &ExtrapolationParams) -> Vec<f64> {
    let m = js.len();
    let mf = m as f64;
    match kind {
        PenaltyKind::Cmm => {
            let argmax = cmm_argmax(js);
            let mut w = vec![params.alpha_min; m];
            w[argmax] += 1.0 - params.alpha_min * mf;
            w
        }
        PenaltyKind::Cv => {
            let mean: f64 = js.iter().sum::<f64>() / mf;
            js.iter().map(|&j| params.gamma * (2.0 / mf) * (j - mean) + 1.0).collect()
        }
        _ => vec![1.0; m],
    }
}

/// Value of the configured penalty over the environments.
pub fn penalty_value(
    model: &Model,
    envs: &[EnvDataset],
    loss: LossKind,
    kind: PenaltyKind,
    params: &ExtrapolationParams,
) -> Result<f64> {
    check_feasible(kind, params, envs.len())?;
    match kind {
        PenaltyKind::None => Ok(0.0),
        PenaltyKind::IrmV1 => {
            let mut acc = 0.0;
            for env in envs {
                acc += irmv1_penalty(model, env, loss)?;
            }
            Ok(acc)
        }
        PenaltyKind::JIrmV1 => {
            let mut acc = 0.0;
            for env in envs {
                acc += j_penalty(model, env, loss)?;
            }
            Ok(acc)
        }
        PenaltyKind::Cmm | PenaltyKind::Cv => {
            let js: Vec<f64> = envs
                .iter()
                .map(|env| j_penalty(model, env, loss))
                .collect::<Result<_>>()?;
            match kind {
                PenaltyKind::Cmm => c_mm(&js, params.alpha_min),
                _ => c_v(&js, params.gamma),
            }
        }
    }
}

/// Gradient of the configured penalty with respect to the model parameters.
///
/// One cotangent backward pass per environment. Cotangents: the stationarity
/// penalty uses `c_i = (2/n) (mean h) h'_i`; each `J_e` uses
/// `c_i = (2/n) h_i h'_i`; `C_mm` / `C_v` scale the `J_e` cotangents by
/// their chain-rule weights.
pub fn penalty_grad(
    model: &Model,
    envs: &[EnvDataset],
    loss: LossKind,
    kind: PenaltyKind,
    params: &ExtrapolationParams,
) -> Result<Vec<f64>> {
    check_feasible(kind, params, envs.len())?;
    let mut grad = vec![0.0; model.param_count()];
    if kind == PenaltyKind::None {
        return Ok(grad);
    }
    let evals: Vec<EnvEval> = envs
        .iter()
        .map(|env| eval_env(model, env, loss))
        .collect::<Result<_>>()?;
    let weights = match kind {
        PenaltyKind::IrmV1 | PenaltyKind::JIrmV1 => vec![1.0; envs.len()],
        _ => {
            let js: Vec<f64> = evals.iter().map(|e| e.j).collect();
            combination_weights(kind, &js, params)
        }
    };
    for ((env, eval), &w) in envs.iter().zip(&evals).zip(&weights) {
        let nf = eval.n as f64;
        let c: Vec<f64> = match kind {
            PenaltyKind::IrmV1 => eval
                .hp
                .iter()
                .map(|&hpi| (2.0 / nf) * eval.h_mean * hpi)
                .collect(),
            _ => eval
                .h
                .iter()
                .zip(&eval.hp)
                .map(|(&hi, &hpi)| w * (2.0 / nf) * hi * hpi)
                .collect(),
        };
        let g = model.backward_with_cotangent(&env.x, &c)?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    Ok(grad)
}

/// Objective kind + hyperparameters: `sum_e R_e + lambda * penalty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    /// Penalty weight; ignored for `PenaltyKind::None`.
    pub lambda: f64,
    pub extrapolation: ExtrapolationParams,
}

impl PenaltySpec {
    pub fn erm() -> Self {
        PenaltySpec { kind: PenaltyKind::None, lambda: 0.0, extrapolation: ExtrapolationParams::NONE }
    }
}

/// Objective value, gradient, and per-environment diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    /// `sum_e R_e + lambda * penalty`.
    pub value: f64,
    /// Gradient of `value` in the flattened parameters.
    pub grad: Vec<f64>,
    /// Per-environment risks `R_e`.
    pub risks: Vec<f64>,
    /// Per-environment penalties `J_e = mean h^2`.
    pub js: Vec<f64>,
}

/// Full objective value and gradient: `sum_e R_e(model) + lambda * penalty`.
///
/// Shares one evaluation and one backward pass per environment between the
/// risk term and the penalty term (the backward primitive is linear in its
/// cotangent, so the two cotangents combine).
pub fn objective(
    model: &Model,
    envs: &[EnvDataset],
    loss: LossKind,
    spec: &PenaltySpec,
) -> Result<(f64, Vec<f64>)> {
    let ev = objective_eval(model, envs, loss, spec)?;
    Ok((ev.value, ev.grad))
}

/// As [`objective`], additionally reporting per-environment risks and `J_e`
/// (used by the trainer's trace).
pub fn objective_eval(
    model: &Model,
    envs: &[EnvDataset],
    loss: LossKind,
    spec: &PenaltySpec,
) -> Result<ObjectiveEval> {
    check_feasible(spec.kind, &spec.extrapolation, envs.len())?;
    if spec.kind != PenaltyKind::None && !(spec.lambda >= 0.0) {
        return Err(CoreError::InvalidArgument("lambda must be nonnegative"));
    }
    let evals: Vec<EnvEval> = envs
        .iter()
        .map(|env| eval_env(model, env, loss))
        .collect::<Result<_>>()?;

    let lambda = if spec.kind == PenaltyKind::None { 0.0 } else { spec.lambda };
    let mut value: f64 = evals.iter().map(|e| e.risk).sum();
    let js: Vec<f64> = evals.iter().map(|e| e.j).collect();
    let penalty = match spec.kind {
        PenaltyKind::None => 0.0,
        PenaltyKind::IrmV1 => evals.iter().map(|e| e.h_mean * e.h_mean).sum(),
        PenaltyKind::JIrmV1 => js.iter().sum(),
        PenaltyKind::Cmm => c_mm(&js, spec.extrapolation.alpha_min)?,
        PenaltyKind::Cv => c_v(&js, spec.extrapolation.gamma)?,
    };
    value += lambda * penalty;

    let weights = combination_weights(spec.kind, &js, &spec.extrapolation);
    let mut grad = vec![0.0; model.param_count()];
    for ((env, eval), &w) in envs.iter().zip(&evals).zip(&weights) {
        let nf = eval.n as f64;
        let mut c = vec![0.0; eval.n];
        for i in 0..eval.n {
            // risk cotangent
            c[i] = eval.lp[i] / nf;
            // penalty cotangent
            c[i] += match spec.kind {
                PenaltyKind::None => 0.0,
                PenaltyKind::IrmV1 => lambda * (2.0 / nf) * eval.h_mean * eval.hp[i],
                _ => lambda * w * (2.0 / nf) * eval.h[i] * eval.hp[i],
            };
        }
        let g = model.backward_with_cotangent(&env.x, &c)?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    let risks = evals.iter().map(|e| e.risk).collect();
    Ok(ObjectiveEval { value, grad, risks, js })
}
