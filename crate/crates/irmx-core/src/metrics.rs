//! Evaluation metrics: invariance errors for the regression task, and
//! accuracy plus calibration (equal-width and equal-count binning) for the
//! classification task.

use crate::data::EnvDataset;
use crate::model::{LinearModel, Model};
use crate::penalty::sigmoid;
use crate::train::TrainReport;
use crate::{CoreError, Result};
use alloc::vec::Vec;

/// Mean squared deviation of the first `d` weights from all-ones.
///
/// For the regression task the first `d` inputs are the invariant features
/// with true coefficients 1, so this is zero exactly at the invariant
/// solution.
pub fn causal_error(model: &LinearModel, d: usize) -> Result<f64> {
    if d == 0 || model.w.len() != 2 * d {
        return Err(CoreError::DimensionMismatch { expected: 2 * d, got: model.w.len() });
    }
    let mut sum = 0.0;
    for &w in &model.w[..d] {
        sum += (w - 1.0) * (w - 1.0);
    }
    Ok(sum / d as f64)
}

/// Mean squared magnitude of the last `d` weights (the spurious block).
pub fn noncausal_error(model: &LinearModel, d: usize) -> Result<f64> {
    if d == 0 || model.w.len() != 2 * d {
        return Err(CoreError::DimensionMismatch { expected: 2 * d, got: model.w.len() });
    }
    let mut sum = 0.0;
    for &w in &model.w[d..] {
        sum += w * w;
    }
    Ok(sum / d as f64)
}

/// Fraction of samples where the sign of the logit matches the label.
///
/// A logit of exactly zero predicts class 0.
pub fn accuracy(logits: &[f64], labels: &[f64]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(CoreError::DimensionMismatch { expected: logits.len(), got: labels.len() });
    }
    if logits.is_empty() {
        return Err(CoreError::InvalidArgument("accuracy needs at least one sample"));
    }
    let mut hits = 0usize;
    for (&z, &y) in logits.iter().zip(labels) {
        let pred = if z > 0.0 { 1.0 } else { 0.0 };
        if pred == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / logits.len() as f64)
}

/// Confidence of a single-logit binary prediction: the probability assigned
/// to whichever class the model favors, `max(sigma(z), 1 - sigma(z))`.
pub fn confidence_from_logit(z: f64) -> f64 {
    let p = sigmoid(z);
    if p >= 0.5 {
        p
    } else {
        1.0 - p
    }
}

/// A stream of per-sample prediction confidences with correctness flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInput {
    confidences: Vec<f64>,
    correct: Vec<f64>,
}

impl CalibrationInput {
    pub fn new(confidences: Vec<f64>, correct: Vec<f64>) -> Result<Self> {
        if confidences.len() != correct.len() {
            return Err(CoreError::DimensionMismatch {
                expected: confidences.len(),
                got: correct.len(),
            });
        }
        if confidences.is_empty() {
            return Err(CoreError::InvalidArgument("calibration input must be nonempty"));
        }
        for &c in &confidences {
            if !(0.0..=1.0).contains(&c) {
                return Err(CoreError::InvalidArgument("confidences must lie in [0, 1]"));
            }
        }
        for &k in &correct {
            if k != 0.0 && k != 1.0 {
                return Err(CoreError::InvalidArgument("correctness flags must be 0 or 1"));
            }
        }
        Ok(CalibrationInput { confidences, correct })
    }

    /// Builds the stream from logits and binary labels using the
    /// single-logit confidence rule and the zero-predicts-0 tie rule.
    pub fn from_logits(logits: &[f64], labels: &[f64]) -> Result<Self> {
        if logits.len() != labels.len() {
            return Err(CoreError::DimensionMismatch { expected: logits.len(), got: labels.len() });
        }
        let confidences = logits.iter().map(|&z| confidence_from_logit(z)).collect();
        let correct = logits
            .iter()
            .zip(labels)
            .map(|(&z, &y)| {
                let pred = if z > 0.0 { 1.0 } else { 0.0 };
                if pred == y {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        CalibrationInput::new(confidences, correct)
    }

    pub fn len(&self) -> usize {
        self.confidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidences.is_empty()
    }
}

/// Calibration error with `n_bins` equal-width bins on `[0, 1]`.
///
/// Bins are right-closed, `((b-1)/B, b/B]`, except the first which also
/// contains 0. Empty bins are skipped. The result is the sample-weighted
/// mean absolute gap between per-bin accuracy and per-bin mean confidence.
pub fn ece(input: &CalibrationInput, n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(CoreError::InvalidArgument("n_bins must be >= 1"));
    }
    let n = input.len();
    let mut count = alloc::vec![0usize; n_bins];
    let mut conf_sum = alloc::vec![0.0f64; n_bins];
    let mut acc_sum = alloc::vec![0.0f64; n_bins];
    for (&c, &k) in input.confidences.iter().zip(&input.correct) {
        let idx = (libm::ceil(c * n_bins as f64) as isize - 1).clamp(0, n_bins as isize - 1);
        let idx = idx as usize;
        count[idx] += 1;
        conf_sum[idx] += c;
        acc_sum[idx] += k;
    }
    let mut total = 0.0;
    for b in 0..n_bins {
        if count[b] == 0 {
            continue;
        }
        let m = count[b] as f64;
        total += (m / n as f64) * libm::fabs(acc_sum[b] / m - conf_sum[b] / m);
    }
    Ok(total)
}

/// Calibration error with `n_bins` equal-count (adaptive) bins.
///
/// Samples are stably sorted by confidence and partitioned into contiguous
/// groups whose sizes differ by at most one, with earlier groups taking the
/// extra element. The result is the unweighted mean absolute gap over bins.
pub fn ace(input: &CalibrationInput, n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(CoreError::InvalidArgument("n_bins must be >= 1"));
    }
    let n = input.len();
    if n_bins > n {
        return Err(CoreError::InvalidArgument("n_bins must not exceed the sample count"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        input.confidences[a]
            .partial_cmp(&input.confidences[b])
            .expect("confidences are validated finite")
    });
    let base = n / n_bins;
    let extra = n % n_bins;
    let mut total = 0.0;
    let mut start = 0usize;
    for b in 0..n_bins {
        let size = base + usize::from(b < extra);
        let mut conf_sum = 0.0;
        let mut acc_sum = 0.0;
        for &i in &order[start..start + size] {
            conf_sum += input.confidences[i];
            acc_sum += input.correct[i];
        }
        let m = size as f64;
        total += libm::fabs(acc_sum / m - conf_sum / m);
        start += size;
    }
    Ok(total / n_bins as f64)
}

/// One entry of a training-tail summary: the mean per-environment training
/// penalty at a logged iteration, paired with test-set metrics of the
/// checkpointed model from that iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TailPoint {
    pub iteration: u64,
    pub train_j: f64,
    pub test_acc: f64,
    pub test_ece: f64,
    pub test_ace: f64,
}

/// Evaluates the last `k` logged iterations of `report` on `eval_env`.
///
/// Requires the corresponding model checkpoints to be present in the
/// report (train with a checkpoint tail of at least `k`).
pub fn trace_tail(
    report: &TrainReport,
    k: usize,
    eval_env: &EnvDataset,
    n_bins: usize,
) -> Result<Vec<TailPoint>> {
    if k == 0 || k > report.trace.len() {
        return Err(CoreError::InvalidArgument("k must lie in 1..=trace length"));
    }
    let rows = &report.trace[report.trace.len() - k..];
    let mut out = Vec::with_capacity(k);
    for row in rows {
        let model = report
            .checkpoints
            .iter()
            .find(|(it, _)| *it == row.iteration)
            .map(|(_, m)| m)
            .ok_or(CoreError::InvalidArgument("missing checkpoint for a requested iteration"))?;
        out.push(tail_point(model, row.iteration, &row.js, eval_env, n_bins)?);
    }
    Ok(out)
}

fn tail_point(
    model: &Model,
    iteration: u64,
    js: &[f64],
    eval_env: &EnvDataset,
    n_bins: usize,
) -> Result<TailPoint> {
    let logits = model.forward(&eval_env.x)?;
    let train_j = js.iter().sum::<f64>() / js.len() as f64;
    let test_acc = accuracy(&logits, &eval_env.y)?;
    let calib = CalibrationInput::from_logits(&logits, &eval_env.y)?;
    Ok(TailPoint {
        iteration,
        train_j,
        test_acc,
        test_ece: ece(&calib, n_bins)?,
        test_ace: ace(&calib, n_bins)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_cls_env, EnvSpec};
    use crate::penalty::{LossKind, PenaltySpec};
    use crate::rng::{streams, Rng};
    use crate::train::{train, LogSpec, ModelSpec, ObjectiveConfig, OptimizerKind};
    use alloc::vec;

    fn linear(w: Vec<f64>) -> LinearModel {
        let mut m = LinearModel::zeros(w.len(), false);
        m.w = w;
        m
    }

    #[test]
    fn causal_error_examples() {
        let ideal = linear(vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(causal_error(&ideal, 5).unwrap(), 0.0);
        assert_eq!(noncausal_error(&ideal, 5).unwrap(), 0.0);

        let null = linear(vec![0.0; 10]);
        assert_eq!(causal_error(&null, 5).unwrap(), 1.0);

        let m = linear(vec![2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((causal_error(&m, 5).unwrap() - 0.2).abs() < 1e-15);

        let all_spu = linear(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(noncausal_error(&all_spu, 5).unwrap(), 1.0);
        let m = linear(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0]);
        assert!((noncausal_error(&m, 5).unwrap() - 5.0).abs() < 1e-15);

        assert!(causal_error(&linear(vec![0.0; 9]), 5).is_err());
        assert!(noncausal_error(&null, 0).is_err());
    }

    #[test]
    fn invariance_errors_scale_quadratically() {
        let mut rng = Rng::new(9, 0);
        for _ in 0..20 {
            let d = 3;
            let mut w = vec![0.0; 2 * d];
            for v in w.iter_mut() {
                v.clone_from(&rng.next_normal());
            }
            let base = linear(w.clone());
            // scale the deviation from the target by 3
            let mut w3 = w.clone();
            for j in 0..d {
                w3[j] = 1.0 + 3.0 * (w[j] - 1.0);
                w3[d + j] = 3.0 * w[d + j];
            }
            let scaled = linear(w3);
            let (c, nc) = (causal_error(&base, d).unwrap(), noncausal_error(&base, d).unwrap());
            let (c3, nc3) =
                (causal_error(&scaled, d).unwrap(), noncausal_error(&scaled, d).unwrap());
            assert!((c3 - 9.0 * c).abs() < 1e-12 * (1.0 + c3));
            assert!((nc3 - 9.0 * nc).abs() < 1e-12 * (1.0 + nc3));
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[2.0, -1.0, 0.5], &[1.0, 0.0, 1.0]).unwrap(), 1.0);
        assert!((accuracy(&[1.0, -1.0, 1.0], &[1.0, 0.0, 0.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // zero logit predicts class 0
        assert_eq!(accuracy(&[0.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert!(accuracy(&[1.0], &[1.0, 0.0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn confidence_rule() {
        assert_eq!(confidence_from_logit(0.0), 0.5);
        let c = confidence_from_logit(3.0);
        assert!((c - sigmoid(3.0)).abs() < 1e-15);
        // symmetric in the logit sign
        assert!((confidence_from_logit(-3.0) - c).abs() < 1e-15);
        assert!(c > 0.5 && c < 1.0);
    }

    #[test]
    fn calibration_input_validation() {
        assert!(CalibrationInput::new(vec![0.5], vec![1.0]).is_ok());
        assert!(CalibrationInput::new(vec![0.5, 0.6], vec![1.0]).is_err());
        assert!(CalibrationInput::new(vec![1.5], vec![1.0]).is_err());
        assert!(CalibrationInput::new(vec![0.5], vec![0.5]).is_err());
        assert!(CalibrationInput::new(vec![], vec![]).is_err());
    }

    #[test]
    fn ece_two_sample_case() {
        // one correct at confidence 0.8, one incorrect at 0.6, single bin:
        // |acc 0.5 - mean conf 0.7| = 0.2, compared bit-for-bit against the
        // same hand computation in IEEE arithmetic
        let input = CalibrationInput::new(vec![0.8, 0.6], vec![1.0, 0.0]).unwrap();
        let hand = (0.5f64 - (0.8f64 + 0.6) / 2.0).abs();
        assert!((hand - 0.2).abs() < 1e-15);
        assert_eq!(ece(&input, 1).unwrap(), hand);
        assert_eq!(ace(&input, 1).unwrap(), hand);
    }

    #[test]
    fn perfectly_confident_and_correct_stream_has_zero_error() {
        let input = CalibrationInput::new(vec![1.0; 8], vec![1.0; 8]).unwrap();
        assert_eq!(ece(&input, 15).unwrap(), 0.0);
        assert_eq!(ace(&input, 8).unwrap(), 0.0);
    }

    #[test]
    fn ece_binning_edges() {
        // 10 bins: 0.1 falls in the first bin (right-closed), 0.1000001 in
        // the second; 0 joins the first bin; 1 lands in the last
        let input = CalibrationInput::new(
            vec![0.0, 0.1, 0.10000001, 1.0],
            vec![0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        // bin 0 holds {0.0, 0.1}: |0 - 0.05| * 2/4; bin 1 holds {0.10000001}:
        // |0 - 0.1| * 1/4 (approx); bin 9 holds {1.0}: |1 - 1| = 0
        let got = ece(&input, 10).unwrap();
        let want = 0.5 * 0.05 + 0.25 * 0.10000001;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn calibration_is_permutation_invariant() {
        let mut rng = Rng::new(11, 0);
        let n = 200;
        let mut conf = vec![0.0; n];
        let mut corr = vec![0.0; n];
        for i in 0..n {
            conf[i] = 0.5 + 0.5 * rng.next_f64();
            corr[i] = f64::from(rng.next_bool(conf[i]));
        }
        let a = CalibrationInput::new(conf.clone(), corr.clone()).unwrap();
        // rotate by a third
        let k = n / 3;
        conf.rotate_left(k);
        corr.rotate_left(k);
        let b = CalibrationInput::new(conf, corr).unwrap();
        // permutation changes the within-bin accumulation order, so allow a
        // few ulps of drift
        for bins in [1, 2, 7, 15] {
            assert!((ece(&a, bins).unwrap() - ece(&b, bins).unwrap()).abs() < 1e-14);
            assert!((ace(&a, bins).unwrap() - ace(&b, bins).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn single_bin_collapses_to_overall_gap() {
        let mut rng = Rng::new(13, 0);
        let n = 500;
        let mut conf = vec![0.0; n];
        let mut corr = vec![0.0; n];
        for i in 0..n {
            conf[i] = 0.5 + 0.5 * rng.next_f64();
            corr[i] = f64::from(rng.next_bool(0.7));
        }
        let input = CalibrationInput::new(conf.clone(), corr.clone()).unwrap();
        let mean_conf = conf.iter().sum::<f64>() / n as f64;
        let acc = corr.iter().sum::<f64>() / n as f64;
        let want = (acc - mean_conf).abs();
        assert!((ece(&input, 1).unwrap() - want).abs() < 1e-15);
        assert!((ace(&input, 1).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn calibrated_stream_scores_near_zero() {
        // confidence drawn uniformly from [0.5, 1), correctness Bernoulli at
        // exactly that confidence: the stream is calibrated by construction
        let mut rng = Rng::new(17, 0);
        let n = 100_000;
        let mut conf = Vec::with_capacity(n);
        let mut corr = Vec::with_capacity(n);
        for _ in 0..n {
            let c = 0.5 + 0.5 * rng.next_f64();
            conf.push(c);
            corr.push(f64::from(rng.next_bool(c)));
        }
        let input = CalibrationInput::new(conf, corr).unwrap();
        let e = ece(&input, 15).unwrap();
        let a = ace(&input, 15).unwrap();
        assert!(e <= 0.01, "ECE = {e}");
        assert!(a <= 0.01, "ACE = {a}");
    }

    #[test]
    fn ace_rejects_more_bins_than_samples() {
        let input = CalibrationInput::new(vec![0.6, 0.7], vec![1.0, 0.0]).unwrap();
        assert!(ace(&input, 3).is_err());
        assert!(ece(&input, 0).is_err());
        assert!(ace(&input, 0).is_err());
    }

    #[test]
    fn ace_uneven_split_gives_extra_to_early_bins() {
        // five samples, two bins: sizes 3 and 2 after sorting by confidence
        let input = CalibrationInput::new(
            vec![0.9, 0.5, 0.7, 0.6, 0.8],
            vec![1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        // sorted: (0.5,0), (0.6,0), (0.7,1) | (0.8,1), (0.9,1)
        let bin1 = (1.0f64 / 3.0 - 0.6).abs();
        let bin2 = (1.0f64 - 0.85).abs();
        let want = 0.5 * (bin1 + bin2);
        assert!((ace(&input, 2).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn trace_tail_pairs_checkpoints_with_test_metrics() {
        let mut rng = Rng::new(3, streams::DATA);
        let train_env = generate_cls_env(&EnvSpec::cls(0.1, 300), &mut rng).unwrap();
        let mut rng = Rng::new(3, streams::EVAL);
        let test_env = generate_cls_env(&EnvSpec::cls(0.9, 300), &mut rng).unwrap();
        let cfg = ObjectiveConfig {
            penalty: PenaltySpec::erm(),
            loss: LossKind::BinaryCrossEntropyWithLogit,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-2,
            iterations: 40,
            penalty_anneal_iters: 0,
        };
        let spec = ModelSpec::Mlp { dims: vec![4, 8, 1] };
        let log = LogSpec { stride: 4, checkpoint_tail: 5 };
        let report = train(
            spec.init(&mut Rng::new(3, streams::FINAL_INIT)).unwrap(),
            core::slice::from_ref(&train_env),
            &cfg,
            &log,
        )
        .unwrap();
        assert_eq!(report.trace.len(), 10);
        let tail = trace_tail(&report, 5, &test_env, 15).unwrap();
        assert_eq!(tail.len(), 5);
        assert_eq!(tail[0].iteration, 24);
        assert_eq!(tail[4].iteration, 40);
        for p in &tail {
            assert!(p.test_acc >= 0.0 && p.test_acc <= 1.0);
            assert!(p.test_ece >= 0.0 && p.test_ece <= 1.0);
            assert!(p.test_ace >= 0.0 && p.test_ace <= 1.0);
            assert!(p.train_j.is_finite());
        }
        // k beyond the checkpoint tail fails on the missing snapshot
        assert!(trace_tail(&report, 6, &test_env, 15).is_err());
        // k beyond the trace length is invalid outright
        assert!(trace_tail(&report, 11, &test_env, 15).is_err());
    }
}
