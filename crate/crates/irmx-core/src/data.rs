//! Synthetic environment families.
//!
//! Two generators, both fully determined by `(spec, rng)`:
//!
//! * **SEM regression**: for scale `e`, draws `x_inv ~ N(0, e^2 I_d)`,
//!   `y = 1^T x_inv + u` with `u ~ N(0,1)`, and `x_spu = y * 1_d + v` with
//!   `v ~ N(0, e^2 I_d)`. Inputs are `[x_inv | x_spu]`, so the invariant
//!   predictor is `w_inv = 1_d`, `w_spu = 0_d` across every `e`.
//! * **Spurious classification**: a latent bit `z` determines the label `y`
//!   up to `label_noise`; a "color" bit `c` copies `y` but flips with
//!   probability `p_flip`. The invariant block sits at `(2z'-1) * mu_inv`
//!   and the spurious block at `(2c-1) * mu_spu` with `|mu_spu| > |mu_inv|`,
//!   so the spurious feature is both stronger and (at small `p_flip`) more
//!   label-aligned — until `p_flip` crosses 1/2 and it inverts.
//!
//! Draw order is fixed block-by-block and documented on each generator so
//! that seeds remain stable under refactoring.

use crate::matrix::Matrix;
use crate::rng::{sample_normal, Rng};
use crate::{CoreError, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Invariant-block mean direction for the classification task: `(1,1)/sqrt(2)`.
pub const CLS_MU_INV: [f64; 2] = [core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2];
/// Spurious-block mean direction: `(1,1)/sqrt(2) * 2`, deliberately stronger
/// than the invariant block.
pub const CLS_MU_SPU: [f64; 2] = [core::f64::consts::SQRT_2, core::f64::consts::SQRT_2];
/// Input dimension of the classification task (two 2-d blocks).
pub const CLS_INPUT_DIM: usize = 4;
/// Default within-block noise standard deviation.
pub const CLS_NOISE_STD: f64 = 1.0;
/// Default label-noise rate (probability that the label disagrees with the
/// latent invariant bit).
pub const CLS_LABEL_NOISE: f64 = 0.25;

/// Parameters of one environment's data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    /// Structural-equation regression environment with noise scale `e`.
    SemRegression {
        /// Noise scale; `e = 0` is the degenerate limit where `x_inv = 0`
        /// and `x_spu` copies `y` exactly.
        e: f64,
        /// Samples to draw.
        n: usize,
        /// Invariant-feature dimension (inputs have `2 d` columns).
        d: usize,
    },
    /// Spurious-correlation classification environment.
    SpuriousClassification {
        /// Probability that the color bit disagrees with the label.
        p_flip: f64,
        /// Samples to draw.
        n: usize,
        /// Probability that the label disagrees with the latent bit.
        label_noise: f64,
        /// Within-block Gaussian noise (see [`CLS_NOISE_STD`]).
        noise_std: f64,
    },
}

impl EnvSpec {
    /// Convenience constructor for a regression environment.
    pub fn sem(e: f64, n: usize, d: usize) -> Self {
        EnvSpec::SemRegression { e, n, d }
    }

    /// Convenience constructor for a classification environment with the
    /// default label noise and block noise.
    pub fn cls(p_flip: f64, n: usize) -> Self {
        EnvSpec::SpuriousClassification {
            p_flip,
            n,
            label_noise: CLS_LABEL_NOISE,
            noise_std: CLS_NOISE_STD,
        }
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        match *self {
            EnvSpec::SemRegression { n, .. } => n,
            EnvSpec::SpuriousClassification { n, .. } => n,
        }
    }

    /// Number of input columns produced by the generator.
    pub fn input_dim(&self) -> usize {
        match *self {
            EnvSpec::SemRegression { d, .. } => 2 * d,
            EnvSpec::SpuriousClassification { .. } => CLS_INPUT_DIM,
        }
    }

    /// Checks the documented parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvSpec::SemRegression { e, n, d } => {
                if !(e >= 0.0) || !e.is_finite() {
                    return Err(CoreError::InvalidArgument("SEM scale e must be finite and >= 0"));
                }
                if n == 0 {
                    return Err(CoreError::InvalidArgument("n must be >= 1"));
                }
                if d == 0 {
                    return Err(CoreError::InvalidArgument("d must be >= 1"));
                }
            }
            EnvSpec::SpuriousClassification { p_flip, n, label_noise, noise_std } => {
                if !(0.0..=1.0).contains(&p_flip) {
                    return Err(CoreError::InvalidArgument("p_flip must lie in [0, 1]"));
                }
                if !(0.0..=1.0).contains(&label_noise) {
                    return Err(CoreError::InvalidArgument("label_noise must lie in [0, 1]"));
                }
                if !(noise_std >= 0.0) || !noise_std.is_finite() {
                    return Err(CoreError::InvalidArgument("noise_std must be finite and >= 0"));
                }
                if n == 0 {
                    return Err(CoreError::InvalidArgument("n must be >= 1"));
                }
            }
        }
        Ok(())
    }
}

/// One environment's empirical sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDataset {
    /// Inputs, one row per sample (`2 d` columns for SEM, 4 for classification).
    pub x: Matrix,
    /// Targets: real-valued for regression, `{0.0, 1.0}` labels for
    /// classification.
    pub y: Vec<f64>,
    /// The generating spec (kept for dimension checks and reporting).
    pub spec: EnvSpec,
}

impl EnvDataset {
    /// Sample count.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Restricts the dataset to the given row indices (used for
    /// validation splits).
    pub fn subset(&self, indices: &[usize]) -> EnvDataset {
        let y = indices.iter().map(|&i| self.y[i]).collect();
        EnvDataset { x: self.x.select_rows(indices), y, spec: self.spec.clone() }
    }
}

/// Generates a SEM regression environment.
///
/// Draw order (block-by-block): all `x_inv` entries row-major, then all `u`,
/// then all `v` entries row-major. Each normal consumes exactly two uniforms
/// regardless of the scale.
pub fn generate_sem_env(spec: &EnvSpec, rng: &mut Rng) -> Result<EnvDataset> {
    spec.validate()?;
    let (e, n, d) = match *spec {
        EnvSpec::SemRegression { e, n, d } => (e, n, d),
        _ => return Err(CoreError::InvalidArgument("generate_sem_env requires a SemRegression spec")),
    };

    let mut x_inv = vec![0.0; n * d];
    for v in x_inv.iter_mut() {
        *v = sample_normal(rng, 0.0, e)?;
    }
    let mut u = vec![0.0; n];
    for v in u.iter_mut() {
        *v = sample_normal(rng, 0.0, 1.0)?;
    }
    let mut v_noise = vec![0.0; n * d];
    for v in v_noise.iter_mut() {
        *v = sample_normal(rng, 0.0, e)?;
    }

    let mut x = Matrix::zeros(n, 2 * d);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let inv_row = &x_inv[i * d..(i + 1) * d];
        let mut target = u[i];
        for &xv in inv_row {
            target += xv;
        }
        y[i] = target;
        let row = x.row_mut(i);
        row[..d].copy_from_slice(inv_row);
        for j in 0..d {
            row[d + j] = target + v_noise[i * d + j];
        }
    }
    Ok(EnvDataset { x, y, spec: spec.clone() })
}

/// Generates a spurious-correlation classification environment.
///
/// Draw order (block-by-block): latent bits `z`, label flips, `x_inv` noise
/// row-major, color flips, `x_spu` noise row-major.
pub fn generate_cls_env(spec: &EnvSpec, rng: &mut Rng) -> Result<EnvDataset> {
    spec.validate()?;
    let (p_flip, n, label_noise, noise_std) = match *spec {
        EnvSpec::SpuriousClassification { p_flip, n, label_noise, noise_std } => {
            (p_flip, n, label_noise, noise_std)
        }
        _ => {
            return Err(CoreError::InvalidArgument(
                "generate_cls_env requires a SpuriousClassification spec",
            ))
        }
    };

    let z: Vec<bool> = (0..n).map(|_| rng.next_bool(0.5)).collect();
    let y_bits: Vec<bool> = z.iter().map(|&zi| zi ^ rng.next_bool(label_noise)).collect();
    let mut inv_noise = vec![0.0; n * 2];
    for v in inv_noise.iter_mut() {
        *v = sample_normal(rng, 0.0, noise_std)?;
    }
    let c_bits: Vec<bool> = y_bits.iter().map(|&yi| yi ^ rng.next_bool(p_flip)).collect();
    let mut spu_noise = vec![0.0; n * 2];
    for v in spu_noise.iter_mut() {
        *v = sample_normal(rng, 0.0, noise_std)?;
    }

    let mut x = Matrix::zeros(n, CLS_INPUT_DIM);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let zs = if z[i] { 1.0 } else { -1.0 };
        let cs = if c_bits[i] { 1.0 } else { -1.0 };
        let row = x.row_mut(i);
        for j in 0..2 {
            row[j] = zs * CLS_MU_INV[j] + inv_noise[i * 2 + j];
            row[2 + j] = cs * CLS_MU_SPU[j] + spu_noise[i * 2 + j];
        }
        y[i] = if y_bits[i] { 1.0 } else { 0.0 };
    }
    Ok(EnvDataset { x, y, spec: spec.clone() })
}
