//! Linear and small MLP predictors with a cotangent backward pass.
//!
//! Both model kinds expose the feature map `phi(x)` as a single scalar per
//! sample and one backward primitive: `backward_with_cotangent(X, c)`
//! returns the gradient of `sum_i c_i * phi(x_i)` with respect to the
//! flattened parameters, treating `c` as constant. Every penalty gradient in
//! this crate reduces to one such pass per environment with an appropriate
//! per-sample cotangent, so no autodiff graph is needed.
//!
//! Parameter flattening order (fixed, relied on by checkpoints and the
//! finite-difference oracle): for the linear model, weights then bias (bias
//! only when enabled); for the MLP, layer by layer, weight matrix row-major
//! then bias vector.

use crate::matrix::{dot, Matrix};
use crate::rng::Rng;
use crate::{CoreError, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Linear predictor `phi(x) = w . x + bias`.
///
/// For SEM experiments the bias is disabled (fixed at zero and excluded from
/// the trainable parameters); the weight vector then splits positionally into
/// `(w_inv, w_spu)` halves.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub bias: f64,
    pub bias_enabled: bool,
}

impl LinearModel {
    /// Zero-initialized model of input dimension `d`.
    pub fn zeros(d: usize, bias_enabled: bool) -> Self {
        LinearModel { w: vec![0.0; d], bias: 0.0, bias_enabled }
    }

    /// First half of the weights (invariant block), for SEM models of even
    /// dimension.
    pub fn w_inv(&self) -> &[f64] {
        &self.w[..self.w.len() / 2]
    }

    /// Second half of the weights (spurious block).
    pub fn w_spu(&self) -> &[f64] {
        &self.w[self.w.len() / 2..]
    }
}

/// One dense layer: `z = W a + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// ReLU MLP with a single pre-activation output logit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<MlpLayer>,
}

impl MlpModel {
    /// Seeded initialization: weights `~ N(0, 1/fan_in)`, biases zero.
    /// `dims` chains input through hidden widths to the final width, which
    /// must be 1.
    pub fn seeded(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        validate_mlp_dims(dims)?;
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let std = libm::sqrt(1.0 / fan_in as f64);
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in w.as_mut_slice().iter_mut() {
                *v = std * rng.next_normal();
            }
            layers.push(MlpLayer { w, b: vec![0.0; fan_out] });
        }
        Ok(MlpModel { layers })
    }

    /// All-zero MLP of the given dims (useful for tests).
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_mlp_dims(dims)?;
        let layers = (0..dims.len() - 1)
            .map(|k| MlpLayer { w: Matrix::zeros(dims[k + 1], dims[k]), b: vec![0.0; dims[k + 1]] })
            .collect();
        Ok(MlpModel { layers })
    }

    /// The `dims` chain this model was built with.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].w.cols()];
        for layer in &self.layers {
            dims.push(layer.w.rows());
        }
        dims
    }
}

fn validate_mlp_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(CoreError::InvalidArgument("MLP needs at least input and output dims"));
    }
    if *dims.last().unwrap() != 1 {
        return Err(CoreError::InvalidArgument("MLP output width must be 1"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(CoreError::InvalidArgument("MLP dims must be positive"));
    }
    Ok(())
}

/// A predictor: either linear or MLP.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Model {
    /// Input dimension expected by `forward`.
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.w.len(),
            Model::Mlp(m) => m.layers[0].w.cols(),
        }
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        match self {
            Model::Linear(m) => m.w.len() + usize::from(m.bias_enabled),
            Model::Mlp(m) => m
                .layers
                .iter()
                .map(|l| l.w.rows() * l.w.cols() + l.b.len())
                .sum(),
        }
    }

    /// Flattens the trainable parameters in the documented order.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        match self {
            Model::Linear(m) => {
                p.extend_from_slice(&m.w);
                if m.bias_enabled {
                    p.push(m.bias);
                }
            }
            Model::Mlp(m) => {
                for layer in &m.layers {
                    p.extend_from_slice(layer.w.as_slice());
                    p.extend_from_slice(&layer.b);
                }
            }
        }
        p
    }

    /// Writes flattened parameters back into the model.
    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(CoreError::DimensionMismatch { expected: self.param_count(), got: p.len() });
        }
        match self {
            Model::Linear(m) => {
                let d = m.w.len();
                m.w.copy_from_slice(&p[..d]);
                if m.bias_enabled {
                    m.bias = p[d];
                }
            }
            Model::Mlp(m) => {
                let mut off = 0;
                for layer in &mut m.layers {
                    let wn = layer.w.rows() * layer.w.cols();
                    layer.w.as_mut_slice().copy_from_slice(&p[off..off + wn]);
                    off += wn;
                    let bn = layer.b.len();
                    layer.b.copy_from_slice(&p[off..off + bn]);
                    off += bn;
                }
            }
        }
        Ok(())
    }

    /// Evaluates `phi(x_i)` for every row of `x`. For the MLP this is the
    /// pre-activation output logit.
    pub fn forward(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.input_dim() {
            return Err(CoreError::DimensionMismatch { expected: self.input_dim(), got: x.cols() });
        }
        let n = x.rows();
        let mut out = vec![0.0; n];
        match self {
            Model::Linear(m) => {
                for i in 0..n {
                    out[i] = dot(x.row(i), &m.w) + if m.bias_enabled { m.bias } else { 0.0 };
                }
            }
            Model::Mlp(m) => {
                let mut acts = layer_buffers(m);
                for i in 0..n {
                    out[i] = mlp_forward_row(m, x.row(i), &mut acts);
                }
            }
        }
        Ok(out)
    }

    /// Gradient of `sum_i c_i * phi(x_i)` with respect to the flattened
    /// parameters; `c` is treated as a constant.
    ///
    /// ReLU uses subgradient 0 at exactly 0.
    pub fn backward_with_cotangent(&self, x: &Matrix, c: &[f64]) -> Result<Vec<f64>> {
        if x.cols() != self.input_dim() {
            return Err(CoreError::DimensionMismatch { expected: self.input_dim(), got: x.cols() });
        }
        if c.len() != x.rows() {
            return Err(CoreError::DimensionMismatch { expected: x.rows(), got: c.len() });
        }
        let mut grad = vec![0.0; self.param_count()];
        match self {
            Model::Linear(m) => {
                let d = m.w.len();
                for (i, &ci) in c.iter().enumerate() {
                    if ci == 0.0 {
                        continue;
                    }
                    let row = x.row(i);
                    for j in 0..d {
                        grad[j] += ci * row[j];
                    }
                    if m.bias_enabled {
                        grad[d] += ci;
                    }
                }
            }
            Model::Mlp(m) => {
                let mut acts = layer_buffers(m);
                let mut deltas = layer_buffers(m);
                for (i, &ci) in c.iter().enumerate() {
                    mlp_forward_row(m, x.row(i), &mut acts);
                    mlp_backward_row(m, x.row(i), ci, &acts, &mut deltas, &mut grad);
                }
            }
        }
        Ok(grad)
    }
}

/// One scratch vector per layer, sized to that layer's output width.
fn layer_buffers(m: &MlpModel) -> Vec<Vec<f64>> {
    m.layers.iter().map(|l| vec![0.0; l.w.rows()]).collect()
}

/// Forward pass for one sample; fills `acts[l]` with layer `l`'s
/// pre-activations and returns the output logit.
fn mlp_forward_row(m: &MlpModel, row: &[f64], acts: &mut [Vec<f64>]) -> f64 {
    let n_layers = m.layers.len();
    for l in 0..n_layers {
        let layer = &m.layers[l];
        for r in 0..layer.w.rows() {
            let mut z = layer.b[r];
            let wrow = layer.w.row(r);
            if l == 0 {
                z += dot(wrow, row);
            } else {
                // inputs are the ReLU of the previous layer's pre-activations
                let prev = &acts[l - 1];
                for (k, &w) in wrow.iter().enumerate() {
                    let a = prev[k];
                    if a > 0.0 {
                        z += w * a;
                    }
                }
            }
            acts[l][r] = z;
        }
    }
    acts[n_layers - 1][0]
}

/// Backward pass for one sample with output cotangent `c`, accumulating into
/// the flat `grad` (same layout as `Model::to_params`).
fn mlp_backward_row(
    m: &MlpModel,
    row: &[f64],
    c: f64,
    acts: &[Vec<f64>],
    deltas: &mut [Vec<f64>],
    grad: &mut [f64],
) {
    let n_layers = m.layers.len();
    deltas[n_layers - 1][0] = c;
    for l in (0..n_layers - 1).rev() {
        let next = &m.layers[l + 1];
        for r in 0..m.layers[l].w.rows() {
            // ReLU gate: zero unless this unit was active
            if acts[l][r] > 0.0 {
                let mut acc = 0.0;
                for nr in 0..next.w.rows() {
                    acc += deltas[l + 1][nr] * next.w.get(nr, r);
                }
                deltas[l][r] = acc;
            } else {
                deltas[l][r] = 0.0;
            }
        }
    }
    let mut off = 0;
    for l in 0..n_layers {
        let layer = &m.layers[l];
        let (rows, cols) = (layer.w.rows(), layer.w.cols());
        for r in 0..rows {
            let dl = deltas[l][r];
            if dl != 0.0 {
                let gw = &mut grad[off + r * cols..off + (r + 1) * cols];
                if l == 0 {
                    for (g, &xv) in gw.iter_mut().zip(row) {
                        *g += dl * xv;
                    }
                } else {
                    let prev = &acts[l - 1];
                    for (k, g) in gw.iter_mut().enumerate() {
                        let a = prev[k];
                        if a > 0.0 {
                            *g += dl * a;
                        }
                    }
                }
            }
        }
        off += rows * cols;
        for r in 0..rows {
            grad[off + r] += deltas[l][r];
        }
        off += rows;
    }
}

/// Serializes a model to the plain-text checkpoint format: a shape header
/// (`linear D` or `mlp d0 d1 ... 1`) followed by one parameter per line in
/// flattening order. Values round-trip exactly (17 significant digits).
pub fn to_checkpoint_string(model: &Model) -> String {
    let mut s = String::new();
    match model {
        Model::Linear(m) => {
            s.push_str(&format!("linear {}\n", m.w.len()));
        }
        Model::Mlp(m) => {
            s.push_str("mlp");
            for d in m.dims() {
                s.push_str(&format!(" {d}"));
            }
            s.push('\n');
        }
    }
    for v in model.to_params() {
        s.push_str(&format!("{v:.16e}\n"));
    }
    s
}

/// Parses the checkpoint format produced by [`to_checkpoint_string`].
///
/// For `linear D`, `D` values mean a disabled bias and `D + 1` values mean
/// the last value is an enabled bias.
pub fn from_checkpoint_string(s: &str) -> Result<Model> {
    let mut lines = s.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(CoreError::InvalidArgument("empty checkpoint"))?;
    let mut parts = header.split_whitespace();
    let kind = parts.next().ok_or(CoreError::InvalidArgument("missing checkpoint header"))?;
    let values: Vec<f64> = lines
        .map(|l| l.trim().parse::<f64>())
        .collect::<core::result::Result<_, _>>()
        .map_err(|_| CoreError::InvalidArgument("unparseable checkpoint value"))?;
    match kind {
        "linear" => {
            let d: usize = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or(CoreError::InvalidArgument("bad linear checkpoint header"))?;
            if parts.next().is_some() {
                return Err(CoreError::InvalidArgument("bad linear checkpoint header"));
            }
            let bias_enabled = match values.len() {
                l if l == d => false,
                l if l == d + 1 => true,
                got => return Err(CoreError::DimensionMismatch { expected: d, got }),
            };
            let mut model = Model::Linear(LinearModel::zeros(d, bias_enabled));
            model.set_params(&values)?;
            Ok(model)
        }
        "mlp" => {
            let dims: Vec<usize> = parts
                .map(|t| t.parse::<usize>())
                .collect::<core::result::Result<_, _>>()
                .map_err(|_| CoreError::InvalidArgument("bad mlp checkpoint header"))?;
            let mut model = Model::Mlp(MlpModel::zeros(&dims)?);
            model.set_params(&values)?;
            Ok(model)
        }
        _ => Err(CoreError::InvalidArgument("unknown checkpoint kind")),
    }
}
