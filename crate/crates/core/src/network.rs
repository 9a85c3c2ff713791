//! Chain-structured feed-forward networks with tanh hidden layers and linear
//! or softmax output units, plus the closed-form Jacobian of the network with
//! respect to its input vector and reverse-mode parameter gradients.
//!
//! Parameter flattening order (used by `params_flat`, `set_params_flat`,
//! `param_gradient` and the trainer): all weight matrices in layer order,
//! each row-major, followed by all bias vectors in layer order. Serialized
//! models are portable because this order is fixed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("operation requires a linear output unit")]
    SoftmaxHeadUnsupported,
    #[error("operation requires a scalar output, network has {0}")]
    NonScalarOutput(usize),
    #[error("non-finite network output (corrupted parameters?)")]
    NonFiniteOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputUnit {
    Linear,
    Softmax,
}

/// Per-dimension affine input map `x -> scale .* x + offset`, applied before
/// the first layer and chain-ruled into the input Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl InputScaler {
    pub fn identity(dim: usize) -> Self {
        Self { scale: vec![1.0; dim], offset: vec![0.0; dim] }
    }

    /// Maps the box `[lower, upper]` onto `[-1, 1]` per dimension. Dimensions
    /// of negligible width are left unscaled.
    pub fn from_box(lower: &DVector<f64>, upper: &DVector<f64>) -> Self {
        let n = lower.len();
        let mut scale = vec![1.0; n];
        let mut offset = vec![0.0; n];
        for j in 0..n {
            let width = upper[j] - lower[j];
            if width > 1e-12 {
                scale[j] = 2.0 / width;
                offset[j] = -(upper[j] + lower[j]) / width;
            }
        }
        Self { scale, offset }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |j, _| self.scale[j] * x[j] + self.offset[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Architecture: layer widths `[input, hidden..., output]` plus output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub output: OutputUnit,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>, output: OutputUnit) -> Self {
        Self { sizes, output }
    }
}

/// Feed-forward network `h = h_L ∘ ... ∘ h_1` over the scaled input.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    hidden: Activation,
    output: OutputUnit,
    scaler: InputScaler,
}

/// Per-layer affine images and activations of one forward pass.
/// `post[0]` is the scaled input, `post[l]` the output of layer `l`,
/// and `pre[l-1]` the affine image feeding layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pre: Vec<DVector<f64>>,
    pub post: Vec<DVector<f64>>,
}

/// Initializes a network from `spec`: weights uniform on `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`, zero biases, identity input scaler.
/// Deterministic for a fixed seed.
pub fn init_mlp<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Result<Mlp, NetworkError> {
    if spec.sizes.len() < 3 {
        return Err(NetworkError::InvalidSpec(
            "need at least input, one hidden, and output widths".into(),
        ));
    }
    if spec.sizes.contains(&0) {
        return Err(NetworkError::InvalidSpec("zero-width layer".into()));
    }
    let mut layers = Vec::with_capacity(spec.sizes.len() - 1);
    for l in 1..spec.sizes.len() {
        let fan_in = spec.sizes[l - 1];
        let fan_out = spec.sizes[l];
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-a..a));
        layers.push(Layer { w, b: DVector::zeros(fan_out) });
    }
    Mlp::new(layers, Activation::Tanh, spec.output, InputScaler::identity(spec.sizes[0]))
}

impl Mlp {
    pub fn new(
        layers: Vec<Layer>,
        hidden: Activation,
        output: OutputUnit,
        scaler: InputScaler,
    ) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::InvalidSpec("no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.b.len() != layer.w.nrows() {
                return Err(NetworkError::InvalidSpec(format!(
                    "layer {l}: bias length {} does not match {} rows",
                    layer.b.len(),
                    layer.w.nrows()
                )));
            }
            if l > 0 && layers[l - 1].w.nrows() != layer.w.ncols() {
                return Err(NetworkError::InvalidSpec(format!(
                    "layer {l}: width {} does not chain with previous width {}",
                    layer.w.ncols(),
                    layers[l - 1].w.nrows()
                )));
            }
            if layer.w.iter().any(|v| !v.is_finite()) || layer.b.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::InvalidSpec(format!("layer {l}: non-finite parameter")));
            }
        }
        let n_in = layers[0].w.ncols();
        if scaler.scale.len() != n_in || scaler.offset.len() != n_in {
            return Err(NetworkError::InvalidSpec("scaler width does not match input".into()));
        }
        Ok(Self { layers, hidden, output, scaler })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_unit(&self) -> OutputUnit {
        self.output
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn scaler(&self) -> &InputScaler {
        &self.scaler
    }

    /// Replaces the input scaler (used by the trainer after it has seen the
    /// training set's bounding box).
    pub fn set_scaler(&mut self, scaler: InputScaler) -> Result<(), NetworkError> {
        if scaler.scale.len() != self.input_dim() || scaler.offset.len() != self.input_dim() {
            return Err(NetworkError::InvalidSpec("scaler width does not match input".into()));
        }
        self.scaler = scaler;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flattened parameter vector (weights layer-major row-major, then biases).
    pub fn params_flat(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            for r in 0..layer.w.nrows() {
                for c in 0..layer.w.ncols() {
                    out.push(layer.w[(r, c)]);
                }
            }
        }
        for layer in &self.layers {
            out.extend(layer.b.iter().copied());
        }
        DVector::from_vec(out)
    }

    pub fn set_params_flat(&mut self, params: &DVector<f64>) -> Result<(), NetworkError> {
        if params.len() != self.num_params() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut k = 0;
        for layer in &mut self.layers {
            for r in 0..layer.w.nrows() {
                for c in 0..layer.w.ncols() {
                    layer.w[(r, c)] = params[k];
                    k += 1;
                }
            }
        }
        for layer in &mut self.layers {
            for r in 0..layer.b.len() {
                layer.b[r] = params[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Full forward pass. Softmax outputs lie on the open probability simplex;
    /// linear outputs are the affine image of the last hidden activation.
    pub fn forward(&self, x: &DVector<f64>) -> Result<(DVector<f64>, ForwardTrace), NetworkError> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let num = self.layers.len();
        let mut pre = Vec::with_capacity(num);
        let mut post = Vec::with_capacity(num + 1);
        post.push(self.scaler.apply(x));
        for (l, layer) in self.layers.iter().enumerate() {
            let psi = &layer.w * post.last().unwrap() + &layer.b;
            let eta = if l + 1 < num {
                match self.hidden {
                    Activation::Tanh => psi.map(f64::tanh),
                }
            } else {
                match self.output {
                    OutputUnit::Linear => psi.clone(),
                    OutputUnit::Softmax => softmax(&psi),
                }
            };
            pre.push(psi);
            post.push(eta);
        }
        let y = post.last().unwrap().clone();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NetworkError::NonFiniteOutput);
        }
        Ok((y, ForwardTrace { pre, post }))
    }

    /// Forward pass without keeping the trace.
    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>, NetworkError> {
        Ok(self.forward(x)?.0)
    }

    /// Scalar forward value; requires a width-one output layer.
    pub fn scalar_output(&self, x: &DVector<f64>) -> Result<f64, NetworkError> {
        if self.output_dim() != 1 {
            return Err(NetworkError::NonScalarOutput(self.output_dim()));
        }
        Ok(self.output(x)?[0])
    }

    /// Closed-form Jacobian of the network output with respect to the raw
    /// (unscaled) input: `W_L * prod_l diag(1 - tanh^2(psi_l)) W_l` composed
    /// with the input-scaler Jacobian. Linear output units only.
    pub fn input_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, NetworkError> {
        if self.output != OutputUnit::Linear {
            return Err(NetworkError::SoftmaxHeadUnsupported);
        }
        let (_, trace) = self.forward(x)?;
        let num = self.layers.len();
        let mut jac = self.layers[num - 1].w.clone();
        for l in (0..num - 1).rev() {
            // jac <- jac * diag(tanh'(psi_l)) * W_l
            let psi = &trace.pre[l];
            for c in 0..jac.ncols() {
                let d = 1.0 - psi[c].tanh().powi(2);
                for r in 0..jac.nrows() {
                    jac[(r, c)] *= d;
                }
            }
            jac *= &self.layers[l].w;
        }
        for c in 0..jac.ncols() {
            for r in 0..jac.nrows() {
                jac[(r, c)] *= self.scaler.scale[c];
            }
        }
        Ok(jac)
    }

    /// Gradient of a scalar-output network with respect to its input:
    /// the transposed input Jacobian.
    pub fn scalar_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, NetworkError> {
        if self.output_dim() != 1 {
            return Err(NetworkError::NonScalarOutput(self.output_dim()));
        }
        Ok(self.input_jacobian(x)?.row(0).transpose())
    }

    /// Reverse-mode gradient of `upstream' * h(x)` with respect to the
    /// flattened parameter vector. Works for both output units.
    pub fn param_gradient(
        &self,
        x: &DVector<f64>,
        upstream: &DVector<f64>,
    ) -> Result<DVector<f64>, NetworkError> {
        if upstream.len() != self.output_dim() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        let (y, trace) = self.forward(x)?;
        let num = self.layers.len();

        let mut delta = match self.output {
            OutputUnit::Linear => upstream.clone(),
            OutputUnit::Softmax => {
                // d(softmax)/d(psi) = diag(p) - p p'
                let dot = y.dot(upstream);
                DVector::from_fn(y.len(), |i, _| y[i] * (upstream[i] - dot))
            }
        };

        let mut w_grads: Vec<DMatrix<f64>> = Vec::with_capacity(num);
        let mut b_grads: Vec<DVector<f64>> = Vec::with_capacity(num);
        for l in (0..num).rev() {
            w_grads.push(&delta * trace.post[l].transpose());
            b_grads.push(delta.clone());
            if l > 0 {
                let mut back = self.layers[l].w.transpose() * &delta;
                let psi = &trace.pre[l - 1];
                for i in 0..back.len() {
                    back[i] *= 1.0 - psi[i].tanh().powi(2);
                }
                delta = back;
            }
        }
        w_grads.reverse();
        b_grads.reverse();

        let mut flat = Vec::with_capacity(self.num_params());
        for g in &w_grads {
            for r in 0..g.nrows() {
                for c in 0..g.ncols() {
                    flat.push(g[(r, c)]);
                }
            }
        }
        for g in &b_grads {
            flat.extend(g.iter().copied());
        }
        Ok(DVector::from_vec(flat))
    }

    /// Jacobian of the network output with respect to the flattened parameter
    /// vector, `output_dim x num_params`, from a single backward sweep.
    pub(crate) fn param_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, NetworkError> {
        let (y, trace) = self.forward(x)?;
        let num = self.layers.len();
        let out = self.output_dim();

        // d(y)/d(psi_l), propagated backward.
        let mut dpsi = match self.output {
            OutputUnit::Linear => DMatrix::identity(out, out),
            OutputUnit::Softmax => {
                let mut m = DMatrix::from_fn(out, out, |i, j| -y[i] * y[j]);
                for i in 0..out {
                    m[(i, i)] += y[i];
                }
                m
            }
        };

        let mut blocks_w: Vec<DMatrix<f64>> = Vec::with_capacity(num);
        let mut blocks_b: Vec<DMatrix<f64>> = Vec::with_capacity(num);
        for l in (0..num).rev() {
            let eta = &trace.post[l];
            let rows_l = self.layers[l].w.nrows();
            let cols_l = self.layers[l].w.ncols();
            let mut wblock = DMatrix::zeros(out, rows_l * cols_l);
            for r in 0..rows_l {
                for c in 0..cols_l {
                    let col = r * cols_l + c;
                    for o in 0..out {
                        wblock[(o, col)] = dpsi[(o, r)] * eta[c];
                    }
                }
            }
            blocks_w.push(wblock);
            blocks_b.push(dpsi.clone());
            if l > 0 {
                let mut next = &dpsi * &self.layers[l].w;
                let psi = &trace.pre[l - 1];
                for c in 0..next.ncols() {
                    let d = 1.0 - psi[c].tanh().powi(2);
                    for r in 0..next.nrows() {
                        next[(r, c)] *= d;
                    }
                }
                dpsi = next;
            }
        }
        blocks_w.reverse();
        blocks_b.reverse();

        let mut jac = DMatrix::zeros(out, self.num_params());
        let mut k = 0;
        for b in blocks_w.iter().chain(blocks_b.iter()) {
            jac.view_mut((0, k), (out, b.ncols())).copy_from(b);
            k += b.ncols();
        }
        Ok(jac)
    }
}

/// Numerically safe softmax (max-subtraction leaves the value unchanged).
fn softmax(psi: &DVector<f64>) -> DVector<f64> {
    let max = psi.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps = psi.map(|v| (v - max).exp());
    let sum: f64 = exps.iter().sum();
    exps / sum
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpJson {
    layers: Vec<LayerJson>,
    hidden: Activation,
    output: OutputUnit,
    scaler: InputScaler,
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerJson {
                w: (0..l.w.nrows()).map(|r| l.w.row(r).iter().copied().collect()).collect(),
                b: l.b.iter().copied().collect(),
            })
            .collect();
        MlpJson { layers, hidden: self.hidden, output: self.output, scaler: self.scaler.clone() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = MlpJson::deserialize(deserializer)?;
        let mut layers = Vec::with_capacity(raw.layers.len());
        for l in raw.layers {
            if l.w.is_empty() {
                return Err(serde::de::Error::custom("empty weight matrix"));
            }
            let cols = l.w[0].len();
            if l.w.iter().any(|r| r.len() != cols) {
                return Err(serde::de::Error::custom("ragged weight matrix"));
            }
            let w = DMatrix::from_fn(l.w.len(), cols, |i, j| l.w[i][j]);
            layers.push(Layer { w, b: DVector::from_vec(l.b) });
        }
        Mlp::new(layers, raw.hidden, raw.output, raw.scaler).map_err(serde::de::Error::custom)
    }
}
