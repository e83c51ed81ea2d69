//! The cost predictor: a small fully connected network (no hidden layer, or
//! ReLU hidden layers) with hand-written backpropagation and SGD / Adam.
//!
//! Inputs are matrices with one sample per row, so a whole instance (one
//! feature row per predicted component) goes through in one call.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DMatrix::zeros(output, input),
            bias: DVector::zeros(output),
        }
    }

    /// Uniform in `+-1/sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(output, input, |_, _| rng.random_range(-bound..=bound)),
            bias: DVector::from_fn(output, |_, _| rng.random_range(-bound..=bound)),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input: usize,
    /// Hidden widths; empty for a plain affine model.
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input: 1,
            hidden: Vec::new(),
            output: 1,
        }
    }
}

impl ModelConfig {
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.output))
            .collect()
    }
}

/// Affine layers with ReLU between them and identity at the output.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorModel {
    pub layers: Vec<Layer>,
}

/// Activations kept by [`PredictorModel::forward_cached`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<DMatrix<f64>>,
}

/// Gradient buffers with the model's parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &PredictorModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.input(), l.output()))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, s: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight * s;
            a.bias += &b.bias * s;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.norm_squared() + l.bias.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

impl PredictorModel {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, cfg: &ModelConfig) -> Result<Self> {
        let widths = cfg.widths();
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(Self {
            layers: widths
                .windows(2)
                .map(|w| Layer::random(rng, w[0], w[1]))
                .collect(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output() != w[1].input() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    w[0].output(),
                    i + 1,
                    w[1].input()
                )));
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.output()) {
            return Err(Error::Shape("bias length must match layer output".into()));
        }
        Ok(Self { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn affine(layer: &Layer, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = h * layer.weight.transpose();
        for mut row in out.row_iter_mut() {
            row += layer.bias.transpose();
        }
        out
    }

    fn check_input(&self, z: &DMatrix<f64>) -> Result<()> {
        if z.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                z.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Output for each row of `z`.
    pub fn forward(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(z)?.0)
    }

    pub fn forward_cached(&self, z: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_input(z)?;
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::new(),
        };
        let mut h = z.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = Self::affine(layer, &h);
            cache.inputs.push(h);
            if i < last {
                h = a.map(|v| v.max(0.0));
                cache.pre.push(a);
            } else {
                h = a;
            }
        }
        Ok((h, cache))
    }

    /// Single-output model applied row-wise: one prediction per row of `z`.
    pub fn predict(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        if self.output_width() != 1 {
            return Err(Error::Shape("predict needs a single-output model".into()));
        }
        Ok(self.forward(z)?.column(0).into_owned())
    }

    /// Gradient of `sum(output .* grad_out)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape(
                "forward cache does not belong to this model".into(),
            ));
        }
        let rows = cache.inputs[0].nrows();
        if grad_out.nrows() != rows || grad_out.ncols() != self.output_width() {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, expected {rows}x{}",
                grad_out.nrows(),
                grad_out.ncols(),
                self.output_width()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            grads.layers[i].weight = delta.transpose() * &cache.inputs[i];
            grads.layers[i].bias = delta.row_sum().transpose();
            if i > 0 {
                let mut back = &delta * &self.layers[i].weight;
                back.zip_apply(&cache.pre[i - 1], |g, a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        Ok(grads)
    }

    /// Gradient for a single-output model from a per-row gradient vector.
    pub fn backward_vector(&self, cache: &ForwardCache, grad: &DVector<f64>) -> Result<Gradients> {
        self.backward(
            cache,
            &DMatrix::from_column_slice(grad.len(), 1, grad.as_slice()),
        )
    }

    pub fn to_checkpoint(&self, optimizer: Option<&OptimizerState>) -> Checkpoint {
        Checkpoint {
            layers: self.layers.iter().map(LayerFile::from).collect(),
            optimizer: optimizer.map(OptimizerFile::from),
        }
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<(Self, Option<OptimizerState>)> {
        let layers = cp
            .layers
            .iter()
            .map(Layer::try_from)
            .collect::<Result<Vec<_>>>()?;
        let model = Self::from_layers(layers)?;
        let opt = match &cp.optimizer {
            None => None,
            Some(f) => Some(OptimizerState::from_file(f, &model)?),
        };
        Ok((model, opt))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// L2 coefficient added to weight (not bias) gradients.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 0.01,
            weight_decay: 0.0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, model: &PredictorModel) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
        }
    }

    /// SGD: `theta -= lr * g`. Adam: bias-corrected first and second moments.
    pub fn step(&mut self, model: &mut PredictorModel, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != model.layers.len()
            || grads
                .layers
                .iter()
                .zip(&model.layers)
                .any(|(g, l)| g.weight.shape() != l.weight.shape() || g.bias.len() != l.bias.len())
        {
            return Err(Error::Shape(
                "gradient shapes do not match the model".into(),
            ));
        }
        self.step += 1;
        let lr = self.config.lr;
        let wd = self.config.weight_decay;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let g = &grads.layers[i];
            let gw = if wd != 0.0 {
                &g.weight + &layer.weight * wd
            } else {
                g.weight.clone()
            };
            match self.config.kind {
                OptimizerKind::Sgd => {
                    layer.weight -= gw * lr;
                    layer.bias -= &g.bias * lr;
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m.layers[i], &mut self.v.layers[i]);
                    adam(
                        layer.weight.as_mut_slice(),
                        gw.as_slice(),
                        m.weight.as_mut_slice(),
                        v.weight.as_mut_slice(),
                        lr,
                        c1,
                        c2,
                    );
                    adam(
                        layer.bias.as_mut_slice(),
                        g.bias.as_slice(),
                        m.bias.as_mut_slice(),
                        v.bias.as_mut_slice(),
                        lr,
                        c1,
                        c2,
                    );
                }
            }
        }
        Ok(())
    }

    fn from_file(f: &OptimizerFile, model: &PredictorModel) -> Result<Self> {
        let to_grads = |flat: &[f64]| -> Result<Gradients> {
            if flat.len() != model.num_parameters() {
                return Err(Error::Shape(
                    "optimizer moments do not match the model".into(),
                ));
            }
            let mut g = Gradients::zeros_like(model);
            let mut it = flat.iter().copied();
            for l in &mut g.layers {
                for r in 0..l.weight.nrows() {
                    for c in 0..l.weight.ncols() {
                        l.weight[(r, c)] = it.next().expect("length checked");
                    }
                }
                for b in l.bias.iter_mut() {
                    *b = it.next().expect("length checked");
                }
            }
            Ok(g)
        };
        Ok(Self {
            config: f.config.clone(),
            m: to_grads(&f.m)?,
            v: to_grads(&f.v)?,
            step: f.step,
        })
    }
}

fn adam(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..theta.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        theta[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
}

/// Layer in checkpoint form: shape plus row-major weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&Layer> for LayerFile {
    fn from(l: &Layer) -> Self {
        Self {
            rows: l.output(),
            cols: l.input(),
            weight: l.weight.transpose().as_slice().to_vec(),
            bias: l.bias.as_slice().to_vec(),
        }
    }
}

impl TryFrom<&LayerFile> for Layer {
    type Error = Error;

    fn try_from(f: &LayerFile) -> Result<Self> {
        if f.weight.len() != f.rows * f.cols || f.bias.len() != f.rows {
            return Err(Error::Shape(format!(
                "checkpoint layer {}x{} has inconsistent arrays",
                f.rows, f.cols
            )));
        }
        Ok(Layer {
            weight: DMatrix::from_row_slice(f.rows, f.cols, &f.weight),
            bias: DVector::from_row_slice(&f.bias),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerFile {
    pub config: OptimizerConfig,
    pub step: u64,
    /// Moments flattened layer by layer: row-major weights, then bias.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

fn flatten(g: &Gradients) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|l| {
            LayerFile::from(l)
                .weight
                .into_iter()
                .chain(l.bias.iter().copied())
        })
        .collect()
}

impl From<&OptimizerState> for OptimizerFile {
    fn from(s: &OptimizerState) -> Self {
        Self {
            config: s.config.clone(),
            step: s.step,
            m: flatten(&s.m),
            v: flatten(&s.v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerFile>,
}
