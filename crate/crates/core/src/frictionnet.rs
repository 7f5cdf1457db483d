//! Small fully connected networks trained by backpropagation: the friction
//! predictor (control signal → friction coefficients) and the data-driven
//! inverse-dynamics baseline (pose change → control duty).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::sigmoid;
use crate::model::{FrictionCoeffs, WheelVec, WHEELS};

/// Training aborts once the loss exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub const FRICTION_NET_SIZES: [usize; 3] = [4, 16, 4];
pub const BASELINE_NET_SIZES: [usize; 3] = [3, 32, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputTransform {
    Identity,
    /// `2·σ(z)`, range `(0, 2)`.
    TwoSigmoid,
    /// `tanh(z)`, range `(−1, 1)`.
    Tanh,
}

impl OutputTransform {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputTransform::Identity => z,
            OutputTransform::TwoSigmoid => 2.0 * sigmoid(z),
            OutputTransform::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the output value.
    fn slope(self, y: f64) -> f64 {
        match self {
            OutputTransform::Identity => 1.0,
            OutputTransform::TwoSigmoid => {
                let s = 0.5 * y;
                2.0 * s * (1.0 - s)
            }
            OutputTransform::Tanh => 1.0 - y * y,
        }
    }
}

/// Dense layer, `weights` row-major with one row per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn forward(&self, a: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Multilayer perceptron with tanh hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDoc", into = "MlpDoc")]
pub struct Mlp {
    layers: Vec<Layer>,
    output: OutputTransform,
    input_scale: Vec<f64>,
}

/// Serialized form.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpDoc {
    sizes: Vec<usize>,
    hidden: String,
    output: OutputTransform,
    input_scale: Vec<f64>,
    layers: Vec<Layer>,
}

impl From<Mlp> for MlpDoc {
    fn from(net: Mlp) -> Self {
        MlpDoc {
            sizes: net.sizes(),
            hidden: "tanh".into(),
            output: net.output,
            input_scale: net.input_scale,
            layers: net.layers,
        }
    }
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = Error;

    fn try_from(doc: MlpDoc) -> Result<Self> {
        if doc.hidden != "tanh" {
            return Err(Error::Serde(format!("unsupported hidden activation `{}`", doc.hidden)));
        }
        let net = Mlp {
            layers: doc.layers,
            output: doc.output,
            input_scale: doc.input_scale,
        };
        net.validate()?;
        if net.sizes() != doc.sizes {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", doc.sizes),
                got: format!("{:?}", net.sizes()),
            });
        }
        Ok(net)
    }
}

impl Mlp {
    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize], output: OutputTransform) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: vec![vec![0.0; w[0]]; w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layers,
            output,
            input_scale: vec![1.0; sizes[0]],
        })
    }

    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn random(sizes: &[usize], output: OutputTransform, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            for row in &mut layer.weights {
                for w in row.iter_mut() {
                    *w = rng.random_range(-bound..bound);
                }
            }
            for b in &mut layer.bias {
                *b = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Inputs are multiplied elementwise by `scale` before the first layer.
    pub fn with_input_scale(mut self, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != self.inputs() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input scales", self.inputs()),
                got: scale.len().to_string(),
            });
        }
        self.input_scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers.first().map_or(0, Layer::inputs)];
        s.extend(self.layers.iter().map(|l| l.bias.len()));
        s
    }

    pub fn inputs(&self) -> usize {
        self.sizes()[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes().last().unwrap_or(&0)
    }

    pub fn output_transform(&self) -> OutputTransform {
        self.output
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: "at least one layer".into(),
                got: "none".into(),
            });
        }
        let mut width = self.layers[0].inputs();
        for (i, l) in self.layers.iter().enumerate() {
            let ok =
                l.weights.len() == l.bias.len() && !l.bias.is_empty() && l.weights.iter().all(|r| r.len() == width);
            if !ok || width == 0 {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {i} with {width} inputs"),
                    got: format!("{}×{} weights, {} biases", l.weights.len(), l.inputs(), l.bias.len()),
                });
            }
            width = l.bias.len();
        }
        if self.input_scale.len() != self.layers[0].inputs() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input scales", self.layers[0].inputs()),
                got: self.input_scale.len().to_string(),
            });
        }
        let finite = self.parameters().iter().chain(&self.input_scale).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidTraining("non-finite network parameter".into()));
        }
        Ok(())
    }

    fn require_shape(&self, inputs: usize, outputs: usize, output: OutputTransform) -> Result<()> {
        if self.inputs() != inputs || self.outputs() != outputs || self.output != output {
            return Err(Error::ShapeMismatch {
                expected: format!("{inputs} inputs, {outputs} outputs, {output:?} output"),
                got: format!("{:?} with {:?} output", self.sizes(), self.output),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.iter().zip(&self.input_scale).map(|(v, s)| v * s).collect::<Vec<_>>());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&acts[i]);
            let a = if i == last {
                z.into_iter().map(|v| self.output.apply(v)).collect()
            } else {
                z.into_iter().map(f64::tanh).collect()
            };
            acts.push(a);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} inputs", self.inputs()),
                got: x.len().to_string(),
            });
        }
        Ok(self.activations(x).pop().unwrap_or_default())
    }

    /// Flattened parameters: each layer's weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().flatten().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        let n = self.parameters().len();
        if p.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} parameters"),
                got: p.len().to_string(),
            });
        }
        let mut it = p.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().flatten().chain(l.bias.iter_mut()) {
                *w = *it.next().unwrap_or(&0.0);
            }
        }
        Ok(())
    }

    /// Mean squared error over all outputs of all samples, plus
    /// `l2·Σw²` over weights (biases excluded).
    pub fn loss(&self, data: &[Sample], l2: f64) -> f64 {
        let m = self.outputs() as f64;
        let n = data.len() as f64;
        let mse: f64 = data
            .iter()
            .map(|s| {
                let y = self.activations(&s.input).pop().unwrap_or_default();
                y.iter().zip(&s.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / (n * m);
        mse + l2 * self.weight_norm2()
    }

    fn weight_norm2(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().flatten())
            .map(|w| w * w)
            .sum()
    }

    /// Loss and its gradient with respect to [`Mlp::parameters`].
    pub fn loss_gradient(&self, data: &[Sample], l2: f64) -> (f64, Vec<f64>) {
        let m = self.outputs() as f64;
        let n = data.len() as f64;
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: vec![vec![0.0; l.inputs()]; l.bias.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        let mut mse = 0.0;
        let last = self.layers.len() - 1;
        for s in data {
            let acts = self.activations(&s.input);
            let y = &acts[last + 1];
            let mut delta: Vec<f64> = y
                .iter()
                .zip(&s.target)
                .map(|(a, b)| {
                    mse += (a - b).powi(2);
                    2.0 * (a - b) / (n * m) * self.output.slope(*a)
                })
                .collect();
            for li in (0..=last).rev() {
                let a_in = &acts[li];
                let g = &mut grads[li];
                for (r, d) in delta.iter().enumerate() {
                    g.bias[r] += d;
                    for (c, a) in a_in.iter().enumerate() {
                        g.weights[r][c] += d * a;
                    }
                }
                if li > 0 {
                    let w = &self.layers[li].weights;
                    delta = (0..a_in.len())
                        .map(|c| {
                            let back: f64 = delta.iter().enumerate().map(|(r, d)| w[r][c] * d).sum();
                            back * (1.0 - a_in[c] * a_in[c])
                        })
                        .collect();
                }
            }
        }
        if l2 > 0.0 {
            for (g, l) in grads.iter_mut().zip(&self.layers) {
                for (gr, wr) in g.weights.iter_mut().zip(&l.weights) {
                    for (gv, wv) in gr.iter_mut().zip(wr) {
                        *gv += 2.0 * l2 * wv;
                    }
                }
            }
        }
        let flat = grads
            .iter()
            .flat_map(|l| l.weights.iter().flatten().chain(&l.bias).copied())
            .collect();
        (mse / (n * m) + l2 * self.weight_norm2(), flat)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::ShapeMismatch {
            expected: "at least two positive layer sizes".into(),
            got: format!("{sizes:?}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Drives initialization and mini-batch shuffling.
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 20_000,
            batch_size: None,
            seed: 42,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidTraining(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidTraining("epochs must be ≥ 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidTraining("batch size must be ≥ 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidTraining(format!(
                "L2 penalty must be ≥ 0, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub net: Mlp,
    /// Training loss before each epoch, then after the last one.
    pub history: Vec<f64>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Gradient descent on the mean squared error. Samples are put in a
/// canonical order first, so the result does not depend on dataset order.
pub fn train(net: &Mlp, dataset: &[Sample], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    net.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidTraining("empty dataset".into()));
    }
    let (ni, no) = (net.inputs(), net.outputs());
    if let Some((i, s)) = dataset
        .iter()
        .enumerate()
        .find(|(_, s)| s.input.len() != ni || s.target.len() != no)
    {
        return Err(Error::ShapeMismatch {
            expected: format!("sample with {ni} inputs and {no} targets"),
            got: format!(
                "sample {i} with {} inputs and {} targets",
                s.input.len(),
                s.target.len()
            ),
        });
    }
    if dataset
        .iter()
        .any(|s| s.input.iter().chain(&s.target).any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidTraining("non-finite sample".into()));
    }

    let mut data = dataset.to_vec();
    data.sort_by(|a, b| lexicographic(&a.input, &b.input).then_with(|| lexicographic(&a.target, &b.target)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = net.clone();
    let mut params = net.parameters();
    let mut history = Vec::with_capacity(cfg.epochs + 1);

    for epoch in 0..cfg.epochs {
        let loss = match cfg.batch_size {
            None => {
                let (loss, g) = net.loss_gradient(&data, cfg.l2);
                check_divergence(epoch, loss)?;
                step(&mut params, &g, cfg.learning_rate);
                loss
            }
            Some(bs) => {
                let loss = net.loss(&data, cfg.l2);
                check_divergence(epoch, loss)?;
                data.shuffle(&mut rng);
                for chunk in data.chunks(bs) {
                    let (_, g) = net.loss_gradient(chunk, cfg.l2);
                    step(&mut params, &g, cfg.learning_rate);
                    net.set_parameters(&params)?;
                }
                loss
            }
        };
        history.push(loss);
        net.set_parameters(&params)?;
    }
    let last = net.loss(&data, cfg.l2);
    check_divergence(cfg.epochs, last)?;
    history.push(last);
    Ok(Trained { net, history })
}

fn step(params: &mut [f64], g: &[f64], lr: f64) {
    for (p, gv) in params.iter_mut().zip(g) {
        *p -= lr * gv;
    }
}

fn check_divergence(epoch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
        return Err(Error::Diverged { epoch, loss });
    }
    Ok(())
}

/// Friction coefficients predicted from a control signal.
pub fn predict_friction(net: &Mlp, omega_s: &WheelVec) -> Result<FrictionCoeffs> {
    net.require_shape(WHEELS, WHEELS, OutputTransform::TwoSigmoid)?;
    let y = net.forward(omega_s)?;
    Ok(FrictionCoeffs::clamped(std::array::from_fn(|j| y[j])))
}

/// Normalized control duty in `[−1, 1]` predicted from a pose change `(Δx, Δy, Δθ)`.
pub fn predict_controls_baseline(net: &Mlp, delta_pose: &[f64; 3]) -> Result<WheelVec> {
    net.require_shape(3, WHEELS, OutputTransform::Tanh)?;
    let y = net.forward(delta_pose)?;
    Ok(std::array::from_fn(|j| y[j]))
}
