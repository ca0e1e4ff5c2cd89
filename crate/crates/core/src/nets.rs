//! Fully-connected networks.
//!
//! Weights are stored `out × in` and a batch is one point per row, so a
//! layer computes `act(X·Wᵀ + b)`. Discriminators end in a sigmoid and
//! output a probability; generators and encoders end in the identity.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    Identity,
}

impl Activation {
    fn apply(self, m: &mut Matrix) {
        match self {
            Activation::Relu => m.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Sigmoid => m
                .as_mut_slice()
                .iter_mut()
                .for_each(|x| *x = crate::autodiff::sigmoid(*x)),
            Activation::Tanh => m.as_mut_slice().iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Softmax => *m = crate::autodiff::softmax_rows(m),
            Activation::Identity => {}
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Softmax => tape.softmax(x),
            Activation::Identity => Ok(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`.
    pub weight: Matrix,
    /// `1 × out`, if the layer has a bias.
    pub bias: Option<Matrix>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// One layer of a [`NetSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub bias: bool,
}

/// Shape of a network, used by [`init_params`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    fn hidden(input_dim: usize, hidden: &[usize], out: usize, head: Activation) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&width| LayerSpec {
                width,
                activation: Activation::Relu,
                bias: true,
            })
            .collect();
        layers.push(LayerSpec {
            width: out,
            activation: head,
            bias: true,
        });
        NetSpec { input_dim, layers }
    }

    /// ReLU hidden layers and a single sigmoid output.
    pub fn discriminator(d_x: usize, hidden: &[usize]) -> Self {
        Self::hidden(d_x, hidden, 1, Activation::Sigmoid)
    }

    /// ReLU hidden layers and an identity output of size `d_x`.
    pub fn generator(d_z: usize, hidden: &[usize], d_x: usize) -> Self {
        Self::hidden(d_z, hidden, d_x, Activation::Identity)
    }

    /// ReLU hidden layers mapping data to latent codes.
    pub fn encoder(d_x: usize, hidden: &[usize], d_z: usize) -> Self {
        Self::hidden(d_x, hidden, d_z, Activation::Identity)
    }
}

/// Builds a network with He-uniform weights for ReLU layers and
/// Xavier-uniform weights otherwise; biases start at zero.
///
/// The same `(spec, seed)` always yields the same parameters.
pub fn init_params(spec: &NetSpec, seed: u64) -> Result<MlpNet> {
    init_params_with(spec, &mut rng::seeded(seed))
}

/// [`init_params`] drawing from a caller-supplied stream.
pub fn init_params_with(spec: &NetSpec, rng: &mut rng::Rng) -> Result<MlpNet> {
    if spec.input_dim == 0 {
        return Err(Error::Config("network input dimension is zero".into()));
    }
    if spec.layers.is_empty() {
        return Err(Error::Config("network has no layers".into()));
    }
    let mut fan_in = spec.input_dim;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, ls) in spec.layers.iter().enumerate() {
        if ls.width == 0 {
            return Err(Error::Config(format!("layer {i} has zero width")));
        }
        let bound = match ls.activation {
            Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            _ => (6.0 / (fan_in + ls.width) as f64).sqrt(),
        };
        let data = (0..ls.width * fan_in)
            .map(|_| rng::uniform(rng, -bound, bound))
            .collect();
        layers.push(Layer {
            weight: Matrix::from_vec(ls.width, fan_in, data),
            bias: ls.bias.then(|| Matrix::zeros(1, ls.width)),
            activation: ls.activation,
        });
        fan_in = ls.width;
    }
    MlpNet::new(layers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetFile", into = "NetFile")]
pub struct MlpNet {
    layers: Vec<Layer>,
}

impl MlpNet {
    /// Validates that layer dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Structural("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::Structural(format!("layer {i} is empty")));
            }
            if let Some(b) = &l.bias {
                if b.shape() != (1, l.out_dim()) {
                    return Err(Error::Structural(format!(
                        "layer {i} bias is {:?}, expected (1, {})",
                        b.shape(),
                        l.out_dim()
                    )));
                }
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::Structural(format!(
                    "layer {} outputs {} values but layer {i} expects {}",
                    i - 1,
                    layers[i - 1].out_dim(),
                    l.in_dim()
                )));
            }
        }
        Ok(MlpNet { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// True when the output layer is a sigmoid, i.e. outputs lie in (0, 1).
    pub fn has_probability_head(&self) -> bool {
        self.layers[self.layers.len() - 1].activation == Activation::Sigmoid
    }

    /// Replaces the activation of the output layer, e.g. to read logits.
    pub fn set_head_activation(&mut self, activation: Activation) {
        if let Some(l) = self.layers.last_mut() {
            l.activation = activation;
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    /// Parameter tensors in order: weight, then bias (if any), per layer.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            if let Some(b) = &l.bias {
                out.push(b);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            if let Some(b) = &mut l.bias {
                out.push(b);
            }
        }
        out
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            tensors: self.params().into_iter().cloned().collect(),
        }
    }

    /// Overwrites the parameters; shapes must match exactly.
    pub fn restore(&mut self, snap: &ParamSnapshot) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != snap.tensors.len() {
            return Err(Error::Structural(format!(
                "snapshot has {} tensors, network has {}",
                snap.tensors.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter_mut().zip(&snap.tensors) {
            if p.shape() != s.shape() {
                return Err(Error::Structural(format!(
                    "snapshot tensor {:?} does not fit parameter {:?}",
                    s.shape(),
                    p.shape()
                )));
            }
        }
        for (p, s) in params.into_iter().zip(&snap.tensors) {
            p.clone_from(s);
        }
        Ok(())
    }

    /// Registers the parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundNet {
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                weight: tape.leaf(l.weight.clone()),
                bias: l.bias.as_ref().map(|b| tape.leaf(b.clone())),
                activation: l.activation,
            })
            .collect();
        BoundNet { layers }
    }

    /// Forward pass without a tape, one point per row of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x.cols())?;
        let mut h = x.clone();
        for l in &self.layers {
            h = Self::affine(l, &h);
            l.activation.apply(&mut h);
        }
        Ok(h)
    }

    /// Forward pass for a single point.
    pub fn predict_one(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row(v))?.into_vec())
    }

    /// Hash of the ReLU on/off pattern at `x`.
    ///
    /// Two inputs with the same fingerprint lie (with overwhelming
    /// probability) in the same linear piece of the network.
    pub fn relu_pattern(&self, x: &Matrix) -> Result<u64> {
        self.check_input(x.cols())?;
        let mut hasher = DefaultHasher::new();
        let mut h = x.clone();
        for l in &self.layers {
            h = Self::affine(l, &h);
            if l.activation == Activation::Relu {
                let (mut word, mut used) = (0u64, 0u32);
                for &v in h.as_slice() {
                    word = (word << 1) | (v > 0.0) as u64;
                    used += 1;
                    if used == 64 {
                        hasher.write_u64(word);
                        (word, used) = (0, 0);
                    }
                }
                hasher.write_u64(word);
                hasher.write_u32(used);
            }
            l.activation.apply(&mut h);
        }
        Ok(hasher.finish())
    }

    fn affine(l: &Layer, h: &Matrix) -> Matrix {
        let mut out = Matrix::matmul(h, &l.weight, false, true);
        if let Some(b) = &l.bias {
            let row = b.as_slice();
            for i in 0..out.rows() {
                for (x, y) in out.row_slice_mut(i).iter_mut().zip(row) {
                    *x += y;
                }
            }
        }
        out
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Structural(format!(
                "input has dimension {cols}, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Records a forward pass on `tape`, returning the output and the bound
    /// parameters.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, BoundNet)> {
        let bound = self.bind(tape);
        let out = bound.forward(tape, x)?;
        Ok((out, bound))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub weight: Var,
    pub bias: Option<Var>,
    pub activation: Activation,
}

/// Network parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct BoundNet {
    layers: Vec<BoundLayer>,
}

impl BoundNet {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for l in &self.layers {
            h = tape.matmul_t(h, l.weight, false, true)?;
            if let Some(b) = l.bias {
                h = tape.add_row(h, b)?;
            }
            h = l.activation.record(tape, h)?;
        }
        Ok(h)
    }

    /// Parameter handles in the same order as [`MlpNet::params`].
    pub fn params(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight);
            if let Some(b) = l.bias {
                out.push(b);
            }
        }
        out
    }
}

/// A model that assigns each input point a probability of being real.
pub trait Discriminator {
    fn input_dim(&self) -> usize;

    /// One probability per row of `points`.
    fn probs(&self, points: &Matrix) -> Result<Vec<f64>>;
}

impl Discriminator for MlpNet {
    fn input_dim(&self) -> usize {
        MlpNet::input_dim(self)
    }

    fn probs(&self, points: &Matrix) -> Result<Vec<f64>> {
        if self.output_dim() != 1 {
            return Err(Error::Contract(format!(
                "a discriminator has one output, this network has {}",
                self.output_dim()
            )));
        }
        Ok(self.predict(points)?.into_vec())
    }
}

/// Flat ordered list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub tensors: Vec<Matrix>,
}

impl ParamSnapshot {
    pub fn zeros_like(net: &MlpNet) -> Self {
        ParamSnapshot {
            tensors: net
                .params()
                .iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }
}

/// On-disk form of an [`MlpNet`]:
///
/// ```json
/// {"format":"ganlab-mlp","version":1,
///  "layers":[{"activation":"relu","shape":[64,2],"weight":[...],"bias":[...]}]}
/// ```
///
/// `shape` is `[out, in]`, `weight` is row-major, `bias` is `null` for
/// bias-free layers.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetFile {
    format: String,
    version: u32,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    activation: Activation,
    shape: [usize; 2],
    weight: Vec<f64>,
    bias: Option<Vec<f64>>,
}

const NET_FORMAT: &str = "ganlab-mlp";

impl From<MlpNet> for NetFile {
    fn from(net: MlpNet) -> Self {
        NetFile {
            format: NET_FORMAT.into(),
            version: 1,
            layers: net
                .layers
                .into_iter()
                .map(|l| LayerFile {
                    activation: l.activation,
                    shape: [l.weight.rows(), l.weight.cols()],
                    weight: l.weight.into_vec(),
                    bias: l.bias.map(Matrix::into_vec),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetFile> for MlpNet {
    type Error = Error;

    fn try_from(f: NetFile) -> Result<Self> {
        if f.format != NET_FORMAT || f.version != 1 {
            return Err(Error::Parse(format!(
                "unknown parameter format {} v{}",
                f.format, f.version
            )));
        }
        let mut layers = Vec::with_capacity(f.layers.len());
        for (i, l) in f.layers.into_iter().enumerate() {
            let [out, inp] = l.shape;
            if l.weight.len() != out * inp {
                return Err(Error::Parse(format!(
                    "layer {i}: weight has {} values, shape says {out}x{inp}",
                    l.weight.len()
                )));
            }
            let bias = match l.bias {
                Some(b) if b.len() != out => {
                    return Err(Error::Parse(format!(
                        "layer {i}: bias has {} values, expected {out}",
                        b.len()
                    )))
                }
                Some(b) => Some(Matrix::from_vec(1, out, b)),
                None => None,
            };
            layers.push(Layer {
                weight: Matrix::from_vec(out, inp, l.weight),
                bias,
                activation: l.activation,
            });
        }
        MlpNet::new(layers)
    }
}
