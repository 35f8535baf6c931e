//! Feed-forward networks and exact forward inference.
//!
//! A [`Network`] is an ordered list of [`Layer`]s over a fixed input shape,
//! ending in a single scalar. At construction the shape chain is validated
//! and every layer is lowered into a small set of [`Op`]s: sparse affine
//! maps (dense and convolution layers), elementwise ReLU, max-pooling
//! windows, and the optional sigmoid head. All engines in this crate walk
//! the same ops, so the summation order of a concrete evaluation is the
//! one every abstraction over-approximates.

mod ops;
pub mod random;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::ops::{AffineMap, Op, PoolWindows};
use crate::error::{Error, Result, ShapeError};
use crate::tensor::Tensor;

/// One layer of a feed-forward network.
///
/// Dense weights are indexed `weights[out][in]`: entry `(i, j)` multiplies
/// input `j` into output `i`. Inputs of rank above one are flattened in
/// row-major order before a dense layer. Convolutions use valid padding and
/// channel-major kernels `kernels[out_ch][in_ch][ky][kx]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Layer {
    Dense {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Conv2d {
        kernels: Vec<Vec<Vec<Vec<f64>>>>,
        bias: Vec<f64>,
        #[serde(default = "unit_stride")]
        stride: (usize, usize),
    },
    MaxPool {
        window: (usize, usize),
        stride: (usize, usize),
    },
    Relu,
    Sigmoid,
}

fn unit_stride() -> (usize, usize) {
    (1, 1)
}

impl Layer {
    /// Lowercase layer name as used in model files.
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
        }
    }
}

/// Checks the shape chain of `layers` starting from `input_shape`.
///
/// Returns the shape after every layer (the input shape first) or every
/// error found. Checking continues past a bad layer whenever its output
/// shape is still determined.
pub fn validate(input_shape: &[usize], layers: &[Layer]) -> Result<Vec<Vec<usize>>, Vec<ShapeError>> {
    let mut errors = Vec::new();
    let err = |layer: Option<usize>, message: String| ShapeError { layer, message };

    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(vec![err(
            None,
            format!("input shape {input_shape:?} must be non-empty with positive dimensions"),
        )]);
    }
    if layers.is_empty() {
        return Err(vec![err(None, "output arity ≠ 1 or no layers".into())]);
    }

    let mut shapes = vec![input_shape.to_vec()];
    let mut current = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let here = Some(i);
        let next = match layer {
            Layer::Dense { weights, bias } => {
                let fan_in: usize = current.iter().product();
                if weights.is_empty() {
                    errors.push(err(here, "dense layer has no output rows".into()));
                }
                if weights.len() != bias.len() {
                    errors.push(err(
                        here,
                        format!("{} weight rows but bias of length {}", weights.len(), bias.len()),
                    ));
                }
                if let Some(row) = weights.iter().position(|r| r.len() != fan_in) {
                    errors.push(err(
                        here,
                        format!(
                            "expected input of size {} (row {row}), got shape {current:?} of size {fan_in}",
                            weights[row].len()
                        ),
                    ));
                }
                if weights.iter().flatten().chain(bias).any(|v| !v.is_finite()) {
                    errors.push(err(here, "non-finite parameter".into()));
                }
                Some(vec![weights.len().max(1)])
            }
            Layer::Conv2d { kernels, bias, stride } => conv_shape(&current, kernels, bias, *stride)
                .map_err(|m| errors.push(err(here, m)))
                .ok(),
            Layer::MaxPool { window, stride } => pool_shape(&current, *window, *stride)
                .map_err(|m| errors.push(err(here, m)))
                .ok(),
            Layer::Relu => Some(current.clone()),
            Layer::Sigmoid => {
                if i + 1 != layers.len() {
                    errors.push(err(here, "sigmoid is only allowed as the final layer".into()));
                }
                Some(current.clone())
            }
        };
        match next {
            Some(shape) => {
                current = shape;
                shapes.push(current.clone());
            }
            None => return Err(errors),
        }
    }
    if current != [1] {
        errors.push(err(
            Some(layers.len() - 1),
            format!("output arity ≠ 1: final shape is {current:?}, expected [1]"),
        ));
    }
    if errors.is_empty() {
        Ok(shapes)
    } else {
        Err(errors)
    }
}

fn conv_shape(
    current: &[usize],
    kernels: &[Vec<Vec<Vec<f64>>>],
    bias: &[f64],
    (sh, sw): (usize, usize),
) -> Result<Vec<usize>, String> {
    let &[channels, h, w] = current else {
        return Err(format!("conv2d expects a [channels, h, w] input, got {current:?}"));
    };
    if kernels.is_empty() {
        return Err("conv2d has no kernels".into());
    }
    if kernels.len() != bias.len() {
        return Err(format!("{} kernels but bias of length {}", kernels.len(), bias.len()));
    }
    if sh == 0 || sw == 0 {
        return Err("stride must be at least 1".into());
    }
    let kh = kernels[0].first().map_or(0, Vec::len);
    let kw = kernels[0].first().and_then(|k| k.first()).map_or(0, Vec::len);
    if kh == 0 || kw == 0 {
        return Err("empty kernel".into());
    }
    for (o, kernel) in kernels.iter().enumerate() {
        if kernel.len() != channels {
            return Err(format!(
                "kernel {o} has {} input channels, input has {channels}",
                kernel.len()
            ));
        }
        if kernel.iter().any(|c| c.len() != kh || c.iter().any(|r| r.len() != kw)) {
            return Err(format!("kernel {o} is not {kh}x{kw}"));
        }
    }
    if kernels.iter().flatten().flatten().flatten().chain(bias).any(|v| !v.is_finite()) {
        return Err("non-finite parameter".into());
    }
    if kh > h || kw > w {
        return Err(format!("{kh}x{kw} kernel does not fit a {h}x{w} input"));
    }
    Ok(vec![kernels.len(), (h - kh) / sh + 1, (w - kw) / sw + 1])
}

fn pool_shape(current: &[usize], (ph, pw): (usize, usize), (sh, sw): (usize, usize)) -> Result<Vec<usize>, String> {
    let &[channels, h, w] = current else {
        return Err(format!("maxpool expects a [channels, h, w] input, got {current:?}"));
    };
    if ph == 0 || pw == 0 || sh == 0 || sw == 0 {
        return Err("window and stride must be at least 1".into());
    }
    if ph > h || pw > w {
        return Err(format!("{ph}x{pw} window does not fit a {h}x{w} input"));
    }
    Ok(vec![channels, (h - ph) / sh + 1, (w - pw) / sw + 1])
}

/// Result of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    /// Value before the sigmoid head (the raw output when there is none).
    pub logit: f64,
    /// The network output: `sigmoid(logit)` for sigmoid-headed networks.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fire,
    NoFire,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub label: Label,
    pub score: f64,
    pub logit: f64,
}

/// A validated feed-forward network with a single scalar output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct Network {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
    ops: Vec<Op>,
    sigmoid_head: bool,
}

/// Networks are equal when their files would be: the lowered form is
/// derived from the layers.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.input_shape == other.input_shape && self.layers == other.layers
    }
}

/// On-disk model layout.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl TryFrom<ModelFile> for Network {
    type Error = Error;

    fn try_from(m: ModelFile) -> Result<Self> {
        Network::new(m.name, m.input_shape, m.layers)
    }
}

impl From<Network> for ModelFile {
    fn from(n: Network) -> Self {
        ModelFile {
            name: n.name,
            input_shape: n.input_shape,
            layers: n.layers,
        }
    }
}

impl Network {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let shapes = validate(&input_shape, &layers).map_err(Error::InvalidNetwork)?;
        let ops = layers
            .iter()
            .zip(&shapes)
            .map(|(layer, shape)| Op::lower(layer, shape))
            .collect();
        let sigmoid_head = matches!(layers.last(), Some(Layer::Sigmoid));
        Ok(Network {
            name: name.into(),
            input_shape,
            layers,
            shapes,
            ops,
            sigmoid_head,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Network::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("networks always serialize")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Shape after every layer, starting with the input shape.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn has_sigmoid_head(&self) -> bool {
        self.sigmoid_head
    }

    /// Lowered ops up to and including the logit (the sigmoid head, if any,
    /// is left out).
    pub fn logit_ops(&self) -> &[Op] {
        if self.sigmoid_head {
            &self.ops[..self.ops.len() - 1]
        } else {
            &self.ops
        }
    }

    pub fn eval(&self, input: &Tensor) -> Result<Evaluation> {
        input.ensure_shape(&self.input_shape)?;
        let logit = self.logit_of(input.data());
        Ok(Evaluation {
            logit,
            score: self.score_from_logit(logit),
        })
    }

    pub fn eval_logit(&self, input: &Tensor) -> Result<f64> {
        Ok(self.eval(input)?.logit)
    }

    /// Logit of a flat row-major input. The caller guarantees the length.
    pub fn logit_of(&self, input: &[f64]) -> f64 {
        debug_assert_eq!(input.len(), self.input_len());
        let mut values = input.to_vec();
        for op in self.logit_ops() {
            values = op.apply(&values);
        }
        values[0]
    }

    pub fn score_from_logit(&self, logit: f64) -> f64 {
        if self.sigmoid_head {
            sigmoid(logit)
        } else {
            logit
        }
    }

    /// `Fire` iff the score strictly exceeds `delta`.
    pub fn classify(&self, input: &Tensor, delta: f64) -> Result<Classification> {
        if !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("threshold {delta} is not finite")));
        }
        let Evaluation { logit, score } = self.eval(input)?;
        let label = if score > delta { Label::Fire } else { Label::NoFire };
        Ok(Classification { label, score, logit })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The two-input example network: a dense layer with weights `[[1, 3],
/// [-2, -1]]` and bias `[3, -1]`, a ReLU, and an output neuron with weights
/// `[5, -1]`.
///
/// ```
/// use flarecheck::{network::toy_network, Tensor};
///
/// let net = toy_network();
/// let out = net.eval(&Tensor::vector(vec![1.0, 3.0]).unwrap()).unwrap();
/// assert_eq!(out.logit, 65.0);
/// ```
pub fn toy_network() -> Network {
    Network::new(
        "toy",
        vec![2],
        vec![
            Layer::Dense {
                weights: vec![vec![1.0, 3.0], vec![-2.0, -1.0]],
                bias: vec![3.0, -1.0],
            },
            Layer::Relu,
            Layer::Dense {
                weights: vec![vec![5.0, -1.0]],
                bias: vec![0.0],
            },
        ],
    )
    .expect("toy network is well formed")
}
