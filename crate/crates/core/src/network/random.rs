//! Seeded random networks for benchmarks and randomized testing.

use rand::Rng;

use super::{Layer, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub channels: usize,
    pub kernel: (usize, usize),
    /// Optional max-pool (window, stride) after the convolution's ReLU.
    pub pool: Option<((usize, usize), (usize, usize))>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub conv: Vec<ConvBlock>,
    /// Widths of the hidden dense layers, each followed by a ReLU.
    pub hidden: Vec<usize>,
    /// Draw every weight and bias from `[0, scale)` instead of `(-scale, scale)`.
    pub nonnegative: bool,
    pub sigmoid_head: bool,
}

impl Architecture {
    pub fn dense(input_shape: Vec<usize>, hidden: Vec<usize>) -> Self {
        Architecture {
            input_shape,
            conv: Vec::new(),
            hidden,
            nonnegative: false,
            sigmoid_head: false,
        }
    }

    /// Number of hidden (post-affine) neurons.
    pub fn hidden_neurons(&self) -> usize {
        let mut shape = self.input_shape.clone();
        let mut total = 0;
        for block in &self.conv {
            shape = vec![
                block.channels,
                shape[1] - block.kernel.0 + 1,
                shape[2] - block.kernel.1 + 1,
            ];
            total += shape.iter().product::<usize>();
        }
        total + self.hidden.iter().sum::<usize>()
    }

    /// Affine layers including the output layer.
    pub fn affine_layers(&self) -> usize {
        self.conv.len() + self.hidden.len() + 1
    }

    /// Draws a small architecture with at most `max_affine` affine layers
    /// and `max_neurons` hidden neurons. Roughly half use a convolution.
    pub fn sample<R: Rng>(rng: &mut R, max_affine: usize, max_neurons: usize) -> Self {
        loop {
            let arch = if rng.gen_bool(0.5) {
                let k = rng.gen_range(1..=2);
                let side = rng.gen_range(4..=5);
                let channels = rng.gen_range(2..=3);
                let kernel = if rng.gen_bool(0.5) { (2, 2) } else { (3, 3) };
                let pool = rng.gen_bool(0.6).then_some(((2, 2), (2, 2)));
                let n_hidden = rng.gen_range(0..=2);
                Architecture {
                    input_shape: vec![k, side, side],
                    conv: vec![ConvBlock { channels, kernel, pool }],
                    hidden: (0..n_hidden).map(|_| rng.gen_range(3..=10)).collect(),
                    nonnegative: false,
                    sigmoid_head: rng.gen_bool(0.3),
                }
            } else {
                let k = rng.gen_range(1..=2);
                let side = rng.gen_range(1..=3);
                let n_hidden = rng.gen_range(1..=3);
                Architecture {
                    input_shape: vec![k, side, side + 1],
                    conv: Vec::new(),
                    hidden: (0..n_hidden).map(|_| rng.gen_range(3..=16)).collect(),
                    nonnegative: false,
                    sigmoid_head: rng.gen_bool(0.3),
                }
            };
            if arch.affine_layers() <= max_affine && arch.hidden_neurons() <= max_neurons {
                return arch;
            }
        }
    }

    pub fn build<R: Rng>(&self, rng: &mut R, name: &str) -> Network {
        let mut draw = |fan_in: usize| {
            let scale = (3.0 / fan_in as f64).sqrt();
            if self.nonnegative {
                rng.gen_range(0.0..scale)
            } else {
                rng.gen_range(-scale..scale)
            }
        };
        let mut layers = Vec::new();
        let mut shape = self.input_shape.clone();
        for block in &self.conv {
            let (kh, kw) = block.kernel;
            let fan_in = shape[0] * kh * kw;
            let kernels = (0..block.channels)
                .map(|_| {
                    (0..shape[0])
                        .map(|_| (0..kh).map(|_| (0..kw).map(|_| draw(fan_in)).collect()).collect())
                        .collect()
                })
                .collect();
            let bias = (0..block.channels).map(|_| 0.3 * draw(1)).collect();
            layers.push(Layer::Conv2d {
                kernels,
                bias,
                stride: (1, 1),
            });
            layers.push(Layer::Relu);
            shape = vec![block.channels, shape[1] - kh + 1, shape[2] - kw + 1];
            if let Some((window, stride)) = block.pool {
                if window.0 <= shape[1] && window.1 <= shape[2] {
                    layers.push(Layer::MaxPool { window, stride });
                    shape = vec![
                        shape[0],
                        (shape[1] - window.0) / stride.0 + 1,
                        (shape[2] - window.1) / stride.1 + 1,
                    ];
                }
            }
        }
        let mut fan_in: usize = shape.iter().product();
        for &width in self.hidden.iter().chain(std::iter::once(&1)) {
            let weights = (0..width).map(|_| (0..fan_in).map(|_| draw(fan_in)).collect()).collect();
            let bias = (0..width).map(|_| 0.3 * draw(1)).collect();
            layers.push(Layer::Dense { weights, bias });
            layers.push(Layer::Relu);
            fan_in = width;
        }
        layers.pop();
        if self.sigmoid_head {
            layers.push(Layer::Sigmoid);
        }
        Network::new(name, self.input_shape.clone(), layers).expect("generated architectures are consistent")
    }
}
