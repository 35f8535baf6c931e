use serde::{Deserialize, Serialize};

use super::{sigmoid, Layer};

/// Sparse affine map `y = W x + b` in compressed-row form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl AffineMap {
    pub fn rows(&self) -> usize {
        self.bias.len()
    }

    /// Column indices and weights of output row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[range.clone()], &self.weights[range])
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.bias[i]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|i| {
                let (cols, ws) = self.row(i);
                cols.iter().zip(ws).fold(self.bias[i], |acc, (&j, &w)| acc + w * x[j])
            })
            .collect()
    }

    fn dense(weights: &[Vec<f64>], bias: &[f64]) -> Self {
        let mut map = AffineMap::with_bias(bias.to_vec());
        for row in weights {
            for (j, &w) in row.iter().enumerate() {
                map.cols.push(j);
                map.weights.push(w);
            }
            map.offsets.push(map.cols.len());
        }
        map
    }

    fn conv(
        kernels: &[Vec<Vec<Vec<f64>>>],
        bias: &[f64],
        (sh, sw): (usize, usize),
        input: &[usize],
    ) -> Self {
        let (h, w) = (input[1], input[2]);
        let kh = kernels[0][0].len();
        let kw = kernels[0][0][0].len();
        let (oh, ow) = ((h - kh) / sh + 1, (w - kw) / sw + 1);
        let mut map = AffineMap::with_bias(Vec::with_capacity(kernels.len() * oh * ow));
        for (o, kernel) in kernels.iter().enumerate() {
            for oy in 0..oh {
                for ox in 0..ow {
                    for (c, plane) in kernel.iter().enumerate() {
                        for (ky, krow) in plane.iter().enumerate() {
                            for (kx, &wt) in krow.iter().enumerate() {
                                map.cols.push((c * h + oy * sh + ky) * w + ox * sw + kx);
                                map.weights.push(wt);
                            }
                        }
                    }
                    map.bias.push(bias[o]);
                    map.offsets.push(map.cols.len());
                }
            }
        }
        map
    }

    fn with_bias(bias: Vec<f64>) -> Self {
        AffineMap {
            offsets: vec![0],
            cols: Vec::new(),
            weights: Vec::new(),
            bias,
        }
    }
}

/// Max-pooling windows: output `i` is the maximum over `window(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolWindows {
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl PoolWindows {
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window(&self, i: usize) -> &[usize] {
        &self.members[self.offsets[i]..self.offsets[i + 1]]
    }

    fn new((ph, pw): (usize, usize), (sh, sw): (usize, usize), input: &[usize]) -> Self {
        let (c, h, w) = (input[0], input[1], input[2]);
        let (oh, ow) = ((h - ph) / sh + 1, (w - pw) / sw + 1);
        let mut pools = PoolWindows {
            offsets: vec![0],
            members: Vec::with_capacity(c * oh * ow * ph * pw),
        };
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ky in 0..ph {
                        for kx in 0..pw {
                            pools.members.push((ch * h + oy * sh + ky) * w + ox * sw + kx);
                        }
                    }
                    pools.offsets.push(pools.members.len());
                }
            }
        }
        pools
    }
}

/// A lowered layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Op {
    Affine(AffineMap),
    Relu,
    MaxPool(PoolWindows),
    Sigmoid,
}

impl Op {
    pub(super) fn lower(layer: &Layer, input_shape: &[usize]) -> Op {
        match layer {
            Layer::Dense { weights, bias } => Op::Affine(AffineMap::dense(weights, bias)),
            Layer::Conv2d { kernels, bias, stride } => {
                Op::Affine(AffineMap::conv(kernels, bias, *stride, input_shape))
            }
            Layer::MaxPool { window, stride } => Op::MaxPool(PoolWindows::new(*window, *stride, input_shape)),
            Layer::Relu => Op::Relu,
            Layer::Sigmoid => Op::Sigmoid,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Op::Affine(map) => map.apply(x),
            Op::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Op::MaxPool(pools) => (0..pools.len())
                .map(|i| {
                    pools
                        .window(i)
                        .iter()
                        .map(|&j| x[j])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect(),
            Op::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_taps_follow_valid_padding() {
        // one 2x2 kernel over a 1x3x3 input, stride 1
        let k = vec![vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]]]];
        let map = AffineMap::conv(&k, &[0.0], (1, 1), &[1, 3, 3]);
        assert_eq!(map.rows(), 4);
        assert_eq!(map.row(3).0, &[4, 5, 7, 8]);
        let x: Vec<f64> = (0..9).map(f64::from).collect();
        // top-left window: 0*1 + 1*2 + 3*3 + 4*4
        assert_eq!(map.apply(&x)[0], 27.0);
    }

    #[test]
    fn conv_stride_skips_positions() {
        let k = vec![vec![vec![vec![1.0]]]];
        let map = AffineMap::conv(&k, &[0.0], (2, 2), &[1, 3, 3]);
        let x: Vec<f64> = (0..9).map(f64::from).collect();
        assert_eq!(map.apply(&x), vec![0.0, 2.0, 6.0, 8.0]);
    }

    #[test]
    fn pool_windows() {
        let pools = PoolWindows::new((2, 2), (2, 2), &[2, 2, 2]);
        assert_eq!(pools.len(), 2);
        assert_eq!(pools.window(1), &[4, 5, 6, 7]);
        let x = [1.0, -2.0, 5.0, 0.0, -1.0, -3.0, -4.0, -0.5];
        assert_eq!(Op::MaxPool(pools).apply(&x), vec![5.0, -0.5]);
    }
}
