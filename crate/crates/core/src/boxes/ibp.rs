use serde::Serialize;

use super::InputBox;
use crate::error::{Error, Result};
use crate::network::{Network, Op};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Bounds of every neuron of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Widens an affine row's result to cover floating-point rounding in both
/// the concrete forward pass and the bound computation.
fn rounding_pad(terms: usize, magnitude: f64) -> f64 {
    (terms + 3) as f64 * f64::EPSILON * magnitude
}

/// Interval bounds after every op, starting with the input bounds.
///
/// Affine rows use midpoint/radius form (`W·mid + b ± |W|·rad`), ReLU and
/// max-pooling act monotonically on the endpoints.
pub fn propagate_intervals(ops: &[Op], input: LayerBounds) -> Vec<LayerBounds> {
    let mut layers = Vec::with_capacity(ops.len() + 1);
    layers.push(input);
    for op in ops {
        let cur = layers.last().unwrap();
        let next = match op {
            Op::Affine(map) => {
                let mid: Vec<f64> = cur.lo.iter().zip(&cur.hi).map(|(l, h)| 0.5 * (l + h)).collect();
                let rad: Vec<f64> = cur.lo.iter().zip(&cur.hi).map(|(l, h)| 0.5 * (h - l)).collect();
                let mut lo = Vec::with_capacity(map.rows());
                let mut hi = Vec::with_capacity(map.rows());
                for i in 0..map.rows() {
                    let (cols, ws) = map.row(i);
                    let bias = map.bias(i);
                    let mut center = bias;
                    let mut radius = 0.0;
                    let mut magnitude = bias.abs();
                    for (&j, &w) in cols.iter().zip(ws) {
                        center += w * mid[j];
                        radius += w.abs() * rad[j];
                        magnitude += w.abs() * (mid[j].abs() + rad[j]);
                    }
                    let spread = radius + rounding_pad(cols.len(), magnitude);
                    lo.push(center - spread);
                    hi.push(center + spread);
                }
                LayerBounds { lo, hi }
            }
            Op::Relu => LayerBounds {
                lo: cur.lo.iter().map(|v| v.max(0.0)).collect(),
                hi: cur.hi.iter().map(|v| v.max(0.0)).collect(),
            },
            Op::MaxPool(pools) => {
                let fold = |src: &[f64], i: usize| {
                    pools.window(i).iter().map(|&j| src[j]).fold(f64::NEG_INFINITY, f64::max)
                };
                LayerBounds {
                    lo: (0..pools.len()).map(|i| fold(&cur.lo, i)).collect(),
                    hi: (0..pools.len()).map(|i| fold(&cur.hi, i)).collect(),
                }
            }
            Op::Sigmoid => LayerBounds {
                lo: cur.lo.iter().map(|&v| crate::network::sigmoid(v)).collect(),
                hi: cur.hi.iter().map(|&v| crate::network::sigmoid(v)).collect(),
            },
        };
        layers.push(next);
    }
    layers
}

/// Sound enclosure of the logit over every input in `input_box`.
///
/// ```
/// use flarecheck::{boxes::{ibp_bounds, InputBox}, network::toy_network};
///
/// let b = InputBox::uniform(vec![2], 0.0, 1.0).unwrap();
/// let y = ibp_bounds(&toy_network(), &b).unwrap();
/// assert!((y.lo - 15.0).abs() < 1e-9 && (y.hi - 35.0).abs() < 1e-9);
/// ```
pub fn ibp_bounds(network: &Network, input_box: &InputBox) -> Result<Interval> {
    if input_box.shape() != network.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: network.input_shape().to_vec(),
            actual: input_box.shape().to_vec(),
        });
    }
    let layers = propagate_intervals(
        network.logit_ops(),
        LayerBounds {
            lo: input_box.lo().to_vec(),
            hi: input_box.hi().to_vec(),
        },
    );
    let out = layers.last().unwrap();
    Ok(Interval {
        lo: out.lo[0],
        hi: out.hi[0],
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::network::random::Architecture;
    use crate::network::toy_network;
    use crate::Tensor;

    #[test]
    fn toy_box_matches_hand_intervals() {
        let net = toy_network();
        let b = InputBox::uniform(vec![2], 0.0, 1.0).unwrap();
        let layers = propagate_intervals(
            net.logit_ops(),
            LayerBounds {
                lo: b.lo().to_vec(),
                hi: b.hi().to_vec(),
            },
        );
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        // pre-activations [3, 7] and [-4, -1]
        assert!(close(layers[1].lo[0], 3.0) && close(layers[1].hi[0], 7.0));
        assert!(close(layers[1].lo[1], -4.0) && close(layers[1].hi[1], -1.0));
        let y = ibp_bounds(&net, &b).unwrap();
        assert!(close(y.lo, 15.0) && close(y.hi, 35.0), "{y:?}");
        assert!(y.lo <= 15.0 && y.hi >= 35.0);
    }

    #[test]
    fn point_box_degenerates_to_eval() {
        let net = toy_network();
        let x = Tensor::vector(vec![0.3, -1.7]).unwrap();
        let y = ibp_bounds(&net, &InputBox::point(&x)).unwrap();
        let v = net.eval_logit(&x).unwrap();
        assert!(y.contains(v));
        assert!(y.width() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let b = InputBox::uniform(vec![3], 0.0, 1.0).unwrap();
        assert!(ibp_bounds(&toy_network(), &b).is_err());
    }

    #[test]
    fn bounds_enclose_samples_and_shrink_when_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 0..20 {
            let arch = Architecture::sample(&mut rng, 5, 64);
            let net = arch.build(&mut rng, &format!("ibp{n}"));
            let len = net.input_len();
            let lo: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..0.5)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..1.0)).collect();
            let b = InputBox::new(net.input_shape().to_vec(), lo, hi).unwrap();
            let whole = propagate_intervals(
                net.logit_ops(),
                LayerBounds {
                    lo: b.lo().to_vec(),
                    hi: b.hi().to_vec(),
                },
            );
            let y = ibp_bounds(&net, &b).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = b.lo().iter().zip(b.hi()).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
                assert!(y.contains(net.logit_of(&x)));
            }
            // halve the first dimension; each child's bounds nest in the parent's
            let mid = 0.5 * (b.lo()[0] + b.hi()[0]);
            for (l0, h0) in [(b.lo()[0], mid), (mid, b.hi()[0])] {
                let mut lo = b.lo().to_vec();
                let mut hi = b.hi().to_vec();
                lo[0] = l0;
                hi[0] = h0;
                let child = propagate_intervals(net.logit_ops(), LayerBounds { lo, hi });
                for (c, p) in child.iter().zip(&whole) {
                    for i in 0..c.lo.len() {
                        let slack = 1e-12 * (1.0 + p.lo[i].abs() + p.hi[i].abs());
                        assert!(c.lo[i] >= p.lo[i] - slack && c.hi[i] <= p.hi[i] + slack);
                    }
                }
            }
        }
    }
}
