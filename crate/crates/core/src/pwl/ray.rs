use serde::Serialize;

use super::{envelope_crossings, insert_points, relu_crossings, resample, PwlFunction};
use crate::error::{Error, Result};
use crate::network::{Network, Op};
use crate::planting::Scene;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    /// Segments with slope below `-slope_tolerance` count as decreasing.
    pub slope_tolerance: f64,
    /// Propagation fails once a layer needs more breakpoints than this.
    pub segment_cap: usize,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            slope_tolerance: 0.0,
            segment_cap: 1_000_000,
        }
    }
}

/// Every neuron of one layer on a shared breakpoint grid.
struct RayLayer {
    grid: Vec<f64>,
    /// `values[neuron][k]` is the neuron's value at `grid[k]`.
    values: Vec<Vec<f64>>,
}

impl RayLayer {
    fn refine(&self, extra: Vec<f64>) -> RayLayer {
        let domain = (self.grid[0], self.grid[self.grid.len() - 1]);
        let grid = insert_points(&self.grid, extra, domain);
        let values = if grid.len() == self.grid.len() {
            self.values.clone()
        } else {
            self.values.iter().map(|v| resample(&self.grid, v, &grid)).collect()
        };
        RayLayer { grid, values }
    }
}

/// The network's logit along the scene's planting ray, as an exact
/// piecewise-linear function of the intensity.
///
/// ```
/// use flarecheck::{network::toy_network, planting::{EpsRange, Scene}, pwl, Tensor};
///
/// let scene = Scene::new(
///     Tensor::vector(vec![1.0, 1.0]).unwrap(),
///     Tensor::vector(vec![0.0, 0.0]).unwrap(),
///     EpsRange::new(0.0, 2.0).unwrap(),
/// )
/// .unwrap();
/// let g = pwl::propagate_ray(&toy_network(), &scene, &Default::default()).unwrap();
/// assert_eq!(g.segments(), 1);
/// assert_eq!(g.values(), &[15.0, 55.0]);
/// ```
pub fn propagate_ray(network: &Network, scene: &Scene, options: &LocalOptions) -> Result<PwlFunction> {
    scene.signal().ensure_shape(network.input_shape())?;
    let range = scene.eps_range();
    let grid = if range.width() > 0.0 {
        vec![range.lo(), range.hi()]
    } else {
        vec![range.lo()]
    };
    let signal = scene.signal().data();
    let background = scene.background().data();
    let mut layer = RayLayer {
        values: signal
            .iter()
            .zip(background)
            .map(|(&s, &b)| grid.iter().map(|&eps| b + eps * s).collect())
            .collect(),
        grid,
    };

    for (index, op) in network.logit_ops().iter().enumerate() {
        layer = match op {
            Op::Affine(map) => {
                let values = (0..map.rows())
                    .map(|i| {
                        let (cols, ws) = map.row(i);
                        (0..layer.grid.len())
                            .map(|k| {
                                cols.iter()
                                    .zip(ws)
                                    .fold(map.bias(i), |acc, (&j, &w)| acc + w * layer.values[j][k])
                            })
                            .collect()
                    })
                    .collect();
                RayLayer {
                    grid: layer.grid,
                    values,
                }
            }
            Op::Relu => {
                let mut extra = Vec::new();
                for v in &layer.values {
                    relu_crossings(&layer.grid, v, &mut extra);
                }
                let mut fine = layer.refine(extra);
                for v in fine.values.iter_mut().flatten() {
                    *v = v.max(0.0);
                }
                fine
            }
            Op::MaxPool(pools) => {
                let mut extra = Vec::new();
                for i in 0..pools.len() {
                    let rows: Vec<&[f64]> = pools.window(i).iter().map(|&j| layer.values[j].as_slice()).collect();
                    envelope_crossings(&layer.grid, &rows, &mut extra);
                }
                let fine = layer.refine(extra);
                let values = (0..pools.len())
                    .map(|i| {
                        (0..fine.grid.len())
                            .map(|k| {
                                pools
                                    .window(i)
                                    .iter()
                                    .map(|&j| fine.values[j][k])
                                    .fold(f64::NEG_INFINITY, f64::max)
                            })
                            .collect()
                    })
                    .collect();
                RayLayer { grid: fine.grid, values }
            }
            Op::Sigmoid => unreachable!("logit ops exclude the sigmoid head"),
        };
        if layer.grid.len() - 1 > options.segment_cap {
            return Err(Error::SegmentExplosion {
                layer: index,
                count: layer.grid.len(),
                cap: options.segment_cap,
            });
        }
    }
    let values = layer.values.swap_remove(0);
    Ok(PwlFunction::from_parts(layer.grid, values))
}

/// Outcome of a local consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ConsistencyVerdict {
    Consistent,
    /// `eps1 > eps2` but the logit at `eps1` is lower by `margin`.
    Inconsistent {
        eps1: f64,
        eps2: f64,
        value1: f64,
        value2: f64,
        margin: f64,
    },
}

impl ConsistencyVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, ConsistencyVerdict::Consistent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalReport {
    #[serde(flatten)]
    pub verdict: ConsistencyVerdict,
    /// Segments of the propagated logit.
    pub segments: usize,
}

/// Decides whether the logit is non-decreasing in the intensity over the
/// scene's range.
///
/// Every maximal run of decreasing segments is a candidate witness (its
/// left end as `eps2`, its right end as `eps1`). Candidates are tried in
/// order of decreasing drop and the first one that a direct forward pass
/// confirms is reported. A run whose drop does not survive re-evaluation
/// is below floating-point resolution and is ignored.
pub fn verify_local_consistency(network: &Network, scene: &Scene, options: &LocalOptions) -> Result<LocalReport> {
    let g = propagate_ray(network, scene, options)?;
    let segments = g.segments();
    let bps = g.breakpoints();
    let vals = g.values();

    let mut runs = Vec::new();
    let mut start = None;
    for (k, slope) in g.slopes().enumerate() {
        let decreasing = slope < -options.slope_tolerance;
        match (decreasing, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, segments));
    }
    runs.sort_by(|a, b| (vals[b.0] - vals[b.1]).total_cmp(&(vals[a.0] - vals[a.1])).then(a.0.cmp(&b.0)));

    for (left, right) in runs {
        let (eps2, eps1) = (bps[left], bps[right]);
        let value2 = network.logit_of(&scene.at(eps2));
        let value1 = network.logit_of(&scene.at(eps1));
        if value1 < value2 {
            return Ok(LocalReport {
                verdict: ConsistencyVerdict::Inconsistent {
                    eps1,
                    eps2,
                    value1,
                    value2,
                    margin: value2 - value1,
                },
                segments,
            });
        }
    }
    Ok(LocalReport {
        verdict: ConsistencyVerdict::Consistent,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{toy_network, Layer};
    use crate::planting::EpsRange;
    use crate::Tensor;

    fn scene(signal: &[f64], background: &[f64], lo: f64, hi: f64) -> Scene {
        Scene::new(
            Tensor::vector(signal.to_vec()).unwrap(),
            Tensor::vector(background.to_vec()).unwrap(),
            EpsRange::new(lo, hi).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn toy_increasing_ray_is_one_segment() {
        let g = propagate_ray(&toy_network(), &scene(&[1.0, 1.0], &[0.0, 0.0], 0.0, 2.0), &Default::default()).unwrap();
        assert_eq!(g.breakpoints(), &[0.0, 2.0]);
        // 20 eps + 15
        assert_eq!(g.values(), &[15.0, 55.0]);
    }

    #[test]
    fn toy_decreasing_ray_has_a_kink() {
        let g = propagate_ray(&toy_network(), &scene(&[-1.0, 0.0], &[0.0, 0.0], 0.0, 2.0), &Default::default()).unwrap();
        assert_eq!(g.breakpoints(), &[0.0, 0.5, 2.0]);
        // 15 - 5 eps then 16 - 7 eps
        assert_eq!(g.values(), &[15.0, 12.5, 2.0]);
    }

    #[test]
    fn zero_signal_gives_a_constant() {
        let g = propagate_ray(&toy_network(), &scene(&[0.0, 0.0], &[1.0, 3.0], 0.0, 2.0), &Default::default()).unwrap();
        assert_eq!(g.segments(), 1);
        assert_eq!(g.values(), &[65.0, 65.0]);
    }

    #[test]
    fn degenerate_range_is_a_point() {
        let g = propagate_ray(&toy_network(), &scene(&[1.0, 1.0], &[0.0, 0.0], 1.0, 1.0), &Default::default()).unwrap();
        assert_eq!(g.segments(), 0);
        assert_eq!(g.values(), &[35.0]);
        let report = verify_local_consistency(&toy_network(), &scene(&[-1.0, 0.0], &[0.0, 0.0], 1.0, 1.0), &Default::default()).unwrap();
        assert!(report.verdict.is_consistent());
    }

    #[test]
    fn toy_verdicts() {
        let net = toy_network();
        let up = verify_local_consistency(&net, &scene(&[1.0, 1.0], &[0.0, 0.0], 0.0, 2.0), &Default::default()).unwrap();
        assert_eq!(up.verdict, ConsistencyVerdict::Consistent);
        let down = verify_local_consistency(&net, &scene(&[-1.0, 0.0], &[0.0, 0.0], 0.0, 2.0), &Default::default()).unwrap();
        assert_eq!(
            down.verdict,
            ConsistencyVerdict::Inconsistent {
                eps1: 2.0,
                eps2: 0.0,
                value1: 2.0,
                value2: 15.0,
                margin: 13.0
            }
        );
        assert_eq!(down.segments, 2);
    }

    #[test]
    fn widest_drop_wins() {
        // logit = relu(1 - eps) + relu(eps - 2) - 3 relu(eps - 3): a small
        // dip on [0, 1] and a large one on [3, 4]
        let net = Network::new(
            "dips",
            vec![1],
            vec![
                Layer::Dense {
                    weights: vec![vec![-1.0], vec![1.0], vec![1.0]],
                    bias: vec![1.0, -2.0, -3.0],
                },
                Layer::Relu,
                Layer::Dense {
                    weights: vec![vec![1.0, 1.0, -3.0]],
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let report = verify_local_consistency(&net, &scene(&[1.0], &[0.0], 0.0, 4.0), &Default::default()).unwrap();
        let ConsistencyVerdict::Inconsistent { eps1, eps2, margin, .. } = report.verdict else {
            panic!("expected a witness");
        };
        assert_eq!((eps2, eps1), (3.0, 4.0));
        assert_eq!(margin, 2.0);
    }

    #[test]
    fn slope_tolerance_absorbs_shallow_descent() {
        let net = Network::new(
            "shallow",
            vec![1],
            vec![Layer::Dense {
                weights: vec![vec![-1e-6]],
                bias: vec![0.0],
            }],
        )
        .unwrap();
        let s = scene(&[1.0], &[0.0], 0.0, 1.0);
        assert!(!verify_local_consistency(&net, &s, &Default::default()).unwrap().verdict.is_consistent());
        let tolerant = LocalOptions {
            slope_tolerance: 1e-3,
            ..Default::default()
        };
        assert!(verify_local_consistency(&net, &s, &tolerant).unwrap().verdict.is_consistent());
    }

    #[test]
    fn segment_cap_fails_loudly() {
        let options = LocalOptions {
            segment_cap: 1,
            ..Default::default()
        };
        let err = propagate_ray(&toy_network(), &scene(&[-1.0, 0.0], &[0.0, 0.0], 0.0, 2.0), &options).unwrap_err();
        assert!(matches!(err, Error::SegmentExplosion { layer: 1, cap: 1, .. }), "{err}");
    }

    #[test]
    fn scene_shape_must_match_network() {
        let err = propagate_ray(&toy_network(), &scene(&[1.0], &[0.0], 0.0, 1.0), &Default::default()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn verdict_json_shape() {
        let report = LocalReport {
            verdict: ConsistencyVerdict::Inconsistent {
                eps1: 2.0,
                eps2: 0.0,
                value1: 2.0,
                value2: 15.0,
                margin: 13.0,
            },
            segments: 2,
        };
        let json = serde_json::to_value(report).unwrap();
        assert_eq!(json["status"], "inconsistent");
        assert_eq!(json["eps1"], 2.0);
        assert_eq!(json["margin"], 13.0);
        assert_eq!(json["segments"], 2);
    }
}
