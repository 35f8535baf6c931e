//! Consistency over boxes of signals and backgrounds.
//!
//! Two planted copies `x1 = xb + eps1 * xs` and `x2 = xb + eps2 * xs` of the
//! same scene differ by `(eps1 - eps2) * xs`. Through every layer the
//! difference between the copies stays of the form `d * k`, where
//! `d = eps1 - eps2 >= 0` and `k` is a per-neuron slope: affine layers map
//! `k` linearly, a ReLU multiplies it by its secant slope between the two
//! pre-activations (a number in `[0, 1]` bounded from the copies' interval
//! bounds), and max-pooling keeps it between the slopes of the candidates
//! that can win in either copy. The logit difference is then `d * k_out`,
//! so `k_out >= 0` on a leaf proves every pair in it consistent.
//!
//! Slopes are tracked as affine forms over shared noise symbols, and in
//! parallel as plain intervals; a neuron's slope bound is the intersection
//! of both. The interval track keeps exact signs for nonnegative inputs and
//! weights, the forms keep correlations between neurons.
//!
//! Leaves whose two intensity intervals overlap in at most one point are
//! dropped without a bound: the logit is continuous and piecewise linear in
//! `eps`, so it is monotone once every pair in the leaves straddling the
//! diagonal is.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::frontier::{self, Assessment, Outcome, Problem};
use super::ibp::{propagate_intervals, LayerBounds};
use super::query::widest;
use super::{InputBox, SearchOptions};
use crate::error::{Error, Result};
use crate::network::{Network, Op};
use crate::planting::{plant_values, EpsRange, Scene};
use crate::pwl::{verify_local_consistency, ConsistencyVerdict};
use crate::tensor::Tensor;

/// Answer to a global consistency check over boxes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum GlobalVerdict {
    /// Every signal and background in the boxes gives a logit that is
    /// non-decreasing in the intensity.
    Holds,
    /// A concrete scene whose logit at `eps1 > eps2` is lower by `margin`.
    Violated {
        signal: Tensor,
        background: Tensor,
        eps1: f64,
        eps2: f64,
        value1: f64,
        value2: f64,
        margin: f64,
    },
    Unknown { splits_used: usize, bound_gap: f64 },
}

impl GlobalVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, GlobalVerdict::Holds)
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, GlobalVerdict::Violated { .. })
    }
}

/// Bounds on `[signal, background, eps1, eps2]`, flattened.
struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

struct Witness {
    signal: Vec<f64>,
    background: Vec<f64>,
    eps1: f64,
    eps2: f64,
    value1: f64,
    value2: f64,
}

struct TwinProblem<'a> {
    network: &'a Network,
    n: usize,
    root_width: Vec<f64>,
    options: &'a SearchOptions,
}

impl TwinProblem<'_> {
    fn eps(&self, cell: &Cell) -> ((f64, f64), (f64, f64)) {
        let n = self.n;
        (
            (cell.lo[2 * n], cell.hi[2 * n]),
            (cell.lo[2 * n + 1], cell.hi[2 * n + 1]),
        )
    }

    fn check(&self, signal: &[f64], background: &[f64], eps1: f64, eps2: f64) -> Option<Witness> {
        if eps1 <= eps2 {
            return None;
        }
        let value1 = self.network.logit_of(&plant_values(signal, background, eps1));
        let value2 = self.network.logit_of(&plant_values(signal, background, eps2));
        (value1 < value2).then(|| Witness {
            signal: signal.to_vec(),
            background: background.to_vec(),
            eps1,
            eps2,
            value1,
            value2,
        })
    }

    /// Random scenes at feasible intensity pairs, preferring the widest
    /// separation the cell allows.
    fn sample(&self, cell: &Cell, rng: &mut ChaCha8Rng) -> Option<Witness> {
        let n = self.n;
        let ((e1lo, e1hi), (e2lo, e2hi)) = self.eps(cell);
        let e2top = e2hi.min(e1hi);
        let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        let mid: Vec<f64> = cell.lo.iter().zip(&cell.hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let mut scenes = vec![mid[..2 * n].to_vec()];
        for _ in 0..self.options.samples_per_box {
            scenes.push((0..2 * n).map(|i| draw(rng, cell.lo[i], cell.hi[i])).collect());
        }
        for x in scenes {
            let (s, b) = x.split_at(n);
            let e2 = draw(rng, e2lo, e2top);
            let e1 = draw(rng, e1lo.max(e2), e1hi);
            let pairs = [(e1hi, e2lo), (e1hi, e2top), (e1lo.max(e2lo), e2lo), (e1, e2)];
            for (a, c) in pairs {
                if let Some(w) = self.check(s, b, a, c) {
                    return Some(w);
                }
            }
        }
        None
    }

    /// Lower bound of the logit slope `k_out` over the cell.
    fn slope_lower_bound(&self, cell: &Cell) -> f64 {
        let n = self.n;
        let ((e1lo, e1hi), (e2lo, e2hi)) = self.eps(cell);
        let copy = |elo: f64, ehi: f64| {
            let mut lo = Vec::with_capacity(n);
            let mut hi = Vec::with_capacity(n);
            for i in 0..n {
                let (sl, sh) = (cell.lo[i], cell.hi[i]);
                let (bl, bh) = (cell.lo[n + i], cell.hi[n + i]);
                let p = [elo * sl, elo * sh, ehi * sl, ehi * sh];
                let pmin = p.iter().copied().fold(f64::INFINITY, f64::min);
                let pmax = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let pad = 2.0 * f64::EPSILON * (bl.abs().max(bh.abs()) + pmin.abs().max(pmax.abs()));
                lo.push(bl + pmin - pad);
                hi.push(bh + pmax + pad);
            }
            LayerBounds { lo, hi }
        };
        let ops = self.network.logit_ops();
        let b1 = propagate_intervals(ops, copy(e1lo, e1hi));
        let b2 = propagate_intervals(ops, copy(e2lo, e2hi));
        let slopes = Slopes::input(&cell.lo[..n], &cell.hi[..n]);
        let out = propagate_slopes(ops, slopes, &b1, &b2);
        out.bounds(0).0
    }
}

impl Problem for TwinProblem<'_> {
    type Node = Cell;
    type Witness = Witness;

    fn assess(&self, cell: &Cell, rng: &mut ChaCha8Rng) -> Assessment<Witness> {
        let ((e1lo, e1hi), (e2lo, e2hi)) = self.eps(cell);
        // entirely below the diagonal, or touching it in a single point
        if e1hi.min(e2hi) - e1lo.max(e2lo) <= 0.0 {
            return Assessment::Closed;
        }
        let d_hi = e1hi - e2lo;
        let k_lo = self.slope_lower_bound(cell);
        if k_lo >= 0.0 {
            return Assessment::Closed;
        }
        match self.sample(cell, rng) {
            Some(w) => Assessment::Found(w),
            None => Assessment::Open { gap: -k_lo * d_hi },
        }
    }

    fn split(&self, cell: &Cell) -> Option<(Cell, Cell)> {
        let d = widest(&cell.lo, &cell.hi, &self.root_width)?;
        let mid = 0.5 * (cell.lo[d] + cell.hi[d]);
        let mut left = Cell {
            lo: cell.lo.clone(),
            hi: cell.hi.clone(),
        };
        let mut right = Cell {
            lo: cell.lo.clone(),
            hi: cell.hi.clone(),
        };
        left.hi[d] = mid;
        right.lo[d] = mid;
        Some((left, right))
    }
}

/// Per-neuron slopes of one layer: affine forms
/// `center + sum gens[g] * s_g + err * t` over symbols in `[-1, 1]`
/// (`t` private to the neuron), intersected with an interval.
struct Slopes {
    center: Vec<f64>,
    gens: Vec<Vec<f64>>,
    err: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    symbols: usize,
}

impl Slopes {
    fn input(lo: &[f64], hi: &[f64]) -> Slopes {
        let mut symbols = 0;
        let mut gens = Vec::with_capacity(lo.len());
        let mut center = Vec::with_capacity(lo.len());
        for (&l, &h) in lo.iter().zip(hi) {
            center.push(0.5 * (l + h));
            if l < h {
                let mut g = vec![0.0; symbols + 1];
                g[symbols] = 0.5 * (h - l);
                symbols += 1;
                gens.push(g);
            } else {
                gens.push(Vec::new());
            }
        }
        let err = lo.iter().zip(hi).map(|(l, h)| f64::EPSILON * (l.abs() + h.abs())).collect();
        Slopes {
            center,
            gens,
            err,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            symbols,
        }
    }

    fn len(&self) -> usize {
        self.center.len()
    }

    fn radius(&self, i: usize) -> f64 {
        self.gens[i].iter().map(|g| g.abs()).sum::<f64>() + self.err[i]
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        let r = self.radius(i);
        let pad = 2.0 * f64::EPSILON * (self.center[i].abs() + r);
        let lo = (self.center[i] - r - pad).max(self.lo[i]);
        let hi = (self.center[i] + r + pad).min(self.hi[i]);
        (lo, hi.max(lo))
    }

    fn with_capacity(n: usize, symbols: usize) -> Slopes {
        Slopes {
            center: Vec::with_capacity(n),
            gens: Vec::with_capacity(n),
            err: Vec::with_capacity(n),
            lo: Vec::with_capacity(n),
            hi: Vec::with_capacity(n),
            symbols,
        }
    }

    /// A neuron known only to lie in `[lo, hi]`, on a fresh symbol.
    fn push_fresh(&mut self, lo: f64, hi: f64) {
        self.center.push(0.5 * (lo + hi));
        let mut g = vec![0.0; self.symbols + 1];
        g[self.symbols] = 0.5 * (hi - lo);
        self.symbols += 1;
        self.gens.push(g);
        self.err.push(2.0 * f64::EPSILON * (lo.abs() + hi.abs()));
        self.lo.push(lo);
        self.hi.push(hi);
    }

    fn push_copy(&mut self, from: &Slopes, i: usize) {
        self.center.push(from.center[i]);
        self.gens.push(from.gens[i].clone());
        self.err.push(from.err[i]);
        self.lo.push(from.lo[i]);
        self.hi.push(from.hi[i]);
    }

    fn push_zero(&mut self) {
        self.center.push(0.0);
        self.gens.push(Vec::new());
        self.err.push(0.0);
        self.lo.push(0.0);
        self.hi.push(0.0);
    }
}

/// Outward-rounded `lo` and `hi` of a sum whose terms have the given signs:
/// a sum of nonnegative terms is never pushed below zero.
fn pad_sum(lo: f64, hi: f64, pad: f64, lo_nonneg: bool, hi_nonpos: bool) -> (f64, f64) {
    let mut l = lo - pad;
    let mut h = hi + pad;
    if lo_nonneg {
        l = l.max(0.0);
    }
    if hi_nonpos {
        h = h.min(0.0);
    }
    (l, h)
}

/// Range of the ReLU secant slope `(relu(a1) - relu(a2)) / (a1 - a2)` for
/// `a1` in `[l1, u1]` and `a2` in `[l2, u2]`.
fn secant(l1: f64, u1: f64, l2: f64, u2: f64) -> (f64, f64) {
    if l1 >= 0.0 && l2 >= 0.0 {
        return (1.0, 1.0);
    }
    if u1 <= 0.0 && u2 <= 0.0 {
        return (0.0, 0.0);
    }
    let (lo, hi) = if l1 >= 0.0 && u2 <= 0.0 {
        (l1 / (l1 - l2), u1 / (u1 - u2))
    } else if u1 <= 0.0 && l2 >= 0.0 {
        (l2 / (l2 - l1), u2 / (u2 - u1))
    } else {
        (0.0, 1.0)
    };
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let w = 4.0 * f64::EPSILON;
    ((lo - w).clamp(0.0, 1.0), (hi + w).clamp(0.0, 1.0))
}

/// Window members that can attain the window maximum in one copy.
fn candidates(window: &[usize], b: &LayerBounds) -> Vec<usize> {
    let floor = window.iter().map(|&j| b.lo[j]).fold(f64::NEG_INFINITY, f64::max);
    window.iter().copied().filter(|&j| b.hi[j] >= floor).collect()
}

fn propagate_slopes(ops: &[Op], input: Slopes, b1: &[LayerBounds], b2: &[LayerBounds]) -> Slopes {
    let mut cur = input;
    for (k, op) in ops.iter().enumerate() {
        cur = match op {
            Op::Affine(map) => {
                let absum: Vec<f64> = (0..cur.len()).map(|j| cur.center[j].abs() + cur.radius(j)).collect();
                let mut next = Slopes::with_capacity(map.rows(), cur.symbols);
                for i in 0..map.rows() {
                    let (cols, ws) = map.row(i);
                    let mut center = 0.0;
                    let mut gens = vec![0.0; cur.symbols];
                    let mut err = 0.0;
                    let mut magnitude = 0.0;
                    let (mut lo, mut hi) = (0.0, 0.0);
                    let (mut lo_nonneg, mut hi_nonpos) = (true, true);
                    for (&j, &w) in cols.iter().zip(ws) {
                        center += w * cur.center[j];
                        for (g, &c) in gens.iter_mut().zip(&cur.gens[j]) {
                            *g += w * c;
                        }
                        err += w.abs() * cur.err[j];
                        magnitude += w.abs() * absum[j];
                        let (a, b) = if w >= 0.0 {
                            (w * cur.lo[j], w * cur.hi[j])
                        } else {
                            (w * cur.hi[j], w * cur.lo[j])
                        };
                        lo += a;
                        hi += b;
                        lo_nonneg &= a >= 0.0;
                        hi_nonpos &= b <= 0.0;
                    }
                    let pad = (cols.len() + 3) as f64 * f64::EPSILON * magnitude;
                    let (lo, hi) = pad_sum(lo, hi, pad, lo_nonneg, hi_nonpos);
                    next.center.push(center);
                    next.gens.push(gens);
                    next.err.push(err + pad);
                    next.lo.push(lo);
                    next.hi.push(hi);
                }
                next
            }
            Op::Relu => {
                let (p1, p2) = (&b1[k], &b2[k]);
                let mut next = Slopes::with_capacity(cur.len(), cur.symbols);
                for j in 0..cur.len() {
                    match secant(p1.lo[j], p1.hi[j], p2.lo[j], p2.hi[j]) {
                        (s, _) if s == 1.0 => next.push_copy(&cur, j),
                        (_, s) if s == 0.0 => next.push_zero(),
                        (s_lo, s_hi) => {
                            let (lo, hi) = cur.bounds(j);
                            let w = s_hi - s_lo;
                            let fresh_lo = w * lo.min(0.0);
                            let fresh_hi = w * hi.max(0.0);
                            let mut gens: Vec<f64> = cur.gens[j].iter().map(|g| s_lo * g).collect();
                            gens.resize(next.symbols + 1, 0.0);
                            gens[next.symbols] = 0.5 * (fresh_hi - fresh_lo);
                            next.symbols += 1;
                            let center = s_lo * cur.center[j] + 0.5 * (fresh_lo + fresh_hi);
                            let err = s_lo * cur.err[j] + 4.0 * f64::EPSILON * (center.abs() + cur.radius(j));
                            let products = [s_lo * lo, s_lo * hi, s_hi * lo, s_hi * hi];
                            let plo = products.iter().copied().fold(f64::INFINITY, f64::min);
                            let phi = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            let pad = 2.0 * f64::EPSILON * (plo.abs() + phi.abs());
                            let (plo, phi) = pad_sum(plo, phi, pad, lo >= 0.0, hi <= 0.0);
                            next.center.push(center);
                            next.gens.push(gens);
                            next.err.push(err);
                            next.lo.push(plo);
                            next.hi.push(phi);
                        }
                    }
                }
                next
            }
            Op::MaxPool(pools) => {
                let (p1, p2) = (&b1[k], &b2[k]);
                let mut next = Slopes::with_capacity(pools.len(), cur.symbols);
                for i in 0..pools.len() {
                    let window = pools.window(i);
                    let c1 = candidates(window, p1);
                    let c2 = candidates(window, p2);
                    if c1.len() == 1 && c1 == c2 {
                        next.push_copy(&cur, c1[0]);
                    } else {
                        let lo = c2.iter().map(|&j| cur.bounds(j).0).fold(f64::INFINITY, f64::min);
                        let hi = c1.iter().map(|&j| cur.bounds(j).1).fold(f64::NEG_INFINITY, f64::max);
                        next.push_fresh(lo, hi.max(lo));
                    }
                }
                next
            }
            // never part of the logit ops
            Op::Sigmoid => cur,
        };
    }
    cur
}

fn check_box(network: &Network, b: &InputBox, what: &str) -> Result<()> {
    if b.shape() != network.input_shape() {
        return Err(Error::InvalidArgument(format!(
            "{what} box has shape {:?}, network expects {:?}",
            b.shape(),
            network.input_shape()
        )));
    }
    Ok(())
}

/// Checks that every scene with signal in `signal_box` and background in
/// `background_box` is consistent over `eps_range`.
///
/// When both boxes are single points the scene is decided exactly along its
/// ray. Otherwise a branch and bound over the signal, background and both
/// intensities either proves every leaf or finds a re-checked violation.
///
/// ```
/// use flarecheck::boxes::{verify_global_consistency, GlobalVerdict, InputBox};
/// use flarecheck::network::toy_network;
/// use flarecheck::planting::EpsRange;
///
/// let signal = InputBox::new(vec![2], vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
/// let background = InputBox::uniform(vec![2], 0.0, 0.1).unwrap();
/// let eps = EpsRange::new(0.0, 2.0).unwrap();
/// let v = verify_global_consistency(&toy_network(), &signal, &background, eps, &Default::default()).unwrap();
/// assert_eq!(v, GlobalVerdict::Holds);
/// ```
pub fn verify_global_consistency(
    network: &Network,
    signal_box: &InputBox,
    background_box: &InputBox,
    eps_range: EpsRange,
    options: &SearchOptions,
) -> Result<GlobalVerdict> {
    options.validate()?;
    check_box(network, signal_box, "signal")?;
    check_box(network, background_box, "background")?;
    if signal_box.is_point() && background_box.is_point() {
        let scene = Scene::new(
            Tensor::new(signal_box.shape().to_vec(), signal_box.lo().to_vec())?,
            Tensor::new(background_box.shape().to_vec(), background_box.lo().to_vec())?,
            eps_range,
        )?;
        if let Ok(report) = verify_local_consistency(network, &scene, &Default::default()) {
            return Ok(match report.verdict {
                ConsistencyVerdict::Consistent => GlobalVerdict::Holds,
                ConsistencyVerdict::Inconsistent {
                    eps1,
                    eps2,
                    value1,
                    value2,
                    margin,
                } => GlobalVerdict::Violated {
                    signal: scene.signal().clone(),
                    background: scene.background().clone(),
                    eps1,
                    eps2,
                    value1,
                    value2,
                    margin,
                },
            });
        }
    }
    search_boxes(network, signal_box, background_box, eps_range, options)
}

fn search_boxes(
    network: &Network,
    signal_box: &InputBox,
    background_box: &InputBox,
    eps_range: EpsRange,
    options: &SearchOptions,
) -> Result<GlobalVerdict> {
    let n = network.input_len();
    let mut lo = Vec::with_capacity(2 * n + 2);
    let mut hi = Vec::with_capacity(2 * n + 2);
    lo.extend_from_slice(signal_box.lo());
    lo.extend_from_slice(background_box.lo());
    lo.extend([eps_range.lo(), eps_range.lo()]);
    hi.extend_from_slice(signal_box.hi());
    hi.extend_from_slice(background_box.hi());
    hi.extend([eps_range.hi(), eps_range.hi()]);
    let problem = TwinProblem {
        network,
        n,
        root_width: lo.iter().zip(&hi).map(|(l, h)| h - l).collect(),
        options,
    };
    let shape = network.input_shape().to_vec();
    Ok(match frontier::search(&problem, Cell { lo, hi }, options.budget, options.seed) {
        Outcome::Exhausted => GlobalVerdict::Holds,
        Outcome::Found(w) => GlobalVerdict::Violated {
            signal: Tensor::new(shape.clone(), w.signal)?,
            background: Tensor::new(shape, w.background)?,
            eps1: w.eps1,
            eps2: w.eps2,
            value1: w.value1,
            value2: w.value2,
            margin: w.value2 - w.value1,
        },
        Outcome::Unknown { splits_used, bound_gap } => GlobalVerdict::Unknown { splits_used, bound_gap },
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::boxes::Budget;
    use crate::network::random::Architecture;
    use crate::network::toy_network;

    fn point(v: &[f64]) -> InputBox {
        InputBox::point(&Tensor::vector(v.to_vec()).unwrap())
    }

    fn eps(lo: f64, hi: f64) -> EpsRange {
        EpsRange::new(lo, hi).unwrap()
    }

    #[test]
    fn toy_point_scenes_match_the_ray_engine() {
        let net = toy_network();
        let opts = SearchOptions::default();
        let up = verify_global_consistency(&net, &point(&[1.0, 1.0]), &point(&[0.0, 0.0]), eps(0.0, 2.0), &opts);
        assert_eq!(up.unwrap(), GlobalVerdict::Holds);
        let down = verify_global_consistency(&net, &point(&[-1.0, 0.0]), &point(&[0.0, 0.0]), eps(0.0, 2.0), &opts);
        let GlobalVerdict::Violated { eps1, eps2, margin, .. } = down.unwrap() else {
            panic!("expected a violation");
        };
        assert_eq!((eps1, eps2, margin), (2.0, 0.0, 13.0));
    }

    #[test]
    fn twin_search_handles_point_scenes_without_the_ray_engine() {
        let net = toy_network();
        let opts = SearchOptions::default();
        let up = search_boxes(&net, &point(&[1.0, 1.0]), &point(&[0.0, 0.0]), eps(0.0, 2.0), &opts).unwrap();
        assert_eq!(up, GlobalVerdict::Holds);
        let down = search_boxes(&net, &point(&[-1.0, 0.0]), &point(&[0.0, 0.0]), eps(0.0, 2.0), &opts).unwrap();
        let GlobalVerdict::Violated {
            eps1,
            eps2,
            value1,
            value2,
            ..
        } = down
        else {
            panic!("expected a violation");
        };
        assert!(eps1 > eps2 && value1 < value2);
    }

    #[test]
    fn box_violation_rechecks() {
        let net = toy_network();
        let signal = InputBox::new(vec![2], vec![-1.0, -0.2], vec![-0.5, 0.2]).unwrap();
        let background = InputBox::uniform(vec![2], -0.1, 0.1).unwrap();
        let v = verify_global_consistency(&net, &signal, &background, eps(0.0, 2.0), &Default::default()).unwrap();
        let GlobalVerdict::Violated {
            signal: s,
            background: b,
            eps1,
            eps2,
            value1,
            value2,
            margin,
        } = v
        else {
            panic!("expected a violation, got {v:?}");
        };
        assert!(signal.contains(s.data()) && background.contains(b.data()));
        assert!(eps1 > eps2 && (0.0..=2.0).contains(&eps1) && (0.0..=2.0).contains(&eps2));
        assert_eq!(net.logit_of(&plant_values(s.data(), b.data(), eps1)), value1);
        assert_eq!(net.logit_of(&plant_values(s.data(), b.data(), eps2)), value2);
        assert_eq!(margin, value2 - value1);
        assert!(margin > 0.0);
    }

    #[test]
    fn monotone_networks_hold_at_the_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 0..20 {
            let mut arch = Architecture::sample(&mut rng, 5, 64);
            arch.nonnegative = true;
            let net = arch.build(&mut rng, &format!("mono{n}"));
            let len = net.input_len();
            let signal = InputBox::uniform(net.input_shape().to_vec(), 0.0, 1.0).unwrap();
            let background = InputBox::new(net.input_shape().to_vec(), vec![-1.0; len], vec![1.0; len]).unwrap();
            let opts = SearchOptions {
                budget: Budget {
                    max_splits: 1,
                    timeout: std::time::Duration::from_secs(10),
                },
                ..Default::default()
            };
            let v = verify_global_consistency(&net, &signal, &background, eps(0.0, 3.0), &opts).unwrap();
            assert_eq!(v, GlobalVerdict::Holds, "network {n}");
        }
    }

    #[test]
    fn degenerate_intensity_range_holds() {
        let signal = InputBox::uniform(vec![2], -1.0, 1.0).unwrap();
        let v = verify_global_consistency(&toy_network(), &signal, &signal, eps(1.0, 1.0), &Default::default());
        assert_eq!(v.unwrap(), GlobalVerdict::Holds);
    }

    #[test]
    fn secant_ranges() {
        assert_eq!(secant(1.0, 2.0, 0.5, 3.0), (1.0, 1.0));
        assert_eq!(secant(-2.0, -1.0, -3.0, 0.0), (0.0, 0.0));
        // a1 in [1, 2] active, a2 in [-1, -1] inactive: 1/2 ..= 2/3
        let (lo, hi) = secant(1.0, 2.0, -1.0, -1.0);
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 2.0 / 3.0).abs() < 1e-15);
        assert!(lo <= 0.5 && hi >= 2.0 / 3.0);
        assert_eq!(secant(-1.0, 1.0, -1.0, 1.0), (0.0, 1.0));
    }

    #[test]
    fn slope_bounds_enclose_sampled_secants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 0..15 {
            let arch = Architecture::sample(&mut rng, 4, 48);
            let net = arch.build(&mut rng, &format!("slope{n}"));
            let len = net.input_len();
            let s_lo: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s_hi: Vec<f64> = s_lo.iter().map(|l| l + rng.gen_range(0.0..0.3)).collect();
            let b_lo: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b_hi: Vec<f64> = b_lo.iter().map(|l| l + rng.gen_range(0.0..0.3)).collect();
            let lo = [s_lo.clone(), b_lo.clone(), vec![0.2, 0.0]].concat();
            let hi = [s_hi.clone(), b_hi.clone(), vec![0.6, 0.4]].concat();
            let opts = SearchOptions::default();
            let problem = TwinProblem {
                network: &net,
                n: len,
                root_width: vec![1.0; 2 * len + 2],
                options: &opts,
            };
            let cell = Cell { lo, hi };
            let k_lo = problem.slope_lower_bound(&cell);
            for _ in 0..300 {
                let s: Vec<f64> = (0..len).map(|i| rng.gen_range(s_lo[i]..=s_hi[i])).collect();
                let b: Vec<f64> = (0..len).map(|i| rng.gen_range(b_lo[i]..=b_hi[i])).collect();
                let e2 = rng.gen_range(0.0..=0.4);
                let e1 = rng.gen_range(0.2f64.max(e2 + 1e-3)..=0.6);
                let g1 = net.logit_of(&plant_values(&s, &b, e1));
                let g2 = net.logit_of(&plant_values(&s, &b, e2));
                let k = (g1 - g2) / (e1 - e2);
                let slack = 1e-9 * (1.0 + g1.abs() + g2.abs()) / (e1 - e2);
                assert!(k >= k_lo - slack, "net {n}: secant {k} below bound {k_lo}");
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let b = InputBox::uniform(vec![3], 0.0, 1.0).unwrap();
        assert!(verify_global_consistency(&toy_network(), &b, &b, eps(0.0, 1.0), &Default::default()).is_err());
    }
}
