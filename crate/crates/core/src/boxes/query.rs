use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::frontier::{self, Assessment, Outcome, Problem};
use super::ibp::{propagate_intervals, LayerBounds};
use super::{InputBox, SearchOptions};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    Le,
    Ge,
    Lt,
    Gt,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Le => "<=",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Gt => ">",
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Comparison::Lt | Comparison::Gt)
    }

    fn flipped(self) -> Comparison {
        match self {
            Comparison::Le => Comparison::Ge,
            Comparison::Ge => Comparison::Le,
            Comparison::Lt => Comparison::Gt,
            Comparison::Gt => Comparison::Lt,
        }
    }

    fn is_upper(self) -> bool {
        matches!(self, Comparison::Le | Comparison::Lt)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `coeff * y  cmp  bound`, where `y` is the network logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostConstraint {
    pub coeff: f64,
    pub cmp: Comparison,
    pub bound: f64,
}

impl PostConstraint {
    pub fn new(coeff: f64, cmp: Comparison, bound: f64) -> Result<Self> {
        if coeff == 0.0 || !coeff.is_finite() || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid constraint {coeff}*y {cmp} {bound}: coefficient must be finite and nonzero"
            )));
        }
        Ok(PostConstraint { coeff, cmp, bound })
    }

    /// Same constraint with a unit coefficient: `y cmp' bound / coeff`.
    pub fn normalized(&self) -> PostConstraint {
        let cmp = if self.coeff > 0.0 { self.cmp } else { self.cmp.flipped() };
        PostConstraint {
            coeff: 1.0,
            cmp,
            bound: self.bound / self.coeff,
        }
    }

    /// Signed violation: `<= 0` means satisfied for non-strict comparisons,
    /// `< 0` for strict ones (which must also clear `margin`).
    fn excess(&self, y: f64, margin: f64) -> f64 {
        let v = self.coeff * y;
        let m = if self.cmp.is_strict() { margin } else { 0.0 };
        if self.cmp.is_upper() {
            v - self.bound + m
        } else {
            self.bound - v + m
        }
    }

    pub fn holds(&self, y: f64, margin: f64) -> bool {
        let e = self.excess(y, margin);
        if self.cmp.is_strict() {
            e < 0.0
        } else {
            e <= 0.0
        }
    }

    /// Smallest excess over `y` in `[lo, hi]`: positive means the interval
    /// cannot satisfy the constraint. Strict and non-strict comparisons are
    /// treated alike.
    fn slack(&self, lo: f64, hi: f64) -> f64 {
        let (a, b) = (self.coeff * lo, self.coeff * hi);
        let (min, max) = (a.min(b), a.max(b));
        if self.cmp.is_upper() {
            min - self.bound
        } else {
            self.bound - max
        }
    }
}

/// A precondition box and a conjunction of postconditions on the logit.
///
/// The postcondition describes a violation: a satisfying input is a
/// counterexample to the property being checked. The precondition may be
/// infeasible (some dimension with `lo > hi`), in which case nothing
/// satisfies it.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    shape: Vec<usize>,
    pre: Vec<(f64, f64)>,
    post: Vec<PostConstraint>,
}

impl Query {
    pub fn new(shape: Vec<usize>, pre: Vec<(f64, f64)>, post: Vec<PostConstraint>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || len == 0 || pre.len() != len {
            return Err(Error::InvalidArgument(format!(
                "precondition has {} intervals for shape {shape:?}",
                pre.len()
            )));
        }
        if let Some(i) = pre.iter().position(|(l, h)| !(l.is_finite() && h.is_finite())) {
            return Err(Error::InvalidArgument(format!("unbounded dimension {i}")));
        }
        if post.is_empty() {
            return Err(Error::InvalidArgument("empty postcondition".into()));
        }
        for c in &post {
            PostConstraint::new(c.coeff, c.cmp, c.bound)?;
        }
        Ok(Query { shape, pre, post })
    }

    pub fn from_box(input_box: &InputBox, post: Vec<PostConstraint>) -> Result<Self> {
        let pre = input_box.lo().iter().copied().zip(input_box.hi().iter().copied()).collect();
        Query::new(input_box.shape().to_vec(), pre, post)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn pre(&self) -> &[(f64, f64)] {
        &self.pre
    }

    pub fn post(&self) -> &[PostConstraint] {
        &self.post
    }

    pub fn is_feasible(&self) -> bool {
        self.pre.iter().all(|(l, h)| l <= h)
    }

    pub fn input_box(&self) -> Result<InputBox> {
        if let Some(i) = self.pre.iter().position(|(l, h)| l > h) {
            return Err(Error::InfeasiblePrecondition(i));
        }
        InputBox::new(
            self.shape.clone(),
            self.pre.iter().map(|p| p.0).collect(),
            self.pre.iter().map(|p| p.1).collect(),
        )
    }

    fn holds(&self, y: f64, margin: f64) -> bool {
        self.post.iter().all(|c| c.holds(y, margin))
    }

    fn excess(&self, y: f64, margin: f64) -> f64 {
        self.post.iter().map(|c| c.excess(y, margin)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Answer to a verification query.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Verdict {
    /// `witness` satisfies the precondition and `output` (its logit) every
    /// postcondition.
    Sat { witness: Tensor, output: f64 },
    /// No input in the precondition satisfies the postcondition: the
    /// property holds.
    Unsat,
    /// The budget ran out. `bound_gap` is the largest remaining distance
    /// between an open box's logit bounds and refuting the postcondition.
    Unknown { splits_used: usize, bound_gap: f64 },
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, Verdict::Sat { .. })
    }
}

struct Leaf {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

struct QueryProblem<'a> {
    network: &'a Network,
    query: &'a Query,
    root_width: Vec<f64>,
    options: &'a SearchOptions,
}

impl QueryProblem<'_> {
    fn objective(&self, x: &[f64]) -> (f64, f64) {
        let y = self.network.logit_of(x);
        (self.query.excess(y, self.options.strict_margin), y)
    }

    fn witness(&self, x: Vec<f64>) -> Option<(Vec<f64>, f64)> {
        let y = self.network.logit_of(&x);
        self.query.holds(y, self.options.strict_margin).then_some((x, y))
    }

    /// Random starts followed by coordinate-wise greedy descent on the
    /// largest constraint excess.
    fn sample(&self, leaf: &Leaf, rng: &mut ChaCha8Rng) -> Option<(Vec<f64>, f64)> {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            leaf.lo
                .iter()
                .zip(&leaf.hi)
                .map(|(&l, &h)| if l < h { rng.gen_range(l..=h) } else { l })
                .collect()
        };
        let mut best: Option<(Vec<f64>, f64)> = None;
        let starts = std::iter::once(center(leaf)).chain((0..self.options.samples_per_box).map(|_| draw(rng)));
        for x in starts.collect::<Vec<_>>() {
            let (score, _) = self.objective(&x);
            if best.as_ref().map_or(true, |b| score < b.1) {
                best = Some((x, score));
            }
        }
        let (mut x, mut score) = best?;
        for _ in 0..2 {
            if self.query.holds(self.network.logit_of(&x), self.options.strict_margin) {
                break;
            }
            for d in 0..x.len() {
                let (l, h) = (leaf.lo[d], leaf.hi[d]);
                if l == h {
                    continue;
                }
                let cur = x[d];
                for cand in [l, h, 0.5 * (l + h), 0.5 * (cur + l), 0.5 * (cur + h)] {
                    x[d] = cand;
                    let (s, _) = self.objective(&x);
                    if s < score {
                        score = s;
                    } else {
                        x[d] = cur;
                    }
                    let kept = x[d];
                    x[d] = kept;
                }
                if score < 0.0 {
                    break;
                }
            }
        }
        self.witness(x)
    }
}

fn center(leaf: &Leaf) -> Vec<f64> {
    leaf.lo.iter().zip(&leaf.hi).map(|(l, h)| 0.5 * (l + h)).collect()
}

/// Widest dimension relative to the root box; ties go to the lowest index.
pub(crate) fn widest(lo: &[f64], hi: &[f64], root_width: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..lo.len() {
        if root_width[i] <= 0.0 || hi[i] <= lo[i] {
            continue;
        }
        let w = (hi[i] - lo[i]) / root_width[i];
        if best.map_or(true, |(_, bw)| w > bw) {
            best = Some((i, w));
        }
    }
    best.map(|(i, _)| i)
}

impl Problem for QueryProblem<'_> {
    type Node = Leaf;
    type Witness = (Vec<f64>, f64);

    fn assess(&self, leaf: &Leaf, rng: &mut ChaCha8Rng) -> Assessment<Self::Witness> {
        if leaf.lo == leaf.hi {
            return match self.witness(leaf.lo.clone()) {
                Some(w) => Assessment::Found(w),
                None => Assessment::Closed,
            };
        }
        let bounds = propagate_intervals(
            self.network.logit_ops(),
            LayerBounds {
                lo: leaf.lo.clone(),
                hi: leaf.hi.clone(),
            },
        );
        let out = bounds.last().unwrap();
        let (lo, hi) = (out.lo[0], out.hi[0]);
        let slack = self
            .query
            .post
            .iter()
            .map(|c| c.slack(lo, hi))
            .fold(f64::NEG_INFINITY, f64::max);
        if slack > 0.0 {
            return Assessment::Closed;
        }
        match self.sample(leaf, rng) {
            Some(w) => Assessment::Found(w),
            None => Assessment::Open { gap: -slack },
        }
    }

    fn split(&self, leaf: &Leaf) -> Option<(Leaf, Leaf)> {
        let d = widest(&leaf.lo, &leaf.hi, &self.root_width)?;
        let mid = 0.5 * (leaf.lo[d] + leaf.hi[d]);
        let mut left = Leaf {
            lo: leaf.lo.clone(),
            hi: leaf.hi.clone(),
        };
        let mut right = Leaf {
            lo: leaf.lo.clone(),
            hi: leaf.hi.clone(),
        };
        left.hi[d] = mid;
        right.lo[d] = mid;
        Some((left, right))
    }
}

/// Searches the precondition box for an input whose logit satisfies every
/// postcondition.
///
/// ```
/// use flarecheck::boxes::{verify_query, Comparison, InputBox, PostConstraint, Query, Verdict};
/// use flarecheck::network::toy_network;
///
/// let pre = InputBox::uniform(vec![2], 0.0, 1.0).unwrap();
/// let post = PostConstraint::new(1.0, Comparison::Le, 10.0).unwrap();
/// let query = Query::from_box(&pre, vec![post]).unwrap();
/// let verdict = verify_query(&toy_network(), &query, &Default::default()).unwrap();
/// assert_eq!(verdict, Verdict::Unsat);
/// ```
pub fn verify_query(network: &Network, query: &Query, options: &SearchOptions) -> Result<Verdict> {
    options.validate()?;
    if query.shape() != network.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: network.input_shape().to_vec(),
            actual: query.shape().to_vec(),
        });
    }
    for c in query.post() {
        PostConstraint::new(c.coeff, c.cmp, c.bound)?;
    }
    if !query.is_feasible() {
        return Ok(Verdict::Unsat);
    }
    let root = Leaf {
        lo: query.pre.iter().map(|p| p.0).collect(),
        hi: query.pre.iter().map(|p| p.1).collect(),
    };
    let problem = QueryProblem {
        network,
        query,
        root_width: root.lo.iter().zip(&root.hi).map(|(l, h)| h - l).collect(),
        options,
    };
    Ok(match frontier::search(&problem, root, options.budget, options.seed) {
        Outcome::Exhausted => Verdict::Unsat,
        Outcome::Found((x, output)) => Verdict::Sat {
            witness: Tensor::new(query.shape.clone(), x)?,
            output,
        },
        Outcome::Unknown { splits_used, bound_gap } => Verdict::Unknown { splits_used, bound_gap },
    })
}
