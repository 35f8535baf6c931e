//! Sound verification over boxes of inputs.
//!
//! Two questions are answered here, both by interval bound propagation
//! (IBP) inside an input-splitting branch and bound:
//!
//! * generic queries `P(x) ∧ Q(N(x))` with SAT / UNSAT / UNKNOWN answers
//!   ([`verify_query`]), where `P` is a box and `Q` a conjunction of linear
//!   constraints on the logit;
//! * consistency over boxes of signals and backgrounds
//!   ([`verify_global_consistency`]), using two planted copies of the same
//!   scene at intensities `eps1 >= eps2`.
//!
//! A SAT or violation answer always carries a concrete witness that was
//! re-checked with an exact forward pass. UNSAT and "holds" answers come
//! only from bounds that are sound for every point of every leaf box.

mod frontier;
mod global;
mod ibp;
mod query;
mod scan;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use self::global::{verify_global_consistency, GlobalVerdict};
pub use self::ibp::{ibp_bounds, propagate_intervals, Interval, LayerBounds};
pub use self::query::{verify_query, Comparison, PostConstraint, Query, Verdict};
pub use self::scan::{scan_dataset_consistency, PairOutcome, PairResult, ScanReport};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-dimension closed intervals over a tensor shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct InputBox {
    shape: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    shape: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawBox> for InputBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        InputBox::new(raw.shape, raw.lo, raw.hi)
    }
}

impl From<InputBox> for RawBox {
    fn from(b: InputBox) -> Self {
        RawBox {
            shape: b.shape,
            lo: b.lo,
            hi: b.hi,
        }
    }
}

impl InputBox {
    /// Unbounded or inverted intervals are rejected: IBP over an unbounded
    /// box proves nothing.
    pub fn new(shape: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || len == 0 || lo.len() != len || hi.len() != len {
            return Err(Error::InvalidArgument(format!(
                "box over shape {shape:?} needs {len} bounds per side, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) {
                return Err(Error::InvalidArgument(format!("dimension {i} is unbounded")));
            }
            if l > h {
                return Err(Error::InvalidArgument(format!("dimension {i} has lo {l} > hi {h}")));
            }
        }
        Ok(InputBox { shape, lo, hi })
    }

    /// The same interval on every dimension.
    pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64) -> Result<Self> {
        let len = shape.iter().product();
        InputBox::new(shape, vec![lo; len], vec![hi; len])
    }

    pub fn point(t: &Tensor) -> Self {
        InputBox {
            shape: t.shape().to_vec(),
            lo: t.data().to_vec(),
            hi: t.data().to_vec(),
        }
    }

    /// Smallest box containing every tensor (all of one shape).
    pub fn hull<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut iter = tensors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("hull of no tensors".into()))?;
        let mut b = InputBox::point(first);
        for t in iter {
            t.ensure_shape(&b.shape)?;
            for (i, &v) in t.data().iter().enumerate() {
                b.lo[i] = b.lo[i].min(v);
                b.hi[i] = b.hi[i].max(v);
            }
        }
        Ok(b)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len() && x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| l <= v && v <= h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }
}

/// Limits for a branch-and-bound search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_splits: usize,
    pub timeout: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_splits: 10_000,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub budget: Budget,
    /// Seed for the counterexample sampler. Results are reproducible for a
    /// fixed seed unless the timeout fires.
    pub seed: u64,
    /// Strict post constraints must hold by at least this much on a witness.
    pub strict_margin: f64,
    /// Random starting points per box for the counterexample search.
    pub samples_per_box: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget: Budget::default(),
            seed: 0,
            strict_margin: 0.0,
            samples_per_box: 8,
        }
    }
}

impl SearchOptions {
    fn validate(&self) -> Result<()> {
        if self.budget.max_splits == 0 || self.budget.timeout.is_zero() {
            return Err(Error::InvalidArgument("search budget must be positive".into()));
        }
        if !(self.strict_margin.is_finite() && self.strict_margin >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "strict margin {} must be finite and nonnegative",
                self.strict_margin
            )));
        }
        Ok(())
    }
}
