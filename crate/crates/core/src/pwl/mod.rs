//! Exact piecewise-linear functions of one scalar, and propagation of a
//! network along a planting ray.
//!
//! Along the ray `x(eps) = background + eps * signal` every neuron of a
//! ReLU/max-pool network is a continuous piecewise-linear function of
//! `eps`. Affine layers preserve the breakpoints of their inputs, ReLU adds
//! zero crossings and max-pooling adds the corners of the upper envelope.
//! Tracking those breakpoints exactly turns local consistency into a check
//! of segment slopes.

mod ray;

use serde::Serialize;

pub use self::ray::{propagate_ray, verify_local_consistency, ConsistencyVerdict, LocalOptions, LocalReport};
use crate::error::{Error, Result};

/// Breakpoints closer than this fraction of the domain width are merged.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// A continuous piecewise-linear function on a closed interval, stored as
/// its values at strictly increasing breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PwlFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PwlFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints and {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite breakpoint or value".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
        }
        Ok(PwlFunction { breakpoints, values })
    }

    /// The affine function through `(lo, at_lo)` and `(hi, at_hi)`.
    pub fn linear(lo: f64, hi: f64, at_lo: f64, at_hi: f64) -> Result<Self> {
        if lo == hi {
            return PwlFunction::new(vec![lo], vec![at_lo]);
        }
        PwlFunction::new(vec![lo, hi], vec![at_lo, at_hi])
    }

    pub fn constant(lo: f64, hi: f64, value: f64) -> Result<Self> {
        PwlFunction::linear(lo, hi, value, value)
    }

    pub(crate) fn from_parts(breakpoints: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert!(breakpoints.windows(2).all(|w| w[0] < w[1]));
        PwlFunction { breakpoints, values }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Slope of every segment, left to right.
    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0]))
    }

    /// Value at `t`, clamped to the domain.
    pub fn eval(&self, t: f64) -> f64 {
        interpolate(&self.breakpoints, &self.values, t)
    }

    /// `bias + sum(coeffs[i] * inputs[i])`.
    pub fn affine(coeffs: &[f64], inputs: &[&PwlFunction], bias: f64) -> Result<Self> {
        if coeffs.len() != inputs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for {} inputs",
                coeffs.len(),
                inputs.len()
            )));
        }
        let Some(first) = inputs.first() else {
            return Err(Error::InvalidArgument("affine combination of no functions".into()));
        };
        let domain = first.domain();
        for f in inputs {
            check_domain(domain, f.domain())?;
        }
        let grid = merge_grids(inputs.iter().map(|f| f.breakpoints.as_slice()), domain);
        let mut values = vec![bias; grid.len()];
        for (&c, f) in coeffs.iter().zip(inputs) {
            for (acc, v) in values.iter_mut().zip(resample(&f.breakpoints, &f.values, &grid)) {
                *acc += c * v;
            }
        }
        Ok(PwlFunction::from_parts(grid, values))
    }

    /// `max(0, self)` with a breakpoint at every zero crossing.
    pub fn relu(&self) -> Self {
        let mut extra = Vec::new();
        relu_crossings(&self.breakpoints, &self.values, &mut extra);
        let grid = insert_points(&self.breakpoints, extra, self.domain());
        let values = resample(&self.breakpoints, &self.values, &grid)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        PwlFunction::from_parts(grid, values)
    }

    /// Pointwise maximum (upper envelope) of `fs`.
    pub fn max(fs: &[&PwlFunction]) -> Result<Self> {
        let Some(first) = fs.first() else {
            return Err(Error::InvalidArgument("maximum of an empty list".into()));
        };
        let domain = first.domain();
        for f in fs {
            check_domain(domain, f.domain())?;
        }
        let grid = merge_grids(fs.iter().map(|f| f.breakpoints.as_slice()), domain);
        let rows: Vec<Vec<f64>> = fs.iter().map(|f| resample(&f.breakpoints, &f.values, &grid)).collect();
        let mut extra = Vec::new();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        envelope_crossings(&grid, &refs, &mut extra);
        let fine = insert_points(&grid, extra, domain);
        let mut values = vec![f64::NEG_INFINITY; fine.len()];
        for row in &rows {
            for (acc, v) in values.iter_mut().zip(resample(&grid, row, &fine)) {
                *acc = acc.max(v);
            }
        }
        Ok(PwlFunction::from_parts(fine, values))
    }
}

fn check_domain(a: (f64, f64), b: (f64, f64)) -> Result<()> {
    let tol = MERGE_TOLERANCE * (a.1 - a.0);
    if (a.0 - b.0).abs() > tol || (a.1 - b.1).abs() > tol {
        return Err(Error::DomainMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

/// Linear interpolation on a breakpoint grid, clamped to its ends.
pub(crate) fn interpolate(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let last = grid.len() - 1;
    if t <= grid[0] {
        return values[0];
    }
    if t >= grid[last] {
        return values[last];
    }
    // first index with grid[k] > t; t lies in [grid[k-1], grid[k])
    let k = grid.partition_point(|&g| g <= t);
    lerp(grid[k - 1], grid[k], values[k - 1], values[k], t)
}

fn lerp(t0: f64, t1: f64, v0: f64, v1: f64, t: f64) -> f64 {
    if t == t0 {
        return v0;
    }
    if t == t1 {
        return v1;
    }
    v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
}

/// Values of the function `(grid, values)` at every point of `fine`, which
/// must be sorted and lie inside the grid's domain.
pub(crate) fn resample(grid: &[f64], values: &[f64], fine: &[f64]) -> Vec<f64> {
    if grid.len() == 1 {
        return vec![values[0]; fine.len()];
    }
    let mut k = 0;
    fine.iter()
        .map(|&t| {
            while k + 2 < grid.len() && grid[k + 1] <= t {
                k += 1;
            }
            lerp(grid[k], grid[k + 1], values[k], values[k + 1], t)
        })
        .collect()
}

/// Sorted union of several grids over `domain`, merging points that are
/// closer than the merge tolerance. Endpoints are kept exact.
pub(crate) fn merge_grids<'a>(grids: impl Iterator<Item = &'a [f64]>, domain: (f64, f64)) -> Vec<f64> {
    let mut all: Vec<f64> = grids.flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    dedup_sorted(all, domain)
}

/// `grid` with the (unsorted) `extra` points merged in.
pub(crate) fn insert_points(grid: &[f64], mut extra: Vec<f64>, domain: (f64, f64)) -> Vec<f64> {
    if extra.is_empty() {
        return grid.to_vec();
    }
    extra.extend_from_slice(grid);
    extra.sort_by(f64::total_cmp);
    dedup_sorted(extra, domain)
}

fn dedup_sorted(sorted: Vec<f64>, (lo, hi): (f64, f64)) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let tol = MERGE_TOLERANCE * (hi - lo);
    let mut out = Vec::with_capacity(sorted.len());
    out.push(lo);
    for t in sorted {
        if t - out[out.len() - 1] > tol && hi - t > tol {
            out.push(t);
        }
    }
    out.push(hi);
    out
}

/// Interior zero crossings of one function, appended to `out`.
pub(crate) fn relu_crossings(grid: &[f64], values: &[f64], out: &mut Vec<f64>) {
    for k in 0..grid.len().saturating_sub(1) {
        let (v0, v1) = (values[k], values[k + 1]);
        if (v0 < 0.0 && v1 > 0.0) || (v0 > 0.0 && v1 < 0.0) {
            out.push(grid[k] + (grid[k + 1] - grid[k]) * (v0 / (v0 - v1)));
        }
    }
}

/// Interior corners of the upper envelope of `rows` (all sampled on
/// `grid`), appended to `out`.
pub(crate) fn envelope_crossings(grid: &[f64], rows: &[&[f64]], out: &mut Vec<f64>) {
    if rows.len() < 2 {
        return;
    }
    for k in 0..grid.len().saturating_sub(1) {
        // each line is v0 + s * d for s in [0, 1]
        let line = |r: &[f64]| (r[k], r[k + 1] - r[k]);
        let mut cur = 0;
        for (i, r) in rows.iter().enumerate().skip(1) {
            let (v, d) = line(r);
            let (cv, cd) = line(rows[cur]);
            if v > cv || (v == cv && d > cd) {
                cur = i;
            }
        }
        let mut s = 0.0;
        loop {
            let (cv, cd) = line(rows[cur]);
            let mut next: Option<(f64, f64, usize)> = None;
            for (i, r) in rows.iter().enumerate() {
                let (v, d) = line(r);
                if d <= cd {
                    continue;
                }
                let cross = ((cv - v) / (d - cd)).max(s);
                if cross >= 1.0 {
                    continue;
                }
                let better = match next {
                    None => true,
                    Some((bs, bd, _)) => cross < bs || (cross == bs && d > bd),
                };
                if better {
                    next = Some((cross, d, i));
                }
            }
            let Some((cross, _, i)) = next else { break };
            if cross > 0.0 {
                out.push(grid[k] + (grid[k + 1] - grid[k]) * cross);
            }
            s = cross;
            cur = i;
        }
    }
}
