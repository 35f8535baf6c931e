//! Linear planting of wildfire signals into backgrounds, and seeded
//! procedural generators that stand in for a recorded-data simulator.
//!
//! A planted image is `background + eps * signal`. Everything downstream
//! relies only on this being affine in `eps`; the generators merely supply
//! plausible inputs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Closed intensity interval `[lo, hi]` with `0 <= lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct EpsRange {
    lo: f64,
    hi: f64,
}

impl EpsRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "intensity range [{lo}, {hi}] must be finite with 0 <= lo <= hi"
            )));
        }
        Ok(EpsRange { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl Default for EpsRange {
    fn default() -> Self {
        EpsRange { lo: 0.0, hi: 1.0 }
    }
}

impl TryFrom<[f64; 2]> for EpsRange {
    type Error = Error;

    fn try_from([lo, hi]: [f64; 2]) -> Result<Self> {
        EpsRange::new(lo, hi)
    }
}

impl From<EpsRange> for [f64; 2] {
    fn from(r: EpsRange) -> Self {
        [r.lo, r.hi]
    }
}

/// `background + eps * signal`, elementwise.
pub fn plant(signal: &Tensor, background: &Tensor, eps: f64) -> Result<Tensor> {
    background.ensure_shape(signal.shape())?;
    if !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("intensity {eps} is not finite")));
    }
    let data = plant_values(signal.data(), background.data(), eps);
    Tensor::new(signal.shape().to_vec(), data)
}

pub(crate) fn plant_values(signal: &[f64], background: &[f64], eps: f64) -> Vec<f64> {
    signal.iter().zip(background).map(|(&s, &b)| b + eps * s).collect()
}

/// A single signal/background pair over an intensity range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    signal: Tensor,
    background: Tensor,
    eps_range: EpsRange,
}

impl Scene {
    pub fn new(signal: Tensor, background: Tensor, eps_range: EpsRange) -> Result<Self> {
        background.ensure_shape(signal.shape())?;
        Ok(Scene {
            signal,
            background,
            eps_range,
        })
    }

    pub fn signal(&self) -> &Tensor {
        &self.signal
    }

    pub fn background(&self) -> &Tensor {
        &self.background
    }

    pub fn eps_range(&self) -> EpsRange {
        self.eps_range
    }

    pub fn shape(&self) -> &[usize] {
        self.signal.shape()
    }

    /// The planted image at intensity `eps`.
    pub fn at(&self, eps: f64) -> Vec<f64> {
        plant_values(self.signal.data(), self.background.data(), eps)
    }
}

/// Finite samples of signals and backgrounds sharing one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSceneSet")]
pub struct SceneSet {
    signals: Vec<Tensor>,
    backgrounds: Vec<Tensor>,
    eps_range: EpsRange,
}

#[derive(Deserialize)]
struct RawSceneSet {
    signals: Vec<Tensor>,
    backgrounds: Vec<Tensor>,
    eps_range: EpsRange,
}

impl TryFrom<RawSceneSet> for SceneSet {
    type Error = Error;

    fn try_from(raw: RawSceneSet) -> Result<Self> {
        SceneSet::new(raw.signals, raw.backgrounds, raw.eps_range)
    }
}

impl SceneSet {
    pub fn new(signals: Vec<Tensor>, backgrounds: Vec<Tensor>, eps_range: EpsRange) -> Result<Self> {
        if signals.is_empty() || backgrounds.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "scene set needs at least one signal and one background (got {} and {})",
                signals.len(),
                backgrounds.len()
            )));
        }
        let shape = signals[0].shape();
        for t in signals.iter().chain(&backgrounds) {
            t.ensure_shape(shape)?;
        }
        Ok(SceneSet {
            signals,
            backgrounds,
            eps_range,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene sets always serialize")
    }

    pub fn signals(&self) -> &[Tensor] {
        &self.signals
    }

    pub fn backgrounds(&self) -> &[Tensor] {
        &self.backgrounds
    }

    pub fn eps_range(&self) -> EpsRange {
        self.eps_range
    }

    pub fn shape(&self) -> &[usize] {
        self.signals[0].shape()
    }

    /// Number of (signal, background) pairs.
    pub fn pairs(&self) -> usize {
        self.signals.len() * self.backgrounds.len()
    }

    /// The scene for signal `s` and background `b`.
    pub fn scene(&self, s: usize, b: usize) -> Scene {
        Scene {
            signal: self.signals[s].clone(),
            background: self.backgrounds[b].clone(),
            eps_range: self.eps_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundParams {
    /// Half-width of the moving-average window, in pixels.
    pub smoothness: usize,
    pub amplitude: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            smoothness: 1,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalParams {
    /// Blob center `(row, col)` in pixel coordinates; drawn from the seed
    /// when `None`.
    pub center: Option<(f64, f64)>,
    /// Standard deviation of the blob, in pixels.
    pub radius: f64,
    /// Ratio between the magnitudes of consecutive time steps.
    pub growth: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        SignalParams {
            center: None,
            radius: 0.8,
            growth: 1.5,
        }
    }
}

/// Views a shape as `(frames, rows, cols)`.
fn frames(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [n] => Ok((1, 1, n)),
        [h, w] => Ok((1, h, w)),
        [k, h, w] => Ok((k, h, w)),
        _ => Err(Error::InvalidArgument(format!(
            "generators support rank 1-3 shapes, got {shape:?}"
        ))),
    }
}

/// Smooth low-frequency field in `[0, amplitude]`: uniform noise followed by
/// a separable moving average within each frame.
pub fn generate_background(seed: u64, shape: &[usize], params: BackgroundParams) -> Result<Tensor> {
    let (k, h, w) = frames(shape)?;
    if !(params.amplitude.is_finite() && params.amplitude >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "amplitude {} must be finite and nonnegative",
            params.amplitude
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..k * h * w).map(|_| rng.gen::<f64>()).collect();
    let r = params.smoothness;
    let mut rows = vec![0.0; noise.len()];
    for f in 0..k {
        for y in 0..h {
            for x in 0..w {
                let (a, b) = (x.saturating_sub(r), (x + r).min(w - 1));
                let sum: f64 = (a..=b).map(|xx| noise[(f * h + y) * w + xx]).sum();
                rows[(f * h + y) * w + x] = sum / (b - a + 1) as f64;
            }
        }
    }
    let mut out = vec![0.0; noise.len()];
    for f in 0..k {
        for y in 0..h {
            let (a, b) = (y.saturating_sub(r), (y + r).min(h - 1));
            for x in 0..w {
                let sum: f64 = (a..=b).map(|yy| rows[(f * h + yy) * w + x]).sum();
                // averages of [0, 1) samples stay in [0, 1); clamp guards rounding
                out[(f * h + y) * w + x] = params.amplitude * (sum / (b - a + 1) as f64).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// Gaussian blob whose magnitude grows by `growth` per time step, scaled so
/// the last frame peaks at exactly 1.
pub fn generate_signal(seed: u64, shape: &[usize], params: SignalParams) -> Result<Tensor> {
    let (k, h, w) = frames(shape)?;
    if !(params.radius.is_finite() && params.radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius {} must be positive", params.radius)));
    }
    if !(params.growth.is_finite() && params.growth > 0.0) {
        return Err(Error::InvalidArgument(format!("growth {} must be positive", params.growth)));
    }
    let (cy, cx) = match params.center {
        Some((cy, cx)) => {
            if !(0.0..=(h - 1) as f64).contains(&cy) || !(0.0..=(w - 1) as f64).contains(&cx) {
                return Err(Error::InvalidArgument(format!(
                    "center ({cy}, {cx}) lies outside the {h}x{w} frame"
                )));
            }
            (cy, cx)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (rng.gen_range(0.0..=(h - 1) as f64), rng.gen_range(0.0..=(w - 1) as f64))
        }
    };
    let two_var = 2.0 * params.radius * params.radius;
    let blob: Vec<f64> = (0..h * w)
        .map(|i| {
            let (dy, dx) = ((i / w) as f64 - cy, (i % w) as f64 - cx);
            (-(dy * dy + dx * dx) / two_var).exp()
        })
        .collect();
    let peak = blob.iter().copied().fold(0.0, f64::max);
    // a blob centred far from every pixel centre can underflow
    let peak = if peak > 0.0 { peak } else { 1.0 };
    let mut data = Vec::with_capacity(k * h * w);
    for f in 0..k {
        let scale = params.growth.powi(f as i32 - (k as i32 - 1));
        data.extend(blob.iter().map(|&v| v / peak * scale));
    }
    // the final frame is exactly blob/peak, whose maximum is 1
    Tensor::new(shape.to_vec(), data)
}
