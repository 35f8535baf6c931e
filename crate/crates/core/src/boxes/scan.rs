use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::network::Network;
use crate::planting::SceneSet;
use crate::pwl::{verify_local_consistency, ConsistencyVerdict, LocalOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PairOutcome {
    Consistent {
        segments: usize,
    },
    Inconsistent {
        eps1: f64,
        eps2: f64,
        value1: f64,
        value2: f64,
        margin: f64,
        segments: usize,
    },
    /// Propagation failed for this pair, e.g. the segment cap was hit.
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub signal_idx: usize,
    pub background_idx: usize,
    #[serde(flatten)]
    pub outcome: PairOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    /// Pairs in signal-major order.
    pub pairs: Vec<PairResult>,
    /// Consistent pairs over all pairs, errors included in the denominator.
    pub consistent_fraction: f64,
    /// Largest drop among inconsistent pairs.
    pub worst_margin: Option<f64>,
    pub errors: usize,
}

impl ScanReport {
    pub fn inconsistent(&self) -> usize {
        self.pairs
            .iter()
            .filter(|p| matches!(p.outcome, PairOutcome::Inconsistent { .. }))
            .count()
    }

    /// One row per pair: `signal_idx, background_idx, status, eps1, eps2,
    /// margin, segments`, with empty cells where a field does not apply.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["signal_idx", "background_idx", "status", "eps1", "eps2", "margin", "segments"])?;
        for p in &self.pairs {
            let (s, b) = (p.signal_idx.to_string(), p.background_idx.to_string());
            let row = match &p.outcome {
                PairOutcome::Consistent { segments } => {
                    [s, b, "consistent".into(), String::new(), String::new(), String::new(), segments.to_string()]
                }
                PairOutcome::Inconsistent {
                    eps1,
                    eps2,
                    margin,
                    segments,
                    ..
                } => [
                    s,
                    b,
                    "inconsistent".into(),
                    eps1.to_string(),
                    eps2.to_string(),
                    margin.to_string(),
                    segments.to_string(),
                ],
                PairOutcome::Error { .. } => [s, b, "error".into(), String::new(), String::new(), String::new(), String::new()],
            };
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Runs the exact ray check on every signal/background pair of `scenes`.
///
/// ```
/// use flarecheck::boxes::scan_dataset_consistency;
/// use flarecheck::{network::toy_network, planting::{EpsRange, SceneSet}, Tensor};
///
/// let scenes = SceneSet::new(
///     vec![Tensor::vector(vec![1.0, 1.0]).unwrap(), Tensor::vector(vec![-1.0, 0.0]).unwrap()],
///     vec![Tensor::vector(vec![0.0, 0.0]).unwrap()],
///     EpsRange::new(0.0, 2.0).unwrap(),
/// )
/// .unwrap();
/// let report = scan_dataset_consistency(&toy_network(), &scenes, &Default::default()).unwrap();
/// assert_eq!(report.consistent_fraction, 0.5);
/// assert_eq!(report.worst_margin, Some(13.0));
/// ```
pub fn scan_dataset_consistency(network: &Network, scenes: &SceneSet, options: &LocalOptions) -> Result<ScanReport> {
    if scenes.shape() != network.input_shape() {
        return Err(crate::Error::ShapeMismatch {
            expected: network.input_shape().to_vec(),
            actual: scenes.shape().to_vec(),
        });
    }
    let nb = scenes.backgrounds().len();
    let pairs: Vec<PairResult> = (0..scenes.pairs())
        .into_par_iter()
        .map(|k| {
            let (s, b) = (k / nb, k % nb);
            let outcome = match verify_local_consistency(network, &scenes.scene(s, b), options) {
                Ok(r) => match r.verdict {
                    ConsistencyVerdict::Consistent => PairOutcome::Consistent { segments: r.segments },
                    ConsistencyVerdict::Inconsistent {
                        eps1,
                        eps2,
                        value1,
                        value2,
                        margin,
                    } => PairOutcome::Inconsistent {
                        eps1,
                        eps2,
                        value1,
                        value2,
                        margin,
                        segments: r.segments,
                    },
                },
                Err(e) => PairOutcome::Error { message: e.to_string() },
            };
            PairResult {
                signal_idx: s,
                background_idx: b,
                outcome,
            }
        })
        .collect();
    let consistent = pairs
        .iter()
        .filter(|p| matches!(p.outcome, PairOutcome::Consistent { .. }))
        .count();
    let errors = pairs.iter().filter(|p| matches!(p.outcome, PairOutcome::Error { .. })).count();
    let worst_margin = pairs
        .iter()
        .filter_map(|p| match p.outcome {
            PairOutcome::Inconsistent { margin, .. } => Some(margin),
            _ => None,
        })
        .reduce(f64::max);
    Ok(ScanReport {
        consistent_fraction: consistent as f64 / pairs.len() as f64,
        pairs,
        worst_margin,
        errors,
    })
}
