//! Structured results: training history and the evaluation battery's
//! tables, curves, grids, and histograms.
//!
//! Everything here is a plain serde-serializable value. The CLI decides how
//! a report is rendered (JSON, CSV, SVG); these types only fix the shape of
//! the data so runs can be compared, archived, and re-plotted.

use serde::{Deserialize, Serialize};

/// Identity of the run a report belongs to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub architecture: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub seed: u64,
}

/// One training epoch's aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean task (cross-entropy) loss over the epoch's batches.
    pub train_loss: f64,
    /// Mean unweighted robustness (KL) loss; zero for methods without it.
    pub robustness_loss: f64,
    pub val_accuracy: f64,
}

/// Full per-epoch history plus the selection outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch index whose checkpoint was selected (first maximum).
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Number of gradient evaluations, counting each adversary step.
    pub grad_evals: u64,
}

/// One mismatch-sweep row: accuracy statistics at a fixed noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub zeta: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
}

/// Monte-Carlo mismatch sweep over noise levels and model instances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
    /// Draws per checkpoint per row.
    pub n_samples: usize,
    pub n_checkpoints: usize,
}

/// Attacked accuracy at one attack radius, with the random-perturbation
/// baseline at the same radius when measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPoint {
    pub zeta: f64,
    pub attacked_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_accuracy: Option<f64>,
}

/// Accuracy-vs-radius curve for one attack objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackCurve {
    /// `"cross_entropy"` (task attack) or `"kl"` (output-divergence attack).
    pub objective: String,
    pub points: Vec<AttackPoint>,
}

/// Cross-entropy loss along random weight-space rays `theta + alpha * v`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub zeta: f64,
    pub alphas: Vec<f64>,
    /// One loss row per random direction, aligned with `alphas`.
    pub rows: Vec<Vec<f64>>,
    /// RNG stream id used for each trial's direction.
    pub trial_streams: Vec<u64>,
}

/// Histogram of membrane potentials normalised by their current threshold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MembraneHistogram {
    /// Bin edges, length `counts.len() + 1`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Fraction of values with `|v/b - 1| < 0.1`.
    pub near_threshold_fraction: f64,
    /// Total pooled values = time steps x neurons x batch size.
    pub total: u64,
}

/// Fraction of test inputs with provably unchanged predictions per radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedPoint {
    pub zeta: f64,
    pub verified_accuracy: f64,
    pub clean_accuracy: f64,
}

/// Verified-accuracy curve over interval radii.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifiedCurve {
    pub points: Vec<VerifiedPoint>,
}

/// Umbrella result of one run: any subset of the evaluation battery.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: ReportMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainHistory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<RobustnessTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attacks: Vec<AttackCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<LandscapeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membrane: Option<MembraneHistogram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerifiedCurve>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_through_json() {
        let report = RunReport {
            meta: ReportMeta {
                architecture: "mlp".into(),
                method: "beta".into(),
                task: Some("fmnist".into()),
                seed: 7,
            },
            training: Some(TrainHistory {
                epochs: vec![EpochStats {
                    epoch: 0,
                    train_loss: 1.5,
                    robustness_loss: 0.25,
                    val_accuracy: 0.5,
                }],
                best_epoch: 0,
                best_val_accuracy: 0.5,
                grad_evals: 11,
            }),
            mismatch: Some(RobustnessTable {
                rows: vec![RobustnessRow {
                    zeta: 0.1,
                    mean: 0.9,
                    std: 0.01,
                    min: 0.87,
                }],
                n_samples: 20,
                n_checkpoints: 2,
            }),
            attacks: vec![AttackCurve {
                objective: "cross_entropy".into(),
                points: vec![AttackPoint {
                    zeta: 0.1,
                    attacked_accuracy: 0.2,
                    random_accuracy: Some(0.85),
                }],
            }],
            landscape: None,
            membrane: None,
            verification: None,
        };
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert!(
            !json.contains("landscape"),
            "absent sections stay out of the payload"
        );
    }

    #[test]
    fn empty_report_serializes_to_meta_only() {
        let report = RunReport::default();
        let json = serde_json::to_string(&report).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert!(!json.contains("attacks"));
    }
}
