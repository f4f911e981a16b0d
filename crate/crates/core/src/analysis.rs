//! The evaluation battery: how robust is a trained checkpoint, really?
//!
//! Four complementary probes, each answering a different question:
//!
//! * [`mismatch_eval`] — Monte-Carlo: accuracy statistics under random
//!   multiplicative parameter noise at a grid of noise levels;
//! * [`task_pga_eval`] / [`kl_pga_eval`] — adversarial: accuracy after the
//!   projected-gradient weight attack ascends the task loss (labels known)
//!   or the output-divergence KL (label-free), with a matched random
//!   perturbation as the baseline;
//! * [`landscape_sweep`] — geometric: cross-entropy along random
//!   weight-space rays `theta + alpha*v`, exposing how sharply the loss
//!   rises away from the trained point;
//! * [`membrane_histogram`] — mechanistic (spiking nets): how much
//!   probability mass sits near the firing threshold, where multiplicative
//!   noise flips spikes.
//!
//! Every probe is read-only: the checkpoint passed in is never mutated.

use crate::adversary::{pga_attack, AttackConfig, AttackObjective};
use crate::diffcore::kernels;
use crate::diffcore::rng::RngStream;
use crate::diffcore::tensor::Real;
use crate::error::{Error, Result};
use crate::mismatch::{apply_direction, proportional_direction, sample_mismatch};
use crate::models::{forward_eval, forward_probs, Architecture, Dataset, ParameterSet};
use crate::report::{
    AttackCurve, AttackPoint, LandscapeGrid, MembraneHistogram, RobustnessRow, RobustnessTable,
};
use crate::training::accuracy;

/// The noise grid used by the headline robustness tables.
pub const MISMATCH_ZETAS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.5, 0.7];

/// Mean cross-entropy of the model on a dataset, evaluated in chunks.
pub fn mean_cross_entropy<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    data: &Dataset<T>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let classes = arch.classes();
    let mut weighted = 0.0;
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(256) {
        let batch = data.batch(chunk);
        let probs = forward_probs(arch, params, &batch.input)?;
        let onehot = batch.one_hot(classes);
        let ce = kernels::cross_entropy(&probs, &onehot).to_f64();
        weighted += ce * chunk.len() as f64;
    }
    Ok(weighted / data.len() as f64)
}

/// Accuracy statistics under random multiplicative noise.
///
/// For every radius in `zetas`, draws `n_samples` perturbed copies of each
/// checkpoint, measures test accuracy, and aggregates mean, population
/// standard deviation, and minimum over all checkpoint-sample pairs.
pub fn mismatch_eval<T: Real>(
    arch: &Architecture,
    checkpoints: &[ParameterSet<T>],
    zetas: &[f64],
    n_samples: usize,
    data: &Dataset<T>,
    rng: &mut RngStream,
) -> Result<RobustnessTable> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one mismatch sample"));
    }
    if checkpoints.is_empty() {
        return Err(Error::invalid("need at least one checkpoint"));
    }
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut rows = Vec::with_capacity(zetas.len());
    for &zeta in zetas {
        let mut accs = Vec::with_capacity(n_samples * checkpoints.len());
        for params in checkpoints {
            for _ in 0..n_samples {
                let sampled = sample_mismatch(params, zeta, rng)?;
                accs.push(accuracy(arch, &sampled, data)?);
            }
        }
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(RobustnessRow {
            zeta,
            mean,
            std: var.sqrt(),
            min,
        });
    }
    Ok(RobustnessTable {
        rows,
        n_samples,
        n_checkpoints: checkpoints.len(),
    })
}

fn attack_eval<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    zetas: &[f64],
    attack: &AttackConfig,
    objective: AttackObjective,
    data: &Dataset<T>,
    attack_rows: usize,
    rng: &mut RngStream,
) -> Result<AttackCurve> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let rows_used = if attack_rows == 0 {
        data.len()
    } else {
        attack_rows.min(data.len())
    };
    let attack_batch = data.batch(&(0..rows_used).collect::<Vec<_>>());
    let mut points = Vec::with_capacity(zetas.len());
    for &zeta in zetas {
        let cfg = AttackConfig {
            zeta_attack: zeta,
            ..attack.clone()
        };
        let (attacked, _) = pga_attack(arch, params, &attack_batch, objective, &cfg, rng)?;
        let attacked_accuracy = accuracy(arch, &attacked, data)?;
        let random = sample_mismatch(params, zeta, rng)?;
        let random_accuracy = accuracy(arch, &random, data)?;
        points.push(AttackPoint {
            zeta,
            attacked_accuracy,
            random_accuracy: Some(random_accuracy),
        });
    }
    Ok(AttackCurve {
        objective: match objective {
            AttackObjective::CrossEntropy => "cross_entropy".to_string(),
            AttackObjective::KlDivergence => "kl".to_string(),
        },
        points,
    })
}

/// Accuracy after the weight attack ascends the task cross-entropy.
///
/// The ascent uses the first `attack_rows` test examples (0 = all); the
/// resulting parameters are evaluated on the full set. Each point carries a
/// random proportional perturbation of the same radius as the baseline.
pub fn task_pga_eval<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    zetas: &[f64],
    attack: &AttackConfig,
    data: &Dataset<T>,
    attack_rows: usize,
    rng: &mut RngStream,
) -> Result<AttackCurve> {
    attack_eval(
        arch,
        params,
        zetas,
        attack,
        AttackObjective::CrossEntropy,
        data,
        attack_rows,
        rng,
    )
}

/// Accuracy after the label-free weight attack ascends the KL divergence
/// from the nominal output rows.
pub fn kl_pga_eval<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    zetas: &[f64],
    attack: &AttackConfig,
    data: &Dataset<T>,
    attack_rows: usize,
    rng: &mut RngStream,
) -> Result<AttackCurve> {
    attack_eval(
        arch,
        params,
        zetas,
        attack,
        AttackObjective::KlDivergence,
        data,
        attack_rows,
        rng,
    )
}

/// Cross-entropy along one ray: `loss(theta + alpha*v)` for each alpha.
/// `alpha = 0` reuses `theta` itself, so that column is exact.
pub fn landscape_row<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    direction: &ParameterSet<T>,
    alphas: &[f64],
    data: &Dataset<T>,
) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let moved;
        let point = if alpha == 0.0 {
            params
        } else {
            moved = apply_direction(params, direction, alpha)?;
            &moved
        };
        row.push(mean_cross_entropy(arch, point, data)?);
    }
    Ok(row)
}

/// Cross-entropy along `n_trials` random proportional rays over an odd,
/// evenly spaced alpha grid spanning `[-2, 2]`.
pub fn landscape_sweep<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    data: &Dataset<T>,
    zeta: f64,
    n_trials: usize,
    n_alphas: usize,
    rng: &mut RngStream,
) -> Result<LandscapeGrid> {
    if n_alphas < 3 || n_alphas % 2 == 0 {
        return Err(Error::invalid(format!(
            "alpha grid must be odd and >= 3 so alpha = 0 is on it, got {n_alphas}"
        )));
    }
    if n_trials == 0 {
        return Err(Error::invalid("need at least one landscape trial"));
    }
    let alphas: Vec<f64> = (0..n_alphas)
        .map(|i| -2.0 + 4.0 * i as f64 / (n_alphas - 1) as f64)
        .collect();
    let mut rows = Vec::with_capacity(n_trials);
    let mut trial_streams = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let mut dir_rng = rng.substream(trial as u64);
        let direction = proportional_direction(params, zeta, &mut dir_rng)?;
        rows.push(landscape_row(arch, params, &direction, &alphas, data)?);
        trial_streams.push(trial as u64);
    }
    Ok(LandscapeGrid {
        zeta,
        alphas,
        rows,
        trial_streams,
    })
}

/// Histogram of membrane potentials normalised by their momentary threshold,
/// pooled over every time step, neuron, and batch row.
pub fn membrane_histogram<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    data: &Dataset<T>,
    n_bins: usize,
) -> Result<MembraneHistogram> {
    let Architecture::Srnn(cfg) = arch else {
        return Err(Error::invalid(
            "membrane statistics are defined for the spiking architecture only",
        ));
    };
    if n_bins < 10 {
        return Err(Error::invalid(format!("need at least 10 bins, got {n_bins}")));
    }
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }

    // Pool v/b ratios chunk by chunk from the tagged step intermediates.
    let mut ratios: Vec<f64> = Vec::new();
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(256) {
        let batch = data.batch(chunk);
        let (eval, graph) = forward_eval(arch, params, &batch.input)?;
        let t_steps = batch.input.time_steps(cfg.n_steps);
        for t in 0..t_steps {
            let v = eval.value(graph.handles.tags[&format!("step{t}.v")]);
            let b = eval.value(graph.handles.tags[&format!("step{t}.bth")]);
            for (&vi, &bi) in v.data().iter().zip(b.data()) {
                ratios.push(vi.to_f64() / bi.to_f64());
            }
        }
    }

    let total = ratios.len() as u64;
    let near = ratios.iter().filter(|&&r| (r - 1.0).abs() < 0.1).count() as f64;
    let (mut lo, mut hi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| {
            (l.min(r), h.max(r))
        });
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; n_bins];
    for &r in &ratios {
        let mut bin = ((r - lo) / width) as usize;
        if bin >= n_bins {
            bin = n_bins - 1; // the maximum lands in the last bin
        }
        counts[bin] += 1;
    }
    Ok(MembraneHistogram {
        edges,
        counts,
        near_threshold_fraction: near / total as f64,
        total,
    })
}
