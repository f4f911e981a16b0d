//! The seven subcommands and their artifact pipelines.
//!
//! Every subcommand resolves an [`ExperimentConfig`] the same way — built-in
//! defaults, then the optional `--config` file, then dotted overrides such
//! as `--train.method beta`, then the plain `--seed/--out/--data` flags —
//! and writes its artifacts into the output directory under fixed names:
//! a JSON report, CSV tables, and an SVG plot where a curve makes sense.
//! All writes are atomic (temp file, then rename) and deterministic: running
//! a command twice with the same config and seed produces byte-identical
//! files, which the determinism tests check by hashing.
//!
//! Exit status is zero on success; failures (including a gradient audit
//! exceeding its tolerance) surface as errors and a nonzero exit.

use crate::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::config::{
    extract_overrides, load_config, DottedOverride, ExperimentConfig,
};
use crate::output::{csv_num, write_csv, write_json};
use crate::svg::{line_plot, Series};
use crate::synth;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mmrt_core::analysis::{
    kl_pga_eval, landscape_sweep, membrane_histogram, mismatch_eval, task_pga_eval,
};
use mmrt_core::report::{ReportMeta, RunReport, VerifiedCurve, VerifiedPoint};
use mmrt_core::training::{accuracy, train};
use mmrt_core::verify::verified_accuracy;
use mmrt_core::{Architecture, Dataset, ParameterSet, RngStream};
use std::path::{Path, PathBuf};

/// Rng stream ids for evaluation commands (training uses 0..=4, data
/// synthesis 20..=31).
const STREAM_MISMATCH: u64 = 40;
const STREAM_ATTACK: u64 = 41;
const STREAM_LANDSCAPE: u64 = 43;

#[derive(Parser)]
#[command(
    name = "mmrt",
    about = "Train small networks that tolerate multiplicative weight noise, \
             attack them in weight space, and measure what survives.",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config file (JSON). Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Data directory; overrides the config file.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct CommonOnly {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct WithCheckpoint {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct WithCheckpoints {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint(s) to evaluate; repeat the flag to pool several.
    #[arg(long = "checkpoint", value_name = "PATH", required = true)]
    checkpoint: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus training history.
    Train(CommonOnly),
    /// Sweep adversarial weight attacks against a checkpoint.
    AttackEval(WithCheckpoint),
    /// Monte-Carlo accuracy sweep under multiplicative weight noise.
    MismatchEval(WithCheckpoints),
    /// Loss sections along random proportional weight-space rays.
    Landscape(WithCheckpoint),
    /// Interval-bound verified accuracy over noise radii.
    Verify(WithCheckpoint),
    /// Histogram of membrane potentials relative to threshold (spiking).
    MembraneHist(WithCheckpoint),
    /// Finite-difference audit of every gradient in the system.
    Gradcheck(CommonOnly),
}

/// Entry point: parse `args` (program name excluded) and run the command.
pub fn run(args: &[String]) -> Result<()> {
    let (overrides, rest) = extract_overrides(args)?;
    let argv = std::iter::once("mmrt".to_string()).chain(rest);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(anyhow!("{e}")),
    };
    match &cli.command {
        Command::Train(a) => cmd_train(&resolve(&a.common, &overrides)?),
        Command::AttackEval(a) => {
            cmd_attack_eval(&resolve(&a.common, &overrides)?, &a.checkpoint)
        }
        Command::MismatchEval(a) => {
            cmd_mismatch_eval(&resolve(&a.common, &overrides)?, &a.checkpoint)
        }
        Command::Landscape(a) => cmd_landscape(&resolve(&a.common, &overrides)?, &a.checkpoint),
        Command::Verify(a) => cmd_verify(&resolve(&a.common, &overrides)?, &a.checkpoint),
        Command::MembraneHist(a) => {
            cmd_membrane_hist(&resolve(&a.common, &overrides)?, &a.checkpoint)
        }
        Command::Gradcheck(a) => cmd_gradcheck(&resolve(&a.common, &overrides)?),
    }
}

fn resolve(common: &CommonArgs, overrides: &[DottedOverride]) -> Result<ExperimentConfig> {
    let mut cfg = load_config(common.config.as_deref(), overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(data) = &common.data {
        cfg.data_dir = data.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Load a checkpoint and insist it matches the configured model, so the
/// task data and every report label line up with the stored weights.
fn load_checkpoint_checked(cfg: &ExperimentConfig, path: &Path) -> Result<Checkpoint<f64>> {
    let ckpt = checkpoint::load_checkpoint::<f64>(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    let expected = cfg.architecture()?;
    if ckpt.architecture != expected {
        bail!(
            "checkpoint {} was trained as {:?} but the config selects {}/{}; \
             point --config/--task at the matching preset",
            path.display(),
            ckpt.architecture.family_name(),
            cfg.task.name(),
            cfg.architecture.name()
        );
    }
    Ok(ckpt)
}

fn eval_meta(cfg: &ExperimentConfig, ckpt: &Checkpoint<f64>) -> ReportMeta {
    ReportMeta {
        architecture: ckpt.architecture.family_name().to_string(),
        method: ckpt.meta.method.clone(),
        task: Some(cfg.task.name().to_string()),
        seed: cfg.seed,
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let arch = cfg.architecture()?;
    let tc = cfg.resolved_train()?;
    let splits = synth::load_splits(cfg)?;
    let (params, mut report) = train(&arch, &splits, &tc).map_err(|e| anyhow!(e))?;
    report.meta.task = Some(cfg.task.name().to_string());
    let test_accuracy = accuracy(&arch, &params, &splits.test).map_err(|e| anyhow!(e))?;
    let history = report.training.clone().unwrap_or_default();

    let ckpt = Checkpoint {
        architecture: arch.clone(),
        meta: CheckpointMeta {
            config_hash: cfg.hash()?,
            method: tc.method.name().to_string(),
            seed: cfg.seed,
            epoch: history.best_epoch,
            val_accuracy: history.best_val_accuracy,
        },
        params,
    };
    let ckpt_path = cfg.out_dir.join("model.ckpt");
    checkpoint::save_checkpoint(&ckpt_path, &ckpt)?;

    write_json(&cfg.out_dir.join("config.json"), cfg)?;
    write_json(&cfg.out_dir.join("train_report.json"), &report)?;
    let rows: Vec<Vec<String>> = history
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                csv_num(e.train_loss),
                csv_num(e.robustness_loss),
                csv_num(e.val_accuracy),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("train_history.csv"),
        &["epoch", "train_loss", "robustness_loss", "val_accuracy"],
        &rows,
    )?;
    let val_points: Vec<(f64, f64)> = history
        .epochs
        .iter()
        .map(|e| (e.epoch as f64, e.val_accuracy))
        .collect();
    let loss_points: Vec<(f64, f64)> = history
        .epochs
        .iter()
        .map(|e| (e.epoch as f64, e.train_loss))
        .collect();
    let svg = line_plot(
        "training history",
        "epoch",
        "value",
        &[
            Series {
                label: "val accuracy",
                points: &val_points,
            },
            Series {
                label: "train loss",
                points: &loss_points,
            },
        ],
    );
    crate::output::atomic_write(&cfg.out_dir.join("train_history.svg"), svg.as_bytes())?;

    println!(
        "train: task={} arch={} method={} best_epoch={} val={:.4} test={:.4} checkpoint={}",
        cfg.task.name(),
        arch.family_name(),
        tc.method.name(),
        history.best_epoch,
        history.best_val_accuracy,
        test_accuracy,
        ckpt_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// attack-eval
// ---------------------------------------------------------------------------

fn cmd_attack_eval(cfg: &ExperimentConfig, ckpt_path: &Path) -> Result<()> {
    let ckpt = load_checkpoint_checked(cfg, ckpt_path)?;
    let splits = synth::load_splits(cfg)?;
    let mut rng = RngStream::new(cfg.seed, STREAM_ATTACK);
    let task_curve = task_pga_eval(
        &ckpt.architecture,
        &ckpt.params,
        &cfg.eval.attack_zetas,
        &cfg.attack,
        &splits.test,
        cfg.eval.attack_rows,
        &mut rng,
    )
    .map_err(|e| anyhow!(e))?;
    let kl_curve = kl_pga_eval(
        &ckpt.architecture,
        &ckpt.params,
        &cfg.eval.attack_zetas,
        &cfg.attack,
        &splits.test,
        cfg.eval.attack_rows,
        &mut rng,
    )
    .map_err(|e| anyhow!(e))?;

    let report = RunReport {
        meta: eval_meta(cfg, &ckpt),
        attacks: vec![task_curve.clone(), kl_curve.clone()],
        ..RunReport::default()
    };
    write_json(&cfg.out_dir.join("attack_report.json"), &report)?;
    for (curve, name) in [(&task_curve, "attack_task.csv"), (&kl_curve, "attack_kl.csv")] {
        let rows: Vec<Vec<String>> = curve
            .points
            .iter()
            .map(|p| {
                vec![
                    csv_num(p.zeta),
                    csv_num(p.attacked_accuracy),
                    csv_num(p.random_accuracy.unwrap_or(f64::NAN)),
                ]
            })
            .collect();
        write_csv(
            &cfg.out_dir.join(name),
            &["zeta", "attacked_accuracy", "random_accuracy"],
            &rows,
        )?;
    }
    let pts_task: Vec<(f64, f64)> = task_curve
        .points
        .iter()
        .map(|p| (p.zeta, p.attacked_accuracy))
        .collect();
    let pts_rand: Vec<(f64, f64)> = task_curve
        .points
        .iter()
        .map(|p| (p.zeta, p.random_accuracy.unwrap_or(f64::NAN)))
        .collect();
    let pts_kl: Vec<(f64, f64)> = kl_curve
        .points
        .iter()
        .map(|p| (p.zeta, p.attacked_accuracy))
        .collect();
    let svg = line_plot(
        "accuracy under weight attack",
        "attack radius",
        "test accuracy",
        &[
            Series {
                label: "task attack",
                points: &pts_task,
            },
            Series {
                label: "random perturbation",
                points: &pts_rand,
            },
            Series {
                label: "output-divergence attack",
                points: &pts_kl,
            },
        ],
    );
    crate::output::atomic_write(&cfg.out_dir.join("attack.svg"), svg.as_bytes())?;

    let last = task_curve
        .points
        .last()
        .ok_or_else(|| anyhow!("attack sweep produced no points"))?;
    println!(
        "attack-eval: arch={} method={} zeta_max={} attacked={:.4} random={:.4} out={}",
        ckpt.architecture.family_name(),
        ckpt.meta.method,
        csv_num(last.zeta),
        last.attacked_accuracy,
        last.random_accuracy.unwrap_or(f64::NAN),
        cfg.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// mismatch-eval
// ---------------------------------------------------------------------------

fn cmd_mismatch_eval(cfg: &ExperimentConfig, ckpt_paths: &[PathBuf]) -> Result<()> {
    let mut ckpts = Vec::with_capacity(ckpt_paths.len());
    for p in ckpt_paths {
        ckpts.push(load_checkpoint_checked(cfg, p)?);
    }
    let first = ckpts.first().ok_or_else(|| anyhow!("no checkpoints given"))?;
    let arch = first.architecture.clone();
    let splits = synth::load_splits(cfg)?;
    let param_sets: Vec<ParameterSet<f64>> = ckpts.iter().map(|c| c.params.clone()).collect();
    let mut rng = RngStream::new(cfg.seed, STREAM_MISMATCH);
    let table = mismatch_eval(
        &arch,
        &param_sets,
        &cfg.eval.zetas,
        cfg.eval.n_samples,
        &splits.test,
        &mut rng,
    )
    .map_err(|e| anyhow!(e))?;

    let report = RunReport {
        meta: eval_meta(cfg, first),
        mismatch: Some(table.clone()),
        ..RunReport::default()
    };
    write_json(&cfg.out_dir.join("mismatch_report.json"), &report)?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![csv_num(r.zeta), csv_num(r.mean), csv_num(r.std), csv_num(r.min)])
        .collect();
    write_csv(
        &cfg.out_dir.join("mismatch.csv"),
        &["zeta", "mean", "std", "min"],
        &rows,
    )?;
    let mean_pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.zeta, r.mean)).collect();
    let min_pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.zeta, r.min)).collect();
    let svg = line_plot(
        "accuracy under multiplicative weight noise",
        "noise level",
        "test accuracy",
        &[
            Series {
                label: "mean",
                points: &mean_pts,
            },
            Series {
                label: "min",
                points: &min_pts,
            },
        ],
    );
    crate::output::atomic_write(&cfg.out_dir.join("mismatch.svg"), svg.as_bytes())?;

    let last = table
        .rows
        .last()
        .ok_or_else(|| anyhow!("mismatch sweep produced no rows"))?;
    println!(
        "mismatch-eval: arch={} checkpoints={} samples={} zeta_max={} mean={:.4} min={:.4} out={}",
        arch.family_name(),
        table.n_checkpoints,
        table.n_samples,
        csv_num(last.zeta),
        last.mean,
        last.min,
        cfg.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// landscape
// ---------------------------------------------------------------------------

fn cmd_landscape(cfg: &ExperimentConfig, ckpt_path: &Path) -> Result<()> {
    let ckpt = load_checkpoint_checked(cfg, ckpt_path)?;
    let splits = synth::load_splits(cfg)?;
    let mut rng = RngStream::new(cfg.seed, STREAM_LANDSCAPE);
    let grid = landscape_sweep(
        &ckpt.architecture,
        &ckpt.params,
        &splits.test,
        cfg.eval.landscape_zeta,
        cfg.eval.n_trials,
        cfg.eval.n_alphas,
        &mut rng,
    )
    .map_err(|e| anyhow!(e))?;

    let report = RunReport {
        meta: eval_meta(cfg, &ckpt),
        landscape: Some(grid.clone()),
        ..RunReport::default()
    };
    write_json(&cfg.out_dir.join("landscape_report.json"), &report)?;
    let mut rows = Vec::with_capacity(grid.alphas.len());
    let mut mean_pts = Vec::with_capacity(grid.alphas.len());
    for (i, &alpha) in grid.alphas.iter().enumerate() {
        let column: Vec<f64> = grid.rows.iter().map(|r| r[i]).collect();
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        rows.push(vec![csv_num(alpha), csv_num(mean), csv_num(min), csv_num(max)]);
        mean_pts.push((alpha, mean));
    }
    write_csv(
        &cfg.out_dir.join("landscape.csv"),
        &["alpha", "mean_loss", "min_loss", "max_loss"],
        &rows,
    )?;
    let svg = line_plot(
        "loss along random weight rays",
        "displacement",
        "cross-entropy",
        &[Series {
            label: "mean over directions",
            points: &mean_pts,
        }],
    );
    crate::output::atomic_write(&cfg.out_dir.join("landscape.svg"), svg.as_bytes())?;

    let center = mean_at_alpha(&grid.alphas, &mean_pts, 0.0);
    let rise = unit_rise(&grid.alphas, &mean_pts);
    println!(
        "landscape: arch={} method={} zeta={} trials={} center={:.4} rise_at_1={:.4} out={}",
        ckpt.architecture.family_name(),
        ckpt.meta.method,
        csv_num(grid.zeta),
        grid.rows.len(),
        center,
        rise,
        cfg.out_dir.display()
    );
    Ok(())
}

fn mean_at_alpha(alphas: &[f64], mean_pts: &[(f64, f64)], target: f64) -> f64 {
    alphas
        .iter()
        .position(|&a| (a - target).abs() < 1e-9)
        .map_or(f64::NAN, |i| mean_pts[i].1)
}

/// Mean loss increase at unit displacement (both signs) over the center.
fn unit_rise(alphas: &[f64], mean_pts: &[(f64, f64)]) -> f64 {
    let center = mean_at_alpha(alphas, mean_pts, 0.0);
    let up = mean_at_alpha(alphas, mean_pts, 1.0);
    let down = mean_at_alpha(alphas, mean_pts, -1.0);
    0.5 * (up + down) - center
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(cfg: &ExperimentConfig, ckpt_path: &Path) -> Result<()> {
    let ckpt = load_checkpoint_checked(cfg, ckpt_path)?;
    let splits = synth::load_splits(cfg)?;
    let clean = accuracy(&ckpt.architecture, &ckpt.params, &splits.test).map_err(|e| anyhow!(e))?;
    let mut points = Vec::with_capacity(cfg.eval.verify_zetas.len());
    for &zeta in &cfg.eval.verify_zetas {
        let verified = verified_accuracy(&ckpt.architecture, &ckpt.params, zeta, &splits.test)
            .map_err(|e| anyhow!(e))?;
        points.push(VerifiedPoint {
            zeta,
            verified_accuracy: verified,
            clean_accuracy: clean,
        });
    }
    let curve = VerifiedCurve { points };

    let report = RunReport {
        meta: eval_meta(cfg, &ckpt),
        verification: Some(curve.clone()),
        ..RunReport::default()
    };
    write_json(&cfg.out_dir.join("verify_report.json"), &report)?;
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                csv_num(p.zeta),
                csv_num(p.verified_accuracy),
                csv_num(p.clean_accuracy),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("verify.csv"),
        &["zeta", "verified_accuracy", "clean_accuracy"],
        &rows,
    )?;
    let ver_pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.zeta, p.verified_accuracy))
        .collect();
    let clean_pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.zeta, clean)).collect();
    let svg = line_plot(
        "verified accuracy under interval weight noise",
        "noise radius",
        "accuracy",
        &[
            Series {
                label: "verified",
                points: &ver_pts,
            },
            Series {
                label: "clean",
                points: &clean_pts,
            },
        ],
    );
    crate::output::atomic_write(&cfg.out_dir.join("verify.svg"), svg.as_bytes())?;

    let last = curve
        .points
        .last()
        .ok_or_else(|| anyhow!("verification sweep produced no points"))?;
    println!(
        "verify: arch={} method={} clean={:.4} zeta_max={} verified={:.4} out={}",
        ckpt.architecture.family_name(),
        ckpt.meta.method,
        clean,
        csv_num(last.zeta),
        last.verified_accuracy,
        cfg.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// membrane-hist
// ---------------------------------------------------------------------------

fn cmd_membrane_hist(cfg: &ExperimentConfig, ckpt_path: &Path) -> Result<()> {
    let ckpt = load_checkpoint_checked(cfg, ckpt_path)?;
    if !matches!(ckpt.architecture, Architecture::Srnn(_)) {
        bail!("membrane statistics need a spiking checkpoint, got {}", ckpt.architecture.family_name());
    }
    let splits = synth::load_splits(cfg)?;
    let hist = membrane_histogram(&ckpt.architecture, &ckpt.params, &splits.test, cfg.eval.n_bins)
        .map_err(|e| anyhow!(e))?;

    let report = RunReport {
        meta: eval_meta(cfg, &ckpt),
        membrane: Some(hist.clone()),
        ..RunReport::default()
    };
    write_json(&cfg.out_dir.join("membrane_report.json"), &report)?;
    let rows: Vec<Vec<String>> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            vec![
                csv_num(hist.edges[i]),
                csv_num(hist.edges[i + 1]),
                c.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("membrane.csv"),
        &["bin_lo", "bin_hi", "count"],
        &rows,
    )?;
    let pts: Vec<(f64, f64)> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (0.5 * (hist.edges[i] + hist.edges[i + 1]), c as f64))
        .collect();
    let svg = line_plot(
        "membrane potential relative to threshold",
        "v / threshold",
        "count",
        &[Series {
            label: "pooled over time, neurons, examples",
            points: &pts,
        }],
    );
    crate::output::atomic_write(&cfg.out_dir.join("membrane.svg"), svg.as_bytes())?;

    println!(
        "membrane-hist: arch={} method={} near_threshold={:.4} total={} out={}",
        ckpt.architecture.family_name(),
        ckpt.meta.method,
        hist.near_threshold_fraction,
        hist.total,
        cfg.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<()> {
    let report = mmrt_core::gradcheck::run_all().map_err(|e| anyhow!(e))?;
    write_json(&cfg.out_dir.join("gradcheck.json"), &report)?;
    let status = if report.all_passed && report.worst_rel_err <= 1e-4 {
        "pass"
    } else {
        "FAIL"
    };
    println!(
        "gradcheck: checks={} worst_rel_err={:.3e} ({}) status={}",
        report.checks.len(),
        report.worst_rel_err,
        report.worst_check,
        status
    );
    if status == "FAIL" {
        bail!(
            "gradient audit failed: worst relative error {:.3e} in {}",
            report.worst_rel_err,
            report.worst_check
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------

/// Convenience for tests and the acceptance harness: run `train` directly
/// from a config without shelling out, returning the checkpoint path.
pub fn train_to_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    cmd_train(cfg)?;
    Ok(cfg.out_dir.join("model.ckpt"))
}

/// Load the test split for a config; used by the acceptance harness.
pub fn test_split(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    Ok(synth::load_splits(cfg)?.test)
}
