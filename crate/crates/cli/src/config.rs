//! Experiment configuration: task and architecture selection, training and
//! attack settings, evaluation grids, and artifact directories.
//!
//! Configs are flat JSON objects with one sub-object per section. Any field
//! may be omitted (defaults apply) and any field may be overridden from the
//! command line with dotted flags such as `--train.method beta` or
//! `--eval.n_samples=50`. The experiment `seed` governs everything: dataset
//! synthesis, parameter initialisation, and every stochastic evaluation
//! stream derive from it, so a config plus a seed fully determines a run.

use anyhow::{anyhow, bail, Context, Result};
use mmrt_core::{
    AttackConfig, CnnConfig, MlpConfig, SrnnConfig, TrainConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Classification task driving data synthesis (or IDX ingestion).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// 10-class 14x14 grayscale images from local IDX files; a deterministic
    /// synthetic stand-in is generated into the data directory when the
    /// files are absent.
    Fmnist,
    /// Synthetic 4-class single-lead pulse trains (normal, premature beat,
    /// missing beat, noisy baseline).
    SynthEcg,
    /// Synthetic 6-class population-coded input-current patterns over 64
    /// channels.
    SynthSpike,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Fmnist => "fmnist",
            TaskKind::SynthEcg => "synth_ecg",
            TaskKind::SynthSpike => "synth_spike",
        }
    }
}

/// Model family selection; concrete sizes come from the task preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Mlp,
    Cnn,
    Srnn,
}

impl ArchKind {
    pub fn name(&self) -> &'static str {
        match self {
            ArchKind::Mlp => "mlp",
            ArchKind::Cnn => "cnn",
            ArchKind::Srnn => "srnn",
        }
    }
}

/// Grids and sample counts for the evaluation subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Mismatch levels for the Monte-Carlo sweep.
    pub zetas: Vec<f64>,
    /// Attack radii for the adversarial sweeps.
    pub attack_zetas: Vec<f64>,
    /// Mismatch draws per level.
    pub n_samples: usize,
    /// Random directions per landscape sweep.
    pub n_trials: usize,
    /// Points on the landscape displacement grid (odd, so 0 is included).
    pub n_alphas: usize,
    /// Direction scale for the landscape sweep.
    pub landscape_zeta: f64,
    /// Bins for the membrane-potential histogram.
    pub n_bins: usize,
    /// Examples the attack objective sees (0 = whole test set); accuracy is
    /// always measured on the whole test set.
    pub attack_rows: usize,
    /// Interval radii for the verification sweep.
    pub verify_zetas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            zetas: mmrt_core::analysis::MISMATCH_ZETAS.to_vec(),
            attack_zetas: vec![0.0, 0.05, 0.1, 0.2],
            n_samples: 20,
            n_trials: 5,
            n_alphas: 41,
            landscape_zeta: 0.2,
            n_bins: 40,
            attack_rows: 512,
            verify_zetas: vec![0.0, 1e-4, 1e-3, 1e-2],
        }
    }
}

/// Everything one run needs. See the module docs for the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub architecture: ArchKind,
    /// Master seed: datasets, initialisation, and evaluation streams all
    /// derive from it. Overrides any `train.seed` given in the file.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskKind::Fmnist,
            architecture: ArchKind::Mlp,
            seed: 7,
            out_dir: PathBuf::from("runs"),
            data_dir: PathBuf::from("data"),
            train: TrainConfig::default(),
            attack: AttackConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Desk-scale dataset sizes per task.
pub mod desk {
    /// Image side after 2x max-pooling the original 28x28.
    pub const IMAGE_SIDE: usize = 14;
    pub const IMAGE_CLASSES: usize = 10;
    pub const IMAGE_TRAIN: usize = 10_000;
    pub const IMAGE_TEST: usize = 2_000;

    pub const ECG_LEN: usize = 80;
    pub const ECG_CLASSES: usize = 4;
    pub const ECG_TRAIN: usize = 1_024;
    pub const ECG_TEST: usize = 256;

    pub const SPIKE_CHANNELS: usize = 64;
    pub const SPIKE_STEPS: usize = 20;
    pub const SPIKE_CLASSES: usize = 6;
    pub const SPIKE_TRAIN: usize = 1_536;
    pub const SPIKE_TEST: usize = 384;

    /// Fraction of the training set held out for validation.
    pub const VAL_FRACTION: f64 = 0.1;
}

impl ExperimentConfig {
    /// Resolve the concrete model for this task/architecture pair.
    ///
    /// Sizes are desk-scale presets: small enough to train in seconds to
    /// minutes on one core while preserving the qualitative robustness
    /// contrasts between training methods.
    pub fn architecture(&self) -> Result<mmrt_core::Architecture> {
        use mmrt_core::Architecture as A;
        let pixels = desk::IMAGE_SIDE * desk::IMAGE_SIDE;
        match (self.task, self.architecture) {
            (TaskKind::Fmnist, ArchKind::Mlp) => {
                Ok(A::Mlp(MlpConfig::new(&[pixels, 256, 64, desk::IMAGE_CLASSES])))
            }
            (TaskKind::Fmnist, ArchKind::Cnn) => Ok(A::Cnn(CnnConfig {
                input_hw: (desk::IMAGE_SIDE, desk::IMAGE_SIDE),
                in_channels: 1,
                conv_channels: vec![16, 16],
                kernel: (3, 3),
                dense: vec![64],
                classes: desk::IMAGE_CLASSES,
            })),
            (TaskKind::Fmnist, ArchKind::Srnn) => Ok(A::Srnn(SrnnConfig {
                input_dim: pixels,
                hidden: 128,
                classes: desk::IMAGE_CLASSES,
                n_steps: 20,
                input_gain: 8.0,
                ..SrnnConfig::default()
            })),
            // Slow adaptation (small per-spike threshold bump) lets a
            // neuron keep firing through every beat instead of silencing
            // itself after the first one, so firing rates track beat
            // counts; the gain puts single beats well above the resting
            // threshold without making spike patterns brittle.
            (TaskKind::SynthEcg, ArchKind::Srnn) => Ok(A::Srnn(SrnnConfig {
                input_dim: 1,
                hidden: 64,
                classes: desk::ECG_CLASSES,
                n_steps: desk::ECG_LEN,
                input_gain: 100.0,
                tau_ada: 10.0,
                ..SrnnConfig::default()
            })),
            (TaskKind::SynthSpike, ArchKind::Srnn) => Ok(A::Srnn(SrnnConfig {
                input_dim: desk::SPIKE_CHANNELS,
                hidden: 128,
                classes: desk::SPIKE_CLASSES,
                n_steps: desk::SPIKE_STEPS,
                input_gain: 1.0,
                ..SrnnConfig::default()
            })),
            (task, arch) => bail!(
                "unsupported task/architecture pair {}/{}; supported: \
                 fmnist with mlp|cnn|srnn, synth_ecg with srnn, synth_spike with srnn",
                task.name(),
                arch.name()
            ),
        }
    }

    /// Training settings with per-architecture defaults applied: the master
    /// seed is copied in, and spiking runs get the default gradient clip
    /// when none was configured.
    pub fn resolved_train(&self) -> Result<TrainConfig> {
        let arch = self.architecture()?;
        let mut tc = self.train.clone();
        tc.seed = self.seed;
        if tc.grad_clip.is_none() {
            tc.grad_clip = TrainConfig::default_for(&arch).grad_clip;
        }
        tc.validate().map_err(|e| anyhow!(e))?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture()?;
        self.resolved_train()?;
        self.attack.validate().map_err(|e| anyhow!(e))?;
        let ev = &self.eval;
        if ev.n_samples == 0 {
            bail!("eval.n_samples must be at least 1");
        }
        if ev.n_alphas < 3 || ev.n_alphas % 2 == 0 {
            bail!("eval.n_alphas must be odd and at least 3, got {}", ev.n_alphas);
        }
        if ev.n_bins < 10 {
            bail!("eval.n_bins must be at least 10, got {}", ev.n_bins);
        }
        for &z in ev.zetas.iter().chain(&ev.attack_zetas).chain(&ev.verify_zetas) {
            if !(z >= 0.0) {
                bail!("noise/attack levels must be non-negative, got {z}");
            }
        }
        Ok(())
    }

    /// Canonical compact JSON with sorted object keys.
    pub fn canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self).context("serialising config")?;
        Ok(value.to_string())
    }

    /// Hex digest of the canonical form; identifies a config across runs.
    pub fn hash(&self) -> Result<String> {
        let canon = self.canonical_json()?;
        let digest = Sha256::digest(canon.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// One `--section.field value` override captured from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DottedOverride {
    pub path: String,
    pub raw: String,
}

/// Split an argument list into dotted config overrides and the remaining
/// arguments. Both `--a.b=v` and `--a.b v` spellings are accepted.
pub fn extract_overrides(args: &[String]) -> Result<(Vec<DottedOverride>, Vec<String>)> {
    let mut overrides = Vec::new();
    let mut rest = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let dotted = arg
            .strip_prefix("--")
            .map(|body| body.split('=').next().unwrap_or(body).contains('.'))
            .unwrap_or(false);
        if dotted {
            let body = &arg[2..];
            if let Some((path, raw)) = body.split_once('=') {
                overrides.push(DottedOverride {
                    path: path.to_string(),
                    raw: raw.to_string(),
                });
            } else {
                let raw = args
                    .get(i + 1)
                    .ok_or_else(|| anyhow!("override --{body} is missing a value"))?;
                overrides.push(DottedOverride {
                    path: body.to_string(),
                    raw: raw.clone(),
                });
                i += 1;
            }
        } else {
            rest.push(arg.clone());
        }
        i += 1;
    }
    Ok((overrides, rest))
}

/// Apply one dotted override onto a JSON config value. The raw text is
/// parsed as JSON when possible (numbers, booleans, arrays) and treated as a
/// bare string otherwise.
pub fn apply_override(config: &mut serde_json::Value, ov: &DottedOverride) -> Result<()> {
    let parsed = serde_json::from_str::<serde_json::Value>(&ov.raw)
        .unwrap_or_else(|_| serde_json::Value::String(ov.raw.clone()));
    let mut cursor = config;
    let parts: Vec<&str> = ov.path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!("override path `{}` has an empty segment", ov.path);
        }
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| anyhow!("override path `{}` crosses a non-object", ov.path))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), parsed);
            return Ok(());
        }
        cursor = obj
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment");
}

/// Load a config: defaults, then the optional file, then dotted overrides.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[DottedOverride],
) -> Result<ExperimentConfig> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str::<serde_json::Value>(&text)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => serde_json::to_value(ExperimentConfig::default())?,
    };
    if !value.is_object() {
        bail!("config root must be a JSON object");
    }
    for ov in overrides {
        apply_override(&mut value, ov)?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).context("interpreting config fields")?;
    Ok(cfg)
}
