//! Task data: deterministic synthetic generators and IDX-backed images.
//!
//! Three tasks are supported.
//!
//! * `fmnist` — 10-class 14x14 grayscale images read from IDX files in the
//!   data directory. When the files are absent, a synthetic stand-in
//!   (Gaussian-bump class templates plus pixel noise) is generated *into
//!   those files* first, so the IDX code path is always exercised. 28x28
//!   files are accepted and 2x2 max-pooled down to 14x14.
//! * `synth_ecg` — single-lead pulse trains with four rhythm classes:
//!   normal, premature beat, missing beat, and wandering noisy baseline.
//!   Classes differ in beat count or baseline energy, which a spiking
//!   network can read off its firing rates.
//! * `synth_spike` — population-coded input currents: each class drives a
//!   disjoint block of ten channels with Bernoulli pulses while the rest
//!   idle at low noise.
//!
//! All generators are pure functions of their seed; the first-sequence hash
//! test below freezes the ECG generator's exact output.

use crate::config::{desk, ArchKind, ExperimentConfig, TaskKind};
use crate::idx::{parse_idx, write_idx, IdxArray};
use anyhow::{anyhow, bail, Context, Result};
use mmrt_core::{Dataset, ModelInput, RngStream, Splits, Tensor};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Fixed seed for the image stand-in files: the dataset on disk is the same
/// for every run regardless of the experiment seed, like a real corpus.
const IMAGE_FILE_SEED: u64 = 0xF00D;

/// Rng stream ids for in-memory generators (training uses 0..=4).
const STREAM_ECG_TRAIN: u64 = 20;
const STREAM_ECG_TEST: u64 = 21;
const STREAM_SPIKE_TRAIN: u64 = 30;
const STREAM_SPIKE_TEST: u64 = 31;

// ---------------------------------------------------------------------------
// Pulse-train sequences
// ---------------------------------------------------------------------------

/// Beat period and shape of the ECG-like pulse trains: wide half-sine
/// beats keep the drive dense enough for a spiking network to integrate.
const ECG_PERIOD: usize = 20;
const ECG_PULSE_WIDTH: usize = 10;
const ECG_MIN_LEN: usize = 50;

fn ecg_pulse(j: usize) -> f64 {
    (std::f64::consts::PI * (j as f64 + 0.5) / ECG_PULSE_WIDTH as f64).sin()
}

/// Class labels: 0 normal, 1 premature beat, 2 missing beat, 3 noisy
/// baseline.
pub const ECG_CLASS_NAMES: [&str; 4] = ["normal", "premature", "missing", "noisy_baseline"];

/// Generate `n` pulse-train sequences of the given length with balanced
/// labels (`i % 4`). Sequences shorter than 50 samples cannot hold enough
/// beats to distinguish the classes and are rejected.
pub fn synth_ecg(n: usize, len: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if len < ECG_MIN_LEN {
        bail!("sequence length {len} is below the minimum of {ECG_MIN_LEN}");
    }
    let mut rng = RngStream::new(seed, 0);
    let n_beats = (len - ECG_PULSE_WIDTH) / ECG_PERIOD; // beats the layout always fits
    let max_offset = len - ECG_PULSE_WIDTH - (n_beats - 1) * ECG_PERIOD;
    let mut sequences = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 4;
        let offset = rng.index(max_offset.max(1));
        let mut starts: Vec<(usize, bool)> =
            (0..n_beats).map(|k| (offset + k * ECG_PERIOD, false)).collect();
        match class {
            1 => {
                // Premature: an extra, stronger beat halfway through one
                // inter-beat gap (ectopic beats carry a larger envelope).
                let gap = rng.index(n_beats - 1);
                starts.push((offset + gap * ECG_PERIOD + ECG_PERIOD / 2, true));
            }
            2 => {
                // Missing: drop an interior beat when there is one, else the
                // last, so the visible span changes as little as possible.
                let victim = if n_beats > 2 {
                    1 + rng.index(n_beats - 2)
                } else {
                    n_beats - 1
                };
                starts.remove(victim);
            }
            _ => {}
        }
        let (noise_std, drift_amp) = if class == 3 { (0.15, 0.7) } else { (0.01, 0.0) };
        let drift_freq = rng.uniform_in(1.0, 2.0);
        let drift_phase = rng.uniform_in(0.0, std::f64::consts::TAU);
        let mut seq = vec![0.0f64; len];
        for &(s, ectopic) in &starts {
            let amp = if ectopic {
                rng.uniform_in(1.25, 1.35)
            } else {
                rng.uniform_in(0.95, 1.05)
            };
            for j in 0..ECG_PULSE_WIDTH {
                if s + j < len {
                    seq[s + j] += amp * ecg_pulse(j);
                }
            }
        }
        for (t, v) in seq.iter_mut().enumerate() {
            let phase = std::f64::consts::TAU * drift_freq * t as f64 / len as f64 + drift_phase;
            *v += drift_amp * phase.sin() + noise_std * rng.normal();
        }
        sequences.push(seq);
        labels.push(class);
    }
    Ok((sequences, labels))
}

/// Hex SHA-256 of a sequence's little-endian 64-bit float bytes.
pub fn sequence_hash(seq: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in seq {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Population-coded input currents
// ---------------------------------------------------------------------------

/// Generate `n` input-current sequences `[steps x channels]`: class `i % 6`
/// drives its ten-channel block with Bernoulli(0.7) unit pulses, all other
/// channels idle at uniform noise up to 0.05.
pub fn synth_spike(
    n: usize,
    steps: usize,
    channels: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let classes = desk::SPIKE_CLASSES;
    let block = channels / classes;
    let mut rng = RngStream::new(seed, 0);
    let mut sequences = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let lo = class * block;
        let hi = lo + block;
        let mut seq = vec![0.0f64; steps * channels];
        for t in 0..steps {
            for c in 0..channels {
                seq[t * channels + c] = if c >= lo && c < hi {
                    if rng.uniform() < 0.7 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.05 * rng.uniform()
                };
            }
        }
        sequences.push(seq);
        labels.push(class);
    }
    (sequences, labels)
}

// ---------------------------------------------------------------------------
// Images through IDX files
// ---------------------------------------------------------------------------

fn image_file_names(train: bool) -> (&'static str, &'static str) {
    if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    }
}

/// Ten class templates, each a sum of three Gaussian bumps, peak-normalised.
fn image_templates(side: usize) -> Vec<Vec<f64>> {
    let mut templates = Vec::with_capacity(10);
    for class in 0..10u64 {
        let mut rng = RngStream::new(IMAGE_FILE_SEED, 100 + class);
        let mut t = vec![0.0f64; side * side];
        for _ in 0..3 {
            let cy = rng.uniform_in(2.0, side as f64 - 2.0);
            let cx = rng.uniform_in(2.0, side as f64 - 2.0);
            let sigma = rng.uniform_in(1.2, 2.8);
            let w = rng.uniform_in(0.6, 1.0);
            for y in 0..side {
                for x in 0..side {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    t[y * side + x] += w * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        let peak = t.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
        for v in &mut t {
            *v /= peak;
        }
        templates.push(t);
    }
    templates
}

/// Write a synthetic stand-in image split (images + labels IDX pair).
fn generate_image_split(dir: &Path, train: bool, n: usize) -> Result<()> {
    let side = desk::IMAGE_SIDE;
    let templates = image_templates(side);
    let mut rng = RngStream::new(IMAGE_FILE_SEED, if train { 0 } else { 1 });
    let mut images = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        let intensity = rng.uniform_in(0.7, 1.0);
        for &t in &templates[class] {
            let v = (intensity * t + 0.12 * rng.normal()).clamp(0.0, 1.0);
            images.push((v * 255.0).round() as u8);
        }
        labels.push(class as u8);
    }
    let (img_name, lbl_name) = image_file_names(train);
    crate::output::atomic_write(&dir.join(img_name), &write_idx(&[n, side, side], &images))?;
    crate::output::atomic_write(&dir.join(lbl_name), &write_idx(&[n], &labels))?;
    Ok(())
}

/// Make sure both IDX pairs exist, generating the stand-in where missing.
pub fn ensure_image_files(dir: &Path) -> Result<()> {
    for (train, n) in [(true, desk::IMAGE_TRAIN), (false, desk::IMAGE_TEST)] {
        let (img, lbl) = image_file_names(train);
        if !dir.join(img).exists() || !dir.join(lbl).exists() {
            generate_image_split(dir, train, n)?;
        }
    }
    Ok(())
}

fn read_idx_file(path: &Path) -> Result<IdxArray> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_idx(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// 2x2 max-pool one `side x side` grayscale image (`side` even).
fn pool2(img: &[f64], side: usize) -> Vec<f64> {
    let half = side / 2;
    let mut out = vec![0.0f64; half * half];
    for y in 0..half {
        for x in 0..half {
            let mut m = f64::MIN;
            for dy in 0..2 {
                for dx in 0..2 {
                    m = m.max(img[(2 * y + dy) * side + 2 * x + dx]);
                }
            }
            out[y * half + x] = m;
        }
    }
    out
}

/// One image split as flat unit-interval pixels.
struct ImageSplit {
    pixels: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
}

fn load_image_split(dir: &Path, train: bool, want: usize) -> Result<ImageSplit> {
    let (img_name, lbl_name) = image_file_names(train);
    let images = read_idx_file(&dir.join(img_name))?;
    let labels = read_idx_file(&dir.join(lbl_name))?;
    if images.dims.len() != 3 {
        bail!("{img_name}: expected rank 3 (n, rows, cols), got {:?}", images.dims);
    }
    if labels.dims.len() != 1 {
        bail!("{lbl_name}: expected rank 1, got {:?}", labels.dims);
    }
    let (n, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        bail!("{img_name} holds {n} images but {lbl_name} holds {} labels", labels.dims[0]);
    }
    if n < want {
        bail!("{img_name} holds {n} images, preset needs {want}");
    }
    let side = desk::IMAGE_SIDE;
    if !(rows == cols && (rows == side || rows == 2 * side)) {
        bail!("{img_name}: images are {rows}x{cols}, expected {side}x{side} or {}x{}", 2 * side, 2 * side);
    }
    let mut pixels = Vec::with_capacity(want * side * side);
    for i in 0..want {
        let raw: Vec<f64> = images.data[i * rows * cols..(i + 1) * rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        if rows == side {
            pixels.extend_from_slice(&raw);
        } else {
            pixels.extend_from_slice(&pool2(&raw, rows));
        }
    }
    let lab: Vec<usize> = labels.data[..want].iter().map(|&b| b as usize).collect();
    if let Some(&bad) = lab.iter().find(|&&l| l >= desk::IMAGE_CLASSES) {
        bail!("{lbl_name}: label {bad} outside 0..{}", desk::IMAGE_CLASSES);
    }
    Ok(ImageSplit {
        pixels,
        labels: lab,
        n: want,
    })
}

// ---------------------------------------------------------------------------
// Assembly into train/val/test splits
// ---------------------------------------------------------------------------

fn carve_val(full: Dataset<f64>, fraction: f64) -> Result<(Dataset<f64>, Dataset<f64>)> {
    let n = full.len();
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let train_rows: Vec<usize> = (0..n - n_val).collect();
    let val_rows: Vec<usize> = (n - n_val..n).collect();
    let tb = full.batch(&train_rows);
    let vb = full.batch(&val_rows);
    Ok((
        Dataset::new(tb.input, tb.labels).map_err(|e| anyhow!(e))?,
        Dataset::new(vb.input, vb.labels).map_err(|e| anyhow!(e))?,
    ))
}

fn sequence_dataset(seqs: Vec<Vec<f64>>, labels: Vec<usize>, dim: usize) -> Result<Dataset<f64>> {
    let n = seqs.len();
    let steps = seqs.first().map_or(0, |s| s.len() / dim);
    let mut flat = Vec::with_capacity(n * steps * dim);
    for s in &seqs {
        flat.extend_from_slice(s);
    }
    let tensor = Tensor::from_vec(&[n, steps, dim], flat).map_err(|e| anyhow!(e))?;
    Dataset::new(ModelInput::Sequence(tensor), labels).map_err(|e| anyhow!(e))
}

/// Load (or synthesise) the task configured in `cfg` and partition it.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits<f64>> {
    let side = desk::IMAGE_SIDE;
    match cfg.task {
        TaskKind::Fmnist => {
            ensure_image_files(&cfg.data_dir)?;
            let tr = load_image_split(&cfg.data_dir, true, desk::IMAGE_TRAIN)?;
            let te = load_image_split(&cfg.data_dir, false, desk::IMAGE_TEST)?;
            let shape: Vec<usize> = match cfg.architecture {
                ArchKind::Cnn => vec![side, side, 1],
                ArchKind::Mlp | ArchKind::Srnn => vec![side * side],
            };
            let make = |split: ImageSplit| -> Result<Dataset<f64>> {
                let mut dims = vec![split.n];
                dims.extend_from_slice(&shape);
                let t = Tensor::from_vec(&dims, split.pixels).map_err(|e| anyhow!(e))?;
                Dataset::new(ModelInput::Static(t), split.labels).map_err(|e| anyhow!(e))
            };
            let (train, val) = carve_val(make(tr)?, desk::VAL_FRACTION)?;
            Ok(Splits {
                train,
                val,
                test: make(te)?,
            })
        }
        TaskKind::SynthEcg => {
            let (tr_s, tr_l) = synth_ecg(
                desk::ECG_TRAIN,
                desk::ECG_LEN,
                RngStream::new(cfg.seed, STREAM_ECG_TRAIN).next_u64(),
            )?;
            let (te_s, te_l) = synth_ecg(
                desk::ECG_TEST,
                desk::ECG_LEN,
                RngStream::new(cfg.seed, STREAM_ECG_TEST).next_u64(),
            )?;
            let (train, val) = carve_val(sequence_dataset(tr_s, tr_l, 1)?, desk::VAL_FRACTION)?;
            Ok(Splits {
                train,
                val,
                test: sequence_dataset(te_s, te_l, 1)?,
            })
        }
        TaskKind::SynthSpike => {
            let (tr_s, tr_l) = synth_spike(
                desk::SPIKE_TRAIN,
                desk::SPIKE_STEPS,
                desk::SPIKE_CHANNELS,
                RngStream::new(cfg.seed, STREAM_SPIKE_TRAIN).next_u64(),
            );
            let (te_s, te_l) = synth_spike(
                desk::SPIKE_TEST,
                desk::SPIKE_STEPS,
                desk::SPIKE_CHANNELS,
                RngStream::new(cfg.seed, STREAM_SPIKE_TEST).next_u64(),
            );
            let (train, val) = carve_val(
                sequence_dataset(tr_s, tr_l, desk::SPIKE_CHANNELS)?,
                desk::VAL_FRACTION,
            )?;
            Ok(Splits {
                train,
                val,
                test: sequence_dataset(te_s, te_l, desk::SPIKE_CHANNELS)?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmrt_core::training::{accuracy, train};
    use mmrt_core::{Architecture, SrnnConfig, TrainConfig};

    #[test]
    fn short_sequences_are_rejected_with_the_minimum_length() {
        let err = synth_ecg(8, 49, 0).unwrap_err().to_string();
        assert!(err.contains("49") && err.contains("50"), "{err}");
    }

    #[test]
    fn pulse_train_classes_are_balanced_and_sized() {
        let (seqs, labels) = synth_ecg(16, desk::ECG_LEN, 3).unwrap();
        assert_eq!(seqs.len(), 16);
        assert!(seqs.iter().all(|s| s.len() == desk::ECG_LEN));
        for class in 0..4 {
            assert_eq!(labels.iter().filter(|&&l| l == class).count(), 4);
        }
    }

    #[test]
    fn first_pulse_sequence_hash_is_frozen() {
        let (seqs, _) = synth_ecg(4, desk::ECG_LEN, 0).unwrap();
        assert_eq!(
            sequence_hash(&seqs[0]),
            "82046f89fd0f3cdebac3f87c12b0085d164110e28ed88e62241e8d8d3d859239",
            "generator output drifted; the synthesis pipeline is no longer reproducible"
        );
    }

    #[test]
    fn generators_are_pure_functions_of_their_seed() {
        let a = synth_ecg(8, desk::ECG_LEN, 42).unwrap();
        let b = synth_ecg(8, desk::ECG_LEN, 42).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = synth_ecg(8, desk::ECG_LEN, 43).unwrap();
        assert_ne!(a.0, c.0);

        let (s1, l1) = synth_spike(12, 20, 64, 9);
        let (s2, l2) = synth_spike(12, 20, 64, 9);
        assert_eq!(s1, s2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn spike_patterns_respect_their_population_blocks() {
        let (seqs, labels) = synth_spike(6, 20, 64, 1);
        let block = 64 / desk::SPIKE_CLASSES;
        for (seq, &class) in seqs.iter().zip(&labels) {
            let lo = class * block;
            let hi = lo + block;
            let mut active_energy = 0.0;
            let mut idle_peak = 0.0f64;
            for t in 0..20 {
                for c in 0..64 {
                    let v = seq[t * 64 + c];
                    if c >= lo && c < hi {
                        active_energy += v;
                    } else {
                        idle_peak = idle_peak.max(v);
                    }
                }
            }
            assert!(active_energy > 20.0, "class {class} block barely active");
            assert!(idle_peak <= 0.05, "idle channel exceeded the noise cap");
        }
    }

    #[test]
    fn image_files_are_generated_once_and_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        ensure_image_files(dir.path()).unwrap();
        let split = load_image_split(dir.path(), false, desk::IMAGE_TEST).unwrap();
        assert_eq!(split.n, desk::IMAGE_TEST);
        assert_eq!(split.pixels.len(), desk::IMAGE_TEST * 14 * 14);
        assert!(split.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
        for class in 0..10 {
            let count = split.labels.iter().filter(|&&l| l == class).count();
            assert_eq!(count, desk::IMAGE_TEST / 10);
        }
        // A second call must leave the files untouched.
        let before = std::fs::read(dir.path().join("t10k-images-idx3-ubyte")).unwrap();
        ensure_image_files(dir.path()).unwrap();
        let after = std::fs::read(dir.path().join("t10k-images-idx3-ubyte")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn double_resolution_images_are_pooled_down() {
        let dir = tempfile::tempdir().unwrap();
        let n = 4;
        // One bright pixel per 2x2 cell; pooling must keep the maximum.
        let mut images = vec![0u8; n * 28 * 28];
        for i in 0..n {
            images[i * 28 * 28 + 1] = 200; // cell (0,0)
        }
        let labels: Vec<u8> = (0..n as u8).collect();
        std::fs::write(
            dir.path().join("t10k-images-idx3-ubyte"),
            write_idx(&[n, 28, 28], &images),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t10k-labels-idx1-ubyte"),
            write_idx(&[n], &labels),
        )
        .unwrap();
        let split = load_image_split(dir.path(), false, n).unwrap();
        assert_eq!(split.pixels.len(), n * 14 * 14);
        assert!((split.pixels[0] - 200.0 / 255.0).abs() < 1e-12);
        assert_eq!(split.pixels[1], 0.0);
    }

    #[test]
    fn task_splits_have_the_preset_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            task: TaskKind::SynthSpike,
            architecture: ArchKind::Srnn,
            data_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let splits = load_splits(&cfg).unwrap();
        assert_eq!(splits.train.len() + splits.val.len(), desk::SPIKE_TRAIN);
        assert_eq!(splits.test.len(), desk::SPIKE_TEST);
        match &splits.test.input {
            ModelInput::Sequence(t) => {
                assert_eq!(t.shape(), &[desk::SPIKE_TEST, desk::SPIKE_STEPS, 64])
            }
            _ => panic!("spike task must produce sequences"),
        }
    }

    /// The pulse-train task must be genuinely learnable: a plain spiking
    /// network reaches 90% test accuracy within thirty epochs at desk scale.
    #[test]
    fn pulse_trains_are_learnable_by_a_spiking_network() {
        let (tr_s, tr_l) = synth_ecg(640, desk::ECG_LEN, 11).unwrap();
        let (te_s, te_l) = synth_ecg(128, desk::ECG_LEN, 12).unwrap();
        let full = sequence_dataset(tr_s, tr_l, 1).unwrap();
        let (train_set, val_set) = carve_val(full, 0.2).unwrap();
        let splits = Splits {
            train: train_set,
            val: val_set,
            test: sequence_dataset(te_s, te_l, 1).unwrap(),
        };
        let arch = Architecture::Srnn(SrnnConfig {
            input_dim: 1,
            hidden: 64,
            classes: 4,
            n_steps: desk::ECG_LEN,
            input_gain: 100.0,
            tau_ada: 10.0,
            ..SrnnConfig::default()
        });
        let mut cfg = TrainConfig::default_for(&arch);
        cfg.epochs = 30;
        cfg.batch_size = 32;
        cfg.learning_rate = 1e-3;
        cfg.grad_clip = Some(2.0);
        cfg.seed = 5;
        let (params, report) = train(&arch, &splits, &cfg).unwrap();
        let acc = accuracy(&arch, &params, &splits.test).unwrap();
        assert!(
            acc >= 0.90,
            "test accuracy {acc:.3} after {} epochs (best val {:.3})",
            cfg.epochs,
            report.training.as_ref().map_or(0.0, |t| t.best_val_accuracy)
        );
    }
}
