//! Architecture forward passes written once over [`NetDomain`].
//!
//! Every value-producing step goes through the domain, so the same code
//! builds differentiable tapes and propagates interval bounds. Named tags
//! mark the intermediates used by containment checks and membrane-statistic
//! pooling: `dense{i}.pre`/`dense{i}.act`, `conv{i}.pre`/`conv{i}.act`,
//! per-step `step{t}.v`/`step{t}.bth`/`step{t}.o`, `z_avg`, and `logits`.

use super::cnn::CnnConfig;
use super::domain::NetDomain;
use super::mlp::MlpConfig;
use super::srnn::SrnnConfig;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

fn param<'m, V>(params: &'m BTreeMap<String, V>, name: &str) -> Result<&'m V> {
    params
        .get(name)
        .ok_or_else(|| Error::MissingParameter(name.to_string()))
}

fn mask_at<'m, V>(masks: Option<&'m [V]>, i: usize) -> Result<Option<&'m V>> {
    match masks {
        None => Ok(None),
        Some(slice) => Ok(Some(slice.get(i).ok_or_else(|| {
            Error::invalid(format!("missing dropout mask {i}"))
        })?)),
    }
}

/// Dense chain shared by the fully-connected net and the CNN head:
/// `matmul + bias`, ReLU between layers, optional dropout masks on hidden
/// activations. Returns the final pre-softmax logits.
fn dense_chain<D: NetDomain>(
    dom: &mut D,
    mut h: D::Value,
    layer_count: usize,
    params: &BTreeMap<String, D::Value>,
    masks: Option<&[D::Value]>,
    mask_offset: usize,
) -> Result<D::Value> {
    for i in 0..layer_count {
        let w = param(params, &format!("dense{i}.w"))?;
        let b = param(params, &format!("dense{i}.b"))?;
        let prod = dom.matmul(&h, w)?;
        let pre = dom.add(&prod, b)?;
        dom.tag(&format!("dense{i}.pre"), &pre);
        if i + 1 == layer_count {
            return Ok(pre);
        }
        let mut act = dom.relu(&pre)?;
        dom.tag(&format!("dense{i}.act"), &act);
        if let Some(mask) = mask_at(masks, mask_offset + i)? {
            act = dom.mul(&act, mask)?;
        }
        h = act;
    }
    Err(Error::invalid("dense chain needs at least one layer"))
}

/// Fully-connected forward: hidden ReLU layers, linear head.
pub fn mlp_logits<D: NetDomain>(
    cfg: &MlpConfig,
    dom: &mut D,
    x: &D::Value,
    params: &BTreeMap<String, D::Value>,
    masks: Option<&[D::Value]>,
) -> Result<D::Value> {
    if cfg.layers.len() < 2 {
        return Err(Error::invalid("network needs input and output widths"));
    }
    let logits = dense_chain(dom, x.clone(), cfg.layers.len() - 1, params, masks, 0)?;
    dom.tag("logits", &logits);
    Ok(logits)
}

/// Convolutional forward: per block `conv -> bias -> max-pool -> ReLU`,
/// then flatten into the dense chain.
pub fn cnn_logits<D: NetDomain>(
    cfg: &CnnConfig,
    dom: &mut D,
    x: &D::Value,
    params: &BTreeMap<String, D::Value>,
    masks: Option<&[D::Value]>,
    batch: usize,
) -> Result<D::Value> {
    let mut h = x.clone();
    for i in 0..cfg.conv_channels.len() {
        let kernel = param(params, &format!("conv{i}.k"))?;
        let bias = param(params, &format!("conv{i}.b"))?;
        let conv = dom.conv2d(&h, kernel)?;
        let pre = dom.add(&conv, bias)?;
        dom.tag(&format!("conv{i}.pre"), &pre);
        let pooled = dom.maxpool2x2(&pre)?;
        let mut act = dom.relu(&pooled)?;
        dom.tag(&format!("conv{i}.act"), &act);
        if let Some(mask) = mask_at(masks, i)? {
            act = dom.mul(&act, mask)?;
        }
        h = act;
    }
    let flat = dom.reshape(&h, &[batch, cfg.flatten_len()])?;
    let logits = dense_chain(
        dom,
        flat,
        cfg.dense.len() + 1,
        params,
        masks,
        cfg.conv_channels.len(),
    )?;
    dom.tag("logits", &logits);
    Ok(logits)
}

/// Spiking recurrent forward over explicit per-step inputs.
///
/// Implements, per step and in this order: threshold `B = b0 + beta * b`;
/// refractory-gated spikes `o = 1(V > B)`; adaptation update; reset current
/// `o * B`; membrane update from input and recurrent drive; refractory
/// restart. Dropout masks (one per step) silence a unit's *communicated*
/// spikes — recurrent drive and readout — while its internal reset,
/// adaptation, and refractory dynamics still see the true spike.
pub fn srnn_logits<D: NetDomain>(
    cfg: &SrnnConfig,
    dom: &mut D,
    x_steps: &[D::Value],
    params: &BTreeMap<String, D::Value>,
    masks: Option<&[D::Value]>,
    batch: usize,
) -> Result<D::Value> {
    if x_steps.is_empty() {
        return Err(Error::invalid("spiking forward needs at least one step"));
    }
    let w_in = param(params, "w_in")?.clone();
    let w_rec = param(params, "w_rec")?.clone();
    let w_out = param(params, "w_out")?.clone();
    let b_out = param(params, "b_out")?.clone();

    let steps = x_steps.len();
    let state_shape = [batch, cfg.hidden];
    let (rho_v, rho_b) = (cfg.rho_v(), cfg.rho_b());
    let refr_restart = cfg.refr_steps() as f64;

    let mut v = dom.zeros(&state_shape);
    let mut b = dom.zeros(&state_shape);
    let mut refr = dom.zeros(&state_shape);
    let mut spike_sum = dom.zeros(&state_shape);

    for (t, x_t) in x_steps.iter().enumerate() {
        // Threshold from the current adaptation level.
        let scaled_b = dom.scale(&b, cfg.beta_ada)?;
        let big_b = dom.add_scalar(&scaled_b, cfg.b0)?;
        dom.tag(&format!("step{t}.v"), &v);
        dom.tag(&format!("step{t}.bth"), &big_b);

        // Spikes, gated by the refractory counter.
        let raw = dom.spike(&v, &big_b, cfg.dampening)?;
        let blocked = dom.clamp(&refr, 0.0, 1.0)?;
        let neg_blocked = dom.scale(&blocked, -1.0)?;
        let gate = dom.add_scalar(&neg_blocked, 1.0)?;
        let o = dom.mul(&raw, &gate)?;
        dom.tag(&format!("step{t}.o"), &o);

        // Masked spikes feed the network; raw spikes drive the neuron's own
        // reset, adaptation, and refractory state.
        let o_comm = match mask_at(masks, t)? {
            Some(mask) => dom.mul(&o, mask)?,
            None => o.clone(),
        };

        // Adaptation: b <- rho_b b + (1 - rho_b) o/dt.
        let b_decay = dom.scale(&b, rho_b)?;
        let b_rise = dom.scale(&o, (1.0 - rho_b) / cfg.dt)?;
        b = dom.add(&b_decay, &b_rise)?;

        // Reset current (o/dt) * B * dt = o * B.
        let i_reset = dom.mul(&o, &big_b)?;

        // Membrane: rho_v V + (1 - rho_v)(I_in W_in + (o/dt) W_rec) - reset.
        let x_scaled = dom.scale(x_t, cfg.input_gain)?;
        let in_drive = dom.matmul(&x_scaled, &w_in)?;
        let rate = dom.scale(&o_comm, 1.0 / cfg.dt)?;
        let rec_drive = dom.matmul(&rate, &w_rec)?;
        let drive = dom.add(&in_drive, &rec_drive)?;
        let v_decay = dom.scale(&v, rho_v)?;
        let v_drive = dom.scale(&drive, 1.0 - rho_v)?;
        let v_sum = dom.add(&v_decay, &v_drive)?;
        let neg_reset = dom.scale(&i_reset, -1.0)?;
        v = dom.add(&v_sum, &neg_reset)?;

        // Refractory: count down, restart where the neuron fired.
        let counted = dom.add_scalar(&refr, -1.0)?;
        let floored = dom.clamp(&counted, 0.0, f64::INFINITY)?;
        let restart = dom.scale(&o, refr_restart)?;
        refr = dom.add(&floored, &restart)?;

        spike_sum = dom.add(&spike_sum, &o_comm)?;
    }

    let z_avg = dom.scale(&spike_sum, 1.0 / steps as f64)?;
    dom.tag("z_avg", &z_avg);
    let readout = dom.matmul(&z_avg, &w_out)?;
    let logits = dom.add(&readout, &b_out)?;
    dom.tag("logits", &logits);
    Ok(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::rng::RngStream;
    use crate::diffcore::tensor::Tensor;
    use crate::models::srnn::{srnn_step, SrnnState};
    use crate::models::{forward_eval, forward_probs, Architecture, ModelInput, ParameterSet};

    fn init<T: crate::diffcore::tensor::Real>(arch: &Architecture, seed: u64) -> ParameterSet<T> {
        let mut rng = RngStream::new(seed, 0);
        arch.init_params(&mut rng)
    }

    fn zero_params<T: crate::diffcore::tensor::Real>(arch: &Architecture) -> ParameterSet<T> {
        let mut set = ParameterSet::new();
        for spec in arch.param_specs() {
            set.insert(&spec.name, Tensor::zeros(&spec.shape), spec.susceptible);
        }
        set
    }

    #[test]
    fn zero_weight_mlp_outputs_uniform_rows() {
        let arch = Architecture::Mlp(MlpConfig::new(&[4, 6, 10]));
        let params = zero_params::<f64>(&arch);
        let x = Tensor::from_vec(&[2, 4], vec![0.3; 8]).unwrap();
        let probs = forward_probs(&arch, &params, &ModelInput::Static(x)).unwrap();
        for &p in probs.data() {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_matches_hand_computed_two_two_two_network() {
        // x = [1, 2], W0 = [[1, -1], [0.5, 0.5]], b0 = [0, 0.5]
        // pre0 = [1*1 + 2*0.5, 1*(-1) + 2*0.5] + b0 = [2, 0.5]
        // act0 = relu(pre0) = [2, 0.5]
        // W1 = [[1, 0], [1, 1]], b1 = [0.1, -0.1]
        // logits = [2*1 + 0.5*1 + 0.1, 0.5 - 0.1] = [2.6, 0.4]
        let arch = Architecture::Mlp(MlpConfig::new(&[2, 2, 2]));
        let mut params = ParameterSet::<f64>::new();
        params.insert(
            "dense0.w",
            Tensor::from_vec(&[2, 2], vec![1.0, -1.0, 0.5, 0.5]).unwrap(),
            true,
        );
        params.insert(
            "dense0.b",
            Tensor::from_vec(&[2], vec![0.0, 0.5]).unwrap(),
            true,
        );
        params.insert(
            "dense1.w",
            Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 1.0, 1.0]).unwrap(),
            true,
        );
        params.insert(
            "dense1.b",
            Tensor::from_vec(&[2], vec![0.1, -0.1]).unwrap(),
            true,
        );
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let (eval, graph) = forward_eval(&arch, &params, &ModelInput::Static(x)).unwrap();
        let logits = eval.value(graph.handles.tags["logits"]);
        assert!((logits.data()[0] - 2.6).abs() < 1e-12);
        assert!((logits.data()[1] - 0.4).abs() < 1e-12);
        let (e0, e1) = (2.6f64.exp(), 0.4f64.exp());
        let probs = eval.value(graph.handles.probs);
        assert!((probs.data()[0] - e0 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn probability_rows_sum_to_one_for_random_parameters() {
        let archs = [
            Architecture::Mlp(MlpConfig::new(&[6, 5, 4])),
            Architecture::Cnn(CnnConfig {
                input_hw: (8, 8),
                in_channels: 1,
                conv_channels: vec![3, 4],
                kernel: (3, 3),
                dense: vec![10],
                classes: 4,
            }),
        ];
        let mut rng = RngStream::new(17, 5);
        for arch in &archs {
            let params = init::<f64>(arch, 21);
            let input = match arch {
                Architecture::Cnn(_) => {
                    let mut x = Tensor::zeros(&[3, 8, 8, 1]);
                    for v in x.data_mut() {
                        *v = rng.uniform();
                    }
                    ModelInput::Static(x)
                }
                _ => {
                    let mut x = Tensor::zeros(&[3, 6]);
                    for v in x.data_mut() {
                        *v = rng.normal();
                    }
                    ModelInput::Static(x)
                }
            };
            let probs = forward_probs(arch, &params, &input).unwrap();
            for row in 0..3 {
                let c = probs.shape()[1];
                let sum: f64 = probs.data()[row * c..(row + 1) * c].iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
                assert!(probs.data()[row * c..(row + 1) * c]
                    .iter()
                    .all(|p| p.is_finite()));
            }
        }
    }

    #[test]
    fn zero_kernel_cnn_outputs_uniform_rows() {
        let arch = Architecture::Cnn(CnnConfig {
            input_hw: (8, 8),
            in_channels: 1,
            conv_channels: vec![2, 2],
            kernel: (3, 3),
            dense: vec![5],
            classes: 10,
        });
        let params = zero_params::<f64>(&arch);
        let x = Tensor::from_vec(&[1, 8, 8, 1], vec![0.5; 64]).unwrap();
        let probs = forward_probs(&arch, &params, &ModelInput::Static(x)).unwrap();
        for &p in probs.data() {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn silent_spiking_network_reads_out_softmax_of_bias() {
        let cfg = SrnnConfig {
            input_dim: 3,
            hidden: 4,
            classes: 3,
            n_steps: 5,
            ..SrnnConfig::default()
        };
        let arch = Architecture::Srnn(cfg);
        let mut params = zero_params::<f64>(&arch);
        *params.value_mut("b_out").unwrap() =
            Tensor::from_vec(&[3], vec![1.0, 0.0, -1.0]).unwrap();
        let x = Tensor::zeros(&[2, 3]);
        let probs = forward_probs(&arch, &params, &ModelInput::Static(x)).unwrap();
        let z: f64 = [1.0f64, 0.0, -1.0].iter().map(|l| l.exp()).sum();
        for row in 0..2 {
            for (j, l) in [1.0f64, 0.0, -1.0].iter().enumerate() {
                assert!((probs.data()[row * 3 + j] - l.exp() / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spiking_forward_matches_repeated_concrete_steps() {
        // Two steps of a two-neuron net: the tape-built forward must agree
        // with explicit srnn_step applications plus the readout formula.
        let cfg = SrnnConfig {
            input_dim: 2,
            hidden: 2,
            classes: 2,
            n_steps: 2,
            input_gain: 4.0,
            ..SrnnConfig::default()
        };
        let arch = Architecture::Srnn(cfg.clone());
        let params = init::<f64>(&arch, 77);

        // Sequence input [n=1, t=2, d=2].
        let seq = Tensor::from_vec(&[1, 2, 2], vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        let input = ModelInput::Sequence(seq.clone());
        let (eval, graph) = forward_eval(&arch, &params, &input).unwrap();

        // Oracle: explicit stepping.
        let mut state = SrnnState::zeros(1, cfg.hidden);
        let mut spike_sum = vec![0.0f64; cfg.hidden];
        for t in 0..2 {
            let x_t = ModelInput::Sequence(seq.clone()).step_slice(t);
            state = srnn_step(&cfg, &params, &state, &x_t).unwrap();
            for (acc, &o) in spike_sum.iter_mut().zip(state.o.data()) {
                *acc += o;
            }
        }
        let w_out = params.value("w_out").unwrap();
        let b_out = params.value("b_out").unwrap();
        let mut logits = vec![0.0f64; cfg.classes];
        for (j, logit) in logits.iter_mut().enumerate() {
            let mut acc = b_out.data()[j];
            for i in 0..cfg.hidden {
                acc += spike_sum[i] / 2.0 * w_out.data()[i * cfg.classes + j];
            }
            *logit = acc;
        }

        let got = eval.value(graph.handles.tags["logits"]);
        for j in 0..cfg.classes {
            assert!(
                (got.data()[j] - logits[j]).abs() < 1e-10,
                "logit {j}: {} vs {}",
                got.data()[j],
                logits[j]
            );
        }
        // The per-step spike tags must agree with the oracle's last state.
        let o1 = eval.value(graph.handles.tags["step1.o"]);
        assert_eq!(o1.data(), state.o.data());
    }

    #[test]
    fn spiking_tags_cover_every_step() {
        let cfg = SrnnConfig {
            input_dim: 2,
            hidden: 3,
            classes: 2,
            n_steps: 4,
            ..SrnnConfig::default()
        };
        let arch = Architecture::Srnn(cfg);
        let params = init::<f64>(&arch, 3);
        let x = Tensor::zeros(&[1, 2]);
        let (_, graph) = forward_eval(&arch, &params, &ModelInput::Static(x)).unwrap();
        for t in 0..4 {
            for field in ["v", "bth", "o"] {
                assert!(
                    graph.handles.tags.contains_key(&format!("step{t}.{field}")),
                    "missing step{t}.{field}"
                );
            }
        }
        assert!(graph.handles.tags.contains_key("z_avg"));
    }
}
