//! Finite-difference validation of the reverse-mode gradient engine.
//!
//! [`run_all`] exercises every tape primitive and every architecture with
//! central finite differences on small `f64` instances and reports the worst
//! relative error per check. Non-scalar primitives are reduced through a
//! weighted sum whose probe weights are distinct per element, so a gradient
//! routed to the wrong slot cannot cancel against another and go unnoticed.
//!
//! The checks deliberately avoid the kinks of the piecewise-defined
//! primitives: ReLU and absolute-value inputs keep a margin from zero, clamp
//! inputs keep a margin from both edges, max-pool windows have well-separated
//! entries, and the spiking-network instance holds every membrane potential
//! outside the triangular surrogate's support wherever a spike could couple
//! into the loss. Away from those regions the analytic and numerical
//! derivatives must agree tightly; on the kinks the two are allowed to differ
//! by construction, so nothing is asserted there.

use crate::diffcore::exec::{finite_difference_check, Bindings, GradientReport};
use crate::diffcore::rng::RngStream;
use crate::diffcore::tape::{NodeId, Tape};
use crate::diffcore::tensor::Tensor;
use crate::error::Result;
use crate::models::{
    bind_input_steps, build_forward, Architecture, Batch, CnnConfig, InputShape, MlpConfig,
    ModelInput, ParameterSet, SrnnConfig,
};
use serde::Serialize;

/// Central-difference step used by every check.
pub const FD_STEP: f64 = 1e-5;

/// Tolerance for primitives and the feedforward architectures.
pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;

/// Tolerance for the full spiking-network check, which accumulates error
/// over an unrolled recurrence.
pub const SPIKING_TOLERANCE: f64 = 1e-3;

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// max over elements of `|analytic - fd| / max(1, |fd|)`.
    pub worst_rel_err: f64,
    /// `input[flat_index]` where the worst error occurred.
    pub worst_location: String,
    pub tolerance: f64,
    pub passed: bool,
}

/// Results of the whole battery, plus the overall worst offender.
#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
    pub worst_rel_err: f64,
    pub worst_check: String,
    pub all_passed: bool,
}

impl GradcheckReport {
    fn from_checks(checks: Vec<CheckResult>) -> Self {
        let mut worst_rel_err = 0.0;
        let mut worst_check = String::from("-");
        for c in &checks {
            if c.worst_rel_err >= worst_rel_err {
                worst_rel_err = c.worst_rel_err;
                worst_check = c.name.clone();
            }
        }
        let all_passed = checks.iter().all(|c| c.passed);
        GradcheckReport {
            checks,
            worst_rel_err,
            worst_check,
            all_passed,
        }
    }
}

/// Distinct, sign-alternating probe weights: `sum(node * probe)` turns any
/// array-valued node into a scalar loss whose gradient pattern is unique per
/// element, so permuted or misrouted adjoints show up as errors.
fn probe_weights(shape: &[usize]) -> Tensor<f64> {
    let mut w = Tensor::zeros(shape);
    for (i, v) in w.data_mut().iter_mut().enumerate() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        *v = sign * (0.35 + 0.11 * i as f64);
    }
    w
}

/// Append `sum(node * probe)` to the tape and return the loss node together
/// with the probe values that must be bound to the `probe` input.
fn weighted_sum(tape: &mut Tape, node: NodeId) -> Result<(NodeId, Tensor<f64>)> {
    let shape = tape.shape(node).to_vec();
    let probe = tape.input("probe", &shape)?;
    let prod = tape.mul(node, probe)?;
    let loss = tape.sum(prod)?;
    Ok((loss, probe_weights(&shape)))
}

/// Normal draws pushed away from zero so ReLU/abs/sign stay off their kinks
/// under the finite-difference perturbation.
fn off_zero_normal(rng: &mut RngStream, shape: &[usize], margin: f64) -> Tensor<f64> {
    let mut t: Tensor<f64> = rng.normal_tensor(shape);
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin } else { margin };
        }
    }
    t
}

fn record(
    checks: &mut Vec<CheckResult>,
    name: &str,
    tolerance: f64,
    report: GradientReport,
) {
    checks.push(CheckResult {
        name: name.to_string(),
        worst_rel_err: report.worst_rel_err,
        worst_location: report.worst_location,
        tolerance,
        passed: report.worst_rel_err <= tolerance,
    });
}

fn check_matmul(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[3, 4])?;
    let w = tape.input("w", &[4, 5])?;
    let prod = tape.matmul(x, w)?;
    let (loss, probe) = weighted_sum(&mut tape, prod)?;
    let xv: Tensor<f64> = rng.normal_tensor(&[3, 4]);
    let wv: Tensor<f64> = rng.normal_tensor(&[4, 5]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("w", &wv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x", "w"], &b, FD_STEP)?;
    record(checks, "matmul", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_conv2d(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 5, 5, 2])?;
    let k = tape.input("k", &[3, 3, 2, 3])?;
    let conv = tape.conv2d(x, k)?;
    let (loss, probe) = weighted_sum(&mut tape, conv)?;
    let xv: Tensor<f64> = rng.normal_tensor(&[2, 5, 5, 2]);
    let kv: Tensor<f64> = rng.normal_tensor(&[3, 3, 2, 3]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("k", &kv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x", "k"], &b, FD_STEP)?;
    record(checks, "conv2d", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_maxpool(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    // Odd width exercises the ragged single-column windows. Values are a
    // shuffled arithmetic progression, so every in-window pair differs by at
    // least 0.37 and the argmax cannot flip under the probe step.
    let shape = [1, 4, 5, 2];
    let len: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut order);
    let data: Vec<f64> = order.iter().map(|&i| 0.37 * i as f64 - 5.0).collect();
    let xv = Tensor::from_vec(&shape, data)?;

    let mut tape = Tape::new();
    let x = tape.input("x", &shape)?;
    let pooled = tape.maxpool2x2(x)?;
    let (loss, probe) = weighted_sum(&mut tape, pooled)?;
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "maxpool2x2", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_relu(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 7])?;
    let act = tape.relu(x)?;
    let (loss, probe) = weighted_sum(&mut tape, act)?;
    let xv = off_zero_normal(rng, &[2, 7], 0.05);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "relu", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_add(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let a = tape.input("a", &[3, 4])?;
    let c = tape.input("c", &[3, 4])?;
    let sum = tape.add(a, c)?;
    let (loss, probe) = weighted_sum(&mut tape, sum)?;
    let av: Tensor<f64> = rng.normal_tensor(&[3, 4]);
    let cv: Tensor<f64> = rng.normal_tensor(&[3, 4]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("a", &av);
    b.insert("c", &cv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["a", "c"], &b, FD_STEP)?;
    record(checks, "add", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_add_broadcast(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    // Bias-style broadcast: the adjoint of the short operand is a reduction
    // over rows, a separate code path from the same-shape case.
    let mut tape = Tape::new();
    let a = tape.input("a", &[3, 4])?;
    let bias = tape.input("bias", &[4])?;
    let sum = tape.add(a, bias)?;
    let (loss, probe) = weighted_sum(&mut tape, sum)?;
    let av: Tensor<f64> = rng.normal_tensor(&[3, 4]);
    let bv: Tensor<f64> = rng.normal_tensor(&[4]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("a", &av);
    b.insert("bias", &bv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["a", "bias"], &b, FD_STEP)?;
    record(checks, "add_broadcast_bias", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_mul(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let a = tape.input("a", &[2, 6])?;
    let c = tape.input("c", &[2, 6])?;
    let prod = tape.mul(a, c)?;
    let (loss, probe) = weighted_sum(&mut tape, prod)?;
    let av: Tensor<f64> = rng.normal_tensor(&[2, 6]);
    let cv: Tensor<f64> = rng.normal_tensor(&[2, 6]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("a", &av);
    b.insert("c", &cv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["a", "c"], &b, FD_STEP)?;
    record(checks, "mul", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_scale(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 5])?;
    let scaled = tape.scale(x, -1.7)?;
    let (loss, probe) = weighted_sum(&mut tape, scaled)?;
    let xv: Tensor<f64> = rng.normal_tensor(&[2, 5]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "scale", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_add_scalar(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 5])?;
    let shifted = tape.add_scalar(x, 0.35)?;
    let (loss, probe) = weighted_sum(&mut tape, shifted)?;
    let xv: Tensor<f64> = rng.normal_tensor(&[2, 5]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "add_scalar", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_clamp(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    // Mix of strictly-interior and strictly-exterior points with a 0.05
    // margin from both edges; exterior points must get exactly zero gradient.
    let base = [-1.2, -0.3, 0.1, 0.9, 0.42, -0.44, 1.5, -2.0];
    let data: Vec<f64> = base
        .iter()
        .map(|v| v + 0.02 * rng.normal())
        .collect();
    let xv = Tensor::from_vec(&[2, 4], data)?;
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 4])?;
    let clamped = tape.clamp(x, -0.5, 0.5)?;
    let (loss, probe) = weighted_sum(&mut tape, clamped)?;
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "clamp", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_abs(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 6])?;
    let mag = tape.abs(x)?;
    let (loss, probe) = weighted_sum(&mut tape, mag)?;
    let xv = off_zero_normal(rng, &[2, 6], 0.05);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "abs", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_sign(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    // Sign is piecewise constant: off zero, both the analytic gradient and
    // the finite difference must vanish identically.
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 5])?;
    let s = tape.sign(x)?;
    let (loss, probe) = weighted_sum(&mut tape, s)?;
    let xv = off_zero_normal(rng, &[2, 5], 0.05);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "sign", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_softmax(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let z = tape.input("z", &[3, 5])?;
    let p = tape.softmax(z)?;
    let (loss, probe) = weighted_sum(&mut tape, p)?;
    let zv: Tensor<f64> = rng.normal_tensor(&[3, 5]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("z", &zv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["z"], &b, FD_STEP)?;
    record(checks, "softmax", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn positive_rows(rng: &mut RngStream, shape: &[usize]) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform_in(0.05, 0.95);
    }
    t
}

fn check_cross_entropy(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    // Labels enter as data: the loss is differentiated with respect to the
    // probability rows only, so the check perturbs only those.
    let mut tape = Tape::new();
    let p = tape.input("p", &[4, 3])?;
    let y = tape.input("y", &[4, 3])?;
    let loss = tape.cross_entropy(p, y)?;
    let pv = positive_rows(rng, &[4, 3]);
    let mut yv = Tensor::zeros(&[4, 3]);
    for row in 0..4 {
        yv.data_mut()[row * 3 + row % 3] = 1.0;
    }
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("p", &pv);
    b.insert("y", &yv);
    let report = finite_difference_check(&tape, loss, &["p"], &b, FD_STEP)?;
    record(checks, "cross_entropy", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_kl_div(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let p = tape.input("p", &[3, 4])?;
    let q = tape.input("q", &[3, 4])?;
    let loss = tape.kl_div(p, q)?;
    let pv = positive_rows(rng, &[3, 4]);
    let qv = positive_rows(rng, &[3, 4]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("p", &pv);
    b.insert("q", &qv);
    let report = finite_difference_check(&tape, loss, &["p", "q"], &b, FD_STEP)?;
    record(checks, "kl_div", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_spike_step(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    // Membrane values sit outside the surrogate's support (v <= 0 or
    // v >= 2b): there the surrogate is zero and the hard threshold is locally
    // constant, so analytic and numerical derivatives must both vanish. The
    // surrogate's value inside the support is intentionally not a derivative
    // of the forward and is validated against its formula elsewhere.
    let bv = Tensor::from_vec(&[2, 3], vec![0.8, 1.0, 1.3, 0.9, 1.1, 1.0])?;
    let mut vv = Tensor::zeros(&[2, 3]);
    for (i, v) in vv.data_mut().iter_mut().enumerate() {
        let level = if i % 2 == 0 { -0.2 } else { 2.0 * 1.3 + 0.2 };
        *v = level + 0.01 * rng.normal();
    }
    let mut tape = Tape::new();
    let v = tape.input("v", &[2, 3])?;
    let b = tape.input("b", &[2, 3])?;
    let spikes = tape.spike_step(v, b, 0.3)?;
    let (loss, probe) = weighted_sum(&mut tape, spikes)?;
    let mut bind: Bindings<'_, f64> = Bindings::new();
    bind.insert("v", &vv);
    bind.insert("b", &bv);
    bind.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["v", "b"], &bind, FD_STEP)?;
    record(checks, "spike_step", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_reshape(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[2, 3, 2, 1])?;
    let flat = tape.reshape(x, &[2, 6])?;
    let (loss, probe) = weighted_sum(&mut tape, flat)?;
    let xv: Tensor<f64> = rng.normal_tensor(&[2, 3, 2, 1]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    b.insert("probe", &probe);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "reshape", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

fn check_sum(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.input("x", &[3, 4])?;
    let loss = tape.sum(x)?;
    let xv: Tensor<f64> = rng.normal_tensor(&[3, 4]);
    let mut b: Bindings<'_, f64> = Bindings::new();
    b.insert("x", &xv);
    let report = finite_difference_check(&tape, loss, &["x"], &b, FD_STEP)?;
    record(checks, "sum", PRIMITIVE_TOLERANCE, report);
    Ok(())
}

/// Check the cross-entropy training loss of a full architecture with respect
/// to every parameter.
fn check_architecture(
    name: &str,
    tolerance: f64,
    arch: &Architecture,
    params: &ParameterSet<f64>,
    batch: &Batch<f64>,
    checks: &mut Vec<CheckResult>,
) -> Result<()> {
    let graph = build_forward(arch, &InputShape::of(&batch.input), false)?;
    let mut tape = graph.tape;
    let labels = tape.input("labels_onehot", &[batch.len(), arch.classes()])?;
    let loss = tape.cross_entropy(graph.handles.probs, labels)?;

    let steps = bind_input_steps(&batch.input, &graph.input_names);
    let onehot = batch.one_hot(arch.classes());
    let mut b: Bindings<'_, f64> = Bindings::new();
    for (step_name, tensor) in &steps {
        b.insert(step_name, tensor);
    }
    b.insert("labels_onehot", &onehot);
    for (param_name, p) in params.iter() {
        b.insert(param_name, &p.value);
    }
    let wrt: Vec<&str> = params.iter().map(|(n, _)| n).collect();
    let report = finite_difference_check(&tape, loss, &wrt, &b, FD_STEP)?;
    record(checks, name, tolerance, report);
    Ok(())
}

fn check_mlp(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let arch = Architecture::Mlp(MlpConfig::new(&[6, 5, 4, 3]));
    let params: ParameterSet<f64> = arch.init_params(rng);
    let x: Tensor<f64> = rng.normal_tensor(&[3, 6]);
    let batch = Batch {
        input: ModelInput::Static(x),
        labels: vec![0, 1, 2],
    };
    check_architecture(
        "mlp_cross_entropy",
        PRIMITIVE_TOLERANCE,
        &arch,
        &params,
        &batch,
        checks,
    )
}

fn check_cnn(rng: &mut RngStream, checks: &mut Vec<CheckResult>) -> Result<()> {
    let arch = Architecture::Cnn(CnnConfig {
        input_hw: (6, 6),
        in_channels: 1,
        conv_channels: vec![2],
        kernel: (3, 3),
        dense: vec![5],
        classes: 3,
    });
    let params: ParameterSet<f64> = arch.init_params(rng);
    let mut x = Tensor::zeros(&[2, 6, 6, 1]);
    for v in x.data_mut() {
        *v = rng.uniform();
    }
    let batch = Batch {
        input: ModelInput::Static(x),
        labels: vec![0, 2],
    };
    check_architecture(
        "cnn_cross_entropy",
        PRIMITIVE_TOLERANCE,
        &arch,
        &params,
        &batch,
        checks,
    )
}

/// Spiking instance engineered to stay off the surrogate's support.
///
/// Two "loud" neurons receive a strong positive drive (the membrane clears
/// twice the threshold with a wide margin at every step where the refractory
/// gate is open) and two "dead" neurons receive the mirrored negative drive.
/// The spike pattern is then locally constant in the parameters, the readout
/// weights and biases carry ordinary smooth gradients through the
/// time-averaged spike counts, and every other parameter must get an exactly
/// zero gradient from both sides of the comparison.
fn srnn_off_kink_instance() -> Result<(Architecture, ParameterSet<f64>, Batch<f64>)> {
    let cfg = SrnnConfig {
        input_dim: 3,
        hidden: 4,
        classes: 2,
        n_steps: 5,
        ..SrnnConfig::default()
    };
    let arch = Architecture::Srnn(cfg);
    let mut params = ParameterSet::new();
    params.insert(
        "w_in",
        Tensor::from_vec(
            &[3, 4],
            vec![
                400.0, 480.0, -400.0, -480.0, // driven input channel
                0.3, -0.2, 0.25, -0.15, // silent channels still get weights
                -0.4, 0.1, -0.3, 0.2,
            ],
        )?,
        true,
    );
    params.insert("w_rec", Tensor::zeros(&[4, 4]), true);
    params.insert(
        "w_out",
        Tensor::from_vec(&[4, 2], vec![0.5, -0.3, -0.2, 0.4, 0.7, 0.1, -0.6, 0.2])?,
        true,
    );
    params.insert("b_out", Tensor::from_vec(&[2], vec![1.5, -0.7])?, true);
    let x = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 0.0, 1.2, 0.0, 0.0])?;
    let batch = Batch {
        input: ModelInput::Static(x),
        labels: vec![0, 1],
    };
    Ok((arch, params, batch))
}

fn check_srnn(checks: &mut Vec<CheckResult>) -> Result<()> {
    let (arch, params, batch) = srnn_off_kink_instance()?;
    check_architecture(
        "srnn_cross_entropy",
        SPIKING_TOLERANCE,
        &arch,
        &params,
        &batch,
        checks,
    )
}

/// Run the full battery with a fixed seed and collect one result per check.
pub fn run_all() -> Result<GradcheckReport> {
    let mut rng = RngStream::new(0x6_7ad, 0);
    let mut checks = Vec::new();
    check_matmul(&mut rng, &mut checks)?;
    check_conv2d(&mut rng, &mut checks)?;
    check_maxpool(&mut rng, &mut checks)?;
    check_relu(&mut rng, &mut checks)?;
    check_add(&mut rng, &mut checks)?;
    check_add_broadcast(&mut rng, &mut checks)?;
    check_mul(&mut rng, &mut checks)?;
    check_scale(&mut rng, &mut checks)?;
    check_add_scalar(&mut rng, &mut checks)?;
    check_clamp(&mut rng, &mut checks)?;
    check_abs(&mut rng, &mut checks)?;
    check_sign(&mut rng, &mut checks)?;
    check_softmax(&mut rng, &mut checks)?;
    check_cross_entropy(&mut rng, &mut checks)?;
    check_kl_div(&mut rng, &mut checks)?;
    check_spike_step(&mut rng, &mut checks)?;
    check_reshape(&mut rng, &mut checks)?;
    check_sum(&mut rng, &mut checks)?;
    check_mlp(&mut rng, &mut checks)?;
    check_cnn(&mut rng, &mut checks)?;
    check_srnn(&mut checks)?;
    Ok(GradcheckReport::from_checks(checks))
}
