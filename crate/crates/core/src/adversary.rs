//! Projected-gradient ascent on network weights.
//!
//! The adversary searches the mismatch box — per-entry intervals
//! `[theta - zeta*|theta|, theta + zeta*|theta|]` around the trained
//! parameters — for the corner that most changes the network's output
//! distribution. Robustness is measured by the KL divergence between the
//! nominal and attacked probability rows; training against this adversary
//! penalises parameter configurations whose outputs are easily moved.
//!
//! The ascent uses sign steps of size `zeta*|theta| / n_steps` and re-projects
//! into the box after every move, starting from a small proportional jitter.
//! Because step size and box are both proportional to `|theta|`, the attack
//! is invariant to per-entry rescaling, which is what prevents the trivial
//! "grow all weights" defence.
//!
//! Differentiating through the attacked copy uses the diagonal-Jacobian
//! shortcut: the attack position is `theta + |theta|*eps.R + alpha.sum_t
//! sign(g_t)`, so `d theta*/d theta` is `1 + sign(theta)(zeta + eps*R)/n_steps
//! * s` per entry, where `s` accumulates the per-step gradient signs. The
//! attack records `s` and `R` in an [`AttackTrace`] so the backward pass can
//! apply the Jacobian without unrolling.

use crate::diffcore::exec::{self, Bindings};
use crate::diffcore::kernels;
use crate::diffcore::rng::RngStream;
use crate::diffcore::tape::{NodeId, Tape};
use crate::diffcore::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    append_data_inputs, append_network, append_param_inputs, bind_input_steps, Architecture,
    Batch, InputShape, ParameterSet,
};
use serde::{Deserialize, Serialize};

/// Input-name prefix of the attacked parameter copy on two-copy tapes.
const ADV_PREFIX: &str = "adv::";

/// Attack strength and the weight of the robustness term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Relative box radius: entries may move by at most `zeta * |theta|`.
    pub zeta_attack: f64,
    /// Projected-gradient ascent steps.
    pub n_steps: usize,
    /// Relative scale of the random jitter that seeds the ascent.
    pub eps_init: f64,
    /// Weight of the robustness loss in the training objective.
    pub beta_rob: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            zeta_attack: 0.1,
            n_steps: 10,
            eps_init: 0.01,
            beta_rob: 0.25,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta_attack >= 0.0) {
            return Err(Error::invalid(format!(
                "attack radius zeta = {} < 0",
                self.zeta_attack
            )));
        }
        if self.n_steps < 1 {
            return Err(Error::invalid("attack needs at least one step"));
        }
        if !(self.eps_init >= 0.0) {
            return Err(Error::invalid(format!(
                "init jitter eps = {} < 0",
                self.eps_init
            )));
        }
        if !(self.beta_rob >= 0.0) {
            return Err(Error::invalid(format!(
                "robustness weight beta = {} < 0",
                self.beta_rob
            )));
        }
        Ok(())
    }
}

/// What the adversary ascends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackObjective {
    /// KL divergence from the nominal output rows (label-free).
    KlDivergence,
    /// Categorical cross-entropy against the batch labels.
    CrossEntropy,
}

/// Byproducts of one attack needed to differentiate through it.
#[derive(Debug, Clone)]
pub struct AttackTrace<T> {
    /// Per-entry accumulated gradient signs; integer-valued in
    /// `[-n_steps, n_steps]`, zero on non-susceptible entries.
    pub sign_sum: ParameterSet<T>,
    /// The standard-normal jitter draw that seeded the ascent, zero on
    /// non-susceptible entries.
    pub jitter: ParameterSet<T>,
}

/// Clamp `m` elementwise into the box `[theta - zeta|theta|, theta + zeta|theta|]`.
pub fn project_box<T: Real>(m: &Tensor<T>, theta: &Tensor<T>, zeta: f64) -> Result<Tensor<T>> {
    if !(zeta >= 0.0) {
        return Err(Error::invalid(format!("box radius zeta = {zeta} < 0")));
    }
    let z = T::from_f64(zeta);
    m.zip(theta, |mi, ti| {
        let r = z * ti.abs();
        num_traits::clamp(mi, ti - r, ti + r)
    })
}

/// Batch-mean KL divergence `KL(p_nominal || p_attacked)` over probability
/// rows, with both arguments floored at 1e-12.
pub fn robustness_loss<T: Real>(p_nominal: &Tensor<T>, p_attacked: &Tensor<T>) -> Result<T> {
    if p_nominal.rank() != 2 || p_nominal.shape() != p_attacked.shape() {
        return Err(Error::shape(
            "robustness_loss",
            format!("{:?} vs {:?}", p_nominal.shape(), p_attacked.shape()),
        ));
    }
    Ok(kernels::kl_div(p_nominal, p_attacked))
}

/// A forward graph whose parameters are the attacked copy only; the nominal
/// network enters through a constant auxiliary input.
struct AttackGraph {
    tape: Tape,
    input_names: Vec<String>,
    /// `nominal_probs` for the KL objective, `labels_onehot` for CE.
    aux_name: &'static str,
    loss: NodeId,
}

fn attack_graph(
    arch: &Architecture,
    input: &InputShape,
    objective: AttackObjective,
) -> Result<AttackGraph> {
    let mut tape = Tape::new();
    let params = append_param_inputs(&mut tape, arch, ADV_PREFIX)?;
    let data = append_data_inputs(&mut tape, arch, input)?;
    let handles = append_network(&mut tape, arch, &data, &params, None, input.batch())?;
    let rows = [input.batch(), arch.classes()];
    let (aux_name, loss) = match objective {
        AttackObjective::KlDivergence => {
            let aux = tape.input("nominal_probs", &rows)?;
            ("nominal_probs", tape.kl_div(aux, handles.probs)?)
        }
        AttackObjective::CrossEntropy => {
            let aux = tape.input("labels_onehot", &rows)?;
            ("labels_onehot", tape.cross_entropy(handles.probs, aux)?)
        }
    };
    Ok(AttackGraph {
        tape,
        input_names: data.names,
        aux_name,
        loss,
    })
}

/// Run projected-gradient ascent inside the mismatch box.
///
/// Starts from `theta + |theta|*eps.R` (projected), then takes `n_steps`
/// sign-gradient steps of size `zeta*|theta|/n_steps`, projecting after each.
/// The nominal parameters and (for the KL objective) the nominal output rows
/// are constants throughout. Returns the attacked parameters and the trace
/// used by [`combined_gradient`]. `sign(0) = 0`, so dead coordinates never
/// move beyond their initial jitter.
pub fn pga_attack<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    batch: &Batch<T>,
    objective: AttackObjective,
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<(ParameterSet<T>, AttackTrace<T>)> {
    cfg.validate()?;
    let input_shape = InputShape::of(&batch.input);
    let graph = attack_graph(arch, &input_shape, objective)?;

    // Auxiliary constant: nominal output rows or one-hot labels.
    let aux = match objective {
        AttackObjective::KlDivergence => {
            crate::models::forward_probs(arch, params, &batch.input)?
        }
        AttackObjective::CrossEntropy => batch.one_hot(arch.classes()),
    };

    // Seed the ascent with proportional jitter, then project.
    let mut jitter = ParameterSet::new();
    let mut attacked = ParameterSet::new();
    let eps = T::from_f64(cfg.eps_init);
    for (name, p) in params.iter() {
        if p.susceptible {
            let r = p.value.map(|_| T::from_f64(rng.normal()));
            let moved = p
                .value
                .zip(&r, |theta, ri| theta + theta.abs() * eps * ri)?;
            attacked.insert(
                name,
                project_box(&moved, &p.value, cfg.zeta_attack)?,
                true,
            );
            jitter.insert(name, r, true);
        } else {
            attacked.insert(name, p.value.clone(), false);
            jitter.insert(name, Tensor::zeros(p.value.shape()), false);
        }
    }

    let mut sign_sum = ParameterSet::new();
    for (name, p) in params.iter() {
        sign_sum.insert(name, Tensor::zeros(p.value.shape()), p.susceptible);
    }

    let steps = bind_input_steps(&batch.input, &graph.input_names);
    let wrt: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.susceptible)
        .map(|(name, _)| format!("{ADV_PREFIX}{name}"))
        .collect();
    let wrt_refs: Vec<&str> = wrt.iter().map(|s| s.as_str()).collect();
    let susceptible: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.susceptible)
        .map(|(name, _)| name.to_string())
        .collect();

    let zeta = T::from_f64(cfg.zeta_attack);
    let step_scale = T::from_f64(cfg.zeta_attack / cfg.n_steps as f64);
    let prefixed: Vec<String> = params
        .iter()
        .map(|(name, _)| format!("{ADV_PREFIX}{name}"))
        .collect();

    for _ in 0..cfg.n_steps {
        let mut bindings: Bindings<'_, T> = Bindings::new();
        for (name, tensor) in &steps {
            bindings.insert(name, tensor);
        }
        bindings.insert(graph.aux_name, &aux);
        for (pref, (name, _)) in prefixed.iter().zip(params.iter()) {
            bindings.insert(pref, attacked.value(name)?);
        }
        let (_, grads) = exec::gradient(&graph.tape, graph.loss, &wrt_refs, &bindings)?;

        for (g, name) in grads.iter().zip(&susceptible) {
            let theta = params.value(name)?;
            let v = g.map(kernels::sign_val);
            {
                let acc = sign_sum.value_mut(name)?;
                for (a, &s) in acc.data_mut().iter_mut().zip(v.data()) {
                    *a += s;
                }
            }
            let current = attacked.value(name)?;
            let stepped = Tensor::from_vec(
                current.shape(),
                current
                    .data()
                    .iter()
                    .zip(v.data())
                    .zip(theta.data())
                    .map(|((&c, &vi), &ti)| c + step_scale * ti.abs() * vi)
                    .collect(),
            )?;
            let mut projected = stepped.zip(theta, |mi, ti| {
                let r = zeta * ti.abs();
                num_traits::clamp(mi, ti - r, ti + r)
            })?;
            std::mem::swap(attacked.value_mut(name)?, &mut projected);
        }
    }

    Ok((attacked, AttackTrace { sign_sum, jitter }))
}

/// Task loss and gradient: batch-mean categorical cross-entropy.
pub struct TaskGradient<T> {
    pub grads: ParameterSet<T>,
    pub loss: f64,
}

/// Gradient of the cross-entropy loss at `params` on one batch.
pub fn task_gradient<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    batch: &Batch<T>,
) -> Result<TaskGradient<T>> {
    let input_shape = InputShape::of(&batch.input);
    let mut tape = Tape::new();
    let param_nodes = append_param_inputs(&mut tape, arch, "")?;
    let data = append_data_inputs(&mut tape, arch, &input_shape)?;
    let handles = append_network(&mut tape, arch, &data, &param_nodes, None, input_shape.batch())?;
    let labels = tape.input("labels_onehot", &[input_shape.batch(), arch.classes()])?;
    let loss = tape.cross_entropy(handles.probs, labels)?;

    let steps = bind_input_steps(&batch.input, &data.names);
    let onehot = batch.one_hot(arch.classes());
    let mut bindings: Bindings<'_, T> = Bindings::new();
    for (name, tensor) in &steps {
        bindings.insert(name, tensor);
    }
    bindings.insert("labels_onehot", &onehot);
    for (name, p) in params.iter() {
        bindings.insert(name, &p.value);
    }

    let names: Vec<&str> = params.iter().map(|(name, _)| name).collect();
    let (eval, grads) = exec::gradient(&tape, loss, &names, &bindings)?;
    let mut out = ParameterSet::new();
    for ((name, p), g) in params.iter().zip(grads) {
        out.insert(name, g, p.susceptible);
    }
    Ok(TaskGradient {
        grads: out,
        loss: eval.value(loss).scalar_value().to_f64(),
    })
}

/// Gradient of the combined objective, differentiated through the attack.
pub struct CombinedGradient<T> {
    pub grads: ParameterSet<T>,
    /// Cross-entropy part of the objective.
    pub loss_nat: f64,
    /// KL part (unweighted).
    pub loss_rob: f64,
}

/// Gradient of `L_nat(theta) + beta * L_rob(theta, theta*)` where `theta*`
/// is a fresh PGA attack on this batch.
///
/// The dependence of `theta*` on `theta` is handled by the diagonal Jacobian
/// `J = 1 + sign(theta)(zeta + eps*R)/n_steps * s` built from the attack
/// trace: the combined per-entry gradient is `d/dtheta + J * d/dtheta*`,
/// both partials coming from one two-copy tape. With `beta_rob = 0` this
/// reduces to the plain task gradient and no attack is run.
pub fn combined_gradient<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    batch: &Batch<T>,
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<CombinedGradient<T>> {
    cfg.validate()?;
    if cfg.beta_rob == 0.0 {
        let task = task_gradient(arch, params, batch)?;
        return Ok(CombinedGradient {
            grads: task.grads,
            loss_nat: task.loss,
            loss_rob: 0.0,
        });
    }

    let (attacked, trace) =
        pga_attack(arch, params, batch, AttackObjective::KlDivergence, cfg, rng)?;

    // Two-copy tape: nominal and attacked networks share the data inputs.
    let input_shape = InputShape::of(&batch.input);
    let mut tape = Tape::new();
    let nom_nodes = append_param_inputs(&mut tape, arch, "")?;
    let adv_nodes = append_param_inputs(&mut tape, arch, ADV_PREFIX)?;
    let data = append_data_inputs(&mut tape, arch, &input_shape)?;
    let nom = append_network(&mut tape, arch, &data, &nom_nodes, None, input_shape.batch())?;
    let adv = append_network(&mut tape, arch, &data, &adv_nodes, None, input_shape.batch())?;
    let labels = tape.input("labels_onehot", &[input_shape.batch(), arch.classes()])?;
    let l_nat = tape.cross_entropy(nom.probs, labels)?;
    let l_rob = tape.kl_div(nom.probs, adv.probs)?;
    let weighted = tape.scale(l_rob, cfg.beta_rob)?;
    let l_gen = tape.add(l_nat, weighted)?;

    let steps = bind_input_steps(&batch.input, &data.names);
    let onehot = batch.one_hot(arch.classes());
    let prefixed: Vec<String> = params
        .iter()
        .map(|(name, _)| format!("{ADV_PREFIX}{name}"))
        .collect();
    let mut bindings: Bindings<'_, T> = Bindings::new();
    for (name, tensor) in &steps {
        bindings.insert(name, tensor);
    }
    bindings.insert("labels_onehot", &onehot);
    for (name, p) in params.iter() {
        bindings.insert(name, &p.value);
    }
    for (pref, (name, _)) in prefixed.iter().zip(params.iter()) {
        bindings.insert(pref, attacked.value(name)?);
    }

    let mut wrt: Vec<&str> = params.iter().map(|(name, _)| name).collect();
    for pref in &prefixed {
        wrt.push(pref.as_str());
    }
    let (eval, grads) = exec::gradient(&tape, l_gen, &wrt, &bindings)?;
    let n_params = params.len();

    let jac_scale = T::from_f64(1.0 / cfg.n_steps as f64);
    let zeta = T::from_f64(cfg.zeta_attack);
    let eps = T::from_f64(cfg.eps_init);
    let mut out = ParameterSet::new();
    for (i, (name, p)) in params.iter().enumerate() {
        let d_nom = &grads[i];
        let d_adv = &grads[n_params + i];
        let combined = if p.susceptible {
            let s = trace.sign_sum.value(name)?;
            let r = trace.jitter.value(name)?;
            let mut data = Vec::with_capacity(d_nom.len());
            for j in 0..d_nom.len() {
                let theta = p.value.data()[j];
                let jac = T::one()
                    + kernels::sign_val(theta) * (zeta + eps * r.data()[j]) * jac_scale
                        * s.data()[j];
                data.push(d_nom.data()[j] + jac * d_adv.data()[j]);
            }
            Tensor::from_vec(p.value.shape(), data)?
        } else {
            // Both copies hold the same value, so the total derivative is
            // the plain sum of the two partials.
            d_nom.zip(d_adv, |a, b| a + b)?
        };
        out.insert(name, combined, p.susceptible);
    }

    Ok(CombinedGradient {
        grads: out,
        loss_nat: eval.value(l_nat).scalar_value().to_f64(),
        loss_rob: eval.value(l_rob).scalar_value().to_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{MlpConfig, ModelInput};

    fn mlp_222() -> Architecture {
        Architecture::Mlp(MlpConfig::new(&[2, 2, 2]))
    }

    /// Two-blob toy batch: class 0 near (1, 0), class 1 near (0, 1).
    fn blob_batch(n_per_class: usize, seed: u64) -> Batch<f64> {
        let mut rng = RngStream::new(seed, 900);
        let n = 2 * n_per_class;
        let mut x = Tensor::zeros(&[n, 2]);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let (cx, cy) = if class == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            x.data_mut()[2 * i] = cx + 0.15 * rng.normal();
            x.data_mut()[2 * i + 1] = cy + 0.15 * rng.normal();
            labels.push(class);
        }
        Batch {
            input: ModelInput::Static(x),
            labels,
        }
    }

    /// A few plain gradient-descent steps so the model is non-trivial.
    fn train_toy_mlp(arch: &Architecture, batch: &Batch<f64>, steps: usize) -> ParameterSet<f64> {
        let mut rng = RngStream::new(42, 0);
        let mut params = arch.init_params::<f64>(&mut rng);
        for _ in 0..steps {
            let task = task_gradient(arch, &params, batch).unwrap();
            for (name, p) in params.iter_mut() {
                let g = task.grads.value(name).unwrap();
                for (w, &gi) in p.value.data_mut().iter_mut().zip(g.data()) {
                    *w -= 0.5 * gi;
                }
            }
        }
        params
    }

    #[test]
    fn project_box_matches_hand_values() {
        let theta = Tensor::<f64>::from_vec(&[3], vec![2.0, 2.0, 0.0]).unwrap();
        let m = Tensor::<f64>::from_vec(&[3], vec![2.5, 2.05, 7.0]).unwrap();
        let p = project_box(&m, &theta, 0.1).unwrap();
        assert!((p.data()[0] - 2.2).abs() < 1e-15, "clamped to the rim");
        assert_eq!(p.data()[1], 2.05, "interior points unchanged");
        assert_eq!(p.data()[2], 0.0, "zero weight has a zero-width box");
        assert!(project_box(&m, &theta, -0.5).is_err());
    }

    #[test]
    fn robustness_loss_is_zero_on_identical_rows_and_ln2_on_the_half_split() {
        let p = Tensor::<f64>::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let q = Tensor::<f64>::from_vec(&[1, 2], vec![0.5, 0.5]).unwrap();
        assert_eq!(robustness_loss(&p, &p).unwrap(), 0.0);
        let kl = robustness_loss(&p, &q).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-9, "{kl}");
        let bad = Tensor::<f64>::zeros(&[2, 2]);
        assert!(robustness_loss(&p, &bad).is_err());
    }

    #[test]
    fn robustness_loss_matches_direct_summation_on_random_rows() {
        let mut rng = RngStream::new(3, 1);
        let make_rows = |rng: &mut RngStream| {
            let mut t = Tensor::<f64>::zeros(&[4, 5]);
            for row in 0..4 {
                let mut sum = 0.0;
                let mut vals = [0.0; 5];
                for v in &mut vals {
                    *v = rng.uniform() + 1e-3;
                    sum += *v;
                }
                for (c, v) in vals.iter().enumerate() {
                    t.data_mut()[row * 5 + c] = v / sum;
                }
            }
            t
        };
        let p = make_rows(&mut rng);
        let q = make_rows(&mut rng);
        let got = robustness_loss(&p, &q).unwrap();
        let mut expected = 0.0;
        for row in 0..4 {
            for c in 0..5 {
                let (pi, qi) = (p.data()[row * 5 + c], q.data()[row * 5 + c]);
                expected += pi * (pi / qi).ln();
            }
        }
        expected /= 4.0;
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn attacked_parameters_stay_inside_the_box() {
        let arch = mlp_222();
        let batch = blob_batch(8, 1);
        let params = train_toy_mlp(&arch, &batch, 30);
        let cfg = AttackConfig {
            zeta_attack: 0.1,
            n_steps: 10,
            eps_init: 0.01,
            beta_rob: 0.25,
        };
        let mut rng = RngStream::new(5, 0);
        let (attacked, trace) =
            pga_attack(&arch, &params, &batch, AttackObjective::KlDivergence, &cfg, &mut rng)
                .unwrap();
        for (name, p) in params.iter() {
            let a = attacked.value(name).unwrap();
            for (&ai, &ti) in a.data().iter().zip(p.value.data()) {
                assert!(
                    (ai - ti).abs() <= 0.1 * ti.abs() + 1e-15,
                    "{name}: {ai} vs {ti}"
                );
            }
            // Sign sums are integers within the step budget.
            let s = trace.sign_sum.value(name).unwrap();
            for &si in s.data() {
                assert!(si.fract() == 0.0 && si.abs() <= 10.0, "sign sum {si}");
            }
        }
    }

    #[test]
    fn constant_model_yields_projected_jitter_and_zero_sign_sums() {
        // Zero readout layer: output is constant in every parameter, so all
        // attack gradients vanish and only the initial jitter remains.
        let arch = mlp_222();
        let mut params = arch.init_params::<f64>(&mut RngStream::new(2, 0));
        params.value_mut("dense1.w").unwrap().data_mut().fill(0.0);
        params.value_mut("dense1.b").unwrap().data_mut().fill(0.0);
        let batch = blob_batch(4, 2);
        let cfg = AttackConfig {
            zeta_attack: 0.2,
            n_steps: 5,
            eps_init: 0.05,
            beta_rob: 0.25,
        };
        let mut rng = RngStream::new(8, 0);
        let (attacked, trace) =
            pga_attack(&arch, &params, &batch, AttackObjective::KlDivergence, &cfg, &mut rng)
                .unwrap();

        // Re-derive the projected jitter from the recorded draw.
        for (name, p) in params.iter() {
            let r = trace.jitter.value(name).unwrap();
            let expected = p
                .value
                .zip(r, |t, ri| {
                    let moved = t + t.abs() * 0.05 * ri;
                    num_traits::clamp(moved, t - 0.2 * t.abs(), t + 0.2 * t.abs())
                })
                .unwrap();
            assert_eq!(attacked.value(name).unwrap().data(), expected.data());
            assert!(trace
                .sign_sum
                .value(name)
                .unwrap()
                .data()
                .iter()
                .all(|&s| s == 0.0));
        }
    }

    #[test]
    fn attack_beats_the_95th_percentile_of_random_box_samples() {
        let arch = mlp_222();
        let batch = blob_batch(16, 3);
        let params = train_toy_mlp(&arch, &batch, 60);
        let nominal = crate::models::forward_probs(&arch, &params, &batch.input).unwrap();

        let cfg = AttackConfig {
            zeta_attack: 0.1,
            n_steps: 10,
            eps_init: 0.01,
            beta_rob: 0.25,
        };
        let mut rng = RngStream::new(11, 0);
        let (attacked, _) =
            pga_attack(&arch, &params, &batch, AttackObjective::KlDivergence, &cfg, &mut rng)
                .unwrap();
        let p_att = crate::models::forward_probs(&arch, &attacked, &batch.input).unwrap();
        let kl_attack = robustness_loss(&nominal, &p_att).unwrap();

        let mut kls = Vec::with_capacity(1000);
        for i in 0..1000 {
            let mut draw_rng = RngStream::new(900, i);
            let sampled =
                crate::mismatch::sample_mismatch(&params, 0.1, &mut draw_rng).unwrap();
            // Random proportional samples can exceed the box; clamp them in.
            let mut boxed = ParameterSet::new();
            for (name, p) in params.iter() {
                let s = sampled.value(name).unwrap();
                boxed.insert(name, project_box(s, &p.value, 0.1).unwrap(), p.susceptible);
            }
            let probs = crate::models::forward_probs(&arch, &boxed, &batch.input).unwrap();
            kls.push(robustness_loss(&nominal, &probs).unwrap());
        }
        kls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p95 = kls[949];
        assert!(
            kl_attack >= p95,
            "attack KL {kl_attack} below 95th percentile {p95}"
        );
    }

    #[test]
    fn attack_strength_grows_with_the_box_radius() {
        let arch = mlp_222();
        let batch = blob_batch(12, 4);
        let params = train_toy_mlp(&arch, &batch, 60);
        let nominal = crate::models::forward_probs(&arch, &params, &batch.input).unwrap();

        let mut medians = Vec::new();
        for &zeta in &[0.05, 0.1, 0.2] {
            let mut kls = Vec::new();
            for seed in 0..5 {
                let cfg = AttackConfig {
                    zeta_attack: zeta,
                    n_steps: 10,
                    eps_init: 0.01,
                    beta_rob: 0.25,
                };
                let mut rng = RngStream::new(100 + seed, 0);
                let (attacked, _) = pga_attack(
                    &arch,
                    &params,
                    &batch,
                    AttackObjective::KlDivergence,
                    &cfg,
                    &mut rng,
                )
                .unwrap();
                let probs =
                    crate::models::forward_probs(&arch, &attacked, &batch.input).unwrap();
                kls.push(robustness_loss(&nominal, &probs).unwrap());
            }
            kls.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(kls[2]);
        }
        assert!(
            medians[0] <= medians[1] && medians[1] <= medians[2],
            "medians not monotone: {medians:?}"
        );
    }

    #[test]
    fn zero_beta_reduces_to_the_task_gradient() {
        let arch = mlp_222();
        let batch = blob_batch(6, 5);
        let params = train_toy_mlp(&arch, &batch, 10);
        let cfg = AttackConfig {
            beta_rob: 0.0,
            ..AttackConfig::default()
        };
        let mut rng = RngStream::new(1, 1);
        let combined = combined_gradient(&arch, &params, &batch, &cfg, &mut rng).unwrap();
        let task = task_gradient(&arch, &params, &batch).unwrap();
        for (name, _) in params.iter() {
            assert_eq!(
                combined.grads.value(name).unwrap().data(),
                task.grads.value(name).unwrap().data(),
                "{name}"
            );
        }
        assert_eq!(combined.loss_rob, 0.0);
    }

    #[test]
    fn combined_gradient_matches_independent_recomposition() {
        // Recompose grad_nominal + J * grad_attacked by hand: re-run the
        // identical attack (same stream), rebuild the two-copy loss on a
        // fresh tape, and apply the Jacobian formula to the trace.
        let arch = mlp_222();
        let batch = blob_batch(6, 6);
        let params = train_toy_mlp(&arch, &batch, 20);
        let cfg = AttackConfig {
            zeta_attack: 0.1,
            n_steps: 7,
            eps_init: 0.02,
            beta_rob: 0.4,
        };
        let combined =
            combined_gradient(&arch, &params, &batch, &cfg, &mut RngStream::new(21, 3)).unwrap();

        let (attacked, trace) = pga_attack(
            &arch,
            &params,
            &batch,
            AttackObjective::KlDivergence,
            &cfg,
            &mut RngStream::new(21, 3),
        )
        .unwrap();

        let input_shape = InputShape::of(&batch.input);
        let mut tape = Tape::new();
        let nom_nodes = append_param_inputs(&mut tape, &arch, "").unwrap();
        let adv_nodes = append_param_inputs(&mut tape, &arch, "atk::").unwrap();
        let data = append_data_inputs(&mut tape, &arch, &input_shape).unwrap();
        let nom = append_network(&mut tape, &arch, &data, &nom_nodes, None, 12).unwrap();
        let adv = append_network(&mut tape, &arch, &data, &adv_nodes, None, 12).unwrap();
        let labels = tape.input("labels_onehot", &[12, 2]).unwrap();
        let l_nat = tape.cross_entropy(nom.probs, labels).unwrap();
        let l_rob = tape.kl_div(nom.probs, adv.probs).unwrap();
        let weighted = tape.scale(l_rob, cfg.beta_rob).unwrap();
        let l_gen = tape.add(l_nat, weighted).unwrap();

        let steps = bind_input_steps(&batch.input, &data.names);
        let onehot = batch.one_hot(2);
        let prefixed: Vec<String> = params
            .iter()
            .map(|(name, _)| format!("atk::{name}"))
            .collect();
        let mut bindings: Bindings<'_, f64> = Bindings::new();
        for (name, tensor) in &steps {
            bindings.insert(name, tensor);
        }
        bindings.insert("labels_onehot", &onehot);
        for (name, p) in params.iter() {
            bindings.insert(name, &p.value);
        }
        for (pref, (name, _)) in prefixed.iter().zip(params.iter()) {
            bindings.insert(pref, attacked.value(name).unwrap());
        }
        let mut wrt: Vec<&str> = params.iter().map(|(name, _)| name).collect();
        for pref in &prefixed {
            wrt.push(pref.as_str());
        }
        let (_, grads) = exec::gradient(&tape, l_gen, &wrt, &bindings).unwrap();

        let n = params.len();
        for (i, (name, p)) in params.iter().enumerate() {
            let s = trace.sign_sum.value(name).unwrap();
            let r = trace.jitter.value(name).unwrap();
            let got = combined.grads.value(name).unwrap();
            for j in 0..p.value.len() {
                let theta = p.value.data()[j];
                let jac = 1.0
                    + kernels::sign_val(theta) * (0.1 + 0.02 * r.data()[j]) / 7.0 * s.data()[j];
                let expected = grads[i].data()[j] + jac * grads[n + i].data()[j];
                assert!(
                    (got.data()[j] - expected).abs() < 1e-12,
                    "{name}[{j}]: {} vs {expected}",
                    got.data()[j]
                );
            }
        }
    }

    #[test]
    fn jacobian_entries_stay_inside_the_stated_band() {
        let arch = mlp_222();
        let batch = blob_batch(6, 7);
        let params = train_toy_mlp(&arch, &batch, 20);
        let cfg = AttackConfig::default();
        let mut rng = RngStream::new(31, 0);
        let (_, trace) =
            pga_attack(&arch, &params, &batch, AttackObjective::KlDivergence, &cfg, &mut rng)
                .unwrap();
        let mut max_r: f64 = 0.0;
        for (_, p) in trace.jitter.iter() {
            for &ri in p.value.data() {
                max_r = max_r.max(ri.abs());
            }
        }
        let band = cfg.zeta_attack + cfg.eps_init * max_r;
        for (name, p) in params.iter() {
            let s = trace.sign_sum.value(name).unwrap();
            let r = trace.jitter.value(name).unwrap();
            for j in 0..p.value.len() {
                let jac = 1.0
                    + kernels::sign_val(p.value.data()[j])
                        * (cfg.zeta_attack + cfg.eps_init * r.data()[j])
                        / cfg.n_steps as f64
                        * s.data()[j];
                assert!(
                    jac >= 1.0 - band - 1e-12 && jac <= 1.0 + band + 1e-12,
                    "{name}[{j}] J = {jac} outside band {band}"
                );
            }
        }
    }
}
