//! Adaptive leaky integrate-and-fire recurrent network.
//!
//! Neurons follow discretised adaptive-LIF dynamics: membrane potentials
//! leak toward zero with time constant `tau_mem`, spiking raises an adaptive
//! threshold component with time constant `tau_ada`, spikes reset the
//! membrane by subtracting the threshold, and a refractory counter silences
//! a neuron for `ceil(t_refr / dt)` steps after it fires. Class scores read
//! out the time-averaged spike train through a dense layer.
//!
//! [`srnn_step`] is the concrete single-step reference; the differentiable
//! and interval forwards are composed from the same formulas in
//! [`super::dynamics`] and are cross-checked against this function.

use super::{InitKind, ParamSpec, ParameterSet};
use crate::diffcore::kernels;
use crate::diffcore::tensor::{Real, Tensor};
use crate::error::Result;
use serde::{Deserialize, Serialize};

/// Sizes, time constants, and spiking parameters of the recurrent network.
///
/// Times are in seconds. `input_gain` scales raw input currents before the
/// input weights; it is part of the configuration so experiments record it
/// explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrnnConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Steps a static input is repeated for; sequences carry their own length.
    pub n_steps: usize,
    pub dt: f64,
    pub tau_mem: f64,
    pub tau_ada: f64,
    /// Baseline threshold.
    pub b0: f64,
    /// Scale of the adaptive threshold component.
    pub beta_ada: f64,
    /// Refractory period.
    pub t_refr: f64,
    /// Surrogate-gradient dampening factor.
    pub dampening: f64,
    pub input_gain: f64,
}

impl SrnnConfig {
    /// Membrane decay `e^(-dt/tau_mem)`, in (0, 1).
    pub fn rho_v(&self) -> f64 {
        (-self.dt / self.tau_mem).exp()
    }

    /// Adaptation decay `e^(-dt/tau_ada)`, in (0, 1).
    pub fn rho_b(&self) -> f64 {
        (-self.dt / self.tau_ada).exp()
    }

    /// Steps a neuron stays silent after spiking.
    pub fn refr_steps(&self) -> usize {
        (self.t_refr / self.dt).ceil() as usize
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        vec![
            ParamSpec {
                name: "w_in".to_string(),
                shape: vec![self.input_dim, self.hidden],
                susceptible: true,
                init: InitKind::GlorotNormal,
                fans: (self.input_dim, self.hidden),
            },
            ParamSpec {
                // The recurrent drive carries a 1/dt factor (spikes enter as
                // currents), so the kernel is shrunk by dt at init to keep
                // the effective recurrent weights Glorot-scaled.
                name: "w_rec".to_string(),
                shape: vec![self.hidden, self.hidden],
                susceptible: true,
                init: InitKind::GlorotNormalScaled(self.dt),
                fans: (self.hidden, self.hidden),
            },
            ParamSpec {
                name: "w_out".to_string(),
                shape: vec![self.hidden, self.classes],
                susceptible: true,
                init: InitKind::GlorotNormal,
                fans: (self.hidden, self.classes),
            },
            ParamSpec {
                name: "b_out".to_string(),
                shape: vec![self.classes],
                susceptible: true,
                init: InitKind::Zeros,
                fans: (self.hidden, self.classes),
            },
        ]
    }
}

impl Default for SrnnConfig {
    /// Six-class readout over 64 input channels with 224 hidden neurons:
    /// roughly 65k parameters. Standard adaptive-LIF time constants.
    fn default() -> Self {
        SrnnConfig {
            input_dim: 64,
            hidden: 224,
            classes: 6,
            n_steps: 50,
            dt: 1e-3,
            tau_mem: 20e-3,
            tau_ada: 100e-3,
            b0: 1.0,
            beta_ada: 1.8,
            t_refr: 2e-3,
            dampening: 0.3,
            input_gain: 1.0,
        }
    }
}

/// Per-neuron state carried between steps; all arrays are `[batch, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrnnState<T> {
    /// Membrane potentials.
    pub v: Tensor<T>,
    /// Adaptation variables (non-negative under the dynamics).
    pub b: Tensor<T>,
    /// Remaining refractory steps, stored as real-valued counters.
    pub refr: Tensor<T>,
    /// Spikes emitted at the current step (exactly 0 or 1).
    pub o: Tensor<T>,
}

impl<T: Real> SrnnState<T> {
    /// Sequence-start state: everything at zero.
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        SrnnState {
            v: Tensor::zeros(&[batch, hidden]),
            b: Tensor::zeros(&[batch, hidden]),
            refr: Tensor::zeros(&[batch, hidden]),
            o: Tensor::zeros(&[batch, hidden]),
        }
    }
}

/// Advance the network by one step on a `[batch, input_dim]` current.
///
/// The update order is: threshold from the current adaptation, spikes gated
/// by the refractory counter, adaptation update, reset current, membrane
/// update from input/recurrent drive, refractory restart for neurons that
/// fired. The emitted spikes are returned in the new state's `o`.
pub fn srnn_step<T: Real>(
    cfg: &SrnnConfig,
    params: &ParameterSet<T>,
    state: &SrnnState<T>,
    input: &Tensor<T>,
) -> Result<SrnnState<T>> {
    let w_in = params.value("w_in")?;
    let w_rec = params.value("w_rec")?;
    let (rho_v, rho_b) = (T::from_f64(cfg.rho_v()), T::from_f64(cfg.rho_b()));
    let dt = T::from_f64(cfg.dt);
    let (b0, beta) = (T::from_f64(cfg.b0), T::from_f64(cfg.beta_ada));
    let refr_restart = T::from_f64(cfg.refr_steps() as f64);
    let gain = T::from_f64(cfg.input_gain);
    let one = T::one();

    let n = state.v.shape()[0];
    let h = state.v.shape()[1];

    // Threshold and gated spikes from the incoming state.
    let mut big_b = Tensor::zeros(&[n, h]);
    let mut o = Tensor::zeros(&[n, h]);
    for i in 0..n * h {
        let bb = b0 + beta * state.b.data()[i];
        big_b.data_mut()[i] = bb;
        let gate = one - num_traits::clamp(state.refr.data()[i], T::zero(), one);
        let fired = if state.v.data()[i] > bb { one } else { T::zero() };
        o.data_mut()[i] = fired * gate;
    }

    // Drives: scaled input through w_in, spikes-as-currents through w_rec.
    let scaled_in = input.map(|x| gain * x);
    let in_drive = kernels::matmul(&scaled_in, w_in);
    let rate = o.map(|s| s / dt);
    let rec_drive = kernels::matmul(&rate, w_rec);

    let mut next = SrnnState::zeros(n, h);
    for i in 0..n * h {
        let oi = o.data()[i];
        next.b.data_mut()[i] = rho_b * state.b.data()[i] + (one - rho_b) * oi / dt;
        let i_reset = oi * big_b.data()[i];
        let drive = in_drive.data()[i] + rec_drive.data()[i];
        next.v.data_mut()[i] = rho_v * state.v.data()[i] + (one - rho_v) * drive - i_reset;
        let counted_down = num_traits::clamp(
            state.refr.data()[i] - one,
            T::zero(),
            T::infinity(),
        );
        next.refr.data_mut()[i] = counted_down + oi * refr_restart;
    }
    next.o = o;
    Ok(next)
}

/// Elementwise surrogate pseudo-derivative `d * max(1 - |(v - b)/b|, 0)`.
pub fn surrogate_spike_backward<T: Real>(
    v: &Tensor<T>,
    b: &Tensor<T>,
    dampening: f64,
) -> Tensor<T> {
    v.zip(b, |vi, bi| kernels::surrogate_val(vi, bi, T::from_f64(dampening)))
        .expect("surrogate operands share a shape")
}
