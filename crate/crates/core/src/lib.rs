//! Algorithms for training small neural networks that stay accurate when their
//! weights are perturbed, as happens on analog accelerators where every stored
//! parameter suffers multiplicative "device mismatch" noise.
//!
//! The crate is organised around a handful of cooperating modules:
//!
//! * [`diffcore`] — a minimal reverse-mode automatic-differentiation engine
//!   over dense arrays, with a deterministic counter-based random stream.
//! * [`models`] — three reference architectures (MLP, CNN, adaptive spiking
//!   RNN) expressed over an abstract numeric domain so the same network
//!   definition drives both concrete evaluation and interval bounds.
//! * [`mismatch`] — the multiplicative perturbation model: each parameter is
//!   resampled as `N(theta, (zeta*|theta|)^2)`.
//! * [`adversary`] — a projected-gradient ascent attack in weight space that
//!   searches the mismatch box for the worst parameter corner, plus the
//!   diagonal-Jacobian shortcut used to differentiate through the attack.
//! * [`training`] — Adam-based training loops for the robustness methods
//!   (standard, adversarial KL regularisation, forward noise, dropout, AWP).
//! * [`verify`] — interval bound propagation over the same architectures,
//!   yielding provable robustness certificates for weight boxes.
//! * [`analysis`] — Monte-Carlo mismatch sweeps, task-level attacks, weight
//!   loss-landscape sections, and membrane-potential statistics.
//!
//! Everything is generic over [`diffcore::Real`] (`f32` or `f64`): production
//! runs use `f32`, numerical test oracles use `f64`.

pub mod adversary;
pub mod analysis;
pub mod diffcore;
pub mod error;
pub mod gradcheck;
pub mod mismatch;
pub mod models;
pub mod report;
pub mod training;
pub mod verify;

pub use adversary::{AttackConfig, AttackObjective};
pub use diffcore::rng::RngStream;
pub use diffcore::tensor::{Precision, Real, Tensor};
pub use error::{Error, Result};
pub use gradcheck::GradcheckReport;
pub use models::{
    Architecture, Batch, CnnConfig, Dataset, MlpConfig, ModelInput, ParameterSet, Splits,
    SrnnConfig,
};
pub use report::RunReport;
pub use training::{TrainConfig, TrainMethod};
