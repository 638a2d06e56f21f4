//! Differentiable statevector simulation of parameterized quantum circuits,
//! three hybrid quantum-classical image classifiers built on top of it
//! (a convolutional, a recurrent and a transformer architecture), and a
//! benchmark harness covering training, generalization, adversarial attacks
//! and quantum-noise sweeps.
//!
//! The crate is organized along the pipeline:
//!
//! - [`sim`] — dense statevector kernels, exact adjoint and parameter-shift
//!   gradients, and a dense-matrix test oracle.
//! - [`noise`] — Kraus channels, density-matrix evolution, stochastic
//!   trajectories, readout noise and finite-shot estimation.
//! - [`data`] — MNIST/CIFAR-10 ingestion, binary class splits, per-model
//!   preprocessing and classical-to-quantum encodings.
//! - [`models`] — the three classifiers as differentiable forward functions.
//! - [`train`] — losses, Adam with cosine decay, training loops and the
//!   generalization-gap experiment.
//! - [`robust`] — FGSM/PGD/APGD/MIM attacks, Lipschitz bounds, average
//!   fidelity and noise sweeps.
//! - [`harness`] — experiment configuration, scenario orchestration and the
//!   append-only result store.

pub mod data;
pub mod harness;
pub mod models;
pub mod noise;
pub mod robust;
pub mod sim;
pub mod train;
pub mod util;

/// Code revision baked in at build time (short git hash or "unknown").
pub const REVISION: &str = env!("QNNBENCH_REVISION");
