//! Adversarial attacks, Lipschitz bounds, average encoding fidelity and
//! quantum-noise accuracy sweeps.

mod attacks;
mod fidelity;
mod lipschitz;
mod sweep;

pub use attacks::{
    adversarial_success_rate, apgd, attack_split, evaluate_attack, fgsm, input_gradient, mim,
    pgd, AdvResult,
};
pub use fidelity::average_fidelity;
pub use lipschitz::{lipschitz_analytic, lipschitz_empirical, lipschitz_formula, GradNorm};
pub use sweep::{noise_sweep, NoisePoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error("clean and adversarial sets differ in length: {clean} vs {adv}")]
    UnpairedSets { clean: usize, adv: usize },
    #[error("no correctly classified clean samples; success rate undefined")]
    EmptyEligibleSet,
    #[error("model has no angle-encoded input path; use the empirical bound")]
    NoAngleEncodingPath,
    #[error("empty sample set")]
    EmptySamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Fgsm,
    Pgd,
    Apgd,
    Mim,
}

impl AttackMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Pgd => "pgd",
            AttackMethod::Apgd => "apgd",
            AttackMethod::Mim => "mim",
        }
    }
}

fn default_steps() -> usize {
    100
}

fn default_momentum() -> f64 {
    0.75
}

fn default_rho() -> f64 {
    0.75
}

/// One attack configuration. `step_size <= 0` selects the per-method default
/// (`2.5 eps / steps` for PGD, `eps / steps` for MIM). The initial APGD step
/// is `2 eps` unless `apgd_eta0_eps_over_n` selects the `eps / steps`
/// variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub epsilon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub step_size: f64,
    #[serde(default = "default_momentum")]
    pub momentum_alpha: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub apgd_eta0_eps_over_n: bool,
}

impl AttackConfig {
    pub fn new(method: AttackMethod, epsilon: f64) -> Self {
        Self {
            method,
            epsilon,
            steps: default_steps(),
            step_size: 0.0,
            momentum_alpha: default_momentum(),
            rho: default_rho(),
            apgd_eta0_eps_over_n: false,
        }
    }

    pub(crate) fn effective_step(&self) -> f64 {
        if self.step_size > 0.0 {
            return self.step_size;
        }
        match self.method {
            AttackMethod::Pgd => 2.5 * self.epsilon / self.steps.max(1) as f64,
            AttackMethod::Mim => self.epsilon / self.steps.max(1) as f64,
            _ => self.epsilon,
        }
    }
}
