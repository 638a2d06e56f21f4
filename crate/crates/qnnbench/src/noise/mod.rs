//! Quantum noise: Kraus channels, density-matrix evolution, stochastic
//! trajectories, readout bit-flips and finite-shot estimation.
//!
//! Registers up to 10 qubits evolve as density matrices (exact); wider
//! registers fall back to trajectory averaging with per-trajectory derived
//! seeds, so results do not depend on worker count.

mod channels;
mod density;
mod noisy;

pub use channels::{apply_channel_trajectory, make_channel};
pub use density::DensityMatrix;
pub use noisy::{dm_run_program, noisy_expectation, trajectory_run_program};

use crate::sim::C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width at which evolution switches from exact density matrices to
/// trajectory sampling.
pub const DM_MAX_QUBITS: usize = 10;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("probability {p} outside [0, 1]")]
    InvalidProbability { p: f64 },
    #[error("wire {wire} out of range for {n_qubits} qubits")]
    WireOutOfRange { wire: usize, n_qubits: usize },
    #[error("readout flips / shot sampling require a Z-diagonal observable")]
    RequiresDiagonalObservable,
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}

/// Single-qubit channel kinds named in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    BitFlip,
    PhaseFlip,
    PhaseDamping,
    AmplitudeDamping,
    Depolarizing,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 5] = [
        ChannelKind::BitFlip,
        ChannelKind::PhaseFlip,
        ChannelKind::PhaseDamping,
        ChannelKind::AmplitudeDamping,
        ChannelKind::Depolarizing,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::BitFlip => "bit_flip",
            ChannelKind::PhaseFlip => "phase_flip",
            ChannelKind::PhaseDamping => "phase_damping",
            ChannelKind::AmplitudeDamping => "amplitude_damping",
            ChannelKind::Depolarizing => "depolarizing",
        }
    }
}

/// Row-major 2x2 complex matrix.
pub type Mat2 = [C64; 4];

/// A single-qubit noise process in Kraus form. The depolarizing channel uses
/// the total-weight convention `rho -> (1-p) rho + p I/2`; the convention is
/// recorded with every result that depends on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ChannelSpec", into = "ChannelSpec")]
pub struct KrausChannel {
    pub kind: ChannelKind,
    pub p: f64,
    pub kraus_ops: Vec<Mat2>,
}

/// Flat serialized form of a channel: kind plus probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub p: f64,
}

impl TryFrom<ChannelSpec> for KrausChannel {
    type Error = NoiseError;
    fn try_from(s: ChannelSpec) -> Result<Self, NoiseError> {
        make_channel(s.kind, s.p)
    }
}

impl From<KrausChannel> for ChannelSpec {
    fn from(c: KrausChannel) -> Self {
        ChannelSpec {
            kind: c.kind,
            p: c.p,
        }
    }
}

impl KrausChannel {
    /// `max_ij |(sum_k K^dag K - I)_ij|`, which must vanish for a
    /// trace-preserving channel.
    pub fn completeness_defect(&self) -> f64 {
        let mut acc = [C64::new(0.0, 0.0); 4];
        for k in &self.kraus_ops {
            // K^dag K
            acc[0] += k[0].conj() * k[0] + k[2].conj() * k[2];
            acc[1] += k[0].conj() * k[1] + k[2].conj() * k[3];
            acc[2] += k[1].conj() * k[0] + k[3].conj() * k[2];
            acc[3] += k[1].conj() * k[1] + k[3].conj() * k[3];
        }
        let id = [1.0, 0.0, 0.0, 1.0];
        acc.iter()
            .zip(id)
            .map(|(a, e)| (a - C64::new(e, 0.0)).norm())
            .fold(0.0, f64::max)
    }
}

/// Where a channel is inserted while running a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InsertAfter {
    EveryGate,
    #[default]
    EveryLayer,
    EncodingOnly,
}

/// Expectation estimation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Shots {
    #[default]
    Exact,
    Count(u32),
}

fn default_trajectories() -> u32 {
    1000
}

/// Full noise configuration for one evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub channel: Option<KrausChannel>,
    #[serde(default)]
    pub insert_after: InsertAfter,
    #[serde(default)]
    pub readout_flip_p: f64,
    #[serde(default)]
    pub shots: Shots,
    /// Trajectory count used above [`DM_MAX_QUBITS`] when shots are exact.
    #[serde(default = "default_trajectories")]
    pub n_trajectories: u32,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            channel: None,
            insert_after: InsertAfter::EveryLayer,
            readout_flip_p: 0.0,
            shots: Shots::Exact,
            n_trajectories: default_trajectories(),
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(0.0..=1.0).contains(&self.readout_flip_p) {
            return Err(NoiseError::InvalidProbability {
                p: self.readout_flip_p,
            });
        }
        Ok(())
    }

    pub fn is_trivial(&self) -> bool {
        self.channel.is_none() && self.readout_flip_p == 0.0 && self.shots == Shots::Exact
    }
}
