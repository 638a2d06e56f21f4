//! Kraus operator sets and stochastic (trajectory) channel application.

use super::{ChannelKind, KrausChannel, Mat2, NoiseError};
use crate::sim::{C64, Statevector};
use rand::Rng;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

const ZERO: C64 = C64::new(0.0, 0.0);

/// Build the Kraus set for a channel kind at probability `p`.
///
/// - BitFlip: `{sqrt(1-p) I, sqrt(p) X}`
/// - PhaseFlip: `{sqrt(1-p) I, sqrt(p) Z}`
/// - PhaseDamping: `{[[1,0],[0,sqrt(1-p)]], [[0,0],[0,sqrt(p)]]}`
/// - AmplitudeDamping: `{[[1,0],[0,sqrt(1-p)]], [[0,sqrt(p)],[0,0]]}`
/// - Depolarizing: `{sqrt(1-3p/4) I, sqrt(p/4) X, sqrt(p/4) Y, sqrt(p/4) Z}`
pub fn make_channel(kind: ChannelKind, p: f64) -> Result<KrausChannel, NoiseError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(NoiseError::InvalidProbability { p });
    }
    let kraus_ops: Vec<Mat2> = match kind {
        ChannelKind::BitFlip => {
            let a = (1.0 - p).sqrt();
            let b = p.sqrt();
            let mut ops = vec![[c(a), ZERO, ZERO, c(a)]];
            if p > 0.0 {
                ops.push([ZERO, c(b), c(b), ZERO]);
            }
            ops
        }
        ChannelKind::PhaseFlip => {
            let a = (1.0 - p).sqrt();
            let b = p.sqrt();
            let mut ops = vec![[c(a), ZERO, ZERO, c(a)]];
            if p > 0.0 {
                ops.push([c(b), ZERO, ZERO, c(-b)]);
            }
            ops
        }
        ChannelKind::PhaseDamping => {
            let mut ops = vec![[c(1.0), ZERO, ZERO, c((1.0 - p).sqrt())]];
            if p > 0.0 {
                ops.push([ZERO, ZERO, ZERO, c(p.sqrt())]);
            }
            ops
        }
        ChannelKind::AmplitudeDamping => {
            let mut ops = vec![[c(1.0), ZERO, ZERO, c((1.0 - p).sqrt())]];
            if p > 0.0 {
                ops.push([ZERO, c(p.sqrt()), ZERO, ZERO]);
            }
            ops
        }
        ChannelKind::Depolarizing => {
            let a = (1.0 - 3.0 * p / 4.0).sqrt();
            let b = (p / 4.0).sqrt();
            let mut ops = vec![[c(a), ZERO, ZERO, c(a)]];
            if p > 0.0 {
                ops.push([ZERO, c(b), c(b), ZERO]);
                ops.push([ZERO, C64::new(0.0, -b), C64::new(0.0, b), ZERO]);
                ops.push([c(b), ZERO, ZERO, c(-b)]);
            }
            ops
        }
    };
    Ok(KrausChannel { kind, p, kraus_ops })
}

/// Weight `||K |psi>||^2` of one Kraus branch without materializing it.
fn branch_weight(amps: &[C64], n: usize, wire: usize, k: &Mat2) -> f64 {
    let stride = 1usize << (n - 1 - wire);
    let mut w = 0.0;
    let mut base = 0;
    while base < amps.len() {
        for i in base..base + stride {
            let a0 = amps[i];
            let a1 = amps[i + stride];
            w += (k[0] * a0 + k[1] * a1).norm_sqr();
            w += (k[2] * a0 + k[3] * a1).norm_sqr();
        }
        base += stride << 1;
    }
    w
}

fn apply_mat2(amps: &mut [C64], n: usize, wire: usize, k: &Mat2) {
    let stride = 1usize << (n - 1 - wire);
    let mut base = 0;
    while base < amps.len() {
        for i in base..base + stride {
            let a0 = amps[i];
            let a1 = amps[i + stride];
            amps[i] = k[0] * a0 + k[1] * a1;
            amps[i + stride] = k[2] * a0 + k[3] * a1;
        }
        base += stride << 1;
    }
}

/// Select one Kraus branch with probability `||K_k |psi>||^2` and renormalize.
/// Averaging expectations over trajectories converges to the density-matrix
/// result.
pub fn apply_channel_trajectory(
    state: &Statevector,
    channel: &KrausChannel,
    wire: usize,
    rng: &mut impl Rng,
) -> Result<Statevector, NoiseError> {
    let n = state.n_qubits();
    if wire >= n {
        return Err(NoiseError::WireOutOfRange { wire, n_qubits: n });
    }
    let mut out = state.clone();
    apply_channel_trajectory_inplace(out.amps_mut(), n, channel, wire, rng);
    Ok(out)
}

pub(crate) fn apply_channel_trajectory_inplace(
    amps: &mut [C64],
    n: usize,
    channel: &KrausChannel,
    wire: usize,
    rng: &mut impl Rng,
) {
    if channel.kraus_ops.len() == 1 {
        apply_mat2(amps, n, wire, &channel.kraus_ops[0]);
        return;
    }
    let weights: Vec<f64> = channel
        .kraus_ops
        .iter()
        .map(|k| branch_weight(amps, n, wire, k))
        .collect();
    let total: f64 = weights.iter().sum();
    let r: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            pick = i;
            break;
        }
    }
    apply_mat2(amps, n, wire, &channel.kraus_ops[pick]);
    let inv = 1.0 / weights[pick].sqrt();
    for a in amps.iter_mut() {
        *a *= inv;
    }
}
