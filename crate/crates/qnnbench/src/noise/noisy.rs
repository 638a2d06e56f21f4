//! Program evaluation under channel noise, readout flips and finite shots.
//!
//! Two evolution paths share one walk over the instruction stream: the exact
//! density-matrix path (small registers) and the stochastic trajectory path.
//! The `ResetTo` branch baked into a program is only meaningful for the fast
//! deterministic statevector mode used in training; here resets are treated
//! exactly (density matrix) or sampled by Born probability (trajectory).

use super::channels::apply_channel_trajectory_inplace;
use super::{DensityMatrix, InsertAfter, NoiseConfig, NoiseError, Shots, DM_MAX_QUBITS};
use crate::sim::{reset_apply, Instr, Observable, Pauli, Program, Statevector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use crate::util::splitmix64;
use rayon::prelude::*;

/// Exact noisy evolution on the density matrix.
pub fn dm_run_program(
    program: &Program,
    params: &[f64],
    input: &Statevector,
    noise: &NoiseConfig,
) -> Result<DensityMatrix, NoiseError> {
    noise.validate()?;
    let n = program.n_qubits;
    let mut rho = DensityMatrix::from_statevector(input);
    let channel_all = |rho: &mut DensityMatrix| -> Result<(), NoiseError> {
        if let Some(ch) = &noise.channel {
            for w in 0..n {
                rho.apply_channel(ch, w)?;
            }
        }
        Ok(())
    };
    let marks: &[usize] = match noise.insert_after {
        InsertAfter::EveryLayer => &program.layer_boundaries,
        InsertAfter::EncodingOnly => &program.encoding_marks,
        InsertAfter::EveryGate => &[],
    };
    if marks.contains(&0) {
        channel_all(&mut rho)?;
    }
    for (i, ins) in program.instrs.iter().enumerate() {
        match ins {
            Instr::Gate(op) => {
                rho.apply_gate_op(op, params);
                if noise.insert_after == InsertAfter::EveryGate {
                    if let Some(ch) = &noise.channel {
                        for &w in &op.wires {
                            rho.apply_channel(ch, w)?;
                        }
                    }
                }
            }
            Instr::ResetTo { wire, .. } => rho.reset_wire(*wire)?,
        }
        if marks.contains(&(i + 1)) {
            channel_all(&mut rho)?;
        }
    }
    Ok(rho)
}

fn channel_on_all_wires<R: Rng>(
    state: &mut Statevector,
    noise: &NoiseConfig,
    rng: &mut R,
) {
    let n = state.n_qubits();
    if let Some(ch) = &noise.channel {
        for w in 0..n {
            apply_channel_trajectory_inplace(state.amps_mut(), n, ch, w, rng);
        }
    }
}

/// One stochastic trajectory: channels sample a Kraus branch, resets sample
/// a measurement outcome. The returned state is normalized.
pub fn trajectory_run_program<R: Rng>(
    program: &Program,
    params: &[f64],
    input: &Statevector,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<Statevector, NoiseError> {
    noise.validate()?;
    let n = program.n_qubits;
    let mut state = input.clone();
    let marks: &[usize] = match noise.insert_after {
        InsertAfter::EveryLayer => &program.layer_boundaries,
        InsertAfter::EncodingOnly => &program.encoding_marks,
        InsertAfter::EveryGate => &[],
    };
    if marks.contains(&0) {
        channel_on_all_wires(&mut state, noise, rng);
    }
    for (i, ins) in program.instrs.iter().enumerate() {
        match ins {
            Instr::Gate(op) => {
                state = crate::sim::apply_gate(&state, op, params)?;
                if noise.insert_after == InsertAfter::EveryGate {
                    if let Some(ch) = &noise.channel {
                        for &w in &op.wires {
                            apply_channel_trajectory_inplace(state.amps_mut(), n, ch, w, rng);
                        }
                    }
                }
            }
            Instr::ResetTo { wire, .. } => {
                let p1 = state.prob_one(*wire);
                let branch = if rng.gen::<f64>() < p1 { 1u8 } else { 0u8 };
                let p = if branch == 1 { p1 } else { 1.0 - p1 };
                reset_apply(state.amps_mut(), n, *wire, branch);
                let inv = 1.0 / p.sqrt();
                for a in state.amps_mut() {
                    *a *= inv;
                }
            }
        }
        if marks.contains(&(i + 1)) {
            channel_on_all_wires(&mut state, noise, rng);
        }
    }
    Ok(state)
}

fn z_mask_and_weight(string: &[Pauli], n: usize) -> Result<(usize, u32), NoiseError> {
    let mut mask = 0usize;
    let mut weight = 0u32;
    for (q, p) in string.iter().enumerate() {
        match p {
            Pauli::I => {}
            Pauli::Z => {
                mask |= 1 << (n - 1 - q);
                weight += 1;
            }
            _ => return Err(NoiseError::RequiresDiagonalObservable),
        }
    }
    Ok((mask, weight))
}

/// Exact expectation with analytic readout-flip attenuation: independent
/// classical flips scale a weight-k Z-string by `(1 - 2p)^k`.
fn exact_with_readout(
    rho_or_exp: impl Fn(&Observable) -> Result<f64, NoiseError>,
    obs: &Observable,
    readout_p: f64,
    n: usize,
) -> Result<f64, NoiseError> {
    if readout_p == 0.0 {
        return rho_or_exp(obs);
    }
    let mut total = 0.0;
    for (coef, string) in &obs.terms {
        let (_, weight) = z_mask_and_weight(string, n)?;
        let single = Observable::new(vec![(*coef, string.clone())]);
        total += (1.0 - 2.0 * readout_p).powi(weight as i32) * rho_or_exp(&single)?;
    }
    Ok(total)
}

fn estimate_from_samples(
    samples: &[usize],
    obs: &Observable,
    n: usize,
) -> Result<f64, NoiseError> {
    let mut total = 0.0;
    for (coef, string) in &obs.terms {
        let (mask, _) = z_mask_and_weight(string, n)?;
        let sum: i64 = samples
            .iter()
            .map(|&s| if (s & mask).count_ones() % 2 == 0 { 1i64 } else { -1i64 })
            .sum();
        total += coef * sum as f64 / samples.len() as f64;
    }
    Ok(total)
}

fn flip_bits(idx: usize, n: usize, p: f64, rng: &mut impl Rng) -> usize {
    if p == 0.0 {
        return idx;
    }
    let mut out = idx;
    for q in 0..n {
        if rng.gen::<f64>() < p {
            out ^= 1 << (n - 1 - q);
        }
    }
    out
}

fn sample_from_probs(probs: &[f64], shots: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    (0..shots)
        .map(|_| {
            let r: f64 = rng.gen::<f64>() * acc;
            cdf.partition_point(|&c| c <= r).min(cdf.len() - 1)
        })
        .collect()
}

/// Expectation of `obs` after running `program` under `noise`: channels per
/// the insertion policy, independent readout bit-flips, and either exact or
/// finite-shot estimation. Deterministic for a given seed, independent of
/// worker count.
pub fn noisy_expectation(
    program: &Program,
    params: &[f64],
    input: &Statevector,
    obs: &Observable,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<f64, NoiseError> {
    noise.validate()?;
    let n = program.n_qubits;
    obs.check_len(n).map_err(NoiseError::Sim)?;

    if n <= DM_MAX_QUBITS {
        let rho = dm_run_program(program, params, input, noise)?;
        match noise.shots {
            Shots::Exact => {
                exact_with_readout(|o| rho.expectation(o), obs, noise.readout_flip_p, n)
            }
            Shots::Count(k) => {
                // Sampling requires a basis; only Z-diagonal observables are
                // measurable without extra rotations.
                for (_, string) in &obs.terms {
                    z_mask_and_weight(string, n)?;
                }
                let probs = rho.diagonal_probs();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let raw = sample_from_probs(&probs, k as usize, &mut rng);
                let flipped: Vec<usize> = raw
                    .into_iter()
                    .map(|s| flip_bits(s, n, noise.readout_flip_p, &mut rng))
                    .collect();
                estimate_from_samples(&flipped, obs, n)
            }
        }
    } else {
        match noise.shots {
            Shots::Exact => {
                let count = noise.n_trajectories.max(1) as usize;
                let vals: Vec<f64> = (0..count)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed, t as u64));
                        let state =
                            trajectory_run_program(program, params, input, noise, &mut rng)?;
                        exact_with_readout(
                            |o| crate::sim::expectation(&state, o).map_err(NoiseError::Sim),
                            obs,
                            noise.readout_flip_p,
                            n,
                        )
                    })
                    .collect::<Result<_, _>>()?;
                Ok(vals.iter().sum::<f64>() / vals.len() as f64)
            }
            Shots::Count(k) => {
                for (_, string) in &obs.terms {
                    z_mask_and_weight(string, n)?;
                }
                let samples: Vec<usize> = (0..k as usize)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed, t as u64));
                        let state =
                            trajectory_run_program(program, params, input, noise, &mut rng)?;
                        let idx = crate::sim::sample_indices(&state, 1, splitmix64(seed, t as u64 ^ 0xA5A5))[0];
                        Ok(flip_bits(idx, n, noise.readout_flip_p, &mut rng))
                    })
                    .collect::<Result<_, NoiseError>>()?;
                estimate_from_samples(&samples, obs, n)
            }
        }
    }
}
