//! Observable expectations and Born-rule sampling.

use super::{C64, Observable, Pauli, SimError, Statevector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Apply a single Pauli string to `state`, scaled by `coef`, accumulating
/// into `out`. A string maps each basis state to exactly one basis state with
/// a +-1 or +-i phase, so this is a permutation plus phases.
pub(crate) fn accum_pauli_apply(out: &mut [C64], state: &Statevector, coef: f64, string: &[Pauli]) {
    let n = state.n_qubits();
    // Flip mask and phase bookkeeping: X flips, Y flips with a phase, Z signs.
    let mut flip = 0usize;
    for (q, p) in string.iter().enumerate() {
        if matches!(p, Pauli::X | Pauli::Y) {
            flip |= 1 << (n - 1 - q);
        }
    }
    for (i, a) in state.amps().iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let j = i ^ flip;
        let mut phase = C64::new(coef, 0.0);
        for (q, p) in string.iter().enumerate() {
            let bit = (i >> (n - 1 - q)) & 1;
            match p {
                Pauli::I | Pauli::X => {}
                // Y|0> = i|1>, Y|1> = -i|0>
                Pauli::Y => {
                    phase *= if bit == 0 {
                        C64::new(0.0, 1.0)
                    } else {
                        C64::new(0.0, -1.0)
                    }
                }
                Pauli::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        out[j] += phase * a;
    }
}

/// `O |state>` as a raw (unnormalized) amplitude vector.
pub(crate) fn observable_apply(state: &Statevector, obs: &Observable) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); state.amps().len()];
    for (coef, string) in &obs.terms {
        accum_pauli_apply(&mut out, state, *coef, string);
    }
    out
}

/// `<state| O |state>`. The imaginary residue must stay below 1e-10; it is
/// asserted and discarded.
pub fn expectation(state: &Statevector, obs: &Observable) -> Result<f64, SimError> {
    obs.check_len(state.n_qubits())?;
    let applied = observable_apply(state, obs);
    let mut acc = C64::new(0.0, 0.0);
    for (a, b) in state.amps().iter().zip(&applied) {
        acc += a.conj() * b;
    }
    if acc.im.abs() > 1e-10 {
        return Err(SimError::NonHermitianResidue { imag: acc.im });
    }
    Ok(acc.re)
}

/// Draw `shots` basis-state indices from the Born distribution `|amp|^2`,
/// deterministically for a given seed.
pub fn sample_indices(state: &Statevector, shots: usize, rng_seed: u64) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(state.amps().len());
    let mut acc = 0.0;
    for a in state.amps() {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..shots)
        .map(|_| {
            let r: f64 = rng.gen::<f64>() * total;
            cdf.partition_point(|&c| c <= r).min(cdf.len() - 1)
        })
        .collect()
}

/// Measurement counts over `shots` repetitions, keyed by the bitstring with
/// qubit 0 written first.
pub fn sample_counts(state: &Statevector, shots: usize, rng_seed: u64) -> BTreeMap<String, usize> {
    let n = state.n_qubits();
    let mut counts = BTreeMap::new();
    for idx in sample_indices(state, shots, rng_seed) {
        let key: String = (0..n)
            .map(|q| if (idx >> (n - 1 - q)) & 1 == 1 { '1' } else { '0' })
            .collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{apply_circuit, GateKind, ParamCircuit};
    use std::f64::consts::PI;

    #[test]
    fn z_on_zero_is_plus_one() {
        let s = Statevector::zero_state(1);
        let z = Observable::z_on(1, 0);
        assert_eq!(expectation(&s, &z).unwrap(), 1.0);
    }

    #[test]
    fn z_on_plus_state_is_zero() {
        let s = Statevector::from_amplitudes(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let z = Observable::z_on(1, 0);
        assert!(expectation(&s, &z).unwrap().abs() < 1e-15);
    }

    #[test]
    fn z_after_ry_is_cos_theta() {
        let theta = 0.3;
        let mut c = ParamCircuit::new(1, 1);
        c.gate(GateKind::RY, &[0], &[0]);
        let s = apply_circuit(&Statevector::zero_state(1), &c, &[theta]).unwrap();
        let z = Observable::z_on(1, 0);
        let e = expectation(&s, &z).unwrap();
        assert!((e - theta.cos()).abs() < 1e-12);
        assert!((e - 0.955336489125606).abs() < 1e-12);
    }

    #[test]
    fn xy_strings_have_real_expectations() {
        let mut c = ParamCircuit::new(2, 2);
        c.gate(GateKind::RY, &[0], &[0]);
        c.gate(GateKind::RX, &[1], &[1]);
        let s = apply_circuit(&Statevector::zero_state(2), &c, &[0.7, -1.1]).unwrap();
        for string in [
            vec![Pauli::X, Pauli::I],
            vec![Pauli::Y, Pauli::Y],
            vec![Pauli::X, Pauli::Z],
        ] {
            let obs = Observable::pauli_string(string);
            // Must not error on the imaginary-residue check.
            expectation(&s, &obs).unwrap();
        }
    }

    #[test]
    fn sampling_zero_state_is_all_zero_string() {
        let s = Statevector::zero_state(1);
        let counts = sample_counts(&s, 100, 7);
        assert_eq!(counts.get("0"), Some(&100));
        assert_eq!(counts.len(), 1);
    }

    #[test]
    fn sampling_one_state() {
        let s = Statevector::basis_state(1, 1);
        let counts = sample_counts(&s, 5, 99);
        assert_eq!(counts.get("1"), Some(&5));
    }

    #[test]
    fn sampling_uniform_superposition_is_binomial() {
        let mut c = ParamCircuit::new(1, 1);
        c.gate(GateKind::RY, &[0], &[0]);
        let s = apply_circuit(&Statevector::zero_state(1), &c, &[PI / 2.0]).unwrap();
        let shots = 100_000;
        let counts = sample_counts(&s, shots, 1234);
        let sigma = (shots as f64 * 0.25).sqrt();
        let zeros = *counts.get("0").unwrap() as f64;
        assert!((zeros - 50_000.0).abs() < 5.0 * sigma, "zeros = {zeros}");
        assert_eq!(counts.values().sum::<usize>(), shots);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut c = ParamCircuit::new(2, 1);
        c.gate(GateKind::RY, &[0], &[0]);
        let s = apply_circuit(&Statevector::zero_state(2), &c, &[1.0]).unwrap();
        assert_eq!(sample_counts(&s, 1000, 42), sample_counts(&s, 1000, 42));
        assert_ne!(sample_counts(&s, 1000, 42), sample_counts(&s, 1000, 43));
    }
}
