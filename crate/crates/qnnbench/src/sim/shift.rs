//! Parameter-shift gradients, kept as an independent cross-check for the
//! adjoint sweep.
//!
//! Every rotation and Ising gate has generator eigenvalues +-1/2, giving the
//! two-term rule `g = [f(t + pi/2) - f(t - pi/2)] / 2`. Controlled rotations
//! have generator eigenvalues {0, +-1/2}; their expectation mixes the
//! frequencies 1/2 and 1, which the exact four-term rule at shifts +-pi/2 and
//! +-3pi/2 resolves. Slots shared by several gates are handled by shifting
//! one occurrence at a time and summing.

use super::expect::observable_apply;
use super::gates::{apply_prim_shifted, lower_circuit, shift_rule, Prim, ShiftRule};
use super::{Observable, ParamCircuit, SimError, Statevector};
use std::f64::consts::{FRAC_PI_2, SQRT_2};

fn eval_shifted(
    prims: &[Prim],
    n: usize,
    params: &[f64],
    input: &Statevector,
    obs: &Observable,
    occurrence: usize,
    pos: usize,
    delta: f64,
) -> f64 {
    let mut amps = input.amps().to_vec();
    for (i, prim) in prims.iter().enumerate() {
        let shift = if i == occurrence { Some((pos, delta)) } else { None };
        apply_prim_shifted(&mut amps, n, prim, params, shift);
    }
    let state = Statevector {
        n_qubits: n,
        amps,
    };
    let applied = observable_apply(&state, obs);
    state
        .amps()
        .iter()
        .zip(&applied)
        .map(|(a, b)| (a.conj() * b).re)
        .sum()
}

/// Gradient of `<O>` by the parameter-shift rule.
pub fn parameter_shift_gradient(
    circuit: &ParamCircuit,
    params: &[f64],
    input_state: &Statevector,
    obs: &Observable,
) -> Result<Vec<f64>, SimError> {
    if input_state.n_qubits() != circuit.n_qubits {
        return Err(SimError::QubitMismatch {
            state: input_state.n_qubits(),
            expected: circuit.n_qubits,
        });
    }
    circuit.check_params(params)?;
    obs.check_len(circuit.n_qubits)?;

    let n = circuit.n_qubits;
    let prims = lower_circuit(&circuit.ops);
    let mut grad = vec![0.0; circuit.n_params];

    let f = |occ: usize, pos: usize, delta: f64| {
        eval_shifted(&prims, n, params, input_state, obs, occ, pos, delta)
    };

    for (occ, prim) in prims.iter().enumerate() {
        let Some(rule) = shift_rule(prim.kind) else {
            continue;
        };
        for (pos, &slot) in prim.slots().iter().enumerate() {
            let g = match rule {
                ShiftRule::TwoTerm => {
                    (f(occ, pos, FRAC_PI_2) - f(occ, pos, -FRAC_PI_2)) / 2.0
                }
                ShiftRule::FourTerm => {
                    let d_plus = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
                    let d_minus = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
                    d_plus * (f(occ, pos, FRAC_PI_2) - f(occ, pos, -FRAC_PI_2))
                        - d_minus
                            * (f(occ, pos, 3.0 * FRAC_PI_2) - f(occ, pos, -3.0 * FRAC_PI_2))
                }
            };
            grad[slot] += g;
        }
    }
    Ok(grad)
}
