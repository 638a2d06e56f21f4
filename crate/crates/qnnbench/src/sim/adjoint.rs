//! Exact reverse-sweep (adjoint) differentiation.
//!
//! For a unitary circuit `U = U_L .. U_1` and observable `O`, the sweep keeps
//! two vectors: `psi` is rewound gate by gate (`psi <- U_k^dag psi`), and
//! `lambda` carries `U_{k+1}^dag .. U_L^dag O psi_L`. The gradient of
//! `<psi_L|O|psi_L>` for a parameter of gate `k` is `2 Re <lambda| dU_k |psi>`.
//!
//! Programs extend circuits with projective resets (`|0><b|` on one wire).
//! Projectors are not invertible, so the forward pass checkpoints the state
//! at every reset and the backward pass restores from the checkpoints. With
//! resets the propagated vector is unnormalized and the expectation becomes
//! the quotient `N/D` of two quadratic forms, both differentiated in a single
//! sweep.

use super::expect::observable_apply;
use super::gates::{apply_prim_dagger, grad_inner, lower_circuit, Prim};
use super::{C64, Instr, Observable, ParamCircuit, Program, SimError, Statevector};

/// Value and exact gradients of an expectation.
#[derive(Debug, Clone)]
pub struct AdjointResult {
    pub value: f64,
    pub grad_params: Vec<f64>,
    /// Wirtinger derivative dE/d(conj z) per input amplitude: a real
    /// perturbation `dz` changes the value by `2 Re sum_i conj(g_i) dz_i`.
    pub grad_input_amps: Vec<C64>,
}

enum PInstr {
    Gate(Prim),
    Reset { wire: usize, branch: u8 },
}

fn lower_program(instrs: &[Instr], n_qubits: usize) -> Result<Vec<PInstr>, SimError> {
    let mut out = Vec::with_capacity(instrs.len());
    for ins in instrs {
        match ins {
            Instr::Gate(op) => {
                op.validate(n_qubits)?;
                for prim in super::gates::lower_op(op) {
                    out.push(PInstr::Gate(prim));
                }
            }
            Instr::ResetTo { wire, branch } => {
                if *wire >= n_qubits {
                    return Err(SimError::WireOutOfRange {
                        wire: *wire,
                        n_qubits,
                    });
                }
                out.push(PInstr::Reset {
                    wire: *wire,
                    branch: *branch,
                });
            }
        }
    }
    Ok(out)
}

/// Unnormalized projective reset: keep the `branch` component of `wire` and
/// move it to the |0> slot. `K = |0><branch|` acting on one wire.
pub(crate) fn reset_apply(amps: &mut [C64], n: usize, wire: usize, branch: u8) {
    let mask = 1usize << (n - 1 - wire);
    if branch == 0 {
        for i in 0..amps.len() {
            if i & mask != 0 {
                amps[i] = C64::new(0.0, 0.0);
            }
        }
    } else {
        for i in 0..amps.len() {
            if i & mask == 0 {
                amps[i] = amps[i | mask];
                amps[i | mask] = C64::new(0.0, 0.0);
            }
        }
    }
}

/// Adjoint of the reset: `K^dag = |branch><0|`.
fn reset_apply_dagger(amps: &mut [C64], n: usize, wire: usize, branch: u8) {
    let mask = 1usize << (n - 1 - wire);
    if branch == 0 {
        for i in 0..amps.len() {
            if i & mask != 0 {
                amps[i] = C64::new(0.0, 0.0);
            }
        }
    } else {
        for i in 0..amps.len() {
            if i & mask == 0 {
                amps[i | mask] = amps[i];
                amps[i] = C64::new(0.0, 0.0);
            }
        }
    }
}

fn real_inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Gradient of `<psi_L| O |psi_L>` where `psi_L = circuit(params) input`.
/// The value is the raw quadratic form; callers supply a normalized input.
pub fn adjoint_gradient(
    circuit: &ParamCircuit,
    params: &[f64],
    input_state: &Statevector,
    obs: &Observable,
) -> Result<AdjointResult, SimError> {
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

    let mut psi = input_state.clone();
    for prim in &prims {
        super::gates::apply_prim(psi.amps_mut(), n, prim, params);
    }

    let lambda = observable_apply(&psi, obs);
    let value = real_inner(psi.amps(), &lambda);
    if value.im.abs() > 1e-10 {
        return Err(SimError::NonHermitianResidue { imag: value.im });
    }

    let mut lambda = lambda;
    let mut grad = vec![0.0; circuit.n_params];
    for prim in prims.iter().rev() {
        apply_prim_dagger(psi.amps_mut(), n, prim, params);
        for (pos, &slot) in prim.slots().iter().enumerate() {
            let g = grad_inner(&lambda, psi.amps(), n, prim, params, pos);
            grad[slot] += 2.0 * g.re;
        }
        apply_prim_dagger(&mut lambda, n, prim, params);
    }

    Ok(AdjointResult {
        value: value.re,
        grad_params: grad,
        grad_input_amps: lambda,
    })
}

/// Forward-run a program with its baked reset branches. Returns the
/// normalized final state together with the accumulated branch probability.
pub fn run_program(
    program: &Program,
    params: &[f64],
    input_state: &Statevector,
) -> Result<(Statevector, f64), SimError> {
    if input_state.n_qubits() != program.n_qubits {
        return Err(SimError::QubitMismatch {
            state: input_state.n_qubits(),
            expected: program.n_qubits,
        });
    }
    let n = program.n_qubits;
    let pinstrs = lower_program(&program.instrs, n)?;
    let mut psi = input_state.clone();
    for ins in &pinstrs {
        match ins {
            PInstr::Gate(prim) => super::gates::apply_prim(psi.amps_mut(), n, prim, params),
            PInstr::Reset { wire, branch } => reset_apply(psi.amps_mut(), n, *wire, *branch),
        }
    }
    let d = psi.norm_sqr();
    if d < 1e-280 {
        return Err(SimError::DeadBranch { wire: 0, branch: 0 });
    }
    let inv = 1.0 / d.sqrt();
    for a in psi.amps_mut() {
        *a *= inv;
    }
    Ok((psi, d))
}

/// Forward-run a program, sampling every reset branch from the Born rule
/// instead of using the baked branches. Returns the normalized final state
/// and the chosen branch per reset, in program order.
pub fn sample_program_branches<R: rand::Rng>(
    program: &Program,
    params: &[f64],
    input_state: &Statevector,
    rng: &mut R,
) -> Result<(Statevector, Vec<u8>), SimError> {
    if input_state.n_qubits() != program.n_qubits {
        return Err(SimError::QubitMismatch {
            state: input_state.n_qubits(),
            expected: program.n_qubits,
        });
    }
    let n = program.n_qubits;
    let pinstrs = lower_program(&program.instrs, n)?;
    let mut psi = input_state.clone();
    let mut branches = Vec::new();
    for ins in &pinstrs {
        match ins {
            PInstr::Gate(prim) => super::gates::apply_prim(psi.amps_mut(), n, prim, params),
            PInstr::Reset { wire, .. } => {
                let p1 = psi.prob_one(*wire);
                let branch = if rng.gen::<f64>() < p1 { 1u8 } else { 0u8 };
                let p = if branch == 1 { p1 } else { 1.0 - p1 };
                if p <= 0.0 {
                    return Err(SimError::DeadBranch {
                        wire: *wire,
                        branch,
                    });
                }
                reset_apply(psi.amps_mut(), n, *wire, branch);
                let inv = 1.0 / p.sqrt();
                for a in psi.amps_mut() {
                    *a *= inv;
                }
                branches.push(branch);
            }
        }
    }
    Ok((psi, branches))
}

/// Forward-only program expectation `N/D` with fixed reset branches.
pub fn program_expectation(
    program: &Program,
    params: &[f64],
    input_state: &Statevector,
    obs: &Observable,
) -> Result<f64, SimError> {
    let (state, _) = run_program(program, params, input_state)?;
    super::expect::expectation(&state, obs)
}

/// Adjoint sweep over a program with projective resets. Returns the
/// normalized expectation `N/D`, its parameter gradient, and the input
/// amplitude gradient of the quotient.
pub fn adjoint_gradient_program(
    program: &Program,
    params: &[f64],
    input_state: &Statevector,
    obs: &Observable,
) -> Result<AdjointResult, SimError> {
    if input_state.n_qubits() != program.n_qubits {
        return Err(SimError::QubitMismatch {
            state: input_state.n_qubits(),
            expected: program.n_qubits,
        });
    }
    if params.len() != program.n_params {
        return Err(SimError::MissingParam {
            slot: program.n_params.saturating_sub(1),
            got: params.len(),
        });
    }
    obs.check_len(program.n_qubits)?;

    let n = program.n_qubits;
    let pinstrs = lower_program(&program.instrs, n)?;
    let has_resets = pinstrs.iter().any(|p| matches!(p, PInstr::Reset { .. }));

    // Forward, checkpointing the state in front of every reset.
    let mut psi = input_state.clone();
    let mut checkpoints: Vec<Vec<C64>> = Vec::new();
    for ins in &pinstrs {
        match ins {
            PInstr::Gate(prim) => super::gates::apply_prim(psi.amps_mut(), n, prim, params),
            PInstr::Reset { wire, branch } => {
                checkpoints.push(psi.amps().to_vec());
                reset_apply(psi.amps_mut(), n, *wire, *branch);
            }
        }
    }

    let d_raw = psi.norm_sqr();
    if d_raw < 1e-280 {
        // A fixed branch with zero probability leaves nothing to normalize.
        let (wire, branch) = pinstrs
            .iter()
            .find_map(|p| match p {
                PInstr::Reset { wire, branch } => Some((*wire, *branch)),
                _ => None,
            })
            .unwrap_or((0, 0));
        return Err(SimError::DeadBranch { wire, branch });
    }

    let mut lam_n = observable_apply(&psi, obs);
    let n_raw = real_inner(psi.amps(), &lam_n);
    if n_raw.im.abs() > 1e-10 * d_raw.max(1.0) {
        return Err(SimError::NonHermitianResidue { imag: n_raw.im });
    }
    let n_raw = n_raw.re;
    let mut lam_d: Vec<C64> = psi.amps().to_vec();

    let mut gn = vec![0.0; program.n_params];
    let mut gd = vec![0.0; program.n_params];
    for ins in pinstrs.iter().rev() {
        match ins {
            PInstr::Gate(prim) => {
                apply_prim_dagger(psi.amps_mut(), n, prim, params);
                for (pos, &slot) in prim.slots().iter().enumerate() {
                    let g = grad_inner(&lam_n, psi.amps(), n, prim, params, pos);
                    gn[slot] += 2.0 * g.re;
                    if has_resets {
                        let g = grad_inner(&lam_d, psi.amps(), n, prim, params, pos);
                        gd[slot] += 2.0 * g.re;
                    }
                }
                apply_prim_dagger(&mut lam_n, n, prim, params);
                if has_resets {
                    apply_prim_dagger(&mut lam_d, n, prim, params);
                }
            }
            PInstr::Reset { wire, branch } => {
                let cp = checkpoints.pop().expect("checkpoint per reset");
                psi.amps_mut().copy_from_slice(&cp);
                reset_apply_dagger(&mut lam_n, n, *wire, *branch);
                reset_apply_dagger(&mut lam_d, n, *wire, *branch);
            }
        }
    }

    let value = n_raw / d_raw;
    let grad_params: Vec<f64> = gn
        .iter()
        .zip(&gd)
        .map(|(dn, dd)| (dn - value * dd) / d_raw)
        .collect();
    let grad_input_amps: Vec<C64> = lam_n
        .iter()
        .zip(&lam_d)
        .map(|(ln, ld)| (ln - value * ld) / d_raw)
        .collect();

    Ok(AdjointResult {
        value,
        grad_params,
        grad_input_amps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{apply_circuit, expectation, GateKind, GateOp, Observable, ParamCircuit};

    #[test]
    fn ry_gradient_is_minus_sin() {
        let mut c = ParamCircuit::new(1, 1);
        c.gate(GateKind::RY, &[0], &[0]);
        let obs = Observable::z_on(1, 0);
        let r = adjoint_gradient(&c, &[0.3], &Statevector::zero_state(1), &obs).unwrap();
        assert!((r.value - 0.3f64.cos()).abs() < 1e-12);
        assert!((r.grad_params[0] + 0.3f64.sin()).abs() < 1e-12);
        assert!((r.grad_params[0] + 0.29552020666133955).abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_extremum() {
        let mut c = ParamCircuit::new(1, 1);
        c.gate(GateKind::RY, &[0], &[0]);
        let obs = Observable::z_on(1, 0);
        let r = adjoint_gradient(&c, &[0.0], &Statevector::zero_state(1), &obs).unwrap();
        assert!(r.grad_params[0].abs() < 1e-14);
    }

    #[test]
    fn shared_slot_accumulates_both_occurrences() {
        // Two RY gates bound to the same slot: d/dt <Z> after RY(t)RY(t)
        // equals -2 sin(2t) ... i.e. the derivative of cos(2t).
        let mut c = ParamCircuit::new(1, 1);
        c.gate(GateKind::RY, &[0], &[0]);
        c.gate(GateKind::RY, &[0], &[0]);
        let obs = Observable::z_on(1, 0);
        let t = 0.4;
        let r = adjoint_gradient(&c, &[t], &Statevector::zero_state(1), &obs).unwrap();
        assert!((r.value - (2.0 * t).cos()).abs() < 1e-12);
        assert!((r.grad_params[0] + 2.0 * (2.0 * t).sin()).abs() < 1e-12);
    }

    #[test]
    fn input_gradient_matches_raw_quadratic_form_fd() {
        use crate::sim::C64;
        let mut c = ParamCircuit::new(2, 3);
        c.gate(GateKind::RY, &[0], &[0]);
        c.gate(GateKind::IsingZZ, &[0, 1], &[1]);
        c.gate(GateKind::RX, &[1], &[2]);
        let params = [0.7, -0.4, 1.1];
        let obs = Observable::z_on(2, 1);
        let input =
            Statevector::from_amplitudes(vec![
                C64::new(0.5, 0.1),
                C64::new(-0.3, 0.2),
                C64::new(0.4, -0.6),
                C64::new(0.2, 0.0),
            ])
            .unwrap();
        let r = adjoint_gradient(&c, &params, &input, &obs).unwrap();

        // expectation() is the raw quadratic form, so perturbing amplitudes
        // without renormalizing probes exactly what the adjoint returns.
        let eval = |amps: &[C64]| -> f64 {
            let s = Statevector {
                n_qubits: 2,
                amps: amps.to_vec(),
            };
            let out = apply_circuit(&s, &c, &params).unwrap();
            expectation(&out, &obs).unwrap()
        };
        let h = 1e-6;
        for i in 0..4 {
            for re in [true, false] {
                let mut plus = input.amps().to_vec();
                let mut minus = input.amps().to_vec();
                if re {
                    plus[i] += C64::new(h, 0.0);
                    minus[i] -= C64::new(h, 0.0);
                } else {
                    plus[i] += C64::new(0.0, h);
                    minus[i] -= C64::new(0.0, h);
                }
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let analytic = if re {
                    2.0 * r.grad_input_amps[i].re
                } else {
                    2.0 * r.grad_input_amps[i].im
                };
                assert!(
                    (fd - analytic).abs() < 1e-6,
                    "amp {i} re={re}: fd {fd} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn program_with_reset_matches_finite_differences() {
        // RY(t0) . reset(wire 0 -> branch 1) . RY(t1), observable Z on wire 1.
        let n = 2;
        let mut instrs = Vec::new();
        instrs.push(Instr::Gate(GateOp::new(GateKind::RY, vec![0], vec![0])));
        instrs.push(Instr::Gate(GateOp::new(GateKind::IsingXX, vec![0, 1], vec![1])));
        instrs.push(Instr::ResetTo { wire: 0, branch: 1 });
        instrs.push(Instr::Gate(GateOp::new(GateKind::RY, vec![1], vec![2])));
        let program = Program {
            n_qubits: n,
            n_params: 3,
            instrs,
            ..Default::default()
        };
        let obs = Observable::z_on(n, 1);
        let params = [0.9, 0.5, -0.7];
        let input = Statevector::zero_state(n);
        let r = adjoint_gradient_program(&program, &params, &input, &obs).unwrap();

        let h = 1e-6;
        for k in 0..3 {
            let mut plus = params;
            let mut minus = params;
            plus[k] += h;
            minus[k] -= h;
            let fp = program_expectation(&program, &plus, &input, &obs).unwrap();
            let fm = program_expectation(&program, &minus, &input, &obs).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - r.grad_params[k]).abs() < 1e-6,
                "param {k}: fd {fd} vs adjoint {}",
                r.grad_params[k]
            );
        }
    }

    #[test]
    fn dead_branch_is_reported() {
        let program = Program {
            n_qubits: 1,
            n_params: 0,
            instrs: vec![Instr::ResetTo { wire: 0, branch: 1 }],
            ..Default::default()
        };
        let obs = Observable::z_on(1, 0);
        let err = adjoint_gradient_program(&program, &[], &Statevector::zero_state(1), &obs);
        assert!(matches!(err, Err(SimError::DeadBranch { .. })));
    }
}
