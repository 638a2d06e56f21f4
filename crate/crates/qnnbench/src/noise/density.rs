//! Exact mixed-state evolution. The row-major density matrix doubles as a
//! 2n-qubit statevector, so gate kernels run once over row wires and once,
//! conjugated, over column wires.

use super::{KrausChannel, Mat2, NoiseError};
use crate::sim::{
    apply1, apply2, lower_op, prim_matrix, C64, Instr, Observable, Pauli, Program, PrimMatrix,
    Statevector,
};

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    n_qubits: usize,
    /// Row-major `2^n x 2^n`; flat index `(row << n) | col`.
    mat: Vec<C64>,
}

fn conj2(m: &Mat2) -> Mat2 {
    [m[0].conj(), m[1].conj(), m[2].conj(), m[3].conj()]
}

fn conj4(m: &[C64; 16]) -> [C64; 16] {
    let mut out = *m;
    for e in out.iter_mut() {
        *e = e.conj();
    }
    out
}

impl DensityMatrix {
    pub fn zero_state(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let mut mat = vec![C64::new(0.0, 0.0); dim * dim];
        mat[0] = C64::new(1.0, 0.0);
        Self { n_qubits, mat }
    }

    /// `|psi><psi|`.
    pub fn from_statevector(state: &Statevector) -> Self {
        let n = state.n_qubits();
        let dim = 1usize << n;
        let mut mat = vec![C64::new(0.0, 0.0); dim * dim];
        for (r, a) in state.amps().iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            for (c, b) in state.amps().iter().enumerate() {
                mat[(r << n) | c] = a * b.conj();
            }
        }
        Self { n_qubits: n, mat }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.mat[(row << self.n_qubits) | col]
    }

    pub fn trace(&self) -> f64 {
        let dim = 1usize << self.n_qubits;
        (0..dim).map(|i| self.entry(i, i).re).sum()
    }

    /// `Tr(rho^2)`; 1 for pure states, never increased by unital channels.
    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|e| e.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let dim = 1usize << self.n_qubits;
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in r..dim {
                worst = worst.max((self.entry(r, c) - self.entry(c, r).conj()).norm());
            }
        }
        worst
    }

    /// `<v| rho |v>`, a positivity probe for test vectors.
    pub fn quadratic_form(&self, v: &[C64]) -> f64 {
        let dim = 1usize << self.n_qubits;
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..dim {
            for c in 0..dim {
                acc += v[r].conj() * self.entry(r, c) * v[c];
            }
        }
        acc.re
    }

    /// Born probabilities of computational-basis outcomes.
    pub fn diagonal_probs(&self) -> Vec<f64> {
        let dim = 1usize << self.n_qubits;
        (0..dim).map(|i| self.entry(i, i).re.max(0.0)).collect()
    }

    /// `Tr(O rho)` for a Pauli-sum observable.
    pub fn expectation(&self, obs: &Observable) -> Result<f64, NoiseError> {
        obs.check_len(self.n_qubits).map_err(NoiseError::Sim)?;
        let n = self.n_qubits;
        let mut total = C64::new(0.0, 0.0);
        for (coef, string) in &obs.terms {
            let mut flip = 0usize;
            for (q, p) in string.iter().enumerate() {
                if matches!(p, Pauli::X | Pauli::Y) {
                    flip |= 1 << (n - 1 - q);
                }
            }
            let dim = 1usize << n;
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..dim {
                let mut phase = C64::new(1.0, 0.0);
                for (q, p) in string.iter().enumerate() {
                    let bit = (j >> (n - 1 - q)) & 1;
                    match p {
                        Pauli::I | Pauli::X => {}
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
                acc += phase * self.entry(j, j ^ flip);
            }
            total += acc * *coef;
        }
        Ok(total.re)
    }

    /// Apply an arbitrary one-qubit matrix `M` as `rho -> M rho M^dag`.
    pub(crate) fn apply_mat2(&mut self, wire: usize, m: &Mat2) {
        let n2 = 2 * self.n_qubits;
        apply1(&mut self.mat, n2, wire, m);
        apply1(&mut self.mat, n2, self.n_qubits + wire, &conj2(m));
    }

    /// Apply one lowered circuit primitive unitarily.
    pub(crate) fn apply_prim_gate(&mut self, prim: &crate::sim::Prim, params: &[f64]) {
        let n = self.n_qubits;
        let n2 = 2 * n;
        let w = prim.wires();
        match prim_matrix(prim, params) {
            PrimMatrix::One(m) => {
                apply1(&mut self.mat, n2, w[0], &m);
                apply1(&mut self.mat, n2, n + w[0], &conj2(&m));
            }
            PrimMatrix::Two(m) => {
                apply2(&mut self.mat, n2, w[0], w[1], &m);
                apply2(&mut self.mat, n2, n + w[0], n + w[1], &conj4(&m));
            }
        }
    }

    /// Apply every gate of a program instruction stream unitarily (no noise,
    /// resets as exact channels); the main exact-evaluation entry point is
    /// [`super::dm_run_program`].
    pub(crate) fn apply_gate_op(&mut self, op: &crate::sim::GateOp, params: &[f64]) {
        for prim in lower_op(op) {
            self.apply_prim_gate(&prim, params);
        }
    }

    /// Kraus channel on one wire: `rho -> sum_k K rho K^dag`.
    pub fn apply_channel(&mut self, channel: &KrausChannel, wire: usize) -> Result<(), NoiseError> {
        if wire >= self.n_qubits {
            return Err(NoiseError::WireOutOfRange {
                wire,
                n_qubits: self.n_qubits,
            });
        }
        let mut acc = vec![C64::new(0.0, 0.0); self.mat.len()];
        for k in &channel.kraus_ops {
            let mut branch = self.clone();
            branch.apply_mat2(wire, k);
            for (a, b) in acc.iter_mut().zip(&branch.mat) {
                *a += b;
            }
        }
        self.mat = acc;
        Ok(())
    }

    /// Exact register reuse: `rho -> |0><0|_w (x) Tr_w rho`.
    pub fn reset_wire(&mut self, wire: usize) -> Result<(), NoiseError> {
        if wire >= self.n_qubits {
            return Err(NoiseError::WireOutOfRange {
                wire,
                n_qubits: self.n_qubits,
            });
        }
        let n = self.n_qubits;
        let mask = 1usize << (n - 1 - wire);
        let dim = 1usize << n;
        for r in 0..dim {
            if r & mask != 0 {
                continue;
            }
            for c in 0..dim {
                if c & mask != 0 {
                    continue;
                }
                let keep = self.mat[(r << n) | c] + self.mat[((r | mask) << n) | (c | mask)];
                self.mat[(r << n) | c] = keep;
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                if r & mask != 0 || c & mask != 0 {
                    self.mat[(r << n) | c] = C64::new(0.0, 0.0);
                }
            }
        }
        Ok(())
    }

    /// Run a full program (gates + exact resets) without noise.
    pub fn run_program(program: &Program, params: &[f64], input: &Statevector) -> Self {
        let mut rho = DensityMatrix::from_statevector(input);
        for ins in &program.instrs {
            match ins {
                Instr::Gate(op) => rho.apply_gate_op(op, params),
                Instr::ResetTo { wire, .. } => rho.reset_wire(*wire).expect("validated wire"),
            }
        }
        rho
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{make_channel, ChannelKind};
    use crate::sim::{GateKind, GateOp, ParamCircuit};

    fn plus_state() -> Statevector {
        Statevector::from_amplitudes(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn pure_state_density_matrix_has_unit_purity() {
        let rho = DensityMatrix::from_statevector(&plus_state());
        assert!((rho.trace() - 1.0).abs() < 1e-14);
        assert!((rho.purity() - 1.0).abs() < 1e-14);
        assert!(rho.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn zero_probability_channel_leaves_rho() {
        let mut rho = DensityMatrix::from_statevector(&plus_state());
        let before = rho.clone();
        for kind in ChannelKind::ALL {
            let ch = make_channel(kind, 0.0).unwrap();
            rho.apply_channel(&ch, 0).unwrap();
        }
        for (a, b) in rho.mat.iter().zip(&before.mat) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn phase_flip_half_fully_dephases_plus() {
        let mut rho = DensityMatrix::from_statevector(&plus_state());
        let ch = make_channel(ChannelKind::PhaseFlip, 0.5).unwrap();
        rho.apply_channel(&ch, 0).unwrap();
        // I/2: diagonal 0.5, off-diagonal 0.
        assert!((rho.entry(0, 0).re - 0.5).abs() < 1e-14);
        assert!((rho.entry(1, 1).re - 0.5).abs() < 1e-14);
        assert!(rho.entry(0, 1).norm() < 1e-14);
    }

    #[test]
    fn bit_flip_mixes_populations() {
        let mut rho = DensityMatrix::zero_state(1);
        let ch = make_channel(ChannelKind::BitFlip, 0.3).unwrap();
        rho.apply_channel(&ch, 0).unwrap();
        assert!((rho.entry(0, 0).re - 0.7).abs() < 1e-14);
        assert!((rho.entry(1, 1).re - 0.3).abs() < 1e-14);
    }

    #[test]
    fn amplitude_damping_certainty_decays_one_to_zero() {
        let mut rho = DensityMatrix::from_statevector(&Statevector::basis_state(1, 1));
        let ch = make_channel(ChannelKind::AmplitudeDamping, 1.0).unwrap();
        rho.apply_channel(&ch, 0).unwrap();
        assert!((rho.entry(0, 0).re - 1.0).abs() < 1e-14);
        assert!(rho.entry(1, 1).norm() < 1e-14);
    }

    #[test]
    fn full_depolarizing_kills_all_single_qubit_expectations() {
        // Random-ish single-qubit state via a circuit.
        let mut c = ParamCircuit::new(1, 2);
        c.gate(GateKind::RY, &[0], &[0]);
        c.gate(GateKind::RZ, &[0], &[1]);
        let s = crate::sim::apply_circuit(&Statevector::zero_state(1), &c, &[0.9, -0.4]).unwrap();
        let mut rho = DensityMatrix::from_statevector(&s);
        let ch = make_channel(ChannelKind::Depolarizing, 1.0).unwrap();
        rho.apply_channel(&ch, 0).unwrap();
        for pauli in [Pauli::X, Pauli::Y, Pauli::Z] {
            let obs = Observable::pauli_string(vec![pauli]);
            assert!(rho.expectation(&obs).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn gate_evolution_matches_statevector_path() {
        let mut c = ParamCircuit::new(2, 3);
        c.gate(GateKind::RY, &[0], &[0]);
        c.gate(GateKind::IsingYY, &[0, 1], &[1]);
        c.gate(GateKind::ControlledU3, &[0, 1], &[2, 2, 2]);
        let params = [0.7, -1.2, 0.5];
        let sv = crate::sim::apply_circuit(&Statevector::zero_state(2), &c, &params).unwrap();

        let mut rho = DensityMatrix::zero_state(2);
        for op in &c.ops {
            rho.apply_gate_op(op, &params);
        }
        let direct = DensityMatrix::from_statevector(&sv);
        for (a, b) in rho.mat.iter().zip(&direct.mat) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn reset_traces_out_and_reinitializes() {
        // RY(0.8) on wire 0 entangled with wire 1 via IsingXX, then reset
        // wire 0: wire 0 must be exactly |0><0| and the trace preserved.
        let mut c = ParamCircuit::new(2, 2);
        c.gate(GateKind::RY, &[0], &[0]);
        c.gate(GateKind::IsingXX, &[0, 1], &[1]);
        let params = [0.8, 0.6];
        let sv = crate::sim::apply_circuit(&Statevector::zero_state(2), &c, &params).unwrap();
        let mut rho = DensityMatrix::from_statevector(&sv);
        rho.reset_wire(0).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        let z0 = Observable::z_on(2, 0);
        assert!((rho.expectation(&z0).unwrap() - 1.0).abs() < 1e-12);
        assert!(rho.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn program_reset_matches_unnormalized_branch_sum() {
        // The exact mixed evaluation must equal the sum of the two
        // unnormalized projective branches of the statevector path.
        use crate::sim::{adjoint_gradient_program, Program};
        let mut instrs = Vec::new();
        instrs.push(Instr::Gate(GateOp::new(GateKind::RY, vec![0], vec![0])));
        instrs.push(Instr::Gate(GateOp::new(GateKind::IsingXX, vec![0, 1], vec![1])));
        instrs.push(Instr::ResetTo { wire: 0, branch: 0 });
        instrs.push(Instr::Gate(GateOp::new(GateKind::RY, vec![1], vec![2])));
        let mut program = Program {
            n_qubits: 2,
            n_params: 3,
            instrs,
            layer_boundaries: vec![],
            encoding_marks: vec![],
        };
        let params = [1.1, 0.7, -0.3];
        let obs = Observable::z_on(2, 1);
        let input = Statevector::zero_state(2);

        let rho = DensityMatrix::run_program(&program, &params, &input);
        let exact = rho.expectation(&obs).unwrap();

        // Branch-weighted sum over the two reset outcomes.
        let mut weighted = 0.0;
        for branch in [0u8, 1u8] {
            if let Instr::ResetTo { branch: b, .. } = &mut program.instrs[2] {
                *b = branch;
            }
            match adjoint_gradient_program(&program, &params, &input, &obs) {
                Ok(r) => {
                    // Recover the branch weight from the unnormalized pass.
                    let d = {
                        let mut s = input.clone();
                        for ins in &program.instrs {
                            match ins {
                                Instr::Gate(op) => {
                                    s = crate::sim::apply_gate(&s, op, &params).unwrap()
                                }
                                Instr::ResetTo { wire, branch } => {
                                    let n = s.n_qubits();
                                    crate::sim::reset_apply(s.amps_mut(), n, *wire, *branch);
                                }
                            }
                        }
                        s.norm_sqr()
                    };
                    weighted += r.value * d;
                }
                Err(crate::sim::SimError::DeadBranch { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert!(
            (exact - weighted).abs() < 1e-12,
            "dm {exact} vs branch sum {weighted}"
        );
    }
}
