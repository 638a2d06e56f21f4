//! Dense statevector simulation of parameterized circuits.
//!
//! Conventions, fixed once and asserted in tests:
//!
//! - Qubit 0 is the **most significant bit** of the basis-state index, so on
//!   `n` qubits the amplitude of `|b_0 b_1 .. b_{n-1}>` lives at index
//!   `sum_q b_q << (n-1-q)`.
//! - Rotations are `R_A(theta) = exp(-i theta A / 2)` for `A in {X, Y, Z}`
//!   and `Ising_AA(theta) = exp(-i theta (A x A) / 2)`.
//! - `U3(theta, phi, lambda)` is the standard single-qubit form with
//!   `U3(theta, 0, 0) = RY(theta)`.
//! - Global phase is not tracked; comparisons go through observables or
//!   `|<a|b>|`.
//!
//! All operations are pure: they take a state (or a borrowed one) and return
//! a new state, so values can move freely between threads.

mod adjoint;
mod circuit;
mod dense;
mod expect;
mod gates;
mod shift;

pub use adjoint::{
    adjoint_gradient, adjoint_gradient_program, program_expectation, run_program,
    sample_program_branches, AdjointResult,
};
pub use circuit::{apply_circuit, apply_gate, deferred_measure_control};
pub use dense::{dense_matrix_oracle, DenseMatrix};
pub use expect::{expectation, sample_counts, sample_indices};
pub use shift::parameter_shift_gradient;

pub(crate) use adjoint::reset_apply;
pub(crate) use gates::{apply1, apply2, lower_op, prim_matrix, Prim, PrimMatrix};

use num_complex::Complex64;
use thiserror::Error;

/// Complex amplitude type used throughout the simulator.
pub type C64 = Complex64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("wire {wire} out of range for {n_qubits} qubits")]
    WireOutOfRange { wire: usize, n_qubits: usize },
    #[error("duplicate wire {wire} in gate")]
    DuplicateWire { wire: usize },
    #[error("gate {kind:?} expects {expected} parameter slots, got {got}")]
    WrongParamCount {
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("gate {kind:?} expects {expected} wires, got {got}")]
    WrongWireCount {
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("parameter vector of length {got} does not cover slot {slot}")]
    MissingParam { slot: usize, got: usize },
    #[error("qubit count mismatch: state has {state}, operand expects {expected}")]
    QubitMismatch { state: usize, expected: usize },
    #[error("amplitude vector length {len} is not a power of two")]
    BadAmplitudeLength { len: usize },
    #[error("cannot normalize a zero state")]
    ZeroState,
    #[error("control wire {wire} is among the gate targets")]
    ControlIsTarget { wire: usize },
    #[error("dense oracle limited to {max} qubits, circuit has {got}")]
    TooManyQubits { max: usize, got: usize },
    #[error("observable term has {got} Pauli letters, state has {expected} qubits")]
    BadPauliLength { got: usize, expected: usize },
    #[error("expectation has non-negligible imaginary part {imag}")]
    NonHermitianResidue { imag: f64 },
    #[error("reset branch probability is zero (branch {branch} on wire {wire})")]
    DeadBranch { wire: usize, branch: u8 },
}

/// Pure n-qubit quantum state as a dense complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl Statevector {
    /// `|0...0>` on `n_qubits`.
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = C64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Basis state `|index>` (index interpreted with qubit 0 as MSB).
    pub fn basis_state(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = C64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Build from raw amplitudes; the length must be a power of two and the
    /// vector must not be all-zero. Amplitudes are normalized on entry.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, SimError> {
        let len = amps.len();
        if len == 0 || len & (len - 1) != 0 {
            return Err(SimError::BadAmplitudeLength { len });
        }
        let n_qubits = len.trailing_zeros() as usize;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(SimError::ZeroState);
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    /// Squared-amplitude sum; 1 within 1e-10 after any gate application.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `|<self|other>|^2`, the state fidelity for pure states.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Probability that `wire` is measured as 1.
    pub fn prob_one(&self, wire: usize) -> f64 {
        let bit = self.n_qubits - 1 - wire;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (i >> bit) & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Project `wire` onto `outcome` and renormalize. Returns the outcome
    /// probability together with the collapsed state.
    pub fn project_wire(&self, wire: usize, outcome: u8) -> Result<(f64, Statevector), SimError> {
        if wire >= self.n_qubits {
            return Err(SimError::WireOutOfRange {
                wire,
                n_qubits: self.n_qubits,
            });
        }
        let bit = self.n_qubits - 1 - wire;
        let mut amps = self.amps.clone();
        let mut p = 0.0;
        for (i, a) in amps.iter_mut().enumerate() {
            if ((i >> bit) & 1) as u8 == outcome {
                p += a.norm_sqr();
            } else {
                *a = C64::new(0.0, 0.0);
            }
        }
        if p <= 0.0 {
            return Err(SimError::DeadBranch {
                wire,
                branch: outcome,
            });
        }
        let inv = 1.0 / p.sqrt();
        for a in amps.iter_mut() {
            *a *= inv;
        }
        Ok((
            p,
            Statevector {
                n_qubits: self.n_qubits,
                amps,
            },
        ))
    }
}

/// Supported gate kinds. `ArbitraryUnitary` is restricted to two wires and is
/// realized internally as a fixed 15-rotation universal decomposition so every
/// parameter stays parameter-shift differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    U3,
    IsingXX,
    IsingYY,
    IsingZZ,
    Swap,
    ControlledU3,
    ArbitraryUnitary,
}

impl GateKind {
    /// Number of wires the gate acts on.
    pub fn n_wires(&self) -> usize {
        match self {
            GateKind::RX | GateKind::RY | GateKind::RZ | GateKind::U3 => 1,
            _ => 2,
        }
    }

    /// Number of parameter slots the gate consumes.
    pub fn n_params(&self) -> usize {
        match self {
            GateKind::RX | GateKind::RY | GateKind::RZ => 1,
            GateKind::IsingXX | GateKind::IsingYY | GateKind::IsingZZ => 1,
            GateKind::U3 | GateKind::ControlledU3 => 3,
            GateKind::Swap => 0,
            // 4^2 - 1 for the two-wire case
            GateKind::ArbitraryUnitary => 15,
        }
    }
}

/// One gate in a circuit: a kind, the wires it acts on and the indices of the
/// parameters it reads (empty for SWAP). For `ControlledU3`, `wires[0]` is the
/// control and `wires[1]` the target.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub wires: Vec<usize>,
    pub param_slots: Vec<usize>,
}

impl GateOp {
    pub fn new(kind: GateKind, wires: Vec<usize>, param_slots: Vec<usize>) -> Self {
        Self {
            kind,
            wires,
            param_slots,
        }
    }

    pub(crate) fn validate(&self, n_qubits: usize) -> Result<(), SimError> {
        if self.wires.len() != self.kind.n_wires() {
            return Err(SimError::WrongWireCount {
                kind: self.kind,
                expected: self.kind.n_wires(),
                got: self.wires.len(),
            });
        }
        for (i, &w) in self.wires.iter().enumerate() {
            if w >= n_qubits {
                return Err(SimError::WireOutOfRange { wire: w, n_qubits });
            }
            if self.wires[..i].contains(&w) {
                return Err(SimError::DuplicateWire { wire: w });
            }
        }
        if self.param_slots.len() != self.kind.n_params() {
            return Err(SimError::WrongParamCount {
                kind: self.kind,
                expected: self.kind.n_params(),
                got: self.param_slots.len(),
            });
        }
        Ok(())
    }
}

/// Ordered gate list with parameter slots; the shared circuit IR for every
/// model in the crate.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ParamCircuit {
    pub n_qubits: usize,
    pub ops: Vec<GateOp>,
    pub n_params: usize,
    /// Op counts after which a logical layer ends; used by the noise module
    /// when channels are inserted per layer. An entry of 0 marks the state
    /// right after preparation (encoding-only insertion point).
    pub layer_boundaries: Vec<usize>,
}

impl ParamCircuit {
    pub fn new(n_qubits: usize, n_params: usize) -> Self {
        Self {
            n_qubits,
            ops: Vec::new(),
            n_params,
            layer_boundaries: Vec::new(),
        }
    }

    pub fn push(&mut self, op: GateOp) -> Result<(), SimError> {
        op.validate(self.n_qubits)?;
        for &s in &op.param_slots {
            if s >= self.n_params {
                return Err(SimError::MissingParam {
                    slot: s,
                    got: self.n_params,
                });
            }
        }
        self.ops.push(op);
        Ok(())
    }

    /// Convenience push that panics on structural errors; circuits are built
    /// by in-crate model constructors where shapes are static.
    pub fn gate(&mut self, kind: GateKind, wires: &[usize], slots: &[usize]) {
        self.push(GateOp::new(kind, wires.to_vec(), slots.to_vec()))
            .expect("invalid gate in circuit construction");
    }

    /// Mark the end of a logical layer at the current op count.
    pub fn mark_layer(&mut self) {
        self.layer_boundaries.push(self.ops.len());
    }

    /// Ensure every referenced slot is in range and the parameter vector
    /// covers them.
    pub fn check_params(&self, params: &[f64]) -> Result<(), SimError> {
        if params.len() != self.n_params {
            return Err(SimError::MissingParam {
                slot: self.n_params.saturating_sub(1),
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Slots never referenced by any op (flagged, not an error).
    pub fn unused_slots(&self) -> Vec<usize> {
        let mut used = vec![false; self.n_params];
        for op in &self.ops {
            for &s in &op.param_slots {
                used[s] = true;
            }
        }
        used.iter()
            .enumerate()
            .filter(|(_, u)| !**u)
            .map(|(i, _)| i)
            .collect()
    }

    /// Total count of parameterized primitive gates after lowering; the model
    /// complexity measure fed to the generalization bound.
    pub fn parameterized_gate_count(&self) -> usize {
        self.ops
            .iter()
            .flat_map(lower_op)
            .filter(|p| p.n_slots > 0)
            .count()
    }

    /// Longest chain of primitive gates over any wire (greedy layering).
    pub fn depth(&self) -> usize {
        let mut wire_depth = vec![0usize; self.n_qubits];
        for prim in self.ops.iter().flat_map(lower_op) {
            let wires = prim.wires();
            let d = wires.iter().map(|&w| wire_depth[w]).max().unwrap_or(0) + 1;
            for &w in wires {
                wire_depth[w] = d;
            }
        }
        wire_depth.into_iter().max().unwrap_or(0)
    }
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Real-weighted sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub terms: Vec<(f64, Vec<Pauli>)>,
}

impl Observable {
    pub fn new(terms: Vec<(f64, Vec<Pauli>)>) -> Self {
        Self { terms }
    }

    /// `Z` on a single wire of an `n_qubits` register.
    pub fn z_on(n_qubits: usize, wire: usize) -> Self {
        let mut s = vec![Pauli::I; n_qubits];
        s[wire] = Pauli::Z;
        Self {
            terms: vec![(1.0, s)],
        }
    }

    /// `sum_j Z_j` over the given wires.
    pub fn z_sum(n_qubits: usize, wires: &[usize]) -> Self {
        let terms = wires
            .iter()
            .map(|&w| {
                let mut s = vec![Pauli::I; n_qubits];
                s[w] = Pauli::Z;
                (1.0, s)
            })
            .collect();
        Self { terms }
    }

    /// Single Pauli string with coefficient 1.
    pub fn pauli_string(s: Vec<Pauli>) -> Self {
        Self {
            terms: vec![(1.0, s)],
        }
    }

    pub fn check_len(&self, n_qubits: usize) -> Result<(), SimError> {
        for (_, s) in &self.terms {
            if s.len() != n_qubits {
                return Err(SimError::BadPauliLength {
                    got: s.len(),
                    expected: n_qubits,
                });
            }
        }
        Ok(())
    }

    /// True when every term is diagonal in the computational basis.
    pub fn is_z_diagonal(&self) -> bool {
        self.terms
            .iter()
            .all(|(_, s)| s.iter().all(|p| matches!(p, Pauli::I | Pauli::Z)))
    }

    /// Operator norm upper bound `sum_i |c_i|` (exact for a single term).
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }
}

/// One instruction of a simulation program: either a circuit gate or a
/// projective reset of a wire to |0> given a fixed measured branch. Programs
/// generalize circuits just enough to express recurrent register reuse.
#[derive(Debug, Clone)]
pub enum Instr {
    Gate(GateOp),
    /// Project `wire` onto `branch`, then map the surviving component to the
    /// |0> slot of that wire. Applied unnormalized; evaluators that need a
    /// normalized state divide by the accumulated branch probability.
    ResetTo { wire: usize, branch: u8 },
}

/// A gate program with optional resets, evaluated over a parameter vector.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub n_qubits: usize,
    pub n_params: usize,
    pub instrs: Vec<Instr>,
    /// Instruction counts after which a logical layer ends (noise insertion
    /// points for per-layer channel placement). A mark of 0 refers to the
    /// prepared input state.
    pub layer_boundaries: Vec<usize>,
    /// Instruction counts right after data-encoding operations.
    pub encoding_marks: Vec<usize>,
}

impl Program {
    /// Wrap a plain circuit; the initial state preparation counts as the
    /// encoding point.
    pub fn from_circuit(circuit: &ParamCircuit) -> Self {
        Self {
            n_qubits: circuit.n_qubits,
            n_params: circuit.n_params,
            instrs: circuit.ops.iter().cloned().map(Instr::Gate).collect(),
            layer_boundaries: circuit.layer_boundaries.clone(),
            encoding_marks: vec![0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_index_uses_qubit0_as_msb() {
        // |01> on two qubits: qubit 0 = 0, qubit 1 = 1 -> index 1.
        let s = Statevector::basis_state(2, 0b01);
        assert_eq!(s.prob_one(0), 0.0);
        assert_eq!(s.prob_one(1), 1.0);
    }

    #[test]
    fn from_amplitudes_normalizes() {
        let s = Statevector::from_amplitudes(vec![C64::new(3.0, 0.0), C64::new(4.0, 0.0)]).unwrap();
        assert!((s.amps()[0].re - 0.6).abs() < 1e-15);
        assert!((s.amps()[1].re - 0.8).abs() < 1e-15);
    }

    #[test]
    fn from_amplitudes_rejects_zero_and_badlen() {
        assert!(Statevector::from_amplitudes(vec![C64::new(0.0, 0.0); 4]).is_err());
        assert!(Statevector::from_amplitudes(vec![C64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn gate_validation_catches_bad_shapes() {
        let mut c = ParamCircuit::new(2, 1);
        assert!(c
            .push(GateOp::new(GateKind::RX, vec![2], vec![0]))
            .is_err());
        assert!(c
            .push(GateOp::new(GateKind::Swap, vec![0, 0], vec![]))
            .is_err());
        assert!(c
            .push(GateOp::new(GateKind::U3, vec![0], vec![0]))
            .is_err());
        assert!(c
            .push(GateOp::new(GateKind::RX, vec![0], vec![5]))
            .is_err());
        assert!(c.push(GateOp::new(GateKind::RX, vec![0], vec![0])).is_ok());
    }

    #[test]
    fn unused_slots_are_reported() {
        let mut c = ParamCircuit::new(1, 3);
        c.gate(GateKind::RY, &[0], &[1]);
        assert_eq!(c.unused_slots(), vec![0, 2]);
    }
}
