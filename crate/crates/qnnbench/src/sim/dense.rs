//! Brute-force dense unitary construction, used as a test oracle for the
//! statevector kernels. Capped at 6 qubits.

use super::gates::{apply_prim, lower_circuit};
use super::{C64, ParamCircuit, SimError, Statevector};

const MAX_ORACLE_QUBITS: usize = 6;

/// Column-major square complex matrix; each column is a statevector image of
/// a basis vector, so gate kernels apply column by column.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    dim: usize,
    cols: Vec<C64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut cols = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            cols[i * dim + i] = C64::new(1.0, 0.0);
        }
        Self { dim, cols }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.cols[col * self.dim + row]
    }

    /// `self * state`.
    pub fn apply(&self, state: &Statevector) -> Statevector {
        let dim = self.dim;
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for (c, amp) in state.amps().iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let col = &self.cols[c * dim..(c + 1) * dim];
            for r in 0..dim {
                out[r] += col[r] * amp;
            }
        }
        Statevector {
            n_qubits: state.n_qubits(),
            amps: out,
        }
    }

    /// `max_{ij} |(U^dag U - I)_{ij}|`.
    pub fn unitarity_error(&self) -> f64 {
        let dim = self.dim;
        let mut worst = 0.0f64;
        for a in 0..dim {
            for b in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..dim {
                    acc += self.get(r, a).conj() * self.get(r, b);
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((acc - C64::new(expect, 0.0)).norm());
            }
        }
        worst
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> C64 {
        let dim = self.dim;
        let mut m: Vec<C64> = (0..dim * dim)
            .map(|i| self.get(i / dim, i % dim))
            .collect();
        let mut det = C64::new(1.0, 0.0);
        for k in 0..dim {
            let pivot = (k..dim)
                .max_by(|&a, &b| {
                    m[a * dim + k]
                        .norm()
                        .partial_cmp(&m[b * dim + k].norm())
                        .unwrap()
                })
                .unwrap();
            if m[pivot * dim + k].norm() == 0.0 {
                return C64::new(0.0, 0.0);
            }
            if pivot != k {
                for j in 0..dim {
                    m.swap(k * dim + j, pivot * dim + j);
                }
                det = -det;
            }
            let pk = m[k * dim + k];
            det *= pk;
            for r in k + 1..dim {
                let f = m[r * dim + k] / pk;
                for j in k..dim {
                    let sub = f * m[k * dim + j];
                    m[r * dim + j] -= sub;
                }
            }
        }
        det
    }
}

/// Full `2^n x 2^n` unitary of a circuit, built by streaming each basis
/// column through the same lowered gate sequence the fast path uses per
/// amplitude pair, but with every gate realized as a dense column update.
pub fn dense_matrix_oracle(
    circuit: &ParamCircuit,
    params: &[f64],
) -> Result<DenseMatrix, SimError> {
    if circuit.n_qubits > MAX_ORACLE_QUBITS {
        return Err(SimError::TooManyQubits {
            max: MAX_ORACLE_QUBITS,
            got: circuit.n_qubits,
        });
    }
    circuit.check_params(params)?;
    for op in &circuit.ops {
        op.validate(circuit.n_qubits)?;
    }
    let n = circuit.n_qubits;
    let dim = 1usize << n;
    let mut u = DenseMatrix::identity(dim);
    let prims = lower_circuit(&circuit.ops);
    for prim in &prims {
        for col in u.cols.chunks_mut(dim) {
            apply_prim(col, n, prim, params);
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{GateKind, ParamCircuit};

    #[test]
    fn empty_circuit_gives_identity() {
        let c = ParamCircuit::new(2, 0);
        let u = dense_matrix_oracle(&c, &[]).unwrap();
        for r in 0..4 {
            for cc in 0..4 {
                let expect = if r == cc { 1.0 } else { 0.0 };
                assert!((u.get(r, cc) - C64::new(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn swap_is_a_permutation_matrix() {
        let mut c = ParamCircuit::new(2, 0);
        c.gate(GateKind::Swap, &[0, 1], &[]);
        let u = dense_matrix_oracle(&c, &[]).unwrap();
        // |01> <-> |10>, |00> and |11> fixed.
        let expected = [(0, 0), (1, 2), (2, 1), (3, 3)];
        for (r, cc) in expected {
            assert!((u.get(r, cc) - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert!(u.unitarity_error() < 1e-15);
    }

    #[test]
    fn u3_matches_standard_form_and_determinant() {
        let (t, p, l) = (0.7, 1.1, -0.4);
        let mut c = ParamCircuit::new(1, 3);
        c.gate(GateKind::U3, &[0], &[0, 1, 2]);
        let u = dense_matrix_oracle(&c, &[t, p, l]).unwrap();
        assert!(u.unitarity_error() < 1e-12);
        let det = u.determinant();
        let expected = C64::from_polar(1.0, p + l);
        assert!((det - expected).norm() < 1e-12);
        let (s, co) = (t / 2.0_f64).sin_cos();
        assert!((u.get(0, 0) - C64::new(co, 0.0)).norm() < 1e-12);
        assert!((u.get(0, 1) + C64::from_polar(1.0, l) * s).norm() < 1e-12);
        assert!((u.get(1, 0) - C64::from_polar(1.0, p) * s).norm() < 1e-12);
    }

    #[test]
    fn oracle_rejects_large_registers() {
        let c = ParamCircuit::new(7, 0);
        assert!(dense_matrix_oracle(&c, &[]).is_err());
    }

    #[test]
    fn arbitrary_unitary_is_unitary() {
        let mut c = ParamCircuit::new(2, 15);
        c.gate(
            GateKind::ArbitraryUnitary,
            &[0, 1],
            &(0..15).collect::<Vec<_>>(),
        );
        let params: Vec<f64> = (0..15).map(|i| 0.1 * (i as f64) - 0.7).collect();
        let u = dense_matrix_oracle(&c, &params).unwrap();
        assert!(u.unitarity_error() < 1e-12);
    }
}
