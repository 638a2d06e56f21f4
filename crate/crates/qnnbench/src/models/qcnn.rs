//! Convolutional quantum classifier on six qubits.
//!
//! Amplitude-encoded 64-pixel input -> two rounds of convolution
//! (per-qubit U3 followed by IsingXX/YY/ZZ on adjacent active pairs) and
//! pooling (deferred-measurement controlled-U3, retiring half the active
//! wires) -> a universal two-qubit block on the survivors -> Z readout.
//!
//! Pooling keeps the forward pass deterministic and differentiable: the
//! measured wire becomes the control of a quantum-controlled rotation, which
//! is statistically equivalent to measuring and feeding the outcome forward.

use super::{
    check_param_len, AnsatzReport, Classifier, EvalCtx, ModelError, ModelKind, Prediction,
    TensorSpec,
};
use crate::data::{preprocess_qcnn, EncodingMode, Sample};
use crate::noise::NoiseConfig;
use crate::sim::{
    adjoint_gradient, apply_circuit, expectation, GateKind, Observable, ParamCircuit, Program,
    Statevector,
};
use crate::train::loss::bce_with_grad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N_QUBITS: usize = 6;

pub struct QcnnModel {
    circuit: ParamCircuit,
    readout: Observable,
    readout_wire: usize,
    layout: Vec<TensorSpec>,
}

fn conv_block(c: &mut ParamCircuit, active: &[usize], next: &mut usize) -> (usize, usize) {
    let start = *next;
    for &w in active {
        c.gate(GateKind::U3, &[w], &[*next, *next + 1, *next + 2]);
        *next += 3;
    }
    for pair in active.windows(2) {
        for kind in [GateKind::IsingXX, GateKind::IsingYY, GateKind::IsingZZ] {
            c.gate(kind, &[pair[0], pair[1]], &[*next]);
            *next += 1;
        }
    }
    c.mark_layer();
    (start, *next)
}

fn pool_block(
    c: &mut ParamCircuit,
    pairs: &[(usize, usize)],
    next: &mut usize,
) -> (usize, usize) {
    let start = *next;
    for &(measured, kept) in pairs {
        c.gate(
            GateKind::ControlledU3,
            &[measured, kept],
            &[*next, *next + 1, *next + 2],
        );
        *next += 3;
    }
    c.mark_layer();
    (start, *next)
}

impl QcnnModel {
    pub fn new() -> Self {
        let mut c = ParamCircuit::new(N_QUBITS, 75);
        let mut next = 0usize;
        let mut layout = Vec::new();
        let span = |name: &str, range: (usize, usize), layout: &mut Vec<TensorSpec>| {
            layout.push(TensorSpec {
                name: name.to_string(),
                shape: vec![range.1 - range.0],
                offset: range.0,
            });
        };

        // Conv 1 on all six wires, pool 6 -> 3 (controls 0, 2, 4 retire).
        let r = conv_block(&mut c, &[0, 1, 2, 3, 4, 5], &mut next);
        span("conv1", r, &mut layout);
        let r = pool_block(&mut c, &[(0, 1), (2, 3), (4, 5)], &mut next);
        span("pool1", r, &mut layout);
        // Conv 2 on survivors {1, 3, 5}, pool 3 -> 2 (wire 1 retires).
        let r = conv_block(&mut c, &[1, 3, 5], &mut next);
        span("conv2", r, &mut layout);
        let r = pool_block(&mut c, &[(1, 3)], &mut next);
        span("pool2", r, &mut layout);
        // Fully connected universal block on the final pair {3, 5}.
        let start = next;
        let slots: Vec<usize> = (next..next + 15).collect();
        c.gate(GateKind::ArbitraryUnitary, &[3, 5], &slots);
        next += 15;
        c.mark_layer();
        span("fc", (start, next), &mut layout);
        assert_eq!(next, 75);

        let readout_wire = 3;
        Self {
            readout: Observable::z_on(N_QUBITS, readout_wire),
            readout_wire,
            circuit: c,
            layout,
        }
    }

    pub fn readout_wire(&self) -> usize {
        self.readout_wire
    }

    fn encode(&self, sample: &Sample) -> Result<(Statevector, crate::data::EncodedInput), ModelError> {
        let enc = preprocess_qcnn(sample)?;
        if enc.mode != EncodingMode::Amplitude {
            return Err(ModelError::WrongEncoding {
                expected: "amplitude",
            });
        }
        let amps = enc
            .payload
            .iter()
            .map(|&v| crate::sim::C64::new(v, 0.0))
            .collect();
        let state = Statevector::from_amplitudes(amps)?;
        Ok((state, enc))
    }

    fn prediction_from_expectation(&self, e: f64) -> Prediction {
        Prediction {
            probs: vec![(1.0 + e) / 2.0, (1.0 - e) / 2.0],
            logits: vec![e, -e],
        }
    }

    /// Loss plus gradient; also returns the pixel gradient when requested.
    fn grads(
        &self,
        params: &[f64],
        sample: &Sample,
        label: usize,
        want_pixels: bool,
    ) -> Result<(f64, Vec<f64>, Option<Vec<f64>>), ModelError> {
        check_param_len(params, self.n_params())?;
        if label >= 2 {
            return Err(ModelError::BadLabel {
                label,
                n_classes: 2,
            });
        }
        let (state, enc) = self.encode(sample)?;
        let r = adjoint_gradient(&self.circuit, params, &state, &self.readout)?;
        let p1 = (1.0 - r.value) / 2.0;
        let (loss, dl_dp1) = bce_with_grad(p1, label as f64);
        let dl_de = -0.5 * dl_dp1;
        let grad: Vec<f64> = r.grad_params.iter().map(|g| g * dl_de).collect();
        let gpix = if want_pixels {
            let g_amps: Vec<f64> = r
                .grad_input_amps
                .iter()
                .map(|g| 2.0 * g.re * dl_de)
                .collect();
            Some(enc.provenance.grad_to_pixels(&g_amps)?)
        } else {
            None
        };
        Ok((loss, grad, gpix))
    }
}

impl Default for QcnnModel {
    fn default() -> Self {
        Self::new()
    }
}

impl Classifier for QcnnModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Qcnn
    }

    fn n_classes(&self) -> usize {
        2
    }

    fn n_params(&self) -> usize {
        self.circuit.n_params
    }

    fn param_layout(&self) -> Vec<TensorSpec> {
        self.layout.clone()
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.n_params())
            .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect()
    }

    fn forward(
        &self,
        params: &[f64],
        sample: &Sample,
        _ctx: EvalCtx,
    ) -> Result<Prediction, ModelError> {
        check_param_len(params, self.n_params())?;
        let (state, _) = self.encode(sample)?;
        let out = apply_circuit(&state, &self.circuit, params)?;
        let e = expectation(&out, &self.readout)?;
        Ok(self.prediction_from_expectation(e))
    }

    fn loss_and_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        label: usize,
        _ctx: EvalCtx,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let (loss, grad, _) = self.grads(params, sample, label, false)?;
        Ok((loss, grad))
    }

    fn input_loss_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        label: usize,
        _ctx: EvalCtx,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let (loss, _, gpix) = self.grads(params, sample, label, true)?;
        Ok((loss, gpix.expect("requested pixel gradient")))
    }

    fn logit_input_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        _ctx: EvalCtx,
    ) -> Result<Vec<f64>, ModelError> {
        check_param_len(params, self.n_params())?;
        let (state, enc) = self.encode(sample)?;
        let r = adjoint_gradient(&self.circuit, params, &state, &self.readout)?;
        // Predicted-class logit: +<Z> for class 0, -<Z> for class 1.
        let sign = if r.value >= 0.0 { 1.0 } else { -1.0 };
        let g_amps: Vec<f64> = r
            .grad_input_amps
            .iter()
            .map(|g| 2.0 * g.re * sign)
            .collect();
        Ok(enc.provenance.grad_to_pixels(&g_amps)?)
    }

    fn forward_noisy(
        &self,
        params: &[f64],
        sample: &Sample,
        noise: &NoiseConfig,
        seed: u64,
    ) -> Result<Prediction, ModelError> {
        check_param_len(params, self.n_params())?;
        let (state, _) = self.encode(sample)?;
        let program = Program::from_circuit(&self.circuit);
        let e = crate::noise::noisy_expectation(&program, params, &state, &self.readout, noise, seed)?;
        Ok(self.prediction_from_expectation(e))
    }

    fn encoding_fidelity(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError> {
        let (sa, _) = self.encode(a)?;
        let (sb, _) = self.encode(b)?;
        Ok(sa.fidelity(&sb))
    }

    fn structure(&self) -> AnsatzReport {
        AnsatzReport {
            model: ModelKind::Qcnn,
            qubits: N_QUBITS,
            gate_count: self.circuit.ops.len(),
            param_gate_count: self.circuit.parameterized_gate_count(),
            n_params: self.circuit.n_params,
            circuit_depth: self.circuit.depth(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::dense_matrix_oracle;

    fn uniform_sample() -> Sample {
        Sample {
            pixels: vec![0.5; 784],
            label: 0,
            width: 28,
            height: 28,
            channels: 1,
        }
    }

    fn textured_sample(seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sample {
            pixels: (0..784).map(|_| rng.gen_range(0.0..1.0)).collect(),
            label: 1,
            width: 28,
            height: 28,
            channels: 1,
        }
    }

    #[test]
    fn zero_params_uniform_input_gives_even_probs() {
        let m = QcnnModel::new();
        let params = vec![0.0; m.n_params()];
        let pred = m
            .forward(&params, &uniform_sample(), EvalCtx::exact())
            .unwrap();
        assert!((pred.probs[0] - 0.5).abs() < 1e-12);
        assert!((pred.probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = QcnnModel::new();
        let params = m.init_params(3);
        let pred = m
            .forward(&params, &textured_sample(5), EvalCtx::exact())
            .unwrap();
        assert!((pred.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pred.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn forward_matches_dense_oracle() {
        let m = QcnnModel::new();
        let params = m.init_params(11);
        let sample = textured_sample(7);
        let (state, _) = m.encode(&sample).unwrap();
        let u = dense_matrix_oracle(&m.circuit, &params).unwrap();
        let via_oracle = u.apply(&state);
        let e_oracle = expectation(&via_oracle, &m.readout).unwrap();
        let pred = m.forward(&params, &sample, EvalCtx::exact()).unwrap();
        assert!((pred.logits[0] - e_oracle).abs() < 1e-10);
    }

    #[test]
    fn structure_reports_fixed_topology() {
        let m = QcnnModel::new();
        let s = m.structure();
        assert_eq!(s.qubits, 6);
        assert_eq!(s.n_params, 75);
        assert!(s.circuit_depth >= 12, "depth {}", s.circuit_depth);
        // Lowered parameterized primitives: 21 (conv1) + 3 (pool1) + 9
        // (conv2) + 1 (pool2) + 7 (universal block).
        assert_eq!(s.param_gate_count, 41);
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        let m = QcnnModel::new();
        let params = m.init_params(23);
        let sample = textured_sample(3);
        let ctx = EvalCtx::exact();
        let (_, grad) = m.loss_and_grad(&params, &sample, 1, ctx).unwrap();
        let h = 1e-5;
        for k in [0usize, 10, 33, 50, 74] {
            let mut p = params.clone();
            p[k] += h;
            let (lp, _) = m.loss_and_grad(&p, &sample, 1, ctx).unwrap();
            p[k] -= 2.0 * h;
            let (lm, _) = m.loss_and_grad(&p, &sample, 1, ctx).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() < 1e-6 * fd.abs().max(1.0),
                "slot {k}: fd {fd} vs {}",
                grad[k]
            );
        }
    }

    #[test]
    fn pixel_gradient_matches_finite_differences() {
        let m = QcnnModel::new();
        let params = m.init_params(2);
        let sample = textured_sample(9);
        let ctx = EvalCtx::exact();
        let (_, gpix) = m.input_loss_grad(&params, &sample, 0, ctx).unwrap();
        let h = 1e-5;
        for j in [0usize, 97, 391, 620] {
            let mut plus = sample.clone();
            let mut minus = sample.clone();
            plus.pixels[j] += h;
            minus.pixels[j] -= h;
            let (lp, _) = m.loss_and_grad(&params, &plus, 0, ctx).unwrap();
            let (lm, _) = m.loss_and_grad(&params, &minus, 0, ctx).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - gpix[j]).abs() < 1e-4 * fd.abs().max(1e-2),
                "pixel {j}: fd {fd} vs {}",
                gpix[j]
            );
        }
    }
}
