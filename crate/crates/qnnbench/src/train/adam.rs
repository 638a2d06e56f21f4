//! Adam with bias correction.

use super::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One in-place update. Rejects non-finite gradients rather than corrupting
/// the moments.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    debug_assert_eq!(params.len(), grads.len());
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { index, epoch: 0 });
    }
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * grads[i];
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, 0.01).unwrap();
        // Delta = -lr * 1 / (1 + eps)
        assert!((p[0] + 0.01 / (1.0 + EPS)).abs() < 1e-12, "p[0] = {}", p[0]);
    }

    #[test]
    fn constant_gradient_step_size_approaches_lr() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        let mut prev = 0.0;
        let mut delta = 0.0;
        for _ in 0..2000 {
            adam_step(&mut p, &[0.7], &mut st, 0.01).unwrap();
            delta = (p[0] - prev).abs();
            prev = p[0];
        }
        assert!((delta - 0.01).abs() < 1e-4, "step magnitude {delta}");
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::NAN], &mut st, 0.01).is_err());
        assert_eq!(p, vec![0.0]);
    }
}
