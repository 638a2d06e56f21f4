//! Classification and sequence losses. Probabilities are clamped to
//! `[1e-12, 1 - 1e-12]` inside the logs; the clamp never activates for
//! probabilities produced by a softmax or sigmoid of logits below ~27 in
//! magnitude.

use super::TrainError;

pub const PROB_CLAMP: f64 = 1e-12;

fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of predicting `p_hat = P(y = 1)` against a 0/1 label.
pub fn loss_bce(p_hat: f64, label: f64) -> f64 {
    let p = clamp_p(p_hat);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// BCE value and `dL/dp_hat`.
pub fn bce_with_grad(p_hat: f64, label: f64) -> (f64, f64) {
    let p = clamp_p(p_hat);
    let loss = -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
    let grad = (p - label) / (p * (1.0 - p));
    (loss, grad)
}

/// Categorical cross-entropy against a one-hot label index.
pub fn loss_cce(probs: &[f64], label: usize) -> f64 {
    -clamp_p(probs[label]).ln()
}

/// Mean BCE over a dataset of (p_hat, label) pairs.
pub fn dataset_bce(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|&(p, y)| loss_bce(p, y)).sum::<f64>() / pairs.len().max(1) as f64
}

/// Sequence regression loss: predictions in [0, 1] are rescaled by
/// `y * (x_max - x_min) + x_min` and compared to targets by mean squared
/// error over all entries. A degenerate range collapses the rescale to the
/// constant `x_min`.
pub fn loss_l2_sequence(
    preds: &[f64],
    targets: &[f64],
    x_min: f64,
    x_max: f64,
) -> Result<f64, TrainError> {
    if x_max < x_min {
        return Err(TrainError::InvertedRange {
            min: x_min,
            max: x_max,
        });
    }
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(TrainError::Empty {
            what: "prediction/target sequence",
        });
    }
    let range = x_max - x_min;
    let sum: f64 = preds
        .iter()
        .zip(targets)
        .map(|(&y, &t)| {
            let rescaled = y * range + x_min;
            (rescaled - t) * (rescaled - t)
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_reference_points() {
        assert!((loss_bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(loss_bce(1.0 - 1e-13, 1.0) < 1e-10);
        assert!((loss_bce(0.9, 0.0) - 2.302585092994046).abs() < 1e-12);
    }

    #[test]
    fn bce_gradient_matches_fd() {
        let h = 1e-7;
        for (p, y) in [(0.3, 1.0), (0.7, 0.0), (0.5, 1.0)] {
            let (_, g) = bce_with_grad(p, y);
            let fd = (loss_bce(p + h, y) - loss_bce(p - h, y)) / (2.0 * h);
            assert!((g - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn cce_reference_points() {
        let uniform = vec![0.1; 10];
        assert!((loss_cce(&uniform, 4) - (10.0f64).ln()).abs() < 1e-12);
        assert!(loss_cce(&[0.0, 1.0], 1) < 1e-10);
        assert!((loss_cce(&[0.7, 0.2, 0.1], 1) - 1.6094379124341003).abs() < 1e-12);
    }

    #[test]
    fn clamp_is_idle_for_moderate_logits() {
        // sigmoid(27) is still below the upper clamp threshold.
        let p = 1.0 / (1.0 + (-27.0f64).exp());
        assert_eq!(clamp_p(p), p);
        let p = 1.0 / (1.0 + (27.0f64).exp());
        assert_eq!(clamp_p(p), p);
    }

    #[test]
    fn l2_sequence_reference_points() {
        // Exact match after rescale.
        let preds = [0.25, 0.75];
        let targets = [0.5, 1.5];
        assert_eq!(loss_l2_sequence(&preds, &targets, 0.0, 2.0).unwrap(), 0.0);
        // Degenerate range collapses to x_min.
        let v = loss_l2_sequence(&[0.3], &[1.0], 1.0, 1.0).unwrap();
        assert_eq!(v, 0.0);
        // y=0.5 over [0, 2] against target 1.5 -> squared error 0.25.
        let v = loss_l2_sequence(&[0.5], &[1.5], 0.0, 2.0).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert!(loss_l2_sequence(&[0.5], &[1.0], 2.0, 0.0).is_err());
    }
}
