//! Sensitivity certificates: the closed-form bound for angle-encoded models
//! and the empirical input-gradient estimator for everything else.

use super::RobustError;
use crate::data::Sample;
use crate::models::{Classifier, EvalCtx, EvalMode};
use crate::util::splitmix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradNorm {
    L2,
    Linf,
}

fn norm_of(g: &[f64], norm: GradNorm) -> f64 {
    match norm {
        GradNorm::L2 => g.iter().map(|x| x * x).sum::<f64>().sqrt(),
        GradNorm::Linf => g.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

/// `L = 2 ||M|| sum_j ||omega_j|| ||H_j||`: readout operator norm times the
/// per-feature products of preprocessing weight norm and encoding-generator
/// norm.
pub fn lipschitz_formula(obs_norm: f64, features: &[(f64, f64)]) -> f64 {
    2.0 * obs_norm
        * features
            .iter()
            .map(|(omega, h)| omega * h)
            .sum::<f64>()
}

/// Closed-form bound for models with an angle-encoding path. The recurrent
/// model qualifies: each sequence feature enters one `RY` gate (generator
/// norm 1/2) through the fixed patch-averaging weights scaled by pi (the
/// data-dependent min-max renormalization is excluded from the surrogate;
/// the empirical estimator covers the full pipeline). Amplitude-encoded
/// models have no per-feature generator, so they report an error and fall
/// back to the empirical bound.
pub fn lipschitz_analytic(
    model: &dyn Classifier,
    image: (usize, usize, usize),
) -> Result<f64, RobustError> {
    let grid = model.angle_grid().ok_or(RobustError::NoAngleEncodingPath)?;
    // Rebuild the patch-mean weights through the real preprocessing pipeline
    // on a probe sample, then scale rows by pi (the angle range).
    let (w, h, ch) = image;
    let probe = Sample {
        pixels: (0..w * h * ch).map(|i| (i % 7) as f64 / 7.0).collect(),
        label: 0,
        width: w,
        height: h,
        channels: ch,
    };
    // The readout observable is a Z-sum over hidden wires; its operator norm
    // is the number of terms.
    let report = model.structure();
    let obs_norm = (report.qubits - 1) as f64;
    let enc =
        crate::data::preprocess_qrnn(&probe, grid).map_err(crate::models::ModelError::from)?;
    let features: Vec<(f64, f64)> = match &enc.provenance {
        crate::data::Provenance::AngleMinMax { map, .. } => (0..map.out_dim())
            .map(|i| (std::f64::consts::PI * map.row_norm(i), 0.5))
            .collect(),
        _ => return Err(RobustError::NoAngleEncodingPath),
    };
    Ok(lipschitz_formula(obs_norm, &features))
}

/// Maximum gradient norm of the predicted-class logit over a sample set.
pub fn lipschitz_empirical(
    model: &dyn Classifier,
    params: &[f64],
    samples: &[Sample],
    norm: GradNorm,
    seed: u64,
) -> Result<f64, RobustError> {
    if samples.is_empty() {
        return Err(RobustError::EmptySamples);
    }
    let norms: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let ctx = EvalCtx {
                mode: EvalMode::Fast,
                seed: splitmix64(seed, i as u64),
            };
            let g = model.logit_input_grad(params, s, ctx)?;
            Ok(norm_of(&g, norm))
        })
        .collect::<Result<_, RobustError>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}
