//! Dataset ingestion, binary class splits, per-model preprocessing and
//! classical-to-quantum encodings.
//!
//! Every preprocessing pipeline keeps an explicit provenance object so that
//! loss gradients can be chained exactly back to raw pixel space; this is
//! what the attack engine differentiates through.

mod cifar;
mod mnist;
mod preprocess;
mod split;
pub mod synth;

pub use cifar::{load_cifar10, load_cifar_file};
pub use mnist::{load_mnist, MnistSplit};
pub use preprocess::{
    amplitude_encode, angle_encode, patch_layout, preprocess_qcnn, preprocess_qrnn,
    preprocess_qvit, PatchLayout,
};
pub use split::make_binary_split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the dataset root directory; the CLI flag
/// `--data-root` overrides it.
pub const DATA_ROOT_ENV: &str = "QNNBENCH_DATA_ROOT";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic number {got:#010x} in {path} (expected {expected:#010x})")]
    BadMagic {
        path: String,
        got: u32,
        expected: u32,
    },
    #[error("truncated file {path}: needed {needed} bytes, got {got}")]
    Truncated {
        path: String,
        needed: usize,
        got: usize,
    },
    #[error("unexpected image dimensions {rows}x{cols} in {path}")]
    BadDimensions {
        path: String,
        rows: usize,
        cols: usize,
    },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("file length {len} is not a multiple of the {record}-byte record size")]
    BadRecordLength { len: usize, record: usize },
    #[error("class {class} has only {got} samples, need {need}")]
    InsufficientSamples { class: u8, got: usize, need: usize },
    #[error("requested train size {n} is not usable")]
    BadTrainSize { n: usize },
    #[error("cannot encode an all-zero vector")]
    ZeroInput,
    #[error("patch size {patch} does not divide image dims {width}x{height}")]
    NonDivisiblePatch {
        patch: usize,
        width: usize,
        height: usize,
    },
    #[error("degenerate grid {rows}x{cols}")]
    DegenerateGrid { rows: usize, cols: usize },
    #[error("min-max scaler has degenerate range; input gradient undefined")]
    DegenerateRange,
}

/// One image with pixels in [0, 1]. MNIST: 28x28 single channel, row-major.
/// CIFAR-10: 32x32x3 planar (full R plane, then G, then B).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub pixels: Vec<f64>,
    pub label: u8,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Sample {
    pub fn n_pixels(&self) -> usize {
        self.width * self.height * self.channels
    }
}

/// Train/test split, optionally restricted to a remapped binary class pair.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Original class ids (a, b) remapped to labels (0, 1).
    pub class_pair: Option<(u8, u8)>,
}

/// How classical features become quantum data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    Amplitude,
    Angle,
}

/// Sparse linear map from pixel space to a feature vector; rows hold
/// `(pixel_index, weight)` pairs.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub in_dim: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl LinearMap {
    pub fn out_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * x[j]).sum())
            .collect()
    }

    /// `A^T g`: push a feature-space gradient back to pixel space.
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (row, &gi) in self.rows.iter().zip(g) {
            if gi == 0.0 {
                continue;
            }
            for &(j, w) in row {
                out[j] += w * gi;
            }
        }
        out
    }

    /// Euclidean norm of row `i`, i.e. the preprocessing weight vector
    /// feeding encoded feature `i`.
    pub fn row_norm(&self, i: usize) -> f64 {
        self.rows[i]
            .iter()
            .map(|&(_, w)| w * w)
            .sum::<f64>()
            .sqrt()
    }
}

/// Gradient-chaining record for one encoded input.
#[derive(Debug, Clone)]
pub enum Provenance {
    /// Pixels -> (luminance) -> box filter -> l2 normalization.
    AmplitudeNorm {
        map: LinearMap,
        /// Pre-normalization feature vector and its l2 norm.
        prenorm: Vec<f64>,
        norm: f64,
    },
    /// Pixels -> patch means -> min-max rescale to [0, pi].
    AngleMinMax {
        map: LinearMap,
        means: Vec<f64>,
        min_idx: usize,
        max_idx: usize,
        range: f64,
    },
}

impl Provenance {
    /// Chain a payload-space gradient back to pixel space.
    pub fn grad_to_pixels(&self, grad_payload: &[f64]) -> Result<Vec<f64>, DataError> {
        match self {
            Provenance::AmplitudeNorm { map, prenorm, norm } => {
                // a = v / |v|; da_i/dv_j = (delta_ij - a_i a_j) / |v|
                let a: Vec<f64> = prenorm.iter().map(|v| v / norm).collect();
                let dot: f64 = grad_payload.iter().zip(&a).map(|(g, ai)| g * ai).sum();
                let gv: Vec<f64> = grad_payload
                    .iter()
                    .zip(&a)
                    .map(|(g, ai)| (g - dot * ai) / norm)
                    .collect();
                Ok(map.apply_transpose(&gv))
            }
            Provenance::AngleMinMax {
                map,
                means,
                min_idx,
                max_idx,
                range,
            } => {
                if *range < 1e-12 {
                    return Err(DataError::DegenerateRange);
                }
                let pi = std::f64::consts::PI;
                let m_min = means[*min_idx];
                let s1: f64 = grad_payload.iter().sum();
                let s2: f64 = grad_payload
                    .iter()
                    .zip(means)
                    .map(|(g, m)| g * pi * (m - m_min) / range)
                    .sum();
                let mut gm: Vec<f64> = grad_payload.iter().map(|g| g * pi / range).collect();
                gm[*min_idx] += -pi / range * s1 + s2 / range;
                gm[*max_idx] += -s2 / range;
                Ok(map.apply_transpose(&gm))
            }
        }
    }
}

/// A classically preprocessed, quantum-ready input.
#[derive(Debug, Clone)]
pub struct EncodedInput {
    pub mode: EncodingMode,
    /// Amplitude: unit-norm vector of length `2^k`. Angle: values in [0, pi].
    pub payload: Vec<f64>,
    pub provenance: Provenance,
}
