//! The three hybrid classifiers as differentiable forward functions over the
//! shared simulator primitives.
//!
//! Each model owns its circuit topology and parameter layout and exposes a
//! uniform [`Classifier`] surface: forward evaluation, loss gradients with
//! respect to parameters and with respect to raw pixels (chained through the
//! preprocessing provenance), noisy evaluation, and an encoding-fidelity
//! kernel for robustness metrics.

pub mod checkpoint;
pub mod layers;
mod qcnn;
mod qrnn;
mod qvit;

pub use qcnn::QcnnModel;
pub use qrnn::QrnnModel;
pub use qvit::{qsal_layer, QvitConfig, QvitModel};

use crate::data::{DataError, Sample};
use crate::noise::{NoiseConfig, NoiseError};
use crate::sim::SimError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("wrong encoding mode: expected {expected}")]
    WrongEncoding { expected: &'static str },
    #[error("parameter vector length {got}, model has {expected}")]
    BadParamLength { got: usize, expected: usize },
    #[error("zero token vector cannot be amplitude-encoded")]
    ZeroToken,
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: usize, n_classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Qcnn,
    Qrnn,
    Qvit,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Qcnn => "qcnn",
            ModelKind::Qrnn => "qrnn",
            ModelKind::Qvit => "qvit",
        }
    }
}

/// Class probabilities plus the pre-activation scores they came from. For the
/// binary expectation-readout models the logit of class `c` is the signed raw
/// expectation; for the transformer they are the pre-softmax scores.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Prediction {
    pub fn predicted_class(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Evaluation mode for models with stochastic internals (register reuse).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Statevector path; resets collapse onto a Born-sampled branch drawn
    /// deterministically from the context seed.
    Fast,
    /// Density-matrix path; resets are exact channels.
    Exact,
}

/// Per-evaluation context: mode plus the seed that fixes any sampled
/// branches. Pure models ignore both.
#[derive(Debug, Clone, Copy)]
pub struct EvalCtx {
    pub mode: EvalMode,
    pub seed: u64,
}

impl EvalCtx {
    pub fn fast(seed: u64) -> Self {
        Self {
            mode: EvalMode::Fast,
            seed,
        }
    }

    pub fn exact() -> Self {
        Self {
            mode: EvalMode::Exact,
            seed: 0,
        }
    }
}

/// Named view into the flat parameter vector, in serialization order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Structural summary of a model's quantum side: register width, gate and
/// parameter counts, circuit depth. `param_gate_count` counts parameterized
/// primitive gates (the complexity measure the generalization bound uses);
/// `n_params` counts trainable parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnsatzReport {
    pub model: ModelKind,
    pub qubits: usize,
    pub gate_count: usize,
    pub param_gate_count: usize,
    pub n_params: usize,
    pub circuit_depth: usize,
}

/// Uniform classifier surface over the three architectures.
pub trait Classifier: Sync + Send {
    fn kind(&self) -> ModelKind;
    fn n_classes(&self) -> usize;
    fn n_params(&self) -> usize;
    fn param_layout(&self) -> Vec<TensorSpec>;
    fn init_params(&self, seed: u64) -> Vec<f64>;

    fn forward(
        &self,
        params: &[f64],
        sample: &Sample,
        ctx: EvalCtx,
    ) -> Result<Prediction, ModelError>;

    /// Training loss and its gradient with respect to every parameter.
    fn loss_and_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        label: usize,
        ctx: EvalCtx,
    ) -> Result<(f64, Vec<f64>), ModelError>;

    /// Training loss and its gradient in raw pixel space, chained through the
    /// model's preprocessing provenance.
    fn input_loss_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        label: usize,
        ctx: EvalCtx,
    ) -> Result<(f64, Vec<f64>), ModelError>;

    /// Gradient of the predicted-class logit in raw pixel space.
    fn logit_input_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        ctx: EvalCtx,
    ) -> Result<Vec<f64>, ModelError>;

    /// Evaluation under a noise configuration (exact mixed-state path for the
    /// register widths used here).
    fn forward_noisy(
        &self,
        params: &[f64],
        sample: &Sample,
        noise: &NoiseConfig,
        seed: u64,
    ) -> Result<Prediction, ModelError>;

    /// `|<psi_a|psi_b>|^2` between the model's own encodings of two samples.
    fn encoding_fidelity(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError>;

    fn structure(&self) -> AnsatzReport;

    /// Patch grid of the angle-encoding pipeline, for models that have one;
    /// the closed-form Lipschitz bound is only defined on that path.
    fn angle_grid(&self) -> Option<usize> {
        None
    }
}

/// Construct the default instance of a model kind for a dataset shape.
pub fn build_model(
    kind: ModelKind,
    sample_shape: (usize, usize, usize),
    n_classes: usize,
) -> Box<dyn Classifier> {
    let (_width, _height, channels) = sample_shape;
    match kind {
        ModelKind::Qcnn => Box::new(QcnnModel::new()),
        ModelKind::Qrnn => {
            // Eight qubits on single-channel 28x28 inputs, twelve on 32x32
            // color inputs.
            let n_qubits = if channels == 3 { 12 } else { 8 };
            Box::new(QrnnModel::new(n_qubits, 2, 4))
        }
        ModelKind::Qvit => {
            let d_model = if channels == 3 { 96 } else { 32 };
            Box::new(QvitModel::new(QvitConfig {
                image: sample_shape,
                patch: 4,
                d_model,
                n_layers: if channels == 3 { 2 } else { 1 },
                q_qubits: 5,
                q_depth: 8,
                ffn_hidden: 2 * d_model,
                n_classes,
            }))
        }
    }
}

/// Convenience used by tests: argmax-accuracy of a model over labeled
/// samples.
pub fn accuracy(
    model: &dyn Classifier,
    params: &[f64],
    samples: &[Sample],
    ctx: EvalCtx,
) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        let pred = model.forward(params, s, ctx)?;
        if pred.predicted_class() == s.label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

pub(crate) fn check_params(params: &[f64], expected: usize) -> Result<(), ModelError> {
    if params.len() != expected {
        return Err(ModelError::BadParamLength {
            got: params.len(),
            expected,
        });
    }
    Ok(())
}

pub(crate) use check_params as check_param_len;
