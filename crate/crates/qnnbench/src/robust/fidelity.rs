//! Mean squared overlap between clean and perturbed encoded states.

use super::RobustError;
use crate::data::Sample;
use crate::models::Classifier;

/// `mean |<psi_adv | psi_clean>|^2` over paired sets, using the model's own
/// encoding pipeline.
pub fn average_fidelity(
    model: &dyn Classifier,
    clean: &[Sample],
    adv: &[Sample],
) -> Result<f64, RobustError> {
    if clean.len() != adv.len() {
        return Err(RobustError::UnpairedSets {
            clean: clean.len(),
            adv: adv.len(),
        });
    }
    if clean.is_empty() {
        return Err(RobustError::EmptySamples);
    }
    let mut acc = 0.0;
    for (c, a) in clean.iter().zip(adv) {
        acc += model.encoding_fidelity(a, c)?;
    }
    Ok(acc / clean.len() as f64)
}
