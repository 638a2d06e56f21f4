//! Accuracy surfaces over channel kind, channel probability and shot count.

use super::RobustError;
use crate::data::Sample;
use crate::models::Classifier;
use crate::noise::{make_channel, ChannelKind, InsertAfter, NoiseConfig, Shots};
use crate::util::splitmix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisePoint {
    pub channel: ChannelKind,
    pub p: f64,
    pub shots: Shots,
    pub accuracy: f64,
}

/// Evaluate accuracy for every (channel, p, shots) combination. The `p = 0`
/// exact-shot rows reproduce the clean accuracy of the same exact evaluation
/// path by construction.
pub fn noise_sweep(
    model: &dyn Classifier,
    params: &[f64],
    samples: &[Sample],
    channels: &[ChannelKind],
    p_grid: &[f64],
    shots_grid: &[Shots],
    insert_after: InsertAfter,
    seed: u64,
) -> Result<Vec<NoisePoint>, RobustError> {
    if samples.is_empty() {
        return Err(RobustError::EmptySamples);
    }
    let mut out = Vec::new();
    for &channel in channels {
        for &p in p_grid {
            for &shots in shots_grid {
                let noise = NoiseConfig {
                    channel: if p == 0.0 {
                        None
                    } else {
                        Some(make_channel(channel, p).map_err(crate::models::ModelError::from)?)
                    },
                    insert_after,
                    readout_flip_p: 0.0,
                    shots,
                    ..NoiseConfig::default()
                };
                let correct: Vec<bool> = samples
                    .par_iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let pred = model.forward_noisy(
                            params,
                            s,
                            &noise,
                            splitmix64(seed, (i as u64) << 8 | (shots_key(shots) & 0xff)),
                        )?;
                        Ok(pred.predicted_class() == s.label as usize)
                    })
                    .collect::<Result<_, RobustError>>()?;
                let accuracy =
                    correct.iter().filter(|c| **c).count() as f64 / samples.len() as f64;
                out.push(NoisePoint {
                    channel,
                    p,
                    shots,
                    accuracy,
                });
            }
        }
    }
    Ok(out)
}

fn shots_key(shots: Shots) -> u64 {
    match shots {
        Shots::Exact => 0,
        Shots::Count(k) => k as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{accuracy, EvalCtx, QcnnModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(n: usize) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..n)
            .map(|i| Sample {
                pixels: (0..784).map(|_| rng.gen_range(0.05..0.95)).collect(),
                label: (i % 2) as u8,
                width: 28,
                height: 28,
                channels: 1,
            })
            .collect()
    }

    #[test]
    fn zero_probability_row_equals_clean_accuracy() {
        let m = QcnnModel::new();
        let params = m.init_params(3);
        let set = samples(12);
        let clean = accuracy(&m, &params, &set, EvalCtx::exact()).unwrap();
        let points = noise_sweep(
            &m,
            &params,
            &set,
            &[ChannelKind::Depolarizing],
            &[0.0, 0.3],
            &[Shots::Exact],
            InsertAfter::EveryLayer,
            5,
        )
        .unwrap();
        assert_eq!(points[0].p, 0.0);
        assert_eq!(points[0].accuracy, clean);
        assert_eq!(points.len(), 2);
    }
}
