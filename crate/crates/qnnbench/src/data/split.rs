//! Balanced binary subsampling with deterministic shuffles.

use super::{DataError, DatasetSplit, Sample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Draw a balanced binary split: `train_n` training samples and `train_n/5`
/// test samples, split half-and-half (within one) between the two classes and
/// remapped to labels {0, 1}. Deterministic for a given seed.
pub fn make_binary_split(
    samples: &[Sample],
    pair: (u8, u8),
    train_n: usize,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    if train_n == 0 {
        return Err(DataError::BadTrainSize { n: train_n });
    }
    let test_n = train_n / 5;
    let (a, b) = pair;
    let mut idx_a: Vec<usize> = Vec::new();
    let mut idx_b: Vec<usize> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if s.label == a {
            idx_a.push(i);
        } else if s.label == b {
            idx_b.push(i);
        }
    }
    // Class balance exact to +-1 on both splits.
    let train_a = train_n / 2;
    let train_b = train_n - train_a;
    let test_a = test_n / 2;
    let test_b = test_n - test_a;
    for (class, idx, need) in [(a, &idx_a, train_a + test_a), (b, &idx_b, train_b + test_b)] {
        if idx.len() < need {
            return Err(DataError::InsufficientSamples {
                class,
                got: idx.len(),
                need,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx_a.shuffle(&mut rng);
    idx_b.shuffle(&mut rng);

    let remap = |i: usize| -> Sample {
        let mut s = samples[i].clone();
        s.label = if s.label == a { 0 } else { 1 };
        s
    };

    let mut train: Vec<Sample> = idx_a[..train_a]
        .iter()
        .chain(&idx_b[..train_b])
        .map(|&i| remap(i))
        .collect();
    let mut test: Vec<Sample> = idx_a[train_a..train_a + test_a]
        .iter()
        .chain(&idx_b[train_b..train_b + test_b])
        .map(|&i| remap(i))
        .collect();
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);

    Ok(DatasetSplit {
        train,
        test,
        class_pair: Some(pair),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(per_class: usize) -> Vec<Sample> {
        let mut out = Vec::new();
        for label in 0..10u8 {
            for k in 0..per_class {
                out.push(Sample {
                    pixels: vec![label as f64 / 10.0 + k as f64 * 1e-6; 4],
                    label,
                    width: 2,
                    height: 2,
                    channels: 1,
                });
            }
        }
        out
    }

    #[test]
    fn split_sizes_and_balance() {
        let samples = pool(400);
        let split = make_binary_split(&samples, (1, 7), 500, 42).unwrap();
        assert_eq!(split.train.len(), 500);
        assert_eq!(split.test.len(), 100);
        let ones = split.train.iter().filter(|s| s.label == 0).count();
        assert_eq!(ones, 250);
        let test_ones = split.test.iter().filter(|s| s.label == 0).count();
        assert_eq!(test_ones, 50);
        assert!(split.train.iter().all(|s| s.label <= 1));
    }

    #[test]
    fn zero_train_size_is_error() {
        let samples = pool(10);
        assert!(make_binary_split(&samples, (0, 1), 0, 1).is_err());
    }

    #[test]
    fn insufficient_samples_is_error() {
        let samples = pool(10);
        assert!(matches!(
            make_binary_split(&samples, (0, 1), 100, 1),
            Err(DataError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn same_seed_reproduces_split() {
        let samples = pool(200);
        let s1 = make_binary_split(&samples, (6, 9), 100, 7).unwrap();
        let s2 = make_binary_split(&samples, (6, 9), 100, 7).unwrap();
        let key = |v: &[Sample]| -> Vec<(u8, u64)> {
            v.iter()
                .map(|s| (s.label, (s.pixels[0] * 1e9) as u64))
                .collect()
        };
        assert_eq!(key(&s1.train), key(&s2.train));
        assert_eq!(key(&s1.test), key(&s2.test));
        let s3 = make_binary_split(&samples, (6, 9), 100, 8).unwrap();
        assert_ne!(key(&s1.train), key(&s3.train));
    }

    #[test]
    fn train_and_test_are_disjoint() {
        let samples = pool(200);
        let split = make_binary_split(&samples, (2, 3), 200, 5).unwrap();
        let train_keys: std::collections::HashSet<u64> = split
            .train
            .iter()
            .map(|s| (s.pixels[0] * 1e9) as u64)
            .collect();
        assert!(split
            .test
            .iter()
            .all(|s| !train_keys.contains(&((s.pixels[0] * 1e9) as u64))));
    }
}
