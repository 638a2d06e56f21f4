//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! 3072 pixel bytes laid out as full R, G, B planes.

use super::{DataError, Sample};
use std::path::Path;

const RECORD: usize = 3073;

/// Parse one batch file.
pub fn load_cifar_file(path: &Path) -> Result<Vec<Sample>, DataError> {
    let data = std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if data.len() % RECORD != 0 {
        return Err(DataError::BadRecordLength {
            len: data.len(),
            record: RECORD,
        });
    }
    Ok(data
        .chunks_exact(RECORD)
        .map(|rec| Sample {
            label: rec[0],
            pixels: rec[1..].iter().map(|&b| b as f64 / 255.0).collect(),
            width: 32,
            height: 32,
            channels: 3,
        })
        .collect())
}

/// Load the train batches (`data_batch_1..5.bin`) or the test batch.
pub fn load_cifar10(dir: &Path, train: bool) -> Result<Vec<Sample>, DataError> {
    let mut out = Vec::new();
    if train {
        for i in 1..=5 {
            out.extend(load_cifar_file(&dir.join(format!("data_batch_{i}.bin")))?);
        }
    } else {
        out.extend(load_cifar_file(&dir.join("test_batch.bin"))?);
    }
    Ok(out)
}
