//! IDX-format parser (big-endian headers), gzip accepted transparently.

use super::{DataError, Sample};
use flate2::bufread::GzDecoder;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Open a file, unwrapping a gzip layer when the two-byte signature says so.
fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>, DataError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(f);
    let mut sig = [0u8; 2];
    let n = reader.read(&mut sig).map_err(|e| io_err(path, e))?;
    let rest = sig[..n].to_vec();
    let chained = std::io::Cursor::new(rest).chain(reader);
    if n == 2 && sig == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(BufReader::new(chained))))
    } else {
        Ok(Box::new(chained))
    }
}

fn read_u32_be(r: &mut dyn Read, path: &Path) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_all_exact(r: &mut dyn Read, needed: usize, path: &Path) -> Result<Vec<u8>, DataError> {
    let mut data = Vec::with_capacity(needed);
    r.take(needed as u64)
        .read_to_end(&mut data)
        .map_err(|e| io_err(path, e))?;
    if data.len() != needed {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            needed,
            got: data.len(),
        });
    }
    Ok(data)
}

fn parse_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let mut r = open_maybe_gz(path)?;
    let magic = read_u32_be(&mut r, path)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            got: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = read_u32_be(&mut r, path)? as usize;
    let rows = read_u32_be(&mut r, path)? as usize;
    let cols = read_u32_be(&mut r, path)? as usize;
    if rows != 28 || cols != 28 {
        return Err(DataError::BadDimensions {
            path: path.display().to_string(),
            rows,
            cols,
        });
    }
    let data = read_all_exact(&mut r, count * rows * cols, path)?;
    Ok((count, rows, cols, data))
}

fn parse_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut r = open_maybe_gz(path)?;
    let magic = read_u32_be(&mut r, path)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            got: magic,
            expected: LABELS_MAGIC,
        });
    }
    let count = read_u32_be(&mut r, path)? as usize;
    read_all_exact(&mut r, count, path)
}

fn locate(dir: &Path, stem: &str) -> Result<std::path::PathBuf, DataError> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(io_err(
        &plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
    ))
}

/// Load one MNIST split from the standard file names under `dir`
/// (`train-images-idx3-ubyte[.gz]` etc.). Pixel bytes are scaled by 1/255.
pub fn load_mnist(dir: &Path, split: MnistSplit) -> Result<Vec<Sample>, DataError> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let images_path = locate(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let labels_path = locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let (count, rows, cols, data) = parse_images(&images_path)?;
    let labels = parse_labels(&labels_path)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let px = rows * cols;
    Ok((0..count)
        .map(|i| Sample {
            pixels: data[i * px..(i + 1) * px]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect(),
            label: labels[i],
            width: cols,
            height: rows,
            channels: 1,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_pair(dir: &Path, images: &[[u8; 784]], labels: &[u8]) {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(images.len() as u32).to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        for im in images {
            img.extend_from_slice(im);
        }
        std::fs::write(dir.join("train-images-idx3-ubyte"), &img).unwrap();
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        std::fs::write(dir.join("train-labels-idx1-ubyte"), &lab).unwrap();
    }

    #[test]
    fn parses_fabricated_idx_files() {
        let dir = tempfile::tempdir().unwrap();
        let zeros = [0u8; 784];
        let mut bright = [0u8; 784];
        bright[0] = 255;
        write_idx_pair(dir.path(), &[zeros, bright], &[3, 7]);
        let samples = load_mnist(dir.path(), MnistSplit::Train).unwrap();
        assert_eq!(samples.len(), 2);
        assert!(samples[0].pixels.iter().all(|&p| p == 0.0));
        assert_eq!(samples[0].label, 3);
        assert_eq!(samples[1].pixels[0], 1.0);
        assert_eq!(samples[1].label, 7);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Vec::new();
        img.extend_from_slice(&0xdeadbeefu32.to_be_bytes());
        img.extend_from_slice(&[0; 12]);
        std::fs::write(dir.path().join("train-images-idx3-ubyte"), &img).unwrap();
        std::fs::write(dir.path().join("train-labels-idx1-ubyte"), b"junk").unwrap();
        assert!(matches!(
            load_mnist(dir.path(), MnistSplit::Train),
            Err(DataError::BadMagic { .. })
        ));
    }

    #[test]
    fn rejects_truncated_images() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&[0u8; 784]); // one image short
        std::fs::write(dir.path().join("train-images-idx3-ubyte"), &img).unwrap();
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&2u32.to_be_bytes());
        lab.extend_from_slice(&[0, 1]);
        std::fs::write(dir.path().join("train-labels-idx1-ubyte"), &lab).unwrap();
        assert!(matches!(
            load_mnist(dir.path(), MnistSplit::Train),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_idx_pair(dir.path(), &[[0u8; 784]], &[1, 2]);
        assert!(matches!(
            load_mnist(dir.path(), MnistSplit::Train),
            Err(DataError::CountMismatch { .. })
        ));
    }

    #[test]
    fn accepts_gzip_transparently() {
        let dir = tempfile::tempdir().unwrap();
        write_idx_pair(dir.path(), &[[9u8; 784]], &[5]);
        // Re-compress both files and remove the originals.
        for stem in ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"] {
            let raw = std::fs::read(dir.path().join(stem)).unwrap();
            let f = std::fs::File::create(dir.path().join(format!("{stem}.gz"))).unwrap();
            let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::fast());
            enc.write_all(&raw).unwrap();
            enc.finish().unwrap();
            std::fs::remove_file(dir.path().join(stem)).unwrap();
        }
        let samples = load_mnist(dir.path(), MnistSplit::Train).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].label, 5);
        assert!((samples[0].pixels[0] - 9.0 / 255.0).abs() < 1e-12);
    }
}
