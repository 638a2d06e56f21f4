//! Per-model preprocessing pipelines and encodings.
//!
//! All pipelines are built from explicit linear maps (luminance, area-average
//! box filters, patch means) so input gradients chain exactly; the min-max
//! scaler is the one non-linear stage and its Jacobian is handled in
//! [`super::Provenance`].

use super::{DataError, EncodedInput, EncodingMode, LinearMap, Provenance, Sample};
use crate::sim::{GateKind, ParamCircuit, Statevector, C64};

/// Rec.601 luminance weights for CIFAR channel reduction.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Area-weighted box filter from `(h, w)` down to `(out_h, out_w)`, composed
/// with planar-channel luminance when `channels == 3`. Cell weights sum to 1.
fn box_filter_map(
    width: usize,
    height: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> LinearMap {
    let cell_h = height as f64 / out_h as f64;
    let cell_w = width as f64 / out_w as f64;
    let plane = width * height;
    let mut rows = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let y0 = r as f64 * cell_h;
        let y1 = y0 + cell_h;
        for c in 0..out_w {
            let x0 = c as f64 * cell_w;
            let x1 = x0 + cell_w;
            let mut entries = Vec::new();
            let py0 = y0.floor() as usize;
            let py1 = (y1.ceil() as usize).min(height);
            let px0 = x0.floor() as usize;
            let px1 = (x1.ceil() as usize).min(width);
            for py in py0..py1 {
                let oy = (y1.min((py + 1) as f64) - y0.max(py as f64)).max(0.0);
                if oy == 0.0 {
                    continue;
                }
                for px in px0..px1 {
                    let ox = (x1.min((px + 1) as f64) - x0.max(px as f64)).max(0.0);
                    if ox == 0.0 {
                        continue;
                    }
                    let w = oy * ox / (cell_h * cell_w);
                    let base = py * width + px;
                    if channels == 1 {
                        entries.push((base, w));
                    } else {
                        for (ch, lw) in LUMA.iter().enumerate() {
                            entries.push((ch * plane + base, w * lw));
                        }
                    }
                }
            }
            rows.push(entries);
        }
    }
    LinearMap {
        in_dim: plane * channels,
        rows,
    }
}

/// Amplitude pipeline: (luminance) -> 8x8 area average -> flatten ->
/// l2-normalize -> 64 amplitudes on 6 qubits.
pub fn preprocess_qcnn(sample: &Sample) -> Result<EncodedInput, DataError> {
    let map = box_filter_map(sample.width, sample.height, sample.channels, 8, 8);
    let prenorm = map.apply(&sample.pixels);
    let norm = prenorm.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(DataError::ZeroInput);
    }
    let payload: Vec<f64> = prenorm.iter().map(|v| v / norm).collect();
    Ok(EncodedInput {
        mode: EncodingMode::Amplitude,
        payload,
        provenance: Provenance::AmplitudeNorm { map, prenorm, norm },
    })
}

/// Angle pipeline: (luminance) -> `grid x grid` patch means -> min-max scale
/// to [0, pi], row-major sequence. A constant sequence maps to all zeros.
pub fn preprocess_qrnn(sample: &Sample, grid: usize) -> Result<EncodedInput, DataError> {
    if grid == 0 || grid > sample.width.min(sample.height) {
        return Err(DataError::DegenerateGrid {
            rows: grid,
            cols: grid,
        });
    }
    let map = box_filter_map(sample.width, sample.height, sample.channels, grid, grid);
    let means = map.apply(&sample.pixels);
    let (mut min_idx, mut max_idx) = (0usize, 0usize);
    for (i, &m) in means.iter().enumerate() {
        if m < means[min_idx] {
            min_idx = i;
        }
        if m > means[max_idx] {
            max_idx = i;
        }
    }
    let range = means[max_idx] - means[min_idx];
    let payload: Vec<f64> = if range < 1e-12 {
        vec![0.0; means.len()]
    } else {
        means
            .iter()
            .map(|m| std::f64::consts::PI * (m - means[min_idx]) / range)
            .collect()
    };
    Ok(EncodedInput {
        mode: EncodingMode::Angle,
        payload,
        provenance: Provenance::AngleMinMax {
            map,
            means,
            min_idx,
            max_idx,
            range,
        },
    })
}

/// Index map between patch vectors and flat pixel indices; inverse of the
/// patchify operation for gradient scatter.
#[derive(Debug, Clone)]
pub struct PatchLayout {
    pub indices: Vec<Vec<usize>>,
    pub n_pixels: usize,
}

impl PatchLayout {
    pub fn n_patches(&self) -> usize {
        self.indices.len()
    }

    pub fn patch_dim(&self) -> usize {
        self.indices.first().map_or(0, Vec::len)
    }

    pub fn extract(&self, pixels: &[f64]) -> Vec<Vec<f64>> {
        self.indices
            .iter()
            .map(|idx| idx.iter().map(|&j| pixels[j]).collect())
            .collect()
    }

    /// Scatter per-patch gradients back onto pixels (patches are disjoint).
    pub fn scatter_grad(&self, patch_grads: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_pixels];
        for (idx, g) in self.indices.iter().zip(patch_grads) {
            for (&j, &gv) in idx.iter().zip(g) {
                out[j] += gv;
            }
        }
        out
    }
}

/// Build the patch layout for a sample: row-major `patch x patch` tiles;
/// three-channel images interleave R, G, B per pixel inside a patch.
pub fn patch_layout(sample: &Sample, patch: usize) -> Result<PatchLayout, DataError> {
    if patch == 0 || sample.width % patch != 0 || sample.height % patch != 0 {
        return Err(DataError::NonDivisiblePatch {
            patch,
            width: sample.width,
            height: sample.height,
        });
    }
    let plane = sample.width * sample.height;
    let per_row = sample.width / patch;
    let per_col = sample.height / patch;
    let mut indices = Vec::with_capacity(per_row * per_col);
    for pr in 0..per_col {
        for pc in 0..per_row {
            let mut idx = Vec::with_capacity(patch * patch * sample.channels);
            for y in 0..patch {
                for x in 0..patch {
                    let base = (pr * patch + y) * sample.width + (pc * patch + x);
                    if sample.channels == 1 {
                        idx.push(base);
                    } else {
                        for ch in 0..sample.channels {
                            idx.push(ch * plane + base);
                        }
                    }
                }
            }
            indices.push(idx);
        }
    }
    Ok(PatchLayout {
        indices,
        n_pixels: plane * sample.channels,
    })
}

/// Patch pipeline: raw flattened patch vectors, row-major. Encoding happens
/// inside the transformer after the classical embedding.
pub fn preprocess_qvit(sample: &Sample, patch: usize) -> Result<Vec<Vec<f64>>, DataError> {
    Ok(patch_layout(sample, patch)?.extract(&sample.pixels))
}

/// Write a (zero-padded, normalized) real vector as quantum amplitudes.
pub fn amplitude_encode(vec: &[f64]) -> Result<Statevector, DataError> {
    let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 || vec.is_empty() {
        return Err(DataError::ZeroInput);
    }
    let dim = vec.len().next_power_of_two();
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    for (a, v) in amps.iter_mut().zip(vec) {
        *a = C64::new(v / norm, 0.0);
    }
    Ok(Statevector::from_amplitudes(amps).expect("nonzero by construction"))
}

/// One `RY(angle_i)` per qubit as a circuit prefix; the angles are the
/// circuit's parameters, slot `i` driving wire `i`.
pub fn angle_encode(angles: &[f64]) -> Result<(ParamCircuit, Vec<f64>), DataError> {
    if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
        return Err(DataError::ZeroInput);
    }
    let n = angles.len();
    let mut c = ParamCircuit::new(n, n);
    for w in 0..n {
        c.gate(GateKind::RY, &[w], &[w]);
    }
    c.mark_layer();
    Ok((c, angles.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mnist_like(pixels: Vec<f64>) -> Sample {
        Sample {
            pixels,
            label: 0,
            width: 28,
            height: 28,
            channels: 1,
        }
    }

    #[test]
    fn uniform_image_encodes_uniformly() {
        let s = mnist_like(vec![0.6; 784]);
        let enc = preprocess_qcnn(&s).unwrap();
        assert_eq!(enc.payload.len(), 64);
        for v in &enc.payload {
            assert!((v - 0.125).abs() < 1e-12, "value {v}");
        }
    }

    #[test]
    fn zero_image_is_rejected() {
        let s = mnist_like(vec![0.0; 784]);
        assert!(matches!(preprocess_qcnn(&s), Err(DataError::ZeroInput)));
    }

    #[test]
    fn lit_pixel_concentrates_mass() {
        let mut px = vec![0.0; 784];
        px[0] = 1.0; // top-left pixel -> cell (0, 0)
        let s = mnist_like(px);
        let enc = preprocess_qcnn(&s).unwrap();
        assert!((enc.payload[0] - 1.0).abs() < 1e-12);
        assert!(enc.payload[1..].iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn box_filter_cells_average_their_area() {
        // 28 -> 8 uses fractional 3.5-pixel cells; a constant image must give
        // the same constant in every cell.
        let map = box_filter_map(28, 28, 1, 8, 8);
        let v = map.apply(&vec![0.37; 784]);
        for x in v {
            assert!((x - 0.37).abs() < 1e-12);
        }
        // Weights per row sum to 1.
        for i in 0..map.out_dim() {
            let s: f64 = map.rows[i].iter().map(|&(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qrnn_constant_image_maps_to_zero_angles() {
        let s = mnist_like(vec![0.4; 784]);
        let enc = preprocess_qrnn(&s, 4).unwrap();
        assert_eq!(enc.payload.len(), 16);
        assert!(enc.payload.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn qrnn_grid_produces_sequence_of_patch_means() {
        // 28x28 with a 4x4 grid of 7x7 patches -> 16-step sequence.
        let mut px = vec![0.0; 784];
        // Light up the entire first 7x7 patch.
        for y in 0..7 {
            for x in 0..7 {
                px[y * 28 + x] = 1.0;
            }
        }
        let s = mnist_like(px);
        let enc = preprocess_qrnn(&s, 4).unwrap();
        assert_eq!(enc.payload.len(), 16);
        assert!((enc.payload[0] - std::f64::consts::PI).abs() < 1e-12);
        assert!(enc.payload[1..].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn qrnn_checkerboard_alternates_extremes() {
        let mut px = vec![0.0; 784];
        for y in 0..28 {
            for x in 0..28 {
                let (pr, pc) = (y / 7, x / 7);
                if (pr + pc) % 2 == 0 {
                    px[y * 28 + x] = 1.0;
                }
            }
        }
        let s = mnist_like(px);
        let enc = preprocess_qrnn(&s, 4).unwrap();
        for (t, &a) in enc.payload.iter().enumerate() {
            let (pr, pc) = (t / 4, t % 4);
            let expect = if (pr + pc) % 2 == 0 {
                std::f64::consts::PI
            } else {
                0.0
            };
            assert!((a - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn qvit_patch_counts() {
        let s = mnist_like(vec![0.1; 784]);
        let patches = preprocess_qvit(&s, 4).unwrap();
        assert_eq!(patches.len(), 49);
        assert_eq!(patches[0].len(), 16);

        let c = Sample {
            pixels: vec![0.2; 3072],
            label: 1,
            width: 32,
            height: 32,
            channels: 3,
        };
        let patches = preprocess_qvit(&c, 4).unwrap();
        assert_eq!(patches.len(), 64);
        assert_eq!(patches[0].len(), 48);

        let whole = preprocess_qvit(&s, 28).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].len(), 784);

        assert!(preprocess_qvit(&s, 5).is_err());
    }

    #[test]
    fn amplitude_encoding_examples() {
        let s = amplitude_encode(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((s.amps()[0].re - 1.0).abs() < 1e-15);

        let s = amplitude_encode(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        for a in s.amps() {
            assert!((a.re - 0.5).abs() < 1e-15);
        }

        let s = amplitude_encode(&[3.0, 4.0]).unwrap();
        assert!((s.amps()[0].re - 0.6).abs() < 1e-15);
        assert!((s.amps()[1].re - 0.8).abs() < 1e-15);

        assert!(amplitude_encode(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn angle_encoding_builds_ry_prefix() {
        let (c, params) = angle_encode(&[0.3, 1.2, 2.9]).unwrap();
        assert_eq!(c.n_qubits, 3);
        assert_eq!(c.ops.len(), 3);
        assert!(c
            .ops
            .iter()
            .all(|op| matches!(op.kind, GateKind::RY)));
        assert_eq!(params, vec![0.3, 1.2, 2.9]);
        assert!(angle_encode(&[f64::NAN]).is_err());
    }

    #[test]
    fn qcnn_gradient_chain_matches_finite_differences() {
        let mut px = vec![0.0; 784];
        for (i, p) in px.iter_mut().enumerate() {
            *p = 0.15 + 0.5 * ((i % 13) as f64 / 13.0);
        }
        let s = mnist_like(px.clone());
        let enc = preprocess_qcnn(&s).unwrap();
        // Downstream scalar: weighted sum of payload entries.
        let weights: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.4).collect();
        let grad_payload = weights.clone();
        let gpix = enc.provenance.grad_to_pixels(&grad_payload).unwrap();

        let f = |pixels: &[f64]| -> f64 {
            let s = mnist_like(pixels.to_vec());
            let e = preprocess_qcnn(&s).unwrap();
            e.payload.iter().zip(&weights).map(|(p, w)| p * w).sum()
        };
        let h = 1e-6;
        for &j in &[0usize, 57, 200, 391, 783] {
            let mut plus = px.clone();
            let mut minus = px.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!(
                (fd - gpix[j]).abs() < 1e-8,
                "pixel {j}: fd {fd} vs chain {}",
                gpix[j]
            );
        }
    }

    #[test]
    fn qrnn_gradient_chain_matches_finite_differences() {
        // Random pixels keep the patch means distinct, away from the argmin /
        // argmax ties where the scaler is only one-sided differentiable.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let px: Vec<f64> = (0..784).map(|_| rng.gen_range(0.05..0.95)).collect();
        let s = mnist_like(px.clone());
        let enc = preprocess_qrnn(&s, 4).unwrap();
        let weights: Vec<f64> = (0..16).map(|i| (i as f64) / 8.0 - 1.0).collect();
        let gpix = enc.provenance.grad_to_pixels(&weights).unwrap();

        let f = |pixels: &[f64]| -> f64 {
            let s = mnist_like(pixels.to_vec());
            let e = preprocess_qrnn(&s, 4).unwrap();
            e.payload.iter().zip(&weights).map(|(p, w)| p * w).sum()
        };
        let h = 1e-6;
        for &j in &[3usize, 100, 250, 500, 770] {
            let mut plus = px.clone();
            let mut minus = px.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!(
                (fd - gpix[j]).abs() < 1e-8,
                "pixel {j}: fd {fd} vs chain {}",
                gpix[j]
            );
        }
    }

    #[test]
    fn degenerate_range_gradient_is_an_error() {
        let s = mnist_like(vec![0.5; 784]);
        let enc = preprocess_qrnn(&s, 4).unwrap();
        assert!(matches!(
            enc.provenance.grad_to_pixels(&vec![1.0; 16]),
            Err(DataError::DegenerateRange)
        ));
    }
}
