//! Classical building blocks with explicit backward passes: affine maps,
//! layer normalization, GELU and softmax cross-entropy.

/// `y = x W + b` with `W` stored row-major `[in][out]`.
pub fn affine_forward(x: &[f64], w: &[f64], b: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    debug_assert_eq!(w.len(), in_dim * out_dim);
    let mut y = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * out_dim..(i + 1) * out_dim];
        for (yo, &wo) in y.iter_mut().zip(row) {
            *yo += xi * wo;
        }
    }
    y
}

/// Backward of the affine map: returns `dL/dx` and accumulates `dL/dW`,
/// `dL/db` into the provided gradient slices.
pub fn affine_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let out_dim = gy.len();
    let in_dim = x.len();
    let mut gx = vec![0.0; in_dim];
    for i in 0..in_dim {
        let row = &w[i * out_dim..(i + 1) * out_dim];
        let grow = &mut gw[i * out_dim..(i + 1) * out_dim];
        let xi = x[i];
        let mut acc = 0.0;
        for o in 0..out_dim {
            acc += row[o] * gy[o];
            grow[o] += xi * gy[o];
        }
        gx[i] = acc;
    }
    for (g, &gyo) in gb.iter_mut().zip(gy) {
        *g += gyo;
    }
    gx
}

pub const LN_EPS: f64 = 1e-5;

/// Per-vector layer normalization cache.
#[derive(Debug, Clone)]
pub struct LnCache {
    pub xhat: Vec<f64>,
    pub inv_sigma: f64,
}

pub fn layernorm_forward(x: &[f64], gain: &[f64], bias: &[f64]) -> (Vec<f64>, LnCache) {
    let d = x.len() as f64;
    let mu = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
    let inv_sigma = 1.0 / (var + LN_EPS).sqrt();
    let xhat: Vec<f64> = x.iter().map(|v| (v - mu) * inv_sigma).collect();
    let y = xhat
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(xh, (g, b))| g * xh + b)
        .collect();
    (y, LnCache { xhat, inv_sigma })
}

/// Backward of layer normalization; accumulates gain/bias gradients.
pub fn layernorm_backward(
    cache: &LnCache,
    gain: &[f64],
    gy: &[f64],
    ggain: &mut [f64],
    gbias: &mut [f64],
) -> Vec<f64> {
    let d = gy.len() as f64;
    let gxhat: Vec<f64> = gy.iter().zip(gain).map(|(g, w)| g * w).collect();
    let mean_gxhat = gxhat.iter().sum::<f64>() / d;
    let mean_gxhat_xhat = gxhat
        .iter()
        .zip(&cache.xhat)
        .map(|(g, xh)| g * xh)
        .sum::<f64>()
        / d;
    for ((gg, gb), (gyo, xh)) in ggain
        .iter_mut()
        .zip(gbias.iter_mut())
        .zip(gy.iter().zip(&cache.xhat))
    {
        *gg += gyo * xh;
        *gb += gyo;
    }
    cache
        .xhat
        .iter()
        .zip(&gxhat)
        .map(|(xh, g)| cache.inv_sigma * (g - mean_gxhat - xh * mean_gxhat_xhat))
        .collect()
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)

/// Smooth GELU (tanh form), differentiable everywhere.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Numerically safe softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// LeCun-style scaled-uniform initialization bound for a given fan-in.
pub fn fan_in_bound(fan_in: usize) -> f64 {
    (3.0 / fan_in.max(1) as f64).sqrt()
}
