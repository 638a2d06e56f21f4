//! Vision transformer with quantum self-attention.
//!
//! Patches are embedded classically, positионal encodings added, and each
//! encoder layer runs: layer norm -> quantum self-attention (amplitude-encode
//! each token, read a query and key scalar as `<Z>` on the first wire of a
//! parameterized circuit and a value vector as Pauli-string expectations,
//! combine with the Gaussian kernel `exp(-(q_i - k_j)^2)` row-normalized,
//! residual) -> layer norm -> feed-forward with residual. A final layer norm,
//! flatten and affine classifier produce softmax probabilities.
//!
//! `d_model` wider than one amplitude register is split into `d_model / 2^q`
//! chunks that share the circuit parameters; query/key scalars average over
//! chunks and value vectors concatenate.

use super::layers::{
    affine_backward, affine_forward, fan_in_bound, gelu, gelu_grad, layernorm_backward,
    layernorm_forward, softmax, LnCache,
};
use super::{
    check_param_len, AnsatzReport, Classifier, EvalCtx, ModelError, ModelKind, Prediction,
    TensorSpec,
};
use crate::data::{patch_layout, PatchLayout, Sample};
use crate::noise::NoiseConfig;
use crate::sim::{
    adjoint_gradient, apply_circuit, expectation, GateKind, Observable, ParamCircuit, Pauli,
    Statevector, C64,
};
use crate::train::loss::loss_cce;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct QvitConfig {
    /// (width, height, channels) of the input images.
    pub image: (usize, usize, usize),
    pub patch: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub q_qubits: usize,
    pub q_depth: usize,
    pub ffn_hidden: usize,
    pub n_classes: usize,
}

/// Hardware-efficient ansatz: `depth` layers of per-wire RY rotations plus an
/// IsingZZ chain. `depth * (2q - 1)` parameters.
pub(crate) fn qsal_ansatz(q_qubits: usize, q_depth: usize) -> ParamCircuit {
    let n_params = q_depth * (2 * q_qubits - 1);
    let mut c = ParamCircuit::new(q_qubits, n_params);
    let mut slot = 0;
    for _ in 0..q_depth {
        for w in 0..q_qubits {
            c.gate(GateKind::RY, &[w], &[slot]);
            slot += 1;
        }
        for w in 0..q_qubits - 1 {
            c.gate(GateKind::IsingZZ, &[w, w + 1], &[slot]);
            slot += 1;
        }
        c.mark_layer();
    }
    c
}

/// Deterministic Pauli-string enumeration for value readouts: Z singles,
/// ZZ pairs (lexicographic), X singles, XX pairs, Y singles, YY pairs.
pub(crate) fn value_observables(q_qubits: usize, count: usize) -> Vec<Observable> {
    let mut strings: Vec<Vec<Pauli>> = Vec::new();
    let singles = |p: Pauli, strings: &mut Vec<Vec<Pauli>>| {
        for w in 0..q_qubits {
            let mut s = vec![Pauli::I; q_qubits];
            s[w] = p;
            strings.push(s);
        }
    };
    let pairs = |p: Pauli, strings: &mut Vec<Vec<Pauli>>| {
        for i in 0..q_qubits {
            for j in i + 1..q_qubits {
                let mut s = vec![Pauli::I; q_qubits];
                s[i] = p;
                s[j] = p;
                strings.push(s);
            }
        }
    };
    singles(Pauli::Z, &mut strings);
    pairs(Pauli::Z, &mut strings);
    singles(Pauli::X, &mut strings);
    pairs(Pauli::X, &mut strings);
    singles(Pauli::Y, &mut strings);
    pairs(Pauli::Y, &mut strings);
    assert!(
        strings.len() >= count,
        "value enumeration exhausted: {} < {count}",
        strings.len()
    );
    strings
        .into_iter()
        .take(count)
        .map(Observable::pauli_string)
        .collect()
}

/// Gaussian-kernel attention combine over precomputed query/key scalars and
/// value vectors: `out_s = tokens_s + sum_j abar_{s,j} v_j`.
pub(crate) fn qsal_combine(
    tokens: &[Vec<f64>],
    q: &[f64],
    k: &[f64],
    v: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let s_len = tokens.len();
    let mut out = Vec::with_capacity(s_len);
    for s in 0..s_len {
        let alphas: Vec<f64> = (0..s_len)
            .map(|j| (-(q[s] - k[j]) * (q[s] - k[j])).exp())
            .collect();
        let rowsum: f64 = alphas.iter().sum();
        let mut o = tokens[s].clone();
        for (j, a) in alphas.iter().enumerate() {
            let w = a / rowsum;
            for (oi, vi) in o.iter_mut().zip(&v[j]) {
                *oi += w * vi;
            }
        }
        out.push(o);
    }
    out
}

/// The quantum self-attention layer as a standalone operation on token
/// vectors whose length equals one amplitude register (`2^q_qubits`).
pub fn qsal_layer(
    q_qubits: usize,
    q_depth: usize,
    theta_q: &[f64],
    theta_k: &[f64],
    theta_v: &[f64],
    tokens: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let circuit = qsal_ansatz(q_qubits, q_depth);
    let dim = 1usize << q_qubits;
    let obs_z0 = Observable::z_on(q_qubits, 0);
    let value_obs = value_observables(q_qubits, dim);
    let mut q = Vec::new();
    let mut k = Vec::new();
    let mut v = Vec::new();
    for t in tokens {
        let state = encode_token(t)?;
        let sq = apply_circuit(&state, &circuit, theta_q)?;
        q.push(expectation(&sq, &obs_z0)?);
        let sk = apply_circuit(&state, &circuit, theta_k)?;
        k.push(expectation(&sk, &obs_z0)?);
        let sv = apply_circuit(&state, &circuit, theta_v)?;
        let vs: Result<Vec<f64>, ModelError> = value_obs
            .iter()
            .map(|o| expectation(&sv, o).map_err(ModelError::from))
            .collect();
        v.push(vs?);
    }
    Ok(qsal_combine(tokens, &q, &k, &v))
}

fn encode_token(vec: &[f64]) -> Result<Statevector, ModelError> {
    let norm = vec.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(ModelError::ZeroToken);
    }
    let amps: Vec<C64> = vec.iter().map(|x| C64::new(x / norm, 0.0)).collect();
    Ok(Statevector::from_amplitudes(amps)?)
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    th_q: usize,
    th_k: usize,
    th_v: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

pub struct QvitModel {
    cfg: QvitConfig,
    s_tokens: usize,
    patch_dim: usize,
    chunk: usize,
    n_chunks: usize,
    q_params: usize,
    circuit: ParamCircuit,
    obs_z0: Observable,
    value_obs: Vec<Observable>,
    // Flat parameter offsets.
    w_e: usize,
    b_e: usize,
    pos: usize,
    layer_offsets: Vec<LayerOffsets>,
    ln_f_g: usize,
    ln_f_b: usize,
    w_c: usize,
    b_c: usize,
    total_params: usize,
    layout: Vec<TensorSpec>,
}

struct EncCache {
    amps: Vec<f64>,
    norm: f64,
}

struct LayerCache {
    ln1: Vec<LnCache>,
    enc: Vec<Vec<EncCache>>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    rowsum: Vec<f64>,
    ln2: Vec<LnCache>,
    b: Vec<Vec<f64>>,
    t_pre: Vec<Vec<f64>>,
    u_act: Vec<Vec<f64>>,
    z_out: Vec<Vec<f64>>,
}

struct ForwardCache {
    patches: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
    fin_ln: Vec<LnCache>,
    flat: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl QvitModel {
    pub fn new(cfg: QvitConfig) -> Self {
        let (w, h, ch) = cfg.image;
        assert!(w % cfg.patch == 0 && h % cfg.patch == 0, "patch must tile");
        let s_tokens = (w / cfg.patch) * (h / cfg.patch);
        let patch_dim = cfg.patch * cfg.patch * ch;
        let chunk = 1usize << cfg.q_qubits;
        assert!(
            cfg.d_model % chunk == 0,
            "d_model {} must be a multiple of the register size {}",
            cfg.d_model,
            chunk
        );
        let n_chunks = cfg.d_model / chunk;
        let q_params = cfg.q_depth * (2 * cfg.q_qubits - 1);
        let circuit = qsal_ansatz(cfg.q_qubits, cfg.q_depth);
        let value_obs = value_observables(cfg.q_qubits, chunk);

        let d = cfg.d_model;
        let mut layout = Vec::new();
        let mut off = 0usize;
        let mut reserve = |name: String, shape: Vec<usize>, off: &mut usize| -> usize {
            let len: usize = shape.iter().product();
            layout.push(TensorSpec {
                name,
                shape,
                offset: *off,
            });
            let at = *off;
            *off += len;
            at
        };
        let w_e = reserve("embed.w".into(), vec![patch_dim, d], &mut off);
        let b_e = reserve("embed.b".into(), vec![d], &mut off);
        let pos = reserve("pos".into(), vec![s_tokens, d], &mut off);
        let mut layer_offsets = Vec::new();
        for l in 0..cfg.n_layers {
            let lo = LayerOffsets {
                ln1_g: reserve(format!("layer{l}.ln1.gain"), vec![d], &mut off),
                ln1_b: reserve(format!("layer{l}.ln1.bias"), vec![d], &mut off),
                th_q: reserve(format!("layer{l}.theta_q"), vec![q_params], &mut off),
                th_k: reserve(format!("layer{l}.theta_k"), vec![q_params], &mut off),
                th_v: reserve(format!("layer{l}.theta_v"), vec![q_params], &mut off),
                ln2_g: reserve(format!("layer{l}.ln2.gain"), vec![d], &mut off),
                ln2_b: reserve(format!("layer{l}.ln2.bias"), vec![d], &mut off),
                w1: reserve(format!("layer{l}.ffn.w1"), vec![d, cfg.ffn_hidden], &mut off),
                b1: reserve(format!("layer{l}.ffn.b1"), vec![cfg.ffn_hidden], &mut off),
                w2: reserve(format!("layer{l}.ffn.w2"), vec![cfg.ffn_hidden, d], &mut off),
                b2: reserve(format!("layer{l}.ffn.b2"), vec![d], &mut off),
            };
            layer_offsets.push(lo);
        }
        let ln_f_g = reserve("final_ln.gain".into(), vec![d], &mut off);
        let ln_f_b = reserve("final_ln.bias".into(), vec![d], &mut off);
        let w_c = reserve(
            "classifier.w".into(),
            vec![s_tokens * d, cfg.n_classes],
            &mut off,
        );
        let b_c = reserve("classifier.b".into(), vec![cfg.n_classes], &mut off);

        Self {
            s_tokens,
            patch_dim,
            chunk,
            n_chunks,
            q_params,
            circuit,
            obs_z0: Observable::z_on(cfg.q_qubits, 0),
            value_obs,
            w_e,
            b_e,
            pos,
            layer_offsets,
            ln_f_g,
            ln_f_b,
            w_c,
            b_c,
            total_params: off,
            layout,
            cfg,
        }
    }

    pub fn config(&self) -> &QvitConfig {
        &self.cfg
    }

    pub fn n_tokens(&self) -> usize {
        self.s_tokens
    }

    fn seg<'a>(&self, params: &'a [f64], at: usize, len: usize) -> &'a [f64] {
        &params[at..at + len]
    }

    fn layout_for(&self, sample: &Sample) -> Result<PatchLayout, ModelError> {
        Ok(patch_layout(sample, self.cfg.patch)?)
    }

    fn forward_cached(&self, params: &[f64], sample: &Sample) -> Result<ForwardCache, ModelError> {
        check_param_len(params, self.total_params)?;
        let d = self.cfg.d_model;
        let pl = self.layout_for(sample)?;
        let patches = pl.extract(&sample.pixels);
        debug_assert_eq!(patches.len(), self.s_tokens);

        let w_e = self.seg(params, self.w_e, self.patch_dim * d);
        let b_e = self.seg(params, self.b_e, d);
        let z0: Vec<Vec<f64>> = patches
            .iter()
            .enumerate()
            .map(|(s, p)| {
                let mut z = affine_forward(p, w_e, b_e, d);
                let pos = self.seg(params, self.pos + s * d, d);
                for (zi, pi) in z.iter_mut().zip(pos) {
                    *zi += pi;
                }
                z
            })
            .collect();

        let mut z = z0.clone();
        let mut layers = Vec::with_capacity(self.cfg.n_layers);
        for lo in &self.layer_offsets {
            let cache = self.layer_forward(params, lo, &z)?;
            z = cache.z_out.clone();
            layers.push(cache);
        }

        let g_f = self.seg(params, self.ln_f_g, d);
        let b_f = self.seg(params, self.ln_f_b, d);
        let mut fin_ln = Vec::with_capacity(self.s_tokens);
        let mut flat = Vec::with_capacity(self.s_tokens * d);
        for zs in &z {
            let (y, c) = layernorm_forward(zs, g_f, b_f);
            flat.extend_from_slice(&y);
            fin_ln.push(c);
        }
        let w_c = self.seg(params, self.w_c, self.s_tokens * d * self.cfg.n_classes);
        let b_c = self.seg(params, self.b_c, self.cfg.n_classes);
        let logits = affine_forward(&flat, w_c, b_c, self.cfg.n_classes);
        let probs = softmax(&logits);
        Ok(ForwardCache {
            patches,
            layers,
            fin_ln,
            flat,
            logits,
            probs,
        })
    }

    fn layer_forward(
        &self,
        params: &[f64],
        lo: &LayerOffsets,
        z: &[Vec<f64>],
    ) -> Result<LayerCache, ModelError> {
        let d = self.cfg.d_model;
        let ln1_g = self.seg(params, lo.ln1_g, d);
        let ln1_b = self.seg(params, lo.ln1_b, d);
        let th_q = self.seg(params, lo.th_q, self.q_params);
        let th_k = self.seg(params, lo.th_k, self.q_params);
        let th_v = self.seg(params, lo.th_v, self.q_params);

        let mut ln1 = Vec::with_capacity(self.s_tokens);
        let mut h = Vec::with_capacity(self.s_tokens);
        for zs in z {
            let (y, c) = layernorm_forward(zs, ln1_g, ln1_b);
            h.push(y);
            ln1.push(c);
        }

        let mut enc = Vec::with_capacity(self.s_tokens);
        let mut q_sc = Vec::with_capacity(self.s_tokens);
        let mut k_sc = Vec::with_capacity(self.s_tokens);
        let mut v = Vec::with_capacity(self.s_tokens);
        for hs in &h {
            let mut enc_s = Vec::with_capacity(self.n_chunks);
            let mut qs = Vec::with_capacity(self.n_chunks);
            let mut ks = Vec::with_capacity(self.n_chunks);
            let mut vs = Vec::with_capacity(d);
            for c in 0..self.n_chunks {
                let u = &hs[c * self.chunk..(c + 1) * self.chunk];
                let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(ModelError::ZeroToken);
                }
                let amps: Vec<f64> = u.iter().map(|x| x / norm).collect();
                let state = Statevector::from_amplitudes(
                    amps.iter().map(|&x| C64::new(x, 0.0)).collect(),
                )?;
                let sq = apply_circuit(&state, &self.circuit, th_q)?;
                qs.push(expectation(&sq, &self.obs_z0)?);
                let sk = apply_circuit(&state, &self.circuit, th_k)?;
                ks.push(expectation(&sk, &self.obs_z0)?);
                let sv = apply_circuit(&state, &self.circuit, th_v)?;
                for o in &self.value_obs {
                    vs.push(expectation(&sv, o)?);
                }
                enc_s.push(EncCache { amps, norm });
            }
            enc.push(enc_s);
            q_sc.push(qs);
            k_sc.push(ks);
            v.push(vs);
        }
        let mean = |per_chunk: &Vec<f64>| per_chunk.iter().sum::<f64>() / self.n_chunks as f64;
        let q: Vec<f64> = q_sc.iter().map(mean).collect();
        let k: Vec<f64> = k_sc.iter().map(mean).collect();

        let mut alpha = Vec::with_capacity(self.s_tokens);
        let mut rowsum = Vec::with_capacity(self.s_tokens);
        let mut a = Vec::with_capacity(self.s_tokens);
        for s in 0..self.s_tokens {
            let row: Vec<f64> = (0..self.s_tokens)
                .map(|j| (-(q[s] - k[j]) * (q[s] - k[j])).exp())
                .collect();
            let sum: f64 = row.iter().sum();
            let mut out = h[s].clone();
            for (j, aj) in row.iter().enumerate() {
                let wgt = aj / sum;
                for (oi, vi) in out.iter_mut().zip(&v[j]) {
                    *oi += wgt * vi;
                }
            }
            alpha.push(row);
            rowsum.push(sum);
            a.push(out);
        }

        let ln2_g = self.seg(params, lo.ln2_g, d);
        let ln2_b = self.seg(params, lo.ln2_b, d);
        let w1 = self.seg(params, lo.w1, d * self.cfg.ffn_hidden);
        let b1 = self.seg(params, lo.b1, self.cfg.ffn_hidden);
        let w2 = self.seg(params, lo.w2, self.cfg.ffn_hidden * d);
        let b2 = self.seg(params, lo.b2, d);
        let mut ln2 = Vec::with_capacity(self.s_tokens);
        let mut b = Vec::with_capacity(self.s_tokens);
        let mut t_pre = Vec::with_capacity(self.s_tokens);
        let mut u_act = Vec::with_capacity(self.s_tokens);
        let mut z_out = Vec::with_capacity(self.s_tokens);
        for as_ in &a {
            let (bs, c2) = layernorm_forward(as_, ln2_g, ln2_b);
            let t = affine_forward(&bs, w1, b1, self.cfg.ffn_hidden);
            let u: Vec<f64> = t.iter().map(|&x| gelu(x)).collect();
            let f = affine_forward(&u, w2, b2, d);
            let zo: Vec<f64> = bs.iter().zip(&f).map(|(x, y)| x + y).collect();
            ln2.push(c2);
            b.push(bs);
            t_pre.push(t);
            u_act.push(u);
            z_out.push(zo);
        }

        Ok(LayerCache {
            ln1,
            enc,
            q,
            k,
            v,
            alpha,
            rowsum,
            ln2,
            b,
            t_pre,
            u_act,
            z_out,
        })
    }

    /// Full reverse pass. Returns (loss, parameter gradient, patch gradients).
    fn backward(
        &self,
        params: &[f64],
        sample: &Sample,
        upstream: Upstream,
    ) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>), ModelError> {
        let d = self.cfg.d_model;
        let cache = self.forward_cached(params, sample)?;
        let mut grad = vec![0.0; self.total_params];

        let (loss, g_logits) = match upstream {
            Upstream::CceLoss(label) => {
                if label >= self.cfg.n_classes {
                    return Err(ModelError::BadLabel {
                        label,
                        n_classes: self.cfg.n_classes,
                    });
                }
                let loss = loss_cce(&cache.probs, label);
                let mut g: Vec<f64> = cache.probs.clone();
                g[label] -= 1.0;
                (loss, g)
            }
            Upstream::Logit(class) => {
                let mut g = vec![0.0; self.cfg.n_classes];
                g[class] = 1.0;
                (cache.logits[class], g)
            }
        };

        // Classifier.
        let w_c = self.seg(params, self.w_c, self.s_tokens * d * self.cfg.n_classes);
        let (gw_c, gb_c) = (self.w_c, self.b_c);
        let g_flat = {
            let (gw, rest) = grad.split_at_mut(gb_c);
            affine_backward(
                &cache.flat,
                w_c,
                &g_logits,
                &mut gw[gw_c..gw_c + cache.flat.len() * self.cfg.n_classes],
                &mut rest[..self.cfg.n_classes],
            )
        };

        // Final layer norm.
        let g_fin = self.seg(params, self.ln_f_g, d).to_vec();
        let mut g_z: Vec<Vec<f64>> = Vec::with_capacity(self.s_tokens);
        for s in 0..self.s_tokens {
            let gy = &g_flat[s * d..(s + 1) * d];
            let (gg_rest, before) = (self.ln_f_g, self.ln_f_b);
            let gx = {
                let (left, right) = grad.split_at_mut(before);
                layernorm_backward(
                    &cache.fin_ln[s],
                    &g_fin,
                    gy,
                    &mut left[gg_rest..gg_rest + d],
                    &mut right[..d],
                )
            };
            g_z.push(gx);
        }

        // Encoder layers in reverse.
        for (li, lo) in self.layer_offsets.iter().enumerate().rev() {
            let lc = &cache.layers[li];
            g_z = self.layer_backward(params, lo, lc, g_z, &mut grad)?;
        }

        // Embedding and positions.
        let w_e = self.seg(params, self.w_e, self.patch_dim * d).to_vec();
        let mut g_patches = Vec::with_capacity(self.s_tokens);
        for (s, gz) in g_z.iter().enumerate() {
            for (i, g) in gz.iter().enumerate() {
                grad[self.pos + s * d + i] += g;
            }
            let gp = {
                let (left, right) = grad.split_at_mut(self.b_e);
                affine_backward(
                    &cache.patches[s],
                    &w_e,
                    gz,
                    &mut left[self.w_e..self.w_e + self.patch_dim * d],
                    &mut right[..d],
                )
            };
            g_patches.push(gp);
        }

        Ok((loss, grad, g_patches))
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_backward(
        &self,
        params: &[f64],
        lo: &LayerOffsets,
        lc: &LayerCache,
        g_z_out: Vec<Vec<f64>>,
        grad: &mut [f64],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let d = self.cfg.d_model;
        let s_len = self.s_tokens;
        let hidden = self.cfg.ffn_hidden;
        let w1 = self.seg(params, lo.w1, d * hidden).to_vec();
        let w2 = self.seg(params, lo.w2, hidden * d).to_vec();
        let ln2_g = self.seg(params, lo.ln2_g, d).to_vec();
        let ln1_g = self.seg(params, lo.ln1_g, d).to_vec();
        let th_q = self.seg(params, lo.th_q, self.q_params).to_vec();
        let th_k = self.seg(params, lo.th_k, self.q_params).to_vec();
        let th_v = self.seg(params, lo.th_v, self.q_params).to_vec();

        // FFN residual: z_out = b + W2 gelu(W1 b + b1) + b2.
        let mut g_a: Vec<Vec<f64>> = Vec::with_capacity(s_len);
        for s in 0..s_len {
            let g_f = &g_z_out[s];
            let g_u = {
                let (left, right) = grad.split_at_mut(lo.b2);
                affine_backward(
                    &lc.u_act[s],
                    &w2,
                    g_f,
                    &mut left[lo.w2..lo.w2 + hidden * d],
                    &mut right[..d],
                )
            };
            let g_t: Vec<f64> = g_u
                .iter()
                .zip(&lc.t_pre[s])
                .map(|(g, &t)| g * gelu_grad(t))
                .collect();
            let g_b_ffn = {
                let (left, right) = grad.split_at_mut(lo.b1);
                affine_backward(
                    &lc.b[s],
                    &w1,
                    &g_t,
                    &mut left[lo.w1..lo.w1 + d * hidden],
                    &mut right[..hidden],
                )
            };
            let g_b: Vec<f64> = g_z_out[s].iter().zip(&g_b_ffn).map(|(a, b)| a + b).collect();
            // LN2 back to the attention output.
            let gx = {
                let (left, right) = grad.split_at_mut(lo.ln2_b);
                layernorm_backward(
                    &lc.ln2[s],
                    &ln2_g,
                    &g_b,
                    &mut left[lo.ln2_g..lo.ln2_g + d],
                    &mut right[..d],
                )
            };
            g_a.push(gx);
        }

        // Attention combine: a_s = h_s + sum_j abar_{s,j} v_j.
        let mut g_h: Vec<Vec<f64>> = g_a.clone();
        let mut g_v = vec![vec![0.0; d]; s_len];
        let mut g_q = vec![0.0; s_len];
        let mut g_k = vec![0.0; s_len];
        for s in 0..s_len {
            let rowsum = lc.rowsum[s];
            let abar: Vec<f64> = lc.alpha[s].iter().map(|a| a / rowsum).collect();
            let g_abar: Vec<f64> = (0..s_len)
                .map(|j| g_a[s].iter().zip(&lc.v[j]).map(|(g, v)| g * v).sum())
                .collect();
            for (j, &ab) in abar.iter().enumerate() {
                for (gv, ga) in g_v[j].iter_mut().zip(&g_a[s]) {
                    *gv += ab * ga;
                }
            }
            let dot: f64 = g_abar.iter().zip(&abar).map(|(g, a)| g * a).sum();
            for j in 0..s_len {
                let g_alpha = (g_abar[j] - dot) / rowsum;
                let diff = lc.q[s] - lc.k[j];
                let common = g_alpha * lc.alpha[s][j] * 2.0 * diff;
                g_q[s] -= common;
                g_k[j] += common;
            }
        }

        // Quantum circuits per token and chunk.
        for s in 0..s_len {
            for c in 0..self.n_chunks {
                let ec = &lc.enc[s][c];
                let state = Statevector::from_amplitudes(
                    ec.amps.iter().map(|&x| C64::new(x, 0.0)).collect(),
                )?;
                let mut g_amps = vec![0.0; self.chunk];
                // Query path.
                let up_q = g_q[s] / self.n_chunks as f64;
                if up_q != 0.0 {
                    let r = adjoint_gradient(&self.circuit, &th_q, &state, &self.obs_z0)?;
                    for (i, g) in r.grad_params.iter().enumerate() {
                        grad[lo.th_q + i] += g * up_q;
                    }
                    for (ga, gi) in g_amps.iter_mut().zip(&r.grad_input_amps) {
                        *ga += 2.0 * gi.re * up_q;
                    }
                }
                // Key path.
                let up_k = g_k[s] / self.n_chunks as f64;
                if up_k != 0.0 {
                    let r = adjoint_gradient(&self.circuit, &th_k, &state, &self.obs_z0)?;
                    for (i, g) in r.grad_params.iter().enumerate() {
                        grad[lo.th_k + i] += g * up_k;
                    }
                    for (ga, gi) in g_amps.iter_mut().zip(&r.grad_input_amps) {
                        *ga += 2.0 * gi.re * up_k;
                    }
                }
                // Value path with the upstream-weighted effective observable.
                let gv_chunk = &g_v[s][c * self.chunk..(c + 1) * self.chunk];
                if gv_chunk.iter().any(|g| *g != 0.0) {
                    let terms: Vec<(f64, Vec<Pauli>)> = self
                        .value_obs
                        .iter()
                        .zip(gv_chunk)
                        .filter(|(_, g)| **g != 0.0)
                        .map(|(o, &g)| (g * o.terms[0].0, o.terms[0].1.clone()))
                        .collect();
                    let eff = Observable::new(terms);
                    let r = adjoint_gradient(&self.circuit, &th_v, &state, &eff)?;
                    for (i, g) in r.grad_params.iter().enumerate() {
                        grad[lo.th_v + i] += g;
                    }
                    for (ga, gi) in g_amps.iter_mut().zip(&r.grad_input_amps) {
                        *ga += 2.0 * gi.re;
                    }
                }
                // Chain through amplitude normalization into h.
                let dot: f64 = g_amps.iter().zip(&ec.amps).map(|(g, a)| g * a).sum();
                for (i, (g, a)) in g_amps.iter().zip(&ec.amps).enumerate() {
                    g_h[s][c * self.chunk + i] += (g - dot * a) / ec.norm;
                }
            }
        }

        // LN1 back to the layer input.
        let mut g_z_in = Vec::with_capacity(s_len);
        for s in 0..s_len {
            let gx = {
                let (left, right) = grad.split_at_mut(lo.ln1_b);
                layernorm_backward(
                    &lc.ln1[s],
                    &ln1_g,
                    &g_h[s],
                    &mut left[lo.ln1_g..lo.ln1_g + d],
                    &mut right[..d],
                )
            };
            g_z_in.push(gx);
        }
        Ok(g_z_in)
    }
}

enum Upstream {
    CceLoss(usize),
    Logit(usize),
}

impl Classifier for QvitModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Qvit
    }

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn n_params(&self) -> usize {
        self.total_params
    }

    fn param_layout(&self) -> Vec<TensorSpec> {
        self.layout.clone()
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.total_params];
        let pi = std::f64::consts::PI;
        for spec in &self.layout {
            let seg = &mut p[spec.offset..spec.offset + spec.len()];
            let name = spec.name.as_str();
            if name.contains("theta") {
                seg.iter_mut().for_each(|x| *x = rng.gen_range(-pi..pi));
            } else if name.ends_with(".gain") {
                seg.iter_mut().for_each(|x| *x = 1.0);
            } else if name == "pos" {
                seg.iter_mut().for_each(|x| *x = rng.gen_range(-0.1..0.1));
            } else if name.ends_with(".w") || name.contains(".w1") || name.contains(".w2") {
                let fan_in = spec.shape[0];
                let bound = fan_in_bound(fan_in);
                seg.iter_mut()
                    .for_each(|x| *x = rng.gen_range(-bound..bound));
            }
            // Biases and layer-norm offsets stay zero.
        }
        p
    }

    fn forward(
        &self,
        params: &[f64],
        sample: &Sample,
        _ctx: EvalCtx,
    ) -> Result<Prediction, ModelError> {
        let cache = self.forward_cached(params, sample)?;
        Ok(Prediction {
            probs: cache.probs,
            logits: cache.logits,
        })
    }

    fn loss_and_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        label: usize,
        _ctx: EvalCtx,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let (loss, grad, _) = self.backward(params, sample, Upstream::CceLoss(label))?;
        Ok((loss, grad))
    }

    fn input_loss_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        label: usize,
        _ctx: EvalCtx,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let (loss, _, g_patches) = self.backward(params, sample, Upstream::CceLoss(label))?;
        let pl = self.layout_for(sample)?;
        Ok((loss, pl.scatter_grad(&g_patches)))
    }

    fn logit_input_grad(
        &self,
        params: &[f64],
        sample: &Sample,
        _ctx: EvalCtx,
    ) -> Result<Vec<f64>, ModelError> {
        let cache = self.forward_cached(params, sample)?;
        let class = Prediction {
            probs: cache.probs.clone(),
            logits: cache.logits.clone(),
        }
        .predicted_class();
        let (_, _, g_patches) = self.backward(params, sample, Upstream::Logit(class))?;
        let pl = self.layout_for(sample)?;
        Ok(pl.scatter_grad(&g_patches))
    }

    fn forward_noisy(
        &self,
        params: &[f64],
        sample: &Sample,
        noise: &NoiseConfig,
        _seed: u64,
    ) -> Result<Prediction, ModelError> {
        // Channel noise perturbs each QSAL circuit exactly (density-matrix
        // path, register is q_qubits wide); readout flips and shots do not
        // apply to the non-diagonal value observables, so only channel noise
        // is honored here.
        if noise.is_trivial() || noise.channel.is_none() {
            return self.forward(params, sample, EvalCtx::exact());
        }
        self.forward_with_channel(params, sample, noise)
    }

    fn encoding_fidelity(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError> {
        // Whole-image amplitude encoding: the data-side quantum state the
        // transformer pipeline starts from.
        let ea = crate::data::amplitude_encode(&a.pixels)?;
        let eb = crate::data::amplitude_encode(&b.pixels)?;
        Ok(ea.fidelity(&eb))
    }

    fn structure(&self) -> AnsatzReport {
        AnsatzReport {
            model: ModelKind::Qvit,
            qubits: self.cfg.q_qubits,
            gate_count: self.circuit.ops.len(),
            param_gate_count: self.circuit.parameterized_gate_count()
                * 3
                * self.cfg.n_layers
                * self.s_tokens.max(1),
            n_params: self.total_params,
            circuit_depth: self.cfg.q_depth,
        }
    }
}

impl QvitModel {
    fn forward_with_channel(
        &self,
        params: &[f64],
        sample: &Sample,
        noise: &NoiseConfig,
    ) -> Result<Prediction, ModelError> {
        // Identical control flow to forward_cached, but every circuit
        // evaluation routes through the mixed-state path.
        use crate::noise::DensityMatrix;
        let d = self.cfg.d_model;
        let pl = self.layout_for(sample)?;
        let patches = pl.extract(&sample.pixels);
        let w_e = self.seg(params, self.w_e, self.patch_dim * d);
        let b_e = self.seg(params, self.b_e, d);
        let mut z: Vec<Vec<f64>> = patches
            .iter()
            .enumerate()
            .map(|(s, p)| {
                let mut zv = affine_forward(p, w_e, b_e, d);
                let pos = self.seg(params, self.pos + s * d, d);
                for (zi, pi) in zv.iter_mut().zip(pos) {
                    *zi += pi;
                }
                zv
            })
            .collect();

        let program = crate::sim::Program::from_circuit(&self.circuit);
        let run = |theta: &[f64], state: &Statevector| -> Result<DensityMatrix, ModelError> {
            Ok(crate::noise::dm_run_program(&program, theta, state, noise)?)
        };

        for lo in &self.layer_offsets {
            let ln1_g = self.seg(params, lo.ln1_g, d);
            let ln1_b = self.seg(params, lo.ln1_b, d);
            let th_q = self.seg(params, lo.th_q, self.q_params);
            let th_k = self.seg(params, lo.th_k, self.q_params);
            let th_v = self.seg(params, lo.th_v, self.q_params);
            let h: Vec<Vec<f64>> = z
                .iter()
                .map(|zs| layernorm_forward(zs, ln1_g, ln1_b).0)
                .collect();
            let mut q = vec![0.0; self.s_tokens];
            let mut k = vec![0.0; self.s_tokens];
            let mut v = vec![Vec::with_capacity(d); self.s_tokens];
            for (s, hs) in h.iter().enumerate() {
                for c in 0..self.n_chunks {
                    let state = encode_token(&hs[c * self.chunk..(c + 1) * self.chunk])?;
                    let rq = run(th_q, &state)?;
                    q[s] += rq.expectation(&self.obs_z0)? / self.n_chunks as f64;
                    let rk = run(th_k, &state)?;
                    k[s] += rk.expectation(&self.obs_z0)? / self.n_chunks as f64;
                    let rv = run(th_v, &state)?;
                    for o in &self.value_obs {
                        v[s].push(rv.expectation(o)?);
                    }
                }
            }
            let a = qsal_combine(&h, &q, &k, &v);
            let ln2_g = self.seg(params, lo.ln2_g, d);
            let ln2_b = self.seg(params, lo.ln2_b, d);
            let w1 = self.seg(params, lo.w1, d * self.cfg.ffn_hidden);
            let b1 = self.seg(params, lo.b1, self.cfg.ffn_hidden);
            let w2 = self.seg(params, lo.w2, self.cfg.ffn_hidden * d);
            let b2 = self.seg(params, lo.b2, d);
            z = a
                .iter()
                .map(|as_| {
                    let (bs, _) = layernorm_forward(as_, ln2_g, ln2_b);
                    let t = affine_forward(&bs, w1, b1, self.cfg.ffn_hidden);
                    let u: Vec<f64> = t.iter().map(|&x| gelu(x)).collect();
                    let f = affine_forward(&u, w2, b2, d);
                    bs.iter().zip(&f).map(|(x, y)| x + y).collect()
                })
                .collect();
        }

        let g_f = self.seg(params, self.ln_f_g, d);
        let b_f = self.seg(params, self.ln_f_b, d);
        let mut flat = Vec::with_capacity(self.s_tokens * d);
        for zs in &z {
            flat.extend_from_slice(&layernorm_forward(zs, g_f, b_f).0);
        }
        let w_c = self.seg(params, self.w_c, self.s_tokens * d * self.cfg.n_classes);
        let b_c = self.seg(params, self.b_c, self.cfg.n_classes);
        let logits = affine_forward(&flat, w_c, b_c, self.cfg.n_classes);
        let probs = softmax(&logits);
        Ok(Prediction { probs, logits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_model() -> QvitModel {
        QvitModel::new(QvitConfig {
            image: (8, 8, 1),
            patch: 4,
            d_model: 4,
            n_layers: 1,
            q_qubits: 2,
            q_depth: 2,
            ffn_hidden: 6,
            n_classes: 2,
        })
    }

    fn mini_sample(seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sample {
            pixels: (0..64).map(|_| rng.gen_range(0.0..1.0)).collect(),
            label: 1,
            width: 8,
            height: 8,
            channels: 1,
        }
    }

    #[test]
    fn softmax_probs_sum_to_one() {
        let m = mini_model();
        let params = m.init_params(3);
        let pred = m
            .forward(&params, &mini_sample(1), EvalCtx::exact())
            .unwrap();
        assert!((pred.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_classifier_gives_uniform_probs() {
        let m = mini_model();
        let mut params = m.init_params(5);
        for spec in m.param_layout() {
            if spec.name.starts_with("classifier") {
                params[spec.offset..spec.offset + spec.len()].fill(0.0);
            }
        }
        let pred = m
            .forward(&params, &mini_sample(2), EvalCtx::exact())
            .unwrap();
        for p in &pred.probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_query_key_params_give_equal_scalars() {
        // theta_q == theta_k forces q_s == k_s; with all tokens identical the
        // attention weights are uniform 1/S.
        let tokens = vec![vec![0.3, -0.7, 0.5, 0.2]; 3];
        let theta: Vec<f64> = (0..6).map(|i| 0.4 * i as f64 - 1.0).collect();
        let theta_v: Vec<f64> = (0..6).map(|i| -0.2 * i as f64 + 0.3).collect();
        let out = qsal_layer(2, 2, &theta, &theta, &theta_v, &tokens).unwrap();
        // With identical tokens every output row is identical and equals
        // token + mean of values (uniform weights).
        for row in &out[1..] {
            for (a, b) in row.iter().zip(&out[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_token_attention_weight_is_one() {
        let tokens = vec![vec![1.0, 0.0, 0.0, 2.0]];
        let theta: Vec<f64> = vec![0.9; 6];
        let out = qsal_layer(2, 2, &theta, &theta, &theta, &tokens).unwrap();
        assert_eq!(out.len(), 1);
        // With one token the normalized weight is exactly 1, so the output is
        // token + value vector no matter what q and k evaluate to.
        let st = encode_token(&tokens[0]).unwrap();
        let circuit = qsal_ansatz(2, 2);
        let sv = apply_circuit(&st, &circuit, &theta).unwrap();
        for (i, o) in value_observables(2, 4).iter().enumerate() {
            let v = expectation(&sv, o).unwrap();
            assert!((out[0][i] - (tokens[0][i] + v)).abs() < 1e-12);
        }
    }

    #[test]
    fn miniature_matches_hand_rolled_dense_computation() {
        // Two tokens on two qubits: recompute q, k, v and the Gaussian
        // combine with straight-line code and compare.
        let tokens = vec![vec![0.6, -0.2, 0.4, 0.1], vec![-0.3, 0.8, 0.05, 0.5]];
        let th_q: Vec<f64> = (0..6).map(|i| 0.21 * i as f64 - 0.5).collect();
        let th_k: Vec<f64> = (0..6).map(|i| -0.17 * i as f64 + 0.8).collect();
        let th_v: Vec<f64> = (0..6).map(|i| 0.05 * i as f64 + 0.1).collect();
        let got = qsal_layer(2, 2, &th_q, &th_k, &th_v, &tokens).unwrap();

        let circuit = qsal_ansatz(2, 2);
        let obs = value_observables(2, 4);
        let z0 = Observable::z_on(2, 0);
        let mut qs = Vec::new();
        let mut ks = Vec::new();
        let mut vs = Vec::new();
        for t in &tokens {
            let st = encode_token(t).unwrap();
            qs.push(expectation(&apply_circuit(&st, &circuit, &th_q).unwrap(), &z0).unwrap());
            ks.push(expectation(&apply_circuit(&st, &circuit, &th_k).unwrap(), &z0).unwrap());
            let sv = apply_circuit(&st, &circuit, &th_v).unwrap();
            vs.push(
                obs.iter()
                    .map(|o| expectation(&sv, o).unwrap())
                    .collect::<Vec<f64>>(),
            );
        }
        for s in 0..2 {
            let a: Vec<f64> = (0..2)
                .map(|j| (-(qs[s] - ks[j]) * (qs[s] - ks[j])).exp())
                .collect();
            let z: f64 = a.iter().sum();
            for i in 0..4 {
                let expect = tokens[s][i] + (a[0] / z) * vs[0][i] + (a[1] / z) * vs[1][i];
                assert!(
                    (got[s][i] - expect).abs() < 1e-9,
                    "token {s} dim {i}: {} vs {expect}",
                    got[s][i]
                );
            }
        }
    }

    #[test]
    fn zero_values_reduce_layer_to_layernorms_only() {
        // With the attention values forced to zero and zero FFN weights the
        // encoder layer must collapse to the composition of its layer norms.
        let m = mini_model();
        let mut params = m.init_params(7);
        for spec in m.param_layout() {
            if spec.name.contains("ffn") {
                params[spec.offset..spec.offset + spec.len()].fill(0.0);
            }
        }
        let sample = mini_sample(3);
        let d = 4;
        let pl = m.layout_for(&sample).unwrap();
        let patches = pl.extract(&sample.pixels);
        let w_e = m.seg(&params, m.w_e, m.patch_dim * d);
        let b_e = m.seg(&params, m.b_e, d);
        let z0: Vec<Vec<f64>> = patches
            .iter()
            .enumerate()
            .map(|(s, p)| {
                let mut z = affine_forward(p, w_e, b_e, d);
                let pos = m.seg(&params, m.pos + s * d, d);
                for (zi, pi) in z.iter_mut().zip(pos) {
                    *zi += pi;
                }
                z
            })
            .collect();

        let lo = m.layer_offsets[0];
        let ln1_g = m.seg(&params, lo.ln1_g, d);
        let ln1_b = m.seg(&params, lo.ln1_b, d);
        let ln2_g = m.seg(&params, lo.ln2_g, d);
        let ln2_b = m.seg(&params, lo.ln2_b, d);
        let h: Vec<Vec<f64>> = z0
            .iter()
            .map(|zs| layernorm_forward(zs, ln1_g, ln1_b).0)
            .collect();
        // Zero value vectors: combine must return h unchanged, so the whole
        // layer becomes LN2 after LN1.
        let q = vec![0.1; h.len()];
        let k = vec![-0.4; h.len()];
        let v = vec![vec![0.0; d]; h.len()];
        let a = qsal_combine(&h, &q, &k, &v);
        for (as_, hs) in a.iter().zip(&h) {
            for (x, y) in as_.iter().zip(hs) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        let layernorm_only: Vec<Vec<f64>> = a
            .iter()
            .map(|as_| layernorm_forward(as_, ln2_g, ln2_b).0)
            .collect();
        for (row, hs) in layernorm_only.iter().zip(&h) {
            assert_eq!(row.len(), hs.len());
        }
        // With the FFN weights zeroed the residual collapses: z_out == b.
        let full = m.layer_forward(&params, &lo, &z0).unwrap();
        for (zo, bs) in full.z_out.iter().zip(&full.b) {
            for (x, y) in zo.iter().zip(bs) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let m = mini_model();
        let params = m.init_params(11);
        let sample = mini_sample(5);
        let ctx = EvalCtx::exact();
        let (_, grad) = m.loss_and_grad(&params, &sample, 1, ctx).unwrap();
        let h = 1e-5;
        // Probe a few slots from every tensor segment.
        let mut probes = Vec::new();
        for spec in m.param_layout() {
            probes.push(spec.offset);
            probes.push(spec.offset + spec.len() / 2);
        }
        for k in probes {
            let mut p = params.clone();
            p[k] += h;
            let (lp, _) = m.loss_and_grad(&p, &sample, 1, ctx).unwrap();
            p[k] -= 2.0 * h;
            let (lm, _) = m.loss_and_grad(&p, &sample, 1, ctx).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() < 5e-5 * fd.abs().max(1.0),
                "slot {k}: fd {fd} vs {}",
                grad[k]
            );
        }
    }

    #[test]
    fn pixel_gradient_matches_finite_differences() {
        let m = mini_model();
        let params = m.init_params(13);
        let sample = mini_sample(9);
        let ctx = EvalCtx::exact();
        let (_, gpix) = m.input_loss_grad(&params, &sample, 0, ctx).unwrap();
        let h = 1e-5;
        for j in [0usize, 17, 40, 63] {
            let mut plus = sample.clone();
            let mut minus = sample.clone();
            plus.pixels[j] += h;
            minus.pixels[j] -= h;
            let (lp, _) = m.loss_and_grad(&params, &plus, 0, ctx).unwrap();
            let (lm, _) = m.loss_and_grad(&params, &minus, 0, ctx).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - gpix[j]).abs() < 1e-6 * fd.abs().max(1e-2),
                "pixel {j}: fd {fd} vs {}",
                gpix[j]
            );
        }
    }

    #[test]
    fn permuting_patches_with_positions_and_classifier_blocks_is_invariant() {
        let m = mini_model();
        let params = m.init_params(17);
        let sample = mini_sample(21);
        let base = m.forward(&params, &sample, EvalCtx::exact()).unwrap();

        // Permute the four patches of the 8x8 image (2x2 grid of 4x4 tiles)
        // together with their positional encodings and the classifier's
        // per-token weight blocks.
        let perm = [2usize, 0, 3, 1];
        let pl = m.layout_for(&sample).unwrap();
        let patches = pl.extract(&sample.pixels);
        let mut permuted_pixels = vec![0.0; 64];
        for (new_pos, &src) in perm.iter().enumerate() {
            for (offset, &pix_idx) in pl.indices[new_pos].iter().enumerate() {
                permuted_pixels[pix_idx] = patches[src][offset];
            }
        }
        let permuted_sample = Sample {
            pixels: permuted_pixels,
            ..sample.clone()
        };

        let d = 4;
        let mut permuted_params = params.clone();
        for (new_pos, &src) in perm.iter().enumerate() {
            for i in 0..d {
                permuted_params[m.pos + new_pos * d + i] = params[m.pos + src * d + i];
            }
            for i in 0..d {
                for c in 0..2 {
                    permuted_params[m.w_c + (new_pos * d + i) * 2 + c] =
                        params[m.w_c + (src * d + i) * 2 + c];
                }
            }
        }
        let pred = m
            .forward(&permuted_params, &permuted_sample, EvalCtx::exact())
            .unwrap();
        for (a, b) in pred.probs.iter().zip(&base.probs) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
