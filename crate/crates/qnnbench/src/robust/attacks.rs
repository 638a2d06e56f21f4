//! White-box l-infinity attacks in raw pixel space. Gradients chain through
//! each model's preprocessing provenance; every iterate is projected onto
//! the epsilon ball around the clean image intersected with [0, 1].

use super::{AttackConfig, AttackMethod, RobustError};
use crate::data::Sample;
use crate::models::{Classifier, EvalCtx, EvalMode};
use crate::util::splitmix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Gradient of the model's own training loss with respect to raw pixels.
pub fn input_gradient(
    model: &dyn Classifier,
    params: &[f64],
    sample: &Sample,
    label: usize,
    ctx: EvalCtx,
) -> Result<Vec<f64>, RobustError> {
    Ok(model.input_loss_grad(params, sample, label, ctx)?.1)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn project(pixels: &mut [f64], clean: &[f64], eps: f64) {
    for (p, &c) in pixels.iter_mut().zip(clean) {
        *p = p.clamp(c - eps, c + eps).clamp(0.0, 1.0);
    }
}

fn with_pixels(sample: &Sample, pixels: Vec<f64>) -> Sample {
    Sample {
        pixels,
        ..sample.clone()
    }
}

/// Single-step signed-gradient attack.
pub fn fgsm(
    model: &dyn Classifier,
    params: &[f64],
    sample: &Sample,
    label: usize,
    eps: f64,
    ctx: EvalCtx,
) -> Result<Sample, RobustError> {
    let g = input_gradient(model, params, sample, label, ctx)?;
    let mut pixels: Vec<f64> = sample
        .pixels
        .iter()
        .zip(&g)
        .map(|(&x, &gi)| x + eps * sign(gi))
        .collect();
    project(&mut pixels, &sample.pixels, eps);
    Ok(with_pixels(sample, pixels))
}

/// Iterated signed-gradient ascent with projection after every step.
pub fn pgd(
    model: &dyn Classifier,
    params: &[f64],
    sample: &Sample,
    label: usize,
    cfg: &AttackConfig,
    ctx: EvalCtx,
) -> Result<Sample, RobustError> {
    let step = cfg.effective_step();
    let mut current = sample.clone();
    for _ in 0..cfg.steps.max(1) {
        let g = input_gradient(model, params, &current, label, ctx)?;
        for (p, &gi) in current.pixels.iter_mut().zip(&g) {
            *p += step * sign(gi);
        }
        project(&mut current.pixels, &sample.pixels, cfg.epsilon);
    }
    Ok(current)
}

/// Momentum iterative method: accumulate l1-normalized gradients and step
/// along the sign of the running momentum.
pub fn mim(
    model: &dyn Classifier,
    params: &[f64],
    sample: &Sample,
    label: usize,
    cfg: &AttackConfig,
    ctx: EvalCtx,
) -> Result<Sample, RobustError> {
    let step = cfg.effective_step();
    let mu = cfg.momentum_alpha;
    let mut momentum = vec![0.0; sample.pixels.len()];
    let mut current = sample.clone();
    for _ in 0..cfg.steps.max(1) {
        let g = input_gradient(model, params, &current, label, ctx)?;
        let l1: f64 = g.iter().map(|x| x.abs()).sum();
        if l1 < 1e-300 && momentum.iter().all(|m| *m == 0.0) {
            // Zero gradient with zero momentum: nothing to follow this step.
            continue;
        }
        for (m, &gi) in momentum.iter_mut().zip(&g) {
            *m = mu * *m + if l1 > 0.0 { gi / l1 } else { 0.0 };
        }
        for (p, &m) in current.pixels.iter_mut().zip(&momentum) {
            *p += step * sign(m);
        }
        project(&mut current.pixels, &sample.pixels, cfg.epsilon);
    }
    Ok(current)
}

/// Momentum-accelerated PGD with checkpointed step-size halving. The step
/// halves whenever too few iterations since the last checkpoint increased the
/// loss (fraction below `rho`) or nothing improved at an unchanged step; the
/// search then restarts from the best point seen. Returns the best-loss
/// iterate.
pub fn apgd(
    model: &dyn Classifier,
    params: &[f64],
    sample: &Sample,
    label: usize,
    cfg: &AttackConfig,
    ctx: EvalCtx,
) -> Result<Sample, RobustError> {
    let n = cfg.steps.max(1);
    let mut eta = if cfg.apgd_eta0_eps_over_n {
        cfg.epsilon / n as f64
    } else {
        2.0 * cfg.epsilon
    };

    // Checkpoint schedule p_0 = 0, p_1 = 0.22, p_{j+1} = p_j +
    // max(p_j - p_{j-1} - 0.03, 0.06), scaled by the iteration budget.
    let mut checkpoints = Vec::new();
    let (mut p_prev, mut p_cur) = (0.0f64, 0.22f64);
    while (p_cur * n as f64).ceil() < n as f64 {
        checkpoints.push((p_cur * n as f64).ceil() as usize);
        let p_next = p_cur + (p_cur - p_prev - 0.03).max(0.06);
        p_prev = p_cur;
        p_cur = p_next;
    }

    let loss_of = |s: &Sample| -> Result<f64, RobustError> {
        Ok(model.input_loss_grad(params, s, label, ctx)?.0)
    };

    let mut x_prev = sample.clone();
    let f0 = loss_of(&x_prev)?;
    // First iterate is a plain signed-gradient step.
    let g0 = input_gradient(model, params, &x_prev, label, ctx)?;
    let mut x_cur = x_prev.clone();
    for (p, &gi) in x_cur.pixels.iter_mut().zip(&g0) {
        *p += eta * sign(gi);
    }
    project(&mut x_cur.pixels, &sample.pixels, cfg.epsilon);
    let f1 = loss_of(&x_cur)?;

    let (mut x_best, mut f_best) = if f1 >= f0 {
        (x_cur.clone(), f1)
    } else {
        (x_prev.clone(), f0)
    };
    let mut f_cur = f1;
    let mut improved_since_ckpt = usize::from(f1 > f0);
    let mut last_ckpt = 0usize;
    let mut eta_at_ckpt = eta;
    let mut f_best_at_ckpt = f_best;

    for k in 1..n {
        let g = input_gradient(model, params, &x_cur, label, ctx)?;
        let mut z: Vec<f64> = x_cur
            .pixels
            .iter()
            .zip(&g)
            .map(|(&x, &gi)| x + eta * sign(gi))
            .collect();
        project(&mut z, &sample.pixels, cfg.epsilon);
        let alpha = cfg.momentum_alpha;
        let mut next: Vec<f64> = x_cur
            .pixels
            .iter()
            .zip(z.iter().zip(&x_prev.pixels))
            .map(|(&xc, (&zc, &xp))| xc + alpha * (zc - xc) + (1.0 - alpha) * (xc - xp))
            .collect();
        project(&mut next, &sample.pixels, cfg.epsilon);
        x_prev = x_cur;
        x_cur = with_pixels(sample, next);
        let f_next = loss_of(&x_cur)?;
        if f_next > f_cur {
            improved_since_ckpt += 1;
        }
        if f_next > f_best {
            f_best = f_next;
            x_best = x_cur.clone();
        }
        f_cur = f_next;

        if checkpoints.contains(&(k + 1)) {
            let window = k + 1 - last_ckpt;
            let cond_low_progress =
                (improved_since_ckpt as f64) < cfg.rho * window as f64;
            let cond_stalled = eta == eta_at_ckpt && f_best == f_best_at_ckpt;
            if cond_low_progress || cond_stalled {
                eta /= 2.0;
                x_cur = x_best.clone();
                x_prev = x_best.clone();
                f_cur = f_best;
            }
            last_ckpt = k + 1;
            eta_at_ckpt = eta;
            f_best_at_ckpt = f_best;
            improved_since_ckpt = 0;
        }
    }
    Ok(x_best)
}

/// Run one attack configuration over a labeled set, in parallel with
/// per-sample derived seeds.
pub fn attack_split(
    model: &dyn Classifier,
    params: &[f64],
    samples: &[Sample],
    cfg: &AttackConfig,
    attack_seed: u64,
) -> Result<Vec<Sample>, RobustError> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let ctx = EvalCtx::fast(splitmix64(attack_seed, i as u64));
            let label = s.label as usize;
            match cfg.method {
                AttackMethod::Fgsm => fgsm(model, params, s, label, cfg.epsilon, ctx),
                AttackMethod::Pgd => pgd(model, params, s, label, cfg, ctx),
                AttackMethod::Apgd => apgd(model, params, s, label, cfg, ctx),
                AttackMethod::Mim => mim(model, params, s, label, cfg, ctx),
            }
        })
        .collect()
}

/// One adversarial evaluation row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdvResult {
    pub method: AttackMethod,
    pub epsilon: f64,
    pub clean_acc: f64,
    pub adv_acc: f64,
    /// Fraction of correctly classified clean samples the attack flips.
    pub asr: f64,
    /// Secondary column: misclassified adversarial fraction over all samples.
    pub asr_all: f64,
    pub mean_fidelity: f64,
}

/// Success rate over the correctly-classified-clean denominator. Errors when
/// the eligible set is empty.
pub fn adversarial_success_rate(
    clean_correct: &[bool],
    adv_correct: &[bool],
) -> Result<f64, RobustError> {
    let eligible = clean_correct.iter().filter(|c| **c).count();
    if eligible == 0 {
        return Err(RobustError::EmptyEligibleSet);
    }
    let flipped = clean_correct
        .iter()
        .zip(adv_correct)
        .filter(|(c, a)| **c && !**a)
        .count();
    Ok(flipped as f64 / eligible as f64)
}

/// Attack a set and aggregate clean/adversarial accuracy, success rates and
/// the mean encoding fidelity between clean and adversarial inputs.
pub fn evaluate_attack(
    model: &dyn Classifier,
    params: &[f64],
    samples: &[Sample],
    cfg: &AttackConfig,
    eval_mode: EvalMode,
    seed: u64,
) -> Result<AdvResult, RobustError> {
    if samples.is_empty() {
        return Err(RobustError::EmptySamples);
    }
    let adv = attack_split(model, params, samples, cfg, splitmix64(seed, 0xa77ac))?;
    let verdicts: Vec<(bool, bool)> = samples
        .par_iter()
        .zip(&adv)
        .enumerate()
        .map(|(i, (s, a))| {
            let ctx = EvalCtx {
                mode: eval_mode,
                seed: splitmix64(seed, i as u64),
            };
            let pc = model.forward(params, s, ctx)?.predicted_class();
            let pa = model.forward(params, a, ctx)?.predicted_class();
            Ok((pc == s.label as usize, pa == s.label as usize))
        })
        .collect::<Result<_, RobustError>>()?;
    let clean: Vec<bool> = verdicts.iter().map(|v| v.0).collect();
    let advc: Vec<bool> = verdicts.iter().map(|v| v.1).collect();
    let clean_acc = clean.iter().filter(|c| **c).count() as f64 / samples.len() as f64;
    let adv_acc = advc.iter().filter(|c| **c).count() as f64 / samples.len() as f64;
    let asr = adversarial_success_rate(&clean, &advc)?;
    let asr_all = advc.iter().filter(|c| !**c).count() as f64 / samples.len() as f64;
    let mean_fidelity = super::average_fidelity(model, samples, &adv)?;
    Ok(AdvResult {
        method: cfg.method,
        epsilon: cfg.epsilon,
        clean_acc,
        adv_acc,
        asr,
        asr_all,
        mean_fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::QcnnModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sample {
            pixels: (0..784).map(|_| rng.gen_range(0.1..0.9)).collect(),
            label: 1,
            width: 28,
            height: 28,
            channels: 1,
        }
    }

    #[test]
    fn zero_epsilon_fgsm_is_identity() {
        let m = QcnnModel::new();
        let params = m.init_params(1);
        let s = sample(2);
        let adv = fgsm(&m, &params, &s, 1, 0.0, EvalCtx::exact()).unwrap();
        assert_eq!(adv.pixels, s.pixels);
    }

    #[test]
    fn fgsm_respects_ball_and_box() {
        let m = QcnnModel::new();
        let params = m.init_params(1);
        let s = sample(3);
        let eps = 0.15;
        let adv = fgsm(&m, &params, &s, 1, eps, EvalCtx::exact()).unwrap();
        for (a, c) in adv.pixels.iter().zip(&s.pixels) {
            assert!((a - c).abs() <= eps + 1e-12);
            assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn single_step_pgd_with_full_step_matches_fgsm() {
        let m = QcnnModel::new();
        let params = m.init_params(4);
        let s = sample(5);
        let eps = 0.1;
        let cfg = AttackConfig {
            steps: 1,
            step_size: eps,
            ..AttackConfig::new(AttackMethod::Pgd, eps)
        };
        let ctx = EvalCtx::exact();
        let a = pgd(&m, &params, &s, 1, &cfg, ctx).unwrap();
        let b = fgsm(&m, &params, &s, 1, eps, ctx).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn fgsm_increases_loss_on_most_samples() {
        let m = QcnnModel::new();
        let params = m.init_params(8);
        let ctx = EvalCtx::exact();
        let mut increased = 0;
        let total = 40;
        for i in 0..total {
            let s = sample(100 + i);
            let (l0, _) = m.input_loss_grad(&params, &s, 1, ctx).unwrap();
            let adv = fgsm(&m, &params, &s, 1, 0.1, ctx).unwrap();
            let (l1, _) = m.input_loss_grad(&params, &adv, 1, ctx).unwrap();
            if l1 >= l0 {
                increased += 1;
            }
        }
        assert!(
            increased as f64 >= 0.8 * total as f64,
            "only {increased}/{total} increased"
        );
    }

    #[test]
    fn apgd_never_returns_a_worse_point_than_fgsm_start() {
        let m = QcnnModel::new();
        let params = m.init_params(9);
        let ctx = EvalCtx::exact();
        let cfg = AttackConfig {
            steps: 30,
            ..AttackConfig::new(AttackMethod::Apgd, 0.1)
        };
        for i in 0..10 {
            let s = sample(300 + i);
            let adv = apgd(&m, &params, &s, 1, &cfg, ctx).unwrap();
            let fg = fgsm(&m, &params, &s, 1, 0.1, ctx).unwrap();
            let (la, _) = m.input_loss_grad(&params, &adv, 1, ctx).unwrap();
            let (lf, _) = m.input_loss_grad(&params, &fg, 1, ctx).unwrap();
            assert!(
                la >= lf - 1e-9,
                "sample {i}: apgd loss {la} below fgsm {lf}"
            );
            for (a, c) in adv.pixels.iter().zip(&s.pixels) {
                assert!((a - c).abs() <= 0.1 + 1e-12);
            }
        }
    }

    #[test]
    fn apgd_zero_eps_returns_clean_input() {
        let m = QcnnModel::new();
        let params = m.init_params(10);
        let s = sample(17);
        let cfg = AttackConfig {
            steps: 10,
            ..AttackConfig::new(AttackMethod::Apgd, 0.0)
        };
        let adv = apgd(&m, &params, &s, 1, &cfg, EvalCtx::exact()).unwrap();
        assert_eq!(adv.pixels, s.pixels);
    }

    #[test]
    fn mim_stays_in_ball_every_step() {
        let m = QcnnModel::new();
        let params = m.init_params(12);
        let s = sample(21);
        let cfg = AttackConfig {
            steps: 15,
            ..AttackConfig::new(AttackMethod::Mim, 0.2)
        };
        let adv = mim(&m, &params, &s, 1, &cfg, EvalCtx::exact()).unwrap();
        for (a, c) in adv.pixels.iter().zip(&s.pixels) {
            assert!((a - c).abs() <= 0.2 + 1e-12);
            assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn success_rate_counts_only_clean_correct() {
        let clean = [true, true, false, true];
        let adv = [false, true, false, false];
        let asr = adversarial_success_rate(&clean, &adv).unwrap();
        assert!((asr - 2.0 / 3.0).abs() < 1e-12);
        assert!(adversarial_success_rate(&[false], &[false]).is_err());
    }

    #[test]
    fn attacks_are_deterministic_per_seed() {
        let m = QcnnModel::new();
        let params = m.init_params(14);
        let samples: Vec<Sample> = (0..4).map(|i| sample(500 + i)).collect();
        let cfg = AttackConfig {
            steps: 5,
            ..AttackConfig::new(AttackMethod::Pgd, 0.1)
        };
        let a = attack_split(&m, &params, &samples, &cfg, 77).unwrap();
        let b = attack_split(&m, &params, &samples, &cfg, 77).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pixels, y.pixels);
        }
    }
}
