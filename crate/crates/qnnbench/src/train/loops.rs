//! Mini-batch training and the generalization-gap experiment.

use super::loss::{loss_bce, loss_cce};
use super::{scheduled_lr, AdamState, LossKind, TrainConfig, TrainError, TrainTrace};
use crate::data::{make_binary_split, DatasetSplit, Sample};
use crate::models::{Classifier, EvalCtx, EvalMode};
use crate::util::{derive_seed, splitmix64};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: Vec<f64>,
    pub trace: TrainTrace,
}

/// Loss of one prediction under the configured loss kind.
fn sample_loss(kind: LossKind, probs: &[f64], label: usize) -> f64 {
    match kind {
        LossKind::Bce => loss_bce(probs[1.min(probs.len() - 1)], label as f64),
        LossKind::Cce | LossKind::L2 => loss_cce(probs, label),
    }
}

/// Mean loss and accuracy over samples; pure and parallel with a fixed
/// reduction order.
pub fn evaluate(
    model: &dyn Classifier,
    params: &[f64],
    samples: &[Sample],
    kind: LossKind,
    ctx_seed: u64,
    mode: EvalMode,
) -> Result<(f64, f64), TrainError> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let results: Vec<(f64, bool)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let ctx = EvalCtx {
                mode,
                seed: splitmix64(ctx_seed, i as u64),
            };
            let pred = model.forward(params, s, ctx)?;
            Ok((
                sample_loss(kind, &pred.probs, s.label as usize),
                pred.predicted_class() == s.label as usize,
            ))
        })
        .collect::<Result<_, TrainError>>()?;
    let loss = results.iter().map(|(l, _)| l).sum::<f64>() / results.len() as f64;
    let acc = results.iter().filter(|(_, c)| *c).count() as f64 / results.len() as f64;
    Ok((loss, acc))
}

/// Mini-batch Adam training. Per-sample gradients evaluate in parallel;
/// batch reduction follows sample index order, so the result is bit-identical
/// for any worker count. Returns the trained parameters and per-epoch trace.
pub fn train(
    model: &dyn Classifier,
    split: &DatasetSplit,
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    train_traced(model, split, config, |_, _| Ok(()))
}

/// [`train`] with a per-epoch observer over the current parameters, used by
/// experiments that track quantities along the optimization trajectory.
pub fn train_traced(
    model: &dyn Classifier,
    split: &DatasetSplit,
    config: &TrainConfig,
    mut per_epoch: impl FnMut(usize, &[f64]) -> Result<(), TrainError>,
) -> Result<TrainOutput, TrainError> {
    let init_seed = derive_seed(config.seed, "init");
    let shuffle_seed = derive_seed(config.seed, "shuffle");
    let branch_seed = derive_seed(config.seed, "branch");
    let eval_seed = derive_seed(config.seed, "eval");

    let mut params = model.init_params(init_seed);
    let mut adam = AdamState::new(params.len());
    let mut trace = TrainTrace::default();

    let n = split.train.len();
    if n == 0 {
        return Err(TrainError::Empty { what: "train set" });
    }
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * batches_per_epoch;
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let per_sample: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&idx| {
                    let ctx = EvalCtx::fast(splitmix64(
                        splitmix64(branch_seed, epoch as u64),
                        idx as u64,
                    ));
                    let s = &split.train[idx];
                    model
                        .loss_and_grad(&params, s, s.label as usize, ctx)
                        .map_err(TrainError::from)
                })
                .collect::<Result<_, TrainError>>()?;

            let inv = 1.0 / per_sample.len() as f64;
            let mut grad = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for (l, g) in &per_sample {
                batch_loss += l;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            batch_loss *= inv;
            grad.iter_mut().for_each(|g| *g *= inv);
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            let lr = scheduled_lr(config, step, total_steps);
            adam_step_checked(&mut params, &grad, &mut adam, lr, epoch)?;
            step += 1;
            epoch_loss += batch_loss * per_sample.len() as f64;
        }
        epoch_loss /= n as f64;

        let (train_loss, train_acc) = (
            epoch_loss,
            evaluate(
                model,
                &params,
                &split.train,
                config.loss,
                eval_seed,
                EvalMode::Fast,
            )?
            .1,
        );
        let (test_loss, test_acc) = evaluate(
            model,
            &params,
            &split.test,
            config.loss,
            derive_seed(eval_seed, "test"),
            EvalMode::Fast,
        )?;
        trace.train_loss.push(train_loss);
        trace.train_acc.push(train_acc);
        trace.test_loss.push(test_loss);
        trace.test_acc.push(test_acc);
        trace.wall_secs.push(t0.elapsed().as_secs_f64());
        per_epoch(epoch, &params)?;
    }

    Ok(TrainOutput { params, trace })
}

fn adam_step_checked(
    params: &mut [f64],
    grad: &[f64],
    adam: &mut AdamState,
    lr: f64,
    epoch: usize,
) -> Result<(), TrainError> {
    super::adam_step(params, grad, adam, lr).map_err(|e| match e {
        TrainError::NonFiniteGradient { index, .. } => {
            TrainError::NonFiniteGradient { index, epoch }
        }
        other => other,
    })
}

/// One point of the generalization-gap curve.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GenPoint {
    pub n_train: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    /// `c * sqrt(T log T / N)` with `T` = trainable parameter count.
    pub bound_params: f64,
    /// Same curve with `T` = parameterized-gate count.
    pub bound_gates: f64,
}

/// Bound curve value before fitting the constant.
pub fn bound_shape(t: usize, n: usize) -> f64 {
    let t = t.max(2) as f64;
    (t * t.ln() / n as f64).sqrt()
}

/// Train a fresh model per size and record the empirical generalization gap
/// (held-out loss minus train loss, the standard proxy for expected minus
/// empirical risk) next to the `sqrt(T log T / N)` complexity curve, with the
/// constant fitted at the smallest size. Each size averages over
/// `seeds_per_size` independent splits and initializations.
pub fn generalization_experiment(
    model: &dyn Classifier,
    pool: &[Sample],
    pair: (u8, u8),
    sizes: &[usize],
    config: &TrainConfig,
    seeds_per_size: usize,
) -> Result<Vec<GenPoint>, TrainError> {
    if sizes.is_empty() {
        return Err(TrainError::Empty { what: "size list" });
    }
    debug_assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "sizes ascending");
    let report = model.structure();
    let mut points = Vec::with_capacity(sizes.len());
    for &n_train in sizes {
        let mut train_loss = 0.0;
        let mut test_loss = 0.0;
        for rep in 0..seeds_per_size.max(1) {
            let rep_seed = derive_seed(config.seed, &format!("gen/{n_train}/{rep}"));
            let split = make_binary_split(pool, pair, n_train, rep_seed)
                .map_err(crate::models::ModelError::from)?;
            let cfg = TrainConfig {
                seed: rep_seed,
                ..config.clone()
            };
            let out = train(model, &split, &cfg)?;
            let eval_seed = derive_seed(rep_seed, "gen-eval");
            let (tr, _) = evaluate(
                model,
                &out.params,
                &split.train,
                config.loss,
                eval_seed,
                EvalMode::Fast,
            )?;
            let (te, _) = evaluate(
                model,
                &out.params,
                &split.test,
                config.loss,
                derive_seed(eval_seed, "test"),
                EvalMode::Fast,
            )?;
            train_loss += tr;
            test_loss += te;
        }
        let k = seeds_per_size.max(1) as f64;
        train_loss /= k;
        test_loss /= k;
        points.push(GenPoint {
            n_train,
            train_loss,
            test_loss,
            gap: test_loss - train_loss,
            bound_params: bound_shape(report.n_params, n_train),
            bound_gates: bound_shape(report.param_gate_count, n_train),
        });
    }
    // Fit the free constant at the smallest size for both interpretations.
    let c_params = points[0].gap.max(0.0) / points[0].bound_params;
    let c_gates = points[0].gap.max(0.0) / points[0].bound_gates;
    for p in &mut points {
        p.bound_params *= c_params;
        p.bound_gates *= c_gates;
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_curve_halves_when_n_quadruples() {
        let t = 75;
        let r = bound_shape(t, 1000) / bound_shape(t, 250);
        assert!((r - 0.5).abs() < 1e-12);
    }
}
