//! Scenario pipelines: train -> evaluate -> attack / noise / metrics, with
//! incremental record persistence and checkpoint reuse so interrupted runs
//! resume to the identical final record set.

use super::config::{config_hash, train_hash, DatasetKind, ExperimentConfig, Scenario};
use super::store::RecordStore;
use super::{coords, HarnessError, ResultRecord};
use crate::data::{make_binary_split, DatasetSplit, Sample};
use crate::models::checkpoint::{load_checkpoint, save_checkpoint};
use crate::models::{build_model, Classifier, EvalMode};
use crate::robust::{
    evaluate_attack, lipschitz_analytic, lipschitz_empirical, noise_sweep, GradNorm,
};
use crate::train::{
    evaluate, generalization_experiment, train_traced, LossKind, TrainConfig, TrainError,
};
use crate::util::{derive_seed, splitmix64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

/// Load the full training pool the experiment subsamples from.
fn load_pool(dataset: DatasetKind, data_root: &Path) -> Result<Vec<Sample>, HarnessError> {
    Ok(match dataset {
        DatasetKind::Mnist => crate::data::load_mnist(data_root, crate::data::MnistSplit::Train)?,
        DatasetKind::Cifar10 => crate::data::load_cifar10(data_root, true)?,
    })
}

struct Emitter<'a> {
    store: &'a mut RecordStore,
    config_hash: String,
    scenario: Scenario,
    seed: u64,
    started: Instant,
    out: Vec<ResultRecord>,
}

impl<'a> Emitter<'a> {
    fn emit(
        &mut self,
        metric: &str,
        value: f64,
        coords: BTreeMap<String, serde_json::Value>,
    ) -> Result<(), HarnessError> {
        let rec = ResultRecord {
            config_hash: self.config_hash.clone(),
            revision: crate::REVISION.to_string(),
            scenario: self.scenario,
            metric: metric.to_string(),
            value,
            coords,
            wall_ms: self.started.elapsed().as_millis() as u64,
            seed: self.seed,
        };
        self.store.append(rec.clone())?;
        self.out.push(rec);
        Ok(())
    }
}

/// Loss kind a model trains with by default.
fn default_loss_for(model: &dyn Classifier) -> LossKind {
    match model.kind() {
        crate::models::ModelKind::Qvit => LossKind::Cce,
        _ => LossKind::Bce,
    }
}

/// Train the configured model (or load its checkpoint if this exact
/// configuration already produced one), emitting the per-epoch trace records
/// either way on first computation.
fn obtain_trained(
    cfg: &ExperimentConfig,
    split: &DatasetSplit,
    out_dir: &Path,
    em: &mut Emitter<'_>,
    with_epoch_hook: Option<&mut dyn FnMut(usize, &[f64]) -> Result<(), TrainError>>,
) -> Result<(Box<dyn Classifier>, Vec<f64>), HarnessError> {
    let model = build_model(
        cfg.model,
        cfg.dataset.sample_shape(),
        2, // binary pairs throughout the benchmark scenarios
    );
    let hash = train_hash(cfg);
    let ckpt_path = out_dir.join("checkpoints").join(format!(
        "{}-{}-train.ckpt",
        hash,
        cfg.model.name()
    ));
    let base = [
        ("model", json!(cfg.model.name())),
        ("dataset", json!(cfg.dataset.name())),
        ("pair", json!(format!("{}-{}", cfg.pair.0, cfg.pair.1))),
        ("n_train", json!(split.train.len())),
    ];

    if ckpt_path.exists() && with_epoch_hook.is_none() {
        let ck = load_checkpoint(&ckpt_path)?;
        let params = ck.to_params(&model.param_layout())?;
        return Ok((model, params));
    }

    let train_cfg = TrainConfig {
        loss: default_loss_for(model.as_ref()),
        seed: derive_seed(cfg.seed, "train"),
        ..cfg.train.clone()
    };
    let noop = |_: usize, _: &[f64]| Ok(());
    let out = match with_epoch_hook {
        Some(hook) => train_traced(model.as_ref(), split, &train_cfg, hook)?,
        None => train_traced(model.as_ref(), split, &train_cfg, noop)?,
    };
    for (epoch, (((tl, te), ta), tb)) in out
        .trace
        .train_loss
        .iter()
        .zip(&out.trace.test_loss)
        .zip(&out.trace.train_acc)
        .zip(&out.trace.test_acc)
        .enumerate()
    {
        let mut c = coords(&base);
        c.insert("epoch".into(), json!(epoch));
        em.emit("train_loss", *tl, c.clone())?;
        em.emit("test_loss", *te, c.clone())?;
        em.emit("train_acc", *ta, c.clone())?;
        em.emit("test_acc", *tb, c)?;
    }
    let meta = BTreeMap::from([
        ("config".to_string(), hash.clone()),
        ("epochs".to_string(), cfg.train.epochs.to_string()),
    ]);
    save_checkpoint(
        &ckpt_path,
        model.kind(),
        &model.param_layout(),
        &out.params,
        &meta,
    )?;
    Ok((model, out.params))
}

/// Execute one scenario end to end, appending records incrementally. The
/// returned vector holds this invocation's records (already persisted).
pub fn run_scenario(
    cfg: &ExperimentConfig,
    data_root: &Path,
    out_dir: &Path,
) -> Result<Vec<ResultRecord>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut store = RecordStore::open(&out_dir.join("records.jsonl"))?;
    let hash = config_hash(cfg);
    let mut em = Emitter {
        store: &mut store,
        config_hash: hash,
        scenario: cfg.scenario,
        seed: cfg.seed,
        started: Instant::now(),
        out: Vec::new(),
    };

    let pool = load_pool(cfg.dataset, data_root)?;
    let split_seed = derive_seed(cfg.seed, "split");
    let split = make_binary_split(&pool, cfg.pair, cfg.train_n, split_seed)?;
    let base = [
        ("model", json!(cfg.model.name())),
        ("dataset", json!(cfg.dataset.name())),
        ("pair", json!(format!("{}-{}", cfg.pair.0, cfg.pair.1))),
        ("n_train", json!(split.train.len())),
    ];

    match cfg.scenario {
        Scenario::Clean => {
            let (model, params) = obtain_trained(cfg, &split, out_dir, &mut em, None)?;
            let loss_kind = default_loss_for(model.as_ref());
            let eval_seed = derive_seed(cfg.seed, "final-eval");
            let (loss, acc) = evaluate(
                model.as_ref(),
                &params,
                &split.test,
                loss_kind,
                eval_seed,
                EvalMode::Exact,
            )?;
            em.emit("accuracy", acc, coords(&base))?;
            em.emit("loss", loss, coords(&base))?;
            let report = model.structure();
            let mut c = coords(&[("model", json!(cfg.model.name()))]);
            c.insert("detail".into(), json!("structure"));
            em.emit("qubits", report.qubits as f64, c.clone())?;
            em.emit("n_params", report.n_params as f64, c.clone())?;
            em.emit("param_gate_count", report.param_gate_count as f64, c.clone())?;
            em.emit("circuit_depth", report.circuit_depth as f64, c)?;
        }
        Scenario::Adversarial => {
            let (model, params) = obtain_trained(cfg, &split, out_dir, &mut em, None)?;
            for (ai, atk) in cfg.attacks.iter().enumerate() {
                let seed = derive_seed(cfg.seed, &format!("attack/{ai}"));
                let result = evaluate_attack(
                    model.as_ref(),
                    &params,
                    &split.test,
                    atk,
                    EvalMode::Exact,
                    seed,
                )?;
                let mut c = coords(&base);
                c.insert("method".into(), json!(atk.method.name()));
                c.insert("eps".into(), json!(atk.epsilon));
                em.emit("asr", result.asr, c.clone())?;
                em.emit("asr_all", result.asr_all, c.clone())?;
                em.emit("clean_acc", result.clean_acc, c.clone())?;
                em.emit("adv_acc", result.adv_acc, c.clone())?;
                em.emit("fidelity", result.mean_fidelity, c)?;
            }
        }
        Scenario::QuantumNoise => {
            let (model, params) = obtain_trained(cfg, &split, out_dir, &mut em, None)?;
            let eval: Vec<Sample> = match cfg.noise.eval_n {
                Some(n) => split.test.iter().take(n).cloned().collect(),
                None => split.test.clone(),
            };
            let points = noise_sweep(
                model.as_ref(),
                &params,
                &eval,
                &cfg.noise.channels,
                &cfg.noise.p_grid,
                &cfg.noise.shots_grid,
                cfg.noise.insert_after,
                derive_seed(cfg.seed, "noise"),
            )?;
            // The depolarizing parameterization is part of the record: p is
            // the total mixing weight toward I/2.
            for pt in points {
                let mut c = coords(&base);
                c.insert("channel".into(), json!(pt.channel.name()));
                c.insert("p".into(), json!(pt.p));
                c.insert(
                    "shots".into(),
                    match pt.shots {
                        crate::noise::Shots::Exact => json!("exact"),
                        crate::noise::Shots::Count(k) => json!(k),
                    },
                );
                c.insert("depolarizing_convention".into(), json!("total_weight"));
                em.emit("noisy_accuracy", pt.accuracy, c)?;
            }
        }
        Scenario::LipschitzTrajectory => {
            let lc_samples: Vec<Sample> = split.test.iter().take(50).cloned().collect();
            let lc_seed = derive_seed(cfg.seed, "lipschitz");
            let mut per_epoch: Vec<(usize, f64, f64)> = Vec::new();
            {
                let model_probe = build_model(cfg.model, cfg.dataset.sample_shape(), 2);
                let mut hook = |epoch: usize, params: &[f64]| -> Result<(), TrainError> {
                    let lc = |norm: GradNorm| -> Result<f64, TrainError> {
                        lipschitz_empirical(
                            model_probe.as_ref(),
                            params,
                            &lc_samples,
                            norm,
                            splitmix64(lc_seed, epoch as u64),
                        )
                        .map_err(|e| TrainError::Observer(e.to_string()))
                    };
                    let l2 = lc(GradNorm::L2)?;
                    let linf = lc(GradNorm::Linf)?;
                    per_epoch.push((epoch, l2, linf));
                    Ok(())
                };
                let (_, _) = obtain_trained(cfg, &split, out_dir, &mut em, Some(&mut hook))?;
            }
            for (epoch, l2, linf) in per_epoch {
                let mut c = coords(&base);
                c.insert("epoch".into(), json!(epoch));
                c.insert("norm".into(), json!("l2"));
                em.emit("lipschitz_empirical", l2, c.clone())?;
                c.insert("norm".into(), json!("linf"));
                em.emit("lipschitz_empirical", linf, c)?;
            }
            let model = build_model(cfg.model, cfg.dataset.sample_shape(), 2);
            if let Ok(analytic) = lipschitz_analytic(model.as_ref(), cfg.dataset.sample_shape()) {
                em.emit("lipschitz_analytic", analytic, coords(&base))?;
            }
        }
        Scenario::Generalization => {
            let model = build_model(cfg.model, cfg.dataset.sample_shape(), 2);
            let train_cfg = TrainConfig {
                loss: default_loss_for(model.as_ref()),
                seed: derive_seed(cfg.seed, "gen"),
                ..cfg.train.clone()
            };
            let sizes = if cfg.sizes.is_empty() {
                vec![250, 500, 1000, 2000]
            } else {
                cfg.sizes.clone()
            };
            let points = generalization_experiment(
                model.as_ref(),
                &pool,
                cfg.pair,
                &sizes,
                &train_cfg,
                cfg.gen_seeds_per_size,
            )?;
            for p in points {
                let mut c = coords(&base);
                c.insert("size".into(), json!(p.n_train));
                em.emit("gap", p.gap, c.clone())?;
                em.emit("gen_train_loss", p.train_loss, c.clone())?;
                em.emit("gen_test_loss", p.test_loss, c.clone())?;
                em.emit("bound_params", p.bound_params, c.clone())?;
                em.emit("bound_gates", p.bound_gates, c)?;
            }
        }
        Scenario::LossLandscape => {
            let (model, params) = obtain_trained(cfg, &split, out_dir, &mut em, None)?;
            let loss_kind = default_loss_for(model.as_ref());
            let subset: Vec<Sample> = split.train.iter().take(128).cloned().collect();
            let grid = loss_landscape(
                model.as_ref(),
                &params,
                &subset,
                loss_kind,
                cfg.landscape_grid,
                cfg.landscape_radius,
                derive_seed(cfg.seed, "landscape"),
            )?;
            let n = grid.len();
            for (i, row) in grid.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let t = |idx: usize| {
                        if n == 1 {
                            0.0
                        } else {
                            -cfg.landscape_radius
                                + 2.0 * cfg.landscape_radius * idx as f64 / (n - 1) as f64
                        }
                    };
                    let mut c = coords(&base);
                    c.insert("i".into(), json!(i));
                    c.insert("j".into(), json!(j));
                    c.insert("u".into(), json!(t(i)));
                    c.insert("v".into(), json!(t(j)));
                    em.emit("loss", *v, c)?;
                }
            }
        }
    }
    Ok(em.out)
}

/// Loss surface on a plane spanned by two seeded random orthonormal
/// parameter-space directions scaled by `radius`, centered at `params`. The
/// center cell of an odd grid is the exact training loss at `params`.
pub fn loss_landscape(
    model: &dyn Classifier,
    params: &[f64],
    samples: &[Sample],
    loss_kind: LossKind,
    grid_n: usize,
    radius: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    if grid_n < 2 {
        return Err(HarnessError::BadGrid(grid_n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.gen_range(1e-12..1.0f64);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut d1: Vec<f64> = (0..params.len()).map(|_| gaussian(&mut rng)).collect();
    let mut d2: Vec<f64> = (0..params.len()).map(|_| gaussian(&mut rng)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n1 = norm(&d1);
    d1.iter_mut().for_each(|x| *x /= n1);
    let dot: f64 = d1.iter().zip(&d2).map(|(a, b)| a * b).sum();
    for (x2, x1) in d2.iter_mut().zip(&d1) {
        *x2 -= dot * x1;
    }
    let n2 = norm(&d2);
    d2.iter_mut().for_each(|x| *x /= n2);

    let eval_seed = splitmix64(seed, 0x10553);
    let offsets: Vec<f64> = (0..grid_n)
        .map(|i| -radius + 2.0 * radius * i as f64 / (grid_n - 1) as f64)
        .collect();
    let cells: Vec<(usize, usize)> = (0..grid_n)
        .flat_map(|i| (0..grid_n).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut p = params.to_vec();
            for ((pk, &a), &b) in p.iter_mut().zip(&d1).zip(&d2) {
                *pk += offsets[i] * a + offsets[j] * b;
            }
            let (loss, _) = evaluate(model, &p, samples, loss_kind, eval_seed, EvalMode::Fast)?;
            Ok(loss)
        })
        .collect::<Result<_, TrainError>>()?;
    let mut grid = vec![vec![0.0; grid_n]; grid_n];
    for ((i, j), v) in cells.into_iter().zip(values) {
        grid[i][j] = v;
    }
    Ok(grid)
}
