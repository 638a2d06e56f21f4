//! Experiment CLI: dataset ingestion, scenario runs and report emission.

use clap::{Args, Parser, Subcommand};
use qnnbench::data::{self, DATA_ROOT_ENV};
use qnnbench::harness::{
    self, config_hash, load_config, train_hash, ExperimentConfig, RecordStore, Scenario,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qnnbench",
    about = "Train hybrid quantum-classical image classifiers and benchmark their accuracy, generalization and robustness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset root (falls back to $QNNBENCH_DATA_ROOT, the config, then ./data).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Output directory (falls back to the config, then ./runs).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check dataset files under the data root, or generate procedural
    /// fixtures when none exist.
    Ingest {
        #[arg(long)]
        data_root: Option<PathBuf>,
        /// Generate fixture datasets instead of requiring real ones.
        #[arg(long)]
        synth: bool,
        /// Fixture training-pool size.
        #[arg(long, default_value_t = 15000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train the configured model and record its trace (clean scenario).
    Train(RunArgs),
    /// Evaluate the trained checkpoint of a configuration on its test split.
    Eval(RunArgs),
    /// Adversarial-attack scenario.
    Attack(RunArgs),
    /// Quantum-noise sweep scenario.
    Noise(RunArgs),
    /// Lipschitz-over-epochs scenario.
    Lipschitz(RunArgs),
    /// Generalization-gap scenario over training-set sizes.
    Generalize(RunArgs),
    /// Loss-landscape grid around the trained parameters.
    Landscape(RunArgs),
    /// Render tables and figure CSVs from a record store.
    Report {
        /// records.jsonl produced by a scenario run.
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
        /// Output directory for CSV emission.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve_roots(args: &RunArgs, cfg: &ExperimentConfig) -> (PathBuf, PathBuf) {
    let data_root = args
        .data_root
        .clone()
        .or_else(|| std::env::var(DATA_ROOT_ENV).ok().map(PathBuf::from))
        .or_else(|| cfg.data_root.clone())
        .unwrap_or_else(|| PathBuf::from("data"));
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    (data_root, out_dir)
}

fn run_with_scenario(args: &RunArgs, force: Option<Scenario>) -> Result<(), String> {
    let mut cfg = load_config(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(s) = force {
        cfg.scenario = s;
    }
    let (data_root, out_dir) = resolve_roots(args, &cfg);
    let records =
        harness::run_scenario(&cfg, &data_root, &out_dir).map_err(|e| e.to_string())?;
    println!(
        "scenario {} ({}) -> {} records in {}",
        cfg.scenario.name(),
        config_hash(&cfg),
        records.len(),
        out_dir.join("records.jsonl").display()
    );
    Ok(())
}

fn eval_checkpoint(args: &RunArgs) -> Result<(), String> {
    use qnnbench::models::{build_model, EvalMode};
    use qnnbench::train::evaluate;
    let mut cfg = load_config(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (data_root, out_dir) = resolve_roots(args, &cfg);
    let hash = train_hash(&cfg);
    let ckpt = out_dir
        .join("checkpoints")
        .join(format!("{}-{}-train.ckpt", hash, cfg.model.name()));
    if !ckpt.exists() {
        return Err(format!(
            "no checkpoint at {}; run `qnnbench train --config ...` first",
            ckpt.display()
        ));
    }
    let model = build_model(cfg.model, cfg.dataset.sample_shape(), 2);
    let loaded =
        qnnbench::models::checkpoint::load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    let params = loaded
        .to_params(&model.param_layout())
        .map_err(|e| e.to_string())?;
    let pool = match cfg.dataset {
        harness::DatasetKind::Mnist => {
            data::load_mnist(&data_root, data::MnistSplit::Train).map_err(|e| e.to_string())?
        }
        harness::DatasetKind::Cifar10 => {
            data::load_cifar10(&data_root, true).map_err(|e| e.to_string())?
        }
    };
    let split = data::make_binary_split(
        &pool,
        cfg.pair,
        cfg.train_n,
        qnnbench::util::derive_seed(cfg.seed, "split"),
    )
    .map_err(|e| e.to_string())?;
    let loss_kind = match cfg.model {
        qnnbench::models::ModelKind::Qvit => qnnbench::train::LossKind::Cce,
        _ => qnnbench::train::LossKind::Bce,
    };
    let (loss, acc) = evaluate(
        model.as_ref(),
        &params,
        &split.test,
        loss_kind,
        qnnbench::util::derive_seed(cfg.seed, "final-eval"),
        EvalMode::Exact,
    )
    .map_err(|e| e.to_string())?;
    println!(
        "{} on {} ({}, {} test samples): accuracy {:.4}, loss {:.4}",
        cfg.model.name(),
        cfg.dataset.name(),
        hash,
        split.test.len(),
        acc,
        loss
    );
    Ok(())
}

fn ingest(
    data_root: Option<PathBuf>,
    synth: bool,
    samples: usize,
    seed: u64,
) -> Result<(), String> {
    let root = data_root
        .or_else(|| std::env::var(DATA_ROOT_ENV).ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"));
    if synth {
        data::synth::generate_mnist_fixture(&root, samples, samples / 5, seed)
            .map_err(|e| e.to_string())?;
        data::synth::generate_cifar_fixture(&root, samples / 5, samples / 5, seed)
            .map_err(|e| e.to_string())?;
        println!(
            "generated fixtures under {} ({} train digits, {} per color batch)",
            root.display(),
            samples,
            samples / 5
        );
    }
    match data::load_mnist(&root, data::MnistSplit::Train) {
        Ok(train) => {
            let mut counts = [0usize; 10];
            for s in &train {
                counts[s.label as usize] += 1;
            }
            println!(
                "mnist train: {} samples, class counts {:?}",
                train.len(),
                counts
            );
        }
        Err(e) => println!("mnist train: unavailable ({e})"),
    }
    match data::load_cifar10(&root, true) {
        Ok(train) => println!("cifar10 train: {} samples", train.len()),
        Err(e) => println!("cifar10 train: unavailable ({e})"),
    }
    Ok(())
}

fn report(records: PathBuf, format: String, out: Option<PathBuf>) -> Result<(), String> {
    let store = RecordStore::open(&records).map_err(|e| e.to_string())?;
    let all: Vec<_> = store.records().cloned().collect();
    match format.as_str() {
        "table" => {
            let tables = harness::render_tables(&all).map_err(|e| e.to_string())?;
            println!("{tables}");
        }
        "csv" => {
            let dir = out.unwrap_or_else(|| {
                records
                    .parent()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let full = harness::records_to_csv(&all).map_err(|e| e.to_string())?;
            let path = dir.join("records.csv");
            std::fs::write(&path, full).map_err(|e| e.to_string())?;
            let figures = harness::emit_figure_csvs(&all, &dir).map_err(|e| e.to_string())?;
            println!(
                "wrote {} and {} figure files to {}",
                path.display(),
                figures.len(),
                dir.display()
            );
        }
        other => return Err(format!("unknown format {other}; use table or csv")),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest {
            data_root,
            synth,
            samples,
            seed,
        } => ingest(data_root, synth, samples, seed),
        Command::Train(args) => run_with_scenario(&args, Some(Scenario::Clean)),
        Command::Eval(args) => eval_checkpoint(&args),
        Command::Attack(args) => run_with_scenario(&args, Some(Scenario::Adversarial)),
        Command::Noise(args) => run_with_scenario(&args, Some(Scenario::QuantumNoise)),
        Command::Lipschitz(args) => run_with_scenario(&args, Some(Scenario::LipschitzTrajectory)),
        Command::Generalize(args) => run_with_scenario(&args, Some(Scenario::Generalization)),
        Command::Landscape(args) => run_with_scenario(&args, Some(Scenario::LossLandscape)),
        Command::Report {
            records,
            format,
            out,
        } => report(records, format, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
