use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqprobe::config::ExperimentConfig;
use vqprobe::data::{generate_dataset, prepare, subset_train, Dataset};
use vqprobe::encoders::Encoder;
use vqprobe::metrics::{evaluate, MetricsReport};
use vqprobe::report;
use vqprobe::train::{build_encoder, fewshot_sweep, model_config, run_on, BEST_CHECKPOINT};
use vqprobe::{thread_count, HarnessError};
use vqprobe_core::features::write_store;
use vqprobe_core::question::write_questions;
use vqprobe_core::scene::{write_scenes, AttributeVocabulary};
use vqprobe_nn::model::ReasoningModel;
use vqprobe_nn::Checkpoint;

#[derive(Parser)]
#[command(name = "vqprobe", about = "Probe frozen visual features with a memory-budgeted VQA model")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (.toml or .json); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded evaluation.
    #[arg(long, global = true)]
    serial: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated scenes and questions as JSON.
    GenData,
    /// Write a feature store for a built-in encoder (gt or raw).
    Encode,
    /// Fit the memory adapter on the training scenes and save it.
    FitAdapter,
    /// Train at `fraction` and write metrics, curves and the best checkpoint.
    Train,
    /// Evaluate a checkpoint on the validation split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train once per fraction on one shared dataset.
    Sweep {
        /// Comma-separated fractions; the config list when omitted.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Rebuild tables and plots from saved metrics files.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.serial {
        cfg.serial = true;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn data_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Data(e.to_string())
}

fn gen_data(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let d = generate_dataset(&cfg.dataset, cfg.seed)?;
    let vocab = AttributeVocabulary::default();
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    write_scenes(out.join("train_scenes.json"), &d.train.scenes, &vocab).map_err(data_err)?;
    write_scenes(out.join("val_scenes.json"), &d.val.scenes, &vocab).map_err(data_err)?;
    write_questions(out.join("train_questions.json"), &d.train.questions, &vocab).map_err(data_err)?;
    write_questions(out.join("val_questions.json"), &d.val.questions, &vocab).map_err(data_err)?;
    log(&format!(
        "{} train / {} val scenes, {} / {} questions -> {}",
        d.train.scenes.len(),
        d.val.scenes.len(),
        d.train.questions.len(),
        d.val.questions.len(),
        out.display()
    ));
    Ok(())
}

fn encode(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let encoder = Encoder::builtin(&cfg.encoder.profile, cfg.encoder.raw_resolution).ok_or_else(|| {
        HarnessError::Config(format!("`{}` is not a built-in encoder", cfg.encoder.profile))
    })?;
    let d = generate_dataset(&cfg.dataset, cfg.seed)?;
    let mut records = Vec::new();
    for s in d.train.scenes.iter().chain(&d.val.scenes) {
        records.push((Encoder::record_id(s.id), encoder.encode(s)?.values));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("{}.vqfs", encoder.name()));
    write_store(
        &path,
        records.iter().map(|(id, v)| (id.as_str(), v.as_slice())),
        encoder.geometry(),
        encoder.name(),
        &format!("seed {}", cfg.seed),
    )
    .map_err(data_err)?;
    log(&format!("{} records -> {}", records.len(), path.display()));
    Ok(())
}

fn fit_adapter(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let d = generate_dataset(&cfg.dataset, cfg.seed)?;
    let encoder = build_encoder(cfg)?;
    let train = subset_train(&d.train, cfg.fraction, cfg.seed)?;
    let p = prepare(cfg, &encoder, &d.train, &train, &d.val)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let plan = serde_json::to_string_pretty(&p.plan).map_err(data_err)?;
    std::fs::write(cfg.out_dir.join("adapter_plan.json"), plan)?;
    if let Some(pca) = &p.pca {
        pca.save(cfg.out_dir.join("adapter.pca")).map_err(data_err)?;
    }
    log(&format!(
        "{:?} {} tokens x {} dims, fitted on {} scenes",
        p.plan.mode,
        p.plan.tokens,
        p.plan.dim,
        p.pca_fit_scenes.len()
    ));
    Ok(())
}

fn print_table(reports: &[MetricsReport]) {
    print!("{}", report::accuracy_table(reports));
}

fn train(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let (d, encoder) = dataset_and_encoder(cfg)?;
    let outcome = run_on(cfg, &d, &encoder, Some(&cfg.out_dir), log)?;
    report::write_run(&cfg.out_dir, &outcome.report)?;
    print_table(std::slice::from_ref(&outcome.report));
    Ok(())
}

fn dataset_and_encoder(cfg: &ExperimentConfig) -> Result<(Dataset, Encoder), HarnessError> {
    Ok((generate_dataset(&cfg.dataset, cfg.seed)?, build_encoder(cfg)?))
}

fn eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<(), HarnessError> {
    let path = checkpoint.map_or_else(|| cfg.out_dir.join(BEST_CHECKPOINT), Path::to_path_buf);
    let ckpt = Checkpoint::load(&path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    let (d, encoder) = dataset_and_encoder(cfg)?;
    let train = subset_train(&d.train, cfg.fraction, cfg.seed)?;
    let p = prepare(cfg, &encoder, &d.train, &train, &d.val)?;
    let mut model = ReasoningModel::new(model_config(cfg, &p), &mut ChaCha8Rng::seed_from_u64(0))?;
    ckpt.restore_params(&mut model.params)?;
    let e = evaluate(&model, &p.val, cfg.training.eval_batch_size, thread_count(cfg.serial))?;
    let r = MetricsReport {
        encoder: p.plan.profile.clone(),
        budget: cfg.budget,
        fraction: cfg.fraction,
        seed: cfg.seed,
        train_scenes: p.train.visual.len(),
        train_questions: p.train.len(),
        epochs: 0,
        iterations: 0,
        val: e.table,
        val_loss: e.mean_loss,
        best_epoch: None,
        best_val_accuracy: None,
        curve: Vec::new(),
    };
    let dir = cfg.out_dir.join("eval");
    report::write_run(&dir, &r)?;
    print_table(std::slice::from_ref(&r));
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, fractions: Option<Vec<f64>>) -> Result<(), HarnessError> {
    let fractions = fractions.unwrap_or_else(|| cfg.fractions.clone());
    let (d, encoder) = dataset_and_encoder(cfg)?;
    let reports = fewshot_sweep(cfg, &d, &encoder, &fractions, log)?;
    for r in &reports {
        report::write_run(&cfg.out_dir.join(format!("fraction_{}", r.fraction)), r)?;
    }
    report::write_sweep(&cfg.out_dir, &reports)?;
    print_table(&reports);
    Ok(())
}

fn rebuild_report(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> Result<(), HarnessError> {
    let mut reports = Vec::new();
    for p in inputs {
        reports.extend(report::load_reports(p)?);
    }
    report::write_sweep(&cfg.out_dir, &reports)?;
    print_table(&reports);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::GenData => gen_data(&cfg),
        Command::Encode => encode(&cfg),
        Command::FitAdapter => fit_adapter(&cfg),
        Command::Train => train(&cfg),
        Command::Eval { checkpoint } => eval(&cfg, checkpoint.as_deref()),
        Command::Sweep { fractions } => sweep(&cfg, fractions),
        Command::Report { inputs } => rebuild_report(&cfg, &inputs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vqprobe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
