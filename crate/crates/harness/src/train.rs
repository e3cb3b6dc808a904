//! Training loop, single runs and few-shot sweeps.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqprobe_core::derive_seed;
use vqprobe_nn::model::{ReasoningConfig, ReasoningModel};
use vqprobe_nn::{AdamW, Checkpoint};

use crate::audit::{audit_adapter_fit, checksums, FrozenChecksums};
use crate::config::ExperimentConfig;
use crate::data::{generate_dataset, prepare, stream, subset_train, Dataset, Prepared};
use crate::encoders::Encoder;
use crate::metrics::{evaluate, CurvePoint, MetricsReport};
use crate::{thread_count, HarnessError};

pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Model shape for the prepared inputs: input widths and position tables
/// are taken from the data, the rest from the config.
pub fn model_config(cfg: &ExperimentConfig, prepared: &Prepared) -> ReasoningConfig {
    let mut m = cfg.model.clone();
    m.text_dim = cfg.dataset.text_dim;
    m.visual_dim = prepared.plan.dim;
    m.max_text_len = prepared
        .train
        .texts
        .iter()
        .chain(&prepared.val.texts)
        .map(|t| t.len())
        .max()
        .unwrap_or(1)
        .max(1);
    let side = prepared
        .train
        .visual
        .iter()
        .filter_map(|v| v.grid.as_ref().map(|g| g.h.max(g.w)))
        .max()
        .unwrap_or(0);
    let slots = (prepared.plan.tokens as f64).sqrt().ceil() as usize;
    m.max_grid = m.max_grid.max(side).max(if m.object_positions { slots } else { 0 });
    m
}

pub struct RunOutcome {
    pub report: MetricsReport,
    pub model: ReasoningModel,
    pub before: FrozenChecksums,
    pub after: FrozenChecksums,
}

/// Trains a fresh model on `prepared.train`, validating after every epoch.
/// The best-validation weights are written to `checkpoint_dir` when given;
/// the report describes the final weights.
pub fn train_model(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    checkpoint_dir: Option<&Path>,
    mut log: impl FnMut(&str),
) -> Result<RunOutcome, HarnessError> {
    audit_adapter_fit(prepared)?;
    let before = checksums(prepared);
    let threads = thread_count(cfg.serial);
    let t = &cfg.training;
    let mut init = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::INIT));
    let mut model = ReasoningModel::new(model_config(cfg, prepared), &mut init)?;
    let mut opt = AdamW::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::TRAIN));

    let n = prepared.train.len();
    if n == 0 {
        return Err(HarnessError::Data("training split has no questions".into()));
    }
    let iters_per_epoch = n.div_ceil(t.batch_size) as u64;
    let schedule = t.schedule(iters_per_epoch);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::new();
    let mut iteration = 0u64;
    let mut window = (0.0f64, 0u64);
    let mut best: Option<(usize, f64)> = None;

    for epoch in 0..t.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(t.batch_size) {
            let lr = schedule.lr_at(iteration, epoch);
            let samples = prepared.train.samples(batch);
            let truth = prepared.train.truths(batch);
            let step = model
                .train_step(&mut opt, &samples, &truth, lr, t.weight_decay, &mut rng)
                .map_err(|e| match HarnessError::from(e) {
                    HarnessError::Numeric(m) => HarnessError::Numeric(format!("iteration {iteration}: {m}")),
                    other => other,
                })?;
            if !step.total.is_finite() {
                return Err(HarnessError::Numeric(format!(
                    "non-finite training loss {} at iteration {iteration}",
                    step.total
                )));
            }
            iteration += 1;
            window.0 += f64::from(step.total);
            window.1 += 1;
            if t.log_every > 0 && iteration.is_multiple_of(t.log_every) {
                curve.push(CurvePoint {
                    iteration,
                    epoch: u64::from(epoch),
                    train_loss: Some(window.0 / window.1 as f64),
                    val_loss: None,
                    val_accuracy: None,
                });
                window = (0.0, 0);
            }
        }
        let eval = evaluate(&model, &prepared.val, t.eval_batch_size, threads)?;
        let acc = eval.table.overall;
        curve.push(CurvePoint {
            iteration,
            epoch: u64::from(epoch),
            train_loss: None,
            val_loss: eval.mean_loss,
            val_accuracy: Some(acc),
        });
        log(&format!(
            "epoch {:>3}  iter {:>6}  val loss {:.4}  val acc {:.4}",
            epoch + 1,
            iteration,
            eval.mean_loss.unwrap_or(f64::NAN),
            acc
        ));
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((epoch as usize + 1, acc));
            if let Some(dir) = checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                let meta = format!("epoch={} val_accuracy={acc}", epoch + 1);
                Checkpoint::capture(&model.params, Some(&opt), Some(&rng), &meta).save(dir.join(BEST_CHECKPOINT))?;
            }
        }
    }

    let final_eval = evaluate(&model, &prepared.val, t.eval_batch_size, threads)?;
    let after = checksums(prepared);
    Ok(RunOutcome {
        report: MetricsReport {
            encoder: prepared.plan.profile.clone(),
            budget: cfg.budget,
            fraction: cfg.fraction,
            seed: cfg.seed,
            train_scenes: prepared.train.visual.len(),
            train_questions: n,
            epochs: t.epochs as usize,
            iterations: iteration,
            val: final_eval.table,
            val_loss: final_eval.mean_loss,
            best_epoch: best.map(|b| b.0),
            best_val_accuracy: best.map(|b| b.1),
            curve,
        },
        model,
        before,
        after,
    })
}

pub fn build_encoder(cfg: &ExperimentConfig) -> Result<Encoder, HarnessError> {
    let profile = cfg.encoder.profile.as_str();
    match (&cfg.encoder.store, Encoder::builtin(profile, cfg.encoder.raw_resolution)) {
        (Some(path), _) => Encoder::open_store(profile, path),
        (None, Some(e)) => Ok(e),
        (None, None) => Err(HarnessError::Config(format!("encoder `{profile}` needs a feature store"))),
    }
}

/// Subsets, prepares and trains at `cfg.fraction` on an existing dataset.
pub fn run_on(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    encoder: &Encoder,
    checkpoint_dir: Option<&Path>,
    log: impl FnMut(&str),
) -> Result<RunOutcome, HarnessError> {
    let train = subset_train(&dataset.train, cfg.fraction, cfg.seed)?;
    let prepared = prepare(cfg, encoder, &dataset.train, &train, &dataset.val)?;
    let outcome = train_model(cfg, &prepared, checkpoint_dir, log)?;
    if outcome.before != outcome.after {
        return Err(HarnessError::Numeric("frozen inputs changed during training".into()));
    }
    Ok(outcome)
}

/// Full single run from the config: data, encoder, adapter, training.
pub fn run(cfg: &ExperimentConfig, log: impl FnMut(&str)) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let dataset = generate_dataset(&cfg.dataset, cfg.seed)?;
    let encoder = build_encoder(cfg)?;
    run_on(cfg, &dataset, &encoder, Some(&cfg.out_dir), log)
}

/// One run per fraction on a shared dataset; validation is identical
/// across fractions.
pub fn fewshot_sweep(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    encoder: &Encoder,
    fractions: &[f64],
    mut log: impl FnMut(&str),
) -> Result<Vec<MetricsReport>, HarnessError> {
    if fractions.is_empty() {
        return Err(HarnessError::Config("no fractions to sweep".into()));
    }
    let mut reports = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let mut c = cfg.clone();
        c.fraction = f;
        c.validate()?;
        let dir: PathBuf = cfg.out_dir.join(format!("fraction_{f}"));
        log(&format!("fraction {f}"));
        reports.push(run_on(&c, dataset, encoder, Some(&dir), &mut log)?.report);
    }
    Ok(reports)
}
