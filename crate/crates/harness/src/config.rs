//! Experiment file schema. Every field has a default, so a config file only
//! lists what it changes. TOML or JSON, chosen by file extension.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vqprobe_core::adapter::{find_profile, MemoryRegime};
use vqprobe_core::question::GenerationConfig;
use vqprobe_core::scene::SamplerConfig;
use vqprobe_nn::model::ReasoningConfig;
use vqprobe_nn::LrSchedule;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub questions_per_scene: usize,
    /// Width of the frozen text embedding.
    pub text_dim: usize,
    pub sampler: SamplerConfig,
    pub generation: GenerationConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            train_scenes: 2000,
            val_scenes: 500,
            questions_per_scene: 10,
            text_dim: 64,
            sampler: SamplerConfig::default(),
            generation: GenerationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    /// Profile name from the encoder table (`gt`, `raw`, `resnet50`, ...).
    pub profile: String,
    /// VQFS store holding features for every scene. Required for profiles
    /// without a built-in encoder.
    pub store: Option<PathBuf>,
    /// Side of the image rendered for the built-in raw-pixel encoder.
    pub raw_resolution: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            profile: "gt".into(),
            store: None,
            raw_resolution: 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_iters: u64,
    pub decay_epochs: Vec<u32>,
    pub decay_factor: f64,
    /// Train-loss curve cadence in iterations.
    pub log_every: u64,
    pub eval_batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            lr: 3e-4,
            weight_decay: 1e-4,
            warmup_iters: 1_000,
            decay_epochs: vec![30, 35],
            decay_factor: 0.1,
            log_every: 100,
            eval_batch_size: 250,
        }
    }
}

impl TrainingConfig {
    pub fn schedule(&self, iters_per_epoch: u64) -> LrSchedule {
        LrSchedule {
            base: self.lr,
            warmup: self.warmup_iters,
            decay_epochs: self.decay_epochs.clone(),
            factor: self.decay_factor,
            iters_per_epoch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub encoder: EncoderSpec,
    /// Visual memory budget `B` in scalars.
    pub budget: usize,
    /// `text_dim`, `visual_dim` and `max_text_len` are filled in from the data.
    pub model: ReasoningConfig,
    pub training: TrainingConfig,
    /// Share of training scenes kept, in (0, 1].
    pub fraction: f64,
    /// Fractions visited by `sweep`.
    pub fractions: Vec<f64>,
    /// Single-threaded evaluation; training is always serial.
    pub serial: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSpec::default(),
            encoder: EncoderSpec::default(),
            budget: 100,
            model: ReasoningConfig::default(),
            training: TrainingConfig::default(),
            fraction: 1.0,
            fractions: vec![0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            serial: false,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

pub fn check_fraction(f: f64) -> Result<(), HarnessError> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(config_err(format!("fraction {f} is outside (0, 1]")))
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn regime(&self) -> Result<MemoryRegime, HarnessError> {
        MemoryRegime::new(self.budget).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        check_fraction(self.fraction)?;
        for &f in &self.fractions {
            check_fraction(f)?;
        }
        self.regime()?;
        let profile = find_profile(&self.encoder.profile).map_err(|e| config_err(e.to_string()))?;
        let builtin = matches!(profile.name.as_str(), "gt" | "raw");
        if !builtin && self.encoder.store.is_none() {
            return Err(config_err(format!(
                "profile `{}` has no built-in encoder; set encoder.store",
                profile.name
            )));
        }
        if self.encoder.raw_resolution < 33 || !self.encoder.raw_resolution.is_multiple_of(3) {
            return Err(config_err("raw_resolution must be a multiple of 3, at least 33"));
        }
        let d = &self.dataset;
        if d.train_scenes == 0 || d.val_scenes == 0 || d.questions_per_scene == 0 {
            return Err(config_err("dataset needs train scenes, val scenes and questions"));
        }
        let t = &self.training;
        if t.batch_size == 0 || t.eval_batch_size == 0 || t.log_every == 0 {
            return Err(config_err("batch sizes and log cadence must be positive"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) || t.weight_decay < 0.0 {
            return Err(config_err("lr must be positive and weight decay non-negative"));
        }
        self.model.validate().map_err(|e| config_err(e.to_string()))
    }
}
