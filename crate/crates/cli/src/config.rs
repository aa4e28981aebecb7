use std::path::{Path, PathBuf};

use latentqa::data::{DatasetFormat, SynthConfig};
use latentqa::external::ServiceConfig;
use latentqa::model::ModelConfig;
use latentqa::params::EncoderConfig;
use latentqa::scorer::DocModel;
use latentqa::trainer::{Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Every setting of a run in one flat table. File keys use the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds the generator, the initializer and the shuffles.
    pub seed: u64,
    pub out: PathBuf,

    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    /// Dataset read by eval, predict and shortcuts. Falls back to `dev_path`.
    pub eval_path: Option<PathBuf>,
    /// `hotpot_distractor` or `eraser`; the native schema loads under either.
    pub dataset_format: String,
    /// Checkpoint read by eval, predict and shortcuts. Falls back to `<out>/best.ckpt`.
    pub checkpoint: Option<PathBuf>,

    pub n_examples: usize,
    pub n_docs_per_example: usize,
    pub n_distractors: usize,
    pub sentences_per_doc: usize,
    pub entity_vocab_size: usize,
    pub bridge_fraction: f64,
    pub dev_fraction: f64,
    /// Redundant-first-hop bridge examples appended to the synthetic dev file.
    pub planted_shortcuts: usize,

    pub embedding_dim: usize,
    pub mlp_hidden: usize,
    pub decoder_hidden: usize,
    pub slice_len: usize,
    pub init_scale: f64,

    pub doc_set_size: usize,
    /// Unset means 4 for training and the checkpoint's value afterwards.
    pub max_rationale: Option<usize>,
    pub contiguous: bool,
    pub independent_docs: bool,
    pub max_answer_len: usize,

    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k_doc: usize,
    pub k_sent: usize,
    pub checkpoint_every: usize,

    pub gradcheck_step: f64,

    pub external_endpoint: Option<String>,
    pub external_timeout_ms: u64,
    pub external_max_tokens: usize,
    pub external_max_concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let enc = EncoderConfig::default();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let service = ServiceConfig::default();
        RunConfig {
            seed: 7,
            out: PathBuf::from("out"),
            train_path: None,
            dev_path: None,
            eval_path: None,
            dataset_format: "hotpot_distractor".into(),
            checkpoint: None,
            n_examples: synth.n_examples,
            n_docs_per_example: synth.n_docs_per_example,
            n_distractors: synth.n_distractors,
            sentences_per_doc: synth.sentences_per_doc,
            entity_vocab_size: synth.entity_vocab_size,
            bridge_fraction: synth.bridge_fraction,
            dev_fraction: 0.2,
            planted_shortcuts: 0,
            embedding_dim: enc.embedding_dim,
            mlp_hidden: enc.mlp_hidden,
            decoder_hidden: enc.decoder_hidden,
            slice_len: enc.slice_len,
            init_scale: enc.init_scale,
            doc_set_size: model.doc_set_size,
            max_rationale: None,
            contiguous: model.contiguous,
            independent_docs: false,
            max_answer_len: model.max_answer_len,
            optimizer: train.optimizer,
            learning_rate: train.learning_rate,
            warmup_fraction: train.warmup_fraction,
            epochs: train.epochs,
            batch_size: train.batch_size,
            k_doc: train.k_doc,
            k_sent: train.k_sent,
            checkpoint_every: train.checkpoint_every,
            gradcheck_step: 1e-5,
            external_endpoint: None,
            external_timeout_ms: service.timeout_ms,
            external_max_tokens: service.max_tokens,
            external_max_concurrency: service.max_concurrency,
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub independent_docs: bool,
    pub k_doc: Option<usize>,
    pub k_sent: Option<usize>,
    pub max_rationale: Option<usize>,
    pub contiguous: bool,
    pub external_endpoint: Option<String>,
    pub learning_rate: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
}

/// Defaults, then the file (if any), then the flags.
pub fn parse_config(path: Option<&Path>, flags: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.to_path_buf(), e))?;
            parse_config_str(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                other => other,
            })?
        }
        None => RunConfig::default(),
    };
    cfg.apply(flags);
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn apply(&mut self, f: &Overrides) {
        if let Some(v) = &f.out {
            self.out = v.clone();
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        self.independent_docs |= f.independent_docs;
        if let Some(v) = f.k_doc {
            self.k_doc = v;
        }
        if let Some(v) = f.k_sent {
            self.k_sent = v;
        }
        if let Some(v) = f.max_rationale {
            self.max_rationale = Some(v);
        }
        self.contiguous |= f.contiguous;
        if let Some(v) = &f.external_endpoint {
            self.external_endpoint = Some(v.clone());
        }
        if let Some(v) = f.learning_rate {
            self.learning_rate = v;
        }
        if let Some(v) = &f.checkpoint {
            self.checkpoint = Some(v.clone());
        }
        if let Some(v) = &f.data {
            self.eval_path = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        self.model().validate()?;
        self.train().validate()?;
        self.format()?;
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(CliError::Config(format!("dev_fraction must lie in [0, 1), got {}", self.dev_fraction)));
        }
        if !(self.gradcheck_step > 0.0) {
            return Err(CliError::Config("gradcheck_step must be positive".into()));
        }
        Ok(())
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n_examples: self.n_examples,
            n_docs_per_example: self.n_docs_per_example,
            n_distractors: self.n_distractors,
            sentences_per_doc: self.sentences_per_doc,
            entity_vocab_size: self.entity_vocab_size,
            bridge_fraction: self.bridge_fraction,
            seed: self.seed,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            embedding_dim: self.embedding_dim,
            mlp_hidden: self.mlp_hidden,
            decoder_hidden: self.decoder_hidden,
            slice_len: self.slice_len,
            init_scale: self.init_scale,
            seed: self.seed,
        }
    }

    pub fn doc_model(&self) -> DocModel {
        if self.independent_docs {
            DocModel::Independent
        } else {
            DocModel::Joint
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            doc_set_size: self.doc_set_size,
            doc_sets_up_to: false,
            max_rationale: self.max_rationale.unwrap_or(4),
            contiguous: self.contiguous,
            doc_model: self.doc_model(),
            max_answer_len: self.max_answer_len,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            warmup_fraction: self.warmup_fraction,
            epochs: self.epochs,
            batch_size: self.batch_size,
            k_doc: self.k_doc,
            k_sent: self.k_sent,
            max_rationale_sentences: self.max_rationale.unwrap_or(4),
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn service(&self) -> Option<ServiceConfig> {
        self.external_endpoint.as_ref().map(|endpoint| ServiceConfig {
            endpoint: endpoint.clone(),
            timeout_ms: self.external_timeout_ms,
            max_tokens: self.external_max_tokens,
            max_concurrency: self.external_max_concurrency,
        })
    }

    pub fn format(&self) -> Result<DatasetFormat> {
        Ok(self.dataset_format.parse()?)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("best.ckpt"))
    }

    /// Dataset for the read-only commands.
    pub fn eval_dataset(&self) -> Result<&Path> {
        self.eval_path
            .as_deref()
            .or(self.dev_path.as_deref())
            .ok_or(CliError::Missing("eval_path (or dev_path)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file() {
        let mut cfg = parse_config_str("learning_rate = 0.1\nepochs = 3\n").unwrap();
        assert_eq!(cfg.learning_rate, 0.1);
        cfg.apply(&Overrides { learning_rate: Some(0.01), ..Overrides::default() });
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str("lerning_rate = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("lerning_rate"), "{err}");
    }

    #[test]
    fn type_mismatch_is_rejected() {
        assert!(parse_config_str("epochs = \"ten\"\n").is_err());
        assert!(parse_config_str("optimizer = \"rmsprop\"\n").is_err());
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn seed_flows_everywhere() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { seed: Some(42), ..Overrides::default() });
        assert_eq!(cfg.synth().seed, 42);
        assert_eq!(cfg.encoder().seed, 42);
        assert_eq!(cfg.train().seed, 42);
    }

    #[test]
    fn invalid_component_config_fails_validation() {
        let cfg = RunConfig { batch_size: 0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { dataset_format: "csv".into(), ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
