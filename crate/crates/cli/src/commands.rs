use std::fs;
use std::path::{Path, PathBuf};

use latentqa::data::{
    detokenize, load_dataset, render_prompt, save_dataset, synth_generate, synth_shortcut_examples, Example,
    SynthConfig, Vocab,
};
use latentqa::eval::{evaluate, find_shortcuts, predictions_jsonl, Prediction, PredictionRecord};
use latentqa::external::ServiceClient;
use latentqa::model::{Model, ModelConfig};
use latentqa::params::{init_params, EncoderConfig};
use latentqa::trainer::{gradient_check, train_with, Budget, Checkpoint};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Gradient checks pass below this relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Seed offset for the planted-shortcut file, so it does not replay the
/// main corpus's random stream.
const PLANTED_SEED_SALT: u64 = 0x9e37_79b9;

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(cfg.out.clone(), e))?;
    Ok(&cfg.out)
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| CliError::Io(path.clone(), e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// An explicit path, else `<out>/<fallback>` when that file exists.
fn input_path(explicit: Option<&Path>, cfg: &RunConfig, fallback: &str, key: &'static str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    let p = cfg.out.join(fallback);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Missing(key))
    }
}

fn load(path: &Path, cfg: &RunConfig) -> Result<Vec<Example>> {
    let data = load_dataset(path, cfg.format()?)?;
    log::info!("loaded {} examples from {}", data.len(), path.display());
    Ok(data)
}

/// Loads the checkpoint and applies the inference-time settings of `cfg`.
fn load_model(cfg: &RunConfig) -> Result<Model> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(CliError::Io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        ));
    }
    let mut model = Checkpoint::load(&path)?.to_model()?;
    if cfg.independent_docs {
        model.config.doc_model = cfg.doc_model();
    }
    if let Some(m) = cfg.max_rationale {
        model.config.max_rationale = m;
    }
    model.config.contiguous |= cfg.contiguous;
    model.config.validate()?;
    Ok(model)
}

fn eval_examples(cfg: &RunConfig) -> Result<Vec<Example>> {
    let path = match cfg.eval_dataset() {
        Ok(p) => p.to_path_buf(),
        Err(_) => input_path(None, cfg, "dev.json", "eval_path (or dev_path)")?,
    };
    load(&path, cfg)
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let examples = synth_generate(&cfg.synth())?;
    let n_dev = (examples.len() as f64 * cfg.dev_fraction).round() as usize;
    let (train, dev) = examples.split_at(examples.len() - n_dev);
    let out = out_dir(cfg)?;
    save_dataset(out.join("train.json"), train)?;
    save_dataset(out.join("dev.json"), dev)?;
    log::info!("synthetic corpus: {} train, {} dev", train.len(), dev.len());
    if cfg.planted_shortcuts > 0 {
        let planted = synth_shortcut_examples(&SynthConfig {
            n_examples: cfg.planted_shortcuts,
            seed: cfg.seed ^ PLANTED_SEED_SALT,
            ..cfg.synth()
        })?;
        save_dataset(out.join("planted.json"), &planted)?;
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let train_path = input_path(cfg.train_path.as_deref(), cfg, "train.json", "train_path")?;
    let dev_path = input_path(cfg.dev_path.as_deref(), cfg, "dev.json", "dev_path")?;
    let train_set = load(&train_path, cfg)?;
    let dev_set = load(&dev_path, cfg)?;
    // Text only: the closed vocabulary has to cover dev inputs too.
    let vocab = Vocab::build(train_set.iter().chain(&dev_set));
    let store = init_params(&cfg.encoder(), vocab.len())?;
    let model = Model {
        vocab,
        config: cfg.model(),
        store,
    };

    let out = out_dir(cfg)?.to_path_buf();
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::Io(ckpt_dir.clone(), e))?;
    let result = train_with(model, &train_set, &dev_set, &cfg.train(), |c| {
        c.save(&ckpt_dir.join(format!("step-{:06}.ckpt", c.manifest.step)))
    });
    let outcome = match result {
        Ok(o) => o,
        Err(latentqa::Error::Diverged { step, last_good }) => {
            if let Some(c) = *last_good.clone() {
                c.save(&out.join("last-good.ckpt"))?;
                log::error!("saved last good checkpoint (step {}) to last-good.ckpt", c.manifest.step);
            }
            return Err(latentqa::Error::Diverged { step, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    outcome.best.save(&out.join("best.ckpt"))?;
    log::info!("best checkpoint: step {}", outcome.best.manifest.step);
    write(out.join("history.json"), serde_json::to_string_pretty(&outcome.history)?)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let examples = eval_examples(cfg)?;
    let (report, _) = evaluate(&model, &examples)?;
    let name = if cfg.independent_docs { "metrics-independent.json" } else { "metrics.json" };
    write(out_dir(cfg)?.join(name), report.to_json()?)
}

#[derive(Serialize)]
struct ExternalRecord {
    #[serde(flatten)]
    prediction: PredictionRecord,
    external_answer: Option<String>,
    external_token_logprobs: Option<Vec<f64>>,
    external_error: Option<String>,
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let examples = eval_examples(cfg)?;
    let (_, preds) = evaluate(&model, &examples)?;
    let out = out_dir(cfg)?;
    let Some(service) = cfg.service() else {
        return write(out.join("predictions.jsonl"), predictions_jsonl(&preds, &examples)?);
    };

    let client = ServiceClient::new(service)?;
    let mut prompts = Vec::with_capacity(examples.len());
    for (p, ex) in preds.iter().zip(&examples) {
        let rationale: Vec<String> = p
            .sentence_pairs()
            .into_iter()
            .map(|(d, s)| detokenize(&ex.documents[d].sentences[s]))
            .collect();
        let prompt = render_prompt(ex.task(), &detokenize(&ex.question), &rationale.join(" "), None)?;
        prompts.push(prompt.input);
    }
    let mut text = String::new();
    for ((p, ex), gen) in preds.iter().zip(&examples).zip(client.generate_all(&prompts)) {
        let (answer, logprobs, error) = match gen {
            Ok(g) => (Some(g.text), g.token_logprobs, None),
            Err(e) => {
                log::warn!("{}: external generation failed: {e}", ex.id);
                (None, None, Some(e.to_string()))
            }
        };
        let record = ExternalRecord {
            prediction: PredictionRecord::new(p, ex),
            external_answer: answer,
            external_token_logprobs: logprobs,
            external_error: error,
        };
        text.push_str(&serde_json::to_string(&record)?);
        text.push('\n');
    }
    write(out.join("predictions.jsonl"), text)
}

pub fn gradcheck(cfg: &RunConfig) -> Result<()> {
    // Two examples, two documents of two sentences each.
    let examples = synth_generate(&SynthConfig {
        n_examples: 2,
        n_docs_per_example: 2,
        n_distractors: 0,
        sentences_per_doc: 2,
        entity_vocab_size: 8,
        bridge_fraction: 0.5,
        seed: cfg.seed,
    })?;
    let vocab = Vocab::build(&examples);
    let enc = EncoderConfig {
        embedding_dim: 4,
        mlp_hidden: 3,
        decoder_hidden: 3,
        slice_len: 2,
        init_scale: 0.5,
        seed: cfg.seed,
    };
    let store = init_params(&enc, vocab.len())?;
    let model_cfg = ModelConfig {
        doc_sets_up_to: true,
        max_rationale: 2,
        contiguous: cfg.contiguous,
        doc_model: cfg.doc_model(),
        ..ModelConfig::default()
    };
    let model = Model {
        vocab,
        config: model_cfg,
        store,
    };
    let encoded = model.encode_all(&examples)?;
    let budget = Budget {
        k_doc: cfg.k_doc,
        k_sent: cfg.k_sent,
    };
    let report = gradient_check(&model.store, &encoded, &model.config, budget, cfg.gradcheck_step)?;
    write(out_dir(cfg)?.join("gradcheck.json"), serde_json::to_string_pretty(&report)?)?;
    log::info!("gradient check: max relative error {:.3e}", report.max_rel_error);
    if report.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::GradCheck(report.max_rel_error, GRADCHECK_TOLERANCE))
    }
}

pub fn shortcuts(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let examples = eval_examples(cfg)?;
    let report = find_shortcuts(&model, &examples)?;
    log::info!("{} of {} inspected examples flagged", report.flagged.len(), report.inspected);
    let flagged: Vec<Example> = examples
        .iter()
        .filter(|e| report.flagged.contains(&e.id))
        .cloned()
        .collect();
    let mut text = format!(
        "{} of {} inspected examples answered correctly from a single gold document ({} skipped)\n",
        report.flagged.len(),
        report.inspected,
        report.skipped
    );
    if !flagged.is_empty() {
        let (_, preds) = evaluate(&model, &flagged)?;
        for (p, ex) in preds.iter().zip(&flagged) {
            text.push_str(&shortcut_entry(p, ex));
        }
    }
    let out = out_dir(cfg)?;
    write(out.join("shortcuts.json"), serde_json::to_string_pretty(&report)?)?;
    write(out.join("shortcuts.txt"), text)
}

fn shortcut_entry(p: &Prediction, ex: &Example) -> String {
    let gold_docs = ex.gold_docs.clone().unwrap_or_default();
    let gold = ex.gold_rationale.clone().unwrap_or_default();
    let mut s = format!("\n[{}] {}\n", ex.id, detokenize(&ex.question));
    s.push_str(&format!("  answer: {}\n", PredictionRecord::new(p, ex).answer));
    for (d, i) in p.sentence_pairs() {
        let mark = if gold.contains(&(d, i)) { "gold" } else if gold_docs.contains(&d) { "gold doc" } else { "other" };
        s.push_str(&format!("  used ({d},{i}) [{mark}] {}\n", detokenize(&ex.documents[d].sentences[i])));
    }
    for &(d, i) in gold.iter().filter(|g| !p.sentence_pairs().contains(g)) {
        s.push_str(&format!("  missed ({d},{i}) {}\n", detokenize(&ex.documents[d].sentences[i])));
    }
    s
}
