//! Toy autoregressive answer decoder.
//!
//! Next-token logits are `U · tanh(W · [ctx; emb(prev)])`, where `ctx` is the
//! mean decoder embedding of the rendered prompt input and `prev` starts at
//! BOS. Sequences are teacher-forced over `answer ⊕ EOS`.

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::params::{axpy, Params};
use crate::scorer::{mean_rows, mean_rows_backward};
use crate::setspace::log_sum_exp;

/// Token ids of the fixed template pieces around the question.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateIds {
    pub prefix: Vec<u32>,
    pub middle: Vec<u32>,
}

impl TemplateIds {
    /// `prefix ⊕ question ⊕ middle ⊕ rationale sentences`.
    pub fn context<S: AsRef<[u32]>>(&self, question: &[u32], rationale: &[S]) -> Vec<u32> {
        let mut ids = self.prefix.clone();
        ids.extend_from_slice(question);
        ids.extend_from_slice(&self.middle);
        for s in rationale {
            ids.extend_from_slice(s.as_ref());
        }
        ids
    }
}

fn check_vocab(params: &Params, ids: &[u32]) -> Result<()> {
    let size = params.decoder_embeddings.shape[0];
    match ids.iter().find(|&&i| i as usize >= size) {
        Some(&id) => Err(Error::TokenId {
            id: id as usize,
            size,
        }),
        None => Ok(()),
    }
}

struct Step {
    input: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    prev: u32,
    target: u32,
}

/// Forward pass over one teacher-forced target, kept for backward.
pub(crate) struct SeqTrace {
    steps: Vec<Step>,
    pub logprob: f64,
}

fn step_logits(params: &Params, ctx: &[f64], prev: u32) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut input = ctx.to_vec();
    input.extend_from_slice(params.decoder_embeddings.row(prev as usize));
    let mut hidden = params.decoder_w.matvec(&input);
    for h in &mut hidden {
        *h = h.tanh();
    }
    let logits = params.decoder_u.matvec(&hidden);
    (input, hidden, logits)
}

/// Teacher-forces `target ⊕ EOS` under context vector `ctx`.
pub(crate) fn forward_seq(params: &Params, ctx: &[f64], target: &[u32]) -> SeqTrace {
    let mut steps = Vec::with_capacity(target.len() + 1);
    let mut logprob = 0.0;
    let mut prev = Vocab::BOS_ID;
    for &t in target.iter().chain(std::iter::once(&Vocab::EOS_ID)) {
        let (input, hidden, logits) = step_logits(params, ctx, prev);
        let z = log_sum_exp(&logits);
        logprob += logits[t as usize] - z;
        let probs = logits.iter().map(|l| (l - z).exp()).collect();
        steps.push(Step {
            input,
            hidden,
            probs,
            prev,
            target: t,
        });
        prev = t;
    }
    SeqTrace { steps, logprob }
}

/// Accumulates `g · ∂logprob/∂θ` and returns `g · ∂logprob/∂ctx`.
pub(crate) fn backward_seq(params: &Params, grads: &mut Params, trace: &SeqTrace, g: f64) -> Vec<f64> {
    let n = params.decoder_embeddings.cols();
    let mut dctx = vec![0.0; n];
    let mut da = vec![0.0; params.decoder_w.shape[0]];
    let mut dx = vec![0.0; 2 * n];
    for step in &trace.steps {
        let dlogits: Vec<f64> = step
            .probs
            .iter()
            .enumerate()
            .map(|(v, &p)| g * (if v == step.target as usize { 1.0 } else { 0.0 } - p))
            .collect();
        grads.decoder_u.add_outer(&dlogits, &step.hidden);
        da.fill(0.0);
        params.decoder_u.matvec_t_into(&dlogits, &mut da);
        for (d, h) in da.iter_mut().zip(&step.hidden) {
            *d *= 1.0 - h * h;
        }
        grads.decoder_w.add_outer(&da, &step.input);
        dx.fill(0.0);
        params.decoder_w.matvec_t_into(&da, &mut dx);
        axpy(1.0, &dx[..n], &mut dctx);
        axpy(1.0, &dx[n..], grads.decoder_embeddings.row_mut(step.prev as usize));
    }
    dctx
}

pub(crate) fn context_vector(params: &Params, context_ids: &[u32]) -> Vec<f64> {
    mean_rows(&params.decoder_embeddings, context_ids)
}

pub(crate) fn context_backward(grads: &mut Params, context_ids: &[u32], dctx: &[f64]) {
    mean_rows_backward(&mut grads.decoder_embeddings, context_ids, dctx);
}

/// `log p(answer ⊕ EOS | prompt)` under teacher forcing.
pub fn answer_logprob<S: AsRef<[u32]>>(
    params: &Params,
    template: &TemplateIds,
    question: &[u32],
    rationale: &[S],
    answer: &[u32],
) -> Result<f64> {
    if rationale.is_empty() {
        return Err(Error::InvalidArgument("answer scoring needs a non-empty rationale".into()));
    }
    let ids = template.context(question, rationale);
    check_vocab(params, &ids)?;
    check_vocab(params, answer)?;
    let ctx = context_vector(params, &ids);
    Ok(forward_seq(params, &ctx, answer).logprob)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// Generated ids without the terminating EOS.
    pub ids: Vec<u32>,
    /// Whether decoding stopped at `max_len` rather than at EOS.
    pub truncated: bool,
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding; ties go to the lowest token id.
pub fn greedy_decode<S: AsRef<[u32]>>(
    params: &Params,
    template: &TemplateIds,
    question: &[u32],
    rationale: &[S],
    max_len: usize,
) -> Result<Decoded> {
    let ids = template.context(question, rationale);
    check_vocab(params, &ids)?;
    let ctx = context_vector(params, &ids);
    Ok(decode_from(params, &ctx, max_len))
}

pub(crate) fn decode_from(params: &Params, ctx: &[f64], max_len: usize) -> Decoded {
    let mut out = Vec::new();
    let mut prev = Vocab::BOS_ID;
    while out.len() < max_len {
        let (_, _, logits) = step_logits(params, ctx, prev);
        let next = argmax_lowest(&logits) as u32;
        if next == Vocab::EOS_ID {
            return Decoded {
                ids: out,
                truncated: false,
            };
        }
        out.push(next);
        prev = next;
    }
    Decoded {
        ids: out,
        truncated: true,
    }
}

/// Softmax over alternative log-probs, with the argmax (lowest index on ties).
pub fn choice_normalize(logprobs: &[f64]) -> (Vec<f64>, usize) {
    let z = log_sum_exp(logprobs);
    let probs = logprobs.iter().map(|l| (l - z).exp()).collect();
    (probs, argmax_lowest(logprobs))
}
