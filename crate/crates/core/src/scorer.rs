//! Encoder-side scoring: token-mean embeddings, question-conditioned
//! sentence marker vectors, the linear subset score, sliced document
//! embeddings and the document-set MLP.
//!
//! Every forward pass here has a matching backward pass that accumulates
//! into a gradient [`Params`].

use crate::error::{Error, Result};
use crate::params::{axpy, dot, Array, Params};
use crate::setspace::{enumerate_subsets, SetDistribution, Subset, SubsetSpace};

pub type Embedding = Vec<f64>;

/// How document sets are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocModel {
    /// One MLP score per set, capturing inter-document dependencies.
    #[default]
    Joint,
    /// Product of per-document probabilities, renormalized over valid sets.
    Independent,
}

fn check_ids(table: &Array, ids: &[u32]) -> Result<()> {
    let size = table.shape[0];
    match ids.iter().find(|&&i| i as usize >= size) {
        Some(&bad) => Err(Error::TokenId {
            id: bad as usize,
            size,
        }),
        None => Ok(()),
    }
}

/// Mean of the rows of `table` selected by `ids`; zero for no ids.
pub(crate) fn mean_rows(table: &Array, ids: &[u32]) -> Vec<f64> {
    let mut out = vec![0.0; table.cols()];
    if ids.is_empty() {
        return out;
    }
    let w = 1.0 / ids.len() as f64;
    for &i in ids {
        axpy(w, table.row(i as usize), &mut out);
    }
    out
}

/// Backward of [`mean_rows`].
pub(crate) fn mean_rows_backward(grad: &mut Array, ids: &[u32], d: &[f64]) {
    if ids.is_empty() {
        return;
    }
    let w = 1.0 / ids.len() as f64;
    for &i in ids {
        axpy(w, d, grad.row_mut(i as usize));
    }
}

/// Mean of the encoder embeddings of `ids`; the empty sequence maps to the
/// zero vector.
pub fn embed_tokens(params: &Params, ids: &[u32]) -> Result<Embedding> {
    check_ids(&params.token_embeddings, ids)?;
    Ok(mean_rows(&params.token_embeddings, ids))
}

/// One vector per sentence: question embedding plus sentence embedding.
pub fn sentence_marker_embeddings(params: &Params, question: &[u32], document: &[Vec<u32>]) -> Result<Vec<Embedding>> {
    if document.is_empty() {
        return Err(Error::InvalidArgument("document has no sentences".into()));
    }
    let q = embed_tokens(params, question)?;
    document
        .iter()
        .map(|s| {
            let mut e = embed_tokens(params, s)?;
            axpy(1.0, &q, &mut e);
            Ok(e)
        })
        .collect()
}

/// `v · mean(markers[j] for j in subset)`.
pub fn subset_score(params: &Params, markers: &[Embedding], subset: &Subset) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("empty subset has no score".into()));
    }
    if let Some(&bad) = subset.indices().iter().find(|&&j| j >= markers.len()) {
        return Err(Error::InvalidArgument(format!(
            "subset member {bad} out of range for {} sentences",
            markers.len()
        )));
    }
    Ok(subset_score_unchecked(&params.sentence_score.data, markers, subset))
}

fn subset_score_unchecked(v: &[f64], markers: &[Embedding], subset: &Subset) -> f64 {
    let total: f64 = subset.indices().iter().map(|&j| dot(v, &markers[j])).sum();
    total / subset.len() as f64
}

fn slices(document: &[Vec<u32>], slice_len: usize) -> impl Iterator<Item = &[Vec<u32>]> {
    document.chunks(slice_len)
}

fn slice_ids(question: &[u32], slice: &[Vec<u32>]) -> Vec<u32> {
    let mut ids = question.to_vec();
    for s in slice {
        ids.extend_from_slice(s);
    }
    ids
}

/// Mean over consecutive `slice_len`-sentence slices of
/// `embed_tokens(question ⊕ slice)`.
pub fn doc_embedding(params: &Params, question: &[u32], document: &[Vec<u32>], slice_len: usize) -> Result<Embedding> {
    if document.is_empty() {
        return Err(Error::InvalidArgument("document has no sentences".into()));
    }
    if slice_len == 0 {
        return Err(Error::InvalidArgument("slice length must be positive".into()));
    }
    check_ids(&params.token_embeddings, question)?;
    for s in document {
        check_ids(&params.token_embeddings, s)?;
    }
    Ok(doc_embedding_unchecked(params, question, document, slice_len))
}

fn doc_embedding_unchecked(params: &Params, question: &[u32], document: &[Vec<u32>], slice_len: usize) -> Embedding {
    let n_slices = document.len().div_ceil(slice_len);
    let mut out = vec![0.0; params.token_embeddings.cols()];
    for slice in slices(document, slice_len) {
        let e = mean_rows(&params.token_embeddings, &slice_ids(question, slice));
        axpy(1.0 / n_slices as f64, &e, &mut out);
    }
    out
}

fn doc_embedding_backward(grads: &mut Params, question: &[u32], document: &[Vec<u32>], slice_len: usize, d: &[f64]) {
    let n_slices = document.len().div_ceil(slice_len);
    let scaled: Vec<f64> = d.iter().map(|x| x / n_slices as f64).collect();
    for slice in slices(document, slice_len) {
        mean_rows_backward(&mut grads.token_embeddings, &slice_ids(question, slice), &scaled);
    }
}

/// MLP input for a document set: `[e1, e2, |e1 − e2|]` for pairs (members in
/// ascending index order), `[s, s, 0]` with `s` the member sum otherwise.
fn set_input(embs: &[Embedding], set: &Subset) -> Vec<f64> {
    let n = embs[0].len();
    let mut x = vec![0.0; 3 * n];
    match set.indices() {
        &[i, j] => {
            let (a, b) = (&embs[i], &embs[j]);
            for k in 0..n {
                x[k] = a[k];
                x[n + k] = b[k];
                x[2 * n + k] = (a[k] - b[k]).abs();
            }
        }
        members => {
            for &i in members {
                for k in 0..n {
                    x[k] += embs[i][k];
                }
            }
            let (head, rest) = x.split_at_mut(n);
            rest[..n].copy_from_slice(head);
        }
    }
    x
}

fn set_input_backward(embs: &[Embedding], set: &Subset, dx: &[f64], dembs: &mut [Embedding]) {
    let n = embs[0].len();
    match set.indices() {
        &[i, j] => {
            for k in 0..n {
                let diff = embs[i][k] - embs[j][k];
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dembs[i][k] += dx[k] + sign * dx[2 * n + k];
                dembs[j][k] += dx[n + k] - sign * dx[2 * n + k];
            }
        }
        members => {
            for &i in members {
                for k in 0..n {
                    dembs[i][k] += dx[k] + dx[n + k];
                }
            }
        }
    }
}

struct MlpCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

fn mlp_forward(params: &Params, input: Vec<f64>) -> (f64, MlpCache) {
    let mut hidden = params.mlp_w1.matvec(&input);
    for h in &mut hidden {
        *h = h.max(0.0);
    }
    let score = dot(&params.mlp_w2.data, &hidden);
    (score, MlpCache { input, hidden })
}

// Returns d(score)/d(input) scaled by `g`, accumulating weight gradients.
fn mlp_backward(params: &Params, grads: &mut Params, cache: &MlpCache, g: f64) -> Vec<f64> {
    axpy(g, &cache.hidden, &mut grads.mlp_w2.data);
    let dh: Vec<f64> = cache
        .hidden
        .iter()
        .zip(&params.mlp_w2.data)
        .map(|(&h, &w)| if h > 0.0 { g * w } else { 0.0 })
        .collect();
    grads.mlp_w1.add_outer(&dh, &cache.input);
    let mut dx = vec![0.0; cache.input.len()];
    params.mlp_w1.matvec_t_into(&dh, &mut dx);
    dx
}

/// Forward state of document-set scoring, kept for the backward pass.
pub(crate) struct DocLayer {
    pub embs: Vec<Embedding>,
    pub dist: SetDistribution,
    model: DocModel,
    // Joint: one cache per set. Independent: one cache per document.
    caches: Vec<MlpCache>,
}

impl DocLayer {
    pub fn forward(params: &Params, question: &[u32], docs: &[Vec<Vec<u32>>], space: SubsetSpace, slice_len: usize, model: DocModel) -> Result<Self> {
        let embs: Vec<Embedding> = docs
            .iter()
            .map(|d| doc_embedding_unchecked(params, question, d, slice_len))
            .collect();
        let sets = enumerate_subsets(&space);
        let (scores, caches) = match model {
            DocModel::Joint => {
                let (scores, caches): (Vec<f64>, Vec<MlpCache>) = sets
                    .iter()
                    .map(|s| mlp_forward(params, set_input(&embs, s)))
                    .unzip();
                (scores, caches)
            }
            DocModel::Independent => {
                let (single, caches): (Vec<f64>, Vec<MlpCache>) = (0..embs.len())
                    .map(|i| mlp_forward(params, set_input(&embs, &Subset::singleton(i))))
                    .unzip();
                let scores = sets
                    .iter()
                    .map(|s| s.indices().iter().map(|&i| single[i]).sum())
                    .collect();
                (scores, caches)
            }
        };
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("document set score {bad}")));
        }
        let dist = SetDistribution::from_scores(space, &scores)?;
        Ok(DocLayer { embs, dist, model, caches })
    }

    /// Backpropagates `dscores` (one entry per set, canonical order).
    pub fn backward(&self, params: &Params, grads: &mut Params, question: &[u32], docs: &[Vec<Vec<u32>>], slice_len: usize, dscores: &[f64]) {
        let n = self.embs[0].len();
        let mut dembs = vec![vec![0.0; n]; self.embs.len()];
        match self.model {
            DocModel::Joint => {
                for ((set, cache), &g) in self.dist.subsets().iter().zip(&self.caches).zip(dscores) {
                    if g == 0.0 {
                        continue;
                    }
                    let dx = mlp_backward(params, grads, cache, g);
                    set_input_backward(&self.embs, set, &dx, &mut dembs);
                }
            }
            DocModel::Independent => {
                let mut dsingle = vec![0.0; self.embs.len()];
                for (set, &g) in self.dist.subsets().iter().zip(dscores) {
                    for &i in set.indices() {
                        dsingle[i] += g;
                    }
                }
                for (i, (cache, &g)) in self.caches.iter().zip(&dsingle).enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let dx = mlp_backward(params, grads, cache, g);
                    set_input_backward(&self.embs, &Subset::singleton(i), &dx, &mut dembs);
                }
            }
        }
        for ((doc, d), _) in docs.iter().zip(&dembs).zip(&self.embs) {
            doc_embedding_backward(grads, question, doc, slice_len, d);
        }
    }
}

/// `p(d | x)` over every set of `space`, scored by the pair MLP.
pub fn doc_set_distribution(params: &Params, question: &[u32], documents: &[Vec<Vec<u32>>], space: SubsetSpace, slice_len: usize) -> Result<SetDistribution> {
    validate_docs(params, question, documents, &space)?;
    Ok(DocLayer::forward(params, question, documents, space, slice_len, DocModel::Joint)?.dist)
}

/// Independent-document baseline: each document scored alone, set
/// probability proportional to the product of member probabilities.
pub fn indep_doc_distribution(params: &Params, question: &[u32], documents: &[Vec<Vec<u32>>], set_size: usize, slice_len: usize) -> Result<SetDistribution> {
    let space = SubsetSpace::exactly(documents.len(), set_size)?;
    validate_docs(params, question, documents, &space)?;
    Ok(DocLayer::forward(params, question, documents, space, slice_len, DocModel::Independent)?.dist)
}

fn validate_docs(params: &Params, question: &[u32], documents: &[Vec<Vec<u32>>], space: &SubsetSpace) -> Result<()> {
    if space.universe_size != documents.len() {
        return Err(Error::InvalidArgument(format!(
            "document space over {} documents given {}",
            space.universe_size,
            documents.len()
        )));
    }
    check_ids(&params.token_embeddings, question)?;
    for d in documents {
        if d.is_empty() {
            return Err(Error::InvalidArgument("document has no sentences".into()));
        }
        for s in d {
            check_ids(&params.token_embeddings, s)?;
        }
    }
    Ok(())
}

/// Forward state of sentence-subset scoring within one document.
pub(crate) struct SentenceLayer {
    markers: Vec<Embedding>,
    pub dist: SetDistribution,
}

impl SentenceLayer {
    pub fn forward(params: &Params, question_mean: &[f64], document: &[Vec<u32>], space: SubsetSpace) -> Result<Self> {
        let markers: Vec<Embedding> = document
            .iter()
            .map(|s| {
                let mut e = mean_rows(&params.token_embeddings, s);
                axpy(1.0, question_mean, &mut e);
                e
            })
            .collect();
        let v = &params.sentence_score.data;
        let per_sentence: Vec<f64> = markers.iter().map(|m| dot(v, m)).collect();
        let scores: Vec<f64> = enumerate_subsets(&space)
            .iter()
            .map(|s| s.indices().iter().map(|&j| per_sentence[j]).sum::<f64>() / s.len() as f64)
            .collect();
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("sentence subset score {bad}")));
        }
        let dist = SetDistribution::from_scores(space, &scores)?;
        Ok(SentenceLayer { markers, dist })
    }

    pub fn backward(&self, params: &Params, grads: &mut Params, question: &[u32], document: &[Vec<u32>], dscores: &[f64]) {
        // weight of each sentence in d(scores)
        let mut c = vec![0.0; self.markers.len()];
        for (s, &g) in self.dist.subsets().iter().zip(dscores) {
            let w = g / s.len() as f64;
            for &j in s.indices() {
                c[j] += w;
            }
        }
        let v = &params.sentence_score.data;
        let mut dq = vec![0.0; v.len()];
        let mut dm = vec![0.0; v.len()];
        for ((m, &cj), sent) in self.markers.iter().zip(&c).zip(document) {
            if cj == 0.0 {
                continue;
            }
            axpy(cj, m, &mut grads.sentence_score.data);
            dm.iter_mut().zip(v).for_each(|(d, &vk)| *d = cj * vk);
            axpy(1.0, &dm, &mut dq);
            mean_rows_backward(&mut grads.token_embeddings, sent, &dm);
        }
        mean_rows_backward(&mut grads.token_embeddings, question, &dq);
    }
}
