//! Valid subsets of a small universe, globally normalized distributions over
//! them, and k-best extraction (single distribution and products of
//! independent distributions).
//!
//! Every ordering question is settled by the canonical subset order: smaller
//! subsets first, then lexicographic on the sorted member indices. Candidate
//! lists are ranked by log-probability with ties broken by that order, so
//! results are reproducible bit for bit.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the cartesian product size the brute-force oracle accepts.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpace {
    pub universe_size: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub contiguous_only: bool,
}

impl SubsetSpace {
    pub fn new(
        universe_size: usize,
        min_size: usize,
        max_size: usize,
        contiguous_only: bool,
    ) -> Result<Self> {
        if min_size < 1 || min_size > max_size || max_size > universe_size {
            return Err(Error::InvalidArgument(format!(
                "subset space requires 1 <= min ({min_size}) <= max ({max_size}) <= n ({universe_size})"
            )));
        }
        Ok(SubsetSpace {
            universe_size,
            min_size,
            max_size,
            contiguous_only,
        })
    }

    /// Space of sentence subsets inside one document: sizes 1 to `max_size`,
    /// clamped to the number of sentences.
    pub fn up_to(universe_size: usize, max_size: usize, contiguous_only: bool) -> Result<Self> {
        SubsetSpace::new(
            universe_size,
            1,
            max_size.min(universe_size),
            contiguous_only,
        )
    }

    /// Subsets of exactly `size` members.
    pub fn exactly(universe_size: usize, size: usize) -> Result<Self> {
        SubsetSpace::new(universe_size, size, size, false)
    }

    /// Number of valid subsets, computed analytically.
    pub fn count(&self) -> u128 {
        (self.min_size..=self.max_size)
            .map(|s| {
                if self.contiguous_only {
                    (self.universe_size - s + 1) as u128
                } else {
                    binomial(self.universe_size as u128, s as u128)
                }
            })
            .sum()
    }

    pub fn contains(&self, subset: &Subset) -> bool {
        let idx = subset.indices();
        let len = idx.len();
        len >= self.min_size
            && len <= self.max_size
            && idx.windows(2).all(|w| w[0] < w[1])
            && idx.last().map_or(true, |&last| last < self.universe_size)
            && (!self.contiguous_only || idx.windows(2).all(|w| w[1] == w[0] + 1))
    }
}

pub(crate) fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Strictly increasing list of member indices.
///
/// `Ord` is the canonical order: size first, then lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate subset member in {indices:?}"
            )));
        }
        Ok(Subset(indices))
    }

    pub fn singleton(index: usize) -> Self {
        Subset(vec![index])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }
}

impl Ord for Subset {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Subset {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

/// All valid subsets of `space`, each exactly once, in canonical order.
pub fn enumerate_subsets(space: &SubsetSpace) -> Vec<Subset> {
    let n = space.universe_size;
    let mut out = Vec::with_capacity(space.count().min(1 << 20) as usize);
    for size in space.min_size..=space.max_size {
        if space.contiguous_only {
            for start in 0..=(n - size) {
                out.push(Subset((start..start + size).collect()));
            }
            continue;
        }
        // lexicographic combinations of `size` out of `n`
        let mut comb: Vec<usize> = (0..size).collect();
        loop {
            out.push(Subset(comb.clone()));
            let mut i = size;
            while i > 0 && comb[i - 1] == n - size + (i - 1) {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            comb[i - 1] += 1;
            for j in i..size {
                comb[j] = comb[j - 1] + 1;
            }
        }
    }
    out
}

/// log Σ exp(values), stable under large magnitudes. Returns −∞ when every
/// value is −∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Converts scores into log-probabilities: `scores[i] - logsumexp(scores)`.
pub fn log_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot normalize an empty score list".into(),
        ));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite score {bad} in log_normalize"
        )));
    }
    // subtract the max before the log-sum so large equal scores stay exact
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(scores.iter().map(|s| (s - max) - log_sum).collect())
}

/// A normalized distribution over every subset of a space.
#[derive(Debug, Clone)]
pub struct SetDistribution {
    space: SubsetSpace,
    subsets: Vec<Subset>,
    log_probs: Vec<f64>,
}

impl SetDistribution {
    /// Normalizes one score per subset of `space` (scores given in canonical
    /// order, as produced by [`enumerate_subsets`]).
    pub fn from_scores(space: SubsetSpace, scores: &[f64]) -> Result<Self> {
        let subsets = enumerate_subsets(&space);
        if subsets.len() != scores.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores for {} subsets",
                scores.len(),
                subsets.len()
            )));
        }
        let log_probs = log_normalize(scores)?;
        Ok(SetDistribution {
            space,
            subsets,
            log_probs,
        })
    }

    /// Builds a distribution from explicit subsets and log-probabilities, used
    /// when the caller already holds canonical subsets (tests, baselines).
    pub fn from_parts(space: SubsetSpace, subsets: Vec<Subset>, log_probs: Vec<f64>) -> Result<Self> {
        if subsets.len() != log_probs.len() || subsets.is_empty() {
            return Err(Error::InvalidArgument(
                "subset and log-prob lists must be non-empty and equally long".into(),
            ));
        }
        if subsets.windows(2).any(|w| w[0] >= w[1]) || subsets.iter().any(|s| !space.contains(s)) {
            return Err(Error::InvalidArgument(
                "subsets must be valid for the space and in canonical order".into(),
            ));
        }
        let total = log_sum_exp(&log_probs);
        if !(total.abs() < 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "log-probs do not normalize (log total {total})"
            )));
        }
        Ok(SetDistribution {
            space,
            subsets,
            log_probs,
        })
    }

    pub fn space(&self) -> &SubsetSpace {
        &self.space
    }

    pub fn subsets(&self) -> &[Subset] {
        &self.subsets
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Index of `subset` in canonical order, if it belongs to the space.
    pub fn position(&self, subset: &Subset) -> Option<usize> {
        self.subsets.binary_search(subset).ok()
    }

    pub fn log_prob(&self, subset: &Subset) -> Option<f64> {
        self.position(subset).map(|i| self.log_probs[i])
    }

    /// Indices into `subsets` ranked by descending log-prob, ties canonical.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.subsets.len()).collect();
        order.sort_by(|&a, &b| {
            self.log_probs[b]
                .total_cmp(&self.log_probs[a])
                .then(a.cmp(&b))
        });
        order
    }
}

/// Ranked `(structure, log_prob)` pairs: log-probs non-increasing, ties in
/// ascending structure order, no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList<T> {
    items: Vec<(T, f64)>,
}

impl<T> CandidateList<T> {
    pub fn items(&self) -> &[(T, f64)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn first(&self) -> Option<&(T, f64)> {
        self.items.first()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(T, f64)> {
        self.items.iter()
    }

    pub fn into_items(self) -> Vec<(T, f64)> {
        self.items
    }
}

impl<T: Ord> CandidateList<T> {
    /// Sorts arbitrary candidates into ranked order.
    pub fn from_unsorted(mut items: Vec<(T, f64)>) -> Self {
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        items.dedup_by(|a, b| a.0 == b.0);
        CandidateList { items }
    }
}

/// The `min(k, support)` most probable subsets of `dist`.
pub fn top_k(dist: &SetDistribution, k: usize) -> CandidateList<Subset> {
    let items = dist
        .ranking()
        .into_iter()
        .take(k)
        .map(|i| (dist.subsets[i].clone(), dist.log_probs[i]))
        .collect();
    CandidateList { items }
}

// Heap entry for the product frontier. Max-heap on score, then on reversed
// structure so the canonical-smallest tuple pops first among ties.
struct Frontier {
    score: f64,
    tuple: Vec<Subset>,
    ranks: Vec<usize>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.tuple.cmp(&self.tuple))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn tuple_score(dists: &[SetDistribution], picks: impl Iterator<Item = usize>) -> f64 {
    dists
        .iter()
        .zip(picks)
        .fold(0.0, |acc, (d, i)| acc + d.log_probs[i])
}

/// The `k` best tuples (one subset per distribution) by summed log-prob.
///
/// Lazy best-first search over per-distribution rank vectors: the frontier
/// starts at the all-argmax tuple and each pop pushes the tuples that advance
/// one coordinate by one rank. Only O(k · len(dists)) tuples are touched.
pub fn top_k_product(dists: &[SetDistribution], k: usize) -> Result<CandidateList<Vec<Subset>>> {
    if dists.is_empty() || dists.iter().any(|d| d.is_empty()) {
        return Err(Error::InvalidArgument(
            "top_k_product needs at least one non-empty distribution".into(),
        ));
    }
    let rankings: Vec<Vec<usize>> = dists.iter().map(|d| d.ranking()).collect();
    let make = |ranks: Vec<usize>| {
        let picks: Vec<usize> = ranks
            .iter()
            .zip(&rankings)
            .map(|(&r, ranking)| ranking[r])
            .collect();
        let tuple = picks
            .iter()
            .zip(dists)
            .map(|(&i, d)| d.subsets[i].clone())
            .collect();
        Frontier {
            score: tuple_score(dists, picks.into_iter()),
            tuple,
            ranks,
        }
    };

    let mut heap = BinaryHeap::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let start = vec![0; dists.len()];
    seen.insert(start.clone());
    heap.push(make(start));

    let mut items = Vec::with_capacity(k.min(1024));
    while items.len() < k {
        let Some(best) = heap.pop() else { break };
        for axis in 0..dists.len() {
            if best.ranks[axis] + 1 < rankings[axis].len() {
                let mut next = best.ranks.clone();
                next[axis] += 1;
                if seen.insert(next.clone()) {
                    heap.push(make(next));
                }
            }
        }
        items.push((best.tuple, best.score));
    }
    Ok(CandidateList { items })
}

/// Reference for [`top_k_product`]: materializes the whole cartesian product
/// and sorts it. Refuses products larger than `cap`.
pub fn brute_force_product(
    dists: &[SetDistribution],
    k: usize,
    cap: u128,
) -> Result<CandidateList<Vec<Subset>>> {
    if dists.is_empty() || dists.iter().any(|d| d.is_empty()) {
        return Err(Error::InvalidArgument(
            "brute_force_product needs at least one non-empty distribution".into(),
        ));
    }
    let count: u128 = dists.iter().map(|d| d.len() as u128).product();
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut all = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; dists.len()];
    'outer: loop {
        let tuple = idx
            .iter()
            .zip(dists)
            .map(|(&i, d)| d.subsets[i].clone())
            .collect::<Vec<_>>();
        all.push((tuple, tuple_score(dists, idx.iter().copied())));
        for axis in (0..dists.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < dists[axis].len() {
                continue 'outer;
            }
            idx[axis] = 0;
        }
        break;
    }
    let mut list = CandidateList::from_unsorted(all);
    list.items.truncate(k);
    Ok(list)
}
