//! Label-aligned data augmentation.
//!
//! Two strategies produce perturbed copies of labeled training documents:
//!
//! * TF-IDF word replacement: low-information words are replaced by other
//!   low-information words from the corpus vocabulary. Length and labels are
//!   untouched.
//! * Random edit: one of adjacent swap, independent deletion, or a contiguous
//!   crop. Labels move in lockstep with their tokens and the gold range is
//!   recomputed from the surviving labels.
//!
//! Timestamps stay attached to positions (swap) or to surviving tokens
//! (delete, crop), so augmented documents remain valid corpus documents.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::DEFAULT_K;
use crate::corpus::{LabeledDoc, TranscriptDoc};
use crate::error::{Error, Result};
use crate::splitter::{DatasetSplit, SplitRole};

/// Resampling attempts for a degenerate copy before it is dropped.
pub const MAX_RESAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "tfidfwr")]
    TfidfReplace,
    #[serde(rename = "randaug")]
    RandomEdit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub strategy: Strategy,
    pub copies_per_doc: usize,
    pub edit_prob: f64,
    pub seed: u64,
    /// Copies of documents at least this long must stay at least this long.
    pub min_len: usize,
}

impl AugmentConfig {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        AugmentConfig {
            strategy,
            copies_per_doc: 5,
            edit_prob: 0.15,
            seed,
            min_len: 2 * DEFAULT_K,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.copies_per_doc == 0 {
            return Err(Error::Config("copies_per_doc must be positive".into()));
        }
        if !(self.edit_prob > 0.0 && self.edit_prob < 1.0) {
            return Err(Error::Config(format!(
                "edit probability {} is outside (0, 1)",
                self.edit_prob
            )));
        }
        Ok(())
    }
}

/// Document frequencies over lowercased tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfStats {
    docs: usize,
    idf: BTreeMap<String, f64>,
}

impl TfidfStats {
    pub fn documents(&self) -> usize {
        self.docs
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.idf.get(token).copied()
    }

    /// idf of a lowercased token; unseen tokens count as maximally rare.
    fn idf_or_max(&self, token: &str) -> f64 {
        self.idf(token).unwrap_or_else(|| (self.docs.max(1) as f64).ln())
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = (&str, f64)> {
        self.idf.iter().map(|(t, &v)| (t.as_str(), v))
    }

    /// Term frequency of every lowercased token in `doc`.
    pub fn term_frequencies(doc: &TranscriptDoc) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in &doc.tokens {
            *tf.entry(t.text.to_lowercase()).or_default() += 1.0;
        }
        let n = doc.len() as f64;
        tf.values_mut().for_each(|v| *v /= n);
        tf
    }
}

pub fn compute_tfidf<'a>(docs: impl IntoIterator<Item = &'a TranscriptDoc>) -> TfidfStats {
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut n = 0;
    for doc in docs {
        n += 1;
        let distinct: HashSet<String> = doc.tokens.iter().map(|t| t.text.to_lowercase()).collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    let idf = df
        .into_iter()
        .map(|(t, d)| (t, (n as f64 / d as f64).ln()))
        .collect();
    TfidfStats { docs: n, idf }
}

/// Per-position replacement probabilities for TF-IDF replacement.
///
/// Position `i` is weighted by `max_tfidf - tfidf_i` and the weights are
/// scaled so the probabilities average to `p`, with each capped at 1. A
/// document whose tokens all share one TF-IDF value uses `p` everywhere.
pub fn replacement_probabilities(doc: &TranscriptDoc, stats: &TfidfStats, p: f64) -> Vec<f64> {
    let tf = TfidfStats::term_frequencies(doc);
    let tfidf: Vec<f64> = doc
        .tokens
        .iter()
        .map(|t| {
            let key = t.text.to_lowercase();
            tf[&key] * stats.idf_or_max(&key)
        })
        .collect();
    let max = tfidf.iter().copied().fold(f64::MIN, f64::max);
    let weights: Vec<f64> = tfidf.iter().map(|v| max - v).collect();
    if weights.iter().all(|&w| w == 0.0) {
        return vec![p; weights.len()];
    }
    let target = p * weights.len() as f64;
    let mut capped = vec![false; weights.len()];
    let mut scale;
    loop {
        let n_capped = capped.iter().filter(|&&c| c).count() as f64;
        let free: f64 = weights
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(w, _)| w)
            .sum();
        scale = if free > 0.0 { (target - n_capped).max(0.0) / free } else { 0.0 };
        let mut changed = false;
        for (w, c) in weights.iter().zip(capped.iter_mut()) {
            if !*c && scale * w >= 1.0 {
                *c = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    weights
        .iter()
        .zip(&capped)
        .map(|(w, &c)| if c { 1.0 } else { scale * w })
        .collect()
}

/// Draws replacement words with probability proportional to
/// `max_idf - idf`, never returning the word being replaced.
struct ReplacementSampler {
    words: Vec<String>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ReplacementSampler {
    fn new(stats: &TfidfStats) -> Result<Self> {
        if stats.idf.len() < 2 {
            return Err(Error::Augment(format!(
                "vocabulary of {} word(s); replacement needs at least 2",
                stats.idf.len()
            )));
        }
        let max = stats.idf.values().copied().fold(f64::MIN, f64::max);
        let words: Vec<String> = stats.idf.keys().cloned().collect();
        let weights: Vec<f64> = stats.idf.values().map(|v| max - v).collect();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(ReplacementSampler {
            words,
            weights,
            cumulative,
        })
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn sample(&self, exclude: &str, rng: &mut impl Rng) -> &str {
        let own = self
            .words
            .binary_search_by(|w| w.as_str().cmp(exclude))
            .ok();
        let own_weight = own.map_or(0.0, |i| self.weights[i]);
        let rest = self.total() - own_weight;
        if rest <= self.total() * 1e-12 {
            // No other word carries weight: fall back to uniform.
            loop {
                let i = rng.random_range(0..self.words.len());
                if Some(i) != own {
                    return &self.words[i];
                }
            }
        }
        loop {
            let u = rng.random::<f64>() * self.total();
            let i = self.cumulative.partition_point(|&c| c <= u).min(self.words.len() - 1);
            if Some(i) != own && self.weights[i] > 0.0 {
                return &self.words[i];
            }
        }
    }
}

fn replace_once(
    doc: &LabeledDoc,
    probs: &[f64],
    sampler: &ReplacementSampler,
    rng: &mut impl Rng,
) -> LabeledDoc {
    let mut out = doc.clone();
    for (token, &q) in out.doc.tokens.iter_mut().zip(probs) {
        if rng.random::<f64>() < q {
            let lower = token.text.to_lowercase();
            token.text = sampler.sample(&lower, rng).to_owned();
        }
    }
    out
}

/// TF-IDF word replacement; returns `cfg.copies_per_doc` copies.
pub fn tfidf_replace(
    doc: &LabeledDoc,
    stats: &TfidfStats,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<Vec<LabeledDoc>> {
    cfg.validate()?;
    let sampler = ReplacementSampler::new(stats)?;
    let probs = replacement_probabilities(&doc.doc, stats, cfg.edit_prob);
    Ok((0..cfg.copies_per_doc)
        .map(|_| replace_once(doc, &probs, &sampler, rng))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edit {
    Swap,
    Delete,
    Crop,
}

/// Applies one edit; the result may be empty (callers resample).
pub fn apply_edit(edit: Edit, doc: &LabeledDoc, p: f64, rng: &mut impl Rng) -> LabeledDoc {
    let n = doc.doc.len();
    let mut out = doc.clone();
    match edit {
        Edit::Swap => {
            if n >= 2 {
                let swaps = (p * n as f64).ceil() as usize;
                for _ in 0..swaps {
                    let i = rng.random_range(0..n - 1);
                    let (left, right) = out.doc.tokens.split_at_mut(i + 1);
                    std::mem::swap(&mut left[i].text, &mut right[0].text);
                    out.labels.swap(i, i + 1);
                }
            }
        }
        Edit::Delete => {
            let keep: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= p).collect();
            retain_positions(&mut out, |i| keep[i]);
        }
        Edit::Crop => {
            let width = ((p * n as f64).ceil() as usize).min(n);
            let start = rng.random_range(0..=n - width);
            retain_positions(&mut out, |i| i < start || i >= start + width);
        }
    }
    out
}

fn retain_positions(doc: &mut LabeledDoc, keep: impl Fn(usize) -> bool) {
    let tokens = std::mem::take(&mut doc.doc.tokens);
    let labels = std::mem::take(&mut doc.labels);
    for (i, (token, label)) in tokens.into_iter().zip(labels).enumerate() {
        if keep(i) {
            doc.doc.tokens.push(token);
            doc.labels.push(label);
        }
    }
    doc.doc.reindex();
}

/// Outcome of random-edit augmentation of one document.
#[derive(Debug, Clone, Default)]
pub struct EditOutcome {
    pub copies: Vec<(Edit, LabeledDoc)>,
    /// Copies dropped after exhausting resamples.
    pub dropped: usize,
}

fn is_degenerate(source_len: usize, out_len: usize, min_len: usize) -> bool {
    out_len == 0 || (source_len >= min_len && out_len < min_len)
}

/// Random swap/delete/crop augmentation; one uniformly chosen edit per copy.
pub fn random_edit(doc: &LabeledDoc, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<EditOutcome> {
    cfg.validate()?;
    if doc.doc.len() < 2 {
        return Err(Error::Augment(format!(
            "episode `{}` has fewer than 2 tokens",
            doc.doc.episode_id
        )));
    }
    let mut outcome = EditOutcome::default();
    for _ in 0..cfg.copies_per_doc {
        let mut accepted = None;
        for _ in 0..=MAX_RESAMPLES {
            let edit = match rng.random_range(0..3) {
                0 => Edit::Swap,
                1 => Edit::Delete,
                _ => Edit::Crop,
            };
            let copy = apply_edit(edit, doc, cfg.edit_prob, rng);
            if !is_degenerate(doc.doc.len(), copy.doc.len(), cfg.min_len) {
                accepted = Some((edit, copy));
                break;
            }
        }
        match accepted {
            Some(c) => outcome.copies.push(c),
            None => outcome.dropped += 1,
        }
    }
    Ok(outcome)
}

/// Stable per-document seed derived from the run seed and the episode id.
pub fn doc_seed(seed: u64, episode_id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix64 finalizer over the combination.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in episode_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn augmented_id(episode_id: &str, copy: usize) -> String {
    format!("{episode_id}#aug{copy}")
}

/// The source episode of an augmented id (`ep#aug3` -> `ep`).
pub fn source_id(episode_id: &str) -> &str {
    match episode_id.rfind("#aug") {
        Some(i) if episode_id[i + 4..].chars().all(|c| c.is_ascii_digit()) && i + 4 < episode_id.len() => {
            &episode_id[..i]
        }
        _ => episode_id,
    }
}

#[derive(Debug, Clone, Default)]
pub struct AugmentedCorpus {
    /// Augmented copies only, ids suffixed `#aug<n>` (1-based).
    pub docs: Vec<LabeledDoc>,
    /// Episode ids with the number of copies dropped as degenerate.
    pub dropped: Vec<(String, usize)>,
}

/// Augments training documents.
///
/// When a split is given, any document it does not place in the training set
/// is refused.
pub fn augment_corpus(
    docs: &[LabeledDoc],
    cfg: &AugmentConfig,
    split: Option<&DatasetSplit>,
) -> Result<AugmentedCorpus> {
    cfg.validate()?;
    if let Some(split) = split {
        for d in docs {
            match split.role(&d.doc.episode_id) {
                Some(SplitRole::Train) => {}
                Some(role) => {
                    return Err(Error::Augment(format!(
                        "episode `{}` belongs to {role}; only training documents may be augmented",
                        d.doc.episode_id
                    )))
                }
                None => {
                    return Err(Error::Augment(format!(
                        "episode `{}` is not in the split manifest",
                        d.doc.episode_id
                    )))
                }
            }
        }
    }
    let stats = match cfg.strategy {
        Strategy::TfidfReplace => Some(compute_tfidf(docs.iter().map(|d| &d.doc))),
        Strategy::RandomEdit => None,
    };
    let mut out = AugmentedCorpus::default();
    for d in docs {
        let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(cfg.seed, &d.doc.episode_id));
        let copies = match &stats {
            Some(stats) => tfidf_replace(d, stats, cfg, &mut rng)?,
            None => {
                let outcome = random_edit(d, cfg, &mut rng)?;
                if outcome.dropped > 0 {
                    out.dropped.push((d.doc.episode_id.clone(), outcome.dropped));
                }
                outcome.copies.into_iter().map(|(_, c)| c).collect()
            }
        };
        for (n, mut copy) in copies.into_iter().enumerate() {
            copy.doc.episode_id = augmented_id(&d.doc.episode_id, n + 1);
            out.docs.push(copy);
        }
    }
    Ok(out)
}
