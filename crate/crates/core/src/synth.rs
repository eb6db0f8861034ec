//! Synthetic transcript corpora with planted introductions.
//!
//! Body tokens are drawn from `body_vocab` and intro tokens from
//! `intro_vocab`, except that a `vocab_mix` fraction of intro tokens comes
//! from the body vocabulary. Afterwards each token is replaced, with
//! probability `noise_prob`, by a uniformly drawn word from either
//! vocabulary. Timestamps advance at a constant 3.5 tokens per second.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Token, TokenRange, TranscriptDoc};
use crate::error::{Error, Result};
use crate::scorer::EmbeddingTable;

pub const SYNTH_ANNOTATOR: &str = "synth";
/// Synthetic speech rate, in tokens per second, as a fraction.
const MS_PER_TOKEN_NUM: u64 = 2000;
const MS_PER_TOKEN_DEN: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedWord {
    pub text: String,
    pub weight: f64,
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: usize,
    pub max: usize,
}

impl IntRange {
    pub fn new(min: usize, max: usize) -> Self {
        IntRange { min, max }
    }

    pub fn contains(&self, v: usize) -> bool {
        self.min <= v && v <= self.max
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub programs: usize,
    pub episodes_per_program: usize,
    pub body_vocab: Vec<WeightedWord>,
    pub intro_vocab: Vec<WeightedWord>,
    pub vocab_mix: f64,
    pub intro_start_range: IntRange,
    pub intro_len_range: IntRange,
    pub episode_len_range: IntRange,
    pub no_intro_prob: f64,
    pub noise_prob: f64,
    pub seed: u64,
}

const INTRO_WORDS: &[&str] = &[
    "welcome", "episode", "today", "guest", "joining", "host", "podcast", "show", "hello",
    "everyone", "i'm", "we're", "talking", "week", "listeners", "special", "introduce",
    "conversation", "author", "founder", "thrilled", "excited", "returning", "tuning",
    "series", "season", "featuring", "interview", "discuss", "topic",
];

const BODY_WORDS: &[&str] = &[
    "the", "and", "to", "of", "a", "in", "that", "it", "is", "was", "you", "so", "like",
    "know", "just", "they", "but", "what", "we", "have", "think", "yeah", "really", "there",
    "people", "about", "be", "do", "on", "with", "this", "for", "not", "are", "um", "uh",
    "right", "one", "all", "if", "when", "then", "time", "kind", "thing", "things", "going",
    "get", "got", "me", "my", "he", "she", "his", "her", "them", "would", "could", "because",
    "mean", "lot", "very", "more", "some", "where", "how", "why", "which", "who", "from",
    "out", "up", "down", "into", "over", "back", "first", "work", "year", "years", "way",
    "day", "life", "world", "money", "house", "music", "song", "story", "book", "city",
    "school", "water", "food", "game", "team", "company", "market", "science", "history",
    "research", "problem", "question", "answer", "idea", "place", "family", "friend",
    "night", "morning", "car", "road", "light", "sound", "camera", "photo", "record",
    "studio", "data", "system", "power", "energy", "change", "point", "part", "side",
];

fn zipf(words: &[&str]) -> Vec<WeightedWord> {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| WeightedWord {
            text: (*w).to_owned(),
            weight: 1.0 / (i + 1) as f64,
        })
        .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            programs: 20,
            episodes_per_program: 10,
            body_vocab: zipf(BODY_WORDS),
            intro_vocab: zipf(INTRO_WORDS),
            vocab_mix: 0.2,
            intro_start_range: IntRange::new(60, 250),
            intro_len_range: IntRange::new(60, 160),
            episode_len_range: IntRange::new(500, 1200),
            no_intro_prob: 0.0,
            noise_prob: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.programs == 0 || self.episodes_per_program == 0 {
            return bad("programs and episodes_per_program must be positive".into());
        }
        for (name, vocab) in [("body_vocab", &self.body_vocab), ("intro_vocab", &self.intro_vocab)] {
            if vocab.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if let Some(w) = vocab.iter().find(|w| w.text.is_empty() || w.text.chars().any(char::is_whitespace)) {
                return bad(format!("{name} word {:?} is empty or contains whitespace", w.text));
            }
            if vocab.iter().any(|w| !(w.weight > 0.0 && w.weight.is_finite())) {
                return bad(format!("{name} weights must be positive"));
            }
        }
        let body: HashSet<&str> = self.body_vocab.iter().map(|w| w.text.as_str()).collect();
        if let Some(w) = self.intro_vocab.iter().find(|w| body.contains(w.text.as_str())) {
            return bad(format!("`{}` is in both vocabularies", w.text));
        }
        for (name, r) in [
            ("intro_start_range", self.intro_start_range),
            ("intro_len_range", self.intro_len_range),
            ("episode_len_range", self.episode_len_range),
        ] {
            if r.min > r.max {
                return bad(format!("{name} is empty"));
            }
        }
        if self.intro_len_range.min == 0 || self.episode_len_range.min == 0 {
            return bad("intro and episode lengths must be positive".into());
        }
        if self.intro_start_range.max + self.intro_len_range.max > self.episode_len_range.min {
            return bad("the longest, latest intro must fit the shortest episode".into());
        }
        if !(0.0..=1.0).contains(&self.vocab_mix) || !(0.0..=1.0).contains(&self.no_intro_prob) {
            return bad("vocab_mix and no_intro_prob must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.noise_prob) {
            return bad("noise_prob must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Every word either vocabulary can emit, body words first.
    pub fn vocabulary(&self) -> Vec<&str> {
        self.body_vocab
            .iter()
            .chain(&self.intro_vocab)
            .map(|w| w.text.as_str())
            .collect()
    }
}

fn sampler(vocab: &[WeightedWord]) -> WeightedIndex<f64> {
    WeightedIndex::new(vocab.iter().map(|w| w.weight)).expect("validated weights")
}

pub fn program_id(p: usize) -> String {
    format!("prog{p:03}")
}

pub fn episode_id(p: usize, e: usize) -> String {
    format!("prog{p:03}-ep{e:03}")
}

/// Generates a corpus whose single annotation per episode is the planted gold.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<TranscriptDoc>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let body = sampler(&cfg.body_vocab);
    let intro = sampler(&cfg.intro_vocab);
    let all = cfg.vocabulary();
    let mut docs = Vec::with_capacity(cfg.programs * cfg.episodes_per_program);
    for p in 0..cfg.programs {
        for e in 0..cfg.episodes_per_program {
            let len = cfg.episode_len_range.sample(&mut rng);
            let has_intro = rng.random::<f64>() >= cfg.no_intro_prob;
            let range = if has_intro {
                let start = cfg.intro_start_range.sample(&mut rng);
                let ilen = cfg.intro_len_range.sample(&mut rng);
                TokenRange::new(start, start + ilen)
            } else {
                None
            };
            let tokens = (0..len)
                .map(|i| {
                    let in_intro = range.is_some_and(|r| r.contains(i));
                    let mut text = if in_intro && rng.random::<f64>() >= cfg.vocab_mix {
                        &cfg.intro_vocab[intro.sample(&mut rng)].text
                    } else {
                        &cfg.body_vocab[body.sample(&mut rng)].text
                    }
                    .as_str();
                    if rng.random::<f64>() < cfg.noise_prob {
                        text = all[rng.random_range(0..all.len())];
                    }
                    let i64 = i as u64;
                    Token::new(i, text).with_times(
                        i64 * MS_PER_TOKEN_NUM / MS_PER_TOKEN_DEN,
                        (i64 + 1) * MS_PER_TOKEN_NUM / MS_PER_TOKEN_DEN,
                    )
                })
                .collect();
            docs.push(TranscriptDoc {
                episode_id: episode_id(p, e),
                program_id: program_id(p),
                tokens,
                annotations: vec![Annotation {
                    annotator_id: SYNTH_ANNOTATOR.into(),
                    intro: range,
                }],
            });
        }
    }
    Ok(docs)
}

/// Random Gaussian word vectors, scaled to roughly unit norm.
pub fn random_embeddings<'a>(words: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let mut table = EmbeddingTable::new(dim);
    for w in words {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        table.insert(w, v).expect("dimension matches");
    }
    table
}
