//! Program-stratified train/test/validation splits.
//!
//! Whole programs are held out for the unseen-program test and validation
//! sets; the remaining programs contribute a share of their episodes to the
//! seen-program sets. Shuffles use ChaCha8 seeded from a `u64`, so a split is
//! reproducible across platforms.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TranscriptDoc;
use crate::error::{Error, Result};

/// Programs with fewer episodes go entirely to training.
pub const MIN_SEEN_SPLIT_EPISODES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub unseen_test_frac: f64,
    pub unseen_val_frac: f64,
    pub seen_test_frac: f64,
    pub seen_val_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec {
            unseen_test_frac: 0.05,
            unseen_val_frac: 0.05,
            seen_test_frac: 0.10,
            seen_val_frac: 0.10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("unseen_test_frac", self.unseen_test_frac),
            ("unseen_val_frac", self.unseen_val_frac),
            ("seen_test_frac", self.seen_test_frac),
            ("seen_val_frac", self.seen_val_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} = {f} is outside (0, 1)")));
            }
        }
        if self.unseen_test_frac + self.unseen_val_frac >= 1.0 {
            return Err(Error::Config("unseen fractions must sum to less than 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    SeenTest,
    SeenVal,
    UnseenTest,
    UnseenVal,
}

impl SplitRole {
    pub const ALL: [SplitRole; 5] = [
        SplitRole::Train,
        SplitRole::SeenTest,
        SplitRole::SeenVal,
        SplitRole::UnseenTest,
        SplitRole::UnseenVal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::SeenTest => "seen_test",
            SplitRole::SeenVal => "seen_val",
            SplitRole::UnseenTest => "unseen_test",
            SplitRole::UnseenVal => "unseen_val",
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SplitRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SplitRole::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split set `{s}`")))
    }
}

/// Split manifest; serialized as the JSON manifest file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub seen_test: Vec<String>,
    pub seen_val: Vec<String>,
    pub unseen_test: Vec<String>,
    pub unseen_val: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetSplit {
    pub fn set(&self, role: SplitRole) -> &[String] {
        match role {
            SplitRole::Train => &self.train,
            SplitRole::SeenTest => &self.seen_test,
            SplitRole::SeenVal => &self.seen_val,
            SplitRole::UnseenTest => &self.unseen_test,
            SplitRole::UnseenVal => &self.unseen_val,
        }
    }

    fn set_mut(&mut self, role: SplitRole) -> &mut Vec<String> {
        match role {
            SplitRole::Train => &mut self.train,
            SplitRole::SeenTest => &mut self.seen_test,
            SplitRole::SeenVal => &mut self.seen_val,
            SplitRole::UnseenTest => &mut self.unseen_test,
            SplitRole::UnseenVal => &mut self.unseen_val,
        }
    }

    pub fn role(&self, episode_id: &str) -> Option<SplitRole> {
        SplitRole::ALL
            .into_iter()
            .find(|&r| self.set(r).iter().any(|id| id == episode_id))
    }

    pub fn len(&self) -> usize {
        SplitRole::ALL.iter().map(|&r| self.set(r).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self, role: SplitRole) -> HashSet<&str> {
        self.set(role).iter().map(String::as_str).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::line(path, e.line(), e.to_string()))
    }
}

fn share(frac: f64, n: usize) -> usize {
    // Tolerate representation error, e.g. 0.05 * 20.
    (frac * n as f64 - 1e-9).ceil().max(0.0) as usize
}

pub fn split_corpus(docs: &[TranscriptDoc], spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let mut programs: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for d in docs {
        programs.entry(&d.program_id).or_default().push(&d.episode_id);
    }
    if programs.len() < 3 {
        return Err(Error::Split(format!(
            "{} distinct program(s); at least 3 are required",
            programs.len()
        )));
    }
    if !programs.values().any(|eps| eps.len() >= MIN_SEEN_SPLIT_EPISODES) {
        return Err(Error::Split(format!(
            "no program has at least {MIN_SEEN_SPLIT_EPISODES} episodes"
        )));
    }
    let n_programs = programs.len();
    let n_unseen_test = share(spec.unseen_test_frac, n_programs).max(1);
    let n_unseen_val = share(spec.unseen_val_frac, n_programs).max(1);
    if n_unseen_test + n_unseen_val >= n_programs {
        return Err(Error::Split(format!(
            "holding out {} programs leaves none of {n_programs} for training",
            n_unseen_test + n_unseen_val
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<&str> = programs.keys().copied().collect();
    order.shuffle(&mut rng);

    let mut split = DatasetSplit {
        seed: spec.seed,
        ..Default::default()
    };
    for (rank, program) in order.iter().enumerate() {
        let episodes = &programs[program];
        let role = if rank < n_unseen_test {
            Some(SplitRole::UnseenTest)
        } else if rank < n_unseen_test + n_unseen_val {
            Some(SplitRole::UnseenVal)
        } else {
            None
        };
        if let Some(role) = role {
            split.set_mut(role).extend(episodes.iter().map(|s| s.to_string()));
            continue;
        }
        let mut episodes = episodes.clone();
        episodes.shuffle(&mut rng);
        let e = episodes.len();
        let (n_test, n_val) = if e < MIN_SEEN_SPLIT_EPISODES {
            (0, 0)
        } else {
            let t = share(spec.seen_test_frac, e).min(e - 1);
            let v = share(spec.seen_val_frac, e).min(e - 1 - t);
            (t, v)
        };
        for (i, ep) in episodes.into_iter().enumerate() {
            let role = if i < n_test {
                SplitRole::SeenTest
            } else if i < n_test + n_val {
                SplitRole::SeenVal
            } else {
                SplitRole::Train
            };
            split.set_mut(role).push(ep.to_string());
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn corpus(programs: usize, episodes: usize) -> Vec<TranscriptDoc> {
        (0..programs)
            .flat_map(|p| {
                (0..episodes).map(move |e| TranscriptDoc {
                    episode_id: format!("p{p}e{e}"),
                    program_id: format!("p{p}"),
                    tokens: vec![Token::new(0, "x")],
                    annotations: vec![],
                })
            })
            .collect()
    }

    #[test]
    fn twenty_programs_hold_out_one_each() {
        let docs = corpus(20, 10);
        let split = split_corpus(&docs, &SplitSpec::with_seed(7)).unwrap();
        assert_eq!(split.unseen_test.len(), 10);
        assert_eq!(split.unseen_val.len(), 10);
        // 18 seen programs of 10 episodes: 1 test, 1 val, 8 train each.
        assert_eq!(split.seen_test.len(), 18);
        assert_eq!(split.seen_val.len(), 18);
        assert_eq!(split.train.len(), 144);
        assert_eq!(split.len(), 200);
    }

    #[test]
    fn small_programs_stay_in_training() {
        let mut docs = corpus(4, 2);
        docs.extend(corpus(1, 5).into_iter().map(|mut d| {
            d.program_id = "big".into();
            d.episode_id = format!("big{}", d.episode_id);
            d
        }));
        let split = split_corpus(&docs, &SplitSpec::with_seed(1)).unwrap();
        for id in split.seen_test.iter().chain(&split.seen_val) {
            assert!(id.starts_with("big"), "{id}");
        }
    }

    #[test]
    fn preconditions() {
        assert!(split_corpus(&corpus(2, 10), &SplitSpec::with_seed(0)).is_err());
        assert!(split_corpus(&corpus(5, 2), &SplitSpec::with_seed(0)).is_err());
        let bad = SplitSpec {
            unseen_test_frac: 0.6,
            unseen_val_frac: 0.5,
            ..SplitSpec::with_seed(0)
        };
        assert!(split_corpus(&corpus(5, 5), &bad).is_err());
    }

    #[test]
    fn same_seed_same_split() {
        let docs = corpus(12, 7);
        let a = split_corpus(&docs, &SplitSpec::with_seed(42)).unwrap();
        let b = split_corpus(&docs, &SplitSpec::with_seed(42)).unwrap();
        assert_eq!(a, b);
        let c = split_corpus(&docs, &SplitSpec::with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_scale_layout() {
        // 417 episodes over 46 programs of uneven size fill all five sets.
        let mut docs = Vec::new();
        for p in 0..46 {
            for e in 0..(5 + p % 10) {
                docs.push(TranscriptDoc {
                    episode_id: format!("p{p}e{e}"),
                    program_id: format!("p{p}"),
                    tokens: vec![Token::new(0, "x")],
                    annotations: vec![],
                });
            }
        }
        docs.truncate(417);
        let split = split_corpus(&docs, &SplitSpec::with_seed(3)).unwrap();
        assert_eq!(split.len(), 417);
        for role in SplitRole::ALL {
            assert!(!split.set(role).is_empty(), "{role} empty");
        }
    }

    #[test]
    fn manifest_json_shape() {
        let split = split_corpus(&corpus(5, 5), &SplitSpec::with_seed(5)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&split).unwrap();
        for key in ["train", "seen_test", "seen_val", "unseen_test", "unseen_val", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
