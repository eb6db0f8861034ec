//! Maximum-difference boundary detection over a score sequence.
//!
//! For a window size `k`, the start likelihood of token `i` is the mean score
//! of the `k` tokens starting at `i` minus the mean of the `k` tokens ending at
//! `i - 1`; the end likelihood of `j` is the mirror image. Both are defined for
//! `k <= i <= N - k`, and the detected index is the first token of the intro
//! (start) or the first token after it (end).

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenRange;
use crate::error::{Error, Result};
use crate::scorer::ScoreSequence;

pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub k: usize,
    pub enforce_order: bool,
    /// Abstain when the best start likelihood falls below this value.
    pub min_peak: Option<f64>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            k: DEFAULT_K,
            enforce_order: true,
            min_peak: None,
        }
    }
}

impl BoundaryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if let Some(t) = self.min_peak {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("min_peak {t} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Why a detector returned no introduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abstention {
    BelowMinPeak,
    NoEndAfterStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPrediction {
    pub episode_id: String,
    pub intro: Option<TokenRange>,
    pub start_peak: f64,
    /// `None` when no end position could be searched.
    pub end_peak: Option<f64>,
    pub abstention: Option<Abstention>,
}

fn mean(window: &[f64]) -> f64 {
    window.iter().sum::<f64>() / window.len() as f64
}

fn check_len(len: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if len < 2 * k {
        return Err(Error::SequenceTooShort { len, k });
    }
    Ok(())
}

/// `(i, P_i)` for every valid start position `i` in `k..=N-k`.
pub fn start_likelihoods(scores: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    check_len(scores.len(), k)?;
    Ok((k..=scores.len() - k)
        .map(|i| (i, mean(&scores[i..i + k]) - mean(&scores[i - k..i])))
        .collect())
}

/// `(j, Q_j)` for every valid end position `j` in `k..=N-k`.
pub fn end_likelihoods(scores: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    check_len(scores.len(), k)?;
    Ok((k..=scores.len() - k)
        .map(|j| (j, mean(&scores[j - k..j]) - mean(&scores[j..j + k])))
        .collect())
}

/// Earliest position with the largest likelihood.
fn argmax(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    values.fold(None, |best, (i, v)| match best {
        Some((_, b)) if v <= b => best,
        _ => Some((i, v)),
    })
}

/// Detects the introduction in a raw score slice.
pub fn detect_scores(episode_id: &str, scores: &[f64], cfg: &BoundaryConfig) -> Result<SegmentPrediction> {
    cfg.validate()?;
    let starts = start_likelihoods(scores, cfg.k)?;
    let ends = end_likelihoods(scores, cfg.k)?;
    let (start, start_peak) = argmax(starts.into_iter()).expect("at least one valid position");
    let mut prediction = SegmentPrediction {
        episode_id: episode_id.to_owned(),
        intro: None,
        start_peak,
        end_peak: None,
        abstention: None,
    };
    let end = if cfg.enforce_order {
        argmax(ends.into_iter().filter(|&(j, _)| j > start))
    } else {
        argmax(ends.into_iter())
    };
    let Some((end, end_peak)) = end else {
        prediction.abstention = Some(Abstention::NoEndAfterStart);
        return Ok(prediction);
    };
    prediction.end_peak = Some(end_peak);
    if cfg.min_peak.is_some_and(|t| start_peak < t) {
        prediction.abstention = Some(Abstention::BelowMinPeak);
        return Ok(prediction);
    }
    // Without the ordering constraint an end before the start yields no range.
    match TokenRange::new(start, end) {
        Some(range) => prediction.intro = Some(range),
        None => prediction.abstention = Some(Abstention::NoEndAfterStart),
    }
    Ok(prediction)
}

/// Start and end positions found independently, without forming a range.
pub fn detect_positions(scores: &[f64], k: usize) -> Result<(usize, usize)> {
    let start = argmax(start_likelihoods(scores, k)?.into_iter()).expect("non-empty");
    let end = argmax(end_likelihoods(scores, k)?.into_iter()).expect("non-empty");
    Ok((start.0, end.0))
}

pub fn detect(scores: &ScoreSequence, cfg: &BoundaryConfig) -> Result<SegmentPrediction> {
    detect_scores(&scores.episode_id, &scores.scores, cfg)
}

/// Wire form of a prediction: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub episode_id: String,
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub start_peak: f64,
    pub end_peak: Option<f64>,
}

impl From<&SegmentPrediction> for PredictionRecord {
    fn from(p: &SegmentPrediction) -> Self {
        PredictionRecord {
            episode_id: p.episode_id.clone(),
            start: p.intro.map(|r| r.start()),
            end: p.intro.map(|r| r.end()),
            start_peak: p.start_peak,
            end_peak: p.end_peak,
        }
    }
}

impl PredictionRecord {
    pub fn intro(&self) -> Option<TokenRange> {
        match (self.start, self.end) {
            (Some(s), Some(e)) => TokenRange::new(s, e),
            _ => None,
        }
    }
}

pub fn write_predictions<'a>(
    mut out: impl Write,
    preds: impl IntoIterator<Item = &'a SegmentPrediction>,
) -> std::io::Result<()> {
    for p in preds {
        serde_json::to_writer(&mut out, &PredictionRecord::from(p))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| Error::line(path, n + 1, e.to_string()))?;
        if rec.start.is_some() != rec.end.is_some() || (rec.start.is_some() && rec.intro().is_none()) {
            return Err(Error::line(path, n + 1, "start and end must form a non-empty range or both be null"));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plateau(n: usize, b: usize, e: usize) -> Vec<f64> {
        (0..n).map(|i| if (b..e).contains(&i) { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn perfect_step_has_unit_likelihood() {
        let p = start_likelihoods(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 3).unwrap();
        assert_eq!(p, vec![(3, 1.0)]);
    }

    #[test]
    fn constant_sequence_is_flat() {
        let p = start_likelihoods(&[0.3; 20], 4).unwrap();
        assert!(p.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn short_sequence_asks_for_smaller_k() {
        let err = start_likelihoods(&[0.0; 9], 5).unwrap_err();
        assert!(err.to_string().contains("lower k"), "{err}");
        assert!(start_likelihoods(&[0.0; 10], 0).is_err());
    }

    #[test]
    fn ideal_plateau_is_recovered() {
        let s = plateau(600, 100, 300);
        let p = detect_scores("e", &s, &BoundaryConfig::default()).unwrap();
        assert_eq!(p.intro, TokenRange::new(100, 300));
        assert_eq!(p.start_peak, 1.0);
        assert_eq!(p.end_peak, Some(1.0));
    }

    #[test]
    fn start_at_right_edge_abstains_under_order() {
        // Step up at N - k: the best start is the last valid index.
        let s = plateau(20, 15, 20);
        let p = detect_scores("e", &s, &BoundaryConfig { k: 5, ..Default::default() }).unwrap();
        assert_eq!(p.intro, None);
        assert_eq!(p.abstention, Some(Abstention::NoEndAfterStart));
    }

    #[test]
    fn min_peak_abstains() {
        let s: Vec<f64> = plateau(200, 60, 120).iter().map(|v| 0.4 + 0.1 * v).collect();
        let cfg = BoundaryConfig {
            k: 20,
            min_peak: Some(0.5),
            ..Default::default()
        };
        let p = detect_scores("e", &s, &cfg).unwrap();
        assert_eq!(p.intro, None);
        assert_eq!(p.abstention, Some(Abstention::BelowMinPeak));
        let p = detect_scores("e", &s, &BoundaryConfig { min_peak: None, ..cfg }).unwrap();
        assert_eq!(p.intro, TokenRange::new(60, 120));
    }

    #[test]
    fn record_round_trip_shape() {
        let p = detect_scores("ep", &plateau(600, 100, 300), &BoundaryConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_predictions(&mut buf, [&p]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"episode_id\":\"ep\",\"start\":100,\"end\":300,\"start_peak\":1.0,\"end_peak\":1.0}\n"
        );
    }

    proptest! {
        #[test]
        fn likelihoods_are_bounded(s in prop::collection::vec(0.0f64..=1.0, 2..120), k in 1usize..20) {
            prop_assume!(s.len() >= 2 * k);
            for (_, v) in start_likelihoods(&s, k).unwrap().into_iter().chain(end_likelihoods(&s, k).unwrap()) {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn reversal_swaps_start_and_end(s in prop::collection::vec(0.0f64..=1.0, 8..150), k in 1usize..8) {
            prop_assume!(s.len() >= 2 * k);
            let n = s.len();
            let rev: Vec<f64> = s.iter().rev().copied().collect();
            let (start, end) = detect_positions(&s, k).unwrap();
            let (rstart, rend) = detect_positions(&rev, k).unwrap();
            // Mirror positions coincide unless the argmax is tied.
            let p = start_likelihoods(&s, k).unwrap();
            let q = end_likelihoods(&s, k).unwrap();
            let unique = |v: &[(usize, f64)]| {
                let m = v.iter().map(|x| x.1).fold(f64::MIN, f64::max);
                v.iter().filter(|x| (x.1 - m).abs() < 1e-12).count() == 1
            };
            if unique(&p) && unique(&q) {
                prop_assert_eq!(rstart, n - end);
                prop_assert_eq!(rend, n - start);
            }
        }
    }
}
