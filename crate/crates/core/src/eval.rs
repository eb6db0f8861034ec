//! Boundary accuracy by offset, token overlap, and cross-run aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::boundary::PredictionRecord;
use crate::corpus::{GoldLabel, TokenRange};
use crate::error::{Error, Result};

pub const DEFAULT_OFFSETS: [usize; 5] = [0, 1, 3, 5, 9];

/// Jaccard overlap of two token ranges. Two absent ranges overlap fully.
pub fn overlap_score(pred: Option<TokenRange>, gold: Option<TokenRange>) -> f64 {
    match (pred, gold) {
        (None, None) => 1.0,
        (Some(p), Some(g)) => {
            let inter = p.intersection(&g);
            inter as f64 / (p.len() + g.len() - inter) as f64
        }
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetAccuracy {
    pub offsets: Vec<usize>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Episodes scored.
    pub evaluated: usize,
    /// Episodes skipped because the gold has no introduction or no agreement.
    pub excluded: usize,
}

fn gold_index(golds: &[GoldLabel]) -> HashMap<&str, &GoldLabel> {
    golds.iter().map(|g| (g.episode_id.as_str(), g)).collect()
}

fn lookup<'g>(index: &HashMap<&str, &'g GoldLabel>, id: &str) -> Result<&'g GoldLabel> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| Error::Eval(format!("no gold label for episode `{id}`")))
}

/// Fraction of episodes whose predicted start (end) lies within each offset
/// of the gold start (end).
pub fn offset_accuracy(
    preds: &[PredictionRecord],
    golds: &[GoldLabel],
    offsets: &[usize],
) -> Result<OffsetAccuracy> {
    let index = gold_index(golds);
    let mut start_hits = vec![0usize; offsets.len()];
    let mut end_hits = vec![0usize; offsets.len()];
    let mut evaluated = 0;
    let mut excluded = 0;
    for pred in preds {
        let gold = lookup(&index, &pred.episode_id)?;
        let Some(g) = gold.intro.filter(|_| gold.is_evaluable()) else {
            excluded += 1;
            continue;
        };
        evaluated += 1;
        let Some(p) = pred.intro() else { continue };
        let ds = p.start().abs_diff(g.start());
        let de = p.end().abs_diff(g.end());
        for (i, &d) in offsets.iter().enumerate() {
            start_hits[i] += usize::from(ds <= d);
            end_hits[i] += usize::from(de <= d);
        }
    }
    if evaluated == 0 {
        return Err(Error::Eval("no episode has a gold introduction to evaluate".into()));
    }
    let frac = |hits: Vec<usize>| hits.into_iter().map(|h| h as f64 / evaluated as f64).collect();
    Ok(OffsetAccuracy {
        offsets: offsets.to_vec(),
        start: frac(start_hits),
        end: frac(end_hits),
        evaluated,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOverlap {
    pub episode_id: String,
    pub overlap: f64,
}

/// Metrics of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub accuracy: OffsetAccuracy,
    /// Overlap for every prediction whose gold has agreement.
    pub overlaps: Vec<EpisodeOverlap>,
}

impl RunReport {
    pub fn mean_overlap(&self) -> f64 {
        self.overlaps.iter().map(|o| o.overlap).sum::<f64>() / self.overlaps.len() as f64
    }
}

pub fn evaluate_run(preds: &[PredictionRecord], golds: &[GoldLabel], offsets: &[usize]) -> Result<RunReport> {
    let accuracy = offset_accuracy(preds, golds, offsets)?;
    let index = gold_index(golds);
    let mut overlaps = Vec::new();
    for pred in preds {
        let gold = lookup(&index, &pred.episode_id)?;
        if gold.is_evaluable() {
            overlaps.push(EpisodeOverlap {
                episode_id: pred.episode_id.clone(),
                overlap: overlap_score(pred.intro(), gold.intro),
            });
        }
    }
    Ok(RunReport { accuracy, overlaps })
}

/// Mean of one metric across runs with a 95% t-interval half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci95: Option<f64>,
}

/// Two-sided 95% Student-t critical value with `df` degrees of freedom.
pub fn t_critical_95(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

pub fn summarize(values: &[f64]) -> Summary {
    let r = values.len();
    let mean = values.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return Summary { mean, ci95: None };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Summary {
        mean,
        ci95: Some(t_critical_95(r - 1) * var.sqrt() / (r as f64).sqrt()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub runs: usize,
    pub offsets: Vec<usize>,
    pub episodes: usize,
    pub excluded: usize,
    pub start_accuracy: Vec<Summary>,
    pub end_accuracy: Vec<Summary>,
    pub mean_overlap: Summary,
    /// Per-episode overlap, averaged over the runs that predicted it.
    pub overlaps: Vec<EpisodeOverlap>,
}

pub fn aggregate_runs(runs: &[RunReport]) -> Result<EvalReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Eval("no runs to aggregate".into()))?;
    let offsets = &first.accuracy.offsets;
    if let Some(bad) = runs.iter().find(|r| &r.accuracy.offsets != offsets) {
        return Err(Error::Eval(format!(
            "offset grids differ across runs: {:?} vs {:?}",
            offsets, bad.accuracy.offsets
        )));
    }
    let column = |f: &dyn Fn(&RunReport) -> f64| summarize(&runs.iter().map(f).collect::<Vec<_>>());
    let start_accuracy = (0..offsets.len())
        .map(|i| column(&|r| r.accuracy.start[i]))
        .collect();
    let end_accuracy = (0..offsets.len())
        .map(|i| column(&|r| r.accuracy.end[i]))
        .collect();
    let mean_overlap = column(&|r| r.mean_overlap());

    let mut per_episode: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in runs {
        for o in &r.overlaps {
            let e = per_episode.entry(&o.episode_id).or_default();
            e.0 += o.overlap;
            e.1 += 1;
        }
    }
    Ok(EvalReport {
        scorer: None,
        k: None,
        runs: runs.len(),
        offsets: offsets.clone(),
        episodes: first.accuracy.evaluated,
        excluded: first.accuracy.excluded,
        start_accuracy,
        end_accuracy,
        mean_overlap,
        overlaps: per_episode
            .into_iter()
            .map(|(id, (sum, n))| EpisodeOverlap {
                episode_id: id.to_owned(),
                overlap: sum / n as f64,
            })
            .collect(),
    })
}

fn cell(s: &Summary) -> String {
    match s.ci95 {
        Some(ci) => format!("{:.3} ({:.3})", s.mean, ci),
        None => format!("{:.3}", s.mean),
    }
}

/// Plain-text accuracy table: one row per report, start columns then end
/// columns, each cell `mean (ci)`.
pub fn render_table(reports: &[(&str, &EvalReport)]) -> String {
    let Some((_, first)) = reports.first() else {
        return String::new();
    };
    let rows: Vec<(String, Vec<String>)> = reports
        .iter()
        .map(|(name, r)| {
            let cells = r.start_accuracy.iter().chain(&r.end_accuracy).map(cell).collect();
            (name.to_string(), cells)
        })
        .collect();
    let header: Vec<String> = first
        .offsets
        .iter()
        .chain(&first.offsets)
        .map(|o| o.to_string())
        .collect();
    let ncols = header.len();
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for (_, cells) in &rows {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.len());
        }
    }
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let half = ncols / 2;
    let span = |cols: &[usize]| cols.iter().sum::<usize>() + 2 * cols.len().saturating_sub(1);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:name_width$}  {:<w1$}  |  {:<w2$}",
        "",
        "start",
        "end",
        w1 = span(&widths[..half]),
        w2 = span(&widths[half..]),
    );
    let line = |label: &str, cells: &[String]| {
        let fmt_half = |cs: &[String], ws: &[usize]| {
            cs.iter()
                .zip(ws)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        format!(
            "{label:<name_width$}  {}  |  {}",
            fmt_half(&cells[..half], &widths[..half]),
            fmt_half(&cells[half..], &widths[half..])
        )
    };
    let _ = writeln!(out, "{}", line("offset", &header));
    for (name, cells) in &rows {
        let _ = writeln!(out, "{}", line(name, cells));
    }
    let _ = writeln!(out, "mean overlap:");
    for (name, r) in reports {
        let _ = writeln!(out, "  {name:<name_width$}  {}", cell(&r.mean_overlap));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Agreement;

    fn r(s: usize, e: usize) -> Option<TokenRange> {
        TokenRange::new(s, e)
    }

    fn gold(id: &str, range: Option<TokenRange>) -> GoldLabel {
        GoldLabel {
            episode_id: id.into(),
            intro: range,
            start_agreement: Agreement::Perfect,
            end_agreement: Agreement::Perfect,
        }
    }

    fn pred(id: &str, range: Option<TokenRange>) -> PredictionRecord {
        PredictionRecord {
            episode_id: id.into(),
            start: range.map(|r| r.start()),
            end: range.map(|r| r.end()),
            start_peak: 1.0,
            end_peak: Some(1.0),
        }
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_score(r(3, 9), r(3, 9)), 1.0);
        assert_eq!(overlap_score(r(0, 5), r(5, 9)), 0.0);
        assert_eq!(overlap_score(r(10, 20), r(15, 25)), 5.0 / 15.0);
        assert_eq!(overlap_score(None, None), 1.0);
        assert_eq!(overlap_score(r(1, 2), None), 0.0);
        assert_eq!(overlap_score(None, r(1, 2)), 0.0);
        assert_eq!(overlap_score(r(2, 4), r(0, 10)), 0.2);
    }

    #[test]
    fn start_off_by_three() {
        let acc = offset_accuracy(
            &[pred("a", r(103, 200))],
            &[gold("a", r(100, 200))],
            &DEFAULT_OFFSETS,
        )
        .unwrap();
        assert_eq!(acc.start, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(acc.end, vec![1.0; 5]);
    }

    #[test]
    fn hand_set_offsets() {
        let golds: Vec<_> = (0..4).map(|i| gold(&format!("e{i}"), r(100, 200))).collect();
        let preds: Vec<_> = [0, 2, 4, 10]
            .iter()
            .enumerate()
            .map(|(i, d)| pred(&format!("e{i}"), r(100 + d, 200)))
            .collect();
        let acc = offset_accuracy(&preds, &golds, &DEFAULT_OFFSETS).unwrap();
        assert_eq!(acc.start, vec![0.25, 0.25, 0.5, 0.75, 0.75]);
    }

    #[test]
    fn absent_golds_are_excluded() {
        let golds = vec![gold("a", r(1, 5)), gold("b", None)];
        let preds = vec![pred("a", r(1, 5)), pred("b", r(1, 5))];
        let acc = offset_accuracy(&preds, &golds, &[0]).unwrap();
        assert_eq!((acc.evaluated, acc.excluded), (1, 1));
        assert!(offset_accuracy(&preds[1..], &golds, &[0]).is_err());
        assert!(offset_accuracy(&[pred("zz", None)], &golds, &[0]).is_err());
    }

    #[test]
    fn no_agreement_is_left_out_of_overlap() {
        let mut g = gold("a", None);
        g.start_agreement = Agreement::None;
        let golds = vec![g, gold("b", r(1, 5))];
        let run = evaluate_run(&[pred("a", r(1, 5)), pred("b", r(1, 5))], &golds, &[0]).unwrap();
        assert_eq!(run.overlaps.len(), 1);
        assert_eq!(run.mean_overlap(), 1.0);
    }

    #[test]
    fn t_value_for_three_runs() {
        assert!((t_critical_95(2) - 4.303).abs() < 5e-4);
    }

    #[test]
    fn summaries() {
        let s = summarize(&[0.4, 0.5, 0.6]);
        assert!((s.mean - 0.5).abs() < 1e-15);
        assert!((s.ci95.unwrap() - 4.302_652_7 * 0.1 / 3f64.sqrt()).abs() < 1e-6);
        assert!((s.ci95.unwrap() - 0.248).abs() < 5e-4);
        assert_eq!(summarize(&[0.7, 0.7]).ci95, Some(0.0));
        assert_eq!(summarize(&[0.7]).ci95, None);
    }

    #[test]
    fn single_run_omits_ci_in_json() {
        let run = evaluate_run(&[pred("a", r(1, 5))], &[gold("a", r(1, 5))], &[0, 1]).unwrap();
        let report = aggregate_runs(&[run]).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("ci95"), "{json}");
    }

    #[test]
    fn mismatched_offsets_rejected() {
        let a = evaluate_run(&[pred("a", r(1, 5))], &[gold("a", r(1, 5))], &[0, 1]).unwrap();
        let b = evaluate_run(&[pred("a", r(1, 5))], &[gold("a", r(1, 5))], &[0, 2]).unwrap();
        assert!(aggregate_runs(&[a, b]).is_err());
    }

    #[test]
    fn table_layout() {
        let runs: Vec<_> = [r(100, 200), r(101, 203), r(104, 200)]
            .into_iter()
            .map(|p| evaluate_run(&[pred("a", p)], &[gold("a", r(100, 200))], &DEFAULT_OFFSETS).unwrap())
            .collect();
        let report = aggregate_runs(&runs).unwrap();
        let table = render_table(&[("glove", &report)]);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].contains("start") && lines[0].contains("end"));
        assert!(lines[1].starts_with("offset"));
        assert!(lines[2].starts_with("glove"));
        assert!(lines[2].contains("(0."), "{table}");
    }
}
