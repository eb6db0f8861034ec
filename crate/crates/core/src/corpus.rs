//! Transcript corpus types, JSON Lines ingestion and multi-annotator gold
//! resolution.
//!
//! A corpus file holds one episode per line:
//!
//! ```text
//! {"episode_id": "e1", "program_id": "p1",
//!  "tokens": [{"text": "welcome", "start_ms": 0, "end_ms": 280}, ...],
//!  "annotations": [{"annotator_id": "a1", "intro": {"start": 0, "end": 42}}, ...]}
//! ```
//!
//! Token indices are implicit (array position) and ranges are half-open.
//!
//! Two annotated boundary positions agree when the word start times differ by
//! strictly less than the millisecond tolerance. When either token lacks a
//! timestamp the index distance is compared instead, inclusively, against the
//! token tolerance.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default agreement tolerance in milliseconds.
pub const DEFAULT_TOLERANCE_MS: u64 = 2000;
/// Default agreement tolerance, in tokens, when timestamps are missing.
pub const DEFAULT_TOLERANCE_TOKENS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    #[serde(skip)]
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<u64>,
}

impl Token {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Token {
            text: text.into(),
            index,
            start_ms: None,
            end_ms: None,
        }
    }

    pub fn with_times(mut self, start_ms: u64, end_ms: u64) -> Self {
        self.start_ms = Some(start_ms);
        self.end_ms = Some(end_ms);
        self
    }
}

/// Half-open, non-empty token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawRange")]
pub struct TokenRange {
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct RawRange {
    start: usize,
    end: usize,
}

impl TryFrom<RawRange> for TokenRange {
    type Error = String;

    fn try_from(raw: RawRange) -> std::result::Result<Self, Self::Error> {
        TokenRange::new(raw.start, raw.end)
            .ok_or_else(|| format!("range start {} must be < end {}", raw.start, raw.end))
    }
}

impl TokenRange {
    /// Returns `None` for empty or inverted ranges.
    pub fn new(start: usize, end: usize) -> Option<Self> {
        (start < end).then_some(TokenRange { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    pub fn intersection(&self, other: &TokenRange) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

impl fmt::Display for TokenRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator_id: String,
    /// `None` when the annotator marked the episode as having no introduction.
    pub intro: Option<TokenRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptDoc {
    pub episode_id: String,
    pub program_id: String,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl TranscriptDoc {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Rewrites token indices to array positions.
    pub fn reindex(&mut self) {
        for (i, token) in self.tokens.iter_mut().enumerate() {
            token.index = i;
        }
    }

    /// Checks every type invariant that can be checked on a single document.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidDocument {
            episode: self.episode_id.clone(),
            message,
        };
        if self.episode_id.is_empty() {
            return Err(invalid("empty episode_id".into()));
        }
        if self.tokens.is_empty() {
            return Err(invalid("document has no tokens".into()));
        }
        let mut last_start: Option<u64> = None;
        for (i, token) in self.tokens.iter().enumerate() {
            if token.index != i {
                return Err(invalid(format!("token {i} carries index {}", token.index)));
            }
            if token.text.is_empty() {
                return Err(invalid(format!("token {i} has empty text")));
            }
            if let (Some(s), Some(e)) = (token.start_ms, token.end_ms) {
                if s > e {
                    return Err(invalid(format!("token {i}: start_ms {s} > end_ms {e}")));
                }
            }
            if let Some(s) = token.start_ms {
                if let Some(prev) = last_start {
                    if s < prev {
                        return Err(invalid(format!(
                            "token {i}: start_ms {s} decreases from {prev}"
                        )));
                    }
                }
                last_start = Some(s);
            }
        }
        for ann in &self.annotations {
            if let Some(range) = ann.intro {
                if range.end() > self.tokens.len() {
                    return Err(Error::InvalidAnnotation {
                        episode: self.episode_id.clone(),
                        annotator: ann.annotator_id.clone(),
                        message: format!(
                            "range {range} exceeds document length {}",
                            self.tokens.len()
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates a corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<TranscriptDoc>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), path)
}

/// Parses a corpus from any reader; `origin` is used in error messages.
pub fn parse_corpus(reader: impl BufRead, origin: &Path) -> Result<Vec<TranscriptDoc>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc: TranscriptDoc = serde_json::from_str(&line)
            .map_err(|e| Error::line(origin, line_no, e.to_string()))?;
        doc.reindex();
        doc.validate().map_err(|e| match e {
            Error::InvalidAnnotation { .. } => e,
            other => Error::line(origin, line_no, other.to_string()),
        })?;
        if !seen.insert(doc.episode_id.clone()) {
            return Err(Error::DuplicateEpisode(doc.episode_id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus<'a>(
    mut out: impl Write,
    docs: impl IntoIterator<Item = &'a TranscriptDoc>,
) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tolerance {
    pub ms: u64,
    pub tokens: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            ms: DEFAULT_TOLERANCE_MS,
            tokens: DEFAULT_TOLERANCE_TOKENS,
        }
    }
}

/// Whether two boundary positions of `doc` fall within the agreement tolerance.
pub fn positions_agree(a: usize, b: usize, doc: &TranscriptDoc, tol: Tolerance) -> bool {
    let ta = &doc.tokens[a];
    let tb = &doc.tokens[b];
    match (ta.start_ms, tb.start_ms) {
        (Some(sa), Some(sb)) => sa.abs_diff(sb) < tol.ms,
        _ => a.abs_diff(b) <= tol.tokens,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agreement {
    Perfect,
    Majority,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub episode_id: String,
    pub intro: Option<TokenRange>,
    pub start_agreement: Agreement,
    pub end_agreement: Agreement,
}

impl GoldLabel {
    /// Episodes without agreement on either boundary are not evaluated.
    pub fn is_evaluable(&self) -> bool {
        self.start_agreement != Agreement::None && self.end_agreement != Agreement::None
    }
}

/// Result of clustering one boundary kind across annotators.
struct BoundaryVote {
    position: Option<usize>,
    agreement: Agreement,
}

fn vote(positions: &[usize], annotators: usize, doc: &TranscriptDoc, tol: Tolerance) -> BoundaryVote {
    // Single-linkage clustering by union-find; annotator counts are tiny.
    let n = positions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if positions_agree(positions[i], positions[j], doc, tol) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for (i, &pos) in positions.iter().enumerate() {
        let r = find(&mut parent, i);
        match roots.iter().position(|&x| x == r) {
            Some(c) => clusters[c].push(pos),
            None => {
                roots.push(r);
                clusters.push(vec![pos]);
            }
        }
    }
    // A strict majority cluster is unique when it exists.
    let winner = clusters
        .into_iter()
        .find(|c| c.len() == annotators || 2 * c.len() > annotators);
    match winner {
        Some(mut cluster) => {
            cluster.sort_unstable();
            let agreement = if cluster.len() == annotators {
                Agreement::Perfect
            } else {
                Agreement::Majority
            };
            BoundaryVote {
                position: Some(cluster[(cluster.len() - 1) / 2]),
                agreement,
            }
        }
        None => BoundaryVote {
            position: None,
            agreement: Agreement::None,
        },
    }
}

/// Resolves the gold introduction of a document from its annotations.
///
/// Starts and ends are voted independently. The gold position is the lower
/// median of the winning cluster, so it is always an annotated position.
pub fn resolve_gold(doc: &TranscriptDoc, tol: Tolerance) -> Result<GoldLabel> {
    let n = doc.annotations.len();
    let label = |intro, start_agreement, end_agreement| GoldLabel {
        episode_id: doc.episode_id.clone(),
        intro,
        start_agreement,
        end_agreement,
    };
    match n {
        0 => Err(Error::InvalidDocument {
            episode: doc.episode_id.clone(),
            message: "no annotations to resolve".into(),
        }),
        1 => Ok(label(
            doc.annotations[0].intro,
            Agreement::Perfect,
            Agreement::Perfect,
        )),
        _ => {
            let present: Vec<TokenRange> = doc.annotations.iter().filter_map(|a| a.intro).collect();
            let absent = n - present.len();
            if 2 * absent > n {
                let grade = if absent == n {
                    Agreement::Perfect
                } else {
                    Agreement::Majority
                };
                return Ok(label(None, grade, grade));
            }
            let starts: Vec<usize> = present.iter().map(|r| r.start()).collect();
            // Ends are compared on their last covered token.
            let ends: Vec<usize> = present.iter().map(|r| r.end() - 1).collect();
            let start = vote(&starts, n, doc, tol);
            let end = vote(&ends, n, doc, tol);
            match (start.position, end.position) {
                (Some(s), Some(e)) => match TokenRange::new(s, e + 1) {
                    Some(range) => Ok(label(Some(range), start.agreement, end.agreement)),
                    None => Ok(label(None, Agreement::None, Agreement::None)),
                },
                _ => Ok(label(None, start.agreement, end.agreement)),
            }
        }
    }
}

/// Resolves gold labels for every annotated document, in corpus order.
pub fn resolve_corpus(docs: &[TranscriptDoc], tol: Tolerance) -> Result<Vec<GoldLabel>> {
    docs.iter()
        .filter(|d| !d.annotations.is_empty())
        .map(|d| resolve_gold(d, tol))
        .collect()
}

pub fn write_gold<'a>(
    mut out: impl Write,
    golds: impl IntoIterator<Item = &'a GoldLabel>,
) -> std::io::Result<()> {
    for gold in golds {
        serde_json::to_writer(&mut out, gold)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldLabel>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let gold: GoldLabel =
            serde_json::from_str(&line).map_err(|e| Error::line(path, n + 1, e.to_string()))?;
        if gold.intro.is_some() && !gold.is_evaluable() {
            return Err(Error::line(
                path,
                n + 1,
                "intro present but an agreement grade is `none`",
            ));
        }
        out.push(gold);
    }
    Ok(out)
}

/// Episode ids per agreement grade for one boundary kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementBuckets {
    pub perfect: Vec<String>,
    pub majority: Vec<String>,
    pub none: Vec<String>,
}

impl AgreementBuckets {
    fn push(&mut self, grade: Agreement, id: &str) {
        match grade {
            Agreement::Perfect => self.perfect.push(id.to_owned()),
            Agreement::Majority => self.majority.push(id.to_owned()),
            Agreement::None => self.none.push(id.to_owned()),
        }
    }

    /// `(perfect, majority, none)` counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.perfect.len(), self.majority.len(), self.none.len())
    }

    pub fn total(&self) -> usize {
        self.perfect.len() + self.majority.len() + self.none.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Number of documents with at least three annotations.
    pub episodes: usize,
    pub starts: AgreementBuckets,
    pub ends: AgreementBuckets,
}

impl fmt::Display for AgreementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, b) in [("start", &self.starts), ("end", &self.ends)] {
            let (p, m, n) = b.counts();
            writeln!(
                f,
                "{name:<5}  perfect {p:>4}  majority {m:>4}  none {n:>4}  (of {})",
                self.episodes
            )?;
        }
        Ok(())
    }
}

/// Tallies agreement grades over multiply-annotated documents.
pub fn agreement_report(docs: &[TranscriptDoc], tol: Tolerance) -> Result<AgreementReport> {
    let mut report = AgreementReport::default();
    for doc in docs.iter().filter(|d| d.annotations.len() >= 3) {
        let gold = resolve_gold(doc, tol)?;
        report.episodes += 1;
        report.starts.push(gold.start_agreement, &doc.episode_id);
        report.ends.push(gold.end_agreement, &doc.episode_id);
    }
    Ok(report)
}

/// A document paired with its per-token Is-intro labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDoc {
    pub doc: TranscriptDoc,
    pub labels: Vec<bool>,
}

impl LabeledDoc {
    pub fn from_range(doc: TranscriptDoc, intro: Option<TokenRange>) -> Self {
        let labels = (0..doc.len())
            .map(|i| intro.is_some_and(|r| r.contains(i)))
            .collect();
        LabeledDoc { doc, labels }
    }

    /// Span from the first to the last Is-intro token.
    pub fn intro(&self) -> Option<TokenRange> {
        let first = self.labels.iter().position(|&l| l)?;
        let last = self.labels.iter().rposition(|&l| l)?;
        TokenRange::new(first, last + 1)
    }

    /// The document with its annotations replaced by a single trusted one.
    pub fn into_annotated(mut self, annotator: &str) -> TranscriptDoc {
        let intro = self.intro();
        self.doc.annotations = vec![Annotation {
            annotator_id: annotator.to_owned(),
            intro,
        }];
        self.doc
    }
}
