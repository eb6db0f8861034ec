//! Per-token Is-intro scoring.
//!
//! The native scorer is a logistic classifier over static word vectors. Any
//! other model can feed the pipeline through score files, one JSON object per
//! line: `{"episode_id": "...", "scores": [0.01, 0.97, ...]}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunker::{self, ChunkConfig};
use crate::corpus::{LabeledDoc, Token, TranscriptDoc};
use crate::error::{Error, Result};

/// Per-token Is-intro probabilities for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSequence {
    pub episode_id: String,
    pub scores: Vec<f64>,
}

impl ScoreSequence {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Index of the first score outside `[0, 1]` (NaN included).
    pub fn first_out_of_range(&self) -> Option<usize> {
        self.scores.iter().position(|s| !(0.0..=1.0).contains(s))
    }
}

/// Static word vectors with a zero out-of-vocabulary vector.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
    oov: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
            oov: vec![0.0; dim],
        }
    }

    /// Inserts or replaces the vector for `token`.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Config(format!(
                "vector of length {} in a {}-dimensional table",
                vector.len(),
                self.dim
            )));
        }
        let token = token.into();
        match self.index.get(&token) {
            Some(&i) => self.vectors[i] = vector,
            None => {
                self.index.insert(token, self.vectors.len());
                self.vectors.push(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.vectors[i].as_slice())
    }

    pub fn oov(&self) -> &[f64] {
        &self.oov
    }

    /// Entry id used for `text`: lowercased lookup, then again with
    /// surrounding ASCII punctuation removed. `None` means out of vocabulary.
    pub fn resolve(&self, text: &str) -> Option<usize> {
        let lower = text.to_lowercase();
        if let Some(&i) = self.index.get(&lower) {
            return Some(i);
        }
        let stripped = lower.trim_matches(|c: char| c.is_ascii_punctuation());
        if stripped.is_empty() || stripped.len() == lower.len() {
            return None;
        }
        self.index.get(stripped).copied()
    }

    fn vector(&self, id: Option<usize>) -> &[f64] {
        match id {
            Some(i) => &self.vectors[i],
            None => &self.oov,
        }
    }
}

/// Reads a whitespace-separated text embedding file (`token f1 ... fD`).
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(BufReader::new(file), path)
}

pub fn parse_embeddings(reader: impl BufRead, origin: &Path) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::line(origin, line_no, format!("bad float: {e}")))?;
        let table = match &mut table {
            Some(t) => t,
            None => {
                if values.is_empty() {
                    return Err(Error::line(origin, line_no, "entry has no vector components"));
                }
                table.insert(EmbeddingTable::new(values.len()))
            }
        };
        if values.len() != table.dim {
            return Err(Error::line(
                origin,
                line_no,
                format!("expected {} components, found {}", table.dim, values.len()),
            ));
        }
        table.insert(token, values)?;
    }
    table.ok_or_else(|| Error::line(origin, 0, "embedding file is empty"))
}

pub fn write_embeddings(mut out: impl Write, table: &EmbeddingTable) -> std::io::Result<()> {
    let mut entries: Vec<(&String, &usize)> = table.index.iter().collect();
    entries.sort_by_key(|(_, &i)| i);
    for (token, &i) in entries {
        write!(out, "{token}")?;
        for v in &table.vectors[i] {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Feature vector for a token.
pub fn featurize<'t>(token: &Token, table: &'t EmbeddingTable) -> &'t [f64] {
    table.vector(table.resolve(&token.text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 50,
            l2: 1e-4,
            seed: 0,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One distinct training point with its total loss weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedExample {
    pub features: Vec<f64>,
    pub label: bool,
    pub weight: f64,
}

/// A weighted training problem; the loss is a weighted mean over the
/// original examples, `sum(weight * ce) / examples`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub dim: usize,
    pub examples: Vec<WeightedExample>,
    /// Number of raw (token-level) examples the weights are normalized by.
    pub count: usize,
}

impl TrainingSet {
    /// Builds a problem from raw labeled vectors. Duplicates are kept apart.
    pub fn from_examples(points: Vec<(Vec<f64>, bool)>, class_weighting: bool) -> Result<Self> {
        let dim = points.first().map(|(x, _)| x.len()).unwrap_or(0);
        let positives = points.iter().filter(|(_, y)| *y).count();
        let (w_pos, w_neg) = class_weights(points.len(), positives, class_weighting)?;
        let examples = points
            .into_iter()
            .map(|(features, label)| WeightedExample {
                weight: if label { w_pos } else { w_neg },
                features,
                label,
            })
            .collect::<Vec<_>>();
        if examples.iter().any(|e| e.features.len() != dim) {
            return Err(Error::Config("feature vectors differ in length".into()));
        }
        Ok(TrainingSet {
            dim,
            count: examples.len(),
            examples,
        })
    }

    /// Builds a problem from labeled documents. Tokens resolving to the same
    /// table entry with the same label are collapsed into one weighted point.
    pub fn from_docs(docs: &[LabeledDoc], table: &EmbeddingTable, class_weighting: bool) -> Result<Self> {
        let mut counts: BTreeMap<(Option<usize>, bool), usize> = BTreeMap::new();
        for ld in docs {
            if ld.labels.len() != ld.doc.len() {
                return Err(Error::InvalidDocument {
                    episode: ld.doc.episode_id.clone(),
                    message: "label count differs from token count".into(),
                });
            }
            for (token, &label) in ld.doc.tokens.iter().zip(&ld.labels) {
                *counts.entry((table.resolve(&token.text), label)).or_default() += 1;
            }
        }
        let total: usize = counts.values().sum();
        let positives: usize = counts.iter().filter(|((_, y), _)| *y).map(|(_, c)| c).sum();
        let (w_pos, w_neg) = class_weights(total, positives, class_weighting)?;
        let examples = counts
            .into_iter()
            .map(|((id, label), n)| WeightedExample {
                features: table.vector(id).to_vec(),
                label,
                weight: n as f64 * if label { w_pos } else { w_neg },
            })
            .collect();
        Ok(TrainingSet {
            dim: table.dim(),
            examples,
            count: total,
        })
    }

    /// Regularized loss and its gradient `(loss, d/dw, d/db)`.
    pub fn loss_and_gradient(&self, model: &LogisticModel, l2: f64) -> (f64, Vec<f64>, f64) {
        let n = self.count as f64;
        let mut loss = 0.0;
        let mut grad_w = vec![0.0; self.dim];
        let mut grad_b = 0.0;
        for ex in &self.examples {
            let z = model.logit(&ex.features);
            let y = if ex.label { 1.0 } else { 0.0 };
            loss += ex.weight * (softplus(z) - y * z);
            let r = ex.weight * (sigmoid(z) - y);
            for (g, x) in grad_w.iter_mut().zip(&ex.features) {
                *g += r * x;
            }
            grad_b += r;
        }
        loss /= n;
        grad_b /= n;
        for (g, w) in grad_w.iter_mut().zip(&model.weights) {
            *g = *g / n + l2 * w;
        }
        loss += 0.5 * l2 * dot(&model.weights, &model.weights);
        (loss, grad_w, grad_b)
    }

    pub fn loss(&self, model: &LogisticModel, l2: f64) -> f64 {
        self.loss_and_gradient(model, l2).0
    }
}

fn class_weights(total: usize, positives: usize, class_weighting: bool) -> Result<(f64, f64)> {
    let negatives = total - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateTraining(format!(
            "{positives} Is-intro and {negatives} Not-intro tokens; both classes are required"
        )));
    }
    if !class_weighting {
        return Ok((1.0, 1.0));
    }
    let n = total as f64;
    Ok((n / (2.0 * positives as f64), n / (2.0 * negatives as f64)))
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: LogisticModel,
    /// Loss before each epoch, then the final loss (`epochs + 1` entries).
    pub loss_history: Vec<f64>,
}

/// Full-batch gradient descent from a zero model.
pub fn train_on(set: &TrainingSet, cfg: &TrainConfig) -> Result<Training> {
    cfg.validate()?;
    let mut model = LogisticModel::zeros(set.dim);
    let mut loss_history = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, grad_w, grad_b) = set.loss_and_gradient(&model, cfg.l2);
        loss_history.push(loss);
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= cfg.learning_rate * g;
        }
        model.bias -= cfg.learning_rate * grad_b;
    }
    loss_history.push(set.loss(&model, cfg.l2));
    if !model.is_finite() {
        return Err(Error::DegenerateTraining(
            "training diverged; lower the learning rate".into(),
        ));
    }
    Ok(Training {
        model,
        loss_history,
    })
}

/// Trains the token classifier on labeled documents.
pub fn train_logistic(docs: &[LabeledDoc], table: &EmbeddingTable, cfg: &TrainConfig) -> Result<Training> {
    let set = TrainingSet::from_docs(docs, table, cfg.class_weighting)?;
    train_on(&set, cfg)
}

/// Scores every token of `doc`, span by span, merging overlaps by max context.
pub fn score_document(
    doc: &TranscriptDoc,
    model: &LogisticModel,
    table: &EmbeddingTable,
    chunk: &ChunkConfig,
) -> Result<ScoreSequence> {
    if model.weights.len() != table.dim() {
        return Err(Error::Config(format!(
            "model dimension {} does not match embedding dimension {}",
            model.weights.len(),
            table.dim()
        )));
    }
    chunk.validate()?;
    if doc.is_empty() {
        return Err(Error::InvalidDocument {
            episode: doc.episode_id.clone(),
            message: "document has no tokens".into(),
        });
    }
    let windows = chunker::split(doc.len(), chunk)
        .into_iter()
        .map(|w| {
            let scores = doc.tokens[w.doc_offset..w.end()]
                .iter()
                .map(|t| model.predict(featurize(t, table)))
                .collect();
            (w, scores)
        })
        .collect::<Vec<_>>();
    Ok(ScoreSequence {
        episode_id: doc.episode_id.clone(),
        scores: chunker::merge(doc.len(), &windows)?,
    })
}

pub fn write_scores<'a>(
    mut out: impl Write,
    seqs: impl IntoIterator<Item = &'a ScoreSequence>,
) -> std::io::Result<()> {
    for seq in seqs {
        serde_json::to_writer(&mut out, seq)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a score file without corpus checks (ranges are still validated).
pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreSequence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: ScoreSequence =
            serde_json::from_str(&line).map_err(|e| Error::line(path, n + 1, e.to_string()))?;
        if let Some(i) = seq.first_out_of_range() {
            return Err(Error::InvalidScores {
                episode: seq.episode_id,
                message: format!("value {} at index {i} is outside [0, 1]", seq.scores[i]),
            });
        }
        if !seen.insert(seq.episode_id.clone()) {
            return Err(Error::InvalidScores {
                episode: seq.episode_id,
                message: "appears more than once".into(),
            });
        }
        out.push(seq);
    }
    Ok(out)
}

/// Reads a score file and checks it against `corpus`.
pub fn import_scores(path: impl AsRef<Path>, corpus: &[TranscriptDoc]) -> Result<Vec<ScoreSequence>> {
    let seqs = load_scores(path)?;
    let lengths: HashMap<&str, usize> = corpus.iter().map(|d| (d.episode_id.as_str(), d.len())).collect();
    for seq in &seqs {
        let Some(&n) = lengths.get(seq.episode_id.as_str()) else {
            return Err(Error::InvalidScores {
                episode: seq.episode_id.clone(),
                message: "names an episode absent from the corpus".into(),
            });
        };
        if seq.len() != n {
            return Err(Error::InvalidScores {
                episode: seq.episode_id.clone(),
                message: format!(
                    "has {} values for {n} tokens (first mismatch at index {})",
                    seq.len(),
                    seq.len().min(n)
                ),
            });
        }
    }
    Ok(seqs)
}

pub const MODEL_FORMAT: &str = "podintro-logistic";
pub const MODEL_VERSION: u32 = 1;

/// On-disk logistic model: a JSON object with format tag and version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_config: TrainConfig,
}

impl ModelFile {
    pub fn new(model: &LogisticModel, train_config: &TrainConfig) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dim: model.weights.len(),
            weights: model.weights.clone(),
            bias: model.bias,
            train_config: train_config.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::line(path, 1, e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::line(
                path,
                1,
                format!("unsupported model format {} v{}", file.format, file.version),
            ));
        }
        if file.weights.len() != file.dim {
            return Err(Error::line(path, 1, "weights length differs from dim"));
        }
        Ok(file)
    }

    pub fn model(&self) -> LogisticModel {
        LogisticModel {
            weights: self.weights.clone(),
            bias: self.bias,
        }
    }
}
