//! Locating episode introductions in ASR podcast transcripts.
//!
//! The pipeline is scorer-agnostic: any model that produces a per-token
//! Is-intro probability ([`ScoreSequence`]) can feed the boundary detector.
//!
//! * [`corpus`]: transcript types, JSON Lines ingestion, gold resolution and
//!   annotator agreement.
//! * [`chunker`]: overlapping span tiling and max-context score merging.
//! * [`scorer`]: static-embedding logistic scorer and score-file import.
//! * [`boundary`]: maximum-difference start/end detection.
//! * [`augment`]: TF-IDF replacement and random edit augmentation.
//! * [`splitter`]: program-stratified seen/unseen splits.
//! * [`eval`]: offset accuracy, overlap score and cross-run intervals.
//! * [`synth`]: synthetic corpora with planted introductions.

pub mod augment;
pub mod boundary;
pub mod chunker;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod scorer;
pub mod splitter;
pub mod synth;

pub use augment::{AugmentConfig, Strategy, TfidfStats};
pub use boundary::{BoundaryConfig, PredictionRecord, SegmentPrediction};
pub use chunker::{ChunkConfig, SpanWindow};
pub use corpus::{
    Agreement, AgreementReport, Annotation, GoldLabel, LabeledDoc, Token, TokenRange, Tolerance,
    TranscriptDoc,
};
pub use error::{Error, Result};
pub use eval::{EvalReport, RunReport};
pub use scorer::{EmbeddingTable, LogisticModel, ScoreSequence, TrainConfig};
pub use splitter::{DatasetSplit, SplitRole, SplitSpec};
pub use synth::SynthConfig;

/// Toolkit version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
