//! Overlapping span tiling for bounded-context scorers and max-context
//! re-merging of per-span scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub max_len: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            max_len: 512,
            overlap: 128,
        }
    }
}

impl ChunkConfig {
    pub fn new(max_len: usize, overlap: usize) -> Result<Self> {
        let cfg = ChunkConfig { max_len, overlap };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 || self.overlap >= self.max_len {
            return Err(Error::Config(format!(
                "chunking needs 0 <= overlap < max_len, got max_len {} overlap {}",
                self.max_len, self.overlap
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.max_len - self.overlap
    }
}

/// A contiguous span `[doc_offset, doc_offset + length)` of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanWindow {
    pub doc_offset: usize,
    pub length: usize,
}

impl SpanWindow {
    pub fn end(&self) -> usize {
        self.doc_offset + self.length
    }

    pub fn covers(&self, token: usize) -> bool {
        self.doc_offset <= token && token < self.end()
    }

    /// Distance from `token` to the nearer edge of this window.
    pub fn context(&self, token: usize) -> usize {
        debug_assert!(self.covers(token));
        (token - self.doc_offset).min(self.end() - 1 - token)
    }
}

/// Tiles `doc_len` tokens with windows of at most `cfg.max_len` tokens.
///
/// The final window is shortened to end exactly at the document end.
pub fn split(doc_len: usize, cfg: &ChunkConfig) -> Vec<SpanWindow> {
    assert!(doc_len >= 1, "cannot split an empty document");
    let stride = cfg.stride();
    let mut windows = Vec::with_capacity(doc_len.div_ceil(stride));
    let mut offset = 0;
    loop {
        let length = cfg.max_len.min(doc_len - offset);
        windows.push(SpanWindow {
            doc_offset: offset,
            length,
        });
        if offset + length == doc_len {
            return windows;
        }
        offset += stride;
    }
}

/// Merges per-window scores into one score per token.
///
/// Each token takes its score from the covering window where it has maximal
/// context; ties go to the window with the smaller offset, so the result does
/// not depend on the order windows are supplied in.
pub fn merge(doc_len: usize, windows: &[(SpanWindow, Vec<f64>)]) -> Result<Vec<f64>> {
    for (w, scores) in windows {
        if scores.len() != w.length {
            return Err(Error::Chunk(format!(
                "window at offset {} has {} scores for {} tokens",
                w.doc_offset,
                scores.len(),
                w.length
            )));
        }
        if w.length == 0 || w.end() > doc_len {
            return Err(Error::Chunk(format!(
                "window [{}, {}) does not fit a document of {doc_len} tokens",
                w.doc_offset,
                w.end()
            )));
        }
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&i| (windows[i].0.doc_offset, windows[i].0.length));

    // best[t] = (context, offset) of the winning window so far.
    let mut best: Vec<Option<(usize, usize)>> = vec![None; doc_len];
    let mut merged = vec![0.0; doc_len];
    for &i in &order {
        let (w, scores) = &windows[i];
        for (t, &score) in (w.doc_offset..w.end()).zip(scores) {
            let ctx = w.context(t);
            let better = match best[t] {
                None => true,
                Some((c, off)) => ctx > c || (ctx == c && w.doc_offset < off),
            };
            if better {
                best[t] = Some((ctx, w.doc_offset));
                merged[t] = score;
            }
        }
    }
    if let Some(t) = best.iter().position(Option::is_none) {
        return Err(Error::Chunk(format!("token {t} is not covered by any window")));
    }
    Ok(merged)
}
