//! Greedy packing of transcript segments into training chunks.
//!
//! Segments are walked in order and accumulated into a chunk while the
//! *sum of segment durations* stays within the limit; the first segment
//! that would overflow starts the next chunk. Chunk boundaries therefore
//! never split a segment, and chunk text preserves every segment verbatim,
//! wrapped in inline timestamp tokens rebased to the chunk start:
//!
//! ```text
//! <|0.00|>第一段<|2.35|> <|2.35|>second segment<|5.10|>
//! ```
//!
//! A chunk's recorded span runs from its first segment's start to its last
//! segment's end. Silence between segments can push that span past the
//! limit even though the packed speech is within it; such chunks (and
//! single segments longer than the limit, under the `flag` policy) are
//! marked `oversize` rather than silently truncated.

use serde::{Deserialize, Serialize};

use crate::manifest::{Chunk, Recording};
use crate::textnorm::{TextError, TimestampTemplate, DEFAULT_TIMESTAMP_TEMPLATE};

/// Slack for floating-point duration accumulation: a segment whose
/// addition overshoots the limit by under a nanosecond still fits.
pub const PACK_EPSILON_S: f64 = 1e-9;

/// What to do with a single segment that alone exceeds the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OversizePolicy {
    /// Emit it as its own chunk marked `oversize` (default).
    Flag,
    /// Silently drop the segment.
    Drop,
    /// Fail the whole run.
    Error,
}

/// Chunker settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkerConfig {
    /// Packing limit in seconds of speech per chunk.
    pub max_chunk_s: f64,
    pub oversize_policy: OversizePolicy,
    /// Template for inline timestamp tokens, e.g. `<|{:.2f}|>`.
    pub timestamp_token_format: String,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        Self {
            max_chunk_s: crate::manifest::MAX_CHUNK_SECONDS,
            oversize_policy: OversizePolicy::Flag,
            timestamp_token_format: DEFAULT_TIMESTAMP_TEMPLATE.to_owned(),
        }
    }
}

impl ChunkerConfig {
    pub fn validate(&self) -> Result<(), ChunkError> {
        if !(self.max_chunk_s > 0.0) {
            return Err(ChunkError::InvalidConfig(format!(
                "max_chunk_s must be positive, got {}",
                self.max_chunk_s
            )));
        }
        TimestampTemplate::parse(&self.timestamp_token_format)?;
        Ok(())
    }
}

/// Errors from chunking.
#[derive(Debug, thiserror::Error)]
pub enum ChunkError {
    #[error(
        "recording `{recording_id}` segment {segment_index}: \
         {duration_s:.3} s exceeds max_chunk_s = {max_chunk_s:.3} s"
    )]
    OversizeSegment {
        recording_id: String,
        segment_index: usize,
        duration_s: f64,
        max_chunk_s: f64,
    },
    #[error("invalid chunker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Template(#[from] TextError),
}

/// Packs one recording's segments into chunks. Chunk ids are
/// `{recording_id}#{k}` with `k` counting emitted chunks from 0.
pub fn chunk_recording(rec: &Recording, cfg: &ChunkerConfig) -> Result<Vec<Chunk>, ChunkError> {
    cfg.validate()?;
    let template = TimestampTemplate::parse(&cfg.timestamp_token_format)?;

    let build = |group: &[&crate::manifest::Segment], ordinal: usize| -> Chunk {
        let start = group.first().expect("non-empty group").start_s;
        let end = group.last().expect("non-empty group").end_s;
        let span = end - start;
        let teacher_text = group
            .iter()
            .map(|seg| {
                format!(
                    "{}{}{}",
                    template.format(seg.start_s - start),
                    seg.text,
                    template.format(seg.end_s - start)
                )
            })
            .collect::<Vec<_>>()
            .join(" ");
        Chunk {
            id: format!("{}#{}", rec.id, ordinal),
            recording_id: rec.id.clone(),
            start_s: start,
            end_s: end,
            duration_s: span,
            teacher_text,
            validator_text: None,
            reference_text: None,
            oversize: span > cfg.max_chunk_s + PACK_EPSILON_S,
        }
    };

    let mut chunks = Vec::new();
    let mut group: Vec<&crate::manifest::Segment> = Vec::new();
    let mut packed = 0.0;
    for (index, seg) in rec.segments.iter().enumerate() {
        let d = seg.duration_s();
        if d > cfg.max_chunk_s + PACK_EPSILON_S {
            if !group.is_empty() {
                chunks.push(build(&group, chunks.len()));
                group.clear();
                packed = 0.0;
            }
            match cfg.oversize_policy {
                OversizePolicy::Error => {
                    return Err(ChunkError::OversizeSegment {
                        recording_id: rec.id.clone(),
                        segment_index: index,
                        duration_s: d,
                        max_chunk_s: cfg.max_chunk_s,
                    });
                }
                OversizePolicy::Drop => {}
                OversizePolicy::Flag => chunks.push(build(&[seg], chunks.len())),
            }
        } else if group.is_empty() || packed + d <= cfg.max_chunk_s + PACK_EPSILON_S {
            group.push(seg);
            packed += d;
        } else {
            chunks.push(build(&group, chunks.len()));
            group = vec![seg];
            packed = d;
        }
    }
    if !group.is_empty() {
        chunks.push(build(&group, chunks.len()));
    }
    Ok(chunks)
}

/// Packs a whole corpus, recording by recording, preserving corpus order.
pub fn chunk_corpus(recordings: &[Recording], cfg: &ChunkerConfig) -> Result<Vec<Chunk>, ChunkError> {
    let mut chunks = Vec::new();
    for rec in recordings {
        chunks.extend(chunk_recording(rec, cfg)?);
    }
    Ok(chunks)
}
