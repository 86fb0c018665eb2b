//! JSONL manifest records shared by every pipeline stage.
//!
//! Two record types flow between commands: [`Recording`] (a source audio
//! file with timestamped transcript segments) and [`Chunk`] (a packed
//! training example of at most [`MAX_CHUNK_SECONDS`] seconds). Manifests
//! are strict JSON Lines: one object per line, unknown keys rejected,
//! optional keys omitted rather than null. All second-valued fields are
//! written at millisecond resolution so that rewriting a manifest is
//! byte-stable.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

/// Hard ceiling on chunk duration, in seconds of audio.
pub const MAX_CHUNK_SECONDS: f64 = 30.0;

/// Slack allowed when cross-checking second-valued fields that were
/// serialized at millisecond resolution (2 ms covers two independent
/// roundings).
pub const TIME_TOLERANCE_S: f64 = 2e-3;

/// Serializes a second-valued field rounded to millisecond resolution.
fn ser_seconds<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((v * 1000.0).round() / 1000.0)
}

/// Errors raised while reading, writing or validating manifests.
#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// A line that is not a single valid JSON object of the expected shape.
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    /// Two records in one manifest share an id.
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    /// A structurally valid record that violates a semantic invariant.
    #[error("record `{id}` (line {line}): {reason}")]
    Invalid {
        id: String,
        line: usize,
        reason: String,
    },
}

/// One transcribed span of a recording, in absolute recording time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    #[serde(serialize_with = "ser_seconds")]
    pub start_s: f64,
    #[serde(serialize_with = "ser_seconds")]
    pub end_s: f64,
    pub text: String,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// A source audio file with its timestamped transcript segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recording {
    pub id: String,
    /// Opaque pointer to the audio (path, URL, object-store key, ...).
    pub audio_ref: String,
    #[serde(serialize_with = "ser_seconds")]
    pub total_duration_s: f64,
    pub segments: Vec<Segment>,
}

/// A packed training example: a contiguous span of one recording together
/// with its teacher transcript and optional secondary transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chunk {
    pub id: String,
    pub recording_id: String,
    #[serde(serialize_with = "ser_seconds")]
    pub start_s: f64,
    #[serde(serialize_with = "ser_seconds")]
    pub end_s: f64,
    #[serde(serialize_with = "ser_seconds")]
    pub duration_s: f64,
    /// Teacher transcript, usually with inline timestamp tokens.
    pub teacher_text: String,
    /// Transcript from the validation model, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validator_text: Option<String>,
    /// Human reference transcript, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
    /// Set when the chunk span exceeds [`MAX_CHUNK_SECONDS`] (single
    /// over-long segment, or packed speech separated by long gaps).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversize: bool,
}

/// Checks the semantic invariants of a recording. `line` is only used for
/// error reporting.
pub fn validate_recording(rec: &Recording, line: usize) -> Result<(), ManifestError> {
    let fail = |reason: String| {
        Err(ManifestError::Invalid {
            id: rec.id.clone(),
            line,
            reason,
        })
    };
    if rec.id.is_empty() {
        return Err(ManifestError::Invalid {
            id: "<empty>".into(),
            line,
            reason: "empty id".into(),
        });
    }
    if !rec.total_duration_s.is_finite() || rec.total_duration_s < 0.0 {
        return fail(format!(
            "total_duration_s must be finite and non-negative, got {}",
            rec.total_duration_s
        ));
    }
    for (i, seg) in rec.segments.iter().enumerate() {
        if !seg.start_s.is_finite() || !seg.end_s.is_finite() {
            return fail(format!("segment {i}: non-finite times"));
        }
        if seg.start_s < 0.0 {
            return fail(format!("segment {i}: negative start_s {}", seg.start_s));
        }
        if seg.end_s <= seg.start_s {
            return fail(format!(
                "segment {i}: end_s {} must be greater than start_s {}",
                seg.end_s, seg.start_s
            ));
        }
        if seg.end_s > rec.total_duration_s + TIME_TOLERANCE_S {
            return fail(format!(
                "segment {i}: end_s {} exceeds total_duration_s {}",
                seg.end_s, rec.total_duration_s
            ));
        }
        if i > 0 {
            let prev = &rec.segments[i - 1];
            if seg.start_s + TIME_TOLERANCE_S < prev.end_s {
                return fail(format!(
                    "segment {i}: start_s {} overlaps previous segment ending at {}",
                    seg.start_s, prev.end_s
                ));
            }
        }
    }
    Ok(())
}

/// Checks the semantic invariants of a chunk. `line` is only used for
/// error reporting.
pub fn validate_chunk(chunk: &Chunk, line: usize) -> Result<(), ManifestError> {
    let fail = |reason: String| {
        Err(ManifestError::Invalid {
            id: if chunk.id.is_empty() {
                "<empty>".to_owned()
            } else {
                chunk.id.clone()
            },
            line,
            reason,
        })
    };
    if chunk.id.is_empty() {
        return fail("empty id".into());
    }
    if chunk.recording_id.is_empty() {
        return fail("empty recording_id".into());
    }
    if !chunk.start_s.is_finite() || !chunk.end_s.is_finite() || !chunk.duration_s.is_finite() {
        return fail("non-finite times".into());
    }
    if chunk.start_s < 0.0 {
        return fail(format!("negative start_s {}", chunk.start_s));
    }
    if chunk.end_s <= chunk.start_s {
        return fail(format!(
            "end_s {} must be greater than start_s {}",
            chunk.end_s, chunk.start_s
        ));
    }
    let span = chunk.end_s - chunk.start_s;
    if (chunk.duration_s - span).abs() > TIME_TOLERANCE_S {
        return fail(format!(
            "duration_s {} disagrees with end_s - start_s = {span}",
            chunk.duration_s
        ));
    }
    if !chunk.oversize && chunk.duration_s > MAX_CHUNK_SECONDS + TIME_TOLERANCE_S {
        return fail(format!(
            "duration_s {} exceeds {MAX_CHUNK_SECONDS} s but oversize is not set",
            chunk.duration_s
        ));
    }
    if chunk.teacher_text.trim().is_empty() {
        return fail("empty teacher_text".into());
    }
    Ok(())
}

fn read_jsonl_validated<T, R>(
    reader: R,
    id_of: fn(&T) -> &str,
    validate: fn(&T, usize) -> Result<(), ManifestError>,
) -> Result<Vec<T>, ManifestError>
where
    T: DeserializeOwned,
    R: Read,
{
    let mut out = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let record: T =
            serde_json::from_str(&line).map_err(|e| ManifestError::Malformed {
                line: lineno,
                reason: e.to_string(),
            })?;
        validate(&record, lineno)?;
        let id = id_of(&record);
        if !seen.insert(id.to_owned()) {
            return Err(ManifestError::DuplicateId {
                line: lineno,
                id: id.to_owned(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Reads and validates a recordings manifest. Fails on the first malformed
/// line, duplicate id or invariant violation; a valid call returns every
/// record in file order.
pub fn read_recordings<R: Read>(reader: R) -> Result<Vec<Recording>, ManifestError> {
    read_jsonl_validated(reader, |r: &Recording| &r.id, validate_recording)
}

/// Reads and validates a chunks manifest.
pub fn read_chunks<R: Read>(reader: R) -> Result<Vec<Chunk>, ManifestError> {
    read_jsonl_validated(reader, |c: &Chunk| &c.id, validate_chunk)
}

/// Writes records as JSON Lines. Output is deterministic: fields are
/// emitted in declaration order and seconds at millisecond resolution, so
/// writing the same records twice yields identical bytes.
pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut writer: W) -> Result<(), ManifestError> {
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Corpus-level size bookkeeping for a filtering pass. Retention is
/// duration-weighted (hours of audio kept), with a count-based rate
/// alongside; an empty corpus keeps "everything" and reports rate 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub total_chunks: usize,
    pub kept_chunks: usize,
    pub total_duration_s: f64,
    pub kept_duration_s: f64,
    /// kept_duration_s / total_duration_s.
    pub retention_rate: f64,
    /// kept_chunks / total_chunks.
    pub count_retention_rate: f64,
}

impl CorpusStats {
    /// Computes stats from the full chunk list and a same-length keep mask.
    /// Sums run in chunk order so results do not depend on thread count.
    pub fn from_mask(chunks: &[Chunk], kept: &[bool]) -> Self {
        assert_eq!(chunks.len(), kept.len(), "mask length mismatch");
        let mut total_duration = 0.0;
        let mut kept_duration = 0.0;
        let mut kept_chunks = 0;
        for (chunk, &keep) in chunks.iter().zip(kept) {
            total_duration += chunk.duration_s;
            if keep {
                kept_duration += chunk.duration_s;
                kept_chunks += 1;
            }
        }
        let retention_rate = if total_duration > 0.0 {
            kept_duration / total_duration
        } else {
            1.0
        };
        let count_retention_rate = if chunks.is_empty() {
            1.0
        } else {
            kept_chunks as f64 / chunks.len() as f64
        };
        Self {
            total_chunks: chunks.len(),
            kept_chunks,
            total_duration_s: total_duration,
            kept_duration_s: kept_duration,
            retention_rate,
            count_retention_rate,
        }
    }
}
