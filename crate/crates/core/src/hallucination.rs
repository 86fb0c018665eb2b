//! Repetitive-hallucination detection.
//!
//! Auto-regressive teachers sometimes fall into a loop and emit the same
//! phrase over and over. The detector flags a token sequence when any
//! single n-gram occurs more often than an occurrence budget `c`. With the
//! defaults (n = 4, c = 2, overlapping counting, strictly-greater
//! comparison) a transcript is flagged once some 4-token phrase shows up a
//! third time — twice can be natural speech, three times is a loop.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::manifest::Chunk;
use crate::textnorm::{TextPrep, TokenSequence};

/// Detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramConfig {
    /// n-gram length in tokens.
    pub n: usize,
    /// Occurrence budget: a sequence is flagged when some n-gram is seen
    /// more than `c` times (or at least `c` times with
    /// `strictly_greater = false`).
    pub c: usize,
    /// Compare with `> c` (true, default) or `>= c`.
    pub strictly_greater: bool,
    /// Count overlapping occurrences (default) or greedily disjoint ones.
    pub overlapping: bool,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self {
            n: 4,
            c: 2,
            strictly_greater: true,
            overlapping: true,
        }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<(), String> {
        // c = 0 is legal: with `>=` it flags every sequence of length >= n,
        // with `>` it flags any repeated n-gram at all.
        if self.n == 0 {
            return Err("ngram n must be at least 1".into());
        }
        Ok(())
    }

    fn hit(&self, count: usize) -> bool {
        if self.strictly_greater {
            count > self.c
        } else {
            count >= self.c
        }
    }
}

/// Core detector over any hashable unit sequence. Returns true when some
/// window of `cfg.n` consecutive units repeats past the budget. Sequences
/// shorter than `n` are never flagged.
pub fn detect_units<T: Eq + Hash>(units: &[T], cfg: &NgramConfig) -> bool {
    let n = cfg.n;
    if n == 0 || units.len() < n {
        return false;
    }
    if cfg.overlapping {
        let mut counts: HashMap<&[T], usize> = HashMap::new();
        for window in units.windows(n) {
            let count = counts.entry(window).or_insert(0);
            *count += 1;
            if cfg.hit(*count) {
                return true;
            }
        }
        false
    } else {
        // Greedy left-to-right occupancy: an occurrence only counts when it
        // starts at or after the end of the previous counted occurrence of
        // the same n-gram. Greedy packing maximizes the disjoint count.
        let mut counts: HashMap<&[T], (usize, usize)> = HashMap::new();
        for (i, window) in units.windows(n).enumerate() {
            let (count, next_free) = counts.entry(window).or_insert((0, 0));
            if i >= *next_free {
                *count += 1;
                *next_free = i + n;
                if cfg.hit(*count) {
                    return true;
                }
            }
        }
        false
    }
}

/// Detector over a tokenized transcript.
pub fn detect(seq: &TokenSequence, cfg: &NgramConfig) -> bool {
    detect_units(&seq.tokens, cfg)
}

/// Detector straight from raw text, using the shared preparation pipeline.
pub fn detect_text(text: &str, cfg: &NgramConfig, prep: &TextPrep) -> bool {
    detect(&prep.prepare(text), cfg)
}

/// Which transcript of a chunk to screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    Teacher,
    Validator,
    Reference,
}

impl TextField {
    pub fn get<'c>(&self, chunk: &'c Chunk) -> Option<&'c str> {
        match self {
            TextField::Teacher => Some(&chunk.teacher_text),
            TextField::Validator => chunk.validator_text.as_deref(),
            TextField::Reference => chunk.reference_text.as_deref(),
        }
    }
}

/// Corpus-level repetition tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RepetitionCount {
    /// Chunks whose selected transcript tripped the detector.
    pub flagged: usize,
    /// Chunks actually screened.
    pub checked: usize,
    /// Chunks skipped because the selected transcript is absent.
    pub skipped: usize,
}

/// Screens one transcript field across a corpus. Chunks missing the field
/// are skipped and reported, not treated as errors.
pub fn count_repetitive(
    chunks: &[Chunk],
    field: TextField,
    cfg: &NgramConfig,
    prep: &TextPrep,
) -> RepetitionCount {
    let mut flagged = 0;
    let mut checked = 0;
    let mut skipped = 0;
    for chunk in chunks {
        match field.get(chunk) {
            Some(text) => {
                checked += 1;
                if detect_text(text, cfg, prep) {
                    flagged += 1;
                }
            }
            None => skipped += 1,
        }
    }
    RepetitionCount {
        flagged,
        checked,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, c: usize, strictly_greater: bool, overlapping: bool) -> NgramConfig {
        NgramConfig {
            n,
            c,
            strictly_greater,
            overlapping,
        }
    }

    fn detect_str(s: &str, cfg: &NgramConfig) -> bool {
        let units: Vec<char> = s.chars().collect();
        detect_units(&units, cfg)
    }

    #[test]
    fn default_flags_a_third_occurrence() {
        let cfg = NgramConfig::default();
        // "abcd" three times: the 4-gram abcd occurs 3 > 2.
        assert!(detect_str("abcdabcdabcd", &cfg));
        // Twice is within budget.
        assert!(!detect_str("abcdabcd", &cfg));
    }

    #[test]
    fn short_sequences_never_flag() {
        let cfg = NgramConfig::default();
        assert!(!detect_str("abc", &cfg));
        assert!(!detect_str("", &cfg));
    }

    #[test]
    fn overlapping_counts_self_overlap() {
        // "aaaaaa": the 4-gram aaaa occurs at 3 overlapping positions.
        assert!(detect_str("aaaaaa", &cfg(4, 2, true, true)));
        // Disjoint counting sees only one occurrence in 6 chars, needs 12+.
        assert!(!detect_str("aaaaaa", &cfg(4, 2, true, false)));
        assert!(!detect_str("aaaaaaaaaaa", &cfg(4, 2, true, false))); // 11 chars → 2 disjoint
        assert!(detect_str("aaaaaaaaaaaa", &cfg(4, 2, true, false))); // 12 chars → 3 disjoint
    }

    #[test]
    fn at_least_mode_lowers_the_bar() {
        assert!(!detect_str("abcdabcd", &cfg(4, 2, true, true)));
        assert!(detect_str("abcdabcd", &cfg(4, 2, false, true)));
    }

    #[test]
    fn unigram_mode_counts_single_tokens() {
        assert!(detect_str("xyxyx", &cfg(1, 2, true, true))); // 'x' occurs 3 times
        assert!(!detect_str("xyzzy", &cfg(1, 2, true, true)));
    }

    #[test]
    fn detect_text_normalizes_first() {
        let cfg = NgramConfig::default();
        let prep = TextPrep::default();
        // Same 4-word phrase three times, with case/punctuation noise and a
        // timestamp in the middle.
        let text = "go to the store, go to the store! <|3.00|>GO TO THE STORE";
        assert!(detect_text(text, &cfg, &prep));
        assert!(!detect_text("go to the store just once", &cfg, &prep));
    }

    #[test]
    fn count_repetitive_skips_missing_fields() {
        let prep = TextPrep::default();
        let cfg = NgramConfig::default();
        let looped = "la la la la la la la la la la la la";
        let mk = |id: &str, teacher: &str, validator: Option<&str>| Chunk {
            id: id.into(),
            recording_id: "r".into(),
            start_s: 0.0,
            end_s: 1.0,
            duration_s: 1.0,
            teacher_text: teacher.into(),
            validator_text: validator.map(Into::into),
            reference_text: None,
            oversize: false,
        };
        let chunks = vec![
            mk("a", looped, Some("clean text here")),
            mk("b", "clean one", None),
            mk("c", "clean two", Some(looped)),
        ];
        let teacher = count_repetitive(&chunks, TextField::Teacher, &cfg, &prep);
        assert_eq!((teacher.flagged, teacher.checked, teacher.skipped), (1, 3, 0));
        let validator = count_repetitive(&chunks, TextField::Validator, &cfg, &prep);
        assert_eq!((validator.flagged, validator.checked, validator.skipped), (1, 2, 1));
    }

    #[test]
    fn rejects_zero_n() {
        assert!(cfg(0, 2, true, true).validate().is_err());
        assert!(cfg(1, 0, true, true).validate().is_ok());
    }
}
