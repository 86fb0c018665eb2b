//! Transcript scoring: edit-distance alignment, mixed error rate,
//! per-language rates and runtime (RTF / speed-up) arithmetic.
//!
//! The mixed error rate (MER) scores Mandarin–English code-switching
//! transcripts over mixed units: one unit per Mandarin character plus one
//! per English word or digit run. Integer operation counts are the source
//! of truth everywhere; `f64` rates are derived from them at the end, which
//! keeps identities like `deletions + substitutions + matches == ref_len`
//! exact.

use serde::Serialize;

use crate::phonemizer::PhonemeSequence;
use crate::textnorm::{Lang, TextPrep, TokenSequence};

/// One step of an alignment between reference and hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Match,
    /// Reference unit replaced by a different hypothesis unit.
    Substitute,
    /// Reference unit missing from the hypothesis.
    Delete,
    /// Hypothesis unit with no reference counterpart.
    Insert,
}

/// A minimum-cost alignment with its operation counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
    pub hyp_len: usize,
    /// Operations in reference order; length is `matches + substitutions +
    /// deletions + insertions`.
    pub ops: Vec<EditOp>,
}

impl Alignment {
    /// Levenshtein distance: total number of error operations.
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Aligns `hypothesis` against `reference` with unit-cost edits.
///
/// Standard O(m·n) dynamic program. The backtrace resolves cost ties in a
/// fixed order — match, then substitution, then deletion, then insertion —
/// so equal-cost alignments are reported identically on every run and
/// platform.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let m = reference.len();
    let n = hypothesis.len();
    let width = n + 1;
    let mut dist = vec![0u32; (m + 1) * width];
    for i in 0..=m {
        dist[i * width] = i as u32;
    }
    for j in 0..=n {
        dist[j] = j as u32;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub_cost = u32::from(reference[i - 1] != hypothesis[j - 1]);
            let diagonal = dist[(i - 1) * width + (j - 1)] + sub_cost;
            let delete = dist[(i - 1) * width + j] + 1;
            let insert = dist[i * width + (j - 1)] + 1;
            dist[i * width + j] = diagonal.min(delete).min(insert);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = dist[i * width + j];
        if i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] && dist[(i - 1) * width + (j - 1)] == here {
            ops.push(EditOp::Match);
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && dist[(i - 1) * width + (j - 1)] + 1 == here {
            ops.push(EditOp::Substitute);
            i -= 1;
            j -= 1;
        } else if i > 0 && dist[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp::Delete);
            i -= 1;
        } else {
            ops.push(EditOp::Insert);
            j -= 1;
        }
    }
    ops.reverse();

    let mut matches = 0;
    let mut substitutions = 0;
    let mut deletions = 0;
    let mut insertions = 0;
    for op in &ops {
        match op {
            EditOp::Match => matches += 1,
            EditOp::Substitute => substitutions += 1,
            EditOp::Delete => deletions += 1,
            EditOp::Insert => insertions += 1,
        }
    }
    Alignment {
        matches,
        substitutions,
        deletions,
        insertions,
        ref_len: m,
        hyp_len: n,
        ops,
    }
}

/// What a rate measures, for labeling report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    /// Mixed error rate over Mandarin characters + English words.
    Mer,
    /// Character error rate (Mandarin side).
    Cer,
    /// Word error rate (English side).
    Wer,
    /// Phoneme error rate.
    Per,
}

/// An error rate with its integer numerator and denominator preserved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRate {
    pub kind: RateKind,
    /// Error operations charged to this rate.
    pub numerator: usize,
    /// Reference units this rate is normalized by.
    pub denominator: usize,
    /// `numerator / max(denominator, 1)`.
    pub rate: f64,
    /// Empty reference scored against a non-empty hypothesis: the rate is
    /// reported against a denominator clamped to 1 and should be read with
    /// suspicion.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
    /// No reference units and no errors for this bucket (e.g. English WER
    /// on a purely Mandarin corpus); the zero rate is vacuous.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub absent: bool,
}

impl ErrorRate {
    pub fn from_counts(kind: RateKind, numerator: usize, denominator: usize) -> Self {
        Self {
            kind,
            numerator,
            denominator,
            rate: numerator as f64 / denominator.max(1) as f64,
            degenerate: denominator == 0 && numerator > 0,
            absent: denominator == 0 && numerator == 0,
        }
    }

    /// The rate as a percentage.
    pub fn percent(&self) -> f64 {
        self.rate * 100.0
    }
}

/// Tokenized reference and hypothesis with their mixed-unit alignment.
#[derive(Debug, Clone)]
pub struct MixedAlignment {
    pub reference: TokenSequence,
    pub hypothesis: TokenSequence,
    pub alignment: Alignment,
}

/// Prepares both texts identically (strip timestamps, normalize, tokenize)
/// and aligns them over mixed units.
pub fn align_texts(reference_text: &str, hypothesis_text: &str, prep: &TextPrep) -> MixedAlignment {
    let reference = prep.prepare(reference_text);
    let hypothesis = prep.prepare(hypothesis_text);
    let alignment = align(&reference.tokens, &hypothesis.tokens);
    MixedAlignment {
        reference,
        hypothesis,
        alignment,
    }
}

/// Per-language decomposition of a mixed alignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanguageRates {
    /// Mandarin character error rate.
    pub mandarin_cer: ErrorRate,
    /// English word error rate (digit runs count as English words).
    pub english_wer: ErrorRate,
}

impl MixedAlignment {
    /// Mixed error rate: all error operations over all reference units.
    pub fn mer(&self) -> ErrorRate {
        ErrorRate::from_counts(RateKind::Mer, self.alignment.distance(), self.alignment.ref_len)
    }

    /// Splits the mixed alignment by language. Matches, substitutions and
    /// deletions are charged to the reference unit's language, insertions
    /// to the inserted hypothesis unit's language, so every operation is
    /// attributed exactly once and the per-language numerators sum to the
    /// mixed distance.
    pub fn language_rates(&self) -> LanguageRates {
        let mut errors = [0usize; 2]; // [mandarin, english]
        let mut ref_units = [0usize; 2];
        let idx = |lang: Lang| match lang {
            Lang::Mandarin => 0,
            Lang::English => 1,
        };
        let mut r = 0usize;
        let mut h = 0usize;
        for op in &self.alignment.ops {
            match op {
                EditOp::Match => {
                    ref_units[idx(self.reference.tokens[r].kind.lang())] += 1;
                    r += 1;
                    h += 1;
                }
                EditOp::Substitute => {
                    let lang = self.reference.tokens[r].kind.lang();
                    ref_units[idx(lang)] += 1;
                    errors[idx(lang)] += 1;
                    r += 1;
                    h += 1;
                }
                EditOp::Delete => {
                    let lang = self.reference.tokens[r].kind.lang();
                    ref_units[idx(lang)] += 1;
                    errors[idx(lang)] += 1;
                    r += 1;
                }
                EditOp::Insert => {
                    errors[idx(self.hypothesis.tokens[h].kind.lang())] += 1;
                    h += 1;
                }
            }
        }
        LanguageRates {
            mandarin_cer: ErrorRate::from_counts(RateKind::Cer, errors[0], ref_units[0]),
            english_wer: ErrorRate::from_counts(RateKind::Wer, errors[1], ref_units[1]),
        }
    }
}

/// Mixed error rate between two transcripts.
pub fn mer(reference_text: &str, hypothesis_text: &str, prep: &TextPrep) -> ErrorRate {
    align_texts(reference_text, hypothesis_text, prep).mer()
}

/// Per-language error rates between two transcripts.
pub fn per_language_rates(reference_text: &str, hypothesis_text: &str, prep: &TextPrep) -> LanguageRates {
    align_texts(reference_text, hypothesis_text, prep).language_rates()
}

/// Phoneme error rate between two phoneme sequences.
pub fn per(reference: &PhonemeSequence, hypothesis: &PhonemeSequence) -> ErrorRate {
    let alignment = align(&reference.phonemes, &hypothesis.phonemes);
    ErrorRate::from_counts(RateKind::Per, alignment.distance(), alignment.ref_len)
}

/// Errors from runtime arithmetic.
#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("audio_s must be positive, got {0}")]
    NonPositiveAudio(f64),
    #[error("processing_s must be non-negative, got {0}")]
    NegativeProcessing(f64),
    #[error("no timing records")]
    EmptyTimings,
    #[error("cannot compute speed-up against a zero RTF")]
    ZeroRtf,
}

/// One timed decoding run of some system over some amount of audio.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingRecord {
    /// Which system produced this run (e.g. "baseline", "distilled").
    pub system_label: String,
    pub audio_s: f64,
    pub processing_s: f64,
}

/// Real-time factor of one run: processing seconds per audio second.
pub fn rtf(record: &TimingRecord) -> Result<f64, MetricsError> {
    if !(record.audio_s > 0.0) {
        return Err(MetricsError::NonPositiveAudio(record.audio_s));
    }
    if record.processing_s < 0.0 {
        return Err(MetricsError::NegativeProcessing(record.processing_s));
    }
    Ok(record.processing_s / record.audio_s)
}

/// Mean RTF over a set of runs (averaged per run, not duration-pooled).
pub fn mean_rtf(records: &[TimingRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyTimings);
    }
    let mut sum = 0.0;
    for record in records {
        sum += rtf(record)?;
    }
    Ok(sum / records.len() as f64)
}

/// How many times faster `contender` runs than `baseline`
/// (`baseline_rtf / contender_rtf`).
pub fn speedup(baseline_rtf: f64, contender_rtf: f64) -> Result<f64, MetricsError> {
    if contender_rtf <= 0.0 {
        return Err(MetricsError::ZeroRtf);
    }
    Ok(baseline_rtf / contender_rtf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::TextPrep;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn align_identical() {
        let a = align(&chars("abc"), &chars("abc"));
        assert_eq!(a.distance(), 0);
        assert_eq!(a.matches, 3);
        assert_eq!(a.ops, vec![EditOp::Match; 3]);
    }

    #[test]
    fn align_classic_case() {
        // kitten → sitting: 2 substitutions + 1 insertion.
        let a = align(&chars("kitten"), &chars("sitting"));
        assert_eq!(a.distance(), 3);
        assert_eq!(a.substitutions, 2);
        assert_eq!(a.insertions, 1);
        assert_eq!(a.deletions, 0);
    }

    #[test]
    fn align_empty_sides() {
        let a = align(&chars("abc"), &chars(""));
        assert_eq!(a.deletions, 3);
        assert_eq!(a.distance(), 3);
        let b = align(&chars(""), &chars("ab"));
        assert_eq!(b.insertions, 2);
        assert_eq!(b.distance(), 2);
        let c = align::<char>(&[], &[]);
        assert_eq!(c.distance(), 0);
        assert!(c.ops.is_empty());
    }

    #[test]
    fn align_counts_are_consistent() {
        let a = align(&chars("abcdef"), &chars("azced"));
        assert_eq!(a.matches + a.substitutions + a.deletions, a.ref_len);
        assert_eq!(a.matches + a.substitutions + a.insertions, a.hyp_len);
        assert_eq!(a.ops.len(), a.matches + a.substitutions + a.deletions + a.insertions);
    }

    #[test]
    fn backtrace_tie_break_is_pinned() {
        // "ab" vs "ba" admits both sub+sub and ins+match+del at cost 2;
        // the backtrace prefers the diagonal, so sub+sub wins. Pin the
        // exact ops so any change to the tie-break order is caught.
        let a = align(&chars("ab"), &chars("ba"));
        assert_eq!(a.distance(), 2);
        assert_eq!(a.ops, vec![EditOp::Substitute, EditOp::Substitute]);
        // And a genuine match is taken when it is on a minimal path.
        let b = align(&chars("ab"), &chars("b"));
        assert_eq!(b.ops, vec![EditOp::Delete, EditOp::Match]);
    }

    #[test]
    fn mer_mandarin_worked_example() {
        // ref 他今天去了学校 (7 chars) vs hyp 她今天去学校: 1 sub + 1 del.
        let prep = TextPrep::default();
        let rate = mer("他今天去了学校", "她今天去学校", &prep);
        assert_eq!(rate.numerator, 2);
        assert_eq!(rate.denominator, 7);
        assert!((rate.rate - 2.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn mer_mixed_units() {
        // ref: 我 用 python 寫 code (5 units), hyp drops "code" and breaks 寫.
        let prep = TextPrep::default();
        let rate = mer("我用 python 寫 code", "我用 python 学", &prep);
        // 寫→学 substitution + code deletion = 2 errors over 5 units.
        assert_eq!(rate.numerator, 2);
        assert_eq!(rate.denominator, 5);
    }

    #[test]
    fn mer_is_normalization_insensitive() {
        let prep = TextPrep::default();
        let rate = mer("Hello 世界", "<|0.00|>hello， 世界!<|2.00|>", &prep);
        assert_eq!(rate.numerator, 0);
        assert_eq!(rate.rate, 0.0);
    }

    #[test]
    fn mer_empty_reference_is_degenerate() {
        let prep = TextPrep::default();
        let rate = mer("", "hello world", &prep);
        assert!(rate.degenerate);
        assert_eq!(rate.denominator, 0);
        assert_eq!(rate.rate, 2.0); // clamped denominator of 1
    }

    #[test]
    fn mer_both_empty_is_absent_zero() {
        let prep = TextPrep::default();
        let rate = mer("", "", &prep);
        assert_eq!(rate.rate, 0.0);
        assert!(!rate.degenerate);
        assert!(rate.absent);
    }

    #[test]
    fn language_rates_split_and_sum() {
        let prep = TextPrep::default();
        let mixed = align_texts("我用 python 寫 code", "我 java 寫 code fast", &prep);
        let rates = mixed.language_rates();
        // 用 deleted (Mandarin); python→java sub + "fast" insert (English).
        assert_eq!(rates.mandarin_cer.numerator, 1);
        assert_eq!(rates.mandarin_cer.denominator, 3);
        assert_eq!(rates.english_wer.numerator, 2);
        assert_eq!(rates.english_wer.denominator, 2);
        assert_eq!(
            rates.mandarin_cer.numerator + rates.english_wer.numerator,
            mixed.alignment.distance()
        );
        assert_eq!(
            rates.mandarin_cer.denominator + rates.english_wer.denominator,
            mixed.alignment.ref_len
        );
    }

    #[test]
    fn language_rates_absent_bucket() {
        let prep = TextPrep::default();
        let rates = per_language_rates("你好", "你好", &prep);
        assert!(rates.english_wer.absent);
        assert_eq!(rates.english_wer.rate, 0.0);
        assert!(!rates.mandarin_cer.absent);
    }

    #[test]
    fn rtf_and_speedup() {
        let baseline = TimingRecord {
            system_label: "baseline".into(),
            audio_s: 100.0,
            processing_s: 50.0,
        };
        let fast = TimingRecord {
            system_label: "distilled".into(),
            audio_s: 100.0,
            processing_s: 10.0,
        };
        let b = rtf(&baseline).unwrap();
        let f = rtf(&fast).unwrap();
        assert!((b - 0.5).abs() < 1e-15);
        assert!((f - 0.1).abs() < 1e-15);
        assert!((speedup(b, f).unwrap() - 5.0).abs() < 1e-12);
        assert!(speedup(b, 0.0).is_err());
    }

    #[test]
    fn mean_rtf_averages_per_run() {
        let runs = vec![
            TimingRecord {
                system_label: "s".into(),
                audio_s: 10.0,
                processing_s: 1.0,
            },
            TimingRecord {
                system_label: "s".into(),
                audio_s: 100.0,
                processing_s: 30.0,
            },
        ];
        assert!((mean_rtf(&runs).unwrap() - 0.2).abs() < 1e-15);
        assert!(mean_rtf(&[]).is_err());
    }

    #[test]
    fn rtf_rejects_bad_inputs() {
        let zero_audio = TimingRecord {
            system_label: "s".into(),
            audio_s: 0.0,
            processing_s: 1.0,
        };
        assert!(rtf(&zero_audio).is_err());
        let negative = TimingRecord {
            system_label: "s".into(),
            audio_s: 1.0,
            processing_s: -0.1,
        };
        assert!(rtf(&negative).is_err());
    }
}
