//! Chunk filtering by teacher/validator agreement.
//!
//! Five methods, from cheapest to most selective:
//!
//! * `full_data` — keep everything (baseline).
//! * `trivial` — drop chunks whose teacher transcript trips the n-gram
//!   repetition detector. Needs no second transcript.
//! * `direct_mer` — drop chunks where the mixed error rate between teacher
//!   and validator transcripts exceeds `alpha`.
//! * `direct_per` — same, but compared at the phoneme level, which forgives
//!   homophone spelling disagreements between the two models.
//! * `composite` — phoneme disagreement gated by the repetition detector on
//!   both sides: a looping teacher is always dropped, a looping validator
//!   is never trusted to veto the teacher, and otherwise the phoneme
//!   disagreement decides.
//!
//! A chunk is kept when its disagreement score is at most `alpha`
//! (boundary inclusive). Every chunk gets an audit [`FilterDecision`]
//! recording the score and indicator values that produced the verdict.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hallucination::{detect, NgramConfig};
use crate::manifest::{Chunk, CorpusStats};
use crate::metrics;
use crate::phonemizer::{phonemize, Lexicon, PhonemizeConfig};
use crate::textnorm::TextPrep;

/// Filtering strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMethod {
    FullData,
    Trivial,
    DirectMer,
    DirectPer,
    Composite,
}

impl FilterMethod {
    pub const ALL: [FilterMethod; 5] = [
        FilterMethod::FullData,
        FilterMethod::Trivial,
        FilterMethod::DirectMer,
        FilterMethod::DirectPer,
        FilterMethod::Composite,
    ];

    /// Methods that compare against the validator transcript.
    pub fn needs_validator(self) -> bool {
        matches!(
            self,
            FilterMethod::DirectMer | FilterMethod::DirectPer | FilterMethod::Composite
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FilterMethod::FullData => "full_data",
            FilterMethod::Trivial => "trivial",
            FilterMethod::DirectMer => "direct_mer",
            FilterMethod::DirectPer => "direct_per",
            FilterMethod::Composite => "composite",
        }
    }
}

impl fmt::Display for FilterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown filter method `{s}` (expected one of: {})",
                    FilterMethod::ALL.map(|m| m.as_str()).join(", ")
                )
            })
    }
}

/// Filter settings: the strategy and its agreement threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub method: FilterMethod,
    /// Keep chunks with disagreement <= alpha. Must lie in [0, 1): the
    /// composite score pins hallucinated teachers to exactly 1.0 and those
    /// must stay removable.
    pub alpha: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            method: FilterMethod::Composite,
            alpha: 0.4,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !self.alpha.is_finite() || !(0.0..1.0).contains(&self.alpha) {
            return Err(FilterError::InvalidConfig(format!(
                "alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Shared immutable inputs for scoring: text preparation, lexicon and
/// detector settings.
#[derive(Clone, Copy)]
pub struct FilterContext<'a> {
    pub prep: &'a TextPrep,
    pub lexicon: &'a Lexicon,
    pub ngram: &'a NgramConfig,
    pub phonemize: &'a PhonemizeConfig,
}

/// Errors from filtering.
#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("chunk `{chunk_id}`: method `{method}` requires validator_text")]
    MissingValidator {
        chunk_id: String,
        method: FilterMethod,
    },
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
}

fn validator_text<'c>(
    chunk: &'c Chunk,
    method: FilterMethod,
) -> Result<&'c str, FilterError> {
    chunk
        .validator_text
        .as_deref()
        .ok_or_else(|| FilterError::MissingValidator {
            chunk_id: chunk.id.clone(),
            method,
        })
}

/// Surface disagreement: mixed error rate with the teacher transcript as
/// reference and the validator transcript as hypothesis.
pub fn delta_mer(chunk: &Chunk, ctx: &FilterContext) -> Result<f64, FilterError> {
    let validator = validator_text(chunk, FilterMethod::DirectMer)?;
    Ok(metrics::mer(&chunk.teacher_text, validator, ctx.prep).rate)
}

/// Phoneme disagreement: phoneme error rate between the expanded teacher
/// and validator transcripts.
pub fn delta_per(chunk: &Chunk, ctx: &FilterContext) -> Result<f64, FilterError> {
    let validator = validator_text(chunk, FilterMethod::DirectPer)?;
    let teacher_ph = phonemize(&ctx.prep.prepare(&chunk.teacher_text), ctx.lexicon, ctx.phonemize);
    let validator_ph = phonemize(&ctx.prep.prepare(validator), ctx.lexicon, ctx.phonemize);
    Ok(metrics::per(&teacher_ph, &validator_ph).rate)
}

/// Composite disagreement score with its indicator inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositeDelta {
    pub delta: f64,
    /// Repetition indicator on the teacher transcript.
    pub h_teacher: bool,
    /// Repetition indicator on the validator transcript.
    pub h_validator: bool,
}

/// Composite score: `max(h_teacher, min(1 - h_validator, delta_per))` with
/// the indicators as 0/1.
///
/// Evaluated by cases so the reduction is exact: a looping teacher scores
/// 1.0; a looping validator scores 0.0 (its transcript cannot veto the
/// teacher); otherwise the score *is* the phoneme disagreement, bit for
/// bit — the closed formula would clamp scores above 1, the case form
/// does not, and the two agree on every keep/remove decision for any
/// alpha below 1.
pub fn delta_composite(chunk: &Chunk, ctx: &FilterContext) -> Result<CompositeDelta, FilterError> {
    let validator = validator_text(chunk, FilterMethod::Composite)?;
    let teacher_tokens = ctx.prep.prepare(&chunk.teacher_text);
    let validator_tokens = ctx.prep.prepare(validator);
    let h_teacher = detect(&teacher_tokens, ctx.ngram);
    let h_validator = detect(&validator_tokens, ctx.ngram);
    let delta = if h_teacher {
        1.0
    } else if h_validator {
        0.0
    } else {
        let teacher_ph = phonemize(&teacher_tokens, ctx.lexicon, ctx.phonemize);
        let validator_ph = phonemize(&validator_tokens, ctx.lexicon, ctx.phonemize);
        metrics::per(&teacher_ph, &validator_ph).rate
    };
    Ok(CompositeDelta {
        delta,
        h_teacher,
        h_validator,
    })
}

/// Everything a method computed about one chunk, before thresholding.
/// [`run_filter`] and the threshold sweep in [`crate::analysis`] both
/// threshold these same values, so a sweep point can never disagree with a
/// direct filter run at the same alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment {
    pub delta: Option<f64>,
    pub h_teacher: Option<bool>,
    pub h_validator: Option<bool>,
}

/// Scores one chunk under a method without applying a threshold.
pub fn assess(chunk: &Chunk, method: FilterMethod, ctx: &FilterContext) -> Result<Assessment, FilterError> {
    Ok(match method {
        FilterMethod::FullData => Assessment {
            delta: None,
            h_teacher: None,
            h_validator: None,
        },
        FilterMethod::Trivial => Assessment {
            delta: None,
            h_teacher: Some(detect(&ctx.prep.prepare(&chunk.teacher_text), ctx.ngram)),
            h_validator: None,
        },
        FilterMethod::DirectMer => Assessment {
            delta: Some(delta_mer(chunk, ctx)?),
            h_teacher: None,
            h_validator: None,
        },
        FilterMethod::DirectPer => Assessment {
            delta: Some(delta_per(chunk, ctx)?),
            h_teacher: None,
            h_validator: None,
        },
        FilterMethod::Composite => {
            let c = delta_composite(chunk, ctx)?;
            Assessment {
                delta: Some(c.delta),
                h_teacher: Some(c.h_teacher),
                h_validator: Some(c.h_validator),
            }
        }
    })
}

/// Thresholds an assessment: keep on disagreement <= alpha (or, for
/// threshold-free methods, on the method's own verdict).
pub fn decide(assessment: &Assessment, method: FilterMethod, alpha: f64) -> bool {
    match method {
        FilterMethod::FullData => true,
        FilterMethod::Trivial => !assessment.h_teacher.expect("trivial records h_teacher"),
        _ => assessment.delta.expect("scored methods record delta") <= alpha,
    }
}

/// Audit record for one chunk's verdict, one JSONL line per chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDecision {
    pub chunk_id: String,
    pub method: FilterMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_teacher: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_validator: Option<u8>,
    pub kept: bool,
}

/// A completed filter pass.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Kept chunks, in input order: always a subsequence of the input.
    pub kept: Vec<Chunk>,
    /// One decision per input chunk, in input order.
    pub decisions: Vec<FilterDecision>,
    pub stats: CorpusStats,
}

/// Filters a corpus. Chunks are scored independently (in parallel on the
/// current rayon pool) and results assembled in input order, so the output
/// is identical for any worker count.
///
/// Methods that need the validator transcript fail fast — before any
/// scoring — on the first chunk missing it.
pub fn run_filter(
    chunks: &[Chunk],
    cfg: &FilterConfig,
    ctx: &FilterContext,
) -> Result<FilterOutcome, FilterError> {
    cfg.validate()?;
    ctx.ngram
        .validate()
        .map_err(FilterError::InvalidConfig)?;
    if cfg.method.needs_validator() {
        if let Some(chunk) = chunks.iter().find(|c| c.validator_text.is_none()) {
            return Err(FilterError::MissingValidator {
                chunk_id: chunk.id.clone(),
                method: cfg.method,
            });
        }
    }

    let assessments: Vec<Assessment> = chunks
        .par_iter()
        .map(|chunk| assess(chunk, cfg.method, ctx))
        .collect::<Result<_, _>>()?;

    let mut decisions = Vec::with_capacity(chunks.len());
    let mut mask = Vec::with_capacity(chunks.len());
    for (chunk, assessment) in chunks.iter().zip(&assessments) {
        let kept = decide(assessment, cfg.method, cfg.alpha);
        decisions.push(FilterDecision {
            chunk_id: chunk.id.clone(),
            method: cfg.method,
            delta: assessment.delta,
            h_teacher: assessment.h_teacher.map(u8::from),
            h_validator: assessment.h_validator.map(u8::from),
            kept,
        });
        mask.push(kept);
    }
    let stats = CorpusStats::from_mask(chunks, &mask);
    let kept = chunks
        .iter()
        .zip(&mask)
        .filter(|(_, &keep)| keep)
        .map(|(c, _)| c.clone())
        .collect();
    Ok(FilterOutcome {
        kept,
        decisions,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::write_jsonl;

    fn chunk(id: &str, teacher: &str, validator: Option<&str>) -> Chunk {
        Chunk {
            id: id.into(),
            recording_id: "r".into(),
            start_s: 0.0,
            end_s: 10.0,
            duration_s: 10.0,
            teacher_text: teacher.into(),
            validator_text: validator.map(Into::into),
            reference_text: None,
            oversize: false,
        }
    }

    struct Ctx {
        prep: TextPrep,
        lexicon: Lexicon,
        ngram: NgramConfig,
        phonemize: PhonemizeConfig,
    }

    impl Ctx {
        fn new() -> Self {
            Self {
                prep: TextPrep::default(),
                lexicon: Lexicon::builtin(),
                ngram: NgramConfig::default(),
                phonemize: PhonemizeConfig::default(),
            }
        }

        fn get(&self) -> FilterContext<'_> {
            FilterContext {
                prep: &self.prep,
                lexicon: &self.lexicon,
                ngram: &self.ngram,
                phonemize: &self.phonemize,
            }
        }
    }

    const LOOPED: &str = "我 说 你 好 我 说 你 好 我 说 你 好";

    #[test]
    fn method_names_round_trip() {
        for m in FilterMethod::ALL {
            assert_eq!(m.as_str().parse::<FilterMethod>().unwrap(), m);
        }
        assert!("nonsense".parse::<FilterMethod>().is_err());
    }

    #[test]
    fn delta_mer_teacher_vs_validator() {
        let ctx = Ctx::new();
        let c = chunk("c", "我 用 python", Some("我 用 java"));
        let d = delta_mer(&c, &ctx.get()).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn delta_per_forgives_homophones() {
        let ctx = Ctx::new();
        // 他/她 and 在/再 are homophones: surface MER sees 2 errors,
        // phoneme PER sees none.
        let c = chunk("c", "他 在 学 校", Some("她 再 学 校"));
        assert!(delta_mer(&c, &ctx.get()).unwrap() > 0.4);
        assert_eq!(delta_per(&c, &ctx.get()).unwrap(), 0.0);
    }

    #[test]
    fn composite_truth_table() {
        let ctx = Ctx::new();
        let clean = "我 想 看 海";
        // Teacher loops → 1.0 regardless of validator.
        let c1 = delta_composite(&chunk("a", LOOPED, Some(clean)), &ctx.get()).unwrap();
        assert_eq!((c1.delta, c1.h_teacher, c1.h_validator), (1.0, true, false));
        // Validator loops (teacher clean) → 0.0.
        let c2 = delta_composite(&chunk("b", clean, Some(LOOPED)), &ctx.get()).unwrap();
        assert_eq!((c2.delta, c2.h_teacher, c2.h_validator), (0.0, false, true));
        // Both loop → teacher wins: 1.0.
        let c3 = delta_composite(&chunk("c", LOOPED, Some(LOOPED)), &ctx.get()).unwrap();
        assert_eq!((c3.delta, c3.h_teacher, c3.h_validator), (1.0, true, true));
        // Neither loops → exactly delta_per.
        let c4 = chunk("d", "我 想 看 海", Some("我 想 看 山"));
        let composite = delta_composite(&c4, &ctx.get()).unwrap();
        let per = delta_per(&c4, &ctx.get()).unwrap();
        assert!(!composite.h_teacher && !composite.h_validator);
        assert_eq!(composite.delta.to_bits(), per.to_bits());
    }

    #[test]
    fn boundary_delta_equal_alpha_is_kept() {
        let ctx = Ctx::new();
        // 5 units, 2 substitutions → delta exactly 2/5 = 0.4.
        let c = chunk("c", "我 想 看 海 天", Some("我 想 看 山 年"));
        let d = delta_mer(&c, &ctx.get()).unwrap();
        assert_eq!(d, 0.4);
        let outcome = run_filter(
            &[c.clone()],
            &FilterConfig {
                method: FilterMethod::DirectMer,
                alpha: 0.4,
            },
            &ctx.get(),
        )
        .unwrap();
        assert!(outcome.decisions[0].kept);
        let tighter = run_filter(
            &[c],
            &FilterConfig {
                method: FilterMethod::DirectMer,
                alpha: 0.39,
            },
            &ctx.get(),
        )
        .unwrap();
        assert!(!tighter.decisions[0].kept);
    }

    #[test]
    fn full_data_keeps_everything_without_scores() {
        let ctx = Ctx::new();
        let chunks = vec![chunk("a", LOOPED, None), chunk("b", "好", None)];
        let outcome = run_filter(
            &chunks,
            &FilterConfig {
                method: FilterMethod::FullData,
                alpha: 0.4,
            },
            &ctx.get(),
        )
        .unwrap();
        assert_eq!(outcome.kept.len(), 2);
        assert!(outcome.decisions.iter().all(|d| d.kept && d.delta.is_none()));
        assert_eq!(outcome.stats.retention_rate, 1.0);
    }

    #[test]
    fn trivial_does_not_need_validator() {
        let ctx = Ctx::new();
        let chunks = vec![chunk("a", LOOPED, None), chunk("b", "我 想 看 海", None)];
        let outcome = run_filter(
            &chunks,
            &FilterConfig {
                method: FilterMethod::Trivial,
                alpha: 0.4,
            },
            &ctx.get(),
        )
        .unwrap();
        assert_eq!(outcome.kept.len(), 1);
        assert_eq!(outcome.kept[0].id, "b");
        assert_eq!(outcome.decisions[0].h_teacher, Some(1));
        assert_eq!(outcome.decisions[0].delta, None);
    }

    #[test]
    fn missing_validator_fails_fast() {
        let ctx = Ctx::new();
        let chunks = vec![
            chunk("a", "好", Some("好")),
            chunk("b", "好", None),
            chunk("c", "好", Some("好")),
        ];
        for method in [FilterMethod::DirectMer, FilterMethod::DirectPer, FilterMethod::Composite] {
            let err = run_filter(
                &chunks,
                &FilterConfig { method, alpha: 0.4 },
                &ctx.get(),
            )
            .unwrap_err();
            match err {
                FilterError::MissingValidator { chunk_id, .. } => assert_eq!(chunk_id, "b"),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn kept_is_ordered_subsequence() {
        let ctx = Ctx::new();
        let chunks: Vec<Chunk> = (0..20)
            .map(|i| {
                let teacher = if i % 3 == 0 { LOOPED } else { "我 想 看 海" };
                chunk(&format!("c{i:02}"), teacher, Some("我 想 看 海"))
            })
            .collect();
        let outcome = run_filter(
            &chunks,
            &FilterConfig {
                method: FilterMethod::Composite,
                alpha: 0.4,
            },
            &ctx.get(),
        )
        .unwrap();
        let input_ids: Vec<&str> = chunks.iter().map(|c| c.id.as_str()).collect();
        let kept_ids: Vec<&str> = outcome.kept.iter().map(|c| c.id.as_str()).collect();
        let mut cursor = input_ids.iter();
        for id in &kept_ids {
            assert!(cursor.any(|x| x == id), "kept ids not a subsequence");
        }
        assert_eq!(outcome.decisions.len(), chunks.len());
    }

    #[test]
    fn alpha_outside_range_is_rejected() {
        let ctx = Ctx::new();
        for alpha in [-0.1, 1.0, 1.5, f64::NAN] {
            let err = run_filter(
                &[],
                &FilterConfig {
                    method: FilterMethod::DirectMer,
                    alpha,
                },
                &ctx.get(),
            )
            .unwrap_err();
            assert!(matches!(err, FilterError::InvalidConfig(_)), "alpha {alpha} accepted");
        }
    }

    #[test]
    fn decision_serialization_shape() {
        let d = FilterDecision {
            chunk_id: "c0".into(),
            method: FilterMethod::Composite,
            delta: Some(0.25),
            h_teacher: Some(0),
            h_validator: Some(1),
            kept: true,
        };
        let mut buf = Vec::new();
        write_jsonl(&[d], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"chunk_id\":\"c0\",\"method\":\"composite\",\"delta\":0.25,\"h_teacher\":0,\"h_validator\":1,\"kept\":true}\n"
        );
        let t = FilterDecision {
            chunk_id: "c1".into(),
            method: FilterMethod::FullData,
            delta: None,
            h_teacher: None,
            h_validator: None,
            kept: true,
        };
        let mut buf = Vec::new();
        write_jsonl(&[t], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"chunk_id\":\"c1\",\"method\":\"full_data\",\"kept\":true}\n"
        );
    }
}
