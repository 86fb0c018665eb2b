//! Validator quality analysis: how good is a filter at removing chunks
//! whose teacher transcript is genuinely wrong?
//!
//! A chunk is labeled *high-MER* when the mixed error rate of its teacher
//! transcript against the human reference is strictly above a threshold
//! (default 0.4). Sweeping the filter across a grid of alpha values then
//! yields, per alpha, the recall of high-MER chunks (fraction of them
//! removed) and the corpus retention. Two summary numbers follow:
//!
//! * **max recall** — best recall among alphas that keep more than half
//!   the corpus (by chunk count); aggressive settings that gut the corpus
//!   are not interesting.
//! * **avg recall** — mean recall across the whole grid, a
//!   threshold-robustness summary.

use serde::{Deserialize, Serialize};

use crate::filter::{assess, decide, FilterContext, FilterError, FilterMethod};
use crate::manifest::Chunk;
use crate::metrics;
use crate::textnorm::TextPrep;

/// Sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Alpha grid for the sweep.
    pub alphas: Vec<f64>,
    /// Teacher-vs-reference MER above which a chunk counts as high-MER.
    pub high_mer_threshold: f64,
    /// A sweep point must keep more than this fraction of chunks for its
    /// recall to count toward max recall.
    pub min_count_retention: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alphas: (1..=9).map(|i| i as f64 / 10.0).collect(),
            high_mer_threshold: 0.4,
            min_count_retention: 0.5,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.alphas.is_empty() {
            return Err(AnalysisError::InvalidConfig("empty alpha grid".into()));
        }
        for &a in &self.alphas {
            if !a.is_finite() || !(0.0..1.0).contains(&a) {
                return Err(AnalysisError::InvalidConfig(format!(
                    "alpha {a} outside [0, 1)"
                )));
            }
        }
        if !self.high_mer_threshold.is_finite() || !(0.0..1.0).contains(&self.high_mer_threshold) {
            return Err(AnalysisError::InvalidConfig(format!(
                "high_mer_threshold {} outside [0, 1)",
                self.high_mer_threshold
            )));
        }
        if !self.min_count_retention.is_finite()
            || !(0.0..1.0).contains(&self.min_count_retention)
        {
            return Err(AnalysisError::InvalidConfig(format!(
                "min_count_retention {} outside [0, 1)",
                self.min_count_retention
            )));
        }
        Ok(())
    }
}

/// Errors from analysis.
#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("cannot analyze an empty corpus")]
    EmptyCorpus,
    #[error("chunk `{chunk_id}`: high-MER labeling requires reference_text")]
    MissingReference { chunk_id: String },
    #[error("invalid analysis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Labels each chunk: true when MER(reference, teacher) is strictly above
/// `threshold`. Every chunk must carry a reference transcript.
pub fn label_high_mer(
    chunks: &[Chunk],
    threshold: f64,
    prep: &TextPrep,
) -> Result<Vec<bool>, AnalysisError> {
    chunks
        .iter()
        .map(|chunk| {
            let reference =
                chunk
                    .reference_text
                    .as_deref()
                    .ok_or_else(|| AnalysisError::MissingReference {
                        chunk_id: chunk.id.clone(),
                    })?;
            Ok(metrics::mer(reference, &chunk.teacher_text, prep).rate > threshold)
        })
        .collect()
}

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub kept_chunks: usize,
    /// Kept fraction by chunk count (the feasibility criterion).
    pub count_retention: f64,
    /// Kept fraction by audio duration.
    pub duration_retention: f64,
    /// High-MER chunks this alpha removed.
    pub high_mer_removed: usize,
    /// `high_mer_removed / high_mer_total`; 1.0 when there is nothing to
    /// remove (see `vacuous`).
    pub recall: f64,
    /// True when the corpus contains no high-MER chunks at all, making the
    /// recall value meaningless.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub vacuous: bool,
}

/// Full sweep result for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub method: FilterMethod,
    pub high_mer_threshold: f64,
    pub total_chunks: usize,
    /// Chunks labeled high-MER against the reference.
    pub high_mer_total: usize,
    pub points: Vec<AlphaPoint>,
    /// Best recall among feasible points (count retention above the
    /// configured minimum); absent when no point is feasible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_recall: Option<f64>,
    /// The alpha achieving max recall (lowest such alpha on ties).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_recall_alpha: Option<f64>,
    /// Mean recall across the entire grid, feasible or not.
    pub avg_recall: f64,
}

/// Sweeps one filter method across the alpha grid.
///
/// Each chunk is scored once per method; every grid point then thresholds
/// those scores exactly as [`crate::filter::run_filter`] would, so a sweep
/// point's kept set equals an independent filter run at that alpha.
pub fn recall_sweep(
    chunks: &[Chunk],
    method: FilterMethod,
    cfg: &AnalysisConfig,
    ctx: &FilterContext,
) -> Result<RecallReport, AnalysisError> {
    cfg.validate()?;
    if chunks.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let labels = label_high_mer(chunks, cfg.high_mer_threshold, ctx.prep)?;
    let high_mer_total = labels.iter().filter(|&&l| l).count();

    if method.needs_validator() {
        if let Some(chunk) = chunks.iter().find(|c| c.validator_text.is_none()) {
            return Err(FilterError::MissingValidator {
                chunk_id: chunk.id.clone(),
                method,
            }
            .into());
        }
    }
    let assessments = chunks
        .iter()
        .map(|chunk| assess(chunk, method, ctx))
        .collect::<Result<Vec<_>, _>>()?;

    let total_duration: f64 = chunks.iter().map(|c| c.duration_s).sum();
    let mut points = Vec::with_capacity(cfg.alphas.len());
    for &alpha in &cfg.alphas {
        let mut kept_chunks = 0;
        let mut kept_duration = 0.0;
        let mut high_mer_removed = 0;
        for ((chunk, assessment), &high) in chunks.iter().zip(&assessments).zip(&labels) {
            if decide(assessment, method, alpha) {
                kept_chunks += 1;
                kept_duration += chunk.duration_s;
            } else if high {
                high_mer_removed += 1;
            }
        }
        let vacuous = high_mer_total == 0;
        points.push(AlphaPoint {
            alpha,
            kept_chunks,
            count_retention: kept_chunks as f64 / chunks.len() as f64,
            duration_retention: if total_duration > 0.0 {
                kept_duration / total_duration
            } else {
                1.0
            },
            high_mer_removed,
            recall: if vacuous {
                1.0
            } else {
                high_mer_removed as f64 / high_mer_total as f64
            },
            vacuous,
        });
    }

    let mut max_recall: Option<f64> = None;
    let mut max_recall_alpha: Option<f64> = None;
    for point in &points {
        if point.count_retention > cfg.min_count_retention
            && max_recall.map_or(true, |best| point.recall > best)
        {
            max_recall = Some(point.recall);
            max_recall_alpha = Some(point.alpha);
        }
    }
    let avg_recall = points.iter().map(|p| p.recall).sum::<f64>() / points.len() as f64;

    Ok(RecallReport {
        method,
        high_mer_threshold: cfg.high_mer_threshold,
        total_chunks: chunks.len(),
        high_mer_total,
        points,
        max_recall,
        max_recall_alpha,
        avg_recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{run_filter, FilterConfig};
    use crate::hallucination::NgramConfig;
    use crate::phonemizer::{Lexicon, PhonemizeConfig};

    fn chunk(id: &str, teacher: &str, validator: &str, reference: &str) -> Chunk {
        Chunk {
            id: id.into(),
            recording_id: "r".into(),
            start_s: 0.0,
            end_s: 10.0,
            duration_s: 10.0,
            teacher_text: teacher.into(),
            validator_text: Some(validator.into()),
            reference_text: Some(reference.into()),
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

    /// Four clean chunks, two badly-transcribed ones the validator also
    /// disagrees with (delta 0.75), and nothing in between.
    fn corpus() -> Vec<Chunk> {
        let clean = "我 想 看 海";
        let mut chunks: Vec<Chunk> = (0..4)
            .map(|i| chunk(&format!("good{i}"), clean, clean, clean))
            .collect();
        for i in 0..2 {
            chunks.push(chunk(
                &format!("bad{i}"),
                "盘 蓝 绿 森", // teacher nonsense
                clean,
                clean,
            ));
        }
        chunks
    }

    #[test]
    fn labels_use_strict_inequality() {
        let prep = TextPrep::default();
        // MER exactly 0.4 (2 of 5) must NOT be labeled.
        let at = chunk("at", "我 想 看 海 天", "", "我 想 看 山 年");
        // Swap hypothesis/reference roles: reference is reference_text.
        let labels = label_high_mer(&[at], 0.4, &prep).unwrap();
        assert_eq!(labels, vec![false]);
        let over = chunk("over", "我 想 看 山 年 天", "", "我 想 看 海");
        let labels = label_high_mer(&[over], 0.4, &prep).unwrap();
        assert_eq!(labels, vec![true]);
    }

    #[test]
    fn missing_reference_is_an_error() {
        let prep = TextPrep::default();
        let mut c = chunk("c", "x", "x", "x");
        c.reference_text = None;
        let err = label_high_mer(&[c], 0.4, &prep).unwrap_err();
        assert!(matches!(err, AnalysisError::MissingReference { chunk_id } if chunk_id == "c"));
    }

    #[test]
    fn sweep_counts_removed_high_mer() {
        let ctx = Ctx::new();
        let cfg = AnalysisConfig::default();
        let report = recall_sweep(&corpus(), FilterMethod::DirectMer, &cfg, &ctx.get()).unwrap();
        assert_eq!(report.total_chunks, 6);
        assert_eq!(report.high_mer_total, 2);
        // delta for bad chunks is 1.0 > every alpha in the grid; clean
        // chunks have delta 0. So every point removes exactly the 2 bad
        // chunks: recall 1.0, retention 4/6.
        for p in &report.points {
            assert_eq!(p.high_mer_removed, 2);
            assert_eq!(p.recall, 1.0);
            assert!((p.count_retention - 4.0 / 6.0).abs() < 1e-12);
        }
        assert_eq!(report.max_recall, Some(1.0));
        assert_eq!(report.max_recall_alpha, Some(0.1)); // lowest alpha wins ties
        assert!((report.avg_recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_matches_independent_filter_runs() {
        let ctx = Ctx::new();
        let cfg = AnalysisConfig::default();
        let chunks = corpus();
        for method in [FilterMethod::DirectMer, FilterMethod::DirectPer, FilterMethod::Composite] {
            let report = recall_sweep(&chunks, method, &cfg, &ctx.get()).unwrap();
            for point in &report.points {
                let outcome = run_filter(
                    &chunks,
                    &FilterConfig {
                        method,
                        alpha: point.alpha,
                    },
                    &ctx.get(),
                )
                .unwrap();
                assert_eq!(outcome.kept.len(), point.kept_chunks, "{method} @ {}", point.alpha);
                assert_eq!(outcome.stats.count_retention_rate, point.count_retention);
            }
        }
    }

    #[test]
    fn infeasible_points_are_excluded_from_max() {
        let ctx = Ctx::new();
        // direct_mer with all-identical texts keeps everything; force a
        // corpus where low alphas remove too much: 5 chunks with delta 0.5
        // (removed at alpha<0.5) and 1 clean, 4 of the 5 high-MER.
        let clean = "我 想 看 海";
        let padded = "我 想 看 海 盘 蓝 绿 森"; // 4 extra units → delta 0.5
        let mut chunks = vec![chunk("good0", clean, clean, clean)];
        for i in 0..5 {
            let reference = if i == 4 { padded } else { clean };
            chunks.push(chunk(&format!("half{i}"), padded, clean, reference));
        }
        let cfg = AnalysisConfig {
            alphas: vec![0.2, 0.6],
            ..AnalysisConfig::default()
        };
        let report = recall_sweep(&chunks, FilterMethod::DirectMer, &cfg, &ctx.get()).unwrap();
        // alpha 0.2 removes 5 of 6 chunks → retention 1/6, infeasible
        // despite recall 1.0. alpha 0.6 keeps all → recall 0.
        assert_eq!(report.high_mer_total, 4);
        assert_eq!(report.points[0].recall, 1.0);
        assert!(report.points[0].count_retention < 0.5);
        assert_eq!(report.points[1].recall, 0.0);
        assert_eq!(report.max_recall, Some(0.0));
        assert_eq!(report.max_recall_alpha, Some(0.6));
        assert!((report.avg_recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_feasible_point_reports_absent_max() {
        let ctx = Ctx::new();
        let clean = "我 想 看 海";
        let bad = "盘 蓝 绿 森";
        let chunks: Vec<Chunk> = (0..4)
            .map(|i| chunk(&format!("bad{i}"), bad, clean, clean))
            .collect();
        let report = recall_sweep(&chunks, FilterMethod::DirectMer, &AnalysisConfig::default(), &ctx.get()).unwrap();
        // Everything is removed at every alpha: retention 0 everywhere.
        assert_eq!(report.max_recall, None);
        assert_eq!(report.max_recall_alpha, None);
        assert_eq!(report.avg_recall, 1.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let ctx = Ctx::new();
        let err = recall_sweep(&[], FilterMethod::DirectMer, &AnalysisConfig::default(), &ctx.get());
        assert!(matches!(err, Err(AnalysisError::EmptyCorpus)));
    }

    #[test]
    fn vacuous_recall_is_marked() {
        let ctx = Ctx::new();
        let clean = "我 想 看 海";
        let chunks = vec![chunk("good", clean, clean, clean)];
        let report = recall_sweep(&chunks, FilterMethod::DirectMer, &AnalysisConfig::default(), &ctx.get()).unwrap();
        assert_eq!(report.high_mer_total, 0);
        assert!(report.points.iter().all(|p| p.vacuous && p.recall == 1.0));
    }
}
