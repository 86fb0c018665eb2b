//! Implementations of the CLI subcommands.
//!
//! Every command follows the same shape: read and validate inputs, run
//! the corresponding library stage, write output files, print a short
//! summary table to stdout, and optionally write a machine-readable
//! report. Nothing here consults the clock or the host, so output files
//! and reports are byte-stable across reruns and worker counts.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use csfilter_core::analysis::{recall_sweep, RecallReport};
use csfilter_core::chunker::chunk_corpus;
use csfilter_core::filter::{run_filter, FilterContext, FilterMethod};
use csfilter_core::hallucination::{count_repetitive, detect_text, RepetitionCount, TextField};
use csfilter_core::kdloss::{evaluate_fixture, KdFixture};
use csfilter_core::manifest::{
    read_chunks, read_recordings, write_jsonl, Chunk, CorpusStats, Recording,
};
use csfilter_core::metrics::{self, ErrorRate, RateKind, TimingRecord};
use csfilter_core::synth::{generate, SynthSpec};

use crate::cli::{AnalyzeArgs, ChunkArgs, EvalArgs, FilterArgs, KdcheckArgs, SynthArgs};
use crate::config::PipelineConfig;
use crate::report::{digest_file, render_table, ReportEnvelope};

fn open_reader(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("opening `{}`", path.display())
    })?))
}

fn write_records<T: Serialize>(records: &[T], path: &Path) -> anyhow::Result<()> {
    let file =
        File::create(path).with_context(|| format!("creating `{}`", path.display()))?;
    write_jsonl(records, BufWriter::new(file))
        .with_context(|| format!("writing `{}`", path.display()))?;
    Ok(())
}

fn load_chunks(path: &Path) -> anyhow::Result<Vec<Chunk>> {
    let chunks = read_chunks(open_reader(path)?)
        .with_context(|| format!("reading chunks `{}`", path.display()))?;
    Ok(chunks)
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_pct(v: f64) -> String {
    format!("{v:.2}%")
}

// ---------------------------------------------------------------------------
// chunk

#[derive(Serialize)]
struct ChunkBody {
    recordings: usize,
    segments: usize,
    chunks: usize,
    oversize_chunks: usize,
    total_chunk_duration_s: f64,
    output: String,
}

pub fn run_chunk(args: &ChunkArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let recordings: Vec<Recording> = read_recordings(open_reader(&args.recordings)?)
        .with_context(|| format!("reading recordings `{}`", args.recordings.display()))?;
    let chunks = chunk_corpus(&recordings, &cfg.chunker)?;
    write_records(&chunks, &args.out)?;

    let segments: usize = recordings.iter().map(|r| r.segments.len()).sum();
    let oversize = chunks.iter().filter(|c| c.oversize).count();
    let total: f64 = chunks.iter().map(|c| c.duration_s).sum();
    println!(
        "{}",
        render_table(
            &["metric", "value"],
            &[
                vec!["recordings".into(), recordings.len().to_string()],
                vec!["segments".into(), segments.to_string()],
                vec!["chunks".into(), chunks.len().to_string()],
                vec!["oversize chunks".into(), oversize.to_string()],
                vec!["chunk audio (s)".into(), format!("{total:.3}")],
            ],
        )
    );

    if let Some(report) = &args.report {
        ReportEnvelope::new(
            "chunk",
            cfg,
            vec![digest_file(&args.recordings)?],
            ChunkBody {
                recordings: recordings.len(),
                segments,
                chunks: chunks.len(),
                oversize_chunks: oversize,
                total_chunk_duration_s: total,
                output: args.out.display().to_string(),
            },
        )
        .write(report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// filter

#[derive(Serialize)]
struct FilterBody {
    method: FilterMethod,
    alpha: f64,
    stats: CorpusStats,
    outputs: FilterOutputs,
}

#[derive(Serialize)]
struct FilterOutputs {
    kept: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    removed: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decisions: Option<String>,
}

pub fn run_filter_cmd(args: &FilterArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let mut filter_cfg = cfg.filter;
    if let Some(method) = &args.method {
        filter_cfg.method = FilterMethod::from_str(method).map_err(anyhow::Error::msg)?;
    }
    if let Some(alpha) = args.alpha {
        filter_cfg.alpha = alpha;
    }
    let mut ngram_cfg = cfg.ngram;
    if let Some(n) = args.ngram_n {
        ngram_cfg.n = n;
    }
    if let Some(c) = args.ngram_c {
        ngram_cfg.c = c;
    }
    filter_cfg.validate()?;
    ngram_cfg.validate().map_err(anyhow::Error::msg)?;

    let chunks = load_chunks(&args.chunks)?;
    let prep = cfg.build_prep()?;
    let lexicon = cfg.load_lexicon()?;
    let ctx = FilterContext {
        prep: &prep,
        lexicon: &lexicon,
        ngram: &ngram_cfg,
        phonemize: &cfg.phonemize,
    };
    let outcome = run_filter(&chunks, &filter_cfg, &ctx)?;

    write_records(&outcome.kept, &args.out)?;
    if let Some(removed_path) = &args.removed {
        let removed: Vec<&Chunk> = chunks
            .iter()
            .zip(&outcome.decisions)
            .filter(|(_, d)| !d.kept)
            .map(|(c, _)| c)
            .collect();
        write_records(&removed, removed_path)?;
    }
    if let Some(decisions_path) = &args.decisions {
        write_records(&outcome.decisions, decisions_path)?;
    }

    let stats = &outcome.stats;
    println!(
        "{}",
        render_table(
            &["metric", "value"],
            &[
                vec!["method".into(), filter_cfg.method.to_string()],
                vec!["alpha".into(), fmt4(filter_cfg.alpha)],
                vec![
                    "kept".into(),
                    format!("{} / {}", stats.kept_chunks, stats.total_chunks),
                ],
                vec!["count retention".into(), fmt4(stats.count_retention_rate)],
                vec!["duration retention".into(), fmt4(stats.retention_rate)],
            ],
        )
    );

    if let Some(report) = &args.report {
        ReportEnvelope::new(
            "filter",
            cfg,
            vec![digest_file(&args.chunks)?],
            FilterBody {
                method: filter_cfg.method,
                alpha: filter_cfg.alpha,
                stats: outcome.stats.clone(),
                outputs: FilterOutputs {
                    kept: args.out.display().to_string(),
                    removed: args.removed.as_ref().map(|p| p.display().to_string()),
                    decisions: args.decisions.as_ref().map(|p| p.display().to_string()),
                },
            },
        )
        .write(report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HypLine {
    chunk_id: String,
    text: String,
}

#[derive(Serialize)]
struct ErrorBreakdown {
    substitutions: usize,
    deletions: usize,
    insertions: usize,
    reference_units: usize,
    substitution_pct: f64,
    deletion_pct: f64,
    insertion_pct: f64,
}

#[derive(Serialize)]
struct TimingSummary {
    system_label: String,
    runs: usize,
    mean_rtf: f64,
    /// Speed relative to the first system in the timings file.
    speedup_vs_first: f64,
}

#[derive(Serialize)]
struct EvalBody {
    chunks: usize,
    hypothesis: String,
    mer: ErrorRate,
    mandarin_cer: ErrorRate,
    english_wer: ErrorRate,
    error_breakdown: ErrorBreakdown,
    hypothesis_repetition: RepetitionCount,
    #[serde(skip_serializing_if = "Option::is_none")]
    validator_repetition: Option<RepetitionCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<Vec<TimingSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_mer_rate: Option<f64>,
    /// `(baseline - ours) / baseline`; positive when this run is better.
    #[serde(skip_serializing_if = "Option::is_none")]
    mer_relative_reduction: Option<f64>,
}

fn load_hypotheses(path: &Path, chunks: &[Chunk]) -> anyhow::Result<Vec<String>> {
    let reader = open_reader(path)?;
    let mut by_id: HashMap<String, String> = HashMap::new();
    for (idx, line) in std::io::BufRead::lines(reader).enumerate() {
        let line = line.with_context(|| format!("reading `{}`", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: HypLine = serde_json::from_str(&line)
            .map_err(|e| anyhow::anyhow!("`{}` line {}: {e}", path.display(), idx + 1))?;
        if by_id.insert(parsed.chunk_id.clone(), parsed.text).is_some() {
            anyhow::bail!(
                "`{}` line {}: duplicate chunk_id `{}`",
                path.display(),
                idx + 1,
                parsed.chunk_id
            );
        }
    }
    let missing: Vec<&str> = chunks
        .iter()
        .filter(|c| !by_id.contains_key(&c.id))
        .map(|c| c.id.as_str())
        .collect();
    if !missing.is_empty() {
        let shown = missing.iter().take(5).copied().collect::<Vec<_>>().join(", ");
        anyhow::bail!(
            "hypothesis file `{}` is missing {} chunk id(s): {shown}{}",
            path.display(),
            missing.len(),
            if missing.len() > 5 { ", ..." } else { "" }
        );
    }
    Ok(chunks
        .iter()
        .map(|c| by_id.remove(&c.id).expect("checked above"))
        .collect())
}

fn load_timings(path: &Path) -> anyhow::Result<Vec<TimingSummary>> {
    let reader = open_reader(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<TimingRecord>> = HashMap::new();
    for (idx, line) in std::io::BufRead::lines(reader).enumerate() {
        let line = line.with_context(|| format!("reading `{}`", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TimingRecord = serde_json::from_str(&line)
            .map_err(|e| anyhow::anyhow!("`{}` line {}: {e}", path.display(), idx + 1))?;
        if !groups.contains_key(&record.system_label) {
            order.push(record.system_label.clone());
        }
        groups.entry(record.system_label.clone()).or_default().push(record);
    }
    if order.is_empty() {
        anyhow::bail!("timings file `{}` contains no records", path.display());
    }
    let mut summaries = Vec::with_capacity(order.len());
    let mut first_rtf = None;
    for label in order {
        let records = &groups[&label];
        let mean = metrics::mean_rtf(records)?;
        let baseline = *first_rtf.get_or_insert(mean);
        summaries.push(TimingSummary {
            system_label: label,
            runs: records.len(),
            mean_rtf: mean,
            speedup_vs_first: metrics::speedup(baseline, mean)?,
        });
    }
    Ok(summaries)
}

pub fn run_eval(args: &EvalArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let chunks = load_chunks(&args.chunks)?;
    if chunks.is_empty() {
        anyhow::bail!("`{}` contains no chunks", args.chunks.display());
    }
    let missing_ref: Vec<&str> = chunks
        .iter()
        .filter(|c| c.reference_text.is_none())
        .map(|c| c.id.as_str())
        .collect();
    if !missing_ref.is_empty() {
        let shown = missing_ref.iter().take(5).copied().collect::<Vec<_>>().join(", ");
        anyhow::bail!(
            "{} chunk(s) lack reference_text (needed for evaluation): {shown}{}",
            missing_ref.len(),
            if missing_ref.len() > 5 { ", ..." } else { "" }
        );
    }

    let hypotheses: Vec<String> = match &args.hyp {
        Some(path) => load_hypotheses(path, &chunks)?,
        None => chunks.iter().map(|c| c.teacher_text.clone()).collect(),
    };

    let prep = cfg.build_prep()?;
    let mut mer_num = 0usize;
    let mut mer_den = 0usize;
    let mut cer_num = 0usize;
    let mut cer_den = 0usize;
    let mut wer_num = 0usize;
    let mut wer_den = 0usize;
    let (mut subs, mut dels, mut inss) = (0usize, 0usize, 0usize);
    for (chunk, hyp) in chunks.iter().zip(&hypotheses) {
        let reference = chunk.reference_text.as_deref().expect("checked above");
        let aligned = metrics::align_texts(reference, hyp, &prep);
        subs += aligned.alignment.substitutions;
        dels += aligned.alignment.deletions;
        inss += aligned.alignment.insertions;
        mer_num += aligned.alignment.distance();
        mer_den += aligned.alignment.ref_len;
        let rates = aligned.language_rates();
        cer_num += rates.mandarin_cer.numerator;
        cer_den += rates.mandarin_cer.denominator;
        wer_num += rates.english_wer.numerator;
        wer_den += rates.english_wer.denominator;
    }
    let mer = ErrorRate::from_counts(RateKind::Mer, mer_num, mer_den);
    let cer = ErrorRate::from_counts(RateKind::Cer, cer_num, cer_den);
    let wer = ErrorRate::from_counts(RateKind::Wer, wer_num, wer_den);
    let breakdown = ErrorBreakdown {
        substitutions: subs,
        deletions: dels,
        insertions: inss,
        reference_units: mer_den,
        substitution_pct: ErrorRate::from_counts(RateKind::Mer, subs, mer_den).percent(),
        deletion_pct: ErrorRate::from_counts(RateKind::Mer, dels, mer_den).percent(),
        insertion_pct: ErrorRate::from_counts(RateKind::Mer, inss, mer_den).percent(),
    };

    let flagged = hypotheses
        .iter()
        .filter(|h| detect_text(h, &cfg.ngram, &prep))
        .count();
    let hyp_repetition = RepetitionCount {
        flagged,
        checked: hypotheses.len(),
        skipped: 0,
    };
    let validator_repetition = if chunks.iter().any(|c| c.validator_text.is_some()) {
        Some(count_repetitive(
            &chunks,
            TextField::Validator,
            &cfg.ngram,
            &prep,
        ))
    } else {
        None
    };

    let timing = match &args.timings {
        Some(path) => Some(load_timings(path)?),
        None => None,
    };

    let (baseline_mer_rate, mer_relative_reduction) = match &args.baseline_report {
        Some(path) => {
            let value: serde_json::Value = serde_json::from_reader(open_reader(path)?)
                .with_context(|| format!("parsing baseline report `{}`", path.display()))?;
            let base = value
                .get("mer")
                .and_then(|m| m.get("rate"))
                .and_then(|r| r.as_f64())
                .ok_or_else(|| {
                    anyhow::anyhow!(
                        "baseline report `{}` has no mer.rate field",
                        path.display()
                    )
                })?;
            if !(base > 0.0) {
                anyhow::bail!(
                    "baseline report `{}` has mer.rate = {base}; relative reduction undefined",
                    path.display()
                );
            }
            (Some(base), Some((base - mer.rate) / base))
        }
        None => (None, None),
    };

    let mut rows = vec![
        vec!["chunks".into(), chunks.len().to_string()],
        vec!["MER".into(), fmt_pct(mer.percent())],
        vec!["Mandarin CER".into(), fmt_pct(cer.percent())],
        vec!["English WER".into(), fmt_pct(wer.percent())],
        vec!["substitutions".into(), fmt_pct(breakdown.substitution_pct)],
        vec!["deletions".into(), fmt_pct(breakdown.deletion_pct)],
        vec!["insertions".into(), fmt_pct(breakdown.insertion_pct)],
        vec![
            "repetitive hypotheses".into(),
            format!("{} / {}", hyp_repetition.flagged, hyp_repetition.checked),
        ],
    ];
    if let Some(summaries) = &timing {
        for s in summaries {
            rows.push(vec![
                format!("RTF [{}]", s.system_label),
                format!("{:.4} ({:.2}x)", s.mean_rtf, s.speedup_vs_first),
            ]);
        }
    }
    if let (Some(base), Some(reduction)) = (baseline_mer_rate, mer_relative_reduction) {
        rows.push(vec!["baseline MER".into(), fmt_pct(base * 100.0)]);
        rows.push(vec![
            "relative MER reduction".into(),
            fmt_pct(reduction * 100.0),
        ]);
    }
    println!("{}", render_table(&["metric", "value"], &rows));

    if let Some(report) = &args.report {
        let mut inputs = vec![digest_file(&args.chunks)?];
        if let Some(path) = &args.hyp {
            inputs.push(digest_file(path)?);
        }
        if let Some(path) = &args.timings {
            inputs.push(digest_file(path)?);
        }
        if let Some(path) = &args.baseline_report {
            inputs.push(digest_file(path)?);
        }
        ReportEnvelope::new(
            "eval",
            cfg,
            inputs,
            EvalBody {
                chunks: chunks.len(),
                hypothesis: match &args.hyp {
                    Some(path) => path.display().to_string(),
                    None => "teacher".to_string(),
                },
                mer,
                mandarin_cer: cer,
                english_wer: wer,
                error_breakdown: breakdown,
                hypothesis_repetition: hyp_repetition,
                validator_repetition,
                timing,
                baseline_mer_rate,
                mer_relative_reduction,
            },
        )
        .write(report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Serialize)]
struct AnalyzeBody {
    methods: Vec<RecallReport>,
}

pub fn run_analyze(args: &AnalyzeArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let methods: Vec<FilterMethod> = match &args.methods {
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| FilterMethod::from_str(s).map_err(anyhow::Error::msg))
            .collect::<Result<_, _>>()?,
        None => vec![
            FilterMethod::DirectMer,
            FilterMethod::DirectPer,
            FilterMethod::Composite,
        ],
    };
    if methods.is_empty() {
        anyhow::bail!("--methods lists no methods");
    }

    let chunks = load_chunks(&args.chunks)?;
    let prep = cfg.build_prep()?;
    let lexicon = cfg.load_lexicon()?;
    let ctx = FilterContext {
        prep: &prep,
        lexicon: &lexicon,
        ngram: &cfg.ngram,
        phonemize: &cfg.phonemize,
    };
    let reports: Vec<RecallReport> = methods
        .iter()
        .map(|&m| recall_sweep(&chunks, m, &cfg.analysis, &ctx))
        .collect::<Result<_, _>>()?;

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                r.max_recall.map_or_else(|| "-".into(), fmt4),
                r.max_recall_alpha.map_or_else(|| "-".into(), fmt4),
                fmt4(r.avg_recall),
            ]
        })
        .collect();
    println!(
        "{}",
        render_table(&["method", "max recall", "at alpha", "avg recall"], &rows)
    );
    if let [only] = reports.as_slice() {
        let detail: Vec<Vec<String>> = only
            .points
            .iter()
            .map(|p| {
                vec![
                    fmt4(p.alpha),
                    p.kept_chunks.to_string(),
                    fmt4(p.count_retention),
                    p.high_mer_removed.to_string(),
                    fmt4(p.recall),
                ]
            })
            .collect();
        println!(
            "{}",
            render_table(
                &["alpha", "kept", "count ret", "removed", "recall"],
                &detail
            )
        );
    }

    if let Some(report) = &args.report {
        ReportEnvelope::new(
            "analyze",
            cfg,
            vec![digest_file(&args.chunks)?],
            AnalyzeBody { methods: reports },
        )
        .write(report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// kdcheck

#[derive(Serialize)]
struct KdBody {
    positions: usize,
    vocab: usize,
    ce: f64,
    kl: f64,
    total: f64,
    ce_per_position: f64,
    kl_per_position: f64,
}

pub fn run_kdcheck(args: &KdcheckArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let fixture: KdFixture = serde_json::from_reader(open_reader(&args.fixture)?)
        .map_err(|e| anyhow::anyhow!("parsing fixture `{}`: {e}", args.fixture.display()))?;
    let loss = evaluate_fixture(&fixture, &cfg.kdloss)?;

    println!(
        "{}",
        render_table(
            &["metric", "value"],
            &[
                vec!["positions".into(), fixture.k.to_string()],
                vec!["vocab".into(), fixture.v.to_string()],
                vec!["cross entropy".into(), format!("{:.6}", loss.ce)],
                vec!["kl divergence".into(), format!("{:.6}", loss.kl)],
                vec!["kd loss".into(), format!("{:.6}", loss.total)],
            ],
        )
    );

    if let Some(report) = &args.report {
        ReportEnvelope::new(
            "kdcheck",
            cfg,
            vec![digest_file(&args.fixture)?],
            KdBody {
                positions: fixture.k,
                vocab: fixture.v,
                ce: loss.ce,
                kl: loss.kl,
                total: loss.total,
                ce_per_position: loss.ce_per_position(),
                kl_per_position: loss.kl_per_position(),
            },
        )
        .write(report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

#[derive(Serialize)]
struct SynthBody {
    spec: SynthSpec,
    clean: usize,
    hallucinated_teacher: usize,
    hallucinated_validator: usize,
    high_mer: usize,
    outputs: SynthOutputs,
}

#[derive(Serialize)]
struct SynthOutputs {
    chunks: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recordings: Option<String>,
}

pub fn run_synth(args: &SynthArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading synth spec `{}`", path.display()))?;
            toml::from_str::<SynthSpec>(&raw)
                .map_err(|e| anyhow::anyhow!("synth spec `{}`: {e}", path.display()))?
        }
        None => SynthSpec {
            seed: cfg.seed,
            ..SynthSpec::default()
        },
    };
    if let Some(chunks) = args.chunks {
        spec.chunks = chunks;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }

    let output = generate(&spec)?;
    write_records(&output.chunks, &args.out)?;
    if let Some(path) = &args.labels {
        write_records(&output.labels, path)?;
    }
    if let Some(path) = &args.recordings {
        write_records(&output.recordings, path)?;
    }

    let hallucinated = output.labels.iter().filter(|l| l.hallucinated_teacher).count();
    let vhall = output.labels.iter().filter(|l| l.hallucinated_validator).count();
    let high = output.labels.iter().filter(|l| l.high_mer).count();
    let clean = output.labels.len() - hallucinated - vhall - high;
    println!(
        "{}",
        render_table(
            &["category", "chunks"],
            &[
                vec!["clean".into(), clean.to_string()],
                vec!["hallucinated teacher".into(), hallucinated.to_string()],
                vec!["hallucinated validator".into(), vhall.to_string()],
                vec!["high-MER teacher".into(), high.to_string()],
                vec!["total".into(), output.labels.len().to_string()],
            ],
        )
    );

    if let Some(report) = &args.report {
        let mut inputs = Vec::new();
        if let Some(path) = &args.spec {
            inputs.push(digest_file(path)?);
        }
        ReportEnvelope::new(
            "synth",
            cfg,
            inputs,
            SynthBody {
                spec,
                clean,
                hallucinated_teacher: hallucinated,
                hallucinated_validator: vhall,
                high_mer: high,
                outputs: SynthOutputs {
                    chunks: args.out.display().to_string(),
                    labels: args.labels.as_ref().map(|p| p.display().to_string()),
                    recordings: args.recordings.as_ref().map(|p| p.display().to_string()),
                },
            },
        )
        .write(report)?;
    }
    Ok(())
}
