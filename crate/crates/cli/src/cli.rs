//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Batch tooling for building filtered training chunks from pseudo-labeled
/// speech manifests: chunking, hallucination/validation filtering,
/// evaluation, recall analysis, and distillation-loss checks.
#[derive(Debug, Parser)]
#[command(name = "csfilter", version, disable_help_subcommand = true)]
pub struct Cli {
    /// Pipeline config TOML (falls back to $CSFILTER_CONFIG, then defaults).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel stages (0 = one per core). Never
    /// changes results, only speed.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pack recording segments into chunks under the duration limit.
    Chunk(ChunkArgs),
    /// Filter chunks by hallucination detection and validator agreement.
    Filter(FilterArgs),
    /// Score hypotheses against references: MER, per-language rates,
    /// error breakdown, repetition counts, timing.
    Eval(EvalArgs),
    /// Sweep filter thresholds and report high-MER recall per method.
    Analyze(AnalyzeArgs),
    /// Evaluate a distillation-loss fixture.
    Kdcheck(KdcheckArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    /// Input recordings manifest (JSONL).
    #[arg(long, value_name = "PATH")]
    pub recordings: PathBuf,
    /// Output chunk manifest (JSONL).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Write a machine-readable run report (JSON).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Input chunk manifest (JSONL).
    #[arg(long, value_name = "PATH")]
    pub chunks: PathBuf,
    /// Output manifest of kept chunks (JSONL).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Also write removed chunks here (JSONL).
    #[arg(long, value_name = "PATH")]
    pub removed: Option<PathBuf>,
    /// Also write one decision record per input chunk here (JSONL).
    #[arg(long, value_name = "PATH")]
    pub decisions: Option<PathBuf>,
    /// Override the configured filter method (full_data, trivial,
    /// direct_mer, direct_per, composite).
    #[arg(long, value_name = "METHOD")]
    pub method: Option<String>,
    /// Override the configured disagreement threshold.
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,
    /// Override the detector n-gram order.
    #[arg(long, value_name = "N")]
    pub ngram_n: Option<usize>,
    /// Override the detector repetition budget.
    #[arg(long, value_name = "C")]
    pub ngram_c: Option<usize>,
    /// Write a machine-readable run report (JSON).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Input chunk manifest (JSONL); every chunk needs reference_text.
    #[arg(long, value_name = "PATH")]
    pub chunks: PathBuf,
    /// Hypothesis transcripts to score instead of the chunks' teacher
    /// text: JSONL lines of {"chunk_id": ..., "text": ...}.
    #[arg(long, value_name = "PATH")]
    pub hyp: Option<PathBuf>,
    /// Timing records for RTF/speed-up: JSONL lines of {"system_label",
    /// "audio_s", "processing_s"}. Speed-ups are relative to the first
    /// system in the file.
    #[arg(long, value_name = "PATH")]
    pub timings: Option<PathBuf>,
    /// A previous eval report; adds relative MER reduction against it.
    #[arg(long, value_name = "PATH")]
    pub baseline_report: Option<PathBuf>,
    /// Write a machine-readable run report (JSON).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input chunk manifest (JSONL); every chunk needs reference_text.
    #[arg(long, value_name = "PATH")]
    pub chunks: PathBuf,
    /// Comma-separated methods to sweep (default:
    /// direct_mer,direct_per,composite).
    #[arg(long, value_name = "LIST")]
    pub methods: Option<String>,
    /// Write a machine-readable run report (JSON).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KdcheckArgs {
    /// Distillation fixture (JSON): teacher/student distributions and
    /// target ids.
    #[arg(long, value_name = "PATH")]
    pub fixture: PathBuf,
    /// Write a machine-readable run report (JSON).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output chunk manifest (JSONL).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Also write ground-truth defect labels here (JSONL).
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    /// Also write per-chunk source recordings here (JSONL).
    #[arg(long, value_name = "PATH")]
    pub recordings: Option<PathBuf>,
    /// Generator spec (TOML); defaults cover every field.
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// Override the number of chunks to generate.
    #[arg(long, value_name = "N")]
    pub chunks: Option<usize>,
    /// Override the generator seed.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Write a machine-readable run report (JSON).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}
