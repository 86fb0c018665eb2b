//! Core library for building filtered Mandarin–English code-switching ASR
//! training corpora from pseudo-labeled speech.
//!
//! The pipeline stages are, in order:
//!
//! 1. [`chunker`] packs timestamped transcript segments into chunks of at
//!    most 30 seconds of speech.
//! 2. [`hallucination`] flags transcripts that loop on a repeated n-gram,
//!    and [`filter`] removes chunks whose teacher transcript disagrees with
//!    a second validation transcript (surface or phoneme level).
//! 3. [`metrics`] scores transcripts with mixed error rate (Mandarin
//!    characters + English words), per-language rates and RTF/speed-up.
//! 4. [`analysis`] sweeps the filter threshold and reports how many
//!    genuinely bad labels each setting removes.
//! 5. [`kdloss`] provides the distillation loss arithmetic used to sanity
//!    check exported training fixtures.
//!
//! [`manifest`] defines the JSONL record types shared by every stage,
//! [`textnorm`] the text normalization and mixed-script tokenizer, and
//! [`phonemizer`] the lexicon-based phoneme expansion behind the phoneme
//! error rate. [`synth`] generates labeled synthetic corpora for tests and
//! benchmarks.

pub mod analysis;
pub mod chunker;
pub mod filter;
pub mod hallucination;
pub mod kdloss;
pub mod manifest;
pub mod metrics;
pub mod phonemizer;
pub mod synth;
pub mod textnorm;

/// Distillation distribution sequence at the default `f64` precision.
pub type DistributionSeq = kdloss::DistributionSequence<f64>;
/// Single-precision variant for callers that mirror on-disk `f32` tensors.
pub type DistributionSeq32 = kdloss::DistributionSequence<f32>;
/// Distillation loss breakdown at the default `f64` precision.
pub type KdLossValue = kdloss::KdLoss<f64>;
/// Distillation loss weights at the default `f64` precision.
pub type KdWeights = kdloss::KdLossConfig<f64>;
