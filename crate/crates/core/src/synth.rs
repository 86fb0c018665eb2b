//! Deterministic synthetic corpora with ground-truth defect labels.
//!
//! The generator produces chunk manifests seeded with known defects so
//! filter behavior can be measured against an answer key:
//!
//! * **clean** — teacher and validator both lightly noisy copies of the
//!   reference.
//! * **strong hallucination** — teacher ends in a short phrase looped past
//!   the n-gram detector's budget (caught by the detector).
//! * **weak hallucination** — teacher ends in a *long* phrase repeated
//!   exactly at the budget, so the detector stays quiet but the validator
//!   disagreement is large (caught only by transcript comparison).
//! * **high-MER** — teacher transcript mostly wrong (70–95% of tokens
//!   corrupted), validator close to the reference.
//! * **validator hallucination** — the roles reversed: teacher fine,
//!   validator loops.
//!
//! Corruption, filler and reference vocabulary pools are pairwise disjoint
//! (and drawn from the bundled lexicon with non-overlapping
//! pronunciations), so an injected corruption can never accidentally match
//! the other transcript. After building each chunk the generator re-checks
//! its category invariants with the real detector and metrics, redrawing a
//! bounded number of times; generation is a pure function of the spec.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filter::{delta_mer, delta_per, FilterContext};
use crate::hallucination::{detect_text, NgramConfig};
use crate::manifest::{Chunk, Recording, Segment, MAX_CHUNK_SECONDS};
use crate::metrics;
use crate::phonemizer::{Lexicon, PhonemizeConfig};
use crate::textnorm::{TextPrep, TimestampTemplate};

const MAX_ATTEMPTS: usize = 64;
/// Token corruption band for clean teachers.
const CLEAN_NOISE_MAX: f64 = 0.15;
/// Token corruption band for the pre-loop base of hallucinated teachers.
const HALL_BASE_NOISE_MAX: f64 = 0.1;
/// Token corruption band for validators (always near the reference).
const VALIDATOR_NOISE_MAX: f64 = 0.05;
/// Token corruption band for high-MER teachers.
const HIGH_MER_NOISE_MIN: f64 = 0.7;
const HIGH_MER_NOISE_MAX: f64 = 0.95;
/// Strong loops repeat their pattern this far past the detector budget.
const REPEATS_OVER_BUDGET: usize = 2;
/// Self-check bounds: high-MER teachers must really be bad, clean pairs
/// must really agree, weak loops must really disagree.
const HIGH_MER_CHECK: f64 = 0.4;
const CLEAN_MAX_DELTA: f64 = 0.35;
const WEAK_MIN_DELTA: f64 = 0.45;

/// Reference vocabulary (Mandarin side), mirrored in the bundled lexicon.
const ZH_MAIN: &[char] = &[
    '我', '你', '他', '的', '是', '了', '在', '有', '个', '好', '来', '去', '说', '看', '想',
    '要', '会', '能', '天', '年', '用', '写', '学', '生', '工', '作', '家', '国', '人', '大',
    '小', '中', '文', '话', '语', '音', '词', '句', '读', '听', '讲', '次', '数', '模', '型',
    '训', '练', '今', '明',
];
/// Corruption pool: disjoint from the main pool, with pinyin no main-pool
/// character uses, so a corrupted character is wrong at the phoneme level
/// too.
const ZH_CORRUPT: &[char] = &[
    '冰', '风', '火', '山', '海', '河', '鸟', '云', '星', '盘', '蓝', '绿', '森', '雷', '霜',
    '熊', '鹰', '桥', '沙', '漠',
];
/// Filler pool for validator noise, disjoint from both pools above.
const ZH_FILLER: &[char] = &['嗯', '呃', '哦', '吧', '呢', '吗', '啊', '哈', '嘿', '哟'];

/// English counterparts of the three pools.
const EN_MAIN: &[&str] = &[
    "audio", "build", "cat", "chunk", "client", "close", "code", "data", "debug", "error",
    "fast", "file", "filter", "good", "hello", "java", "layer", "learn", "loud", "model",
    "music", "number", "open", "python", "read", "run", "scale", "server", "slow", "speech",
    "string", "system", "test", "text", "time", "token", "train", "value", "voice", "world",
    "write", "zero",
];
const EN_CORRUPT: &[&str] = &[
    "flux", "gnome", "jungle", "knight", "oxygen", "puzzle", "quartz", "rhythm", "vivid",
    "zebra", "basil", "crisp", "dune", "ember", "fjord",
];
const EN_FILLER: &[&str] = &["okay", "quite", "maybe", "well", "um", "uh"];

/// Defect category of a generated chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Clean,
    StrongHallucination,
    WeakHallucination,
    HighMer,
    ValidatorHallucination,
}

/// Generator settings. Generation is deterministic in the whole spec
/// (including `seed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Number of chunks to generate.
    pub chunks: usize,
    pub seed: u64,
    /// Fraction of chunks with a hallucinated (looping) teacher.
    pub teacher_hallucination_rate: f64,
    /// Fraction of hallucinated teachers that loop *below* the detector
    /// budget (weak loops).
    pub weak_hallucination_fraction: f64,
    /// Fraction of chunks with a hallucinated validator.
    pub validator_hallucination_rate: f64,
    /// Fraction of chunks whose teacher transcript is mostly wrong.
    pub high_mer_rate: f64,
    /// Probability that a reference token is Mandarin rather than English.
    pub mandarin_ratio: f64,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    /// Detector the looped categories are crafted against.
    pub ngram: NgramConfig,
    /// Wrap teacher transcripts in inline timestamp tokens.
    pub emit_timestamps: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            chunks: 500,
            seed: 0,
            teacher_hallucination_rate: 0.2,
            weak_hallucination_fraction: 0.25,
            validator_hallucination_rate: 0.05,
            high_mer_rate: 0.2,
            mandarin_ratio: 0.6,
            tokens_min: 20,
            tokens_max: 60,
            duration_min_s: 5.0,
            duration_max_s: 29.5,
            ngram: NgramConfig::default(),
            emit_timestamps: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let rates = [
            ("teacher_hallucination_rate", self.teacher_hallucination_rate),
            ("weak_hallucination_fraction", self.weak_hallucination_fraction),
            ("validator_hallucination_rate", self.validator_hallucination_rate),
            ("high_mer_rate", self.high_mer_rate),
            ("mandarin_ratio", self.mandarin_ratio),
        ];
        for (name, v) in rates {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(SynthError::InvalidSpec(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.tokens_min == 0 || self.tokens_min > self.tokens_max {
            return Err(SynthError::InvalidSpec(format!(
                "token range [{}, {}] is invalid",
                self.tokens_min, self.tokens_max
            )));
        }
        if !(self.duration_min_s > 0.0)
            || self.duration_min_s > self.duration_max_s
            || self.duration_max_s > MAX_CHUNK_SECONDS
        {
            return Err(SynthError::InvalidSpec(format!(
                "duration range [{}, {}] must lie within (0, {MAX_CHUNK_SECONDS}]",
                self.duration_min_s, self.duration_max_s
            )));
        }
        self.ngram.validate().map_err(SynthError::InvalidSpec)?;
        let budget = self.counts();
        if budget.clean_is_negative {
            return Err(SynthError::InvalidSpec(
                "defect rates sum past 1: no room for clean chunks".into(),
            ));
        }
        Ok(())
    }

    fn counts(&self) -> CategoryCounts {
        let n = self.chunks as f64;
        let hallucinated = (self.teacher_hallucination_rate * n).round() as usize;
        let weak = (hallucinated as f64 * self.weak_hallucination_fraction).round() as usize;
        let strong = hallucinated - weak;
        let high_mer = (self.high_mer_rate * n).round() as usize;
        let validator = (self.validator_hallucination_rate * n).round() as usize;
        let special = hallucinated + high_mer + validator;
        CategoryCounts {
            strong,
            weak,
            high_mer,
            validator,
            clean: self.chunks.saturating_sub(special),
            clean_is_negative: special > self.chunks,
        }
    }
}

struct CategoryCounts {
    strong: usize,
    weak: usize,
    high_mer: usize,
    validator: usize,
    clean: usize,
    clean_is_negative: bool,
}

/// Errors from generation.
#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error(
        "chunk {index} ({category:?}): category invariants still unsatisfied \
         after {attempts} redraws (detector settings may be too tight for \
         random text)"
    )]
    Generation {
        index: usize,
        category: Category,
        attempts: usize,
    },
}

/// Answer key for one generated chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthLabel {
    pub chunk_id: String,
    pub hallucinated_teacher: bool,
    pub hallucinated_validator: bool,
    pub high_mer: bool,
}

/// A generated corpus: chunks, their answer key, and per-chunk source
/// recordings (usable as chunker input for end-to-end demos).
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub chunks: Vec<Chunk>,
    pub labels: Vec<GroundTruthLabel>,
    pub recordings: Vec<Recording>,
}

#[derive(Clone)]
struct Tok {
    text: String,
    mandarin: bool,
}

fn draw_tok(rng: &mut ChaCha8Rng, mandarin_ratio: f64) -> Tok {
    if rng.random::<f64>() < mandarin_ratio {
        Tok {
            text: ZH_MAIN[rng.random_range(0..ZH_MAIN.len())].to_string(),
            mandarin: true,
        }
    } else {
        Tok {
            text: EN_MAIN[rng.random_range(0..EN_MAIN.len())].to_string(),
            mandarin: false,
        }
    }
}

fn draw_toks(rng: &mut ChaCha8Rng, count: usize, mandarin_ratio: f64) -> Vec<Tok> {
    (0..count).map(|_| draw_tok(rng, mandarin_ratio)).collect()
}

/// Replaces `round(fraction * len)` tokens (distinct positions) with draws
/// from the given pools, respecting each token's script.
fn corrupt(
    rng: &mut ChaCha8Rng,
    tokens: &[Tok],
    fraction: f64,
    zh_pool: &[char],
    en_pool: &[&str],
) -> Vec<Tok> {
    let mut out = tokens.to_vec();
    let k = ((fraction * tokens.len() as f64).round() as usize).min(tokens.len());
    if k == 0 {
        return out;
    }
    for idx in rand::seq::index::sample(rng, tokens.len(), k) {
        let mandarin = out[idx].mandarin;
        out[idx] = Tok {
            text: if mandarin {
                zh_pool[rng.random_range(0..zh_pool.len())].to_string()
            } else {
                en_pool[rng.random_range(0..en_pool.len())].to_string()
            },
            mandarin,
        };
    }
    out
}

fn join(tokens: &[Tok]) -> String {
    tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn round_ms(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

struct Drawn {
    reference: Vec<Tok>,
    teacher: Vec<Tok>,
    validator: Vec<Tok>,
}

fn draw_texts(rng: &mut ChaCha8Rng, category: Category, spec: &SynthSpec) -> Drawn {
    let ngram = &spec.ngram;
    // A strong loop: a pattern of n tokens repeated past the budget.
    let strong_loop_len = ngram.n * (ngram.c + REPEATS_OVER_BUDGET + usize::from(!ngram.strictly_greater));
    // A weak loop: a 2n pattern repeated exactly c times — every n-gram
    // inside it occurs at most c times, under the strict budget.
    let weak_pattern_len = 2 * ngram.n;

    let drawn_len = rng.random_range(spec.tokens_min..=spec.tokens_max);
    let base_len = match category {
        // Keep the base long enough that the loop is an appendage, not the
        // bulk of the transcript.
        Category::StrongHallucination => drawn_len.max(3 * strong_loop_len),
        // Keep the base short enough that the loop dominates the
        // disagreement score.
        Category::WeakHallucination => drawn_len.min(weak_pattern_len.max(spec.tokens_min)),
        _ => drawn_len,
    };
    let reference = draw_toks(rng, base_len, spec.mandarin_ratio);

    let teacher = match category {
        Category::Clean | Category::ValidatorHallucination => {
            let noise = rng.random_range(0.0..=CLEAN_NOISE_MAX);
            corrupt(rng, &reference, noise, ZH_CORRUPT, EN_CORRUPT)
        }
        Category::HighMer => {
            let noise = rng.random_range(HIGH_MER_NOISE_MIN..=HIGH_MER_NOISE_MAX);
            corrupt(rng, &reference, noise, ZH_CORRUPT, EN_CORRUPT)
        }
        Category::StrongHallucination => {
            let noise = rng.random_range(0.0..=HALL_BASE_NOISE_MAX);
            let mut t = corrupt(rng, &reference, noise, ZH_CORRUPT, EN_CORRUPT);
            let pattern = draw_toks(rng, ngram.n, spec.mandarin_ratio);
            while t.len() < reference.len() + strong_loop_len {
                t.extend(pattern.iter().cloned());
            }
            t
        }
        Category::WeakHallucination => {
            let noise = rng.random_range(0.0..=HALL_BASE_NOISE_MAX);
            let mut t = corrupt(rng, &reference, noise, ZH_CORRUPT, EN_CORRUPT);
            let pattern = draw_toks(rng, weak_pattern_len, spec.mandarin_ratio);
            for _ in 0..ngram.c.max(1) {
                t.extend(pattern.iter().cloned());
            }
            t
        }
    };

    let validator_noise = rng.random_range(0.0..=VALIDATOR_NOISE_MAX);
    let validator = if category == Category::ValidatorHallucination {
        let mut v = corrupt(rng, &reference, validator_noise, ZH_FILLER, EN_FILLER);
        let pattern = draw_toks(rng, ngram.n, spec.mandarin_ratio);
        while v.len() < reference.len() + strong_loop_len {
            v.extend(pattern.iter().cloned());
        }
        v
    } else {
        corrupt(rng, &reference, validator_noise, ZH_FILLER, EN_FILLER)
    };

    Drawn {
        reference,
        teacher,
        validator,
    }
}

/// Checks the drawn texts against the category's promised invariants with
/// the real detector and metrics.
fn satisfies_category(
    chunk: &Chunk,
    category: Category,
    spec: &SynthSpec,
    ctx: &FilterContext,
) -> bool {
    let h_teacher = detect_text(&chunk.teacher_text, &spec.ngram, ctx.prep);
    let h_validator = detect_text(
        chunk.validator_text.as_deref().unwrap_or(""),
        &spec.ngram,
        ctx.prep,
    );
    let reference = chunk.reference_text.as_deref().unwrap_or("");
    let teacher_mer = metrics::mer(reference, &chunk.teacher_text, ctx.prep).rate;
    match category {
        Category::Clean => {
            !h_teacher
                && !h_validator
                && teacher_mer < HIGH_MER_CHECK
                && delta_mer(chunk, ctx).is_ok_and(|d| d <= CLEAN_MAX_DELTA)
        }
        Category::StrongHallucination => h_teacher && !h_validator,
        Category::WeakHallucination => {
            !h_teacher
                && !h_validator
                && delta_per(chunk, ctx).is_ok_and(|d| d > WEAK_MIN_DELTA)
                && delta_mer(chunk, ctx).is_ok_and(|d| d > WEAK_MIN_DELTA)
        }
        Category::HighMer => {
            !h_teacher
                && !h_validator
                && teacher_mer > HIGH_MER_CHECK
                && delta_mer(chunk, ctx).is_ok_and(|d| d > HIGH_MER_CHECK)
                && delta_per(chunk, ctx).is_ok_and(|d| d > HIGH_MER_CHECK)
        }
        Category::ValidatorHallucination => !h_teacher && h_validator,
    }
}

/// Generates a labeled corpus. Category counts are exact:
/// `round(rate * chunks)` per defect, assigned to shuffled positions.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let counts = spec.counts();

    let mut categories = Vec::with_capacity(spec.chunks);
    categories.extend(std::iter::repeat_n(Category::StrongHallucination, counts.strong));
    categories.extend(std::iter::repeat_n(Category::WeakHallucination, counts.weak));
    categories.extend(std::iter::repeat_n(Category::HighMer, counts.high_mer));
    categories.extend(std::iter::repeat_n(Category::ValidatorHallucination, counts.validator));
    categories.extend(std::iter::repeat_n(Category::Clean, counts.clean));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Fisher–Yates with the seeded stream, so placement is reproducible.
    for i in (1..categories.len()).rev() {
        categories.swap(i, rng.random_range(0..=i));
    }

    let prep = TextPrep::default();
    let lexicon = Lexicon::builtin();
    let phonemize = PhonemizeConfig::default();
    let ctx = FilterContext {
        prep: &prep,
        lexicon: &lexicon,
        ngram: &spec.ngram,
        phonemize: &phonemize,
    };
    let template = TimestampTemplate::default();

    let mut chunks = Vec::with_capacity(spec.chunks);
    let mut labels = Vec::with_capacity(spec.chunks);
    let mut recordings = Vec::with_capacity(spec.chunks);
    for (index, &category) in categories.iter().enumerate() {
        let recording_id = format!("synth-{index:05}");
        let chunk_id = format!("{recording_id}#0");
        let duration = round_ms(rng.random_range(spec.duration_min_s..=spec.duration_max_s));

        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let drawn = draw_texts(&mut rng, category, spec);
            let teacher_body = join(&drawn.teacher);
            let teacher_text = if spec.emit_timestamps {
                format!(
                    "{}{}{}",
                    template.format(0.0),
                    teacher_body,
                    template.format(duration)
                )
            } else {
                teacher_body
            };
            let chunk = Chunk {
                id: chunk_id.clone(),
                recording_id: recording_id.clone(),
                start_s: 0.0,
                end_s: duration,
                duration_s: duration,
                teacher_text,
                validator_text: Some(join(&drawn.validator)),
                reference_text: Some(join(&drawn.reference)),
                oversize: false,
            };
            if satisfies_category(&chunk, category, spec, &ctx) {
                accepted = Some((chunk, drawn.reference));
                break;
            }
        }
        let Some((chunk, reference_toks)) = accepted else {
            return Err(SynthError::Generation {
                index,
                category,
                attempts: MAX_ATTEMPTS,
            });
        };

        recordings.push(recording_for(&chunk, &reference_toks, &mut rng));
        labels.push(GroundTruthLabel {
            chunk_id: chunk.id.clone(),
            hallucinated_teacher: matches!(
                category,
                Category::StrongHallucination | Category::WeakHallucination
            ),
            hallucinated_validator: category == Category::ValidatorHallucination,
            high_mer: category == Category::HighMer,
        });
        chunks.push(chunk);
    }

    Ok(SynthOutput {
        chunks,
        labels,
        recordings,
    })
}

/// Builds the per-chunk source recording: the reference tokens split into
/// one to three contiguous segments spanning the chunk's duration.
fn recording_for(chunk: &Chunk, reference: &[Tok], rng: &mut ChaCha8Rng) -> Recording {
    let parts = rng.random_range(1..=3usize.min(reference.len().max(1)));
    let mut cut_points = vec![0, reference.len()];
    while cut_points.len() < parts + 1 {
        let cut = rng.random_range(1..reference.len());
        if !cut_points.contains(&cut) {
            cut_points.push(cut);
        }
    }
    cut_points.sort_unstable();

    let total_tokens = reference.len().max(1) as f64;
    let segments = cut_points
        .windows(2)
        .map(|w| {
            let (from, to) = (w[0], w[1]);
            Segment {
                start_s: round_ms(chunk.duration_s * from as f64 / total_tokens),
                end_s: round_ms(chunk.duration_s * to as f64 / total_tokens),
                text: join(&reference[from..to]),
            }
        })
        .collect();
    Recording {
        id: chunk.recording_id.clone(),
        audio_ref: format!("synthetic://{}", chunk.recording_id),
        total_duration_s: chunk.duration_s,
        segments,
    }
}
