//! Lexicon-based phoneme expansion.
//!
//! The phoneme error rate compares transcripts after expanding each token
//! to phonemes: Mandarin characters map to a toned pinyin syllable (one
//! phoneme unit per character, `ü` written `v`), English words to their
//! lexicon pronunciation. Out-of-vocabulary English words fall back to
//! spelling out letter names, digit runs to digit names, and unknown CJK
//! characters pass through as opaque single-unit phonemes so that two
//! transcripts agreeing on an unknown character still align.
//!
//! Lexicons are TSV: `key<TAB>value` per line, `#` comments and blank
//! lines ignored, first entry for a key wins.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::textnorm::{TokenKind, TokenSequence};

const ENGLISH_TEST_LEXICON: &str = include_str!("../assets/english_test.tsv");
const PINYIN_TEST_LEXICON: &str = include_str!("../assets/pinyin_test.tsv");

/// Errors from lexicon loading.
#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file} line {line}: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
}

/// Load-time bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LexiconStats {
    pub english_entries: usize,
    pub mandarin_entries: usize,
    /// Later entries for an already-seen key (first one wins).
    pub duplicates_ignored: usize,
}

/// Pronunciation lexicon: English word → phonemes, Mandarin character →
/// toned pinyin syllable.
#[derive(Debug, Clone)]
pub struct Lexicon {
    english: HashMap<String, Vec<String>>,
    mandarin: HashMap<char, String>,
    stats: LexiconStats,
}

fn is_valid_pinyin(s: &str) -> bool {
    let Some(last) = s.chars().last() else {
        return false;
    };
    ('1'..='5').contains(&last)
        && s.len() >= 2
        && s[..s.len() - 1].chars().all(|c| c.is_ascii_lowercase())
}

impl Lexicon {
    /// Loads a lexicon from two TSV readers. `english_name` /
    /// `mandarin_name` label error messages.
    pub fn from_readers<E: Read, M: Read>(
        english: E,
        english_name: &str,
        mandarin: M,
        mandarin_name: &str,
    ) -> Result<Self, LexiconError> {
        let mut duplicates = 0;

        let mut english_map: HashMap<String, Vec<String>> = HashMap::new();
        for (line, (key, value)) in parse_tsv(english, english_name)? {
            let word = key.to_lowercase();
            let phonemes: Vec<String> = value.split_whitespace().map(str::to_owned).collect();
            if phonemes.is_empty() {
                return Err(LexiconError::Malformed {
                    file: english_name.to_owned(),
                    line,
                    reason: format!("word `{word}` has no phonemes"),
                });
            }
            if english_map.contains_key(&word) {
                duplicates += 1;
            } else {
                english_map.insert(word, phonemes);
            }
        }

        let mut mandarin_map: HashMap<char, String> = HashMap::new();
        for (line, (key, value)) in parse_tsv(mandarin, mandarin_name)? {
            let mut key_chars = key.chars();
            let (Some(ch), None) = (key_chars.next(), key_chars.next()) else {
                return Err(LexiconError::Malformed {
                    file: mandarin_name.to_owned(),
                    line,
                    reason: format!("key `{key}` is not a single character"),
                });
            };
            if !is_valid_pinyin(&value) {
                return Err(LexiconError::Malformed {
                    file: mandarin_name.to_owned(),
                    line,
                    reason: format!(
                        "`{value}` is not a pinyin syllable (lowercase letters + tone 1-5)"
                    ),
                });
            }
            if mandarin_map.contains_key(&ch) {
                duplicates += 1;
            } else {
                mandarin_map.insert(ch, value);
            }
        }

        let stats = LexiconStats {
            english_entries: english_map.len(),
            mandarin_entries: mandarin_map.len(),
            duplicates_ignored: duplicates,
        };
        Ok(Self {
            english: english_map,
            mandarin: mandarin_map,
            stats,
        })
    }

    /// Loads a lexicon from TSV files on disk.
    pub fn from_paths(english: &Path, mandarin: &Path) -> Result<Self, LexiconError> {
        let e = std::fs::File::open(english)?;
        let m = std::fs::File::open(mandarin)?;
        Self::from_readers(
            BufReader::new(e),
            &english.display().to_string(),
            BufReader::new(m),
            &mandarin.display().to_string(),
        )
    }

    /// The small lexicon bundled for tests, demos and synthetic corpora.
    pub fn builtin() -> Self {
        Self::from_readers(
            ENGLISH_TEST_LEXICON.as_bytes(),
            "builtin english_test.tsv",
            PINYIN_TEST_LEXICON.as_bytes(),
            "builtin pinyin_test.tsv",
        )
        .expect("bundled lexicons are valid")
    }

    pub fn english(&self, word: &str) -> Option<&[String]> {
        self.english.get(word).map(Vec::as_slice)
    }

    pub fn pinyin(&self, ch: char) -> Option<&str> {
        self.mandarin.get(&ch).map(String::as_str)
    }

    pub fn stats(&self) -> LexiconStats {
        self.stats
    }
}

/// Parses `key<TAB>value` lines, skipping blanks and `#` comments.
/// Returns (line number, (key, value)) pairs in file order.
fn parse_tsv<R: Read>(reader: R, name: &str) -> Result<Vec<(usize, (String, String))>, LexiconError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('\t') else {
            return Err(LexiconError::Malformed {
                file: name.to_owned(),
                line: lineno,
                reason: "expected key<TAB>value".to_owned(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(LexiconError::Malformed {
                file: name.to_owned(),
                line: lineno,
                reason: "empty key or value".to_owned(),
            });
        }
        out.push((lineno, (key.to_owned(), value.to_owned())));
    }
    Ok(out)
}

/// Options for [`phonemize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhonemizeConfig {
    /// Keep the tone digit on pinyin syllables (default). With tones
    /// stripped, tone-only differences stop counting as phoneme errors.
    pub keep_tones: bool,
}

impl Default for PhonemizeConfig {
    fn default() -> Self {
        Self { keep_tones: true }
    }
}

/// A flat phoneme-unit sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhonemeSequence {
    pub phonemes: Vec<String>,
}

impl PhonemeSequence {
    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }
}

/// English letter names for spelled-out OOV words ("zq" → Z IY K Y UW).
fn letter_phonemes(c: char) -> Option<&'static [&'static str]> {
    const NAMES: [&[&str]; 26] = [
        &["EY"],                              // a
        &["B", "IY"],                         // b
        &["S", "IY"],                         // c
        &["D", "IY"],                         // d
        &["IY"],                              // e
        &["EH", "F"],                         // f
        &["JH", "IY"],                        // g
        &["EY", "CH"],                        // h
        &["AY"],                              // i
        &["JH", "EY"],                        // j
        &["K", "EY"],                         // k
        &["EH", "L"],                         // l
        &["EH", "M"],                         // m
        &["EH", "N"],                         // n
        &["OW"],                              // o
        &["P", "IY"],                         // p
        &["K", "Y", "UW"],                    // q
        &["AA", "R"],                         // r
        &["EH", "S"],                         // s
        &["T", "IY"],                         // t
        &["Y", "UW"],                         // u
        &["V", "IY"],                         // v
        &["D", "AH", "B", "AH", "L", "Y", "UW"], // w
        &["EH", "K", "S"],                    // x
        &["W", "AY"],                         // y
        &["Z", "IY"],                         // z
    ];
    c.to_ascii_lowercase()
        .is_ascii_lowercase()
        .then(|| NAMES[(c.to_ascii_lowercase() as u8 - b'a') as usize])
}

/// English digit names for numeric tokens ("42" → F AO R T UW).
fn digit_phonemes(c: char) -> &'static [&'static str] {
    const NAMES: [&[&str]; 10] = [
        &["Z", "IY", "R", "OW"], // 0
        &["W", "AH", "N"],       // 1
        &["T", "UW"],            // 2
        &["TH", "R", "IY"],      // 3
        &["F", "AO", "R"],       // 4
        &["F", "AY", "V"],       // 5
        &["S", "IH", "K", "S"],  // 6
        &["S", "EH", "V", "AH", "N"], // 7
        &["EY", "T"],            // 8
        &["N", "AY", "N"],       // 9
    ];
    debug_assert!(c.is_ascii_digit());
    NAMES[(c as u8 - b'0') as usize]
}

fn pinyin_unit(syllable: &str, cfg: &PhonemizeConfig) -> String {
    if cfg.keep_tones {
        syllable.to_owned()
    } else {
        syllable
            .strip_suffix(['1', '2', '3', '4', '5'])
            .unwrap_or(syllable)
            .to_owned()
    }
}

/// Expands a token sequence to phoneme units. Total: every token expands
/// to at least one unit except Latin words made solely of characters with
/// no letter name (which cannot come out of the tokenizer's own alphabet).
pub fn phonemize(seq: &TokenSequence, lexicon: &Lexicon, cfg: &PhonemizeConfig) -> PhonemeSequence {
    let mut phonemes = Vec::with_capacity(seq.len() * 2);
    for token in &seq.tokens {
        match token.kind {
            TokenKind::CjkChar => {
                let ch = token.surface.chars().next().expect("CJK token is one char");
                match lexicon.pinyin(ch) {
                    Some(syllable) => phonemes.push(pinyin_unit(syllable, cfg)),
                    // Unknown character: the surface itself becomes one
                    // opaque unit, so agreement on it still aligns.
                    None => phonemes.push(token.surface.clone()),
                }
            }
            TokenKind::LatinWord => match lexicon.english(&token.surface) {
                Some(pron) => phonemes.extend(pron.iter().cloned()),
                None => {
                    for ch in token.surface.chars() {
                        if let Some(names) = letter_phonemes(ch) {
                            phonemes.extend(names.iter().map(|&s| s.to_owned()));
                        }
                        // Apostrophes contribute nothing when spelling out.
                    }
                }
            },
            TokenKind::Numeric => {
                for ch in token.surface.chars() {
                    phonemes.extend(digit_phonemes(ch).iter().map(|&s| s.to_owned()));
                }
            }
        }
    }
    PhonemeSequence { phonemes }
}
