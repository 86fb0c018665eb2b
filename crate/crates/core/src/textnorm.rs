//! Text normalization and mixed-script tokenization.
//!
//! Transcripts arrive as free-form strings that mix Mandarin characters,
//! English words, digits, punctuation from several scripts and inline
//! timestamp tokens such as `<|12.34|>`. Before any comparison the text is
//! reduced to a canonical form: timestamps stripped, Unicode normalized
//! (NFKC), lowercased, punctuation and symbols removed, whitespace
//! collapsed. Tokenization then yields one token per CJK character plus one
//! token per Latin word or digit run, which is the unit mix that the mixed
//! error rate is defined over.

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// Errors from text preparation configuration.
#[derive(Debug, thiserror::Error)]
pub enum TextError {
    /// The timestamp template did not contain exactly one `{:.Nf}` placeholder.
    #[error("invalid timestamp template `{template}`: {reason}")]
    BadTemplate { template: String, reason: String },
    /// A normalization option that is declared but not implemented was enabled.
    #[error("unsupported normalization option: {0}")]
    UnsupportedOption(&'static str),
}

/// Options for [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    /// Lowercase Latin text (default true).
    pub lowercase: bool,
    /// Convert traditional Chinese characters to simplified. Reserved: the
    /// option is accepted in config files for forward compatibility but this
    /// build rejects `true` at validation time rather than silently ignoring
    /// it.
    pub convert_traditional: bool,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            convert_traditional: false,
        }
    }
}

impl NormConfig {
    /// Rejects option combinations this build cannot honor.
    pub fn validate(&self) -> Result<(), TextError> {
        if self.convert_traditional {
            return Err(TextError::UnsupportedOption(
                "convert_traditional (traditional→simplified mapping is not bundled)",
            ));
        }
        Ok(())
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Canonicalizes a transcript: NFKC, optional lowercasing, punctuation and
/// symbol removal, whitespace collapsed to single spaces with no leading or
/// trailing space.
///
/// Apostrophes directly between two ASCII letters are kept (folded to `'`)
/// so English contractions survive as single words. All other punctuation
/// and symbols act as word boundaries. The result is idempotent:
/// `normalize(normalize(x)) == normalize(x)`.
pub fn normalize(text: &str, cfg: &NormConfig) -> String {
    // NFKC first so width/compatibility variants fold before the category
    // scan, then lowercase, then NFKC again: lowercasing can denormalize a
    // handful of codepoints and the scan below assumes normalized input.
    let folded: String = if cfg.lowercase {
        text.nfkc().flat_map(char::to_lowercase).collect()
    } else {
        text.nfkc().collect()
    };
    let chars: Vec<char> = folded.nfkc().collect();

    let mut out = String::with_capacity(folded.len());
    let mut pending_space = false;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        let keep = match c.general_category_group() {
            GeneralCategoryGroup::Punctuation | GeneralCategoryGroup::Symbol => {
                let flanked = is_apostrophe(c)
                    && i > 0
                    && chars[i - 1].is_ascii_alphabetic()
                    && chars.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic());
                if !flanked {
                    // Dropped punctuation separates words ("wer-time" → "wer time").
                    pending_space = true;
                }
                flanked
            }
            GeneralCategoryGroup::Separator => {
                pending_space = true;
                false
            }
            // Stray control/format characters (zero-width joiners and the
            // like) vanish without introducing a boundary.
            GeneralCategoryGroup::Other => false,
            _ => true,
        };
        if keep {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(if is_apostrophe(c) { '\'' } else { c });
        }
    }
    out
}

/// Classification of a token produced by [`tokenize_mixed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    /// A single CJK ideograph.
    CjkChar,
    /// A run of ASCII letters, possibly with internal apostrophes.
    LatinWord,
    /// A run of ASCII digits.
    Numeric,
}

/// Language bucket used for per-language error attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    Mandarin,
    English,
}

impl TokenKind {
    /// Language bucket for error attribution. Digit runs read out as
    /// English, so numerics count toward the English side.
    pub fn lang(self) -> Lang {
        match self {
            TokenKind::CjkChar => Lang::Mandarin,
            TokenKind::LatinWord | TokenKind::Numeric => Lang::English,
        }
    }
}

/// One comparison unit: a CJK character, a Latin word or a digit run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn new(surface: impl Into<String>, kind: TokenKind) -> Self {
        Self {
            surface: surface.into(),
            kind,
        }
    }
}

/// Token sequence produced by [`tokenize_mixed`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token surfaces in order, mostly useful in tests and debug output.
    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }
}

/// True for codepoints treated as CJK ideographs (one token per character).
pub fn is_cjk(c: char) -> bool {
    matches!(u32::from(c),
        0x4E00..=0x9FFF          // URO
        | 0x3400..=0x4DBF        // extension A
        | 0xF900..=0xFAFF        // compatibility ideographs
        | 0x20000..=0x2FA1F      // extensions B..F + supplement
    )
}

/// Splits normalized text into mixed-script comparison units: each CJK
/// character is its own token, ASCII letter runs (with internal
/// apostrophes) form word tokens, ASCII digit runs form numeric tokens.
/// Everything else is dropped.
pub fn tokenize_mixed(text: &str) -> TokenSequence {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_cjk(c) {
            tokens.push(Token::new(c.to_string(), TokenKind::CjkChar));
            i += 1;
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '\'') {
                i += 1;
            }
            let surface: String = chars[start..i].iter().collect();
            tokens.push(Token::new(surface, TokenKind::LatinWord));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let surface: String = chars[start..i].iter().collect();
            tokens.push(Token::new(surface, TokenKind::Numeric));
        } else {
            i += 1;
        }
    }
    TokenSequence { tokens }
}

/// Inline timestamp token syntax, e.g. `<|{:.2f}|>` for `<|12.34|>`.
///
/// The template string must contain exactly one `{:.Nf}` placeholder; the
/// literal text around it becomes the token delimiters.
#[derive(Debug, Clone)]
pub struct TimestampTemplate {
    template: String,
    prefix: String,
    suffix: String,
    decimals: usize,
    matcher: Regex,
}

pub const DEFAULT_TIMESTAMP_TEMPLATE: &str = "<|{:.2f}|>";

impl TimestampTemplate {
    pub fn parse(template: &str) -> Result<Self, TextError> {
        let placeholder = Regex::new(r"\{:\.(\d+)f\}").expect("static regex");
        let mut iter = placeholder.captures_iter(template);
        let caps = iter.next().ok_or_else(|| TextError::BadTemplate {
            template: template.to_owned(),
            reason: "missing `{:.Nf}` placeholder".to_owned(),
        })?;
        if iter.next().is_some() {
            return Err(TextError::BadTemplate {
                template: template.to_owned(),
                reason: "more than one placeholder".to_owned(),
            });
        }
        let whole = caps.get(0).expect("capture 0 always present");
        let decimals: usize = caps[1].parse().map_err(|_| TextError::BadTemplate {
            template: template.to_owned(),
            reason: "placeholder precision out of range".to_owned(),
        })?;
        if decimals > 9 {
            return Err(TextError::BadTemplate {
                template: template.to_owned(),
                reason: "placeholder precision out of range".to_owned(),
            });
        }
        let prefix = template[..whole.start()].to_owned();
        let suffix = template[whole.end()..].to_owned();
        let number = if decimals == 0 {
            r"\d+".to_owned()
        } else {
            format!(r"\d+\.\d{{{decimals}}}")
        };
        let matcher = Regex::new(&format!(
            "{}{}{}",
            regex::escape(&prefix),
            number,
            regex::escape(&suffix)
        ))
        .expect("escaped template parts always form a valid regex");
        Ok(Self {
            template: template.to_owned(),
            prefix,
            suffix,
            decimals,
            matcher,
        })
    }

    /// The template string this was parsed from.
    pub fn as_str(&self) -> &str {
        &self.template
    }

    /// Renders a timestamp token for an offset in seconds.
    pub fn format(&self, seconds: f64) -> String {
        format!(
            "{}{:.*}{}",
            self.prefix, self.decimals, seconds, self.suffix
        )
    }

    /// Removes every timestamp token, including ones adjacent to text.
    pub fn strip(&self, text: &str) -> String {
        self.matcher.replace_all(text, "").into_owned()
    }
}

impl Default for TimestampTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TIMESTAMP_TEMPLATE).expect("default template is valid")
    }
}

impl PartialEq for TimestampTemplate {
    fn eq(&self, other: &Self) -> bool {
        self.template == other.template
    }
}

/// Bundled text preparation settings: timestamp stripping followed by
/// normalization and tokenization. Every transcript comparison in the
/// pipeline goes through [`TextPrep::prepare`] so both sides are treated
/// identically.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TextPrep {
    pub norm: NormConfig,
    pub template: TimestampTemplate,
}

impl TextPrep {
    pub fn new(norm: NormConfig, template: TimestampTemplate) -> Self {
        Self { norm, template }
    }

    /// Full preparation: strip timestamps, normalize, tokenize.
    pub fn prepare(&self, text: &str) -> TokenSequence {
        tokenize_mixed(&normalize(&self.template.strip(text), &self.norm))
    }
}
