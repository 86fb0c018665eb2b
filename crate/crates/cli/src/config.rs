//! Pipeline configuration: one TOML file covering every stage.
//!
//! Resolution order: `--config` flag, then the `CSFILTER_CONFIG`
//! environment variable, then built-in defaults. Individual command-line
//! flags override single fields after the file is loaded.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use csfilter_core::analysis::AnalysisConfig;
use csfilter_core::chunker::ChunkerConfig;
use csfilter_core::filter::FilterConfig;
use csfilter_core::hallucination::NgramConfig;
use csfilter_core::kdloss::KdLossConfig;
use csfilter_core::phonemizer::{Lexicon, PhonemizeConfig};
use csfilter_core::textnorm::{NormConfig, TextPrep, TimestampTemplate};

pub const CONFIG_ENV_VAR: &str = "CSFILTER_CONFIG";

/// Lexicon file locations. Both must be set to replace the bundled
/// lexicon; setting only one is a configuration error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconPaths {
    pub english_path: Option<PathBuf>,
    pub mandarin_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub chunker: ChunkerConfig,
    pub norm: NormConfig,
    pub ngram: NgramConfig,
    pub phonemize: PhonemizeConfig,
    pub lexicon: LexiconPaths,
    pub filter: FilterConfig,
    pub analysis: AnalysisConfig,
    pub kdloss: KdLossConfig<f64>,
    /// Worker threads for parallel stages; 0 means one per core. Excluded
    /// from report echoes because it never affects results, only speed.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub seed: u64,
}

impl PipelineConfig {
    /// Loads configuration, returning it with the path it came from (if
    /// any, for reporting).
    pub fn load(explicit: Option<&Path>) -> anyhow::Result<(Self, Option<PathBuf>)> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok((Self::default(), None));
        };
        let raw = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config `{}`", path.display()))?;
        let cfg: Self = toml::from_str(&raw)
            .map_err(|e| anyhow::anyhow!("config `{}`: {e}", path.display()))?;
        Ok((cfg, Some(path)))
    }

    /// Validates every section against its own rules.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.chunker.validate().context("config section [chunker]")?;
        self.norm.validate().context("config section [norm]")?;
        self.ngram
            .validate()
            .map_err(|e| anyhow::anyhow!("config section [ngram]: {e}"))?;
        self.filter.validate().context("config section [filter]")?;
        self.analysis.validate().context("config section [analysis]")?;
        self.kdloss.validate().context("config section [kdloss]")?;
        if self.lexicon.english_path.is_some() != self.lexicon.mandarin_path.is_some() {
            anyhow::bail!(
                "config section [lexicon]: english_path and mandarin_path \
                 must be set together (or both left unset for the bundled lexicon)"
            );
        }
        Ok(())
    }

    /// Builds the text preparation shared by every stage, from the
    /// normalization settings and the chunker's timestamp token format.
    pub fn build_prep(&self) -> anyhow::Result<TextPrep> {
        let template = TimestampTemplate::parse(&self.chunker.timestamp_token_format)
            .context("config chunker.timestamp_token_format")?;
        Ok(TextPrep::new(self.norm.clone(), template))
    }

    /// Loads the configured lexicon, or the bundled one when no paths are
    /// set.
    pub fn load_lexicon(&self) -> anyhow::Result<Lexicon> {
        match (&self.lexicon.english_path, &self.lexicon.mandarin_path) {
            (Some(en), Some(zh)) => Lexicon::from_paths(en, zh)
                .with_context(|| format!("loading lexicon `{}` / `{}`", en.display(), zh.display())),
            _ => Ok(Lexicon::builtin()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use csfilter_core::filter::FilterMethod;

    #[test]
    fn default_config_is_valid() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.filter.method, FilterMethod::Composite);
        assert_eq!(cfg.filter.alpha, 0.4);
        assert_eq!(cfg.workers, 0);
    }

    #[test]
    fn toml_round_trip_omits_workers() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        assert!(!text.contains("workers"));
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            "[filter]\nmethod = \"direct_mer\"\nalpha = 0.25\n\n[ngram]\nn = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.filter.method, FilterMethod::DirectMer);
        assert_eq!(cfg.filter.alpha, 0.25);
        assert_eq!(cfg.ngram.n, 3);
        assert_eq!(cfg.ngram.c, NgramConfig::default().c);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("[filter]\nalhpa = 0.3\n");
        assert!(err.is_err());
    }

    #[test]
    fn one_sided_lexicon_is_rejected() {
        let cfg: PipelineConfig =
            toml::from_str("[lexicon]\nenglish_path = \"en.tsv\"\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("lexicon"), "{err}");
    }
}
