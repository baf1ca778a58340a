//! The JSON config file shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::{
    load_dictionaries, load_rules, Detector, DetectorSet, DictionaryDetector, GazetteerEntry,
    GazetteerNer, HttpNer, NerClient, RegexPiiDetector, Scanner, SecretsDetector,
};
use crate::detect::ner::{DEFAULT_MIN_SCORE, NER_URL_ENV};
use crate::error::{Result, ScrubError};
use crate::lang::LangMap;
use crate::mask::Salt;
use crate::pipeline::{DenyGlobs, PipelineConfig, DEFAULT_DENY_GLOBS};

pub const DEFAULT_THRESHOLD_MB: f64 = 95.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NerMode {
    #[default]
    Disabled,
    Http,
    Gazetteer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NerConfig {
    pub mode: NerMode,
    /// Falls back to `SCRUB_NER_URL`.
    pub url: Option<String>,
    pub min_score: f64,
    pub chunk_size: usize,
    pub overlap: usize,
    pub gazetteer: Vec<GazetteerEntry>,
}

impl Default for NerConfig {
    fn default() -> Self {
        NerConfig {
            mode: NerMode::Disabled,
            url: None,
            min_score: DEFAULT_MIN_SCORE,
            chunk_size: 2000,
            overlap: 200,
            gazetteer: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub detectors: Vec<Detector>,
    pub deny_globs: Vec<String>,
    /// Custom REGEX_PII rules.
    pub rules_file: Option<PathBuf>,
    /// Replaces the bundled secret rules.
    pub secret_rules_file: Option<PathBuf>,
    pub dict_dir: Option<PathBuf>,
    pub lang_map: Option<PathBuf>,
    pub ner: NerConfig,
    pub verbatim_patterns: bool,
    pub aggressive_urls: bool,
    pub require_ner: bool,
    pub threshold_mb: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            detectors: Detector::ALL.to_vec(),
            deny_globs: DEFAULT_DENY_GLOBS.iter().map(|s| s.to_string()).collect(),
            rules_file: None,
            secret_rules_file: None,
            dict_dir: None,
            lang_map: None,
            ner: NerConfig::default(),
            verbatim_patterns: false,
            aggressive_urls: false,
            require_ner: false,
            threshold_mb: DEFAULT_THRESHOLD_MB,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ScrubError::Config(e.to_string()))
    }

    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScrubError::io(format!("cannot read {}", path.display()), e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.rules_file,
            &mut cfg.secret_rules_file,
            &mut cfg.dict_dir,
            &mut cfg.lang_map,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn lang_map(&self) -> Result<LangMap> {
        match &self.lang_map {
            Some(p) => LangMap::load(p),
            None => Ok(LangMap::builtin().clone()),
        }
    }

    fn ner_client(&self) -> Option<NerClient> {
        let backend: Box<dyn crate::detect::NerBackend> = match self.ner.mode {
            NerMode::Disabled => return None,
            NerMode::Gazetteer => Box::new(GazetteerNer::new(self.ner.gazetteer.clone())),
            NerMode::Http => {
                let url = self
                    .ner
                    .url
                    .clone()
                    .or_else(|| std::env::var(NER_URL_ENV).ok())
                    .unwrap_or_default();
                Box::new(HttpNer::new(&url))
            }
        };
        let mut client = NerClient::new(backend);
        client.min_score = self.ner.min_score;
        client.chunk_size = self.ner.chunk_size;
        client.overlap = self.ner.overlap;
        Some(client)
    }

    pub fn scanner(&self) -> Result<Scanner> {
        let secrets = match &self.secret_rules_file {
            Some(p) => SecretsDetector::with_rules_file(p)?,
            None => SecretsDetector::bundled(),
        };
        let custom = match &self.rules_file {
            Some(p) => load_rules(p)?,
            None => Vec::new(),
        };
        let dictionary = match &self.dict_dir {
            Some(dir) => {
                let (dicts, skipped) = load_dictionaries(dir)?;
                for e in skipped {
                    log::warn!("{e}");
                }
                Some(DictionaryDetector::new(&dicts)?)
            }
            None => None,
        };
        let mut scanner = Scanner::new(
            secrets,
            RegexPiiDetector::new(self.verbatim_patterns, custom),
            dictionary,
            self.ner_client(),
        );
        scanner.aggressive_urls = self.aggressive_urls;
        Ok(scanner)
    }

    pub fn pipeline(&self, salt: Salt) -> Result<PipelineConfig> {
        let mut detectors: DetectorSet = self.detectors.iter().copied().collect();
        if self.ner.mode == NerMode::Disabled {
            detectors.remove(Detector::Ner);
        }
        Ok(PipelineConfig {
            scanner: self.scanner()?,
            lang: self.lang_map()?,
            salt,
            detectors,
            deny: DenyGlobs::new(&self.deny_globs)?,
            require_ner: self.require_ner,
        })
    }
}
