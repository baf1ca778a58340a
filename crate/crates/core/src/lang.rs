//! Extension → language table shared by the zone lexer and the metadata
//! extractor. A default table is compiled in; `--lang-map` swaps it for a
//! user-supplied file with the same schema.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::error::{Result, ScrubError};

const BUILTIN: &str = include_str!("../data/langmap.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LangClass {
    Code,
    Config,
    Doc,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct StringSpec {
    pub open: String,
    pub close: String,
    #[serde(default)]
    pub escape: Option<char>,
    #[serde(default)]
    pub multiline: bool,
}

/// Comment and string delimiters for one lexer family.
#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
pub struct LexSpec {
    #[serde(default)]
    pub line: Vec<String>,
    #[serde(default)]
    pub block: Vec<(String, String)>,
    #[serde(default)]
    pub strings: Vec<StringSpec>,
    /// Line markers only count at the start of a word (shell `#`).
    #[serde(default)]
    pub line_needs_word_start: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum FunctionStyle {
    /// `keyword name(...) { ... }`
    Keyword { keywords: Vec<String> },
    /// `type name(...) qualifiers { ... }`
    CLike,
    /// `def name(...):` followed by an indented block
    Indent { keywords: Vec<String> },
}

#[derive(Clone, Debug, Deserialize)]
pub struct Language {
    pub name: String,
    pub class: LangClass,
    #[serde(default)]
    pub extensions: Vec<String>,
    #[serde(default)]
    pub filenames: Vec<String>,
    #[serde(default)]
    pub lexer: Option<String>,
    #[serde(default)]
    pub functions: Option<FunctionStyle>,
}

#[derive(Deserialize)]
struct RawMap {
    lexers: HashMap<String, LexSpec>,
    languages: Vec<Language>,
}

#[derive(Clone, Debug)]
pub struct LangMap {
    languages: Vec<Language>,
    lexers: HashMap<String, LexSpec>,
    by_ext: HashMap<String, usize>,
    by_filename: HashMap<String, usize>,
    by_name: HashMap<String, usize>,
}

impl LangMap {
    pub fn builtin() -> &'static LangMap {
        static MAP: OnceLock<LangMap> = OnceLock::new();
        MAP.get_or_init(|| LangMap::from_json(BUILTIN).expect("bundled language map is valid"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawMap = serde_json::from_str(text)
            .map_err(|e| ScrubError::Config(format!("language map: {e}")))?;
        let mut map = LangMap {
            languages: Vec::new(),
            lexers: raw.lexers,
            by_ext: HashMap::new(),
            by_filename: HashMap::new(),
            by_name: HashMap::new(),
        };
        for lang in raw.languages {
            if let Some(lexer) = &lang.lexer {
                if !map.lexers.contains_key(lexer) {
                    return Err(ScrubError::Config(format!(
                        "language {} names unknown lexer {lexer}",
                        lang.name
                    )));
                }
            }
            let idx = map.languages.len();
            for ext in &lang.extensions {
                map.by_ext.entry(ext.to_ascii_lowercase()).or_insert(idx);
            }
            for name in &lang.filenames {
                map.by_filename.entry(name.clone()).or_insert(idx);
            }
            map.by_name.insert(lang.name.clone(), idx);
            map.languages.push(lang);
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScrubError::io(format!("cannot read {}", path.display()), e))?;
        Self::from_json(&text)
    }

    /// Exact filename match first, then the lowercased extension.
    pub fn language_for(&self, path: &str) -> Option<&Language> {
        let file = path.rsplit('/').next().unwrap_or(path);
        if let Some(&i) = self.by_filename.get(file) {
            return Some(&self.languages[i]);
        }
        let (_, ext) = file.rsplit_once('.')?;
        self.by_ext
            .get(&ext.to_ascii_lowercase())
            .map(|&i| &self.languages[i])
    }

    pub fn language(&self, name: &str) -> Option<&Language> {
        self.by_name.get(name).map(|&i| &self.languages[i])
    }

    pub fn lexer_for(&self, language: &str) -> Option<&LexSpec> {
        self.language(language)
            .and_then(|l| l.lexer.as_deref())
            .and_then(|name| self.lexers.get(name))
    }

    /// Code languages with a lexer; only these count toward `loc`.
    pub fn is_supported(&self, language: &str) -> bool {
        self.language(language)
            .is_some_and(|l| l.class == LangClass::Code)
            && self.lexer_for(language).is_some()
    }

    pub fn languages(&self) -> &[Language] {
        &self.languages
    }
}
