use std::ops::Range;
use std::path::Path;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

use super::{Category, Hit};
use crate::error::{Result, ScrubError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dictionary {
    pub name: String,
    pub terms: Vec<String>,
}

impl Dictionary {
    pub fn category(&self) -> Category {
        match self.name.as_str() {
            "codenames" => Category::Codename,
            "clients" => Category::Client,
            "orgs" => Category::OrgTerm,
            "domains" => Category::DomainTerm,
            _ => Category::Term,
        }
    }

    /// One term per line; blank lines and `#` lines ignored.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let terms: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        if terms.is_empty() {
            return Err(ScrubError::EmptyDictionary(name.to_owned()));
        }
        Ok(Dictionary { name: name.to_owned(), terms })
    }
}

/// Reads `dir/*.txt` in name order. Empty dictionaries are skipped and
/// reported in the second element.
pub fn load_dictionaries(dir: &Path) -> Result<(Vec<Dictionary>, Vec<ScrubError>)> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| ScrubError::io(format!("cannot read {}", dir.display()), e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt") && p.is_file())
        .collect();
    paths.sort();
    let mut dicts = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ScrubError::io(format!("cannot read {}", path.display()), e))?;
        match Dictionary::parse(&name, &text) {
            Ok(d) => dicts.push(d),
            Err(e) => {
                log::warn!("{e}");
                skipped.push(e);
            }
        }
    }
    Ok((dicts, skipped))
}

/// Lowercased copy of a text with a map back to the original byte offsets.
pub(crate) struct Folded {
    pub text: String,
    starts: Vec<usize>,
    ends: Vec<usize>,
    len: usize,
}

impl Folded {
    pub fn new(original: &str) -> Self {
        let mut text = String::with_capacity(original.len());
        let mut starts = Vec::with_capacity(original.len());
        let mut ends = Vec::with_capacity(original.len());
        for (at, c) in original.char_indices() {
            let before = text.len();
            text.extend(c.to_lowercase());
            for _ in before..text.len() {
                starts.push(at);
                ends.push(at + c.len_utf8());
            }
        }
        Folded { text, starts, ends, len: original.len() }
    }

    /// Original byte range covering folded range `r` (non-empty).
    pub fn original(&self, r: Range<usize>) -> Range<usize> {
        debug_assert!(r.end > r.start && r.end <= self.starts.len().max(self.len));
        self.starts[r.start]..self.ends[r.end - 1]
    }
}

pub fn fold(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

#[derive(Clone, Debug)]
pub struct DictionaryDetector {
    automaton: AhoCorasick,
    meta: Vec<(Category, String)>,
    domains: Vec<String>,
}

impl DictionaryDetector {
    pub fn new(dicts: &[Dictionary]) -> Result<Self> {
        let mut patterns = Vec::new();
        let mut meta = Vec::new();
        let mut domains = Vec::new();
        for d in dicts {
            for term in &d.terms {
                patterns.push(fold(term));
                meta.push((d.category(), d.name.clone()));
                if d.category() == Category::DomainTerm {
                    domains.push(term.clone());
                }
            }
        }
        let automaton = AhoCorasickBuilder::new()
            .match_kind(MatchKind::Standard)
            .build(&patterns)
            .map_err(|e| ScrubError::Config(format!("dictionary automaton: {e}")))?;
        Ok(DictionaryDetector { automaton, meta, domains })
    }

    /// Terms of the `domains` dictionary, shared with the endpoint detector.
    pub fn partner_domains(&self) -> &[String] {
        &self.domains
    }

    pub fn find(&self, text: &str) -> Vec<Hit> {
        if text.is_empty() {
            return Vec::new();
        }
        let folded = Folded::new(text);
        self.automaton
            .find_overlapping_iter(&folded.text)
            .map(|m| {
                let (category, name) = &self.meta[m.pattern().as_usize()];
                Hit::new(folded.original(m.range()), *category, name)
            })
            .collect()
    }
}
