//! Pattern rule files: `[{name, pattern, flags?, mask_label?, group?}]` in
//! YAML (JSON is accepted too, being a YAML subset).

use std::collections::HashSet;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::Deserialize;

use crate::error::{Result, ScrubError};

#[derive(Deserialize)]
struct RawRule {
    name: String,
    pattern: String,
    #[serde(default)]
    flags: Option<String>,
    #[serde(default)]
    mask_label: Option<String>,
    #[serde(default)]
    group: usize,
}

#[derive(Clone, Debug)]
pub struct PatternRule {
    pub name: String,
    pub regex: Regex,
    pub case_insensitive: bool,
    pub mask_label: String,
    /// Capture group reported as the match.
    pub group: usize,
}

impl PatternRule {
    pub fn new(name: &str, pattern: &str, case_insensitive: bool) -> Result<Self, String> {
        let regex = RegexBuilder::new(pattern)
            .case_insensitive(case_insensitive)
            .build()
            .map_err(|e| format!("rule {name}: {e}"))?;
        Ok(PatternRule {
            name: name.to_owned(),
            regex,
            case_insensitive,
            mask_label: name.to_owned(),
            group: 0,
        })
    }

    /// Byte ranges of every non-empty match (of `group`).
    pub fn find_iter<'a>(&'a self, text: &'a str) -> impl Iterator<Item = std::ops::Range<usize>> + 'a {
        self.regex.captures_iter(text).filter_map(move |c| {
            c.get(self.group)
                .map(|m| m.range())
                .filter(|r| !r.is_empty())
        })
    }
}

fn flags_case_insensitive(flags: &str) -> Result<bool, String> {
    let mut ci = false;
    for f in flags.split([',', '|', ' ']).filter(|f| !f.is_empty()) {
        match f {
            "i" | "I" | "IGNORECASE" | "re.IGNORECASE" | "re.I" => ci = true,
            other => return Err(format!("unsupported flag {other:?}")),
        }
    }
    Ok(ci)
}

pub fn parse_rules(text: &str, origin: &str) -> Result<Vec<PatternRule>> {
    let invalid = |detail: String| ScrubError::RulesFileInvalid {
        path: origin.to_owned(),
        detail,
    };
    let raw: Vec<RawRule> = serde_yaml::from_str(text).map_err(|e| invalid(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut rules = Vec::with_capacity(raw.len());
    for r in raw {
        if !seen.insert(r.name.clone()) {
            return Err(invalid(format!("duplicate rule name {}", r.name)));
        }
        let ci = flags_case_insensitive(r.flags.as_deref().unwrap_or(""))
            .map_err(|e| invalid(format!("rule {}: {e}", r.name)))?;
        let mut rule = PatternRule::new(&r.name, &r.pattern, ci).map_err(invalid)?;
        if r.group >= rule.regex.captures_len() {
            return Err(invalid(format!("rule {}: no capture group {}", r.name, r.group)));
        }
        rule.group = r.group;
        if let Some(label) = r.mask_label {
            rule.mask_label = label;
        }
        rules.push(rule);
    }
    Ok(rules)
}

pub fn load_rules(path: &Path) -> Result<Vec<PatternRule>> {
    let text = std::fs::read_to_string(path).map_err(|e| ScrubError::RulesFileInvalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    parse_rules(&text, &path.display().to_string())
}
