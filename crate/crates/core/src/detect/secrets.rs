use std::path::Path;

use super::rules::{load_rules, parse_rules, PatternRule};
use super::{Category, Hit};
use crate::error::Result;

const BUNDLED: &str = include_str!("../../data/secret_rules.yaml");

/// Built-in secret rule engine; extra rules load from a file with the same
/// schema as the custom PII rules.
#[derive(Clone, Debug)]
pub struct SecretsDetector {
    rules: Vec<PatternRule>,
}

impl SecretsDetector {
    pub fn bundled() -> Self {
        SecretsDetector {
            rules: parse_rules(BUNDLED, "bundled secret rules").expect("bundled rules compile"),
        }
    }

    pub fn with_rules_file(path: &Path) -> Result<Self> {
        let mut d = Self::bundled();
        d.rules.extend(load_rules(path)?);
        Ok(d)
    }

    pub fn rules(&self) -> &[PatternRule] {
        &self.rules
    }

    pub fn find(&self, text: &str) -> Vec<Hit> {
        let mut hits = Vec::new();
        for rule in &self.rules {
            for span in rule.find_iter(text) {
                hits.push(Hit::new(span, Category::Secret, &rule.name));
            }
        }
        hits
    }
}
