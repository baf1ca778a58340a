//! Shapes produced by the mask templates. Detectors ignore them so a second
//! pass over sanitized output finds nothing new.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

const SHAPES: &str = concat!(
    r"REDACTED_[0-9a-f]{12}",
    r"|user_[0-9a-f]{12}@example\.com",
    r"|author_[0-9a-f]{12}@example\.invalid",
    r"|Person_[0-9a-f]{12}",
    r"|Org_[0-9a-f]{12}",
    r"|Author_[0-9a-f]{12}",
    r"|[0-9a-f]{8}\.example\.invalid",
    r"|192\.0\.2\.(?:25[0-4]|2[0-4][0-9]|1[0-9][0-9]|[1-9][0-9]?)",
    r"|\+0000000000",
    r"|\[[A-Za-z0-9_.-]+:[0-9a-f]{12}\]",
);

fn exact() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!("^(?:{SHAPES})$")).unwrap())
}

fn anywhere() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!("(?:{SHAPES})")).unwrap())
}

pub fn is_mask_artifact(candidate: &str) -> bool {
    exact().is_match(candidate)
}

/// Byte ranges of every mask-shaped substring of `text`.
pub fn artifact_spans(text: &str) -> Vec<Range<usize>> {
    anywhere().find_iter(text).map(|m| m.range()).collect()
}
