//! Findings and the five detector families.

pub mod artifact;
pub mod dictionary;
pub mod endpoint;
pub mod ner;
pub mod pii;
pub mod rules;
pub mod secrets;

use std::cmp::Reverse;
use std::fmt;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

pub use artifact::{artifact_spans, is_mask_artifact};
pub use dictionary::{load_dictionaries, Dictionary, DictionaryDetector};
pub use endpoint::EndpointDetector;
pub use ner::{GazetteerEntry, GazetteerNer, HttpNer, NerBackend, NerClient};
pub use pii::RegexPiiDetector;
pub use rules::{load_rules, parse_rules, PatternRule};
pub use secrets::SecretsDetector;

use crate::repo::{BlobId, CommitId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Detector {
    Secrets,
    RegexPii,
    Endpoint,
    Dictionary,
    Ner,
}

impl Detector {
    pub const ALL: [Detector; 5] = [
        Detector::Secrets,
        Detector::RegexPii,
        Detector::Endpoint,
        Detector::Dictionary,
        Detector::Ner,
    ];

    /// Lower wins when equally long findings overlap.
    pub fn priority(self) -> u8 {
        match self {
            Detector::Secrets => 0,
            Detector::Dictionary => 1,
            Detector::Endpoint => 2,
            Detector::RegexPii => 3,
            Detector::Ner => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Detector::Secrets => "SECRETS",
            Detector::RegexPii => "REGEX_PII",
            Detector::Endpoint => "ENDPOINT",
            Detector::Dictionary => "DICTIONARY",
            Detector::Ner => "NER",
        }
    }

    pub fn parse(s: &str) -> Option<Detector> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s) || d.name().replace('_', "").eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Secret,
    Email,
    Phone,
    Ipv4,
    Jwt,
    Url,
    Custom,
    Codename,
    Client,
    OrgTerm,
    DomainTerm,
    Term,
    PrivateIp,
    InternalDomain,
    Person,
    Org,
}

impl Category {
    pub const ALL: [Category; 16] = [
        Category::Secret,
        Category::Email,
        Category::Phone,
        Category::Ipv4,
        Category::Jwt,
        Category::Url,
        Category::Custom,
        Category::Codename,
        Category::Client,
        Category::OrgTerm,
        Category::DomainTerm,
        Category::Term,
        Category::PrivateIp,
        Category::InternalDomain,
        Category::Person,
        Category::Org,
    ];

    pub fn severity(self) -> Severity {
        match self {
            Category::Secret => Severity::Critical,
            Category::Ipv4 | Category::Url => Severity::Medium,
            _ => Severity::High,
        }
    }

    pub fn detector(self) -> Detector {
        match self {
            Category::Secret => Detector::Secrets,
            Category::Email
            | Category::Phone
            | Category::Ipv4
            | Category::Jwt
            | Category::Url
            | Category::Custom => Detector::RegexPii,
            Category::Codename
            | Category::Client
            | Category::OrgTerm
            | Category::DomainTerm
            | Category::Term => Detector::Dictionary,
            Category::PrivateIp | Category::InternalDomain => Detector::Endpoint,
            Category::Person | Category::Org => Detector::Ner,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Critical,
    High,
    Medium,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Surface {
    WorkingTree,
    CommitMeta,
    HistoryBlob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitField {
    Message,
    AuthorName,
    AuthorEmail,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Path(String),
    Commit { id: CommitId, field: CommitField },
    Blob(BlobId),
}

impl Target {
    fn basename(&self) -> Option<&str> {
        match self {
            Target::Path(p) => Some(p.rsplit('/').next().unwrap_or(p)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Locator {
    pub target: Target,
    pub span: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Finding {
    pub detector: Detector,
    pub category: Category,
    pub severity: Severity,
    pub surface: Surface,
    pub locator: Locator,
    pub matched: String,
    /// Secret rule, PII kind, dictionary stem or NER label.
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_label: Option<String>,
}

impl Finding {
    pub fn span(&self) -> Range<usize> {
        self.locator.span.clone()
    }
}

/// Raw detector output before it is tied to a location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hit {
    pub span: Range<usize>,
    pub category: Category,
    pub rule: String,
    pub mask_label: Option<String>,
}

impl Hit {
    pub fn new(span: Range<usize>, category: Category, rule: &str) -> Self {
        Hit { span, category, rule: rule.to_owned(), mask_label: None }
    }
}

/// (surface, locator, start, longest first, detector, category).
pub fn canonical_order(mut findings: Vec<Finding>) -> Vec<Finding> {
    findings.sort_by(|a, b| {
        let key = |f: &Finding| {
            (
                f.surface,
                f.locator.target.clone(),
                f.locator.span.start,
                Reverse(f.locator.span.end),
                f.detector,
                f.category,
            )
        };
        key(a)
            .cmp(&key(b))
            .then_with(|| a.rule.cmp(&b.rule))
            .then_with(|| a.matched.cmp(&b.matched))
    });
    findings
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct DetectorSet(u8);

impl DetectorSet {
    pub const fn empty() -> Self {
        DetectorSet(0)
    }

    pub fn all() -> Self {
        Detector::ALL.into_iter().collect()
    }

    /// The set applied to historic blobs: no secrets engine, no NER.
    pub fn history() -> Self {
        [Detector::RegexPii, Detector::Dictionary, Detector::Endpoint]
            .into_iter()
            .collect()
    }

    fn bit(d: Detector) -> u8 {
        1 << (d as u8)
    }

    pub fn contains(self, d: Detector) -> bool {
        self.0 & Self::bit(d) != 0
    }

    pub fn insert(&mut self, d: Detector) {
        self.0 |= Self::bit(d);
    }

    pub fn remove(&mut self, d: Detector) {
        self.0 &= !Self::bit(d);
    }

    pub fn intersect(self, other: DetectorSet) -> Self {
        DetectorSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Detector> {
        Detector::ALL.into_iter().filter(move |d| self.contains(*d))
    }
}

impl FromIterator<Detector> for DetectorSet {
    fn from_iter<I: IntoIterator<Item = Detector>>(iter: I) -> Self {
        let mut s = DetectorSet::empty();
        for d in iter {
            s.insert(d);
        }
        s
    }
}

impl Serialize for DetectorSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for DetectorSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<Detector>::deserialize(d)?.into_iter().collect())
    }
}

/// Dependency lockfiles and package manifests; URLs in them are left alone
/// unless aggressive URL masking is on.
pub const MANIFEST_FILES: &[&str] = &[
    "package.json",
    "package-lock.json",
    "npm-shrinkwrap.json",
    "yarn.lock",
    "pnpm-lock.yaml",
    "composer.json",
    "composer.lock",
    "Cargo.toml",
    "Cargo.lock",
    "go.mod",
    "go.sum",
    "Gemfile.lock",
    "Pipfile",
    "Pipfile.lock",
    "poetry.lock",
    "pyproject.toml",
    "requirements.txt",
    "pom.xml",
    "build.gradle",
    "build.gradle.kts",
    "packages.lock.json",
];

pub struct Scanner {
    pub secrets: SecretsDetector,
    pub pii: RegexPiiDetector,
    pub endpoints: EndpointDetector,
    pub dictionary: Option<DictionaryDetector>,
    pub ner: Option<NerClient>,
    pub aggressive_urls: bool,
    ner_failed: AtomicBool,
}

impl Default for Scanner {
    fn default() -> Self {
        Scanner::new(
            SecretsDetector::bundled(),
            RegexPiiDetector::new(false, Vec::new()),
            None,
            None,
        )
    }
}

impl Scanner {
    /// Partner domains from the `domains` dictionary feed the endpoint
    /// detector too.
    pub fn new(
        secrets: SecretsDetector,
        pii: RegexPiiDetector,
        dictionary: Option<DictionaryDetector>,
        ner: Option<NerClient>,
    ) -> Self {
        let partners = dictionary
            .as_ref()
            .map(|d| d.partner_domains().to_vec())
            .unwrap_or_default();
        Scanner {
            secrets,
            pii,
            endpoints: EndpointDetector::new(partners),
            dictionary,
            ner,
            aggressive_urls: false,
            ner_failed: AtomicBool::new(false),
        }
    }

    /// True once NER was requested but could not run.
    pub fn ner_skipped(&self) -> bool {
        self.ner_failed.load(Ordering::Relaxed)
    }

    fn hits(&self, text: &str, set: DetectorSet) -> Vec<(Detector, Hit)> {
        let mut out = Vec::new();
        let mut add = |d: Detector, hits: Vec<Hit>| out.extend(hits.into_iter().map(|h| (d, h)));
        if set.contains(Detector::Secrets) {
            add(Detector::Secrets, self.secrets.find(text));
        }
        if set.contains(Detector::RegexPii) {
            add(Detector::RegexPii, self.pii.find(text));
        }
        if set.contains(Detector::Endpoint) {
            add(Detector::Endpoint, self.endpoints.find(text));
        }
        if set.contains(Detector::Dictionary) {
            if let Some(d) = &self.dictionary {
                add(Detector::Dictionary, d.find(text));
            }
        }
        if set.contains(Detector::Ner) {
            match &self.ner {
                Some(client) if !self.ner_skipped() => match client.find(text) {
                    Ok(hits) => add(Detector::Ner, hits),
                    Err(e) => {
                        log::warn!("NER disabled for the rest of the run: {e}");
                        self.ner_failed.store(true, Ordering::Relaxed);
                    }
                },
                Some(_) => {}
                None => self.ner_failed.store(true, Ordering::Relaxed),
            }
        }
        out
    }

    /// Findings in `text[range]` for each range, with spans relative to
    /// `text`, in canonical order.
    pub fn scan_ranges(
        &self,
        text: &str,
        ranges: &[Range<usize>],
        target: &Target,
        surface: Surface,
        set: DetectorSet,
    ) -> Vec<Finding> {
        let skip_urls = !self.aggressive_urls
            && target.basename().is_some_and(|b| MANIFEST_FILES.contains(&b));
        let mut findings = Vec::new();
        for range in ranges {
            let piece = &text[range.clone()];
            if piece.is_empty() {
                continue;
            }
            let masks = artifact_spans(piece);
            for (detector, hit) in self.hits(piece, set) {
                let matched = &piece[hit.span.clone()];
                if is_mask_artifact(matched) {
                    continue;
                }
                if matches!(detector, Detector::Dictionary | Detector::Ner)
                    && masks.iter().any(|m| m.start <= hit.span.start && hit.span.end <= m.end)
                {
                    continue;
                }
                if skip_urls && hit.category == Category::Url {
                    continue;
                }
                findings.push(Finding {
                    detector,
                    category: hit.category,
                    severity: hit.category.severity(),
                    surface,
                    locator: Locator {
                        target: target.clone(),
                        span: hit.span.start + range.start..hit.span.end + range.start,
                    },
                    matched: matched.to_owned(),
                    rule: hit.rule,
                    mask_label: hit.mask_label,
                });
            }
        }
        canonical_order(findings)
    }

    pub fn scan(&self, text: &str, target: &Target, surface: Surface, set: DetectorSet) -> Vec<Finding> {
        self.scan_ranges(text, &[0..text.len()], target, surface, set)
    }
}
