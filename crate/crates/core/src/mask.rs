//! Salted pseudonyms, overlap resolution, in-place replacement and the
//! redaction manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::{Category, Finding, Surface};
use crate::error::{Result, ScrubError};

pub const SALT_ENV: &str = "SCRUB_SALT";

#[derive(Clone)]
pub struct Salt {
    bytes: Vec<u8>,
}

impl Salt {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(ScrubError::EmptySalt);
        }
        Ok(Salt { bytes })
    }

    /// File contents minus one trailing line break.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut bytes = std::fs::read(path)
            .map_err(|e| ScrubError::io(format!("cannot read salt file {}", path.display()), e))?;
        if bytes.ends_with(b"\n") {
            bytes.pop();
            if bytes.ends_with(b"\r") {
                bytes.pop();
            }
        }
        Self::new(bytes)
    }

    pub fn from_env() -> Result<Self> {
        Self::new(std::env::var_os(SALT_ENV).map(|v| v.into_encoded_bytes()).unwrap_or_default())
    }

    /// `--salt-file` if given, else `SCRUB_SALT`.
    pub fn resolve(file: Option<&Path>) -> Result<Self> {
        match file {
            Some(p) => Self::from_file(p),
            None => Self::from_env(),
        }
    }

    /// First 8 hex digits of SHA-256 over the salt.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))[..8].to_owned()
    }
}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Salt({})", self.fingerprint())
    }
}

pub fn hmac_hex(salt: &Salt, value: &str) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(&salt.bytes).expect("any key length");
    mac.update(value.as_bytes());
    hex::encode(mac.finalize().into_bytes())
}

pub fn hash12(salt: &Salt, value: &str) -> String {
    hmac_hex(salt, value)[..12].to_owned()
}

pub fn hash8(salt: &Salt, value: &str) -> String {
    hmac_hex(salt, value)[..8].to_owned()
}

/// Something that gets a pseudonym: a finding category or an author field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MaskClass {
    Category(Category),
    AuthorName,
    AuthorEmail,
}

impl MaskClass {
    pub fn name(self) -> String {
        match self {
            MaskClass::Category(c) => serde_json::to_value(c)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            MaskClass::AuthorName => "AUTHOR_NAME".into(),
            MaskClass::AuthorEmail => "AUTHOR_EMAIL".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "AUTHOR_NAME" => Some(MaskClass::AuthorName),
            "AUTHOR_EMAIL" => Some(MaskClass::AuthorEmail),
            _ => serde_json::from_value(serde_json::Value::String(s.to_owned()))
                .ok()
                .map(MaskClass::Category),
        }
    }
}

impl Serialize for MaskClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for MaskClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        MaskClass::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown class {s}")))
    }
}

impl From<Category> for MaskClass {
    fn from(c: Category) -> Self {
        MaskClass::Category(c)
    }
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

/// Replacement text for `value`. `label` is the custom rule's mask label;
/// it defaults to `name`.
pub fn mask_for(class: MaskClass, value: &str, salt: &Salt, label: Option<&str>) -> Result<String> {
    let h12 = || hash12(salt, value);
    Ok(match class {
        MaskClass::AuthorName => format!("Author_{}", h12()),
        MaskClass::AuthorEmail => format!("author_{}@example.invalid", h12()),
        MaskClass::Category(c) => match c {
            Category::Person => format!("Person_{}", h12()),
            Category::Org => format!("Org_{}", h12()),
            Category::Email => format!("user_{}@example.com", h12()),
            Category::Secret | Category::Jwt => format!("REDACTED_{}", h12()),
            Category::InternalDomain | Category::DomainTerm => {
                format!("{}.example.invalid", hash8(salt, value))
            }
            Category::PrivateIp | Category::Ipv4 => {
                let n = u64::from_str_radix(&h12(), 16).expect("hex digest");
                format!("192.0.2.{}", n % 254 + 1)
            }
            Category::Phone => "+0000000000".into(),
            Category::Url => format!("[url:{}]", h12()),
            Category::Custom => {
                let label = label.unwrap_or("name");
                if !valid_label(label) {
                    return Err(ScrubError::UnmaskableCategory(format!(
                        "CUSTOM mask label {label:?}"
                    )));
                }
                format!("[{label}:{}]", h12())
            }
            Category::Codename => format!("[codename:{}]", h12()),
            Category::Client => format!("[client:{}]", h12()),
            Category::OrgTerm => format!("[org:{}]", h12()),
            Category::Term => format!("[term:{}]", h12()),
        },
    })
}

fn overlaps(a: &std::ops::Range<usize>, b: &std::ops::Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

/// Greedy per location: longest span first, then detector priority, then
/// leftmost. Output is canonically ordered.
pub fn resolve_overlaps(findings: Vec<Finding>) -> Vec<Finding> {
    let mut groups: BTreeMap<(Surface, crate::detect::Target), Vec<Finding>> = BTreeMap::new();
    for f in findings {
        groups
            .entry((f.surface, f.locator.target.clone()))
            .or_default()
            .push(f);
    }
    let mut kept = Vec::new();
    for (_, mut group) in groups {
        group.sort_by_key(|f| {
            (
                std::cmp::Reverse(f.locator.span.len()),
                f.detector.priority(),
                f.locator.span.start,
                f.category,
            )
        });
        // Accepted spans never overlap, so only the one starting closest
        // before `end` can collide.
        let mut chosen: BTreeMap<usize, Finding> = BTreeMap::new();
        for f in group {
            let span = f.span();
            let clash = chosen
                .range(..span.end.max(span.start + 1))
                .next_back()
                .is_some_and(|(_, c)| overlaps(&c.locator.span, &span) || c.locator.span == span);
            if !clash {
                chosen.insert(span.start, f);
            }
        }
        kept.extend(chosen.into_values());
    }
    crate::detect::canonical_order(kept)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub category: MaskClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<String>,
    pub pseudonym: String,
    pub occurrences: u64,
    pub surfaces: BTreeSet<Surface>,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    salt_fingerprint: String,
    entries: usize,
}

const MANIFEST_FORMAT: &str = "scrub-manifest-v1";

/// Originals → pseudonyms with occurrence counts, aggregated by
/// (class, original, pseudonym).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<(MaskClass, String, String), (u64, BTreeSet<Surface>)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, class: MaskClass, original: &str, pseudonym: &str, surface: Surface, n: u64) {
        let e = self
            .entries
            .entry((class, original.to_owned(), pseudonym.to_owned()))
            .or_default();
        e.0 += n;
        e.1.insert(surface);
    }

    pub fn merge(&mut self, other: &Manifest) {
        for ((c, o, p), (n, surfaces)) in &other.entries {
            let e = self.entries.entry((*c, o.clone(), p.clone())).or_default();
            e.0 += n;
            e.1.extend(surfaces.iter().copied());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> Vec<ManifestEntry> {
        self.entries
            .iter()
            .map(|((c, o, p), (n, s))| ManifestEntry {
                category: *c,
                original: Some(o.clone()),
                pseudonym: p.clone(),
                occurrences: *n,
                surfaces: s.clone(),
            })
            .collect()
    }

    /// Header line, then one entry per line. The public variant carries no
    /// originals.
    pub fn to_jsonl(&self, salt: &Salt, internal: bool) -> String {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            salt_fingerprint: salt.fingerprint(),
            entries: self.entries.len(),
        };
        let mut out = serde_json::to_string(&header).unwrap();
        out.push('\n');
        for mut e in self.entries() {
            if !internal {
                e.original = None;
            }
            out.push_str(&serde_json::to_string(&e).unwrap());
            out.push('\n');
        }
        out
    }

    /// Salt fingerprint and entries of a manifest written by `to_jsonl`.
    pub fn parse_jsonl(text: &str) -> Result<(String, Vec<ManifestEntry>)> {
        let bad = |e: String| ScrubError::Config(format!("manifest: {e}"));
        let mut lines = text.lines();
        let header: ManifestHeader = serde_json::from_str(lines.next().unwrap_or(""))
            .map_err(|e| bad(e.to_string()))?;
        if header.format != MANIFEST_FORMAT {
            return Err(bad(format!("unknown format {}", header.format)));
        }
        let entries = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<ManifestEntry>>>()?;
        Ok((header.salt_fingerprint, entries))
    }
}

/// Replaces every finding's span with its mask. Findings must not overlap;
/// bytes outside them are copied unchanged.
pub fn apply_replacements(text: &str, findings: &[Finding], salt: &Salt) -> Result<(String, Manifest)> {
    let mut order: Vec<&Finding> = findings.iter().collect();
    order.sort_by_key(|f| std::cmp::Reverse(f.locator.span.start));
    let mut out = text.to_owned();
    let mut manifest = Manifest::new();
    let mut floor = text.len();
    for f in order {
        let span = f.span();
        if span.start > span.end
            || span.end > floor
            || !text.is_char_boundary(span.start)
            || !text.is_char_boundary(span.end)
        {
            return Err(ScrubError::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len: text.len(),
            });
        }
        floor = span.start;
        let original = &text[span.clone()];
        let class = MaskClass::Category(f.category);
        let pseudonym = mask_for(class, original, salt, f.mask_label.as_deref())?;
        out.replace_range(span, &pseudonym);
        manifest.record(class, original, &pseudonym, f.surface, 1);
    }
    Ok((out, manifest))
}
