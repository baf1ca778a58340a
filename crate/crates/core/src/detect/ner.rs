//! Client side of the NER wire protocol.
//!
//! `POST {url}/ner` with `{"text", "min_score"}` answers a list of
//! `{"start", "end", "label", "score"}` where offsets count characters.
//! `GET {url}/health` answers `{"mode", "ready"}`.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::dictionary::Folded;
use super::{Category, Hit};
use crate::error::{Result, ScrubError};

pub const NER_URL_ENV: &str = "SCRUB_NER_URL";
pub const DEFAULT_MIN_SCORE: f64 = 0.5;
pub const MIN_ENTITY_CHARS: usize = 3;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NerRequest {
    pub text: String,
    pub min_score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NerEntity {
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct NerHealth {
    pub mode: String,
    pub ready: bool,
}

pub trait NerBackend: Send + Sync {
    fn health(&self) -> Result<NerHealth>;
    fn annotate(&self, request: &NerRequest) -> Result<Vec<NerEntity>>;
}

pub struct HttpNer {
    base: String,
    agent: ureq::Agent,
}

impl HttpNer {
    pub fn new(url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(true)
            .build()
            .new_agent();
        HttpNer { base: url.trim_end_matches('/').to_owned(), agent }
    }

    fn unavailable(&self, e: impl std::fmt::Display) -> ScrubError {
        ScrubError::NerUnavailable(format!("{}: {e}", self.base))
    }
}

impl NerBackend for HttpNer {
    fn health(&self) -> Result<NerHealth> {
        let health: NerHealth = self
            .agent
            .get(format!("{}/health", self.base))
            .call()
            .map_err(|e| self.unavailable(e))?
            .body_mut()
            .read_json()
            .map_err(|e| self.unavailable(e))?;
        if !health.ready {
            return Err(self.unavailable("service not ready"));
        }
        Ok(health)
    }

    fn annotate(&self, request: &NerRequest) -> Result<Vec<NerEntity>> {
        self.agent
            .post(format!("{}/ner", self.base))
            .send_json(request)
            .map_err(|e| self.unavailable(e))?
            .body_mut()
            .read_json()
            .map_err(|e| self.unavailable(e))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(untagged)]
pub enum GazetteerEntry {
    Person(String),
    Labeled { text: String, label: String },
}

/// In-process stand-in for the service's gazetteer mode: exact,
/// case-insensitive matches scored 1.0.
#[derive(Clone, Debug, Default)]
pub struct GazetteerNer {
    entries: Vec<(String, String)>,
}

impl GazetteerNer {
    pub fn new(entries: impl IntoIterator<Item = GazetteerEntry>) -> Self {
        let entries = entries
            .into_iter()
            .map(|e| match e {
                GazetteerEntry::Person(t) => (t, "PER".to_owned()),
                GazetteerEntry::Labeled { text, label } => (text, label),
            })
            .filter(|(t, _)| !t.is_empty())
            .collect();
        GazetteerNer { entries }
    }
}

impl NerBackend for GazetteerNer {
    fn health(&self) -> Result<NerHealth> {
        Ok(NerHealth { mode: "gazetteer".into(), ready: true })
    }

    fn annotate(&self, request: &NerRequest) -> Result<Vec<NerEntity>> {
        let folded = Folded::new(&request.text);
        let char_at = |byte: usize| request.text[..byte].chars().count();
        let mut out = Vec::new();
        for (name, label) in &self.entries {
            let needle = super::dictionary::fold(name);
            for (at, _) in folded.text.match_indices(&needle) {
                let span = folded.original(at..at + needle.len());
                out.push(NerEntity {
                    start: char_at(span.start),
                    end: char_at(span.end),
                    label: label.clone(),
                    score: 1.0,
                });
            }
        }
        out.retain(|e| e.score >= request.min_score);
        out.sort_by_key(|e| (e.start, e.end));
        Ok(out)
    }
}

pub struct NerClient {
    backend: Box<dyn NerBackend>,
    pub min_score: f64,
    pub chunk_size: usize,
    pub overlap: usize,
}

impl NerClient {
    pub fn new(backend: Box<dyn NerBackend>) -> Self {
        NerClient { backend, min_score: DEFAULT_MIN_SCORE, chunk_size: 2000, overlap: 200 }
    }

    pub fn health(&self) -> Result<NerHealth> {
        self.backend.health()
    }

    /// Character windows `[start, end)` covering the text with `overlap`
    /// characters shared between neighbours.
    pub fn chunks(&self, chars: usize) -> Vec<(usize, usize)> {
        let size = self.chunk_size.max(1);
        let step = size.saturating_sub(self.overlap).max(1);
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars {
            let end = (start + size).min(chars);
            out.push((start, end));
            if end == chars {
                break;
            }
            start += step;
        }
        out
    }

    pub fn find(&self, text: &str) -> Result<Vec<Hit>> {
        let offsets: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let chars = offsets.len() - 1;
        let mut spans = BTreeSet::new();
        for (start, end) in self.chunks(chars) {
            let request = NerRequest {
                text: text[offsets[start]..offsets[end]].to_owned(),
                min_score: self.min_score,
            };
            for e in self.backend.annotate(&request)? {
                let category = match e.label.as_str() {
                    "PER" | "PERSON" => Category::Person,
                    "ORG" => Category::Org,
                    _ => continue,
                };
                if e.start >= e.end || e.end > end - start {
                    log::warn!("ignoring out-of-range NER entity {e:?}");
                    continue;
                }
                if e.score < self.min_score || e.end - e.start < MIN_ENTITY_CHARS {
                    continue;
                }
                spans.insert((offsets[start + e.start], offsets[start + e.end], category));
            }
        }
        Ok(spans
            .into_iter()
            .map(|(s, e, c)| Hit::new(s..e, c, if c == Category::Person { "PER" } else { "ORG" }))
            .collect())
    }
}
