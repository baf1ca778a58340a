use regex::Regex;

use super::rules::PatternRule;
use super::{Category, Hit};

pub const EMAIL: &str = r"[a-zA-Z0-9_+-.]+@[a-zA-Z0-9-]+\.[a-zA-Z0-9.\-]+";
pub const PHONE: &str = r"\+[1-9][0-9]{7,14}";
pub const IPV4: &str = r"\b(?:(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])\.){3}(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])\b";
pub const JWT: &str = r"eyJ[A-Za-z0-9_-]{7,}\.[A-Za-z0-9_-]{10,}\.[A-Za-z0-9_-]{10,}";
pub const JWT_VERBATIM: &str = r"[A-Za-z0-9_.\-]+\.[A-Za-z0-9_.\-]+\.[A-Za-z0-9_.\-]+";
pub const URL: &str = r#"https?://[^\s"'`<>()\[\]{}]+"#;
pub const URL_VERBATIM: &str = r"https?://[^\s]+";

#[derive(Clone, Debug)]
pub struct RegexPiiDetector {
    email: Regex,
    phone: Regex,
    ipv4: Regex,
    jwt: Regex,
    url: Regex,
    strict: bool,
    custom: Vec<PatternRule>,
}

impl RegexPiiDetector {
    /// `strict` swaps in the JWT and URL patterns exactly as published.
    pub fn new(strict: bool, custom: Vec<PatternRule>) -> Self {
        let re = |p: &str| Regex::new(p).expect("builtin pattern");
        RegexPiiDetector {
            email: re(EMAIL),
            phone: re(PHONE),
            ipv4: re(IPV4),
            jwt: re(if strict { JWT_VERBATIM } else { JWT }),
            url: re(if strict { URL_VERBATIM } else { URL }),
            strict,
            custom,
        }
    }

    pub fn custom_rules(&self) -> &[PatternRule] {
        &self.custom
    }

    pub fn find(&self, text: &str) -> Vec<Hit> {
        let mut hits = Vec::new();
        let mut push = |re: &Regex, category, rule: &str| {
            for m in re.find_iter(text) {
                hits.push(Hit::new(m.range(), category, rule));
            }
        };
        push(&self.email, Category::Email, "email");
        push(&self.phone, Category::Phone, "phone");
        push(&self.ipv4, Category::Ipv4, "ipv4");
        push(&self.jwt, Category::Jwt, "jwt");
        for m in self.url.find_iter(text) {
            let mut end = m.end();
            if !self.strict {
                let s = m.as_str();
                end = m.start() + s.trim_end_matches(['.', ',', ';', ':', '!', '?']).len();
            }
            let url = &text[m.start()..end];
            if url.split_once("://").is_some_and(|(_, rest)| !rest.is_empty()) {
                hits.push(Hit::new(m.start()..end, Category::Url, "url"));
            }
        }
        for rule in &self.custom {
            for span in rule.find_iter(text) {
                let mut h = Hit::new(span, Category::Custom, &rule.name);
                h.mask_label = Some(rule.mask_label.clone());
                hits.push(h);
            }
        }
        hits
    }
}
