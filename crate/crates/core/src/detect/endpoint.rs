use std::sync::OnceLock;

use regex::Regex;

use super::pii::IPV4;
use super::{Category, Hit};

pub const INTERNAL_SUFFIXES: &[&str] = &["internal", "corp", "local", "lan", "intra"];

fn ipv4_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(IPV4).unwrap())
}

fn host_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let label = r"[A-Za-z0-9_](?:[A-Za-z0-9_-]*[A-Za-z0-9_])?";
        Regex::new(&format!(r"{label}(?:\.{label})+")).unwrap()
    })
}

/// 10/8, 172.16/12 and 192.168/16.
pub fn is_rfc1918(octets: [u8; 4]) -> bool {
    let ip = u32::from_be_bytes(octets);
    let within = |base: [u8; 4], bits: u32| (ip ^ u32::from_be_bytes(base)) >> (32 - bits) == 0;
    within([10, 0, 0, 0], 8) || within([172, 16, 0, 0], 12) || within([192, 168, 0, 0], 16)
}

fn parse_octets(s: &str) -> Option<[u8; 4]> {
    let mut out = [0u8; 4];
    let mut parts = s.split('.');
    for o in &mut out {
        *o = parts.next()?.parse().ok()?;
    }
    parts.next().is_none().then_some(out)
}

#[derive(Clone, Debug, Default)]
pub struct EndpointDetector {
    partner_domains: Vec<String>,
}

impl EndpointDetector {
    pub fn new(partner_domains: impl IntoIterator<Item = String>) -> Self {
        let mut partner_domains: Vec<String> = partner_domains
            .into_iter()
            .map(|d| d.trim().trim_matches('.').to_lowercase())
            .filter(|d| !d.is_empty())
            .collect();
        partner_domains.sort();
        partner_domains.dedup();
        EndpointDetector { partner_domains }
    }

    pub fn is_internal_host(&self, host: &str) -> bool {
        let host = host.to_ascii_lowercase();
        let last = host.rsplit('.').next().unwrap_or("");
        INTERNAL_SUFFIXES.contains(&last)
            || self.partner_domains.iter().any(|d| {
                host == *d || (host.ends_with(d.as_str()) && host[..host.len() - d.len()].ends_with('.'))
            })
    }

    pub fn find(&self, text: &str) -> Vec<Hit> {
        let mut hits = Vec::new();
        for m in ipv4_re().find_iter(text) {
            if parse_octets(m.as_str()).is_some_and(is_rfc1918) {
                hits.push(Hit::new(m.range(), Category::PrivateIp, "rfc1918"));
            }
        }
        for m in host_re().find_iter(text) {
            let host = m.as_str();
            if host.split('.').all(|l| l.bytes().all(|b| b.is_ascii_digit())) {
                continue;
            }
            if self.is_internal_host(host) {
                hits.push(Hit::new(m.range(), Category::InternalDomain, "internal-domain"));
            }
        }
        hits
    }
}
