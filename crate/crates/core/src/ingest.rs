//! Crawl manifest construction.
//!
//! URL identity is the normalized URL: fragment stripped, scheme and host
//! lowercased, query kept. Language and NSFW filtering need page content,
//! so they run either here (from a `{url, text}` sidecar) or after the
//! first render in the generator; reachability is likewise decided by the
//! backend unless a pre-flight check is supplied.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

const STOPWORDS: &str = include_str!("../data/stopwords.txt");
const BLOCKLIST: &str = include_str!("../data/blocklist.txt");

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Duplicate,
    Unreachable,
    NonEnglish,
    Nsfw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRecord {
    pub url: String,
    pub domain: String,
    pub status: RecordStatus,
    pub reject_reason: Option<RejectReason>,
}

impl UrlRecord {
    pub fn accepted(url: &Url) -> Self {
        UrlRecord {
            url: url.to_string(),
            domain: url.host_str().map(registrable_domain).unwrap_or_default(),
            status: RecordStatus::Accepted,
            reject_reason: None,
        }
    }

    pub fn reject(&mut self, reason: RejectReason) {
        self.status = RecordStatus::Rejected;
        self.reject_reason = Some(reason);
    }
}

/// Parses and normalizes a URL candidate. Only absolute URLs with a host
/// are accepted.
pub fn normalize_url(raw: &str) -> Option<Url> {
    let mut url = Url::parse(raw.trim()).ok()?;
    let host = url.host_str()?.to_ascii_lowercase();
    if host.is_empty() {
        return None;
    }
    if url.host_str() != Some(host.as_str()) {
        url.set_host(Some(&host)).ok()?;
    }
    url.set_fragment(None);
    Some(url)
}

/// Registrable domain per the public suffix list (`www.a.com` → `a.com`).
/// Hosts without a listed suffix, and IP addresses, map to themselves.
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.parse::<std::net::IpAddr>().is_ok() || host.starts_with('[') {
        return host;
    }
    match psl::domain_str(&host) {
        Some(d) => d.to_string(),
        None => host.strip_prefix("www.").unwrap_or(&host).to_string(),
    }
}

/// Registrable domain of a start reference, or the raw reference when it
/// does not parse as a URL.
pub fn domain_of_ref(start_ref: &str) -> String {
    normalize_url(start_ref)
        .and_then(|u| u.host_str().map(registrable_domain))
        .unwrap_or_else(|| start_ref.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextClassification {
    pub english: bool,
    pub nsfw: bool,
    pub stopword_ratio: f64,
    pub matched_blocklist_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextFilter {
    pub min_tokens: usize,
    pub stopword_threshold: f64,
}

impl Default for TextFilter {
    fn default() -> Self {
        TextFilter {
            min_tokens: 10,
            stopword_threshold: 0.18,
        }
    }
}

fn word_list(text: &'static str) -> HashSet<&'static str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

fn stopwords() -> &'static HashSet<&'static str> {
    static S: OnceLock<HashSet<&'static str>> = OnceLock::new();
    S.get_or_init(|| word_list(STOPWORDS))
}

fn blocklist() -> &'static HashSet<&'static str> {
    static B: OnceLock<HashSet<&'static str>> = OnceLock::new();
    B.get_or_init(|| word_list(BLOCKLIST))
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn blocklist_hits(tokens: &[String]) -> Vec<String> {
    let hits: BTreeSet<&String> = tokens.iter().filter(|t| blocklist().contains(t.as_str())).collect();
    hits.into_iter().cloned().collect()
}

/// Classification with the default thresholds.
pub fn classify_text(text: &str) -> TextClassification {
    classify_text_with(text, &TextFilter::default())
}

pub fn classify_text_with(text: &str, filter: &TextFilter) -> TextClassification {
    let tokens = tokenize(text);
    let stop = tokens.iter().filter(|t| stopwords().contains(t.as_str())).count();
    let ratio = if tokens.is_empty() {
        0.0
    } else {
        stop as f64 / tokens.len() as f64
    };
    let matched = blocklist_hits(&tokens);
    TextClassification {
        english: tokens.len() >= filter.min_tokens && ratio >= filter.stopword_threshold,
        nsfw: !matched.is_empty(),
        stopword_ratio: ratio,
        matched_blocklist_terms: matched,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Non-empty input lines.
    pub lines: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub duplicates: usize,
    pub malformed: usize,
    pub rejected_by_reason: BTreeMap<RejectReason, usize>,
    pub warnings: usize,
}

#[derive(Default)]
pub struct IngestOptions<'a> {
    pub text: TextFilter,
    /// Reject URLs whose own tokens hit the blocklist.
    pub url_blocklist: bool,
    /// Main content per normalized URL, when known before rendering.
    pub content: Option<&'a BTreeMap<String, String>>,
    /// Pre-flight reachability check.
    pub reachable: Option<&'a dyn Fn(&Url) -> bool>,
}

impl<'a> IngestOptions<'a> {
    pub fn new() -> Self {
        IngestOptions {
            url_blocklist: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<UrlRecord>,
    pub report: IngestReport,
}

impl Manifest {
    pub fn accepted(&self) -> impl Iterator<Item = &UrlRecord> {
        self.records.iter().filter(|r| r.status == RecordStatus::Accepted)
    }
}

/// Builds a manifest from URL candidates, one per line, in first-seen order.
pub fn ingest_lines<I, S>(lines: I, opts: &IngestOptions<'_>) -> Manifest
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut m = Manifest::default();
    let mut seen = HashSet::new();
    for line in lines {
        let line = line.as_ref().trim();
        if line.is_empty() {
            continue;
        }
        m.report.lines += 1;
        let Some(url) = normalize_url(line) else {
            m.report.malformed += 1;
            continue;
        };
        if !seen.insert(url.to_string()) {
            m.report.duplicates += 1;
            continue;
        }
        let mut rec = UrlRecord::accepted(&url);
        if opts.url_blocklist && !blocklist_hits(&tokenize(url.as_str())).is_empty() {
            rec.reject(RejectReason::Nsfw);
        } else if let Some(text) = opts.content.and_then(|c| c.get(url.as_str())) {
            let c = classify_text_with(text, &opts.text);
            if c.nsfw {
                rec.reject(RejectReason::Nsfw);
            } else if !c.english {
                rec.reject(RejectReason::NonEnglish);
            }
        }
        if rec.status == RecordStatus::Accepted {
            if let Some(check) = opts.reachable {
                if !check(&url) {
                    rec.reject(RejectReason::Unreachable);
                }
            }
        }
        match rec.reject_reason {
            Some(r) => {
                m.report.rejected += 1;
                *m.report.rejected_by_reason.entry(r).or_default() += 1;
            }
            None => m.report.accepted += 1,
        }
        m.records.push(rec);
    }
    if m.report.accepted == 0 {
        m.report.warnings += 1;
    }
    m
}

/// Reads a line-delimited URL file and builds its manifest.
pub fn ingest_urls(source: &Path, opts: &IngestOptions<'_>) -> Result<Manifest, IngestError> {
    let io = |e| IngestError::Io {
        path: source.display().to_string(),
        source: e,
    };
    let file = std::fs::File::open(source).map_err(io)?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(io)?;
    Ok(ingest_lines(lines, opts))
}

/// Loads a `{url, text}` line-delimited content sidecar, keyed by
/// normalized URL.
pub fn read_content_sidecar(path: &Path) -> Result<BTreeMap<String, String>, IngestError> {
    #[derive(Deserialize)]
    struct Row {
        url: String,
        text: String,
    }
    let rows: Vec<Row> = crate::jsonl::read_all(path).map_err(|e| match e {
        crate::jsonl::JsonlError::Io(source) => IngestError::Io {
            path: path.display().to_string(),
            source,
        },
        crate::jsonl::JsonlError::Parse { line, source } => IngestError::Parse {
            path: path.display().to_string(),
            line,
            source,
        },
    })?;
    Ok(rows
        .into_iter()
        .filter_map(|r| normalize_url(&r.url).map(|u| (u.to_string(), r.text)))
        .collect())
}
