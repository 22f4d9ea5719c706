//! Corpus cleaning and statistics.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ingest::domain_of_ref;
use crate::observation::Observation;
use crate::recorder::{Episode, EpisodeStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Error or timeout before any step was recorded.
    EmptyFailure,
    BlankPage,
    DuplicatePage,
    /// Start page identical to that of an earlier episode (opt-in).
    DuplicateStart,
}

/// No text-bearing node and no interactive node.
pub fn is_blank(obs: &Observation) -> bool {
    !obs.nodes.iter().any(|n| !n.text.trim().is_empty() || n.is_interactive())
}

/// First matching per-episode drop predicate, checked in the order
/// empty failure, blank page, duplicate page.
pub fn drop_reason(ep: &Episode) -> Option<DropReason> {
    if ep.steps.is_empty() && matches!(ep.status, EpisodeStatus::Error | EpisodeStatus::Timeout) {
        return Some(DropReason::EmptyFailure);
    }
    if ep.observations().any(is_blank) {
        return Some(DropReason::BlankPage);
    }
    let mut seen = HashSet::new();
    if !ep.observations().all(|o| seen.insert(o.content_hash)) {
        return Some(DropReason::DuplicatePage);
    }
    None
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterOptions {
    pub dedup_start_pages: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub collected: usize,
    pub kept: usize,
    pub dropped_by_reason: BTreeMap<DropReason, usize>,
    pub retention: f64,
}

/// Splits a corpus into kept episodes (sorted by `episode_id`) and a report.
pub fn filter_episodes(mut episodes: Vec<Episode>, opts: FilterOptions) -> (Vec<Episode>, DropReport) {
    episodes.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let mut report = DropReport {
        collected: episodes.len(),
        ..Default::default()
    };
    let mut starts = HashSet::new();
    let mut kept = Vec::new();
    for ep in episodes {
        let mut reason = drop_reason(&ep);
        if reason.is_none() && opts.dedup_start_pages {
            if let Some(first) = ep.observations().next() {
                if !starts.insert(first.content_hash) {
                    reason = Some(DropReason::DuplicateStart);
                }
            }
        }
        match reason {
            Some(r) => *report.dropped_by_reason.entry(r).or_default() += 1,
            None => kept.push(ep),
        }
    }
    report.kept = kept.len();
    report.retention = retention(report.kept, report.collected);
    (kept, report)
}

fn retention(kept: usize, collected: usize) -> f64 {
    if collected == 0 {
        0.0
    } else {
        kept as f64 / collected as f64
    }
}

/// Corpus-level counts in the shape of a dataset statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub episodes: usize,
    /// Observations across kept episodes, final observations included.
    pub images: usize,
    /// Distinct registrable domains of the episodes' start references.
    pub domains: usize,
    pub retention: f64,
}

pub fn corpus_stats(kept: &[Episode], collected: usize) -> CorpusStats {
    let domains: HashSet<String> = kept.iter().map(|e| domain_of_ref(&e.start_ref)).collect();
    CorpusStats {
        episodes: kept.len(),
        images: kept.iter().map(|e| e.observations().count()).sum(),
        domains: domains.len(),
        retention: retention(kept.len(), collected),
    }
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(flatten)]
    pub stats: CorpusStats,
    pub collected: usize,
    pub dropped_by_reason: BTreeMap<DropReason, usize>,
}

impl StatsReport {
    pub fn new(kept: &[Episode], report: &DropReport) -> Self {
        StatsReport {
            stats: corpus_stats(kept, report.collected),
            collected: report.collected,
            dropped_by_reason: report.dropped_by_reason.clone(),
        }
    }
}
