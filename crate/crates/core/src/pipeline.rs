//! Crash-safe, resumable episode generation over a set of start refs.
//!
//! Output directory layout:
//!
//! ```text
//! ledger.json            per-ref progress, rewritten atomically
//! episodes-00000.jsonl   shard files; a ref always lands in the same shard
//! rejected.jsonl         refs dropped by the content filter or unreachable
//! ```
//!
//! The episodes of one ref are buffered and appended (and fsynced) to their
//! shard before the ledger marks the ref done. On resume, shard lines of
//! refs that are not done are discarded and those refs run again.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{sample_profile, DeviceProfile, ProfileError};
use crate::env::{EnvError, EnvFactory};
use crate::ingest::{classify_text_with, RejectReason, TextFilter};
use crate::jsonl::{self, JsonlError};
use crate::policy::PolicyConfig;
use crate::recorder::{derive_seed, run_episode, Episode, Limits};
use crate::rng::{fnv1a64, splitmix64};

pub const LEDGER_FILE: &str = "ledger.json";
pub const REJECTED_FILE: &str = "rejected.jsonl";
pub const LEDGER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Jsonl {
        path: PathBuf,
        #[source]
        source: JsonlError,
    },
    #[error("ledger {path} is corrupt: {reason}")]
    CorruptLedger { path: PathBuf, reason: String },
    #[error("existing run was started with {field} = {existing}, this run uses {requested}")]
    ConfigMismatch {
        field: &'static str,
        existing: String,
        requested: String,
    },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn jsonl_err(path: &Path) -> impl FnOnce(JsonlError) -> PipelineError + '_ {
    move |source| PipelineError::Jsonl {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefStatus {
    Pending,
    Done,
    Failed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefEntry {
    pub status: RefStatus,
    pub shard: usize,
    pub episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLedger {
    pub version: u32,
    pub seed: u64,
    pub episodes_per_ref: usize,
    pub shards: usize,
    pub refs: BTreeMap<String, RefEntry>,
}

impl RunLedger {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let ledger: RunLedger = serde_json::from_str(&text).map_err(|e| PipelineError::CorruptLedger {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if ledger.version != LEDGER_VERSION {
            return Err(PipelineError::CorruptLedger {
                path: path.to_path_buf(),
                reason: format!("unsupported version {}", ledger.version),
            });
        }
        Ok(ledger)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let bytes = serde_json::to_vec_pretty(self).expect("ledger serializes");
        jsonl::write_atomic(path, &bytes).map_err(io_err(path))
    }

    pub fn count(&self, status: RefStatus) -> usize {
        self.refs.values().filter(|e| e.status == status).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRef {
    pub start_ref: String,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub episodes_per_ref: usize,
    pub seed: u64,
    pub limits: Limits,
    pub workers: usize,
    pub shards: usize,
    pub policy: PolicyConfig,
    pub profiles: Vec<DeviceProfile>,
    /// Checked against the first observation of each ref when set.
    pub content_filter: Option<TextFilter>,
    /// Stop once this many refs have been committed in this invocation.
    /// Used to simulate an interrupted run.
    pub stop_after_refs: Option<usize>,
}

impl GenerateConfig {
    pub fn new(profiles: Vec<DeviceProfile>) -> Self {
        GenerateConfig {
            episodes_per_ref: 20,
            seed: 0,
            limits: Limits::default(),
            workers: 1,
            shards: 16,
            policy: PolicyConfig::default(),
            profiles,
            content_filter: None,
            stop_after_refs: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub refs_total: usize,
    /// Already done before this invocation.
    pub refs_skipped: usize,
    pub refs_done: usize,
    pub refs_failed: usize,
    pub refs_rejected: usize,
    pub episodes_written: usize,
    pub interrupted: bool,
}

pub fn shard_of(start_ref: &str, shards: usize) -> usize {
    (fnv1a64(start_ref.as_bytes()) % shards as u64) as usize
}

pub fn shard_path(dir: &Path, shard: usize) -> PathBuf {
    dir.join(format!("episodes-{shard:05}.jsonl"))
}

pub fn shard_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("episodes-") && n.ends_with(".jsonl"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Every episode of a corpus directory, sorted by `episode_id`.
pub fn read_corpus(dir: &Path) -> Result<Vec<Episode>, PipelineError> {
    let mut all = Vec::new();
    for f in shard_files(dir)? {
        all.extend(jsonl::read_all::<Episode>(&f).map_err(jsonl_err(&f))?);
    }
    all.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    Ok(all)
}

/// JSONL of `episodes` sorted by id: the form compared across runs.
pub fn canonical_jsonl(episodes: &[Episode]) -> String {
    let mut sorted: Vec<&Episode> = episodes.iter().collect();
    sorted.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let mut out = String::new();
    for e in sorted {
        out.push_str(&serde_json::to_string(e).expect("episode serializes"));
        out.push('\n');
    }
    out
}

/// Writes a corpus as shards keyed by start ref, replacing existing shards.
pub fn write_corpus(dir: &Path, episodes: &[Episode], shards: usize) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for f in shard_files(dir)? {
        fs::remove_file(&f).map_err(io_err(&f))?;
    }
    let mut by_shard: BTreeMap<usize, Vec<&Episode>> = BTreeMap::new();
    for e in episodes {
        by_shard.entry(shard_of(&e.start_ref, shards)).or_default().push(e);
    }
    for (shard, mut eps) in by_shard {
        eps.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
        let path = shard_path(dir, shard);
        jsonl::write_all(&path, &eps).map_err(jsonl_err(&path))?;
    }
    Ok(())
}

/// Drops shard lines belonging to refs that are not done.
fn strip_uncommitted(dir: &Path, ledger: &RunLedger) -> Result<(), PipelineError> {
    for f in shard_files(dir)? {
        let text = fs::read_to_string(&f).map_err(io_err(&f))?;
        let mut keep = Vec::new();
        let mut changed = false;
        for line in text.lines() {
            // A torn final line does not parse; it is never committed.
            let committed = serde_json::from_str::<Episode>(line)
                .ok()
                .and_then(|e| ledger.refs.get(&e.start_ref).map(|r| r.status == RefStatus::Done))
                .unwrap_or(false);
            if committed {
                keep.push(line);
            } else {
                changed = true;
            }
        }
        if changed {
            let mut body = keep.join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            jsonl::write_atomic(&f, body.as_bytes()).map_err(io_err(&f))?;
        }
    }
    Ok(())
}

enum Outcome {
    Done(Vec<Episode>),
    Failed(String),
    Rejected(RejectReason, String),
}

fn run_ref<F: EnvFactory>(factory: &F, start_ref: &str, cfg: &GenerateConfig) -> Outcome {
    let mut episodes = Vec::with_capacity(cfg.episodes_per_ref);
    for k in 0..cfg.episodes_per_ref {
        let seed = derive_seed(cfg.seed, start_ref, k as u64);
        let profile = match sample_profile(splitmix64(seed), &cfg.profiles) {
            Ok(p) => p,
            Err(e) => return Outcome::Failed(e.to_string()),
        };
        let mut env = match factory.open(start_ref, profile) {
            Ok(env) => env,
            Err(e @ EnvError::Unreachable(_)) if k == 0 => {
                return Outcome::Rejected(RejectReason::Unreachable, e.to_string())
            }
            Err(e) => return Outcome::Failed(e.to_string()),
        };
        let clock = factory.clock();
        let ep = run_episode(&mut env, profile, &cfg.limits, seed, &cfg.policy, clock.as_ref());
        if k == 0 {
            if let (Some(filter), Some(first)) = (&cfg.content_filter, ep.observations().next()) {
                let c = classify_text_with(&first.main_text(), filter);
                if c.nsfw {
                    return Outcome::Rejected(RejectReason::Nsfw, c.matched_blocklist_terms.join(","));
                }
                if !c.english {
                    return Outcome::Rejected(RejectReason::NonEnglish, format!("stopword ratio {:.3}", c.stopword_ratio));
                }
            }
        }
        episodes.push(ep);
    }
    Outcome::Done(episodes)
}

/// Generates `cfg.episodes_per_ref` episodes for every start ref into `out`,
/// resuming a previous run found there. The corpus content depends only on
/// the refs, factory and config, never on worker count or interleaving.
pub fn run_generate<F: EnvFactory>(
    factory: &F,
    start_refs: &[String],
    out: &Path,
    cfg: &GenerateConfig,
) -> Result<GenerateSummary, PipelineError> {
    if cfg.shards == 0 || cfg.workers == 0 {
        return Err(PipelineError::Config("shards and workers must be positive".into()));
    }
    if cfg.profiles.is_empty() {
        return Err(ProfileError::EmptyRegistry.into());
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let ledger_path = out.join(LEDGER_FILE);
    let mut ledger = if ledger_path.exists() {
        let l = RunLedger::load(&ledger_path)?;
        let check = |field, existing: String, requested: String| {
            if existing != requested {
                Err(PipelineError::ConfigMismatch {
                    field,
                    existing,
                    requested,
                })
            } else {
                Ok(())
            }
        };
        check("seed", l.seed.to_string(), cfg.seed.to_string())?;
        check("episodes_per_ref", l.episodes_per_ref.to_string(), cfg.episodes_per_ref.to_string())?;
        check("shards", l.shards.to_string(), cfg.shards.to_string())?;
        l
    } else {
        RunLedger {
            version: LEDGER_VERSION,
            seed: cfg.seed,
            episodes_per_ref: cfg.episodes_per_ref,
            shards: cfg.shards,
            refs: BTreeMap::new(),
        }
    };
    let mut seen = HashSet::new();
    let refs: Vec<&String> = start_refs.iter().filter(|r| seen.insert(r.as_str())).collect();
    for r in &refs {
        ledger.refs.entry((*r).clone()).or_insert(RefEntry {
            status: RefStatus::Pending,
            shard: shard_of(r, cfg.shards),
            episodes: 0,
            last_error: None,
        });
    }
    strip_uncommitted(out, &ledger)?;
    ledger.save(&ledger_path)?;

    let finished = |s: RefStatus| matches!(s, RefStatus::Done | RefStatus::Rejected);
    let todo: Vec<&String> = refs.iter().copied().filter(|r| !finished(ledger.refs[*r].status)).collect();
    let mut summary = GenerateSummary {
        refs_total: refs.len(),
        refs_skipped: refs.len() - todo.len(),
        ..Default::default()
    };

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let rejected_path = out.join(REJECTED_FILE);
    std::thread::scope(|scope| -> Result<(), PipelineError> {
        let (tx, rx) = mpsc::channel::<(String, Outcome)>();
        for _ in 0..cfg.workers.min(todo.len().max(1)) {
            let tx = tx.clone();
            let (next, stop, todo) = (&next, &stop, &todo);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(r) = todo.get(i) else { break };
                if tx.send(((*r).clone(), run_ref(factory, r, cfg))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut committed = 0;
        let result = (|| {
            for (start_ref, outcome) in rx.iter() {
                if stop.load(Ordering::SeqCst) {
                    continue;
                }
                let entry = ledger.refs.get_mut(&start_ref).expect("ref registered");
                match outcome {
                    Outcome::Done(eps) => {
                        let lines: Vec<String> =
                            eps.iter().map(|e| serde_json::to_string(e).expect("episode serializes")).collect();
                        let path = shard_path(out, entry.shard);
                        jsonl::append_lines(&path, &lines).map_err(jsonl_err(&path))?;
                        entry.status = RefStatus::Done;
                        entry.episodes = eps.len();
                        entry.last_error = None;
                        summary.refs_done += 1;
                        summary.episodes_written += eps.len();
                    }
                    Outcome::Failed(err) => {
                        entry.status = RefStatus::Failed;
                        entry.last_error = Some(err);
                        summary.refs_failed += 1;
                    }
                    Outcome::Rejected(reason, detail) => {
                        let line = serde_json::to_string(&RejectedRef {
                            start_ref: start_ref.clone(),
                            reason,
                            detail: detail.clone(),
                        })
                        .expect("rejection serializes");
                        jsonl::append_lines(&rejected_path, &[line]).map_err(jsonl_err(&rejected_path))?;
                        entry.status = RefStatus::Rejected;
                        entry.last_error = Some(detail);
                        summary.refs_rejected += 1;
                    }
                }
                ledger.save(&ledger_path)?;
                committed += 1;
                if cfg.stop_after_refs.is_some_and(|n| committed >= n) {
                    stop.store(true, Ordering::SeqCst);
                }
            }
            Ok(())
        })();
        if result.is_err() {
            stop.store(true, Ordering::SeqCst);
        }
        result
    })?;
    summary.interrupted = stop.load(Ordering::SeqCst) && ledger.refs.values().any(|e| !finished(e.status));
    Ok(summary)
}
