//! Pretraining sample emission.
//!
//! * [`grammar`]: per-mille action strings and their parser.
//! * [`format`]: stepwise (format 1) and reorder (format 2) conversations.
//! * [`score`]: episode scoring, the loss-ranked split and target styles.

pub mod format;
pub mod grammar;
pub mod score;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{emit_format1, emit_format2, Emitter, PretrainSample, Role, SampleFormat, Templates, Turn};
pub use grammar::{parse_action, serialize_action, ParsedAction, ParsedTarget, TargetStyle};
pub use score::{sample_target_style, score_episodes, split_by_score, AmbiguityScorer, EpisodeScore, Scorer, Split};

use crate::recorder::{derive_seed, Episode};

#[derive(Debug, Error, PartialEq)]
pub enum EmitError {
    #[error("observation {0} has a zero-extent viewport")]
    ZeroViewport(String),
    #[error("node {node_id} not present in observation {obs_id}")]
    MissingNode { node_id: String, obs_id: String },
    #[error("episode {episode_id} has {actions} actions; this format needs at least {required}")]
    Ineligible {
        episode_id: String,
        actions: usize,
        required: usize,
    },
    #[error("episode {0} has no final observation")]
    NoFinalObservation(String),
    #[error("missing scores for episodes: {}", .0.join(", "))]
    MissingScores(Vec<String>),
    #[error("scores mix scorer ids: {}", .0.join(", "))]
    MixedScorers(Vec<String>),
    #[error("invalid loss {loss} for episode {episode_id}")]
    InvalidLoss { episode_id: String, loss: f64 },
    #[error("cannot parse action {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("templates: {0}")]
    Templates(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitConfig {
    /// Probability of the point target style.
    pub style_ratio: f64,
    pub seed: u64,
}

impl Default for EmitConfig {
    fn default() -> Self {
        EmitConfig {
            style_ratio: 0.7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitReport {
    pub episodes: usize,
    pub eligible_reorder: usize,
    pub stepwise: usize,
    pub reorder: usize,
    pub skipped_no_actions: usize,
    pub by_style: BTreeMap<String, usize>,
}

/// Splits the corpus by score and emits one sample per episode that has at
/// least one action. Style and shuffle draws are seeded per episode from
/// `cfg.seed` and the episode id.
pub fn emit_corpus(
    episodes: &[Episode],
    scores: &[EpisodeScore],
    cfg: &EmitConfig,
    emitter: &Emitter,
) -> Result<(Vec<PretrainSample>, EmitReport), EmitError> {
    let split = split_by_score(episodes, scores)?;
    let reorder: std::collections::HashSet<&str> = split.format2.iter().map(String::as_str).collect();
    let mut sorted: Vec<&Episode> = episodes.iter().collect();
    sorted.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let mut report = EmitReport {
        episodes: episodes.len(),
        eligible_reorder: split.eligible,
        ..Default::default()
    };
    let mut out = Vec::new();
    for ep in sorted {
        let style = sample_target_style(derive_seed(cfg.seed, &ep.episode_id, 0), cfg.style_ratio);
        let sample = if reorder.contains(ep.episode_id.as_str()) {
            report.reorder += 1;
            emitter.format2(ep, style, derive_seed(cfg.seed, &ep.episode_id, 1))?
        } else if ep.action_count() >= 1 {
            report.stepwise += 1;
            emitter.format1(ep, style)?
        } else {
            report.skipped_no_actions += 1;
            continue;
        };
        *report.by_style.entry(style.name().to_string()).or_default() += 1;
        out.push(sample);
    }
    Ok((out, report))
}
