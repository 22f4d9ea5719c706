use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::grammar::TargetStyle;
use super::EmitError;
use crate::recorder::Episode;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub episode_id: String,
    pub loss: f64,
    pub scorer_id: String,
}

pub trait Scorer {
    fn id(&self) -> &str;
    fn loss(&self, episode: &Episode) -> f64;
}

/// Mean `ln(1 + n)` over steps, `n` being the size of the refined set each
/// action was drawn from. Episodes with more choice per step rank higher.
#[derive(Debug, Clone, Copy, Default)]
pub struct AmbiguityScorer;

impl Scorer for AmbiguityScorer {
    fn id(&self) -> &str {
        "ambiguity-v1"
    }

    fn loss(&self, episode: &Episode) -> f64 {
        if episode.steps.is_empty() {
            return 0.0;
        }
        let total: f64 = episode
            .steps
            .iter()
            .map(|s| (1.0 + s.provenance.refined as f64).ln())
            .sum();
        total / episode.steps.len() as f64
    }
}

pub fn score_episodes(episodes: &[Episode], scorer: &dyn Scorer) -> Vec<EpisodeScore> {
    episodes
        .iter()
        .map(|e| EpisodeScore {
            episode_id: e.episode_id.clone(),
            loss: scorer.loss(e),
            scorer_id: scorer.id().to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Episodes with at least two actions.
    pub eligible: usize,
    pub format1: Vec<String>,
    pub format2: Vec<String>,
}

pub const MIN_REORDER_ACTIONS: usize = 2;

/// The top `floor(eligible / 2)` eligible episodes by loss go to format 2,
/// ties broken by ascending episode id. Every other episode goes to format 1.
pub fn split_by_score(episodes: &[Episode], scores: &[EpisodeScore]) -> Result<Split, EmitError> {
    let by_id: HashMap<&str, &EpisodeScore> = scores.iter().map(|s| (s.episode_id.as_str(), s)).collect();
    let mut missing = Vec::new();
    let mut scorers = BTreeSet::new();
    let mut ranked = Vec::new();
    for ep in episodes {
        let Some(score) = by_id.get(ep.episode_id.as_str()) else {
            missing.push(ep.episode_id.clone());
            continue;
        };
        if !score.loss.is_finite() || score.loss < 0.0 {
            return Err(EmitError::InvalidLoss {
                episode_id: ep.episode_id.clone(),
                loss: score.loss,
            });
        }
        scorers.insert(score.scorer_id.clone());
        if ep.action_count() >= MIN_REORDER_ACTIONS {
            ranked.push((score.loss, ep.episode_id.as_str()));
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(EmitError::MissingScores(missing));
    }
    if scorers.len() > 1 {
        return Err(EmitError::MixedScorers(scorers.into_iter().collect()));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    let take = ranked.len() / 2;
    let top: BTreeSet<&str> = ranked[..take].iter().map(|r| r.1).collect();
    let mut format1: Vec<String> = episodes
        .iter()
        .filter(|e| !top.contains(e.episode_id.as_str()))
        .map(|e| e.episode_id.clone())
        .collect();
    format1.sort();
    Ok(Split {
        eligible: ranked.len(),
        format1,
        format2: top.into_iter().map(str::to_string).collect(),
    })
}

/// Point with probability `point_ratio`, otherwise bbox.
pub fn sample_target_style(seed: u64, point_ratio: f64) -> TargetStyle {
    if SeededRng::new(seed).unit() < point_ratio {
        TargetStyle::Point
    } else {
        TargetStyle::Bbox
    }
}
