//! The record-interact loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceProfile;
use crate::env::{Clock, EnvError, GuiEnv};
use crate::fixture::{FixtureApp, FixtureSession};
use crate::observation::{Action, Observation};
use crate::policy::{self, PolicyConfig, PolicyError, PolicyState, StepProvenance};
use crate::rng::{fnv1a64, splitmix64, SeededRng};

/// Episode seed for the `index`-th walk from `start_ref`:
/// `splitmix(splitmix(splitmix(global) ^ fnv1a(start_ref)) ^ index)`.
pub fn derive_seed(global_seed: u64, start_ref: &str, index: u64) -> u64 {
    let s = splitmix64(splitmix64(global_seed) ^ fnv1a64(start_ref.as_bytes()));
    splitmix64(s ^ index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_steps: usize,
    pub timeout_ms: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 5,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Complete,
    Timeout,
    Error,
    EmptyActionSet,
}

/// One `(observation, action)` pair and what the rules did at that step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub observation: Observation,
    pub action: Action,
    pub provenance: StepProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub seed: u64,
    pub device_profile_id: String,
    pub start_ref: String,
    pub steps: Vec<Step>,
    /// Absent only when not even the first observation could be captured.
    pub final_observation: Option<Observation>,
    pub status: EpisodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time_ms: u64,
}

impl Episode {
    pub fn id_for_seed(seed: u64) -> String {
        format!("{seed:016x}")
    }

    pub fn action_count(&self) -> usize {
        self.steps.len()
    }

    /// Every observation in order, the final one included.
    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.steps
            .iter()
            .map(|s| &s.observation)
            .chain(self.final_observation.iter())
    }

    pub fn check_invariants(&self, max_steps: usize) -> Result<(), String> {
        if self.steps.len() > max_steps {
            return Err(format!("{}: {} steps > {max_steps}", self.episode_id, self.steps.len()));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.observation.step_index != i {
                return Err(format!("{}: step {i} has step_index {}", self.episode_id, s.observation.step_index));
            }
        }
        if let Some(f) = &self.final_observation {
            if f.step_index != self.steps.len() {
                return Err(format!("{}: final step_index {}", self.episode_id, f.step_index));
            }
        }
        for o in self.observations() {
            o.check_invariants()?;
        }
        Ok(())
    }
}

/// Runs one episode. Failures never escape: they end the loop and are
/// encoded in the returned episode's status, with partial steps kept.
pub fn run_episode<E: GuiEnv + ?Sized>(
    env: &mut E,
    profile: &DeviceProfile,
    limits: &Limits,
    seed: u64,
    cfg: &PolicyConfig,
    clock: &dyn Clock,
) -> Episode {
    let started = clock.elapsed_ms();
    let mut episode = Episode {
        episode_id: Episode::id_for_seed(seed),
        seed,
        device_profile_id: profile.id.clone(),
        start_ref: env.start_ref().to_string(),
        steps: Vec::new(),
        final_observation: None,
        status: EpisodeStatus::Complete,
        error: None,
        wall_time_ms: 0,
    };
    let fail = |ep: &mut Episode, e: EnvError| {
        ep.status = match e {
            EnvError::Timeout(_) => EpisodeStatus::Timeout,
            _ => EpisodeStatus::Error,
        };
        ep.error = Some(e.to_string());
    };

    let mut rng = SeededRng::new(seed);
    let mut state = PolicyState::default();
    let mut obs = match env.observe(0) {
        Ok(o) => o,
        Err(e) => {
            fail(&mut episode, e);
            episode.wall_time_ms = clock.elapsed_ms().saturating_sub(started);
            return episode;
        }
    };
    loop {
        if episode.steps.len() >= limits.max_steps {
            episode.status = EpisodeStatus::Complete;
            break;
        }
        if clock.elapsed_ms().saturating_sub(started) > limits.timeout_ms {
            episode.status = EpisodeStatus::Timeout;
            break;
        }
        let cands = policy::refine(&obs, &state);
        let scrolls = policy::scroll_options(&obs, cfg).len();
        let action = match policy::choose_action(&cands, &obs, &mut rng, cfg) {
            Ok(a) => a,
            Err(PolicyError::EmptyActionSet) => {
                episode.status = EpisodeStatus::EmptyActionSet;
                break;
            }
            Err(e) => {
                episode.status = EpisodeStatus::Error;
                episode.error = Some(e.to_string());
                break;
            }
        };
        if let Err(e) = env.perform(&action) {
            fail(&mut episode, e);
            break;
        }
        let next = match env.observe(episode.steps.len() + 1) {
            Ok(o) => o,
            Err(e) => {
                fail(&mut episode, e);
                break;
            }
        };
        state.advance(&obs, &action);
        episode.steps.push(Step {
            observation: std::mem::replace(&mut obs, next),
            action,
            provenance: StepProvenance::of(&cands, scrolls),
        });
    }
    episode.final_observation = Some(obs);
    episode.wall_time_ms = clock.elapsed_ms().saturating_sub(started);
    episode
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("episode {0} has no observations")]
    Empty(String),
    #[error("episode {episode}: step {step}: {detail}")]
    Diverged {
        episode: String,
        step: usize,
        detail: String,
    },
}

/// Re-runs an episode in a fresh fixture session and checks that each
/// recorded action was legal under the rules and reproduces the next
/// recorded observation's content hash.
pub fn replay_in_fixture(app: &FixtureApp, episode: &Episode, cfg: &PolicyConfig) -> Result<(), ReplayError> {
    let first = episode
        .observations()
        .next()
        .ok_or_else(|| ReplayError::Empty(episode.episode_id.clone()))?;
    let diverged = |step: usize, detail: String| ReplayError::Diverged {
        episode: episode.episode_id.clone(),
        step,
        detail,
    };
    let mut session = FixtureSession::new(std::sync::Arc::new(app.clone()), first.viewport.size());
    let mut state = PolicyState::default();
    let recorded: Vec<&Observation> = episode.observations().collect();
    let mut live = session.observe(0).map_err(|e| diverged(0, e.to_string()))?;
    for (i, step) in episode.steps.iter().enumerate() {
        if live.content_hash != recorded[i].content_hash {
            return Err(diverged(i, "observation hash differs from replay".into()));
        }
        let pool = policy::action_pool(&policy::refine(&step.observation, &state), &step.observation, cfg);
        let legal = pool.iter().any(|a| match (a, &step.action) {
            (Action::Input { node_id: a, point: p, .. }, Action::Input { node_id: b, point: q, text }) => {
                a == b && p == q && cfg.phrases.contains(text)
            }
            (a, b) => a == b,
        });
        if !legal {
            return Err(diverged(i, format!("{:?} is not in the refined action set", step.action)));
        }
        session.perform(&step.action).map_err(|e| diverged(i, e.to_string()))?;
        live = session.observe(i + 1).map_err(|e| diverged(i + 1, e.to_string()))?;
        state.advance(&step.observation, &step.action);
    }
    match recorded.get(episode.steps.len()) {
        Some(last) if last.content_hash == live.content_hash => Ok(()),
        Some(_) => Err(diverged(episode.steps.len(), "final observation hash differs".into())),
        None => Ok(()),
    }
}
