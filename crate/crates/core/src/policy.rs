//! Candidate action set and its refinement.
//!
//! The pipeline is fixed: [`build_action_set`] → [`rule_zindex`] →
//! [`rule_persistence`] → [`rule_input_proximity`] → [`choose_action`].
//! Rules never drop candidates from the list; they mark them with the rule
//! that removed them, so the surviving set is the unmarked candidates and a
//! recorded step can report what each rule did.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::observation::{content_key, Action, NodeRecord, Observation, ScrollDirection};
use crate::rng::SeededRng;

const BUILTIN_PHRASES: &str = include_str!("../data/phrases.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("no candidate actions: nothing interactive and nothing to scroll")]
    EmptyActionSet,
    #[error("phrase list is empty")]
    NoPhrases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    Zindex,
    Persistence,
    Proximity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCandidate {
    pub action: Action,
    pub source_node: Option<NodeRecord>,
    pub filtered_by: Option<FilterRule>,
}

impl ActionCandidate {
    pub fn is_live(&self) -> bool {
        self.filtered_by.is_none()
    }
}

/// Policy state carried between steps by the recorder.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyState {
    pub prev_observation: Option<Observation>,
    /// Set iff the immediately preceding action was an Input.
    pub last_input_node: Option<NodeRecord>,
}

impl PolicyState {
    pub fn advance(&mut self, obs: &Observation, action: &Action) {
        self.last_input_node = match action {
            Action::Input { node_id, .. } => obs.node(node_id).cloned(),
            _ => None,
        };
        self.prev_observation = Some(obs.clone());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub phrases: Arc<Vec<String>>,
    /// Scroll step as a fraction of the viewport extent along the axis.
    pub scroll_fraction: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            phrases: Arc::new(parse_phrases(BUILTIN_PHRASES)),
            scroll_fraction: 0.5,
        }
    }
}

impl PolicyConfig {
    pub fn with_phrases_file(path: &Path) -> Result<Self, std::io::Error> {
        let phrases = parse_phrases(&std::fs::read_to_string(path)?);
        if phrases.is_empty() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}: no phrases", path.display()),
            ));
        }
        Ok(PolicyConfig {
            phrases: Arc::new(phrases),
            ..PolicyConfig::default()
        })
    }
}

fn parse_phrases(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Where actions on `node` land: the center of its on-screen part.
pub fn action_point(node: &NodeRecord, obs: &Observation) -> Point {
    node.rect
        .intersection(&obs.viewport)
        .unwrap_or(node.rect)
        .center()
}

/// One Click per visible clickable node and one Input per visible inputable
/// node, ordered by `(rect.y, rect.x, node_id)` with Click before Input.
pub fn build_action_set(obs: &Observation) -> Vec<ActionCandidate> {
    let mut nodes: Vec<&NodeRecord> = obs.nodes.iter().filter(|n| n.is_interactive()).collect();
    nodes.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let mut out = Vec::new();
    for n in nodes {
        let point = action_point(n, obs);
        if n.clickable {
            out.push(ActionCandidate {
                action: Action::Click {
                    node_id: n.node_id.clone(),
                    point,
                },
                source_node: Some(n.clone()),
                filtered_by: None,
            });
        }
        if n.inputable {
            out.push(ActionCandidate {
                action: Action::Input {
                    node_id: n.node_id.clone(),
                    point,
                    text: String::new(),
                },
                source_node: Some(n.clone()),
                filtered_by: None,
            });
        }
    }
    out
}

/// Keeps the live candidates on the top layer: those whose node `z_index`
/// equals the maximum over live candidates with a source node.
pub fn rule_zindex(mut cands: Vec<ActionCandidate>) -> Vec<ActionCandidate> {
    let top = cands
        .iter()
        .filter(|c| c.is_live())
        .filter_map(|c| c.source_node.as_ref().map(|n| n.z_index))
        .max();
    if let Some(top) = top {
        for c in cands.iter_mut().filter(|c| c.is_live()) {
            if c.source_node.as_ref().is_some_and(|n| n.z_index < top) {
                c.filtered_by = Some(FilterRule::Zindex);
            }
        }
    }
    cands
}

/// Drops live candidates whose node also appeared on the previous page
/// (matched by tag, text and 8 px-quantized size). When that would leave
/// nothing, the input is returned unchanged.
pub fn rule_persistence(mut cands: Vec<ActionCandidate>, prev: Option<&Observation>) -> Vec<ActionCandidate> {
    let Some(prev) = prev else {
        return cands;
    };
    let seen: HashSet<_> = prev.nodes.iter().map(content_key).collect();
    let shared: Vec<usize> = cands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_live())
        .filter(|(_, c)| c.source_node.as_ref().is_some_and(|n| seen.contains(&content_key(n))))
        .map(|(i, _)| i)
        .collect();
    let live = cands.iter().filter(|c| c.is_live()).count();
    if shared.len() == live {
        return cands;
    }
    for i in shared {
        cands[i].filtered_by = Some(FilterRule::Persistence);
    }
    cands
}

/// After an Input, keeps only live candidates near the input box.
///
/// The box is grown on every side by its shorter edge. A candidate survives
/// iff its rect overlaps the grown box and its position in the live,
/// ordered action set is at most two places from the input node's own
/// position there. The rule is a no-op when the preceding action was not an
/// Input or when the input node is no longer on the page.
pub fn rule_input_proximity(mut cands: Vec<ActionCandidate>, state: &PolicyState) -> Vec<ActionCandidate> {
    let Some(input) = &state.last_input_node else {
        return cands;
    };
    let present = cands
        .iter()
        .any(|c| c.source_node.as_ref().is_some_and(|n| n.node_id == input.node_id));
    if !present {
        return cands;
    }
    let grown = input.rect.expand(input.rect.w.min(input.rect.h));
    let live: Vec<usize> = (0..cands.len()).filter(|&i| cands[i].is_live()).collect();
    let anchor = live
        .iter()
        .filter(|&&i| {
            cands[i]
                .source_node
                .as_ref()
                .is_some_and(|n| n.order_key() < input.order_key())
        })
        .count();
    for (pos, &i) in live.iter().enumerate() {
        let keep = cands[i]
            .source_node
            .as_ref()
            .is_some_and(|n| n.rect.intersects(&grown) && pos.abs_diff(anchor) <= 2);
        if !keep {
            cands[i].filtered_by = Some(FilterRule::Proximity);
        }
    }
    cands
}

/// The rule pipeline up to (not including) the final draw.
pub fn refine(obs: &Observation, state: &PolicyState) -> Vec<ActionCandidate> {
    let cands = build_action_set(obs);
    let cands = rule_zindex(cands);
    let cands = rule_persistence(cands, state.prev_observation.as_ref());
    rule_input_proximity(cands, state)
}

/// Scrolls that would actually move the page, in Up/Down/Left/Right order.
/// Each is capped at the distance left before the content edge.
pub fn scroll_options(obs: &Observation, cfg: &PolicyConfig) -> Vec<Action> {
    let max = obs.max_scroll();
    let (ox, oy) = (obs.viewport.x, obs.viewport.y);
    ScrollDirection::ALL
        .into_iter()
        .filter_map(|direction| {
            let (room, extent) = match direction {
                ScrollDirection::Up => (oy, obs.viewport.h),
                ScrollDirection::Down => (max.y - oy, obs.viewport.h),
                ScrollDirection::Left => (ox, obs.viewport.w),
                ScrollDirection::Right => (max.x - ox, obs.viewport.w),
            };
            let step = ((extent as f64 * cfg.scroll_fraction).floor() as i64).max(1);
            (room > 0).then(|| Action::Scroll {
                direction,
                distance: step.min(room),
            })
        })
        .collect()
}

/// Live candidates followed by the available scrolls: the set the final
/// uniform draw is made from.
pub fn action_pool(cands: &[ActionCandidate], obs: &Observation, cfg: &PolicyConfig) -> Vec<Action> {
    cands
        .iter()
        .filter(|c| c.is_live())
        .map(|c| c.action.clone())
        .chain(scroll_options(obs, cfg))
        .collect()
}

/// Uniform draw from [`action_pool`]; Input text is then drawn uniformly
/// from the phrase list with the same generator.
pub fn choose_action(
    cands: &[ActionCandidate],
    obs: &Observation,
    rng: &mut SeededRng,
    cfg: &PolicyConfig,
) -> Result<Action, PolicyError> {
    let pool = action_pool(cands, obs, cfg);
    if pool.is_empty() {
        return Err(PolicyError::EmptyActionSet);
    }
    let mut action = pool[rng.below(pool.len())].clone();
    if let Action::Input { text, .. } = &mut action {
        if cfg.phrases.is_empty() {
            return Err(PolicyError::NoPhrases);
        }
        *text = cfg.phrases[rng.below(cfg.phrases.len())].clone();
    }
    Ok(action)
}

/// Per-step bookkeeping of what the rules did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepProvenance {
    pub built: usize,
    pub removed_zindex: usize,
    pub removed_persistence: usize,
    pub removed_proximity: usize,
    pub scroll_options: usize,
    /// Size of the set the action was drawn from.
    pub refined: usize,
}

impl StepProvenance {
    pub fn of(cands: &[ActionCandidate], scrolls: usize) -> Self {
        let count = |r| cands.iter().filter(|c| c.filtered_by == Some(r)).count();
        let live = cands.iter().filter(|c| c.is_live()).count();
        StepProvenance {
            built: cands.len(),
            removed_zindex: count(FilterRule::Zindex),
            removed_persistence: count(FilterRule::Persistence),
            removed_proximity: count(FilterRule::Proximity),
            scroll_options: scrolls,
            refined: live + scrolls,
        }
    }
}
