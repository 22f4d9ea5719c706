//! Conversation layouts.
//!
//! Stepwise: images `[o1, o(T+1), o2, .., oT]`. The first user turn shows the
//! initial and final observations, each assistant turn answers one action,
//! and every later user turn reveals the next intermediate observation.
//!
//! Reorder: all `T+1` observations in a seeded random order, answered by
//! one assistant turn holding the true order and the `T` actions.
//! `permutation[k]` is the true index of the `k`-th shown image.

use serde::{Deserialize, Serialize};

use super::grammar::{serialize_action, TargetStyle};
use super::EmitError;
use crate::observation::Observation;
use crate::recorder::Episode;
use crate::rng::SeededRng;

pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    Stepwise,
    Reorder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainSample {
    pub sample_id: String,
    pub episode_id: String,
    pub format: SampleFormat,
    pub target_style: TargetStyle,
    pub images: Vec<String>,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
}

impl PretrainSample {
    /// Count of image placeholders across all turns.
    pub fn placeholder_count(&self, token: &str) -> usize {
        self.turns.iter().map(|t| t.text.matches(token).count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepwiseTemplates {
    pub first_user: String,
    pub reveal_user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReorderTemplates {
    pub user_header: String,
    pub user_image: String,
    pub user_footer: String,
    pub answer_order: String,
    pub answer_step: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub version: String,
    pub image_token: String,
    pub stepwise: StepwiseTemplates,
    pub reorder: ReorderTemplates,
}

impl Templates {
    pub fn from_json(s: &str) -> Result<Self, EmitError> {
        let t: Templates = serde_json::from_str(s).map_err(|e| EmitError::Templates(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), EmitError> {
        let count = |s: &str| s.matches(self.image_token.as_str()).count();
        let checks = [
            ("stepwise.first_user", count(&self.stepwise.first_user) == 2),
            ("stepwise.reveal_user", count(&self.stepwise.reveal_user) == 1),
            ("reorder.user_image", count(&self.reorder.user_image) == 1),
            ("reorder.user_header", count(&self.reorder.user_header) == 0),
            ("reorder.user_footer", count(&self.reorder.user_footer) == 0),
        ];
        if self.image_token.is_empty() {
            return Err(EmitError::Templates("empty image_token".into()));
        }
        for (name, ok) in checks {
            if !ok {
                return Err(EmitError::Templates(format!("{name} has the wrong number of image tokens")));
            }
        }
        Ok(())
    }
}

impl Default for Templates {
    fn default() -> Self {
        Templates::from_json(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

pub fn image_ref(episode: &Episode, obs: &Observation) -> String {
    obs.screenshot_ref
        .clone()
        .unwrap_or_else(|| format!("{}/{}", episode.episode_id, obs.obs_id))
}

#[derive(Debug, Clone, Default)]
pub struct Emitter {
    pub templates: Templates,
}

impl Emitter {
    pub fn new(templates: Templates) -> Self {
        Emitter { templates }
    }

    fn final_obs<'a>(&self, ep: &'a Episode, required: usize) -> Result<&'a Observation, EmitError> {
        if ep.action_count() < required {
            return Err(EmitError::Ineligible {
                episode_id: ep.episode_id.clone(),
                actions: ep.action_count(),
                required,
            });
        }
        ep.final_observation
            .as_ref()
            .ok_or_else(|| EmitError::NoFinalObservation(ep.episode_id.clone()))
    }

    fn actions(&self, ep: &Episode, style: TargetStyle) -> Result<Vec<String>, EmitError> {
        ep.steps
            .iter()
            .map(|s| serialize_action(&s.action, &s.observation, style))
            .collect()
    }

    pub fn format1(&self, ep: &Episode, style: TargetStyle) -> Result<PretrainSample, EmitError> {
        let last = self.final_obs(ep, 1)?;
        let actions = self.actions(ep, style)?;
        let t = &self.templates.stepwise;
        let mut images = vec![image_ref(ep, &ep.steps[0].observation), image_ref(ep, last)];
        let mut turns = Vec::with_capacity(2 * actions.len());
        for (i, action) in actions.into_iter().enumerate() {
            let text = if i == 0 {
                t.first_user.clone()
            } else {
                images.push(image_ref(ep, &ep.steps[i].observation));
                t.reveal_user.clone()
            };
            turns.push(Turn { role: Role::User, text });
            turns.push(Turn {
                role: Role::Assistant,
                text: action,
            });
        }
        Ok(PretrainSample {
            sample_id: format!("{}-stepwise", ep.episode_id),
            episode_id: ep.episode_id.clone(),
            format: SampleFormat::Stepwise,
            target_style: style,
            images,
            turns,
            permutation: None,
        })
    }

    pub fn format2(&self, ep: &Episode, style: TargetStyle, shuffle_seed: u64) -> Result<PretrainSample, EmitError> {
        self.final_obs(ep, 2)?;
        let actions = self.actions(ep, style)?;
        let t = &self.templates.reorder;
        let obs: Vec<&Observation> = ep.observations().collect();
        let mut permutation: Vec<usize> = (0..obs.len()).collect();
        SeededRng::new(shuffle_seed).shuffle(&mut permutation);

        let mut user = vec![t.user_header.clone()];
        for k in 0..permutation.len() {
            user.push(t.user_image.replace("{index}", &(k + 1).to_string()));
        }
        user.push(t.user_footer.clone());

        // label[i] = 1-based position at which true observation i is shown
        let mut label = vec![0; permutation.len()];
        for (k, &i) in permutation.iter().enumerate() {
            label[i] = k + 1;
        }
        let order = label.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
        let mut answer = vec![t.answer_order.replace("{order}", &order)];
        for (i, action) in actions.iter().enumerate() {
            answer.push(
                t.answer_step
                    .replace("{from}", &label[i].to_string())
                    .replace("{to}", &label[i + 1].to_string())
                    .replace("{action}", action),
            );
        }
        Ok(PretrainSample {
            sample_id: format!("{}-reorder", ep.episode_id),
            episode_id: ep.episode_id.clone(),
            format: SampleFormat::Reorder,
            target_style: style,
            images: permutation.iter().map(|&i| image_ref(ep, obs[i])).collect(),
            turns: vec![
                Turn {
                    role: Role::User,
                    text: user.join("\n"),
                },
                Turn {
                    role: Role::Assistant,
                    text: answer.join("\n"),
                },
            ],
            permutation: Some(permutation),
        })
    }
}

/// Stepwise sample with the bundled templates.
pub fn emit_format1(ep: &Episode, style: TargetStyle) -> Result<PretrainSample, EmitError> {
    Emitter::default().format1(ep, style)
}

/// Reorder sample with the bundled templates.
pub fn emit_format2(ep: &Episode, style: TargetStyle, shuffle_seed: u64) -> Result<PretrainSample, EmitError> {
    Emitter::default().format2(ep, style, shuffle_seed)
}
