//! Simulated device profiles.
//!
//! Eight profiles ship in `data/profiles.jsonl` (two per platform); a user
//! file in the same line-delimited format extends the registry.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

const BUILTIN_PROFILES: &str = include_str!("../data/profiles.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Platform {
    #[serde(rename = "iOS")]
    Ios,
    Android,
    Windows,
    Linux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormFactor {
    Mobile,
    Tablet,
    Desktop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub id: String,
    pub platform: Platform,
    pub form: FormFactor,
    pub viewport_w: u32,
    pub viewport_h: u32,
    pub pixel_ratio: f64,
    pub user_agent: String,
}

impl DeviceProfile {
    pub fn is_mobile(&self) -> bool {
        self.form != FormFactor::Desktop
    }

    fn validate(&self) -> Result<(), ProfileError> {
        if self.viewport_w == 0 || self.viewport_h == 0 {
            return Err(ProfileError::Invalid(format!("{}: zero viewport", self.id)));
        }
        if !(self.pixel_ratio > 0.0 && self.pixel_ratio.is_finite()) {
            return Err(ProfileError::Invalid(format!("{}: pixel_ratio must be > 0", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile registry is empty")]
    EmptyRegistry,
    #[error("invalid profile: {0}")]
    Invalid(String),
    #[error("duplicate profile id {0}")]
    DuplicateId(String),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_profiles(text: &str) -> Result<Vec<DeviceProfile>, ProfileError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: DeviceProfile =
            serde_json::from_str(line).map_err(|source| ProfileError::Parse { line: i + 1, source })?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

/// The shipped registry in file order.
pub fn builtin_profiles() -> Vec<DeviceProfile> {
    parse_profiles(BUILTIN_PROFILES).expect("bundled profiles.jsonl is valid")
}

/// Appends the profiles in `path` to `registry`, rejecting id clashes.
pub fn extend_from_file(registry: &mut Vec<DeviceProfile>, path: &Path) -> Result<(), ProfileError> {
    let extra = parse_profiles(&std::fs::read_to_string(path)?)?;
    let mut ids: HashSet<String> = registry.iter().map(|p| p.id.clone()).collect();
    for p in extra {
        if !ids.insert(p.id.clone()) {
            return Err(ProfileError::DuplicateId(p.id));
        }
        registry.push(p);
    }
    Ok(())
}

/// Uniform seeded pick: index = first generator draw modulo registry length.
pub fn sample_profile(seed: u64, registry: &[DeviceProfile]) -> Result<&DeviceProfile, ProfileError> {
    if registry.is_empty() {
        return Err(ProfileError::EmptyRegistry);
    }
    Ok(&registry[SeededRng::new(seed).below(registry.len())])
}
