//! The in-page probe's result format, shared with browser backends.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Rect;
use crate::observation::{normalize_text, NodeRecord};

pub const PROBE_SCHEMA: &str = include_str!("../schema/probe-result.schema.json");
pub const PROBE_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("probe schema_version {found:?}, expected {PROBE_SCHEMA_VERSION:?}")]
    Version { found: Option<String> },
    #[error("probe result violates schema: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("probe result: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeViewport {
    pub w: i64,
    pub h: i64,
    pub scroll_x: i64,
    pub scroll_y: i64,
}

impl ProbeViewport {
    pub fn rect(&self) -> Rect {
        Rect::new(self.scroll_x, self.scroll_y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeElement {
    pub node_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub tag: String,
    pub text: String,
    pub rect: Rect,
    pub z_index: i64,
    pub clickable: bool,
    pub inputable: bool,
    pub opaque: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharBox {
    pub node_id: String,
    pub char: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub schema_version: String,
    #[serde(default)]
    pub truncated: bool,
    pub viewport: ProbeViewport,
    pub elements: Vec<ProbeElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_boxes: Option<Vec<CharBox>>,
}

fn validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: serde_json::Value = serde_json::from_str(PROBE_SCHEMA).expect("bundled probe schema is JSON");
        jsonschema::validator_for(&schema).expect("bundled probe schema compiles")
    })
}

/// Checks the version first so an outdated probe gets a precise message
/// instead of a schema dump.
pub fn parse_probe(value: serde_json::Value) -> Result<ProbeResult, ProbeError> {
    let version = value.get("schema_version").and_then(|v| v.as_str());
    if version != Some(PROBE_SCHEMA_VERSION) {
        return Err(ProbeError::Version {
            found: version.map(str::to_string),
        });
    }
    let errors: Vec<String> = validator()
        .iter_errors(&value)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    if !errors.is_empty() {
        return Err(ProbeError::Schema(errors));
    }
    let result: ProbeResult = serde_json::from_value(value).map_err(|e| ProbeError::Invalid(e.to_string()))?;
    let mut ids = HashSet::new();
    for e in &result.elements {
        if !ids.insert(e.node_id.as_str()) {
            return Err(ProbeError::Invalid(format!("duplicate node_id {}", e.node_id)));
        }
    }
    Ok(result)
}

impl ProbeResult {
    pub fn nodes(&self) -> Vec<NodeRecord> {
        self.elements
            .iter()
            .map(|e| NodeRecord {
                node_id: e.node_id.clone(),
                parent_id: e.parent_id.clone(),
                tag: e.tag.to_ascii_lowercase(),
                text: normalize_text(&e.text),
                rect: e.rect,
                z_index: e.z_index,
                clickable: e.clickable,
                inputable: e.inputable,
                opaque: e.opaque,
            })
            .collect()
    }

    /// The probe-side view of a node list, used by test doubles.
    pub fn from_nodes(viewport: Rect, nodes: &[NodeRecord]) -> Self {
        ProbeResult {
            schema_version: PROBE_SCHEMA_VERSION.into(),
            truncated: false,
            viewport: ProbeViewport {
                w: viewport.w,
                h: viewport.h,
                scroll_x: viewport.x,
                scroll_y: viewport.y,
            },
            elements: nodes
                .iter()
                .map(|n| ProbeElement {
                    node_id: n.node_id.clone(),
                    parent_id: n.parent_id.clone(),
                    tag: n.tag.clone(),
                    text: n.text.clone(),
                    rect: n.rect,
                    z_index: n.z_index,
                    clickable: n.clickable,
                    inputable: n.inputable,
                    opaque: n.opaque,
                })
                .collect(),
            char_boxes: None,
        }
    }
}
