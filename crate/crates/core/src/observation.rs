//! Observations, node records, actions and page identity.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect, Size};
use crate::rng::Fnv64;

/// Pixel lattice used when hashing node geometry.
pub const HASH_GRID_PX: i64 = 8;

/// One visible element of a page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    pub tag: String,
    #[serde(default)]
    pub text: String,
    pub rect: Rect,
    #[serde(default)]
    pub z_index: i64,
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub inputable: bool,
    #[serde(default)]
    pub opaque: bool,
}

impl NodeRecord {
    pub fn is_interactive(&self) -> bool {
        self.clickable || self.inputable
    }

    /// Ordering key shared by visibility output and the action set.
    pub fn order_key(&self) -> (i64, i64, &str) {
        (self.rect.y, self.rect.x, self.node_id.as_str())
    }
}

/// Cross-page identity of a node: position-free so that elements which
/// merely shifted between pages still match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentKey {
    pub tag: String,
    pub text: String,
    pub w_cell: i64,
    pub h_cell: i64,
}

pub fn content_key(node: &NodeRecord) -> ContentKey {
    ContentKey {
        tag: node.tag.clone(),
        text: normalize_text(&node.text),
        w_cell: node.rect.w.div_euclid(HASH_GRID_PX),
        h_cell: node.rect.h.div_euclid(HASH_GRID_PX),
    }
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One GUI snapshot.
///
/// `viewport` is in page coordinates: its origin is the scroll offset.
/// `content_size` is the scrollable extent of the page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub obs_id: String,
    pub step_index: usize,
    pub page_ref: String,
    pub viewport: Rect,
    pub content_size: Size,
    pub nodes: Vec<NodeRecord>,
    #[serde(default)]
    pub screenshot_ref: Option<String>,
    pub content_hash: u64,
}

impl Observation {
    /// Assembles an observation, computing its hash and id from the nodes.
    pub fn new(
        step_index: usize,
        page_ref: impl Into<String>,
        viewport: Rect,
        content_size: Size,
        nodes: Vec<NodeRecord>,
        screenshot_ref: Option<String>,
    ) -> Self {
        let hash = content_hash(&nodes);
        Observation {
            obs_id: format!("s{step_index}-{hash:016x}"),
            step_index,
            page_ref: page_ref.into(),
            viewport,
            content_size,
            nodes,
            screenshot_ref,
            content_hash: hash,
        }
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeRecord> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    /// Furthest scroll offset reachable on each axis.
    pub fn max_scroll(&self) -> Point {
        Point::new(
            (self.content_size.w - self.viewport.w).max(0),
            (self.content_size.h - self.viewport.h).max(0),
        )
    }

    /// Concatenated visible text, used as the page's main content.
    pub fn main_text(&self) -> String {
        let parts: Vec<&str> = self
            .nodes
            .iter()
            .map(|n| n.text.as_str())
            .filter(|t| !t.is_empty())
            .collect();
        parts.join(" ")
    }

    /// Checks the structural invariants every backend must uphold.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.viewport.is_empty() {
            return Err(format!("{}: empty viewport", self.obs_id));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.node_id.as_str()) {
                return Err(format!("{}: duplicate node_id {}", self.obs_id, n.node_id));
            }
            if !n.rect.intersects(&self.viewport) {
                return Err(format!("{}: node {} outside viewport", self.obs_id, n.node_id));
            }
        }
        if self.content_hash != content_hash(&self.nodes) {
            return Err(format!("{}: stale content_hash", self.obs_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrollDirection {
    Up,
    Down,
    Left,
    Right,
}

impl ScrollDirection {
    pub const ALL: [ScrollDirection; 4] = [
        ScrollDirection::Up,
        ScrollDirection::Down,
        ScrollDirection::Left,
        ScrollDirection::Right,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ScrollDirection::Up => "UP",
            ScrollDirection::Down => "DOWN",
            ScrollDirection::Left => "LEFT",
            ScrollDirection::Right => "RIGHT",
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, ScrollDirection::Up | ScrollDirection::Down)
    }

    /// Unit offset change along (x, y).
    pub fn delta(self) -> (i64, i64) {
        match self {
            ScrollDirection::Up => (0, -1),
            ScrollDirection::Down => (0, 1),
            ScrollDirection::Left => (-1, 0),
            ScrollDirection::Right => (1, 0),
        }
    }
}

/// One interaction. Points are page coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Click {
        node_id: String,
        point: Point,
    },
    Scroll {
        direction: ScrollDirection,
        distance: i64,
    },
    Input {
        node_id: String,
        point: Point,
        text: String,
    },
}

impl Action {
    pub fn node_id(&self) -> Option<&str> {
        match self {
            Action::Click { node_id, .. } | Action::Input { node_id, .. } => Some(node_id),
            Action::Scroll { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Action::Click { .. } => "click",
            Action::Scroll { .. } => "scroll",
            Action::Input { .. } => "input",
        }
    }
}

fn node_digest(node: &NodeRecord) -> u64 {
    let mut h = Fnv64::new();
    h.write(node.tag.as_bytes());
    h.write(&[0xff]);
    h.write(normalize_text(&node.text).as_bytes());
    h.write(&[0xff]);
    let r = node.rect.snapped(HASH_GRID_PX);
    for v in [r.x, r.y, r.w, r.h] {
        h.write_i64(v);
    }
    h.write(&[u8::from(node.clickable), u8::from(node.inputable)]);
    h.finish()
}

/// Page identity: a hash over the multiset of
/// `(tag, normalized text, rect on an 8 px grid, clickable, inputable)`.
///
/// Per-node digests are sorted before being folded, which makes the result
/// independent of node order.
pub fn content_hash(nodes: &[NodeRecord]) -> u64 {
    let mut digests: Vec<u64> = nodes.iter().map(node_digest).collect();
    digests.sort_unstable();
    let mut h = Fnv64::new();
    h.write_u64(digests.len() as u64);
    for d in digests {
        h.write_u64(d);
    }
    h.finish()
}
