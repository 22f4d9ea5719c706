//! Deterministic offline GUI backend.
//!
//! A [`FixtureApp`] is a small declarative multi-page application read from a
//! `.guifix.json` document. Documents are checked against the bundled JSON
//! schema and then against the referential invariants the schema cannot
//! express (unique ids, known targets, acyclic parents).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceProfile;
use crate::env::{Clock, EnvError, EnvFactory, GuiEnv, LogicalClock};
use crate::geometry::{Point, Rect, Size};
use crate::observation::{normalize_text, Action, NodeRecord, Observation};

pub const FIXTURE_SCHEMA: &str = include_str!("../schema/guifix.schema.json");
pub const FIXTURE_EXTENSION: &str = ".guifix.json";
pub const FIXTURE_SCHEME: &str = "fixture";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema violation: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("duplicate app_id {0} in fixture directory")]
    DuplicateApp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Click,
    Input,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub node_id: String,
    pub action_kind: TransitionKind,
    pub target_page_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageFixture {
    pub page_id: String,
    pub content_w: i64,
    pub content_h: i64,
    pub nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<Transition>,
}

impl PageFixture {
    pub fn transition(&self, node_id: &str, kind: TransitionKind) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.node_id == node_id && t.action_kind == kind)
    }

    pub fn content_size(&self) -> Size {
        Size {
            w: self.content_w,
            h: self.content_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureApp {
    pub app_id: String,
    pub initial_page: String,
    pub pages: BTreeMap<String, PageFixture>,
}

fn schema_validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: serde_json::Value =
            serde_json::from_str(FIXTURE_SCHEMA).expect("bundled fixture schema is JSON");
        jsonschema::validator_for(&schema).expect("bundled fixture schema compiles")
    })
}

/// Reads and validates a fixture document.
pub fn load_fixture(path: &Path) -> Result<FixtureApp, FixtureError> {
    let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    FixtureApp::from_json_str(&text)
}

impl FixtureApp {
    pub fn from_json_str(text: &str) -> Result<Self, FixtureError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let errors: Vec<String> = schema_validator()
            .iter_errors(&value)
            .map(|e| format!("{} at {}", e, e.instance_path()))
            .collect();
        if !errors.is_empty() {
            return Err(FixtureError::Schema(errors));
        }
        let mut app: FixtureApp = serde_json::from_value(value)?;
        for page in app.pages.values_mut() {
            for n in &mut page.nodes {
                n.text = normalize_text(&n.text);
            }
        }
        app.validate()?;
        Ok(app)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize")
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        let bad = |m: String| Err(FixtureError::Validation(m));
        if !self.pages.contains_key(&self.initial_page) {
            return bad(format!("unknown initial_page {}", self.initial_page));
        }
        for (key, page) in &self.pages {
            if key != &page.page_id {
                return bad(format!("page key {key} does not match page_id {}", page.page_id));
            }
            let mut by_id: HashMap<&str, &NodeRecord> = HashMap::new();
            for n in &page.nodes {
                if by_id.insert(n.node_id.as_str(), n).is_some() {
                    return bad(format!("duplicate node_id {} on page {key}", n.node_id));
                }
                if n.rect.w < 0 || n.rect.h < 0 {
                    return bad(format!("negative size on node {} on page {key}", n.node_id));
                }
            }
            for n in &page.nodes {
                let mut seen = HashSet::new();
                let mut cur = n;
                while let Some(parent) = &cur.parent_id {
                    if !seen.insert(cur.node_id.as_str()) {
                        return bad(format!("parent cycle through node {} on page {key}", n.node_id));
                    }
                    match by_id.get(parent.as_str()) {
                        Some(p) => cur = p,
                        None => {
                            return bad(format!(
                                "unknown parent_id {parent} on node {} on page {key}",
                                cur.node_id
                            ))
                        }
                    }
                }
            }
            let mut kinds = HashSet::new();
            for t in &page.transitions {
                let Some(node) = by_id.get(t.node_id.as_str()) else {
                    return bad(format!("unknown node_id {} in transition on page {key}", t.node_id));
                };
                if !self.pages.contains_key(&t.target_page_id) {
                    return bad(format!(
                        "unknown target_page_id {} in transition from node {} on page {key}",
                        t.target_page_id, t.node_id
                    ));
                }
                let allowed = match t.action_kind {
                    TransitionKind::Click => node.clickable,
                    TransitionKind::Input => node.inputable,
                };
                if !allowed {
                    return bad(format!(
                        "transition {:?} on node {} which does not accept it (page {key})",
                        t.action_kind, t.node_id
                    ));
                }
                if !kinds.insert((t.node_id.as_str(), t.action_kind)) {
                    return bad(format!("duplicate transition on node {} on page {key}", t.node_id));
                }
            }
        }
        Ok(())
    }

    pub fn start_ref(&self) -> String {
        format!("{FIXTURE_SCHEME}://{}", self.app_id)
    }

    pub fn page_ref(&self, page_id: &str) -> String {
        format!("{FIXTURE_SCHEME}://{}/{page_id}", self.app_id)
    }

    pub fn page_id_of<'a>(&self, page_ref: &'a str) -> Option<&'a str> {
        let rest = page_ref.strip_prefix(FIXTURE_SCHEME)?.strip_prefix("://")?;
        rest.strip_prefix(self.app_id.as_str())?.strip_prefix('/')
    }

    pub fn page(&self, page_id: &str) -> Option<&PageFixture> {
        self.pages.get(page_id)
    }

    pub fn initial_state(&self) -> PageState {
        PageState {
            page_id: self.initial_page.clone(),
            scroll: Point::new(0, 0),
            overrides: BTreeMap::new(),
        }
    }

    /// Renders `state` as the observation at `step_index`.
    pub fn render(&self, state: &PageState, viewport: Size, step_index: usize) -> Observation {
        let page = &self.pages[&state.page_id];
        let nodes: Vec<NodeRecord> = page
            .nodes
            .iter()
            .map(|n| match state.overrides.get(&n.node_id) {
                Some(text) => NodeRecord {
                    text: text.clone(),
                    ..n.clone()
                },
                None => n.clone(),
            })
            .collect();
        let vp = Rect::new(state.scroll.x, state.scroll.y, viewport.w, viewport.h);
        Observation::new(
            step_index,
            self.page_ref(&state.page_id),
            vp,
            page.content_size(),
            visible_among(&nodes, vp),
            None,
        )
    }

    /// Recovers the session state an observation was rendered from. Text
    /// typed into nodes that are currently off-screen is not recoverable.
    pub fn state_of(&self, obs: &Observation) -> Result<PageState, EnvError> {
        let page_id = self
            .page_id_of(&obs.page_ref)
            .filter(|p| self.pages.contains_key(*p))
            .ok_or_else(|| EnvError::InvalidAction(format!("page {} is not in app {}", obs.page_ref, self.app_id)))?;
        let page = &self.pages[page_id];
        let mut overrides = BTreeMap::new();
        for n in &obs.nodes {
            if let Some(base) = page.nodes.iter().find(|b| b.node_id == n.node_id) {
                if base.text != n.text {
                    overrides.insert(n.node_id.clone(), n.text.clone());
                }
            }
        }
        Ok(PageState {
            page_id: page_id.to_string(),
            scroll: Point::new(obs.viewport.x, obs.viewport.y),
            overrides,
        })
    }

    /// Transition function. `obs` is the observation the action was chosen
    /// from; the target node must be one of its nodes.
    pub fn step(&self, state: &PageState, obs: &Observation, action: &Action) -> Result<PageState, EnvError> {
        let page = &self.pages[&state.page_id];
        let target = |node_id: &str, point: Point| -> Result<&NodeRecord, EnvError> {
            let node = obs
                .node(node_id)
                .ok_or_else(|| EnvError::NodeNotFound(node_id.to_string()))?;
            if !node.rect.contains_point(point) {
                return Err(EnvError::InvalidAction(format!(
                    "point ({}, {}) outside node {node_id}",
                    point.x, point.y
                )));
            }
            Ok(node)
        };
        let navigate = |target_page: &str| PageState {
            page_id: target_page.to_string(),
            scroll: Point::new(0, 0),
            overrides: BTreeMap::new(),
        };
        match action {
            Action::Click { node_id, point } => {
                let node = target(node_id, *point)?;
                if !node.clickable {
                    return Err(EnvError::NotActionable {
                        node_id: node_id.clone(),
                        action: "click",
                    });
                }
                Ok(match page.transition(node_id, TransitionKind::Click) {
                    Some(t) => navigate(&t.target_page_id),
                    None => state.clone(),
                })
            }
            Action::Input { node_id, point, text } => {
                let node = target(node_id, *point)?;
                if !node.inputable {
                    return Err(EnvError::NotActionable {
                        node_id: node_id.clone(),
                        action: "input",
                    });
                }
                Ok(match page.transition(node_id, TransitionKind::Input) {
                    Some(t) => navigate(&t.target_page_id),
                    None => {
                        let mut next = state.clone();
                        next.overrides.insert(node_id.clone(), normalize_text(text));
                        next
                    }
                })
            }
            Action::Scroll { direction, distance } => {
                if *distance <= 0 {
                    return Err(EnvError::InvalidAction("scroll distance must be positive".into()));
                }
                let max = obs.max_scroll();
                let (dx, dy) = direction.delta();
                let mut next = state.clone();
                next.scroll = Point::new(
                    (state.scroll.x + dx * distance).clamp(0, max.x),
                    (state.scroll.y + dy * distance).clamp(0, max.y),
                );
                Ok(next)
            }
        }
    }
}

/// Scroll offset, current page and text typed so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageState {
    pub page_id: String,
    pub scroll: Point,
    pub overrides: BTreeMap<String, String>,
}

/// Nodes of `page` visible through `viewport`.
///
pub fn visible_nodes(page: &PageFixture, viewport: Rect) -> Vec<NodeRecord> {
    visible_among(&page.nodes, viewport)
}

/// A node is visible when it overlaps the viewport with positive area and no
/// single opaque node with a strictly greater `z_index` covers it entirely.
/// Output is sorted by `(rect.y, rect.x, node_id)`. Both backends apply this
/// so that equal pages hash equally.
pub fn visible_among(nodes: &[NodeRecord], viewport: Rect) -> Vec<NodeRecord> {
    let occluded = |n: &NodeRecord| {
        nodes
            .iter()
            .any(|m| m.opaque && m.z_index > n.z_index && m.rect.contains_rect(&n.rect))
    };
    let mut out: Vec<NodeRecord> = nodes
        .iter()
        .filter(|n| n.rect.intersects(&viewport) && !occluded(n))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    out
}

/// Pure transition: the observation that follows `action` taken from `obs`.
pub fn apply_action(app: &FixtureApp, obs: &Observation, action: &Action) -> Result<Observation, EnvError> {
    let state = app.state_of(obs)?;
    let next = app.step(&state, obs, action)?;
    Ok(app.render(&next, obs.viewport.size(), obs.step_index + 1))
}

/// A live session on a [`FixtureApp`].
#[derive(Debug, Clone)]
pub struct FixtureSession {
    app: Arc<FixtureApp>,
    start_ref: String,
    viewport: Size,
    state: PageState,
    last: Option<Observation>,
}

impl FixtureSession {
    pub fn new(app: Arc<FixtureApp>, viewport: Size) -> Self {
        FixtureSession {
            start_ref: app.start_ref(),
            state: app.initial_state(),
            app,
            viewport,
            last: None,
        }
    }

    pub fn for_profile(app: Arc<FixtureApp>, profile: &DeviceProfile) -> Self {
        Self::new(
            app,
            Size {
                w: i64::from(profile.viewport_w),
                h: i64::from(profile.viewport_h),
            },
        )
    }

    pub fn state(&self) -> &PageState {
        &self.state
    }

    pub fn app(&self) -> &FixtureApp {
        &self.app
    }
}

impl GuiEnv for FixtureSession {
    fn start_ref(&self) -> &str {
        &self.start_ref
    }

    fn observe(&mut self, step_index: usize) -> Result<Observation, EnvError> {
        let obs = self.app.render(&self.state, self.viewport, step_index);
        self.last = Some(obs.clone());
        Ok(obs)
    }

    fn perform(&mut self, action: &Action) -> Result<(), EnvError> {
        let obs = match &self.last {
            Some(o) => o.clone(),
            None => self.observe(0)?,
        };
        self.state = self.app.step(&self.state, &obs, action)?;
        self.last = None;
        Ok(())
    }
}

/// A directory of fixture apps addressed by `fixture://<app_id>`.
#[derive(Debug, Clone, Default)]
pub struct FixtureCorpus {
    apps: BTreeMap<String, Arc<FixtureApp>>,
}

impl FixtureCorpus {
    pub fn new(apps: impl IntoIterator<Item = FixtureApp>) -> Result<Self, FixtureError> {
        let mut corpus = FixtureCorpus::default();
        for app in apps {
            corpus.insert(app)?;
        }
        Ok(corpus)
    }

    pub fn insert(&mut self, app: FixtureApp) -> Result<(), FixtureError> {
        let key = app.start_ref();
        if self.apps.contains_key(&key) {
            return Err(FixtureError::DuplicateApp(app.app_id));
        }
        self.apps.insert(key, Arc::new(app));
        Ok(())
    }

    /// Loads every `*.guifix.json` file in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Self, FixtureError> {
        let io = |source| FixtureError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(FIXTURE_EXTENSION))
            })
            .collect();
        paths.sort();
        let mut corpus = FixtureCorpus::default();
        for p in paths {
            let app = load_fixture(&p).map_err(|e| match e {
                FixtureError::Io { .. } | FixtureError::DuplicateApp(_) => e,
                other => FixtureError::Validation(format!("{}: {other}", p.display())),
            })?;
            corpus.insert(app)?;
        }
        Ok(corpus)
    }

    /// Looks up `fixture://<app_id>`, or any URL whose host is an app id, so
    /// that a URL manifest can be replayed against fixtures.
    pub fn get(&self, start_ref: &str) -> Option<&Arc<FixtureApp>> {
        self.apps
            .get(start_ref)
            .or_else(|| self.apps.get(start_ref.trim_end_matches('/')))
            .or_else(|| {
                let host = url::Url::parse(start_ref).ok()?.host_str()?.to_ascii_lowercase();
                self.apps.get(&format!("{FIXTURE_SCHEME}://{host}"))
            })
    }

    pub fn start_refs(&self) -> Vec<String> {
        self.apps.keys().cloned().collect()
    }

    pub fn apps(&self) -> impl Iterator<Item = &Arc<FixtureApp>> {
        self.apps.values()
    }

    pub fn len(&self) -> usize {
        self.apps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apps.is_empty()
    }
}

impl EnvFactory for FixtureCorpus {
    type Env = FixtureSession;

    fn open(&self, start_ref: &str, profile: &DeviceProfile) -> Result<FixtureSession, EnvError> {
        let app = self
            .get(start_ref)
            .ok_or_else(|| EnvError::Unreachable(format!("no fixture app for {start_ref}")))?;
        Ok(FixtureSession::for_profile(app.clone(), profile))
    }

    fn clock(&self) -> Box<dyn Clock> {
        Box::new(LogicalClock::new(0))
    }
}
