//! Action strings.
//!
//! ```text
//! CLICK [x,y]            CLICK [x1,y1,x2,y2]
//! INPUT [x,y] "text"     INPUT [x1,y1,x2,y2] "text"
//! SCROLL DOWN d
//! ```
//!
//! Coordinates are `floor((px - viewport_origin) * 1000 / extent)` clamped
//! to `[0, 999]`; `d` is the scroll distance in per-mille of the viewport
//! extent along the scroll axis. The full grammar ships as
//! `data/action.grammar`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::EmitError;
use crate::geometry::{Point, Rect};
use crate::observation::{Action, Observation, ScrollDirection};

pub const ACTION_GRAMMAR: &str = include_str!("../../data/action.grammar");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStyle {
    Point,
    Bbox,
}

impl TargetStyle {
    pub fn name(self) -> &'static str {
        match self {
            TargetStyle::Point => "point",
            TargetStyle::Bbox => "bbox",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedTarget {
    Point([u32; 2]),
    Bbox([u32; 4]),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedAction {
    Click(ParsedTarget),
    Input(ParsedTarget, String),
    Scroll(ScrollDirection, u64),
}

fn per_mille(v: i64, origin: i64, extent: i64) -> u32 {
    ((v - origin) * 1000).div_euclid(extent).clamp(0, 999) as u32
}

fn norm_point(p: Point, vp: &Rect) -> [u32; 2] {
    [per_mille(p.x, vp.x, vp.w), per_mille(p.y, vp.y, vp.h)]
}

fn norm_rect(r: &Rect, vp: &Rect) -> [u32; 4] {
    let r = r.intersection(vp).unwrap_or(*r);
    [
        per_mille(r.x, vp.x, vp.w),
        per_mille(r.y, vp.y, vp.h),
        per_mille(r.right(), vp.x, vp.w),
        per_mille(r.bottom(), vp.y, vp.h),
    ]
}

/// The normalized form of `action` as seen in `obs`.
pub fn normalize_action(action: &Action, obs: &Observation, style: TargetStyle) -> Result<ParsedAction, EmitError> {
    let vp = obs.viewport;
    if vp.is_empty() {
        return Err(EmitError::ZeroViewport(obs.obs_id.clone()));
    }
    let target = |node_id: &str, point: Point| -> Result<ParsedTarget, EmitError> {
        Ok(match style {
            TargetStyle::Point => ParsedTarget::Point(norm_point(point, &vp)),
            TargetStyle::Bbox => {
                let node = obs.node(node_id).ok_or_else(|| EmitError::MissingNode {
                    node_id: node_id.to_string(),
                    obs_id: obs.obs_id.clone(),
                })?;
                ParsedTarget::Bbox(norm_rect(&node.rect, &vp))
            }
        })
    };
    Ok(match action {
        Action::Click { node_id, point } => ParsedAction::Click(target(node_id, *point)?),
        Action::Input { node_id, point, text } => ParsedAction::Input(target(node_id, *point)?, text.clone()),
        Action::Scroll { direction, distance } => {
            let extent = if direction.is_vertical() { vp.h } else { vp.w };
            ParsedAction::Scroll(*direction, (distance.max(&0) * 1000 / extent) as u64)
        }
    })
}

pub fn serialize_action(action: &Action, obs: &Observation, style: TargetStyle) -> Result<String, EmitError> {
    Ok(normalize_action(action, obs, style)?.to_string())
}

impl fmt::Display for ParsedTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedTarget::Point([x, y]) => write!(f, "[{x},{y}]"),
            ParsedTarget::Bbox([x1, y1, x2, y2]) => write!(f, "[{x1},{y1},{x2},{y2}]"),
        }
    }
}

fn quote(text: &str) -> String {
    let mut s = String::with_capacity(text.len() + 2);
    s.push('"');
    for c in text.chars() {
        match c {
            '"' => s.push_str("\\\""),
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            '\t' => s.push_str("\\t"),
            '\r' => s.push_str("\\r"),
            c if c.is_control() => s.push(' '),
            c => s.push(c),
        }
    }
    s.push('"');
    s
}

impl fmt::Display for ParsedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedAction::Click(t) => write!(f, "CLICK {t}"),
            ParsedAction::Input(t, text) => write!(f, "INPUT {t} {}", quote(text)),
            ParsedAction::Scroll(d, n) => write!(f, "SCROLL {} {n}", d.keyword()),
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, EmitError> {
        Err(EmitError::Parse {
            input: self.src.to_string(),
            reason: reason.into(),
        })
    }

    fn eat(&mut self, lit: &str) -> Result<(), EmitError> {
        match self.rest.strip_prefix(lit) {
            Some(r) => {
                self.rest = r;
                Ok(())
            }
            None => self.fail(format!("expected {lit:?} at {:?}", self.rest)),
        }
    }

    fn word(&mut self) -> &'a str {
        let end = self.rest.find(|c: char| !c.is_ascii_uppercase()).unwrap_or(self.rest.len());
        let (w, r) = self.rest.split_at(end);
        self.rest = r;
        w
    }

    fn integer(&mut self, max_digits: usize) -> Result<u64, EmitError> {
        let end = self.rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(self.rest.len());
        if end == 0 || end > max_digits {
            return self.fail(format!("bad integer at {:?}", self.rest));
        }
        let (digits, r) = self.rest.split_at(end);
        self.rest = r;
        digits.parse().or_else(|_| self.fail("integer overflow"))
    }

    fn target(&mut self) -> Result<ParsedTarget, EmitError> {
        self.eat("[")?;
        let mut v = vec![self.integer(3)? as u32];
        while self.rest.starts_with(',') {
            self.eat(",")?;
            v.push(self.integer(3)? as u32);
        }
        self.eat("]")?;
        match v[..] {
            [x, y] => Ok(ParsedTarget::Point([x, y])),
            [a, b, c, d] => Ok(ParsedTarget::Bbox([a, b, c, d])),
            _ => self.fail(format!("target needs 2 or 4 coordinates, got {}", v.len())),
        }
    }

    fn quoted(&mut self) -> Result<String, EmitError> {
        self.eat("\"")?;
        let mut out = String::new();
        let mut chars = self.rest.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.rest = &self.rest[i + 1..];
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, 'r')) => out.push('\r'),
                    _ => return self.fail("bad escape"),
                },
                c if c.is_control() => return self.fail("control character in string"),
                c => out.push(c),
            }
        }
        self.fail("unterminated string")
    }
}

pub fn parse_action(s: &str) -> Result<ParsedAction, EmitError> {
    let mut cur = Cursor { src: s, rest: s };
    let action = match cur.word() {
        "CLICK" => {
            cur.eat(" ")?;
            ParsedAction::Click(cur.target()?)
        }
        "INPUT" => {
            cur.eat(" ")?;
            let t = cur.target()?;
            cur.eat(" ")?;
            ParsedAction::Input(t, cur.quoted()?)
        }
        "SCROLL" => {
            cur.eat(" ")?;
            let dir = match cur.word() {
                "UP" => ScrollDirection::Up,
                "DOWN" => ScrollDirection::Down,
                "LEFT" => ScrollDirection::Left,
                "RIGHT" => ScrollDirection::Right,
                other => return cur.fail(format!("unknown direction {other:?}")),
            };
            cur.eat(" ")?;
            ParsedAction::Scroll(dir, cur.integer(19)?)
        }
        other => return cur.fail(format!("unknown action {other:?}")),
    };
    if !cur.rest.is_empty() {
        return cur.fail(format!("trailing input {:?}", cur.rest));
    }
    let coords_ok = |t: &ParsedTarget| match t {
        ParsedTarget::Point(v) => v.iter().all(|&c| c <= 999),
        ParsedTarget::Bbox(v) => v.iter().all(|&c| c <= 999),
    };
    match &action {
        ParsedAction::Click(t) | ParsedAction::Input(t, _) if !coords_ok(t) => cur.fail("coordinate above 999"),
        _ => Ok(action),
    }
}
