use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use insight_core::fixture::visible_among;
use insight_core::probe::parse_probe;
use insight_core::rng::fnv1a64;
use insight_core::{Action, DeviceProfile, EnvError, GuiEnv, Observation, Point, Size};
use serde_json::{json, Value};

use crate::cdp::{CdpConnection, CdpError};

#[derive(Debug, Clone)]
pub struct BrowserOptions {
    /// Hard cap on one navigation or settle wait.
    pub nav_timeout_ms: u64,
    /// Network silence required before a page counts as settled.
    pub quiet_ms: u64,
    /// Probe asset source; it must evaluate to a function of the options.
    pub probe_script: Arc<String>,
    /// Where screenshots go; `None` skips capture.
    pub screenshot_dir: Option<PathBuf>,
    pub include_char_boxes: bool,
}

impl BrowserOptions {
    pub fn new(probe_script: impl Into<String>) -> Self {
        BrowserOptions {
            nav_timeout_ms: 30_000,
            quiet_ms: 500,
            probe_script: Arc::new(probe_script.into()),
            screenshot_dir: None,
            include_char_boxes: false,
        }
    }
}

/// One page target driven through its own protocol connection.
pub struct BrowserSession {
    conn: CdpConnection,
    session_id: String,
    target_id: String,
    start_ref: String,
    current_url: String,
    profile: DeviceProfile,
    opts: BrowserOptions,
    last: Option<Observation>,
    lost: Option<String>,
}

fn env_err(e: CdpError) -> EnvError {
    match e {
        CdpError::Closed => EnvError::SessionLost("browser connection closed".into()),
        CdpError::Timeout { method } => EnvError::Timeout(format!("{method} timed out")),
        CdpError::Protocol { message, .. } if message.contains("not found") || message.contains("No target") => {
            EnvError::SessionLost(message)
        }
        other => EnvError::Other(other.to_string()),
    }
}

impl BrowserSession {
    /// Creates a page target, applies `profile` and loads `start_ref`.
    pub fn open(ws_url: &str, profile: &DeviceProfile, start_ref: &str, opts: &BrowserOptions) -> Result<Self, EnvError> {
        let timeout = Duration::from_millis(opts.nav_timeout_ms);
        let mut conn = CdpConnection::connect(ws_url, timeout).map_err(|e| EnvError::Other(e.to_string()))?;
        let deadline = Instant::now() + timeout;
        let target = conn
            .call(None, "Target.createTarget", json!({"url": "about:blank"}), deadline)
            .map_err(env_err)?;
        let target_id = str_field(&target, "targetId")?;
        let attached = conn
            .call(None, "Target.attachToTarget", json!({"targetId": target_id, "flatten": true}), deadline)
            .map_err(env_err)?;
        let session_id = str_field(&attached, "sessionId")?;
        let mut s = BrowserSession {
            conn,
            session_id,
            target_id,
            start_ref: start_ref.to_string(),
            current_url: String::new(),
            profile: profile.clone(),
            opts: opts.clone(),
            last: None,
            lost: None,
        };
        for domain in ["Page.enable", "Network.enable", "Runtime.enable"] {
            s.cmd(domain, json!({}))?;
        }
        s.cmd(
            "Emulation.setDeviceMetricsOverride",
            json!({
                "width": profile.viewport_w,
                "height": profile.viewport_h,
                "deviceScaleFactor": profile.pixel_ratio,
                "mobile": profile.is_mobile(),
            }),
        )?;
        s.cmd("Emulation.setUserAgentOverride", json!({"userAgent": profile.user_agent}))?;
        s.navigate(start_ref)?;
        Ok(s)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn profile(&self) -> &DeviceProfile {
        &self.profile
    }

    pub fn current_url(&self) -> &str {
        &self.current_url
    }

    fn deadline(&self) -> Instant {
        Instant::now() + Duration::from_millis(self.opts.nav_timeout_ms)
    }

    fn cmd(&mut self, method: &str, params: Value) -> Result<Value, EnvError> {
        if let Some(why) = &self.lost {
            return Err(EnvError::SessionLost(why.clone()));
        }
        let deadline = self.deadline();
        let session = self.session_id.clone();
        self.conn.call(Some(&session), method, params, deadline).map_err(|e| {
            let e = env_err(e);
            if let EnvError::SessionLost(why) = &e {
                self.lost = Some(why.clone());
            }
            e
        })
    }

    fn navigate(&mut self, url: &str) -> Result<(), EnvError> {
        let r = self.cmd("Page.navigate", json!({"url": url}))?;
        if let Some(err) = r.get("errorText").and_then(Value::as_str) {
            return Err(EnvError::Unreachable(format!("{url}: {err}")));
        }
        self.settle(true)
    }

    /// Waits until the main frame is not loading and the network has been
    /// idle for `quiet_ms`. A frame still loading at the hard timeout is a
    /// `Timeout`; a loaded page whose network never idles is accepted.
    fn settle(&mut self, navigating: bool) -> Result<(), EnvError> {
        let hard = self.deadline();
        let quiet = Duration::from_millis(self.opts.quiet_ms);
        let mut loading = navigating;
        let mut inflight: HashSet<String> = HashSet::new();
        let mut last_activity = Instant::now();
        loop {
            let now = Instant::now();
            if !loading && inflight.is_empty() && now.duration_since(last_activity) >= quiet {
                return Ok(());
            }
            if now >= hard {
                return if loading {
                    Err(EnvError::Timeout(format!("{} did not finish loading", self.start_ref)))
                } else {
                    Ok(())
                };
            }
            let wake = if loading || !inflight.is_empty() {
                hard
            } else {
                (last_activity + quiet).min(hard)
            };
            let Some(ev) = self.conn.next_event(wake).map_err(env_err)? else {
                continue;
            };
            if ev.method == "Target.detachedFromTarget" || ev.method == "Target.targetCrashed" {
                let ours = ev.params.get("sessionId").and_then(Value::as_str) == Some(self.session_id.as_str())
                    || ev.params.get("targetId").and_then(Value::as_str) == Some(self.target_id.as_str());
                if ours {
                    let why = format!("{} for {}", ev.method, self.target_id);
                    self.lost = Some(why.clone());
                    return Err(EnvError::SessionLost(why));
                }
                continue;
            }
            if ev.session_id.as_deref() != Some(self.session_id.as_str()) {
                continue;
            }
            let main_frame = ev.params.get("frameId").and_then(Value::as_str) == Some(self.target_id.as_str());
            let request = || ev.params.get("requestId").and_then(Value::as_str).unwrap_or("").to_string();
            match ev.method.as_str() {
                "Inspector.detached" | "Inspector.targetCrashed" => {
                    self.lost = Some(ev.method.clone());
                    return Err(EnvError::SessionLost(ev.method));
                }
                "Page.frameStartedLoading" if main_frame => loading = true,
                "Page.frameStoppedLoading" if main_frame => loading = false,
                "Page.loadEventFired" => loading = false,
                "Network.requestWillBeSent" => {
                    inflight.insert(request());
                }
                "Network.loadingFinished" | "Network.loadingFailed" => {
                    inflight.remove(&request());
                }
                _ => {}
            }
            last_activity = Instant::now();
        }
    }

    fn evaluate(&mut self, expression: &str) -> Result<Value, EnvError> {
        let r = self.cmd(
            "Runtime.evaluate",
            json!({"expression": expression, "returnByValue": true, "awaitPromise": true}),
        )?;
        if let Some(ex) = r.get("exceptionDetails") {
            let text = ex
                .pointer("/exception/description")
                .or_else(|| ex.get("text"))
                .and_then(Value::as_str)
                .unwrap_or("exception");
            return Err(EnvError::Probe(text.to_string()));
        }
        Ok(r.pointer("/result/value").cloned().unwrap_or(Value::Null))
    }

    fn screenshot(&mut self) -> Result<Option<String>, EnvError> {
        let Some(dir) = self.opts.screenshot_dir.clone() else {
            return Ok(None);
        };
        let r = self.cmd("Page.captureScreenshot", json!({"format": "png"}))?;
        let data = r.get("data").and_then(Value::as_str).unwrap_or("");
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| EnvError::Other(format!("screenshot payload: {e}")))?;
        let name = format!("{:016x}.png", fnv1a64(&bytes));
        let path = dir.join(&name);
        if !path.exists() {
            std::fs::create_dir_all(&dir).map_err(|e| EnvError::Other(format!("{}: {e}", dir.display())))?;
            insight_core::jsonl::write_atomic(&path, &bytes)
                .map_err(|e| EnvError::Other(format!("{}: {e}", path.display())))?;
        }
        Ok(Some(format!("screenshots/{name}")))
    }

    fn viewport_point(&mut self, p: Point) -> Result<(i64, i64), EnvError> {
        if self.last.is_none() {
            self.observe(0)?;
        }
        let vp = self.last.as_ref().expect("observed").viewport;
        Ok((p.x - vp.x, p.y - vp.y))
    }

    fn mouse(&mut self, kind: &str, x: i64, y: i64, extra: Value) -> Result<(), EnvError> {
        let mut params = json!({"type": kind, "x": x, "y": y});
        if let (Some(p), Some(e)) = (params.as_object_mut(), extra.as_object()) {
            p.extend(e.clone());
        }
        self.cmd("Input.dispatchMouseEvent", params).map(|_| ())
    }

    fn click_at(&mut self, p: Point) -> Result<(), EnvError> {
        let (x, y) = self.viewport_point(p)?;
        self.mouse("mouseMoved", x, y, json!({}))?;
        self.mouse("mousePressed", x, y, json!({"button": "left", "clickCount": 1}))?;
        self.mouse("mouseReleased", x, y, json!({"button": "left", "clickCount": 1}))
    }
}

fn str_field(v: &Value, key: &str) -> Result<String, EnvError> {
    v.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| EnvError::Other(format!("reply lacks {key}")))
}

impl GuiEnv for BrowserSession {
    fn start_ref(&self) -> &str {
        &self.start_ref
    }

    fn observe(&mut self, step_index: usize) -> Result<Observation, EnvError> {
        let href = self.evaluate("location.href")?;
        self.current_url = href.as_str().unwrap_or_default().to_string();
        let options = json!({"include_char_boxes": self.opts.include_char_boxes});
        let expr = format!("({})({options})", self.opts.probe_script.trim().trim_end_matches(';'));
        let raw = self.evaluate(&expr)?;
        let probe = parse_probe(raw).map_err(|e| EnvError::Probe(e.to_string()))?;
        let metrics = self.cmd("Page.getLayoutMetrics", json!({}))?;
        let content = metrics.get("cssContentSize").or_else(|| metrics.get("contentSize"));
        let dim = |k: &str| content.and_then(|c| c.get(k)).and_then(Value::as_f64).unwrap_or(0.0).ceil() as i64;
        let viewport = probe.viewport.rect();
        let size = Size {
            w: dim("width").max(viewport.w),
            h: dim("height").max(viewport.h),
        };
        let screenshot = self.screenshot()?;
        let nodes = visible_among(&probe.nodes(), viewport);
        let obs = Observation::new(step_index, self.current_url.clone(), viewport, size, nodes, screenshot);
        self.last = Some(obs.clone());
        Ok(obs)
    }

    fn perform(&mut self, action: &Action) -> Result<(), EnvError> {
        match action {
            Action::Click { point, .. } => self.click_at(*point)?,
            Action::Input { point, text, .. } => {
                self.click_at(*point)?;
                self.cmd("Input.insertText", json!({"text": text}))?;
            }
            Action::Scroll { direction, distance } => {
                if *distance <= 0 {
                    return Err(EnvError::InvalidAction("scroll distance must be positive".into()));
                }
                let (dx, dy) = direction.delta();
                let vp = match &self.last {
                    Some(o) => o.viewport,
                    None => self.observe(0)?.viewport,
                };
                self.mouse(
                    "mouseWheel",
                    vp.w / 2,
                    vp.h / 2,
                    json!({"deltaX": dx * distance, "deltaY": dy * distance}),
                )?;
            }
        }
        self.last = None;
        self.settle(false)
    }
}

impl Drop for BrowserSession {
    fn drop(&mut self) {
        if self.lost.is_none() {
            let deadline = Instant::now() + Duration::from_millis(1000);
            let target = self.target_id.clone();
            let _ = self.conn.call(None, "Target.closeTarget", json!({"targetId": target}), deadline);
        }
        self.conn.close();
    }
}
