//! A DevTools-protocol test double serving fixture apps.
//!
//! Hosts map to apps through `FixtureCorpus` URL lookup. Special hosts:
//! `hang.test` never finishes loading, `crash.test` drops the connection
//! after navigating. A probe expression containing `OLD_PROBE` answers with
//! schema version "0".

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use base64::Engine;
use insight_core::fixture::{FixtureCorpus, PageState};
use insight_core::probe::ProbeResult;
use insight_core::{Action, FixtureApp, Observation, Point, Rect, ScrollDirection, Size};
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

pub struct MockBrowser {
    pub http_addr: String,
    pub ws_url: String,
    pub log: Arc<Mutex<Vec<String>>>,
}

struct Target {
    target_id: String,
    session_id: String,
    app: Option<Arc<FixtureApp>>,
    state: Option<PageState>,
    viewport: Size,
    focused: Option<(String, Point)>,
}

static IDS: AtomicU64 = AtomicU64::new(1);

impl Target {
    fn obs(&self) -> Option<Observation> {
        Some(self.app.as_ref()?.render(self.state.as_ref()?, self.viewport, 0))
    }

    fn apply(&mut self, action: &Action) {
        let (Some(app), Some(state)) = (&self.app, &self.state) else { return };
        let obs = app.render(state, self.viewport, 0);
        if let Ok(next) = app.step(state, &obs, action) {
            self.state = Some(next);
        }
    }

    /// Page nodes overlapping the viewport, occluded ones included.
    fn probe(&self) -> ProbeResult {
        let (app, state) = (self.app.as_ref().unwrap(), self.state.as_ref().unwrap());
        let vp = Rect::new(state.scroll.x, state.scroll.y, self.viewport.w, self.viewport.h);
        let nodes: Vec<_> = app.pages[&state.page_id]
            .nodes
            .iter()
            .filter(|n| n.rect.intersects(&vp))
            .map(|n| {
                let mut n = n.clone();
                if let Some(t) = state.overrides.get(&n.node_id) {
                    n.text = t.clone();
                }
                n
            })
            .collect();
        ProbeResult::from_nodes(vp, &nodes)
    }
}

fn send(ws: &mut WebSocket<TcpStream>, v: Value) -> bool {
    ws.send(Message::text(v.to_string())).is_ok()
}

fn load_events(ws: &mut WebSocket<TcpStream>, t: &Target, finish: bool) {
    let sid = &t.session_id;
    let frame = &t.target_id;
    let ev = |m: &str, p: Value| json!({"method": m, "params": p, "sessionId": sid});
    send(ws, ev("Page.frameStartedLoading", json!({"frameId": frame})));
    if !finish {
        return;
    }
    let rid = format!("r{}", IDS.fetch_add(1, Ordering::SeqCst));
    send(ws, ev("Network.requestWillBeSent", json!({"requestId": rid})));
    send(ws, ev("Network.loadingFinished", json!({"requestId": rid})));
    send(ws, ev("Page.loadEventFired", json!({})));
    send(ws, ev("Page.frameStoppedLoading", json!({"frameId": frame})));
}

fn serve_ws(stream: TcpStream, corpus: Arc<FixtureCorpus>, log: Arc<Mutex<Vec<String>>>) {
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let mut targets: BTreeMap<String, Target> = BTreeMap::new();
    loop {
        let msg = match ws.read() {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) | Err(_) => return,
            Ok(_) => continue,
        };
        let req: Value = serde_json::from_str(msg.as_str()).unwrap();
        let id = req["id"].clone();
        let method = req["method"].as_str().unwrap_or("").to_string();
        let p = req["params"].clone();
        let sid = req["sessionId"].as_str().map(str::to_string);
        log.lock().unwrap().push(method.clone());
        let target_key = sid
            .as_ref()
            .and_then(|s| targets.values().find(|t| &t.session_id == s).map(|t| t.target_id.clone()));
        let mut after: Option<(String, bool)> = None;
        let mut crash = false;
        let result = match (method.as_str(), target_key) {
            ("Target.createTarget", _) => {
                let n = IDS.fetch_add(1, Ordering::SeqCst);
                let target_id = format!("T{n}");
                targets.insert(
                    target_id.clone(),
                    Target {
                        target_id: target_id.clone(),
                        session_id: String::new(),
                        app: None,
                        state: None,
                        viewport: Size { w: 800, h: 600 },
                        focused: None,
                    },
                );
                json!({"targetId": target_id})
            }
            ("Target.attachToTarget", _) => {
                let t = targets.get_mut(p["targetId"].as_str().unwrap()).unwrap();
                t.session_id = format!("S{}", IDS.fetch_add(1, Ordering::SeqCst));
                json!({"sessionId": t.session_id})
            }
            ("Target.closeTarget", _) => {
                targets.remove(p["targetId"].as_str().unwrap_or(""));
                json!({"success": true})
            }
            (_, None) => {
                send(&mut ws, json!({"id": id, "error": {"code": -32001, "message": "Session with given id not found"}}));
                continue;
            }
            (m, Some(key)) => {
                let t = targets.get_mut(&key).unwrap();
                match m {
                    "Emulation.setDeviceMetricsOverride" => {
                        t.viewport = Size {
                            w: p["width"].as_i64().unwrap(),
                            h: p["height"].as_i64().unwrap(),
                        };
                        json!({})
                    }
                    "Page.navigate" => {
                        let url = p["url"].as_str().unwrap();
                        if url.contains("hang.test") {
                            after = Some((key.clone(), false));
                            json!({"frameId": t.target_id})
                        } else if url.contains("crash.test") {
                            crash = true;
                            json!({"frameId": t.target_id})
                        } else if let Some(app) = corpus.get(url) {
                            t.state = Some(app.initial_state());
                            t.app = Some(app.clone());
                            after = Some((key.clone(), true));
                            json!({"frameId": t.target_id})
                        } else {
                            json!({"frameId": t.target_id, "errorText": "net::ERR_NAME_NOT_RESOLVED"})
                        }
                    }
                    "Runtime.evaluate" => {
                        let expr = p["expression"].as_str().unwrap();
                        if expr == "location.href" {
                            let obs = t.obs();
                            json!({"result": {"type": "string", "value": obs.map(|o| o.page_ref).unwrap_or_default()}})
                        } else if expr.contains("THROW") {
                            json!({"result": {"type": "object"}, "exceptionDetails": {"text": "Uncaught ReferenceError"}})
                        } else {
                            let mut v = serde_json::to_value(t.probe()).unwrap();
                            if expr.contains("OLD_PROBE") {
                                v["schema_version"] = json!("0");
                            }
                            json!({"result": {"type": "object", "value": v}})
                        }
                    }
                    "Page.getLayoutMetrics" => {
                        let obs = t.obs().unwrap();
                        json!({"cssContentSize": {"x": 0, "y": 0, "width": obs.content_size.w, "height": obs.content_size.h}})
                    }
                    "Page.captureScreenshot" => {
                        let obs = t.obs().unwrap();
                        let bytes = format!("png:{:016x}:{:?}", obs.content_hash, obs.viewport);
                        json!({"data": base64::engine::general_purpose::STANDARD.encode(bytes)})
                    }
                    "Input.dispatchMouseEvent" => {
                        let kind = p["type"].as_str().unwrap();
                        let state = t.state.clone().unwrap();
                        let x = p["x"].as_i64().unwrap() + state.scroll.x;
                        let y = p["y"].as_i64().unwrap() + state.scroll.y;
                        let point = Point::new(x, y);
                        let before = state.page_id.clone();
                        match kind {
                            "mouseReleased" => {
                                let obs = t.obs().unwrap();
                                let hit = obs
                                    .nodes
                                    .iter()
                                    .filter(|n| n.rect.contains_point(point))
                                    .max_by_key(|n| n.z_index)
                                    .cloned();
                                t.focused = None;
                                if let Some(n) = hit {
                                    if n.inputable {
                                        t.focused = Some((n.node_id.clone(), point));
                                    }
                                    if n.clickable {
                                        t.apply(&Action::Click {
                                            node_id: n.node_id,
                                            point,
                                        });
                                    }
                                }
                            }
                            "mouseWheel" => {
                                let dx = p["deltaX"].as_i64().unwrap_or(0);
                                let dy = p["deltaY"].as_i64().unwrap_or(0);
                                let (direction, distance) = match (dx.signum(), dy.signum()) {
                                    (_, 1) => (ScrollDirection::Down, dy),
                                    (_, -1) => (ScrollDirection::Up, -dy),
                                    (1, _) => (ScrollDirection::Right, dx),
                                    _ => (ScrollDirection::Left, -dx),
                                };
                                if distance > 0 {
                                    t.apply(&Action::Scroll { direction, distance });
                                }
                            }
                            _ => {}
                        }
                        if t.state.as_ref().unwrap().page_id != before {
                            after = Some((key.clone(), true));
                        }
                        json!({})
                    }
                    "Input.insertText" => {
                        if let Some((node_id, point)) = t.focused.clone() {
                            let before = t.state.as_ref().unwrap().page_id.clone();
                            t.apply(&Action::Input {
                                node_id,
                                point,
                                text: p["text"].as_str().unwrap().to_string(),
                            });
                            if t.state.as_ref().unwrap().page_id != before {
                                after = Some((key.clone(), true));
                            }
                        }
                        json!({})
                    }
                    _ => json!({}),
                }
            }
        };
        if !send(&mut ws, json!({"id": id, "result": result})) {
            return;
        }
        if crash {
            return;
        }
        if let Some((key, finish)) = after {
            let t = &targets[&key];
            load_events(&mut ws, t, finish);
        }
    }
}

fn serve_http(mut stream: TcpStream, ws_url: String) {
    let mut buf = [0u8; 2048];
    let _ = stream.read(&mut buf);
    let body = json!({"Browser": "MockChrome/1.0", "Protocol-Version": "1.3", "webSocketDebuggerUrl": ws_url}).to_string();
    let reply = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(reply.as_bytes());
}

impl MockBrowser {
    pub fn start(corpus: FixtureCorpus) -> Self {
        let corpus = Arc::new(corpus);
        let log = Arc::new(Mutex::new(Vec::new()));
        let ws = TcpListener::bind("127.0.0.1:0").unwrap();
        let ws_url = format!("ws://{}/devtools/browser/mock", ws.local_addr().unwrap());
        let http = TcpListener::bind("127.0.0.1:0").unwrap();
        let http_addr = http.local_addr().unwrap().to_string();
        {
            let (corpus, log) = (corpus.clone(), log.clone());
            std::thread::spawn(move || {
                for s in ws.incoming().flatten() {
                    let (corpus, log) = (corpus.clone(), log.clone());
                    std::thread::spawn(move || serve_ws(s, corpus, log));
                }
            });
        }
        {
            let ws_url = ws_url.clone();
            std::thread::spawn(move || {
                for s in http.incoming().flatten() {
                    serve_http(s, ws_url.clone());
                }
            });
        }
        MockBrowser { http_addr, ws_url, log }
    }
}
