//! Minimal synchronous DevTools-protocol client over one websocket.

use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

#[derive(Debug, Error)]
pub enum CdpError {
    #[error("cannot reach browser endpoint {endpoint}: {reason}")]
    Connect { endpoint: String, reason: String },
    #[error("connection to the browser closed")]
    Closed,
    #[error("{method} timed out")]
    Timeout { method: String },
    #[error("{method} failed: {message} ({code})")]
    Protocol { method: String, code: i64, message: String },
    #[error("malformed protocol message: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub method: String,
    pub params: Value,
    pub session_id: Option<String>,
}

/// Turns `http://host:port`, `host:port` or `ws://…` into the browser's
/// websocket URL, asking `/json/version` when needed.
pub fn resolve_endpoint(endpoint: &str) -> Result<String, CdpError> {
    if endpoint.starts_with("ws://") {
        return Ok(endpoint.to_string());
    }
    let base = if endpoint.starts_with("http://") {
        endpoint.trim_end_matches('/').to_string()
    } else {
        format!("http://{}", endpoint.trim_end_matches('/'))
    };
    let fail = |reason: String| CdpError::Connect {
        endpoint: endpoint.to_string(),
        reason,
    };
    let body = ureq::get(&format!("{base}/json/version"))
        .call()
        .map_err(|e| fail(e.to_string()))?
        .body_mut()
        .read_to_string()
        .map_err(|e| fail(e.to_string()))?;
    let v: Value = serde_json::from_str(&body).map_err(|e| fail(format!("bad /json/version reply: {e}")))?;
    v.get("webSocketDebuggerUrl")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| fail("/json/version has no webSocketDebuggerUrl".into()))
}

pub struct CdpConnection {
    ws: WebSocket<TcpStream>,
    next_id: u64,
    events: VecDeque<Event>,
}

impl CdpConnection {
    pub fn connect(ws_url: &str, timeout: Duration) -> Result<Self, CdpError> {
        let fail = |reason: String| CdpError::Connect {
            endpoint: ws_url.to_string(),
            reason,
        };
        let uri: tungstenite::http::Uri = ws_url.parse().map_err(|e| fail(format!("{e}")))?;
        let host = uri.host().ok_or_else(|| fail("no host".into()))?;
        let port = uri.port_u16().unwrap_or(80);
        let addr = std::net::ToSocketAddrs::to_socket_addrs(&(host, port))
            .map_err(|e| fail(e.to_string()))?
            .next()
            .ok_or_else(|| fail("host did not resolve".into()))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(|e| fail(e.to_string()))?;
        stream.set_read_timeout(Some(timeout)).map_err(|e| fail(e.to_string()))?;
        stream.set_nodelay(true).ok();
        let (ws, _) = tungstenite::client(ws_url, stream).map_err(|e| fail(e.to_string()))?;
        Ok(CdpConnection {
            ws,
            next_id: 1,
            events: VecDeque::new(),
        })
    }

    /// Next raw message, or `None` once `deadline` passes.
    fn read(&mut self, deadline: Instant) -> Result<Option<Value>, CdpError> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.ws.get_mut().set_read_timeout(Some(left)).ok();
            match self.ws.read() {
                Ok(Message::Text(t)) => {
                    return serde_json::from_str(t.as_str())
                        .map(Some)
                        .map_err(|e| CdpError::Malformed(e.to_string()))
                }
                Ok(Message::Close(_)) => return Err(CdpError::Closed),
                Ok(_) => continue,
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    continue
                }
                Err(_) => return Err(CdpError::Closed),
            }
        }
    }

    fn push_event(&mut self, msg: Value) {
        if let Some(method) = msg.get("method").and_then(Value::as_str) {
            self.events.push_back(Event {
                method: method.to_string(),
                params: msg.get("params").cloned().unwrap_or(Value::Null),
                session_id: msg.get("sessionId").and_then(Value::as_str).map(str::to_string),
            });
        }
    }

    /// Sends one command and waits for its reply, queueing events that
    /// arrive in between.
    pub fn call(&mut self, session: Option<&str>, method: &str, params: Value, deadline: Instant) -> Result<Value, CdpError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut msg = json!({"id": id, "method": method, "params": params});
        if let Some(s) = session {
            msg["sessionId"] = json!(s);
        }
        self.ws
            .send(Message::text(msg.to_string()))
            .map_err(|_| CdpError::Closed)?;
        loop {
            let Some(reply) = self.read(deadline)? else {
                return Err(CdpError::Timeout { method: method.into() });
            };
            if reply.get("id").and_then(Value::as_u64) != Some(id) {
                self.push_event(reply);
                continue;
            }
            if let Some(err) = reply.get("error") {
                return Err(CdpError::Protocol {
                    method: method.into(),
                    code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                    message: err.get("message").and_then(Value::as_str).unwrap_or("").to_string(),
                });
            }
            return Ok(reply.get("result").cloned().unwrap_or(Value::Null));
        }
    }

    /// Next queued or incoming event, or `None` at the deadline.
    pub fn next_event(&mut self, deadline: Instant) -> Result<Option<Event>, CdpError> {
        if let Some(e) = self.events.pop_front() {
            return Ok(Some(e));
        }
        while let Some(msg) = self.read(deadline)? {
            if msg.get("id").is_none() {
                self.push_event(msg);
                return Ok(self.events.pop_front());
            }
        }
        Ok(None)
    }

    pub fn close(&mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}
