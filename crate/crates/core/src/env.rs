//! The environment contract shared by every backend.

use std::cell::Cell;
use std::time::Instant;

use thiserror::Error;

use crate::device::DeviceProfile;
use crate::observation::{Action, Observation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("node {0} not found in the current observation")]
    NodeNotFound(String),
    #[error("node {node_id} does not accept {action}")]
    NotActionable { node_id: String, action: &'static str },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("probe failed: {0}")]
    Probe(String),
    #[error("session lost: {0}")]
    SessionLost(String),
    #[error("environment failure: {0}")]
    Other(String),
}

/// A single-owner GUI session positioned on some page.
///
/// The recorder calls `observe`, picks an action from that observation and
/// hands it to `perform`; it never interleaves two sessions' calls.
pub trait GuiEnv {
    /// The reference the session was opened on.
    fn start_ref(&self) -> &str;

    /// Captures the current state as step `step_index`.
    fn observe(&mut self, step_index: usize) -> Result<Observation, EnvError>;

    /// Applies an action chosen from the latest observation.
    fn perform(&mut self, action: &Action) -> Result<(), EnvError>;
}

impl<E: GuiEnv + ?Sized> GuiEnv for Box<E> {
    fn start_ref(&self) -> &str {
        (**self).start_ref()
    }

    fn observe(&mut self, step_index: usize) -> Result<Observation, EnvError> {
        (**self).observe(step_index)
    }

    fn perform(&mut self, action: &Action) -> Result<(), EnvError> {
        (**self).perform(action)
    }
}

/// Opens sessions for the generator's workers.
pub trait EnvFactory: Sync {
    type Env: GuiEnv;

    fn open(&self, start_ref: &str, profile: &DeviceProfile) -> Result<Self::Env, EnvError>;

    /// Clock used to enforce the per-episode timeout.
    fn clock(&self) -> Box<dyn Clock>;
}

/// Millisecond time source for episode timeouts.
pub trait Clock {
    fn elapsed_ms(&self) -> u64;
}

#[derive(Debug)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Deterministic clock: each reading advances time by `tick_ms`.
///
/// With `tick_ms = 0` every episode reports zero wall time, which keeps
/// fixture corpora byte-identical between runs.
#[derive(Debug, Default)]
pub struct LogicalClock {
    tick_ms: u64,
    now: Cell<u64>,
}

impl LogicalClock {
    pub fn new(tick_ms: u64) -> Self {
        LogicalClock {
            tick_ms,
            now: Cell::new(0),
        }
    }
}

impl Clock for LogicalClock {
    fn elapsed_ms(&self) -> u64 {
        let t = self.now.get();
        self.now.set(t + self.tick_ms);
        t
    }
}
