//! Live-browser backend speaking the DevTools protocol.
//!
//! Each [`BrowserSession`] owns one page target and one websocket, applies
//! the device profile before the first navigation, evaluates the probe asset
//! to read the page and synthesizes mouse, keyboard and wheel input.

pub mod cdp;
pub mod launch;
pub mod session;

use std::path::{Path, PathBuf};

use insight_core::{Clock, DeviceProfile, EnvError, EnvFactory, WallClock};
use thiserror::Error;

pub use cdp::{resolve_endpoint, CdpConnection, CdpError};
pub use launch::{LaunchedBrowser, BROWSER_ENV};
pub use session::{BrowserOptions, BrowserSession};

pub const PROBE_ENV: &str = "INSIGHT_PROBE";
pub const DEFAULT_PROBE_PATH: &str = "assets/probe.js";

#[derive(Debug, Error)]
pub enum ProbeAssetError {
    #[error("probe asset {0} not found; build the page probe or point {PROBE_ENV} at it")]
    Missing(PathBuf),
    #[error("probe asset {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Reads the probe asset from `explicit`, else `INSIGHT_PROBE`, else
/// `assets/probe.js`.
pub fn load_probe_asset(explicit: Option<&Path>) -> Result<String, ProbeAssetError> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(PROBE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_PROBE_PATH));
    if !path.is_file() {
        return Err(ProbeAssetError::Missing(path));
    }
    std::fs::read_to_string(&path).map_err(|source| ProbeAssetError::Read { path, source })
}

/// Opens one fresh page target per episode on a single browser.
#[derive(Debug, Clone)]
pub struct BrowserFactory {
    pub ws_url: String,
    pub options: BrowserOptions,
}

impl BrowserFactory {
    /// Resolves `endpoint` (websocket URL or `host:port`) up front so a bad
    /// endpoint fails before any work starts.
    pub fn connect(endpoint: &str, options: BrowserOptions) -> Result<Self, CdpError> {
        Ok(BrowserFactory {
            ws_url: resolve_endpoint(endpoint)?,
            options,
        })
    }
}

impl EnvFactory for BrowserFactory {
    type Env = BrowserSession;

    fn open(&self, start_ref: &str, profile: &DeviceProfile) -> Result<BrowserSession, EnvError> {
        BrowserSession::open(&self.ws_url, profile, start_ref, &self.options)
    }

    fn clock(&self) -> Box<dyn Clock> {
        Box::new(WallClock::start())
    }
}
