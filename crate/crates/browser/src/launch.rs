use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use thiserror::Error;

pub const BROWSER_ENV: &str = "INSIGHT_BROWSER";

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("no browser configured; set {BROWSER_ENV} or pass an endpoint")]
    NotConfigured,
    #[error("cannot start {path}: {source}")]
    Spawn {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} exited or stayed silent without announcing a DevTools endpoint")]
    NoEndpoint { path: PathBuf },
}

/// A headless browser child process, killed on drop.
pub struct LaunchedBrowser {
    child: Child,
    pub ws_url: String,
}

/// Parses `DevTools listening on ws://…` from a browser's stderr line.
pub fn devtools_url(line: &str) -> Option<&str> {
    let rest = line.trim().strip_prefix("DevTools listening on ")?;
    rest.starts_with("ws://").then_some(rest)
}

impl LaunchedBrowser {
    /// Starts the executable named by `INSIGHT_BROWSER`.
    pub fn from_env(user_data_dir: &Path, wait: Duration) -> Result<Self, LaunchError> {
        let exe = std::env::var_os(BROWSER_ENV).ok_or(LaunchError::NotConfigured)?;
        Self::launch(Path::new(&exe), user_data_dir, wait)
    }

    pub fn launch(exe: &Path, user_data_dir: &Path, wait: Duration) -> Result<Self, LaunchError> {
        let mut child = Command::new(exe)
            .arg("--headless=new")
            .arg("--remote-debugging-port=0")
            .arg(format!("--user-data-dir={}", user_data_dir.display()))
            .args(["--no-first-run", "--no-default-browser-check", "--hide-scrollbars", "about:blank"])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| LaunchError::Spawn {
                path: exe.to_path_buf(),
                source,
            })?;
        let stderr = child.stderr.take().expect("stderr is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                if let Some(url) = devtools_url(&line) {
                    let _ = tx.send(url.to_string());
                }
            }
        });
        match rx.recv_timeout(wait) {
            Ok(ws_url) => Ok(LaunchedBrowser { child, ws_url }),
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(LaunchError::NoEndpoint { path: exe.to_path_buf() })
            }
        }
    }
}

impl Drop for LaunchedBrowser {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
