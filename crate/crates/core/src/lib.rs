//! Instruction-free GUI navigation episodes.
//!
//! The pipeline random-walks GUI environments (an offline fixture backend
//! here, a DevTools browser backend in `insight-browser`), records
//! observation/action episodes, cleans them, and emits multi-image
//! pretraining samples in a stepwise and a reorder format.
//!
//! Module map:
//!
//! * [`ingest`] builds the crawl manifest from raw URL lists.
//! * [`device`] holds the simulated device profiles.
//! * [`geometry`], [`observation`], [`fixture`], [`env`] define the GUI
//!   environment contract and the deterministic fixture backend.
//! * [`policy`] builds and refines the candidate action set.
//! * [`recorder`] runs the record-interact loop.
//! * [`postprocess`] drops blank/duplicate-page episodes and counts the corpus.
//! * [`emit`] serializes actions and writes pretraining samples.
//! * [`pipeline`] is the resumable, sharded, multi-worker generator.

pub mod device;
pub mod emit;
pub mod env;
pub mod fixture;
pub mod geometry;
pub mod ingest;
pub mod jsonl;
pub mod observation;
pub mod pipeline;
pub mod policy;
pub mod postprocess;
pub mod probe;
pub mod recorder;
pub mod rng;
pub mod synth;

pub use device::{DeviceProfile, FormFactor, Platform};
pub use env::{Clock, EnvError, EnvFactory, GuiEnv, LogicalClock, WallClock};
pub use fixture::{FixtureApp, FixtureSession, PageFixture};
pub use geometry::{Point, Rect, Size};
pub use observation::{content_hash, Action, NodeRecord, Observation, ScrollDirection};
pub use policy::{ActionCandidate, PolicyConfig, PolicyState};
pub use recorder::{derive_seed, run_episode, Episode, EpisodeStatus, Limits};
