//! Motor-imagery BCI toolkit: band-pass filtering, cue-locked epoching, CSP
//! spatial filters, LDA classification, offline evaluation, streaming replay
//! and a simulated five-servo hand.

pub mod classify;
pub mod csp;
pub mod eigen;
pub mod error;
pub mod evaluate;
pub mod handsim;
pub mod io;
pub mod matrix;
pub mod online;
pub mod preprocess;
pub mod rng;
pub mod synthgen;
pub mod types;

pub use classify::{FeatureVector, LdaModel};
pub use csp::CspModel;
pub use error::{Error, Result};
pub use evaluate::{ConfusionMatrix, Decision, Pipeline, WindowConfig};
pub use handsim::HandState;
pub use matrix::Matrix;
pub use online::{CommandEvent, CommandMapping, DecisionEvent, Pacing, ReplayConfig, ReplayError, ReplaySummary};
pub use rng::Xorshift64Star;
pub use synthgen::SessionSpec;
pub use types::{ClassLabel, Epoch, Marker, MarkerLabel, MarkerStream, SignalBuffer};
