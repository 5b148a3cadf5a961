//! Incremental input-to-state stability tools for recurrent neural network
//! systems: structured Lyapunov certificates, LMI-based gain synthesis,
//! interconnections, observers and simulation.

pub mod certify;
pub mod cli;
pub mod compose;
pub mod error;
pub mod io;
pub mod models;
pub mod numerics;
pub mod sdp;
pub mod sim;
pub mod synthesize;

pub use error::{Error, Result};
