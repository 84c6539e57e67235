//! Evolutionary multi-agent Q-learning in public goods games.
//!
//! Agents play an N-player public goods game, learn with stateless Boltzmann
//! Q-learning and are replaced by a Moran death-birth process in which
//! offspring inherit their parent's temperature. The crate provides the
//! stochastic simulation, fixation estimates, the deterministic learning
//! dynamics with their adaptive-dynamics layer, and the parameter sweeps built
//! on them.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod game;
pub mod learner;
pub mod ode;
pub mod seeds;

pub use error::{Error, Result};
