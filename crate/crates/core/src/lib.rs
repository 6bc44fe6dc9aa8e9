//! Decision-theoretic online learning with Hedge and AdaHedge.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod hedge;
pub mod report;
pub mod simulation;
pub mod strategies;
pub mod verify;

pub use error::{HedgeError, Result};
