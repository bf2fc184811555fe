//! Kinematic modelling, reference generation and hierarchical MPC for
//! modular serial manipulators.

pub mod chain;
pub mod controllers;
mod error;
pub mod scenario;
pub mod sim;
pub mod morphology;
pub mod oracles;
pub mod so3;
pub mod trajectory;

pub use error::{Error, Result};
