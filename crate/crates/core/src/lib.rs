//! Model-based value expansion (MVE) on top of a from-scratch DDPG
//! actor-critic: dense-network numerics, analytic control environments,
//! a learned delta dynamics model, value-expansion critic targets, a
//! numerical verification suite for the method's theory, and a seeded
//! experiment harness.

pub mod ddpg;
pub mod envs;
pub mod error;
pub mod harness;
pub mod model;
pub mod mve;
pub mod nn;
pub mod verify;

pub use error::{Error, Result};
