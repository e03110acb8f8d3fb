//! Adaptive traffic-signal control for grid networks.
//!
//! The crate bundles a deterministic cellular-automaton microsimulator, the
//! tensor encoding of its state, baseline controllers, a small convolutional
//! policy/value network with hand-written backpropagation, DAgger imitation
//! pre-training against a rule-based expert and PPO fine-tuning, plus the
//! experiment harness driving all of it.

pub mod config;
pub mod controllers;
pub mod encode;
pub mod error;
pub mod flow;
pub mod harness;
pub mod imitation;
pub mod nn;
pub mod rl;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
