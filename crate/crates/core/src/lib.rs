//! Wind-farm wake-steering laboratory.
//!
//! A steady-state Gaussian wake simulator, the wake-steering MDP built on
//! it, non-learning baseline controllers, and actor-critic policies
//! (fully connected, graph attention, attention-based) trained with PPO.

pub mod baselines;
pub mod env;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod wake;
pub mod vonmises;
pub mod wind;

pub use error::{Error, Result};
