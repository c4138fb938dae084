//! Multi-agent actor-critic training with generative inference of missing
//! observations.
//!
//! - [`env`]: particle-world scenarios, distance masking, dynamics perturbation
//! - [`nn`]: dense ReLU networks, Adam, target updates, checkpoints
//! - [`ccwgan`]: context-conditional WGAN-GP that fills masked agent slices
//! - [`marl`]: MADDPG agents with approximate policies, and a DDPG baseline
//! - [`harness`]: trial orchestration, CSV/plot output, sweeps and ablations

pub mod ccwgan;
pub mod env;
pub mod harness;
pub mod marl;
pub mod nn;
