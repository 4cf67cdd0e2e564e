//! Ground-truth hair motion.
//!
//! [`simulate_sequence`] runs an XPBD strand solver with roots pinned to the
//! moving head and collisions against a voxelized body distance field.
//! [`make_head_motion`] builds eased head trajectories from keyframes, and
//! [`scene`] assembles the small head-and-shoulders test scene.

mod error;
mod motion;
pub mod scene;
mod xpbd;

pub use error::{Result, SimError};
pub use motion::{make_head_motion, Ease};
pub use scene::{
    benchmark_sim_config, damped_oscillation_motion, random_motion, random_motion_keys,
    swing_motion, ToyScene, ToySceneConfig,
};
pub use xpbd::{simulate_sequence, SimConfig};
