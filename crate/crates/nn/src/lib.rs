//! Reverse-mode automatic differentiation on dense `f64` arrays and the
//! network blocks built on it: 3D convolutions, a U-Net encoder, MLPs,
//! patch attention, Adam, and the training losses.
//!
//! Build a fresh [`Tape`] per step, bind parameters with [`Tape::param`],
//! call [`Tape::backward`] on the scalar loss, and feed
//! [`Gradients::params`] to [`AdamState::step`].

pub mod adam;
pub mod attention;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod unet;
pub mod volume_ops;

pub use adam::{AdamConfig, AdamState};
pub use attention::{attend, AttentionSpec, CrossAttention};
pub use error::{NnError, Result};
pub use mlp::{Mlp, MlpSpec};
pub use params::{load_checkpoint, save_checkpoint, CheckpointMeta, ParamId, ParamStore};
pub use tape::{concat_cols, concat_flat, Gradients, Tape, Var};
pub use unet::{Unet3d, Unet3dSpec};
