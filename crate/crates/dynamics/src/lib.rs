//! Learned hair deformation in two stages.
//!
//! The coarse stage ([`CoarseModel`], [`coarse_forward`]) predicts a
//! per-point displacement of the rigidly moved groom from encoded body and
//! hair distance volumes, a positional encoding and the head pose. The fine
//! stage ([`FineModel`], [`fine_forward`]) predicts the flow from frame t−1
//! to t from the two previous hair states and the previous flow.
//! [`infer_sequence`] chains them: coarse at frame 0, fine afterwards.

mod coarse;
mod config;
pub mod data;
mod error;
pub mod features;
mod fine;
mod infer;
mod train;

pub use coarse::{coarse_forward, CoarseModel, COARSE_KIND};
pub use config::{CoarseConfig, FineConfig, TrainConfig, POSE_WIDTH};
pub use data::{read_sequence, write_sequence, SdfCache, SequenceManifest};
pub use error::{DynError, Result};
pub use fine::{fine_forward, FineModel, FINE_KIND};
pub use infer::{
    infer_coarse_only, infer_open_loop, infer_sequence, infer_sequence_with, InferOptions,
};
pub use train::{train_coarse, train_fine, TrainReport, TrainingSequence};
