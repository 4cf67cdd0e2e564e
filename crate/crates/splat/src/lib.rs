//! Hair strands as chains of thin cylindrical Gaussians: construction,
//! projection, tiled compositing with an analytic backward pass, curvature
//! blending along strands and a learned per-frame appearance head.

pub mod appearance;
pub mod blend;
pub mod error;
pub mod primitive;
pub mod project;
pub mod raster;
pub mod render;
pub mod sh;
pub mod target;

pub use appearance::{
    appearance_forward, render_loss, train_appearance, AppearanceConfig, AppearanceFrame,
    AppearanceModel, AppearanceReport, AppearanceTrainConfig, BlendStage, Decoded,
};
pub use blend::{
    blend_sh_opacity, curvature_weights, diffuse_discontinuity, groom_weights, shaded_discontinuity,
};
pub use error::{Result, SplatError};
pub use primitive::{
    build_covariance, init_primitives, GaussianPrimitive, DEFAULT_OPACITY, RADIAL_SCALE,
};
pub use project::{project_all, project_gaussian, Splat2D, COV_FLOOR};
pub use raster::{rasterize, Raster, RasterStats};
pub use render::{render_var, splat_geometry, SplatGeometry};
pub use sh::{eval_sh, eval_sh_var, sh_basis};
pub use target::ToyLook;
