//! Metrics for rendered images (PSNR, SSIM, L1) and hair motion (Chamfer,
//! L2 point error, flow error), collected into a [`MetricsReport`].

mod metrics;
mod report;

pub use metrics::{
    chamfer, flow_error, l1, l2_error, psnr, psnr_masked, ssim, EvalError, Result, PSNR_CAP,
};
pub use report::{FrameMetrics, MetricsReport};
