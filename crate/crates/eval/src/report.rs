use serde::{Deserialize, Serialize};

/// Metrics of one frame. Image metrics are absent when no renders were
/// compared; `flow` is absent for the first frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chamfer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
    /// Mean of each metric over the frames that have it.
    pub mean: FrameMetrics,
}

fn mean_of(frames: &[FrameMetrics], get: impl Fn(&FrameMetrics) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = frames.iter().filter_map(get).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

impl MetricsReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Self {
        let mean = FrameMetrics {
            psnr: mean_of(&frames, |f| f.psnr),
            ssim: mean_of(&frames, |f| f.ssim),
            l1: mean_of(&frames, |f| f.l1),
            chamfer: mean_of(&frames, |f| f.chamfer),
            l2: mean_of(&frames, |f| f.l2),
            flow: mean_of(&frames, |f| f.flow),
        };
        Self { frames, mean }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
