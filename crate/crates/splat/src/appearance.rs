//! Learned per-frame appearance: a hair-volume encoder and a decoder that
//! predicts SH, axial-scale and opacity residuals for every primitive.

use std::path::Path;

use dgh_core::volume::{positional_encoding, voxelize_points, DEFAULT_TRUNCATION_VOXELS};
use dgh_core::{Camera, GridSpec, Groom, Image, Point3, Vector3};
use dgh_nn::loss::{loss_l1, loss_ssim};
use dgh_nn::mlp::MlpSpec;
use dgh_nn::volume_ops::trilinear_sample;
use dgh_nn::{
    concat_cols, AdamConfig, AdamState, CheckpointMeta, Mlp, NnError, ParamStore, Tape, Unet3d,
    Unet3dSpec, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blend::groom_weights;
use crate::error::{Result, SplatError};
use crate::primitive::GaussianPrimitive;
use crate::raster::RasterStats;
use crate::render::{render_var, splat_geometry};
use crate::sh::{eval_sh_var, SH_WIDTH};

pub const APPEARANCE_KIND: &str = "appearance";
/// SH residuals, one axial-scale offset and one opacity offset.
pub const DECODER_OUTPUT: usize = SH_WIDTH + 2;
const OPACITY_EPS: f64 = 1e-6;

/// Where curvature blending is applied relative to the decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendStage {
    Off,
    /// Blend the decoded SH and opacity.
    #[default]
    AfterDecoder,
    /// Blend the canonical values, then add decoder residuals.
    BeforeDecoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppearanceConfig {
    pub encoder: Unet3dSpec,
    pub hidden: Vec<usize>,
    /// Frequencies for the position, tangent and view-direction encodings.
    pub frequencies: usize,
    pub hair_truncation_voxels: f64,
    pub blend: BlendStage,
    pub rgb_weight: f64,
    pub ssim_weight: f64,
    pub background: [f64; 3],
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        Self {
            encoder: Unet3dSpec {
                in_channels: 1,
                base_filters: 2,
                out_channels: 8,
                ..Unet3dSpec::default()
            },
            hidden: vec![128, 128, 64],
            frequencies: 4,
            hair_truncation_voxels: DEFAULT_TRUNCATION_VOXELS,
            blend: BlendStage::AfterDecoder,
            rgb_weight: 1.0,
            ssim_weight: 0.1,
            background: [0.0; 3],
        }
    }
}

impl AppearanceConfig {
    pub fn mlp_widths(&self) -> Vec<usize> {
        let mut w = vec![self.encoder.out_channels + 3 * 6 * self.frequencies];
        w.extend(&self.hidden);
        w.push(DECODER_OUTPUT);
        w
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let e = &self.encoder;
        if e.in_channels != 1 || e.base_filters == 0 || e.out_channels == 0 {
            return Err(SplatError::Config(format!("bad encoder {e:?}")));
        }
        let div = 1 << dgh_nn::unet::LEVELS;
        if grid.resolution.iter().any(|n| n % div != 0) {
            return Err(SplatError::Config(format!(
                "grid {:?} must be divisible by {div}",
                grid.resolution
            )));
        }
        if !(self.hair_truncation_voxels > 0.0) {
            return Err(SplatError::Config(
                "hair_truncation_voxels must be positive".into(),
            ));
        }
        if !(self.rgb_weight >= 0.0 && self.ssim_weight >= 0.0) {
            return Err(SplatError::Config(
                "loss weights must be non-negative".into(),
            ));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(SplatError::Config("background must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppearanceTrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AppearanceTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Decoded primitive attributes on a tape.
pub struct Decoded<'t> {
    /// `[P, 48]`
    pub sh: Var<'t>,
    /// `[P, 3]`, evaluated for each primitive's view direction.
    pub colors: Var<'t>,
    /// `[P, 1]`
    pub opacity: Var<'t>,
    /// `[P, 1]`
    pub axial: Var<'t>,
}

#[derive(Clone, Debug)]
pub struct AppearanceModel {
    pub config: AppearanceConfig,
    pub grid: GridSpec,
    pub store: ParamStore,
    e_hair: Unet3d,
    mlp: Mlp,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppearanceMeta {
    config: AppearanceConfig,
    grid: GridSpec,
}

fn grid_normalized(grid: &GridSpec, p: &Point3<f64>) -> [f64; 3] {
    std::array::from_fn(|a| {
        let span = (grid.resolution[a] - 1) as f64 * grid.voxel_size;
        2.0 * (p[a] - grid.origin[a]) / span - 1.0
    })
}

fn logit(a: f64) -> f64 {
    let a = a.clamp(OPACITY_EPS, 1.0 - OPACITY_EPS);
    (a / (1.0 - a)).ln()
}

/// Index of each primitive's predecessor on its strand (itself for roots).
fn predecessors(groom: &Groom) -> Vec<usize> {
    let per = groom.vertices_per_strand() - 1;
    (0..groom.segment_count())
        .map(|i| if i % per == 0 { i } else { i - 1 })
        .collect()
}

fn blend_rows<'t>(x: Var<'t>, weights: &[f64], prev: &[usize]) -> Result<Var<'t>> {
    let keep: Vec<f64> = weights.iter().map(|w| 1.0 - w).collect();
    Ok(x.scale_rows(&keep)?
        .add(x.gather_rows(prev)?.scale_rows(weights)?)?)
}

impl AppearanceModel {
    pub fn new(config: AppearanceConfig, grid: GridSpec, seed: u64) -> Result<Self> {
        config.validate(&grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let e_hair = Unet3d::new(&mut store, "e_hair", config.encoder.clone(), &mut rng)?;
        let spec = MlpSpec::new(config.mlp_widths()).with_input_skip_on_last();
        let mlp = Mlp::new(&mut store, "decoder", spec, &mut rng)?;
        Ok(Self {
            config,
            grid,
            store,
            e_hair,
            mlp,
        })
    }

    fn check(&self, groom: &Groom, prims: &[GaussianPrimitive]) -> Result<()> {
        if prims.len() != groom.segment_count() {
            return Err(SplatError::Shape(format!(
                "{} primitives for {} segments",
                prims.len(),
                groom.segment_count()
            )));
        }
        if prims.is_empty() {
            return Err(SplatError::Empty("no primitives"));
        }
        Ok(())
    }

    /// Decodes `prims` (the canonical primitives of `groom`) as seen by `cam`.
    pub fn decode<'t>(
        &self,
        tape: &'t Tape,
        groom: &Groom,
        prims: &[GaussianPrimitive],
        cam: &Camera,
    ) -> Result<Decoded<'t>> {
        self.check(groom, prims)?;
        let n = prims.len();
        let l = self.config.frequencies;
        let vol = voxelize_points(
            groom.points(),
            &self.grid,
            self.config.hair_truncation_voxels * self.grid.voxel_size,
        )?;
        let [nx, ny, nz] = self.grid.resolution;
        let v = tape.constant(&[1, nz, ny, nx], vol.data().to_vec());
        let fh = self.e_hair.forward(tape, &self.store, v)?;
        let means = tape.constant(
            &[n, 3],
            prims
                .iter()
                .flat_map(|p| [p.mean.x, p.mean.y, p.mean.z])
                .collect(),
        );
        let sampled = trilinear_sample(fh, &self.grid, means)?;
        let dirs: Vec<Vector3<f64>> = prims
            .iter()
            .map(|p| crate::project::view_direction(cam, &p.mean))
            .collect();
        let mut enc = Vec::with_capacity(n * 18 * l);
        for (p, d) in prims.iter().zip(&dirs) {
            enc.extend(positional_encoding(
                &grid_normalized(&self.grid, &p.mean),
                l,
            ));
            enc.extend(positional_encoding(
                &[p.tangent.x, p.tangent.y, p.tangent.z],
                l,
            ));
            enc.extend(positional_encoding(&[d.x, d.y, d.z], l));
        }
        let enc = tape.constant(&[n, 18 * l], enc);
        let out = self
            .mlp
            .forward(tape, &self.store, concat_cols(&[sampled, enc])?)?;

        let blend = match self.config.blend {
            BlendStage::Off => None,
            _ => Some((groom_weights(groom)?, predecessors(groom))),
        };
        let mut base_sh = tape.constant(
            &[n, SH_WIDTH],
            prims.iter().flat_map(|p| p.sh.iter().copied()).collect(),
        );
        let mut base_logit =
            tape.constant(&[n, 1], prims.iter().map(|p| logit(p.opacity)).collect());
        if let (BlendStage::BeforeDecoder, Some((w, prev))) = (self.config.blend, &blend) {
            base_sh = blend_rows(base_sh, w, prev)?;
            let a = tape.constant(&[n, 1], prims.iter().map(|p| p.opacity).collect());
            let a = blend_rows(a, w, prev)?.value();
            base_logit = tape.constant(&[n, 1], a.iter().map(|&v| logit(v)).collect());
        }
        let mut sh = base_sh.add(out.slice_cols(0, SH_WIDTH)?)?;
        let mut opacity = out.slice_cols(SH_WIDTH + 1, 1)?.add(base_logit)?.sigmoid();
        // s_rad + (s_len − s_rad)·softplus(o)/ln 2: a zero offset keeps the
        // canonical length and the result never drops below the radius.
        let spread: Vec<f64> = prims
            .iter()
            .map(|p| p.axial_scale - p.radial_scale)
            .collect();
        let radial = tape.constant(&[n, 1], prims.iter().map(|p| p.radial_scale).collect());
        let axial = out
            .slice_cols(SH_WIDTH, 1)?
            .softplus()
            .scale(1.0 / std::f64::consts::LN_2)
            .scale_rows(&spread)?
            .add(radial)?;
        if let (BlendStage::AfterDecoder, Some((w, prev))) = (self.config.blend, &blend) {
            sh = blend_rows(sh, w, prev)?;
            opacity = blend_rows(opacity, w, prev)?;
        }
        let colors = eval_sh_var(sh, &dirs)?;
        Ok(Decoded {
            sh,
            colors,
            opacity,
            axial,
        })
    }

    /// Differentiable `[3, H, W]` render of `groom` through the decoder.
    pub fn render<'t>(
        &self,
        tape: &'t Tape,
        groom: &Groom,
        prims: &[GaussianPrimitive],
        cam: &Camera,
    ) -> Result<(Var<'t>, RasterStats)> {
        let d = self.decode(tape, groom, prims, cam)?;
        let (geo, _) = splat_geometry(prims, cam);
        render_var(
            &geo,
            d.colors,
            d.opacity,
            d.axial,
            self.config.background,
            cam.width,
            cam.height,
        )
    }

    pub fn render_image(
        &self,
        groom: &Groom,
        prims: &[GaussianPrimitive],
        cam: &Camera,
    ) -> Result<Image> {
        let tape = Tape::new();
        let (img, _) = self.render(&tape, groom, prims, cam)?;
        Ok(Image::from_planar(cam.width, cam.height, &img.value())?)
    }

    pub fn save(&self, path: &Path, seed: u64, step: u64) -> Result<()> {
        let meta = self.checkpoint_meta(seed, step)?;
        dgh_nn::save_checkpoint(path, &meta, &self.store)?;
        Ok(())
    }

    pub fn checkpoint_meta(&self, seed: u64, step: u64) -> Result<CheckpointMeta> {
        Ok(CheckpointMeta {
            kind: APPEARANCE_KIND.into(),
            seed,
            step,
            spec: serde_json::to_value(AppearanceMeta {
                config: self.config.clone(),
                grid: self.grid,
            })?,
        })
    }

    pub fn from_checkpoint(meta: &CheckpointMeta, saved: &ParamStore) -> Result<Self> {
        if meta.kind != APPEARANCE_KIND {
            return Err(SplatError::Checkpoint(format!(
                "expected an {APPEARANCE_KIND} checkpoint, got {}",
                meta.kind
            )));
        }
        let m: AppearanceMeta = serde_json::from_value(meta.spec.clone())?;
        let mut model = Self::new(m.config, m.grid, meta.seed)?;
        let loaded = model.store.load_matching(saved)?;
        if loaded != model.store.len() || saved.len() != loaded {
            return Err(SplatError::Checkpoint(format!(
                "checkpoint has {} arrays, model expects {}",
                saved.len(),
                model.store.len()
            )));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, store) = dgh_nn::load_checkpoint(path)?;
        Self::from_checkpoint(&meta, &store)
    }
}

/// Updated primitives `(c′, s′, α′)` for one camera.
pub fn appearance_forward(
    model: &AppearanceModel,
    groom: &Groom,
    prims: &[GaussianPrimitive],
    cam: &Camera,
) -> Result<Vec<GaussianPrimitive>> {
    let tape = Tape::new();
    let d = model.decode(&tape, groom, prims, cam)?;
    let (sh, op, ax) = (d.sh.value(), d.opacity.value(), d.axial.value());
    Ok(prims
        .iter()
        .enumerate()
        .map(|(i, p)| GaussianPrimitive {
            sh: sh[i * SH_WIDTH..(i + 1) * SH_WIDTH].to_vec(),
            opacity: op[i],
            axial_scale: ax[i],
            ..p.clone()
        })
        .collect())
}

/// One tracked frame with its canonical primitives and target views.
#[derive(Clone, Debug)]
pub struct AppearanceFrame {
    pub groom: Groom,
    pub prims: Vec<GaussianPrimitive>,
    pub views: Vec<(Camera, Image)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppearanceReport {
    pub losses: Vec<f64>,
}

/// `λ_rgb·L1 + λ_ssim·(1 − SSIM)` of a `[3, H, W]` render against `target`.
pub fn render_loss<'t>(cfg: &AppearanceConfig, render: Var<'t>, target: &Image) -> Result<Var<'t>> {
    let t = render
        .tape()
        .constant(&[3, target.height, target.width], target.to_planar());
    let l1 = loss_l1(render, t)?.scale(cfg.rgb_weight);
    if cfg.ssim_weight == 0.0 {
        return Ok(l1);
    }
    Ok(l1.add(loss_ssim(render, t)?.scale(cfg.ssim_weight))?)
}

/// Fits the encoder and decoder to the target views, one random view per step.
pub fn train_appearance(
    mut model: AppearanceModel,
    frames: &[AppearanceFrame],
    cfg: &AppearanceTrainConfig,
) -> Result<(AppearanceModel, AppearanceReport)> {
    if !(cfg.learning_rate > 0.0) {
        return Err(SplatError::Config("learning_rate must be positive".into()));
    }
    let views: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, fr)| (0..fr.views.len()).map(move |v| (f, v)))
        .collect();
    if views.is_empty() {
        return Err(SplatError::Empty("no target views"));
    }
    for fr in frames {
        model.check(&fr.groom, &fr.prims)?;
        for (cam, img) in &fr.views {
            if (img.width, img.height) != (cam.width, cam.height) {
                return Err(SplatError::Shape(format!(
                    "target {}x{} for a {}x{} camera",
                    img.width, img.height, cam.width, cam.height
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (f, v) = views[rng.gen_range(0..views.len())];
        let fr = &frames[f];
        let (cam, target) = &fr.views[v];
        let tape = Tape::new();
        let (img, _) = model.render(&tape, &fr.groom, &fr.prims, cam)?;
        let loss = render_loss(&model.config, img, target)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(SplatError::NonFinite {
                what: "loss".into(),
                step,
            });
        }
        let mut grads = tape.backward(loss).params(&model.store);
        if value == 0.0 {
            // Exact global minimum of a non-negative loss: what the sweep
            // returns here is rounding residue, which Adam would amplify.
            grads.iter_mut().for_each(|(_, g)| g.fill(0.0));
        }
        match adam.step(&mut model.store, &grads) {
            Err(NnError::NonFiniteGradient { name }) => {
                return Err(SplatError::NonFinite {
                    what: format!("gradient of {name}"),
                    step,
                })
            }
            r => r?,
        }
        losses.push(value);
    }
    Ok((model, AppearanceReport { losses }))
}
