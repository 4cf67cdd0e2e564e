//! The stages behind each subcommand. Every stage reads what earlier stages
//! left in the output directory:
//!
//! ```text
//! config.json            resolved configuration (simulate)
//! canonical.dghs         settled groom at the identity pose
//! train/seq_NN/          ground-truth sequences (manifest + DGHS frames)
//! test/seq_NN/
//! sdf/                   body distance fields keyed by pose
//! coarse.dghp fine.dghp appearance.dghp  checkpoints (+ *_losses.json)
//! cameras.json
//! infer/seq_NN/          predicted sequences
//! render/seq_NN/{pred,target}/fTTTT_cK.png
//! metrics.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dgh_core::io::{
    quantize_groom, read_groom, read_png16, read_ppm, write_groom, write_json, write_png16,
    write_ppm, write_volume,
};
use dgh_core::{
    voxelize_points, Camera, FeatureVolume, FrameRecord, Groom, HeadPose, Image, MotionSequence,
};
use dgh_dynamics::{
    infer_sequence_with, read_sequence, train_coarse, train_fine, write_sequence, CoarseModel,
    DynError, FineModel, SdfCache, SequenceManifest, TrainingSequence,
};
use dgh_eval::{
    chamfer, flow_error, l1, l2_error, psnr, psnr_masked, ssim, FrameMetrics, MetricsReport,
};
use dgh_sim::{simulate_sequence, ToyScene};
use dgh_splat::{
    init_primitives, train_appearance, AppearanceFrame, AppearanceModel, GaussianPrimitive, ToyLook,
};
use serde_json::{json, Value};

use crate::config::{ImageFormat, PipelineConfig};
use crate::error::{CliError, Result};

pub const CANONICAL: &str = "canonical.dghs";
pub const COARSE: &str = "coarse.dghp";
pub const FINE: &str = "fine.dghp";
pub const APPEARANCE: &str = "appearance.dghp";
pub const METRICS: &str = "metrics.json";

pub struct Workspace {
    pub dir: PathBuf,
    pub cfg: PipelineConfig,
}

/// A sequence directory read back from disk.
pub struct Sequence {
    pub name: String,
    pub manifest: SequenceManifest,
    pub frames: Vec<FrameRecord>,
}

impl Sequence {
    pub fn motion(&self) -> Result<MotionSequence> {
        let poses = self.frames.iter().map(|f| f.pose).collect();
        Ok(MotionSequence::new(poses, self.manifest.frame_rate)?)
    }

    pub fn grooms(&self) -> Vec<Groom> {
        self.frames.iter().map(|f| f.groom.clone()).collect()
    }
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn rel(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).display().to_string()
}

fn write_image(path: &Path, img: &Image, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Png => write_png16(img, path)?,
        ImageFormat::Ppm => write_ppm(path, img)?,
    }
    Ok(())
}

pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => Ok(read_png16(path)?),
        Some("ppm") => Ok(read_ppm(path)?),
        _ => Err(CliError::new(
            "format",
            format!("{}: expected .png or .ppm", path.display()),
        )),
    }
}

impl Workspace {
    pub fn new(dir: PathBuf, cfg: PipelineConfig) -> Self {
        Self { dir, cfg }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn stage_seed(&self, local: u64) -> u64 {
        self.cfg.seed.wrapping_add(local)
    }

    pub fn scene(&self) -> Result<ToyScene> {
        let s = &self.cfg.simulate;
        Ok(ToyScene::build(s.scene.clone(), &s.solver, self.cfg.seed)?)
    }

    fn sdf_cache(&self) -> Result<SdfCache> {
        let salt = fnv(&serde_json::to_vec(&self.cfg.simulate.scene)?);
        Ok(SdfCache::on_disk(self.path("sdf"), salt))
    }

    fn bodies(
        &self,
        scene: &ToyScene,
        cache: &mut SdfCache,
        poses: &[HeadPose],
    ) -> Result<Vec<FeatureVolume>> {
        poses
            .iter()
            .map(|p| {
                Ok(cache.get_or_compute(p, |p| {
                    scene
                        .body_sdf(p)
                        .map_err(|e| DynError::Config(e.to_string()))
                })?)
            })
            .collect()
    }

    pub fn canonical(&self) -> Result<Groom> {
        Ok(read_groom(&self.path(CANONICAL))?)
    }

    /// Every `seq_*` directory under `split`, sorted by name.
    pub fn sequences(&self, split: &str) -> Result<Vec<Sequence>> {
        let root = self.path(split);
        let entries = std::fs::read_dir(&root)
            .map_err(|e| CliError::new("io", format!("{}: {e}", root.display())))?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.starts_with("seq_"))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(CliError::new(
                "io",
                format!("no sequences under {}", root.display()),
            ));
        }
        names
            .into_iter()
            .map(|name| {
                let (manifest, frames) = read_sequence(&root.join(&name))?;
                Ok(Sequence {
                    name,
                    manifest,
                    frames,
                })
            })
            .collect()
    }

    fn training_data(&self, scene: &ToyScene) -> Result<Vec<TrainingSequence>> {
        let mut cache = self.sdf_cache()?;
        self.sequences("train")?
            .into_iter()
            .map(|s| {
                let poses: Vec<HeadPose> = s.frames.iter().map(|f| f.pose).collect();
                let bodies = self.bodies(scene, &mut cache, &poses)?;
                Ok(TrainingSequence::new(s.frames, bodies)?)
            })
            .collect()
    }

    pub fn cameras(&self, canonical: &Groom) -> Result<Vec<Camera>> {
        self.cfg.gsplat.cameras.cameras(canonical)
    }

    fn look(&self) -> &ToyLook {
        &self.cfg.gsplat.look
    }

    fn base_primitives(&self, groom: &Groom) -> Result<Vec<GaussianPrimitive>> {
        Ok(init_primitives(groom, self.look().mean_color())?)
    }

    fn background(&self) -> [f64; 3] {
        self.cfg.gsplat.appearance.background
    }

    pub fn simulate(&self) -> Result<Value> {
        let s = &self.cfg.simulate;
        std::fs::create_dir_all(&self.dir)?;
        let scene = self.scene()?;
        let canonical = quantize_groom(&scene.canonical);
        write_groom(&self.path(CANONICAL), &canonical)?;
        write_json(&self.path("config.json"), &self.cfg)?;
        let mut cache = self.sdf_cache()?;
        let mut frames_total = 0;
        for (split, specs) in [("train", &s.train), ("test", &s.test)] {
            for (i, spec) in specs.iter().enumerate() {
                let motion = spec.build(s.frame_rate)?;
                let bodies = self.bodies(&scene, &mut cache, motion.poses())?;
                let frames = simulate_sequence(&canonical, &motion, &bodies, &s.solver)?;
                frames_total += frames.len();
                write_sequence(
                    &self.path(split).join(format!("seq_{i:02}")),
                    &frames,
                    s.frame_rate,
                )?;
                log::info!("simulated {split} sequence {i} ({} frames)", frames.len());
            }
        }
        Ok(json!({
            "strands": canonical.strand_count(),
            "vertices_per_strand": canonical.vertices_per_strand(),
            "train_sequences": s.train.len(),
            "test_sequences": s.test.len(),
            "frames": frames_total,
        }))
    }

    /// Hair distance volume of `input` (default: the canonical groom), and
    /// optionally the body distance field at the identity pose.
    pub fn voxelize(&self, input: Option<&Path>, body: bool) -> Result<Value> {
        let scene_grid = self.cfg.simulate.scene.grid_spec()?;
        if let Some(p) = input.filter(|p| !p.exists()) {
            return Err(CliError::new(
                "io",
                format!("{}: no such file", p.display()),
            ));
        }
        let src = input
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.path(CANONICAL));
        let groom = read_groom(&src)?;
        let trunc = self.cfg.dynamics.coarse.hair_truncation_voxels * scene_grid.voxel_size;
        let vol = voxelize_points(groom.points(), &scene_grid, trunc)?;
        let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("hair");
        std::fs::create_dir_all(&self.dir)?;
        let out = self.path(&format!("{stem}.dghv"));
        write_volume(&out, &vol)?;
        let mut files = vec![rel(&self.dir, &out)];
        if body {
            let scene = self.scene()?;
            let b = scene.body_sdf(&HeadPose::identity())?;
            let p = self.path("body.dghv");
            write_volume(&p, &b)?;
            files.push(rel(&self.dir, &p));
        }
        Ok(json!({ "resolution": scene_grid.resolution, "files": files }))
    }

    pub fn train_coarse(&self) -> Result<Value> {
        let scene = self.scene()?;
        let data = self.training_data(&scene)?;
        let canonical = self.canonical()?;
        let d = &self.cfg.dynamics;
        let model = CoarseModel::new(d.coarse.clone(), scene.grid, canonical, self.cfg.seed)?;
        let mut tc = d.coarse_train.clone();
        tc.seed = self.stage_seed(tc.seed);
        let (model, rep) = train_coarse(model, &data, &tc)?;
        model.save(&self.path(COARSE), self.cfg.seed, tc.steps as u64)?;
        write_json(&self.path("coarse_losses.json"), &rep)?;
        Ok(json!({
            "steps": tc.steps,
            "initial_loss": rep.initial_loss(),
            "final_loss": rep.final_loss(),
            "checkpoint": COARSE,
        }))
    }

    pub fn train_fine(&self) -> Result<Value> {
        let scene = self.scene()?;
        let data = self.training_data(&scene)?;
        let d = &self.cfg.dynamics;
        let model = FineModel::new(d.fine.clone(), scene.grid, self.cfg.seed)?;
        let mut tc = d.fine_train.clone();
        tc.seed = self.stage_seed(tc.seed);
        let (model, rep) = train_fine(model, &data, &tc)?;
        model.save(&self.path(FINE), self.cfg.seed, tc.steps as u64)?;
        write_json(&self.path("fine_losses.json"), &rep)?;
        Ok(json!({
            "steps": tc.steps,
            "initial_loss": rep.initial_loss(),
            "final_loss": rep.final_loss(),
            "checkpoint": FINE,
        }))
    }

    pub fn train_appearance(&self) -> Result<Value> {
        let g = &self.cfg.gsplat;
        if g.train_stride == 0 {
            return Err(CliError::config("gsplat.train_stride must be positive"));
        }
        let canonical = self.canonical()?;
        let cams = self.cameras(&canonical)?;
        write_json(&self.path("cameras.json"), &cams)?;
        let bg = self.background();
        let mut frames = Vec::new();
        for seq in self.sequences("train")? {
            for rec in seq.frames.iter().step_by(g.train_stride) {
                let views = cams
                    .iter()
                    .map(|c| Ok((c.clone(), self.look().render(&rec.groom, c, bg)?)))
                    .collect::<Result<Vec<_>>>()?;
                frames.push(AppearanceFrame {
                    groom: rec.groom.clone(),
                    prims: self.base_primitives(&rec.groom)?,
                    views,
                });
            }
        }
        let grid = self.cfg.simulate.scene.grid_spec()?;
        let model = AppearanceModel::new(g.appearance.clone(), grid, self.cfg.seed)?;
        let mut tc = g.train.clone();
        tc.seed = self.stage_seed(tc.seed);
        let (model, rep) = train_appearance(model, &frames, &tc)?;
        model.save(&self.path(APPEARANCE), self.cfg.seed, tc.steps as u64)?;
        write_json(&self.path("appearance_losses.json"), &rep)?;
        let first = rep.losses.first().copied().unwrap_or(f64::NAN);
        let last = rep.losses.last().copied().unwrap_or(f64::NAN);
        Ok(json!({
            "steps": tc.steps,
            "frames": frames.len(),
            "views": cams.len(),
            "initial_loss": first,
            "final_loss": last,
            "checkpoint": APPEARANCE,
        }))
    }

    pub fn infer(&self) -> Result<Value> {
        let coarse = CoarseModel::load(&self.path(COARSE))?;
        let fine = FineModel::load(&self.path(FINE))?;
        let canonical = self.canonical()?;
        let scene = self.scene()?;
        let mut cache = self.sdf_cache()?;
        let mut names = Vec::new();
        for seq in self.sequences("test")? {
            let motion = seq.motion()?;
            let bodies = self.bodies(&scene, &mut cache, motion.poses())?;
            let out = infer_sequence_with(
                &coarse,
                &fine,
                &canonical,
                &motion,
                &bodies,
                &self.cfg.dynamics.infer,
            )?;
            write_sequence(
                &self.path("infer").join(&seq.name),
                &out,
                seq.manifest.frame_rate,
            )?;
            names.push(seq.name);
        }
        Ok(json!({ "sequences": names }))
    }

    fn frame_image_name(t: usize, cam: usize, format: ImageFormat) -> String {
        format!("f{t:04}_c{cam}.{}", format.extension())
    }

    pub fn render(&self) -> Result<Value> {
        let g = &self.cfg.gsplat;
        if g.render_stride == 0 {
            return Err(CliError::config("gsplat.render_stride must be positive"));
        }
        let model = AppearanceModel::load(&self.path(APPEARANCE))?;
        let canonical = self.canonical()?;
        let cams = self.cameras(&canonical)?;
        let bg = self.background();
        let gt: BTreeMap<String, Sequence> = self
            .sequences("test")?
            .into_iter()
            .map(|s| (s.name.clone(), s))
            .collect();
        let mut images = 0;
        for seq in self.sequences("infer")? {
            let truth = gt
                .get(&seq.name)
                .ok_or_else(|| CliError::new("io", format!("no ground truth for {}", seq.name)))?;
            let root = self.path("render").join(&seq.name);
            std::fs::create_dir_all(root.join("pred"))?;
            std::fs::create_dir_all(root.join("target"))?;
            for t in (0..seq.frames.len()).step_by(g.render_stride) {
                let pred = &seq.frames[t].groom;
                let prims = self.base_primitives(pred)?;
                for (k, cam) in cams.iter().enumerate() {
                    let name = Self::frame_image_name(t, k, g.format);
                    let img = model.render_image(pred, &prims, cam)?;
                    write_image(&root.join("pred").join(&name), &img, g.format)?;
                    let target = self.look().render(&truth.frames[t].groom, cam, bg)?;
                    write_image(&root.join("target").join(&name), &target, g.format)?;
                    images += 1;
                }
            }
        }
        Ok(json!({ "images": images, "cameras": cams.len() }))
    }

    fn hair_mask(&self, groom: &Groom, cam: &Camera) -> Result<Image> {
        let look = ToyLook {
            root: [1.0; 3],
            tip: [1.0; 3],
            ambient: 1.0,
            ..self.look().clone()
        };
        Ok(look.render(groom, cam, [0.0; 3])?)
    }

    fn image_metrics(
        &self,
        pred: &Image,
        target: &Image,
        mask: Option<&Image>,
    ) -> Result<FrameMetrics> {
        let p = match mask {
            Some(m) => psnr_masked(pred, target, m)?,
            None => psnr(pred, target)?,
        };
        Ok(FrameMetrics {
            psnr: Some(p),
            ssim: Some(ssim(pred, target)?),
            l1: Some(l1(pred, target)?),
            ..FrameMetrics::default()
        })
    }

    fn sequence_report(
        &self,
        pred: &Sequence,
        gt: &Sequence,
        renders: Option<&Path>,
    ) -> Result<MetricsReport> {
        if pred.frames.len() != gt.frames.len() {
            return Err(CliError::new(
                "shape",
                format!(
                    "{}: {} predicted frames, {} ground truth",
                    pred.name,
                    pred.frames.len(),
                    gt.frames.len()
                ),
            ));
        }
        let flows = flow_error(&pred.grooms(), &gt.grooms())?;
        let cams = match renders {
            Some(_) => self.cameras(&self.canonical()?)?,
            None => Vec::new(),
        };
        let mut frames = Vec::with_capacity(pred.frames.len());
        for (t, (p, g)) in pred.frames.iter().zip(&gt.frames).enumerate() {
            let mut m = FrameMetrics {
                l2: Some(l2_error(&p.groom, &g.groom)?),
                chamfer: Some(chamfer(p.groom.points(), g.groom.points())?),
                flow: t.checked_sub(1).map(|i| flows[i]),
                ..FrameMetrics::default()
            };
            if let Some(dir) = renders {
                let mut acc: Vec<FrameMetrics> = Vec::new();
                for (k, cam) in cams.iter().enumerate() {
                    let name = Self::frame_image_name(t, k, self.cfg.gsplat.format);
                    let (pp, tp) = (dir.join("pred").join(&name), dir.join("target").join(&name));
                    if !pp.exists() {
                        continue;
                    }
                    let mask = match self.cfg.eval.hair_mask {
                        true => Some(self.hair_mask(&g.groom, cam)?),
                        false => None,
                    };
                    acc.push(self.image_metrics(
                        &read_image(&pp)?,
                        &read_image(&tp)?,
                        mask.as_ref(),
                    )?);
                }
                if !acc.is_empty() {
                    let r = MetricsReport::from_frames(acc).mean;
                    m.psnr = r.psnr;
                    m.ssim = r.ssim;
                    m.l1 = r.l1;
                }
            }
            frames.push(m);
        }
        Ok(MetricsReport::from_frames(frames))
    }

    /// Predicted test sequences against ground truth, with image metrics
    /// for every rendered frame.
    pub fn eval_pipeline(&self) -> Result<Value> {
        let gt: BTreeMap<String, Sequence> = self
            .sequences("test")?
            .into_iter()
            .map(|s| (s.name.clone(), s))
            .collect();
        let mut reports = BTreeMap::new();
        for pred in self.sequences("infer")? {
            let truth = gt
                .get(&pred.name)
                .ok_or_else(|| CliError::new("io", format!("no ground truth for {}", pred.name)))?;
            let dir = self.path("render").join(&pred.name);
            let renders = dir.is_dir().then_some(dir.as_path());
            reports.insert(
                pred.name.clone(),
                self.sequence_report(&pred, truth, renders)?,
            );
        }
        let means: Vec<FrameMetrics> = reports.values().map(|r| r.mean.clone()).collect();
        let mean = MetricsReport::from_frames(means).mean;
        std::fs::create_dir_all(&self.dir)?;
        write_json(
            &self.path(METRICS),
            &json!({ "sequences": reports, "mean": mean }),
        )?;
        Ok(json!({ "mean": mean, "report": METRICS }))
    }

    /// Compares two grooms, two images or two sequence directories.
    pub fn eval_pair(&self, pred: &Path, gt: &Path) -> Result<Value> {
        for p in [pred, gt] {
            if !p.exists() {
                return Err(CliError::new(
                    "io",
                    format!("{}: no such file or directory", p.display()),
                ));
            }
        }
        let report = if pred.is_dir() && gt.is_dir() {
            let load = |p: &Path| -> Result<Sequence> {
                let (manifest, frames) = read_sequence(p)?;
                let name = p
                    .file_name()
                    .and_then(|s| s.to_str())
                    .unwrap_or("seq")
                    .to_string();
                Ok(Sequence {
                    name,
                    manifest,
                    frames,
                })
            };
            self.sequence_report(&load(pred)?, &load(gt)?, None)?
        } else {
            let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).map(str::to_owned);
            match (ext(pred).as_deref(), ext(gt).as_deref()) {
                (Some("dghs"), Some("dghs")) => {
                    let (a, b) = (read_groom(pred)?, read_groom(gt)?);
                    MetricsReport::from_frames(vec![FrameMetrics {
                        l2: Some(l2_error(&a, &b)?),
                        chamfer: Some(chamfer(a.points(), b.points())?),
                        ..FrameMetrics::default()
                    }])
                }
                _ => {
                    let (a, b) = (read_image(pred)?, read_image(gt)?);
                    MetricsReport::from_frames(vec![self.image_metrics(&a, &b, None)?])
                }
            }
        };
        std::fs::create_dir_all(&self.dir)?;
        write_json(&self.path(METRICS), &report)?;
        Ok(json!({ "mean": report.mean, "report": METRICS }))
    }
}
