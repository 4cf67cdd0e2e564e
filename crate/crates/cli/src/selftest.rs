//! Fast invariant checks across every crate, run by `dgh selftest`.

use std::path::Path;

use dgh_core::io::{
    decode_groom, decode_ppm, decode_volume, encode_groom, encode_ppm, encode_volume,
    quantize_groom, read_png16, write_png16,
};
use dgh_core::volume::point_distance;
use dgh_core::{
    rigid_transform, voxelize_points, FeatureVolume, GridSpec, Groom, HeadPose, Image,
    MotionSequence, Point3, Vector3,
};
use dgh_dynamics::{coarse_forward, fine_forward, CoarseModel, FineModel};
use dgh_eval::{chamfer, flow_error, psnr, MetricsReport, PSNR_CAP};
use dgh_nn::params::{decode_checkpoint, encode_checkpoint};
use dgh_sim::{benchmark_sim_config, simulate_sequence, SimConfig, ToyScene, ToySceneConfig};
use dgh_splat::{rasterize, Splat2D};
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

type Check = std::result::Result<String, String>;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn random_groom(rng: &mut ChaCha8Rng, strands: usize, vps: usize) -> Groom {
    let pts = (0..strands)
        .flat_map(|_| {
            let root = Point3::new(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(0.0..0.1),
            );
            let steps: Vec<Vector3<f64>> = (0..vps)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-0.01..0.01),
                        rng.gen_range(-0.01..0.01),
                        -0.02,
                    )
                })
                .collect();
            let mut p = root;
            steps.into_iter().map(move |s| {
                let out = p;
                p += s;
                out
            })
        })
        .collect();
    Groom::from_points(vps, pts).expect("random groom is valid")
}

fn formats(dir: &Path) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = quantize_groom(&random_groom(&mut rng, 5, 6));
    let bytes = encode_groom(&g);
    ensure(decode_groom(&bytes).map_err(e)? == g, || {
        "DGHS1 groom changed".into()
    })?;
    ensure(
        encode_groom(&decode_groom(&bytes).map_err(e)?) == bytes,
        || "DGHS1 bytes changed".into(),
    )?;

    let spec = GridSpec::cube([0.0; 3], 0.2, 8).map_err(e)?;
    let v = FeatureVolume::from_fn(spec, |p| (p.coords.norm() as f32) as f64);
    let vb = encode_volume(&v);
    ensure(encode_volume(&decode_volume(&vb).map_err(e)?) == vb, || {
        "DGHV1 bytes changed".into()
    })?;

    let mut store = dgh_nn::ParamStore::new();
    store.insert(
        "w",
        &[2, 3],
        (0..6).map(|i| 0.1 * i as f64 + 1e-17).collect(),
    );
    let meta = dgh_nn::CheckpointMeta {
        kind: "selftest".into(),
        seed: 3,
        step: 7,
        spec: serde_json::json!({ "width": 3 }),
    };
    let cb = encode_checkpoint(&meta, &store).map_err(e)?;
    let (m2, s2) = decode_checkpoint(&cb).map_err(e)?;
    ensure(
        m2 == meta && encode_checkpoint(&m2, &s2).map_err(e)? == cb,
        || "DGHP1 changed".into(),
    )?;

    let pose = HeadPose::from_euler(0.3, -0.2, 0.1, Vector3::new(0.01, 0.02, 0.03));
    let js = serde_json::to_string(&pose).map_err(e)?;
    let back: HeadPose = serde_json::from_str(&js).map_err(e)?;
    ensure(back == pose, || "JSON pose changed".into())?;
    let report = MetricsReport::from_frames(vec![dgh_eval::FrameMetrics {
        psnr: Some(1.0 / 3.0),
        ..Default::default()
    }]);
    ensure(
        MetricsReport::from_json(&report.to_json()).map_err(e)? == report,
        || "JSON report changed".into(),
    )?;

    let img = Image::new(4, 3, (0..36).map(|i| i as f64 / 35.0).collect()).map_err(e)?;
    let q = img.quantized_u8();
    ensure(decode_ppm(&encode_ppm(&q)).map_err(e)? == q, || {
        "PPM changed".into()
    })?;
    std::fs::create_dir_all(dir).map_err(e)?;
    let png = dir.join("selftest.png");
    write_png16(&img, &png).map_err(e)?;
    let once = read_png16(&png).map_err(e)?;
    write_png16(&once, &png).map_err(e)?;
    ensure(read_png16(&png).map_err(e)? == once, || {
        "PNG changed".into()
    })?;
    std::fs::remove_file(&png).map_err(e)?;
    Ok("DGHS1 DGHV1 DGHP1 JSON PPM PNG".into())
}

fn voxelization() -> Check {
    let spec = GridSpec::cube([0.0; 3], 0.5, 8).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Point3<f64>> = (0..100)
        .map(|_| {
            Point3::new(
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
            )
        })
        .collect();
    let trunc = 4.0 * spec.voxel_size;
    let fast = voxelize_points(&pts, &spec, trunc).map_err(e)?;
    let [nx, ny, nz] = spec.resolution;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let c = spec.voxel_center(x, y, z);
                let want = pts.iter().fold(trunc, |b, p| b.min(point_distance(&c, p)));
                let got = fast.get(0, x, y, z);
                ensure(got.to_bits() == want.to_bits(), || {
                    format!("voxel ({x},{y},{z}): {got} vs {want}")
                })?;
            }
        }
    }
    Ok("8³ grid, 100 points, bit-exact".into())
}

fn gradients() -> Check {
    let entries = dgh_nn::gradcheck::suite(23, 20).map_err(e)?;
    let mut worst: f64 = 0.0;
    for en in &entries {
        ensure(en.passes(), || {
            format!("{}: {:?}", en.name, en.report.worst)
        })?;
        worst = worst.max(en.report.max_relative_error);
    }
    Ok(format!("{} ops, max rel err {worst:.2e}", entries.len()))
}

fn physics() -> Check {
    let groom =
        Groom::from_points(2, vec![Point3::origin(), Point3::new(0.1, 0.0, 0.0)]).map_err(e)?;
    let cfg = SimConfig {
        iterations: 50,
        ..SimConfig::default()
    };
    let still = MotionSequence::new(vec![HeadPose::identity(); 201], 30.0).map_err(e)?;
    let frames = simulate_sequence(&groom, &still, &[], &cfg).map_err(e)?;
    let tip = frames
        .last()
        .map(|f| f.groom.points()[1])
        .ok_or("no frames")?;
    let err = (tip - Point3::new(0.0, 0.0, -0.1)).norm();
    ensure(err < 1e-3, || format!("hanging tip off by {err:e}"))?;
    Ok(format!("pendulum error {err:.1e} m"))
}

fn splatting() -> Check {
    let s = |index, depth, color| Splat2D {
        index,
        mean: Vector2::new(8.5, 8.5),
        cov: Matrix2::identity() * 4.0,
        depth,
        color,
        opacity: 0.5,
    };
    let bg = [0.0, 0.5, 1.0];
    let (front, back) = ([1.0, 0.0, 0.2], [0.0, 1.0, 0.6]);
    let (img, _) = rasterize(&[s(0, 2.0, back), s(1, 1.0, front)], bg, 32, 32);
    let px = img.pixel(8, 8);
    for k in 0..3 {
        let want = 0.5 * front[k] + 0.25 * back[k] + 0.25 * bg[k];
        ensure((px[k] - want).abs() < 1e-6, || {
            format!("channel {k}: {} vs {want}", px[k])
        })?;
    }
    let dc = dgh_splat::sh_basis(&Vector3::z())[0];
    ensure(
        (dc - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-15,
        || format!("SH DC {dc}"),
    )?;
    Ok("two-splat composite and SH DC".into())
}

fn metrics() -> Check {
    let img = Image::filled(6, 5, [0.3, 0.2, 0.1]);
    ensure(psnr(&img, &img).map_err(e)? == PSNR_CAP, || {
        "identical PSNR not capped".into()
    })?;
    let c = chamfer(&[Point3::origin()], &[Point3::new(1.0, 0.0, 0.0)]).map_err(e)?;
    ensure(c == 2.0, || format!("chamfer {c}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let seq: Vec<Groom> = (0..3).map(|_| random_groom(&mut rng, 2, 3)).collect();
    let f = flow_error(&seq, &seq).map_err(e)?;
    ensure(f.iter().all(|&v| v == 0.0), || format!("flow error {f:?}"))?;
    Ok("psnr cap, chamfer, flow error".into())
}

fn dynamics() -> Check {
    let cfg = ToySceneConfig {
        strands: 6,
        vertices_per_strand: 6,
        grid_resolution: 16,
        settle_frames: 10,
        ..ToySceneConfig::default()
    };
    let scene = ToyScene::build(cfg, &benchmark_sim_config(), 1).map_err(e)?;
    let pose = HeadPose::from_euler(0.1, 0.2, -0.3, Vector3::zeros());
    let body = scene.body_sdf(&pose).map_err(e)?;
    let coarse = CoarseModel::new(
        Default::default(),
        scene.grid.clone(),
        scene.canonical.clone(),
        0,
    )
    .map_err(e)?;
    let (g, _) = coarse_forward(&coarse, &scene.canonical, &pose, &body).map_err(e)?;
    let rigid = rigid_transform(&scene.canonical, &pose);
    ensure(g == rigid, || "zero-init coarse is not rigid".into())?;
    let fine = FineModel::new(Default::default(), scene.grid.clone(), 0).map_err(e)?;
    let zero = vec![Vector3::zeros(); rigid.point_count()];
    let (g2, flow) = fine_forward(&fine, &rigid, &rigid, &pose, &zero).map_err(e)?;
    ensure(
        g2 == rigid && flow.iter().all(|v| *v == Vector3::zeros()),
        || "zero-init fine moved".into(),
    )?;
    Ok("zero-init coarse is rigid, zero-init fine holds".into())
}

/// Runs every check; PNG scratch files go under `scratch`.
pub fn run_all(scratch: &Path) -> Vec<CheckResult> {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("formats", Box::new(|| formats(scratch))),
        ("voxelization", Box::new(voxelization)),
        ("gradients", Box::new(gradients)),
        ("physics", Box::new(physics)),
        ("splatting", Box::new(splatting)),
        ("metrics", Box::new(metrics)),
        ("dynamics", Box::new(dynamics)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(&*f))
                .unwrap_or_else(|_| Err("panicked".to_string()));
            match r {
                Ok(detail) => CheckResult {
                    name,
                    ok: true,
                    detail,
                },
                Err(detail) => CheckResult {
                    name,
                    ok: false,
                    detail,
                },
            }
        })
        .collect()
}
