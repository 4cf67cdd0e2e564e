use dgh_core::{Camera, GridSpec, Groom, Point3, Vector3};
use dgh_nn::gradcheck::{check_params, project};
use dgh_nn::Tape;
use dgh_splat::sh::SH_WIDTH;
use dgh_splat::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn groom(strands: usize, verts: usize) -> Groom {
    let pts = (0..strands)
        .flat_map(|s| {
            (0..verts).map(move |i| {
                let x = -0.06 + 0.12 * s as f64 / strands.max(2) as f64;
                Point3::new(
                    x + 0.01 * (i as f64 * 0.7).sin(),
                    0.005 * i as f64,
                    0.08 - 0.035 * i as f64,
                )
            })
        })
        .collect();
    Groom::from_points(verts, pts).unwrap()
}

fn camera(eye: Point3<f64>, size: usize) -> Camera {
    let f = 2.2 * size as f64;
    Camera::look_at(
        eye,
        Point3::new(0.0, 0.0, 0.0),
        Vector3::z(),
        f,
        f,
        size,
        size,
        0.05,
    )
    .unwrap()
}

fn grid() -> GridSpec {
    GridSpec::cube([0.0; 3], 0.2, 16).unwrap()
}

fn config(blend: BlendStage) -> AppearanceConfig {
    AppearanceConfig {
        blend,
        hidden: vec![32, 32],
        background: [0.05, 0.1, 0.15],
        ..AppearanceConfig::default()
    }
}

#[test]
fn zero_init_keeps_canonical_primitives() {
    let g = groom(3, 6);
    let prims = init_primitives(&g, [0.6, 0.4, 0.3]).unwrap();
    let cam = camera(Point3::new(0.0, -0.5, 0.0), 16);
    let model = AppearanceModel::new(config(BlendStage::Off), grid(), 1).unwrap();
    let out = appearance_forward(&model, &g, &prims, &cam).unwrap();
    for (a, b) in out.iter().zip(&prims) {
        assert!((a.opacity - b.opacity).abs() < 1e-12);
        assert!((a.axial_scale - b.axial_scale).abs() < 1e-12);
        assert_eq!(a.sh, b.sh);
        assert_eq!(a.mean, b.mean);
    }
    // With blending after the decoder the result is the blended canonical set.
    let model = AppearanceModel::new(config(BlendStage::AfterDecoder), grid(), 1).unwrap();
    let out = appearance_forward(&model, &g, &prims, &cam).unwrap();
    let per = g.vertices_per_strand() - 1;
    for (s, strand) in g.strands().enumerate() {
        let w = curvature_weights(strand).unwrap();
        let want = blend_sh_opacity(&prims[s * per..(s + 1) * per], &w);
        for (a, b) in out[s * per..(s + 1) * per].iter().zip(&want) {
            assert!((a.opacity - b.opacity).abs() < 1e-12);
            for k in 0..SH_WIDTH {
                assert!((a.sh[k] - b.sh[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_init_render_matches_plain_rasterizer() {
    let g = groom(3, 6);
    let prims = init_primitives(&g, [0.6, 0.4, 0.3]).unwrap();
    let cam = camera(Point3::new(0.1, -0.5, 0.05), 24);
    let model = AppearanceModel::new(config(BlendStage::Off), grid(), 2).unwrap();
    let img = model.render_image(&g, &prims, &cam).unwrap();
    let (plain, _) = rasterize(&project_all(&prims, &cam), model.config.background, 24, 24);
    let diff = img
        .data
        .iter()
        .zip(&plain.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff}");
}

fn perturb(model: &mut AppearanceModel, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let p = model.store.get_mut(id);
        if p.name.starts_with("decoder") {
            for v in &mut p.data {
                *v += rng.gen_range(-scale..scale);
            }
        }
    }
}

#[test]
fn view_dependence_once_higher_bands_move() {
    let g = groom(1, 3);
    let prims = init_primitives(&g, [0.5; 3]).unwrap();
    let cam = camera(Point3::new(0.0, -0.5, 0.0), 16);
    let mut model = AppearanceModel::new(config(BlendStage::Off), grid(), 3).unwrap();
    perturb(&mut model, 4, 0.05);
    let tape = Tape::new();
    let d = model.decode(&tape, &g, &prims, &cam).unwrap();
    let sh = d.sh.value();
    let c = sh[..SH_WIDTH].to_vec();
    let a = dgh_splat::eval_sh(&c, &Vector3::new(0.0, 1.0, 0.0));
    let b = dgh_splat::eval_sh(&c, &Vector3::new(1.0, 0.0, 0.0));
    assert!(a != b);
}

#[test]
fn decoder_gradients_through_the_rasterizer() {
    let g = groom(1, 5);
    let mut prims = init_primitives(&g, [0.5, 0.45, 0.4]).unwrap();
    for p in &mut prims {
        p.radial_scale = 0.01;
        p.opacity = 0.6;
    }
    assert_eq!(prims.len(), 4);
    let cam = camera(Point3::new(0.0, -0.45, 0.0), 8);
    let mut model = AppearanceModel::new(config(BlendStage::AfterDecoder), grid(), 5).unwrap();
    perturb(&mut model, 6, 0.02);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rep = check_params(&model.store, 40, 1e-5, &mut rng, |tape, store| {
        let mut m = model.clone();
        m.store = store.clone();
        let (img, _) = m
            .render(tape, &g, &prims, &cam)
            .map_err(|e| dgh_nn::NnError::Shape(e.to_string()))?;
        project(img, 8)
    })
    .unwrap();
    assert!(rep.passes(1e-3), "{rep:?}");
}

#[test]
fn training_on_its_own_render_stays_at_zero_and_is_deterministic() {
    let g = groom(3, 6);
    let prims = init_primitives(&g, [0.6, 0.4, 0.3]).unwrap();
    let cam = camera(Point3::new(0.0, -0.5, 0.0), 16);
    let model = AppearanceModel::new(config(BlendStage::Off), grid(), 9).unwrap();
    let target = model.render_image(&g, &prims, &cam).unwrap();
    let frames = vec![AppearanceFrame {
        groom: g.clone(),
        prims: prims.clone(),
        views: vec![(cam.clone(), target)],
    }];
    let cfg = AppearanceTrainConfig {
        steps: 4,
        ..AppearanceTrainConfig::default()
    };
    let (_, rep) = train_appearance(model.clone(), &frames, &cfg).unwrap();
    assert!(rep.losses[0].abs() < 1e-12);
    assert!(rep.losses.iter().all(|&l| l <= rep.losses[0]));

    let look = ToyLook::default();
    let frames = vec![AppearanceFrame {
        groom: g.clone(),
        prims,
        views: vec![(
            cam.clone(),
            look.render(&g, &cam, model.config.background).unwrap(),
        )],
    }];
    let cfg = AppearanceTrainConfig {
        steps: 30,
        learning_rate: 3e-3,
        seed: 2,
    };
    let (m1, r1) = train_appearance(model.clone(), &frames, &cfg).unwrap();
    let (_, r2) = train_appearance(model, &frames, &cfg).unwrap();
    assert_eq!(r1.losses, r2.losses);
    assert!(r1.losses.last().unwrap() < &r1.losses[0]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("app.dghp");
    m1.save(&path, 0, 30).unwrap();
    let back = AppearanceModel::load(&path).unwrap();
    assert_eq!(back.store, m1.store);
    assert_eq!(back.config, m1.config);
}

#[test]
fn mismatched_primitives_are_rejected() {
    let g = groom(2, 5);
    let prims = init_primitives(&groom(1, 5), [0.5; 3]).unwrap();
    let model = AppearanceModel::new(config(BlendStage::Off), grid(), 0).unwrap();
    let cam = camera(Point3::new(0.0, -0.5, 0.0), 8);
    assert!(matches!(
        appearance_forward(&model, &g, &prims, &cam),
        Err(SplatError::Shape(_))
    ));
}

#[test]
fn refined_target_keeps_control_points_and_straight_lines() {
    let g = groom(3, 6);
    let look = ToyLook {
        subdivisions: 4,
        ..ToyLook::default()
    };
    let r = look.refine(&g).unwrap();
    assert_eq!(r.strand_count(), 3);
    assert_eq!(r.vertices_per_strand(), 5 * 4 + 1);
    for (fine, coarse) in r.strands().zip(g.strands()) {
        for (j, p) in coarse.iter().enumerate() {
            assert!((fine[4 * j] - p).norm() < 1e-15);
        }
    }

    // Evenly spaced collinear points: interior spans reproduce the line.
    let line = Groom::from_points(
        5,
        (0..5)
            .map(|i| Point3::new(0.02 * i as f64, 0.0, -0.01 * i as f64))
            .collect(),
    )
    .unwrap();
    let r = look.refine(&line).unwrap();
    let pts = r.points();
    for i in 4..12 {
        let want = Point3::new(0.02 * i as f64 / 4.0, 0.0, -0.01 * i as f64 / 4.0);
        assert!((pts[i] - want).norm() < 1e-15, "{i}: {} vs {want}", pts[i]);
    }

    let same = ToyLook {
        subdivisions: 1,
        ..ToyLook::default()
    };
    assert_eq!(same.refine(&g).unwrap(), g);
}
