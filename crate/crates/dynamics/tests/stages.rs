mod common;

use common::*;
use dgh_core::{rigid_transform, FrameRecord, Groom, HeadPose, MotionSequence, Vector3};
use dgh_dynamics::*;
use dgh_sim::damped_oscillation_motion;

fn pose() -> HeadPose {
    HeadPose::from_euler(0.1, -0.2, 0.4, Vector3::new(0.01, 0.0, -0.02))
}

#[test]
fn zero_init_coarse_is_the_rigid_transform() {
    let scene = small_scene();
    let model = CoarseModel::new(
        CoarseConfig::default(),
        scene.grid,
        scene.canonical.clone(),
        0,
    )
    .unwrap();
    let p = pose();
    let body = scene.body_sdf(&p).unwrap();
    let (g, d) = coarse_forward(&model, &scene.canonical, &p, &body).unwrap();
    assert_eq!(g, rigid_transform(&scene.canonical, &p));
    assert!(d.iter().all(|v| *v == Vector3::zeros()));
    let id = HeadPose::identity();
    let (g, _) =
        coarse_forward(&model, &scene.canonical, &id, &scene.body_sdf(&id).unwrap()).unwrap();
    for (a, b) in g.points().iter().zip(scene.canonical.points()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn coarse_displacement_is_per_point() {
    let scene = small_scene();
    let model = perturbed_coarse(&scene);
    let p = pose();
    let body = scene.body_sdf(&p).unwrap();
    let (full, dfull) = coarse_forward(&model, &scene.canonical, &p, &body).unwrap();
    assert!(
        dfull.iter().any(|v| v.norm() > 1e-6),
        "perturbed model moves points"
    );

    let sub = scene.canonical.subsample_strands(10);
    let (_, dsub) = coarse_forward(&model, &sub, &p, &body).unwrap();
    let vps = sub.vertices_per_strand();
    for (k, chunk) in dsub.chunks(vps).enumerate() {
        for (i, d) in chunk.iter().enumerate() {
            assert!((d - dfull[10 * k * vps + i]).norm() < 1e-9);
        }
    }

    let reversed: Vec<_> = (0..scene.canonical.strand_count())
        .rev()
        .flat_map(|s| scene.canonical.strand(s).to_vec())
        .collect();
    let rev = Groom::from_points(vps, reversed).unwrap();
    let (grev, _) = coarse_forward(&model, &rev, &p, &body).unwrap();
    let n = scene.canonical.strand_count();
    for s in 0..n {
        assert_eq!(grev.strand(s), full.strand(n - 1 - s));
    }
}

#[test]
fn zero_init_fine_keeps_the_previous_frame() {
    let scene = small_scene();
    let model = FineModel::new(FineConfig::default(), scene.grid, 0).unwrap();
    let g = rigid_transform(&scene.canonical, &pose());
    let flow = vec![Vector3::new(0.001, 0.0, 0.0); g.point_count()];
    let (next, f) = fine_forward(&model, &g, &scene.canonical, &pose(), &flow).unwrap();
    assert_eq!(next, g);
    assert!(f.iter().all(|v| *v == Vector3::zeros()));
}

#[test]
fn fine_rejects_mismatched_inputs() {
    let scene = small_scene();
    let model = FineModel::new(FineConfig::default(), scene.grid, 0).unwrap();
    let g = scene.canonical.clone();
    let other = g.subsample_strands(2);
    assert!(matches!(
        fine_forward(
            &model,
            &g,
            &other,
            &pose(),
            &vec![Vector3::zeros(); g.point_count()]
        ),
        Err(DynError::Topology(_))
    ));
    assert!(fine_forward(&model, &g, &g, &pose(), &[]).is_err());
}

#[test]
fn static_history_equals_self_attention() {
    let scene = small_scene();
    let model = perturbed_fine(&scene);
    let g = scene.canonical.clone();
    let flow = vec![Vector3::zeros(); g.point_count()];
    let v = model.hair_volume(&g).unwrap();
    let (a, fa) = fine_forward(&model, &g, &g.clone(), &pose(), &flow).unwrap();
    let (b, fb) = model.step_with_volumes(&g, &v, &v, &pose(), &flow).unwrap();
    assert_eq!(a, b);
    assert_eq!(fa, fb);
    assert!(fa.iter().any(|f| f.norm() > 0.0));
}

#[test]
fn without_attention_the_older_frame_is_ignored() {
    let scene = small_scene();
    let mut cfg = FineConfig::default();
    cfg.use_attention = false;
    let mut model = FineModel::new(cfg, scene.grid, 0).unwrap();
    perturb(&mut model.store, 4, 0.05);
    let g = scene.canonical.clone();
    let moved = rigid_transform(&g, &pose());
    let flow = vec![Vector3::zeros(); g.point_count()];
    let (a, _) = fine_forward(&model, &g, &g, &pose(), &flow).unwrap();
    let (b, _) = fine_forward(&model, &g, &moved, &pose(), &flow).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_frame_inference_is_the_coarse_result() {
    let scene = small_scene();
    let coarse = perturbed_coarse(&scene);
    let fine = perturbed_fine(&scene);
    let p = pose();
    let motion = MotionSequence::new(vec![p], 30.0).unwrap();
    let bodies = scene.body_sdfs(&motion).unwrap();
    let out = infer_sequence(&coarse, &fine, &scene.canonical, &motion, &bodies).unwrap();
    assert_eq!(out.len(), 1);
    let (g, _) = coarse_forward(&coarse, &scene.canonical, &p, &bodies[0]).unwrap();
    assert_eq!(out[0].groom, g);
    assert!(infer_sequence(&coarse, &fine, &scene.canonical, &motion, &[]).is_err());
}

#[test]
fn zero_init_fine_freezes_the_sequence() {
    let scene = small_scene();
    let coarse = perturbed_coarse(&scene);
    let fine = FineModel::new(FineConfig::default(), scene.grid, 0).unwrap();
    let motion = damped_oscillation_motion(0.4, 10.0, 20.0, 6, 30.0).unwrap();
    let bodies = scene.body_sdfs(&motion).unwrap();
    let out = infer_sequence(&coarse, &fine, &scene.canonical, &motion, &bodies).unwrap();
    assert_eq!(out.len(), 6);
    for r in &out[1..] {
        assert_eq!(r.groom, out[0].groom);
        assert!(r.flow.iter().all(|f| *f == Vector3::zeros()));
    }
    let strided = infer_sequence_with(
        &coarse,
        &fine,
        &scene.canonical,
        &motion,
        &bodies,
        &InferOptions { voxelize_stride: 3 },
    )
    .unwrap();
    assert_eq!(strided.len(), 6);
}

#[test]
fn coarse_only_flows_are_frame_differences() {
    let scene = small_scene();
    let coarse = perturbed_coarse(&scene);
    let motion = damped_oscillation_motion(0.4, 10.0, 20.0, 4, 30.0).unwrap();
    let bodies = scene.body_sdfs(&motion).unwrap();
    let out = infer_coarse_only(&coarse, &scene.canonical, &motion, &bodies).unwrap();
    for t in 1..out.len() {
        let want = FrameRecord::flow_between(&out[t - 1].groom, &out[t].groom).unwrap();
        assert_eq!(out[t].flow, want);
    }
}

#[test]
fn open_loop_first_step_uses_zero_flow() {
    let scene = small_scene();
    let fine = perturbed_fine(&scene);
    let motion = damped_oscillation_motion(0.4, 10.0, 20.0, 3, 30.0).unwrap();
    let (frames, _) = simulate(&scene, &motion);
    let out = infer_open_loop(&fine, &frames).unwrap();
    let zero = vec![Vector3::zeros(); frames[0].groom.point_count()];
    let (g1, _) = fine_forward(
        &fine,
        &frames[0].groom,
        &frames[0].groom,
        &frames[1].pose,
        &zero,
    )
    .unwrap();
    assert_eq!(out[0], frames[0]);
    assert_eq!(out[1].groom, g1);
}

#[test]
fn checkpoints_round_trip() {
    let scene = small_scene();
    let dir = tempfile::tempdir().unwrap();
    let coarse = perturbed_coarse(&scene);
    let path = dir.path().join("coarse.dghp");
    coarse.save(&path, 1, 10).unwrap();
    let back = CoarseModel::load(&path).unwrap();
    assert_eq!(back.store, coarse.store);
    assert_eq!(back.reference, coarse.reference);
    assert_eq!(back.config, coarse.config);

    let fine = perturbed_fine(&scene);
    let path = dir.path().join("fine.dghp");
    fine.save(&path, 1, 10).unwrap();
    let back = FineModel::load(&path).unwrap();
    assert_eq!(back.store, fine.store);
    assert!(matches!(
        CoarseModel::load(&path),
        Err(DynError::Checkpoint(_))
    ));
}

#[test]
fn sequences_round_trip_through_manifests() {
    let scene = small_scene();
    let motion = damped_oscillation_motion(0.4, 10.0, 20.0, 4, 30.0).unwrap();
    let (frames, _) = simulate(&scene, &motion);
    let dir = tempfile::tempdir().unwrap();
    write_sequence(dir.path(), &frames, 30.0).unwrap();
    let (manifest, back) = read_sequence(dir.path()).unwrap();
    assert_eq!(manifest.frames.len(), 4);
    assert_eq!(manifest.frame_rate, 30.0);
    for (a, b) in back.iter().zip(&frames) {
        assert_eq!(a.pose, b.pose);
        for (p, q) in a.groom.points().iter().zip(b.groom.points()) {
            assert!((p - q).norm() < 1e-6);
        }
    }
    // Stored points are single precision; a second trip is exact.
    let again = tempfile::tempdir().unwrap();
    write_sequence(again.path(), &back, 30.0).unwrap();
    assert_eq!(read_sequence(again.path()).unwrap().1, back);
}

#[test]
fn sdf_cache_reuses_disk_entries() {
    let scene = small_scene();
    let dir = tempfile::tempdir().unwrap();
    let p = pose();
    let mut calls = 0;
    let mut cache = SdfCache::on_disk(dir.path(), 7);
    let a = cache
        .get_or_compute(&p, |q| {
            calls += 1;
            scene
                .body_sdf(q)
                .map_err(|e| DynError::Config(e.to_string()))
        })
        .unwrap();
    let mut fresh = SdfCache::on_disk(dir.path(), 7);
    let b = fresh
        .get_or_compute(&p, |q| {
            calls += 1;
            scene
                .body_sdf(q)
                .map_err(|e| DynError::Config(e.to_string()))
        })
        .unwrap();
    assert_eq!(calls, 1);
    assert_eq!(a, b);
    assert_ne!(SdfCache::in_memory(8).key(&p), fresh.key(&p));
}
