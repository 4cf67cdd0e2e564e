#![allow(dead_code)]

use dgh_core::{FeatureVolume, FrameRecord, MotionSequence};
use dgh_dynamics::{CoarseModel, FineModel, TrainingSequence};
use dgh_nn::ParamStore;
use dgh_sim::{benchmark_sim_config, simulate_sequence, ToyScene, ToySceneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small scene on a 16³ grid.
pub fn small_scene() -> ToyScene {
    let cfg = ToySceneConfig {
        strands: 10,
        vertices_per_strand: 8,
        grid_resolution: 16,
        settle_frames: 40,
        ..ToySceneConfig::default()
    };
    ToyScene::build(cfg, &benchmark_sim_config(), 3).unwrap()
}

pub fn simulate(
    scene: &ToyScene,
    motion: &MotionSequence,
) -> (Vec<FrameRecord>, Vec<FeatureVolume>) {
    let bodies = scene.body_sdfs(motion).unwrap();
    let frames =
        simulate_sequence(&scene.canonical, motion, &bodies, &benchmark_sim_config()).unwrap();
    (frames, bodies)
}

pub fn sequence(scene: &ToyScene, motion: &MotionSequence) -> TrainingSequence {
    let (f, b) = simulate(scene, motion);
    TrainingSequence::new(f, b).unwrap()
}

/// Adds uniform noise to every `mlp` parameter so the zero-initialized
/// output layer no longer hides the rest of the network.
pub fn perturb(store: &mut ParamStore, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let p = store.get_mut(id);
        if p.name.starts_with("mlp") {
            for v in &mut p.data {
                *v += rng.gen_range(-scale..scale);
            }
        }
    }
}

pub fn perturbed_coarse(scene: &ToyScene) -> CoarseModel {
    let mut m =
        CoarseModel::new(Default::default(), scene.grid, scene.canonical.clone(), 1).unwrap();
    perturb(&mut m.store, 2, 0.05);
    m
}

pub fn perturbed_fine(scene: &ToyScene) -> FineModel {
    let mut m = FineModel::new(Default::default(), scene.grid, 1).unwrap();
    perturb(&mut m.store, 3, 0.05);
    m
}
