use dgh_core::volume::point_distance;
use dgh_core::{voxelize_points, GridSpec, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(V·P) scan over every point for every voxel.
fn brute_force(points: &[Point3<f64>], spec: &GridSpec, truncation: f64) -> Vec<f64> {
    let [nx, ny, nz] = spec.resolution;
    let mut out = Vec::with_capacity(spec.voxel_count());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let c = spec.voxel_center(x, y, z);
                let mut best = truncation;
                for p in points {
                    best = best.min(point_distance(&c, p));
                }
                out.push(best);
            }
        }
    }
    out
}

#[test]
fn bucketed_voxelization_is_bit_identical_to_brute_force() {
    let spec = GridSpec::cube([0.0; 3], 0.5, 8).unwrap();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Point3<f64>> = (0..100)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                )
            })
            .collect();
        for truncation in [4.0 * spec.voxel_size, 0.05, 10.0] {
            let fast = voxelize_points(&points, &spec, truncation).unwrap();
            let slow = brute_force(&points, &spec, truncation);
            let fast_bits: Vec<u64> = fast.data().iter().map(|v| v.to_bits()).collect();
            let slow_bits: Vec<u64> = slow.iter().map(|v| v.to_bits()).collect();
            assert_eq!(fast_bits, slow_bits, "seed {seed} truncation {truncation}");
        }
    }
}

#[test]
fn stored_grid_matches_its_source_at_file_precision() {
    let spec = GridSpec::cube([0.0; 3], 0.4, 16).unwrap();
    let vol = dgh_core::FeatureVolume::zeros(spec.clone(), 1);
    let back = dgh_core::io::decode_volume(&dgh_core::io::encode_volume(&vol)).unwrap();
    assert_ne!(back.spec(), &spec, "origin should lose bits in f32");
    assert!(back.spec().matches_stored(&spec));
    let shifted = GridSpec::new(spec.resolution, [-0.39, -0.4, -0.4], spec.voxel_size).unwrap();
    assert!(!shifted.matches_stored(&spec));
    let finer = GridSpec::cube([0.0; 3], 0.4, 8).unwrap();
    assert!(!finer.matches_stored(&spec));
}
