use dgh_core::{Groom, Image, Point3, Vector3};
use dgh_eval::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::new(w, h, (0..w * h * 3).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect()
}

#[test]
fn psnr_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_image(&mut rng, 17, 9);
    let b = random_image(&mut rng, 17, 9);
    let mut sum = 0.0;
    for y in 0..9 {
        for x in 0..17 {
            let (pa, pb) = (a.pixel(x, y), b.pixel(x, y));
            for c in 0..3 {
                sum += (pa[c] - pb[c]).powi(2);
            }
        }
    }
    let oracle = -10.0 * (sum / (17.0 * 9.0 * 3.0)).log10();
    assert!((psnr(&a, &b).unwrap() - oracle).abs() < 1e-9);
}

#[test]
fn ssim_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_image(&mut rng, 32, 24);
    let b = random_image(&mut rng, 32, 24);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let ab = ssim(&a, &b).unwrap();
    assert!(ab < 0.2, "independent noise ssim {ab}");
    assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
}

#[test]
fn chamfer_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_points(&mut rng, 200);
    let q = random_points(&mut rng, 170);
    let mut oracle = 0.0;
    for (a, b) in [(&p, &q), (&q, &p)] {
        let mut side = 0.0;
        for x in a.iter() {
            let mut best = f64::INFINITY;
            for y in b.iter() {
                best = best.min((x - y).norm_squared());
            }
            side += best;
        }
        oracle += side / a.len() as f64;
    }
    assert!((chamfer(&p, &q).unwrap() - oracle).abs() <= 1e-12);
}

fn random_sequence(rng: &mut ChaCha8Rng, frames: usize) -> Vec<Groom> {
    (0..frames)
        .map(|_| Groom::from_points(4, random_points(rng, 12)).unwrap())
        .collect()
}

#[test]
fn flow_error_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_sequence(&mut rng, 6);
    let b = random_sequence(&mut rng, 6);
    let got = flow_error(&a, &b).unwrap();
    assert_eq!(got.len(), 5);
    for t in 0..5 {
        let mut s = 0.0;
        for i in 0..12 {
            let fa = a[t + 1].points()[i] - a[t].points()[i];
            let fb = b[t + 1].points()[i] - b[t].points()[i];
            s += ((fa.x - fb.x).powi(2) + (fa.y - fb.y).powi(2) + (fa.z - fb.z).powi(2)).sqrt();
        }
        assert!((got[t] - s / 12.0).abs() <= 1e-12);
    }
    assert!(flow_error(&a, &a).unwrap().iter().all(|&e| e == 0.0));
    let shifted: Vec<Groom> = a
        .iter()
        .map(|g| {
            g.with_points(
                g.points()
                    .iter()
                    .map(|p| p + Vector3::new(0.5, -0.25, 2.0))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    assert!(flow_error(&shifted, &a).unwrap().iter().all(|&e| e < 1e-14));
}

#[test]
fn l2_error_is_mean_distance() {
    let a = Groom::from_points(2, vec![Point3::origin(), Point3::new(0.0, 0.0, 1.0)]).unwrap();
    let b = Groom::from_points(
        2,
        vec![Point3::new(3.0, 4.0, 0.0), Point3::new(0.0, 0.0, 1.0)],
    )
    .unwrap();
    assert_eq!(l2_error(&a, &b).unwrap(), 2.5);
}

#[test]
fn identical_inputs_give_perfect_report() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = random_image(&mut rng, 16, 16);
    let g = random_sequence(&mut rng, 1).pop().unwrap();
    let frame = FrameMetrics {
        psnr: Some(psnr(&img, &img).unwrap()),
        chamfer: Some(chamfer(g.points(), g.points()).unwrap()),
        ..FrameMetrics::default()
    };
    let report = MetricsReport::from_frames(vec![frame]);
    assert_eq!(report.mean.psnr, Some(99.0));
    assert_eq!(report.mean.chamfer, Some(0.0));
}

proptest! {
    #[test]
    fn report_round_trips_through_json(vals in proptest::collection::vec(-1e6f64..1e6, 1..6)) {
        let frames = vals
            .iter()
            .map(|&v| FrameMetrics { psnr: Some(v), l2: Some(v.abs() / 7.0), flow: Some(v * 1e-9), ..FrameMetrics::default() })
            .collect();
        let report = MetricsReport::from_frames(frames);
        let back = MetricsReport::from_json(&report.to_json()).unwrap();
        prop_assert_eq!(back, report);
    }
}
