use dgh_core::{Camera, Matrix3, Point3, UnitQuaternion, Vector3};
use dgh_splat::project::{project_point, projection_jacobian, view_direction};
use dgh_splat::sh::{eval_sh, SH_BASIS, SH_WIDTH};
use dgh_splat::*;
use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splat(
    index: usize,
    x: f64,
    y: f64,
    var: f64,
    depth: f64,
    color: [f64; 3],
    opacity: f64,
) -> Splat2D {
    Splat2D {
        index,
        mean: Vector2::new(x, y),
        cov: Matrix2::identity() * var,
        depth,
        color,
        opacity,
    }
}

fn px(img: &dgh_core::Image, x: usize, y: usize) -> [f64; 3] {
    let i = 3 * (y * img.width + x);
    [img.data[i], img.data[i + 1], img.data[i + 2]]
}

#[test]
fn empty_raster_is_background() {
    let bg = [0.2, 0.4, 0.6];
    let (img, stats) = rasterize(&[], bg, 20, 17);
    assert_eq!(stats, RasterStats::default());
    for p in img.data.chunks(3) {
        assert_eq!(p, bg);
    }
}

#[test]
fn opaque_splat_on_pixel_center_clips_alpha() {
    let bg = [0.1, 0.2, 0.3];
    let c = [0.9, 0.5, 0.7];
    let (img, _) = rasterize(&[splat(0, 5.5, 6.5, 2.0, 1.0, c, 1.0)], bg, 12, 12);
    let got = px(&img, 5, 6);
    for k in 0..3 {
        assert!((got[k] - (0.999 * c[k] + 0.001 * bg[k])).abs() < 1e-12);
    }
}

#[test]
fn two_half_transparent_splats_composite_by_hand() {
    let bg = [0.0, 0.5, 1.0];
    let front = [1.0, 0.0, 0.2];
    let back = [0.0, 1.0, 0.6];
    let a = splat(0, 8.5, 8.5, 4.0, 2.0, back, 0.5);
    let b = splat(1, 8.5, 8.5, 4.0, 1.0, front, 0.5);
    let (img1, _) = rasterize(&[a.clone(), b.clone()], bg, 32, 32);
    let (img2, _) = rasterize(&[b, a], bg, 32, 32);
    let got = px(&img1, 8, 8);
    for k in 0..3 {
        let want = 0.5 * front[k] + 0.25 * back[k] + 0.25 * bg[k];
        assert!((got[k] - want).abs() < 1e-6, "{got:?}");
    }
    assert_eq!(img1, img2);
}

#[test]
fn equal_depths_order_by_index() {
    let a = splat(3, 4.5, 4.5, 3.0, 1.0, [1.0, 0.0, 0.0], 0.6);
    let b = splat(7, 4.5, 4.5, 3.0, 1.0, [0.0, 0.0, 1.0], 0.6);
    let (img, _) = rasterize(&[b.clone(), a.clone()], [0.0; 3], 8, 8);
    let got = px(&img, 4, 4);
    assert!((got[0] - 0.6).abs() < 1e-12);
    assert!((got[2] - 0.24).abs() < 1e-12);
}

#[test]
fn degenerate_covariance_is_skipped_and_counted() {
    let mut s = splat(0, 4.0, 4.0, 1.0, 1.0, [1.0; 3], 1.0);
    s.cov = Matrix2::new(1.0, 1.0, 1.0, 1.0);
    let (img, stats) = rasterize(&[s], [0.0; 3], 8, 8);
    assert_eq!(stats.skipped, 1);
    assert!(img.data.iter().all(|&v| v == 0.0));
}

#[test]
fn splats_spanning_tiles_match_across_tile_borders() {
    // A wide splat centered on a tile corner renders symmetric values.
    let (img, _) = rasterize(
        &[splat(0, 16.0, 16.0, 30.0, 1.0, [1.0; 3], 0.9)],
        [0.0; 3],
        32,
        32,
    );
    let (l, r) = (px(&img, 15, 15), px(&img, 16, 16));
    assert!((l[0] - r[0]).abs() < 1e-15);
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Associated Legendre function with the Condon–Shortley phase, by the
/// standard upward recurrence in l.
fn legendre(l: usize, m: usize, x: f64) -> f64 {
    let mut pmm = 1.0;
    let s = (1.0 - x * x).sqrt();
    for i in 0..m {
        pmm *= -((2 * i + 1) as f64) * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut out = 0.0;
    for ll in m + 2..=l {
        out = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = out;
    }
    out
}

fn real_sh(l: usize, m: i64, d: &Vector3<f64>) -> f64 {
    let theta = d.z.clamp(-1.0, 1.0).acos();
    let phi = d.y.atan2(d.x);
    let am = m.unsigned_abs() as usize;
    let k = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - am)
        / factorial(l + am))
    .sqrt();
    let p = legendre(l, am, theta.cos());
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => k * p,
        std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).cos(),
        std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).sin(),
    }
}

#[test]
fn sh_basis_matches_legendre_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let d = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let b = sh_basis(&d);
        let mut k = 0;
        for l in 0..4usize {
            for m in -(l as i64)..=(l as i64) {
                let want = real_sh(l, m, &d);
                assert!(
                    (b[k] - want).abs() < 1e-10,
                    "l={l} m={m}: {} vs {want}",
                    b[k]
                );
                k += 1;
            }
        }
        assert_eq!(k, SH_BASIS);
    }
}

#[test]
fn dc_only_color_ignores_direction_and_z_term_is_odd() {
    let mut c = vec![0.0; SH_WIDTH];
    c[..3].copy_from_slice(&[0.3, -0.2, 0.1]);
    let a = eval_sh(&c, &Vector3::new(0.3, 0.4, 0.866).normalize());
    let b = eval_sh(&c, &Vector3::new(-0.9, 0.1, -0.2).normalize());
    assert_eq!(a, b);
    let mut z = vec![0.0; SH_WIDTH];
    z[3 * 2] = 0.4; // degree 1, m = 0, red channel
    let up = dgh_splat::sh::eval_sh_raw(&z, &Vector3::z());
    let down = dgh_splat::sh::eval_sh_raw(&z, &-Vector3::z());
    assert!(up[0] > 0.0 && (up[0] + down[0]).abs() < 1e-15);
}

fn cam_at(eye: Point3<f64>, target: Point3<f64>, w: usize, h: usize) -> Camera {
    Camera::look_at(eye, target, Vector3::z(), 40.0, 40.0, w, h, 0.05).unwrap()
}

#[test]
fn projection_jacobian_matches_finite_differences() {
    let cam = Camera::new(Matrix4::identity(), 120.0, 95.0, 31.0, 27.0, 64, 64, 0.01).unwrap();
    let p = Point3::new(0.21, -0.13, 0.8);
    let j = projection_jacobian(&cam, &p);
    let h = 1e-6;
    for a in 0..3 {
        let mut e = Vector3::zeros();
        e[a] = h;
        let d = (project_point(&cam, &(p + e)) - project_point(&cam, &(p - e))) / (2.0 * h);
        for r in 0..2 {
            assert!(
                (d[r] - j[(r, a)]).abs() < 1e-6 * j[(r, a)].abs().max(1.0),
                "{r},{a}"
            );
        }
    }
}

#[test]
fn on_axis_isotropic_projection_adds_floor() {
    let cam = Camera::new(Matrix4::identity(), 1.0, 1.0, 0.0, 0.0, 8, 8, 0.1).unwrap();
    let sigma = 0.2;
    let prim = GaussianPrimitive {
        mean: Point3::new(0.0, 0.0, 1.0),
        tangent: Vector3::x(),
        axial_scale: sigma,
        radial_scale: sigma,
        rotation: Matrix3::identity(),
        opacity: 0.5,
        sh: vec![0.0; SH_WIDTH],
    };
    let s = project_gaussian(&prim, &cam, 0).unwrap();
    let want = Matrix2::identity() * (sigma * sigma + COV_FLOOR);
    assert!((s.cov - want).abs().max() < 1e-12);
    let mut behind = prim.clone();
    behind.mean.z = 0.05;
    assert!(project_gaussian(&behind, &cam, 0).is_none());
}

#[test]
fn covariance_eigenvalues_are_scales_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let diag = GaussianPrimitive {
        mean: Point3::origin(),
        tangent: Vector3::x(),
        axial_scale: 2.0,
        radial_scale: 1.0,
        rotation: Matrix3::identity(),
        opacity: 1.0,
        sh: vec![0.0; SH_WIDTH],
    };
    assert_eq!(
        build_covariance(&diag),
        Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0))
    );
    for _ in 0..20 {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let q = UnitQuaternion::from_scaled_axis(axis * 2.0);
        let (l, r) = (rng.gen_range(0.01..0.5), rng.gen_range(1e-4..0.01));
        let p = GaussianPrimitive {
            rotation: q.to_rotation_matrix().into_inner(),
            axial_scale: l,
            radial_scale: r,
            ..diag.clone()
        };
        let s = build_covariance(&p);
        assert!((s - s.transpose()).abs().max() < 1e-15);
        assert!((s.trace() - (l * l + 2.0 * r * r)).abs() < 1e-12);
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let want = [r * r, r * r, l * l];
        for k in 0..3 {
            assert!((ev[k] - want[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn primitives_sit_on_segment_midpoints() {
    let pts: Vec<Point3<f64>> = (0..24)
        .map(|i| Point3::new(0.01 * i as f64, 0.002 * (i * i) as f64, 0.0))
        .collect();
    let g = dgh_core::Groom::from_points(24, pts.clone()).unwrap();
    let prims = init_primitives(&g, [0.5; 3]).unwrap();
    assert_eq!(prims.len(), 23);
    for (i, p) in prims.iter().enumerate() {
        let mid = (pts[i].coords + pts[i + 1].coords) * 0.5;
        assert!((p.mean.coords - mid).norm() < 1e-12);
        assert!((p.rotation * Vector3::x() - p.tangent).norm() < 1e-9);
        assert!(
            (p.rotation.transpose() * p.rotation - Matrix3::identity())
                .abs()
                .max()
                < 1e-9
        );
        assert!((p.axial_scale - 0.5 * (pts[i + 1] - pts[i]).norm()).abs() < 1e-15);
        assert!(p.axial_scale >= p.radial_scale);
    }
    let straight: Vec<Point3<f64>> = (0..6)
        .map(|i| Point3::new(0.0, 0.0, -0.02 * i as f64))
        .collect();
    let g = dgh_core::Groom::from_points(6, straight).unwrap();
    let prims = init_primitives(&g, [0.5; 3]).unwrap();
    assert!(prims.windows(2).all(|w| w[0].rotation == w[1].rotation));
}

#[test]
fn antiparallel_tangent_rotation_is_proper() {
    let r = dgh_splat::primitive::align_x_to(&-Vector3::x());
    assert!((r * Vector3::x() + Vector3::x()).norm() < 1e-12);
    assert!((r.determinant() - 1.0).abs() < 1e-12);
}

#[test]
fn curvature_weights_match_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts: Vec<Point3<f64>> = (0..12)
        .map(|i| {
            Point3::new(
                0.02 * i as f64 + rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
                0.0,
            )
        })
        .collect();
    let w = curvature_weights(&pts).unwrap();
    let mut t = Vec::new();
    for s in pts.windows(2) {
        let d = [s[1].x - s[0].x, s[1].y - s[0].y, s[1].z - s[0].z];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        t.push([d[0] / n, d[1] / n, d[2] / n]);
    }
    let mut k = vec![0.0];
    for i in 1..t.len() {
        let mut s = 0.0;
        for a in 0..3 {
            s += (t[i][a] - t[i - 1][a]) * (t[i][a] - t[i - 1][a]);
        }
        k.push(s.sqrt());
    }
    let mut max = 0.0f64;
    for &v in &k {
        max = max.max(v);
    }
    for i in 0..k.len() {
        assert!((w[i] - k[i] / (max + 1e-8)).abs() < 1e-12);
        assert!((0.0..1.0).contains(&w[i]));
    }
}

#[test]
fn elbow_and_straight_weights() {
    let elbow = [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(1.0, 1.0, 0.0),
    ];
    let w = curvature_weights(&elbow).unwrap();
    let r2 = 2f64.sqrt();
    assert_eq!(w[0], 0.0);
    assert!((w[1] - r2 / (r2 + 1e-8)).abs() < 1e-15);
    let straight: Vec<Point3<f64>> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
    assert!(curvature_weights(&straight)
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn blending_extremes_and_convexity() {
    let pts: Vec<Point3<f64>> = (0..5)
        .map(|i| Point3::new(0.01 * i as f64, 0.0, 0.0))
        .collect();
    let g = dgh_core::Groom::from_points(5, pts).unwrap();
    let mut prims = init_primitives(&g, [0.5; 3]).unwrap();
    for (i, p) in prims.iter_mut().enumerate() {
        p.opacity = 0.2 + 0.15 * i as f64;
        p.sh.iter_mut()
            .enumerate()
            .for_each(|(k, v)| *v = (i * 7 + k) as f64 * 0.01);
    }
    assert_eq!(blend_sh_opacity(&prims, &[0.0; 4]), prims);
    let full = blend_sh_opacity(&prims, &[0.0, 1.0, 1.0, 1.0]);
    for i in 1..4 {
        assert_eq!(full[i].sh, prims[i - 1].sh);
        assert_eq!(full[i].opacity, prims[i - 1].opacity);
    }
    let half = blend_sh_opacity(&prims, &[0.0, 0.3, 0.6, 0.9]);
    assert_eq!(half[0], prims[0]);
    for i in 1..4 {
        let (lo, hi) = (
            prims[i - 1].opacity.min(prims[i].opacity),
            prims[i - 1].opacity.max(prims[i].opacity),
        );
        assert!(half[i].opacity >= lo && half[i].opacity <= hi);
    }
}

#[test]
fn diffuse_intensity_extremes() {
    let l = Vector3::z();
    assert_eq!(dgh_splat::blend::diffuse_intensity(&Vector3::z(), &l), 1.0);
    assert_eq!(dgh_splat::blend::diffuse_intensity(&Vector3::x(), &l), 0.0);
}

/// Quarter circle in the x–z plane with alternating bright and dark
/// segment albedo.
fn quarter_circle(n: usize) -> (Vec<Point3<f64>>, Vec<f64>) {
    let pts = (0..n)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
            Point3::new(a.cos(), 0.0, a.sin())
        })
        .collect();
    let albedo = (0..n - 1)
        .map(|i| if i % 2 == 0 { 1.0 } else { 0.2 })
        .collect();
    (pts, albedo)
}

#[test]
fn blending_lowers_shaded_discontinuity_on_quarter_circle() {
    let (pts, albedo) = quarter_circle(12);
    let l = Vector3::new(0.0, 0.0, 1.0);
    let w = curvature_weights(&pts).unwrap();
    let before = shaded_discontinuity(&pts, &albedo, &l).unwrap();
    let mut blended = albedo.clone();
    for i in 1..albedo.len() {
        blended[i] = albedo[i] * (1.0 - w[i]) + albedo[i - 1] * w[i];
    }
    let after = shaded_discontinuity(&pts, &blended, &l).unwrap();
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn view_direction_is_unit_and_points_away_from_camera() {
    let cam = cam_at(Point3::new(0.0, -1.0, 0.0), Point3::origin(), 16, 16);
    let d = view_direction(&cam, &Point3::new(0.0, 0.5, 0.0));
    assert!((d - Vector3::y()).norm() < 1e-12);
}
