//! Real spherical harmonics up to degree 3, ordered by degree then
//! m = −l..l, with the Condon–Shortley phase.

use dgh_core::Vector3;
use dgh_nn::Var;

pub const SH_DEGREE: usize = 3;
pub const SH_BASIS: usize = 16;
/// Coefficients per primitive: 16 basis functions × RGB, stored `[k][c]`.
pub const SH_WIDTH: usize = 3 * SH_BASIS;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values at unit direction `d`.
pub fn sh_basis(d: &Vector3<f64>) -> [f64; SH_BASIS] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * x * y,
        C2[1] * y * z,
        C2[2] * (2.0 * zz - xx - yy),
        C2[3] * x * z,
        C2[4] * (xx - yy),
        C3[0] * y * (3.0 * xx - yy),
        C3[1] * x * y * z,
        C3[2] * y * (4.0 * zz - xx - yy),
        C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        C3[4] * x * (4.0 * zz - xx - yy),
        C3[5] * z * (xx - yy),
        C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Color before the offset and clamp.
pub fn eval_sh_raw(coeffs: &[f64], d: &Vector3<f64>) -> [f64; 3] {
    assert_eq!(
        coeffs.len(),
        SH_WIDTH,
        "expected {SH_WIDTH} SH coefficients"
    );
    let b = sh_basis(d);
    let mut rgb = [0.0; 3];
    for (k, bk) in b.iter().enumerate() {
        for (c, v) in rgb.iter_mut().enumerate() {
            *v += bk * coeffs[3 * k + c];
        }
    }
    rgb
}

/// RGB in `[0, 1]`: `clamp(0.5 + Σ_k c_k Y_k(d))` per channel.
pub fn eval_sh(coeffs: &[f64], d: &Vector3<f64>) -> [f64; 3] {
    eval_sh_raw(coeffs, d).map(|v| (v + 0.5).clamp(0.0, 1.0))
}

/// DC coefficient that reproduces a constant color.
pub fn rgb_to_dc(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}

/// Differentiable [`eval_sh`] for `[P, 48]` coefficients and one view
/// direction per row; gradients vanish where the clamp is active.
pub fn eval_sh_var<'t>(coeffs: Var<'t>, dirs: &[Vector3<f64>]) -> dgh_nn::Result<Var<'t>> {
    let p = dirs.len();
    if coeffs.shape() != [p, SH_WIDTH] {
        return Err(dgh_nn::NnError::Shape(format!(
            "eval_sh: expected [{p}, {SH_WIDTH}], got {:?}",
            coeffs.shape()
        )));
    }
    let v = coeffs.value();
    let basis: Vec<[f64; SH_BASIS]> = dirs.iter().map(sh_basis).collect();
    let mut out = Vec::with_capacity(3 * p);
    let mut active = Vec::with_capacity(3 * p);
    for (i, d) in dirs.iter().enumerate() {
        for r in eval_sh_raw(&v[i * SH_WIDTH..(i + 1) * SH_WIDTH], d) {
            let c = r + 0.5;
            out.push(c.clamp(0.0, 1.0));
            active.push((0.0..=1.0).contains(&c));
        }
    }
    let id = coeffs.id();
    Ok(coeffs.tape().op(&[coeffs], vec![p, 3], out, move |g, s| {
        if let Some(dc) = s.get(id) {
            for (i, b) in basis.iter().enumerate() {
                for c in 0..3 {
                    if !active[3 * i + c] {
                        continue;
                    }
                    let gi = g[3 * i + c];
                    for (k, bk) in b.iter().enumerate() {
                        dc[i * SH_WIDTH + 3 * k + c] += gi * bk;
                    }
                }
            }
        }
    }))
}
