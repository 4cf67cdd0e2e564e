//! Training losses: point/flow regression, body penetration, and image
//! reconstruction (L1 and SSIM).

use dgh_core::volume::GridSpec;

use crate::error::{shape_err, Result};
use crate::tape::Var;
use crate::volume_ops::trilinear_sample;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub point: f64,
    pub sdf: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            point: 1.0,
            sdf: 0.01,
        }
    }
}

fn rows3(v: &Var<'_>, name: &str) -> Result<usize> {
    match v.shape().as_slice() {
        [n, 3] if *n > 0 => Ok(*n),
        s => shape_err(format!("{name}: expected nonempty [N, 3], got {s:?}")),
    }
}

/// `(1/N) Σ ‖pred_i − gt_i‖²` over `[N, 3]` rows.
pub fn loss_point<'t>(pred: Var<'t>, gt: Var<'t>) -> Result<Var<'t>> {
    let n = rows3(&pred, "loss_point")?;
    Ok(pred.sub(gt)?.square().sum().scale(1.0 / n as f64))
}

/// Same form as [`loss_point`], applied to per-point flow vectors.
pub fn loss_flow<'t>(pred: Var<'t>, gt: Var<'t>) -> Result<Var<'t>> {
    loss_point(pred, gt)
}

/// Mean penetration depth `max(0, −sdf(p))` of `[N, 3]` points into a signed
/// `[1, D, H, W]` body volume.
pub fn loss_sdf<'t>(points: Var<'t>, sdf: Var<'t>, spec: &GridSpec) -> Result<Var<'t>> {
    rows3(&points, "loss_sdf")?;
    Ok(trilinear_sample(sdf, spec, points)?.neg().relu().mean())
}

/// `λ_p · point + λ_sdf · sdf`.
pub fn total_loss<'t>(point: Var<'t>, sdf: Var<'t>, w: LossWeights) -> Result<Var<'t>> {
    point.scale(w.point).add(sdf.scale(w.sdf))
}

pub fn loss_l1<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    Ok(a.sub(b)?.abs().mean())
}

/// Normalized 1D Gaussian of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Window length used for an `h × w` image: 11, or the largest odd size that
/// fits when the image is smaller.
pub fn ssim_window(h: usize, w: usize) -> usize {
    let m = h.min(w).min(SSIM_WINDOW);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Separable "valid" filtering of `[C, H, W]` by `kernel` along both axes,
/// producing `[C, H − k + 1, W − k + 1]`.
pub fn blur_valid<'t>(x: Var<'t>, kernel: &[f64]) -> Result<Var<'t>> {
    let (c, h, w) = match x.shape().as_slice() {
        [c, h, w] => (*c, *h, *w),
        s => return shape_err(format!("blur: expected [C, H, W], got {s:?}")),
    };
    let k = kernel.len();
    if k == 0 || k > h || k > w {
        return shape_err(format!("blur: kernel {k} does not fit {h}×{w}"));
    }
    let (oh, ow) = (h - k + 1, w - k + 1);
    let v = x.value();
    let mut out = vec![0.0; c * oh * ow];
    let mut tmp = vec![0.0; h * ow];
    for ch in 0..c {
        let plane = &v[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for xo in 0..ow {
                tmp[y * ow + xo] = (0..k).map(|i| kernel[i] * plane[y * w + xo + i]).sum();
            }
        }
        for yo in 0..oh {
            for xo in 0..ow {
                out[(ch * oh + yo) * ow + xo] =
                    (0..k).map(|i| kernel[i] * tmp[(yo + i) * ow + xo]).sum();
            }
        }
    }
    let kernel = kernel.to_vec();
    let id = x.id();
    Ok(x.tape().op(&[x], vec![c, oh, ow], out, move |g, s| {
        if let Some(dx) = s.get(id) {
            let mut tmp = vec![0.0; h * ow];
            for ch in 0..c {
                tmp.iter_mut().for_each(|t| *t = 0.0);
                for yo in 0..oh {
                    for xo in 0..ow {
                        let gv = g[(ch * oh + yo) * ow + xo];
                        for i in 0..k {
                            tmp[(yo + i) * ow + xo] += kernel[i] * gv;
                        }
                    }
                }
                let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
                for y in 0..h {
                    for xo in 0..ow {
                        let tv = tmp[y * ow + xo];
                        for i in 0..k {
                            plane[y * w + xo + i] += kernel[i] * tv;
                        }
                    }
                }
            }
        }
    }))
}

/// Mean SSIM of two `[C, H, W]` images in `[0, 1]`.
pub fn ssim<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let shape = a.shape();
    if shape != b.shape() || shape.len() != 3 {
        return shape_err(format!("ssim: shapes {:?} and {:?}", shape, b.shape()));
    }
    let kernel = gaussian_kernel(ssim_window(shape[1], shape[2]), SSIM_SIGMA);
    let mu_a = blur_valid(a, &kernel)?;
    let mu_b = blur_valid(b, &kernel)?;
    let mu_aa = mu_a.square();
    let mu_bb = mu_b.square();
    let mu_ab = mu_a.mul(mu_b)?;
    let var_a = blur_valid(a.square(), &kernel)?.sub(mu_aa)?;
    let var_b = blur_valid(b.square(), &kernel)?.sub(mu_bb)?;
    let cov = blur_valid(a.mul(b)?, &kernel)?.sub(mu_ab)?;
    let num = mu_ab
        .scale(2.0)
        .add_scalar(SSIM_C1)
        .mul(cov.scale(2.0).add_scalar(SSIM_C2))?;
    let den = mu_aa
        .add(mu_bb)?
        .add_scalar(SSIM_C1)
        .mul(var_a.add(var_b)?.add_scalar(SSIM_C2))?;
    Ok(num.div(den)?.mean())
}

/// `1 − SSIM(a, b)`.
pub fn loss_ssim<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    Ok(ssim(a, b)?.neg().add_scalar(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_loss_cases() {
        let tape = Tape::new();
        let a = tape.constant(&[1, 3], vec![1.0, 0.0, 0.0]);
        let z = tape.constant(&[1, 3], vec![0.0; 3]);
        assert_eq!(loss_point(a, z).unwrap().item(), 1.0);
        assert_eq!(loss_point(a, a).unwrap().item(), 0.0);
        let f = tape.constant(&[1, 3], vec![0.0, 2.0, 0.0]);
        assert_eq!(loss_flow(f, z).unwrap().item(), 4.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: Vec<f64> = (0..150).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..150).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut want = 0.0;
        for i in 0..50 {
            let mut d2 = 0.0;
            for a in 0..3 {
                d2 += (p[3 * i + a] - q[3 * i + a]).powi(2);
            }
            want += d2;
        }
        want /= 50.0;
        let got = loss_point(tape.constant(&[50, 3], p), tape.constant(&[50, 3], q))
            .unwrap()
            .item();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_linear() {
        let tape = Tape::new();
        let p = tape.scalar(0.37);
        let s = tape.scalar(2.5);
        let t = total_loss(p, s, LossWeights::default()).unwrap().item();
        assert_eq!(t, 1.0 * 0.37 + 0.01 * 2.5);
    }

    #[test]
    fn l1_constant_offset() {
        let tape = Tape::new();
        let a = tape.constant(&[3, 4, 4], vec![0.2; 48]);
        let b = tape.constant(&[3, 4, 4], vec![0.3; 48]);
        assert!((loss_l1(a, b).unwrap().item() - 0.1).abs() < 1e-15);
        assert_eq!(loss_l1(a, a).unwrap().item(), 0.0);
    }

    #[test]
    fn ssim_identity_and_window() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..3 * 16 * 16).map(|_| rng.gen()).collect();
        let a = tape.constant(&[3, 16, 16], data);
        assert!(loss_ssim(a, a).unwrap().item().abs() < 1e-12);
        assert_eq!(ssim_window(8, 8), 7);
        assert_eq!(ssim_window(64, 40), 11);
        assert!((gaussian_kernel(11, 1.5).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
