use dgh_nn::loss::{gaussian_kernel, ssim, SSIM_C1, SSIM_C2};
use dgh_nn::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct per-window SSIM with a 2D Gaussian window, no separability.
fn windowed_ssim(a: &[f64], b: &[f64], c: usize, h: usize, w: usize) -> f64 {
    let k1 = gaussian_kernel(11, 1.5);
    let mut total = 0.0;
    let mut count = 0;
    for ch in 0..c {
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = k1[i] * k1[j];
                        let idx = (ch * h + y0 + i) * w + x0 + j;
                        ma += wgt * a[idx];
                        mb += wgt * b[idx];
                        saa += wgt * a[idx] * a[idx];
                        sbb += wgt * b[idx] * b[idx];
                        sab += wgt * a[idx] * b[idx];
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
    }
    total / count as f64
}

#[test]
fn separable_ssim_matches_windowed_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 3 * 32 * 32;
    let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let b: Vec<f64> = a
        .iter()
        .map(|v| (v + rng.gen_range(-0.2..0.2f64)).clamp(0.0, 1.0))
        .collect();
    let tape = Tape::new();
    let got = ssim(
        tape.constant(&[3, 32, 32], a.clone()),
        tape.constant(&[3, 32, 32], b.clone()),
    )
    .unwrap()
    .item();
    let want = windowed_ssim(&a, &b, 3, 32, 32);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    let back = ssim(
        tape.constant(&[3, 32, 32], b.clone()),
        tape.constant(&[3, 32, 32], a.clone()),
    )
    .unwrap()
    .item();
    assert!((got - back).abs() < 1e-12);
}

#[test]
fn attention_rows_are_distributions() {
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = tape.constant(&[7, 4], (0..28).map(|_| rng.gen_range(-3.0..3.0)).collect());
    let k = tape.constant(&[9, 4], (0..36).map(|_| rng.gen_range(-3.0..3.0)).collect());
    let logits = q.matmul(k.transpose().unwrap()).unwrap().scale(0.5);
    let p = logits.softmax_rows().unwrap().value();
    for r in 0..7 {
        let s: f64 = p[r * 9..(r + 1) * 9].iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
