use dgh_core::{Groom, Image, Point3};
use dgh_nn::Tape;
use rayon::prelude::*;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Nn(#[from] dgh_nn::NnError),
}

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if !a.same_size(b) {
        return Err(EvalError::Shape(format!(
            "images {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.data.is_empty() {
        return Err(EvalError::Empty("image has no pixels"));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// `10 log10(1 / MSE)` over all channels of two `[0, 1]` images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR over pixels whose mask value exceeds 0.5 (mask is read from the
/// first channel).
pub fn psnr_masked(a: &Image, b: &Image, mask: &Image) -> Result<f64> {
    same_size(a, b)?;
    same_size(a, mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.width * a.height {
        if mask.data[3 * i] > 0.5 {
            for c in 0..3 {
                let d = a.data[3 * i + c] - b.data[3 * i + c];
                sum += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return Err(EvalError::Empty("mask selects no pixels"));
    }
    Ok(psnr_from_mse(sum / n as f64))
}

/// Mean SSIM with the same Gaussian window as the training loss.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    let tape = Tape::new();
    let shape = [3, a.height, a.width];
    let va = tape.constant(&shape, a.to_planar());
    let vb = tape.constant(&shape, b.to_planar());
    Ok(dgh_nn::loss::ssim(va, vb)?.item())
}

/// Mean absolute difference over all channels.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data.len() as f64)
}

fn sq(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Mean over `from` of the squared distance to the nearest point of `to`.
fn one_sided(from: &[Point3<f64>], to: &[Point3<f64>]) -> f64 {
    let nearest: Vec<f64> = from
        .par_iter()
        .map(|p| to.iter().map(|q| sq(p, q)).fold(f64::INFINITY, f64::min))
        .collect();
    nearest.iter().sum::<f64>() / from.len() as f64
}

/// Two-sided squared Chamfer distance:
/// `mean_P min_Q ‖p−q‖² + mean_Q min_P ‖q−p‖²`.
pub fn chamfer(p: &[Point3<f64>], q: &[Point3<f64>]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(EvalError::Empty("chamfer needs two nonempty point sets"));
    }
    Ok(one_sided(p, q) + one_sided(q, p))
}

fn check_topology(a: &Groom, b: &Groom) -> Result<()> {
    if !a.same_topology(b) {
        return Err(EvalError::Shape(format!(
            "grooms {}x{} and {}x{}",
            a.strand_count(),
            a.vertices_per_strand(),
            b.strand_count(),
            b.vertices_per_strand()
        )));
    }
    Ok(())
}

/// Mean Euclidean distance between corresponding points.
pub fn l2_error(pred: &Groom, gt: &Groom) -> Result<f64> {
    check_topology(pred, gt)?;
    let n = pred.point_count();
    Ok(pred
        .points()
        .iter()
        .zip(gt.points())
        .map(|(a, b)| sq(a, b).sqrt())
        .sum::<f64>()
        / n as f64)
}

/// Per-timestep flow error `(1/N) Σ_i ‖F_i^t − F̂_i^t‖` with flows
/// `P^{t+1} − P^t` formed in both sequences; one value per frame pair.
pub fn flow_error(pred: &[Groom], gt: &[Groom]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(EvalError::Shape(format!(
            "sequences of {} and {} frames",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(EvalError::Empty("flow error needs at least two frames"));
    }
    for (a, b) in pred.iter().zip(gt) {
        check_topology(a, b)?;
        check_topology(a, &pred[0])?;
    }
    Ok(pred
        .windows(2)
        .zip(gt.windows(2))
        .map(|(p, g)| {
            let n = p[0].point_count();
            let mut sum = 0.0;
            for i in 0..n {
                let fp = p[1].points()[i] - p[0].points()[i];
                let fg = g[1].points()[i] - g[0].points()[i];
                sum += (fp - fg).norm();
            }
            sum / n as f64
        })
        .collect())
}
