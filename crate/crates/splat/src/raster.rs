//! Tiled, depth-sorted alpha compositing of projected splats.

use dgh_core::Image;
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::project::Splat2D;

pub const TILE: usize = 16;
pub const ALPHA_MAX: f64 = 0.999;
/// Compositing stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Splats whose 2D covariance determinant is below this are skipped.
pub const MIN_DET: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RasterStats {
    pub drawn: usize,
    /// Splats dropped for a non-invertible covariance.
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug)]
struct Prepared {
    source: usize,
    mean: [f64; 2],
    conic: [f64; 3],
    color: [f64; 3],
    opacity: f64,
}

/// Gradient with respect to one splat's color, opacity and conic
/// `(C₀₀, C₀₁, C₁₁)` of the inverse covariance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatGrad {
    pub color: [f64; 3],
    pub opacity: f64,
    pub conic: [f64; 3],
}

/// Splats sorted front to back and binned into tiles.
pub struct Raster {
    width: usize,
    height: usize,
    tiles_x: usize,
    prepared: Vec<Prepared>,
    tiles: Vec<Vec<u32>>,
    input_len: usize,
    pub stats: RasterStats,
}

struct Step {
    k: usize,
    alpha: f64,
    trans: f64,
    clipped: bool,
    d: [f64; 2],
}

impl Raster {
    pub fn new(splats: &[Splat2D], width: usize, height: usize) -> Self {
        let mut order: Vec<usize> = (0..splats.len()).collect();
        order.sort_by(|&a, &b| {
            splats[a]
                .depth
                .total_cmp(&splats[b].depth)
                .then(splats[a].index.cmp(&splats[b].index))
        });
        let tiles_x = width.div_ceil(TILE);
        let tiles_y = height.div_ceil(TILE);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        let mut prepared = Vec::with_capacity(splats.len());
        let mut stats = RasterStats::default();
        for &i in &order {
            let s = &splats[i];
            let det = s.cov.determinant();
            if !(det >= MIN_DET) || !s.mean.iter().all(|v| v.is_finite()) {
                stats.skipped += 1;
                continue;
            }
            let inv =
                Matrix2::new(s.cov[(1, 1)], -s.cov[(0, 1)], -s.cov[(1, 0)], s.cov[(0, 0)]) / det;
            let mid = 0.5 * (s.cov[(0, 0)] + s.cov[(1, 1)]);
            let lmax = mid + (mid * mid - det).max(0.0).sqrt();
            let r = 3.0 * lmax.sqrt();
            let (x0, x1) = (s.mean.x - r, s.mean.x + r);
            let (y0, y1) = (s.mean.y - r, s.mean.y + r);
            if x1 < 0.0 || y1 < 0.0 || x0 >= width as f64 || y0 >= height as f64 {
                continue;
            }
            let k = prepared.len() as u32;
            prepared.push(Prepared {
                source: i,
                mean: [s.mean.x, s.mean.y],
                conic: [inv[(0, 0)], inv[(0, 1)], inv[(1, 1)]],
                color: s.color,
                opacity: s.opacity,
            });
            let tx0 = (x0.max(0.0) as usize) / TILE;
            let tx1 = ((x1.min(width as f64 - 1.0)) as usize) / TILE;
            let ty0 = (y0.max(0.0) as usize) / TILE;
            let ty1 = ((y1.min(height as f64 - 1.0)) as usize) / TILE;
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    tiles[ty * tiles_x + tx].push(k);
                }
            }
        }
        stats.drawn = prepared.len();
        Self {
            width,
            height,
            tiles_x,
            prepared,
            tiles,
            input_len: splats.len(),
            stats,
        }
    }

    fn tile_pixels(&self, t: usize) -> impl Iterator<Item = (usize, usize)> {
        let (tx, ty) = (t % self.tiles_x, t / self.tiles_x);
        let (w, h) = (self.width, self.height);
        (ty * TILE..((ty + 1) * TILE).min(h))
            .flat_map(move |y| (tx * TILE..((tx + 1) * TILE).min(w)).map(move |x| (x, y)))
    }

    /// Front-to-back compositing of one pixel; returns the final
    /// transmittance and calls `visit` per contributing splat.
    fn trace(&self, list: &[u32], x: usize, y: usize, mut visit: impl FnMut(Step)) -> f64 {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut trans = 1.0;
        for &k in list {
            let s = &self.prepared[k as usize];
            let d = [px - s.mean[0], py - s.mean[1]];
            let power = -0.5 * (s.conic[0] * d[0] * d[0] + s.conic[2] * d[1] * d[1])
                - s.conic[1] * d[0] * d[1];
            let raw = s.opacity * power.exp();
            let clipped = raw > ALPHA_MAX;
            let alpha = raw.clamp(0.0, ALPHA_MAX);
            visit(Step {
                k: k as usize,
                alpha,
                trans,
                clipped,
                d,
            });
            trans *= 1.0 - alpha;
            if trans < MIN_TRANSMITTANCE {
                break;
            }
        }
        trans
    }

    /// Planar `[3, H, W]` colors.
    pub fn forward(&self, background: [f64; 3]) -> Vec<f64> {
        let tiles: Vec<Vec<(usize, [f64; 3])>> = (0..self.tiles.len())
            .into_par_iter()
            .map(|t| {
                let list = &self.tiles[t];
                self.tile_pixels(t)
                    .map(|(x, y)| {
                        let mut c = [0.0; 3];
                        let trans = self.trace(list, x, y, |st| {
                            let col = self.prepared[st.k].color;
                            for ch in 0..3 {
                                c[ch] += col[ch] * st.alpha * st.trans;
                            }
                        });
                        for ch in 0..3 {
                            c[ch] += trans * background[ch];
                        }
                        (y * self.width + x, c)
                    })
                    .collect()
            })
            .collect();
        let plane = self.width * self.height;
        let mut out = vec![0.0; 3 * plane];
        for tile in tiles {
            for (i, c) in tile {
                for ch in 0..3 {
                    out[ch * plane + i] = c[ch];
                }
            }
        }
        out
    }

    /// Gradients per input splat (zeros for skipped or off-screen splats)
    /// given `grad` with respect to the planar image.
    pub fn backward(&self, background: [f64; 3], grad: &[f64]) -> Vec<SplatGrad> {
        let plane = self.width * self.height;
        assert_eq!(grad.len(), 3 * plane, "image gradient size");
        let partial: Vec<Vec<(usize, SplatGrad)>> = (0..self.tiles.len())
            .into_par_iter()
            .map(|t| {
                let list = &self.tiles[t];
                let mut local: Vec<SplatGrad> = vec![SplatGrad::default(); list.len()];
                let pos: std::collections::HashMap<usize, usize> = list
                    .iter()
                    .enumerate()
                    .map(|(p, &k)| (k as usize, p))
                    .collect();
                let mut steps = Vec::new();
                for (x, y) in self.tile_pixels(t) {
                    let i = y * self.width + x;
                    let g = [grad[i], grad[plane + i], grad[2 * plane + i]];
                    if g == [0.0; 3] {
                        continue;
                    }
                    steps.clear();
                    let trans = self.trace(list, x, y, |st| steps.push(st));
                    let mut acc = [0.0; 3];
                    for ch in 0..3 {
                        acc[ch] = trans * background[ch];
                    }
                    for st in steps.iter().rev() {
                        let s = &self.prepared[st.k];
                        let lg = &mut local[pos[&st.k]];
                        let mut d_alpha = 0.0;
                        for ch in 0..3 {
                            lg.color[ch] += st.alpha * st.trans * g[ch];
                            d_alpha +=
                                g[ch] * (s.color[ch] * st.trans - acc[ch] / (1.0 - st.alpha));
                            acc[ch] += s.color[ch] * st.alpha * st.trans;
                        }
                        if !st.clipped && st.alpha > 0.0 {
                            lg.opacity += d_alpha * st.alpha / s.opacity;
                            let dp = d_alpha * st.alpha;
                            lg.conic[0] += -0.5 * dp * st.d[0] * st.d[0];
                            lg.conic[1] += -dp * st.d[0] * st.d[1];
                            lg.conic[2] += -0.5 * dp * st.d[1] * st.d[1];
                        }
                    }
                }
                list.iter().map(|&k| k as usize).zip(local).collect()
            })
            .collect();
        let mut out = vec![SplatGrad::default(); self.input_len];
        for tile in partial {
            for (k, g) in tile {
                let o = &mut out[self.prepared[k].source];
                for ch in 0..3 {
                    o.color[ch] += g.color[ch];
                    o.conic[ch] += g.conic[ch];
                }
                o.opacity += g.opacity;
            }
        }
        out
    }

    pub fn image(&self, background: [f64; 3]) -> Image {
        Image::from_planar(self.width, self.height, &self.forward(background)).expect("raster size")
    }
}

/// Renders `splats` over `background`.
pub fn rasterize(
    splats: &[Splat2D],
    background: [f64; 3],
    width: usize,
    height: usize,
) -> (Image, RasterStats) {
    let r = Raster::new(splats, width, height);
    (r.image(background), r.stats)
}

/// Inverse of a symmetric 2×2 matrix, `None` when nearly singular.
pub(crate) fn conic_of(cov: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = cov.determinant();
    (det >= MIN_DET)
        .then(|| Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det)
}

pub(crate) fn outer(u: &Vector2<f64>) -> Matrix2<f64> {
    u * u.transpose()
}
