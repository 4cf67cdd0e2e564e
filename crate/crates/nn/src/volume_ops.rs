//! Tape operations on channel-planar volumes shaped `[C, D, H, W]`
//! (D along z, W along x, x fastest) and on point batches.

use std::rc::Rc;

use dgh_core::volume::GridSpec;
use dgh_core::Point3;
use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::tape::{add_into, Var};

fn dims4(v: &Var<'_>, name: &str) -> Result<[usize; 4]> {
    match v.shape().as_slice() {
        [c, d, h, w] => Ok([*c, *d, *h, *w]),
        s => shape_err(format!("{name}: expected [C, D, H, W], got {s:?}")),
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    inp: [usize; 3],
    out: [usize; 3],
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn in_plane(&self) -> usize {
        self.inp.iter().product()
    }

    fn out_plane(&self) -> usize {
        self.out.iter().product()
    }

    /// Calls `f(out_offset, in_offset, len)` for every contiguous output row
    /// segment touched by kernel tap `(kz, ky, kx)`. Input elements advance by
    /// `stride` per output element.
    #[inline]
    fn spans(&self, kz: usize, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize)) {
        let [d, h, w] = self.inp;
        let [od, oh, ow] = self.out;
        let (s, p) = (self.stride as i64, self.pad as i64);
        let lo = |k: usize| -> i64 { (p - k as i64 + s - 1).div_euclid(s).max(0) };
        let hi = |k: usize, n: usize, on: usize| -> i64 {
            ((n as i64 - 1 + p - k as i64).div_euclid(s) + 1).min(on as i64)
        };
        let (x0, x1) = (lo(kx), hi(kx, w, ow));
        if x1 <= x0 {
            return;
        }
        let len = (x1 - x0) as usize;
        for oz in lo(kz)..hi(kz, d, od) {
            let iz = (oz * s + kz as i64 - p) as usize;
            for oy in lo(ky)..hi(ky, h, oh) {
                let iy = (oy * s + ky as i64 - p) as usize;
                let ix = (x0 * s + kx as i64 - p) as usize;
                let o = (oz as usize * oh + oy as usize) * ow + x0 as usize;
                let i = (iz * h + iy) * w + ix;
                f(o, i, len);
            }
        }
    }
}

/// 3D convolution with cubic kernel `k`, zero padding `pad`, stride `stride`.
/// `weight` is `[Cout, Cin, k, k, k]`, `bias` is `[Cout]`.
pub fn conv3d<'t>(
    input: Var<'t>,
    weight: Var<'t>,
    bias: Var<'t>,
    stride: usize,
    pad: usize,
) -> Result<Var<'t>> {
    let [cin, d, h, w] = dims4(&input, "conv3d")?;
    let wshape = weight.shape();
    let (cout, k) = match wshape.as_slice() {
        [co, ci, k1, k2, k3] if *ci == cin && k1 == k2 && k2 == k3 => (*co, *k1),
        s => {
            return shape_err(format!(
                "conv3d: weight {s:?} incompatible with {cin} input channels"
            ))
        }
    };
    if bias.len() != cout {
        return shape_err(format!(
            "conv3d: bias has {} entries for {cout} channels",
            bias.len()
        ));
    }
    let out_dim = |n: usize| -> Result<usize> {
        if n + 2 * pad < k {
            return shape_err(format!("conv3d: extent {n} too small for kernel {k}"));
        }
        Ok((n + 2 * pad - k) / stride + 1)
    };
    let geom = ConvGeom {
        inp: [d, h, w],
        out: [out_dim(d)?, out_dim(h)?, out_dim(w)?],
        stride,
        pad,
    };
    let x = input.value();
    let wt = weight.value();
    let b = bias.value();
    let (ip, op, kk) = (geom.in_plane(), geom.out_plane(), k * k * k);

    let planes: Vec<Vec<f64>> = {
        let (x, wt, b): (&[f64], &[f64], &[f64]) = (&x, &wt, &b);
        (0..cout)
            .into_par_iter()
            .map(|co| {
                let mut out = vec![b[co]; op];
                for ci in 0..cin {
                    let xin = &x[ci * ip..(ci + 1) * ip];
                    for kz in 0..k {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wv = wt[((co * cin + ci) * k + kz) * k * k + ky * k + kx];
                                if wv == 0.0 {
                                    continue;
                                }
                                geom.spans(kz, ky, kx, |o, i, len| {
                                    let orow = &mut out[o..o + len];
                                    if stride == 1 {
                                        for (ov, iv) in orow.iter_mut().zip(&xin[i..i + len]) {
                                            *ov += wv * iv;
                                        }
                                    } else {
                                        for (j, ov) in orow.iter_mut().enumerate() {
                                            *ov += wv * xin[i + j * stride];
                                        }
                                    }
                                });
                            }
                        }
                    }
                }
                out
            })
            .collect()
    };
    let out: Vec<f64> = planes.concat();
    let (ii, iw, ib) = (input.id(), weight.id(), bias.id());
    let shape = vec![cout, geom.out[0], geom.out[1], geom.out[2]];
    Ok(input
        .tape()
        .op(&[input, weight, bias], shape, out, move |g, s| {
            if let Some(db) = s.get(ib) {
                for co in 0..cout {
                    db[co] += g[co * op..(co + 1) * op].iter().sum::<f64>();
                }
            }
            let (x, wt): (&[f64], &[f64]) = (&x, &wt);
            if let Some(dw) = s.get(iw) {
                let rows: Vec<Vec<f64>> = (0..cout)
                    .into_par_iter()
                    .map(|co| {
                        let gout = &g[co * op..(co + 1) * op];
                        let mut acc = vec![0.0; cin * kk];
                        for ci in 0..cin {
                            let xin = &x[ci * ip..(ci + 1) * ip];
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let mut sum = 0.0;
                                        geom.spans(kz, ky, kx, |o, i, len| {
                                            if stride == 1 {
                                                for (gv, iv) in
                                                    gout[o..o + len].iter().zip(&xin[i..i + len])
                                                {
                                                    sum += gv * iv;
                                                }
                                            } else {
                                                for j in 0..len {
                                                    sum += gout[o + j] * xin[i + j * stride];
                                                }
                                            }
                                        });
                                        acc[ci * kk + (kz * k + ky) * k + kx] = sum;
                                    }
                                }
                            }
                        }
                        acc
                    })
                    .collect();
                for (co, row) in rows.iter().enumerate() {
                    add_into(&mut dw[co * cin * kk..(co + 1) * cin * kk], row);
                }
            }
            if let Some(dx) = s.get(ii) {
                let planes: Vec<Vec<f64>> = (0..cin)
                    .into_par_iter()
                    .map(|ci| {
                        let mut acc = vec![0.0; ip];
                        for co in 0..cout {
                            let gout = &g[co * op..(co + 1) * op];
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let wv =
                                            wt[((co * cin + ci) * k + kz) * k * k + ky * k + kx];
                                        if wv == 0.0 {
                                            continue;
                                        }
                                        geom.spans(kz, ky, kx, |o, i, len| {
                                            if stride == 1 {
                                                for (av, gv) in acc[i..i + len]
                                                    .iter_mut()
                                                    .zip(&gout[o..o + len])
                                                {
                                                    *av += wv * gv;
                                                }
                                            } else {
                                                for j in 0..len {
                                                    acc[i + j * stride] += wv * gout[o + j];
                                                }
                                            }
                                        });
                                    }
                                }
                            }
                        }
                        acc
                    })
                    .collect();
                for (ci, plane) in planes.iter().enumerate() {
                    add_into(&mut dx[ci * ip..(ci + 1) * ip], plane);
                }
            }
        }))
}

/// Transposed convolution with kernel 2 and stride 2 (exact 2x upsampling).
/// `weight` is `[Cin, Cout, 2, 2, 2]`.
pub fn conv_transpose3d_2x<'t>(input: Var<'t>, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let [cin, d, h, w] = dims4(&input, "conv_transpose3d")?;
    let cout = match weight.shape().as_slice() {
        [ci, co, 2, 2, 2] if *ci == cin => *co,
        s => {
            return shape_err(format!(
                "conv_transpose3d: weight {s:?} incompatible with {cin} channels"
            ))
        }
    };
    if bias.len() != cout {
        return shape_err("conv_transpose3d: bias length mismatch");
    }
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let (ip, op) = (d * h * w, od * oh * ow);
    let x = input.value();
    let wt = weight.value();
    let b = bias.value();
    let widx = move |ci: usize, co: usize, a: usize| (ci * cout + co) * 8 + a;
    let planes: Vec<Vec<f64>> = {
        let (x, wt, b): (&[f64], &[f64], &[f64]) = (&x, &wt, &b);
        (0..cout)
            .into_par_iter()
            .map(|co| {
                let mut out = vec![b[co]; op];
                for ci in 0..cin {
                    let xin = &x[ci * ip..(ci + 1) * ip];
                    for z in 0..d {
                        for y in 0..h {
                            for a in 0..8 {
                                let (az, ay, ax) = (a >> 2, (a >> 1) & 1, a & 1);
                                let wv = wt[widx(ci, co, a)];
                                let orow = ((2 * z + az) * oh + 2 * y + ay) * ow + ax;
                                let irow = (z * h + y) * w;
                                for xx in 0..w {
                                    out[orow + 2 * xx] += wv * xin[irow + xx];
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect()
    };
    let (ii, iw, ib) = (input.id(), weight.id(), bias.id());
    Ok(input.tape().op(
        &[input, weight, bias],
        vec![cout, od, oh, ow],
        planes.concat(),
        move |g, s| {
            if let Some(db) = s.get(ib) {
                for co in 0..cout {
                    db[co] += g[co * op..(co + 1) * op].iter().sum::<f64>();
                }
            }
            if let Some(dw) = s.get(iw) {
                for ci in 0..cin {
                    let xin = &x[ci * ip..(ci + 1) * ip];
                    for co in 0..cout {
                        let gout = &g[co * op..(co + 1) * op];
                        for a in 0..8 {
                            let (az, ay, ax) = (a >> 2, (a >> 1) & 1, a & 1);
                            let mut sum = 0.0;
                            for z in 0..d {
                                for y in 0..h {
                                    let orow = ((2 * z + az) * oh + 2 * y + ay) * ow + ax;
                                    let irow = (z * h + y) * w;
                                    for xx in 0..w {
                                        sum += gout[orow + 2 * xx] * xin[irow + xx];
                                    }
                                }
                            }
                            dw[widx(ci, co, a)] += sum;
                        }
                    }
                }
            }
            if let Some(dx) = s.get(ii) {
                for ci in 0..cin {
                    for co in 0..cout {
                        let gout = &g[co * op..(co + 1) * op];
                        for a in 0..8 {
                            let (az, ay, ax) = (a >> 2, (a >> 1) & 1, a & 1);
                            let wv = wt[widx(ci, co, a)];
                            for z in 0..d {
                                for y in 0..h {
                                    let orow = ((2 * z + az) * oh + 2 * y + ay) * ow + ax;
                                    let irow = ci * ip + (z * h + y) * w;
                                    for xx in 0..w {
                                        dx[irow + xx] += wv * gout[orow + 2 * xx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        },
    ))
}

/// Per-channel normalization to zero mean and unit variance, `(x - μ) / sqrt(σ² + eps)`.
/// An all-zero channel maps to zeros.
pub fn instance_norm<'t>(input: Var<'t>, eps: f64) -> Result<Var<'t>> {
    let shape = input.shape();
    if shape.len() < 2 {
        return shape_err(format!("instance_norm: expected [C, ...], got {shape:?}"));
    }
    let c = shape[0];
    let n = input.len() / c;
    let x = input.value();
    let mut out = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let xs = &x[ch * n..(ch + 1) * n];
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[ch] = is;
        for (o, v) in out[ch * n..(ch + 1) * n].iter_mut().zip(xs) {
            *o = (v - mean) * is;
        }
    }
    let y = Rc::new(out.clone());
    let id = input.id();
    Ok(input.tape().op(&[input], shape, out, move |g, s| {
        if let Some(dx) = s.get(id) {
            for ch in 0..c {
                let gs = &g[ch * n..(ch + 1) * n];
                let ys = &y[ch * n..(ch + 1) * n];
                let gm = gs.iter().sum::<f64>() / n as f64;
                let gy = gs.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                for i in 0..n {
                    dx[ch * n + i] += inv_std[ch] * (gs[i] - gm - ys[i] * gy);
                }
            }
        }
    }))
}

/// Trilinear samples of a `[C, D, H, W]` volume at `[N, 3]` world points,
/// returning `[N, C]`. Differentiable in both the volume and the points.
pub fn trilinear_sample<'t>(vol: Var<'t>, spec: &GridSpec, points: Var<'t>) -> Result<Var<'t>> {
    let [c, d, h, w] = dims4(&vol, "trilinear_sample")?;
    if [w, h, d] != spec.resolution {
        return shape_err(format!(
            "trilinear_sample: volume extent {:?} does not match grid {:?}",
            [w, h, d],
            spec.resolution
        ));
    }
    let n = match points.shape().as_slice() {
        [n, 3] => *n,
        s => {
            return shape_err(format!(
                "trilinear_sample: points must be [N, 3], got {s:?}"
            ))
        }
    };
    let v = vol.value();
    let p = points.value();
    let plane = d * h * w;
    let stencils: Vec<_> = (0..n)
        .map(|i| spec.stencil(&Point3::new(p[3 * i], p[3 * i + 1], p[3 * i + 2])))
        .collect();
    let mut out = vec![0.0; n * c];
    for (i, st) in stencils.iter().enumerate() {
        for ch in 0..c {
            let vp = &v[ch * plane..];
            out[i * c + ch] = (0..8).map(|k| st.weights[k] * vp[st.offsets[k]]).sum();
        }
    }
    let (iv, ip) = (vol.id(), points.id());
    Ok(vol.tape().op(&[vol, points], vec![n, c], out, move |g, s| {
        if let Some(dv) = s.get(iv) {
            for (i, st) in stencils.iter().enumerate() {
                for ch in 0..c {
                    let gv = g[i * c + ch];
                    for k in 0..8 {
                        dv[ch * plane + st.offsets[k]] += st.weights[k] * gv;
                    }
                }
            }
        }
        if let Some(dp) = s.get(ip) {
            for (i, st) in stencils.iter().enumerate() {
                for ch in 0..c {
                    let gv = g[i * c + ch];
                    let vp = &v[ch * plane..];
                    for k in 0..8 {
                        let val = vp[st.offsets[k]] * gv;
                        for a in 0..3 {
                            dp[3 * i + a] += st.dweights[k][a] * val;
                        }
                    }
                }
            }
        }
    }))
}

/// Mean over non-overlapping `patch³` blocks: `[C, D, H, W] -> [T, C]`,
/// tokens ordered z-major then y then x.
pub fn patch_pool<'t>(vol: Var<'t>, patch: usize) -> Result<Var<'t>> {
    let [c, d, h, w] = dims4(&vol, "patch_pool")?;
    if patch == 0 || d % patch != 0 || h % patch != 0 || w % patch != 0 {
        return shape_err(format!(
            "patch_pool: extent {:?} not divisible by {patch}",
            [d, h, w]
        ));
    }
    let (td, th, tw) = (d / patch, h / patch, w / patch);
    let t = td * th * tw;
    let token_of =
        move |z: usize, y: usize, x: usize| ((z / patch) * th + y / patch) * tw + x / patch;
    let v = vol.value();
    let plane = d * h * w;
    let scale = 1.0 / (patch * patch * patch) as f64;
    let mut out = vec![0.0; t * c];
    for ch in 0..c {
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    out[token_of(z, y, x) * c + ch] += v[ch * plane + (z * h + y) * w + x] * scale;
                }
            }
        }
    }
    let id = vol.id();
    Ok(vol.tape().op(&[vol], vec![t, c], out, move |g, s| {
        if let Some(dv) = s.get(id) {
            for ch in 0..c {
                for z in 0..d {
                    for y in 0..h {
                        for x in 0..w {
                            dv[ch * plane + (z * h + y) * w + x] +=
                                g[token_of(z, y, x) * c + ch] * scale;
                        }
                    }
                }
            }
        }
    }))
}

/// Inverse layout of [`patch_pool`]: every voxel takes its patch token,
/// `[T, C] -> [C, D, H, W]`.
pub fn patch_broadcast<'t>(tokens: Var<'t>, extent: [usize; 3], patch: usize) -> Result<Var<'t>> {
    let [d, h, w] = extent;
    if patch == 0 || d % patch != 0 || h % patch != 0 || w % patch != 0 {
        return shape_err(format!(
            "patch_broadcast: extent {extent:?} not divisible by {patch}"
        ));
    }
    let (th, tw) = (h / patch, w / patch);
    let t = (d / patch) * th * tw;
    let c = match tokens.shape().as_slice() {
        [tt, c] if *tt == t => *c,
        s => {
            return shape_err(format!(
                "patch_broadcast: expected [{t}, C] tokens, got {s:?}"
            ))
        }
    };
    let token_of =
        move |z: usize, y: usize, x: usize| ((z / patch) * th + y / patch) * tw + x / patch;
    let v = tokens.value();
    let plane = d * h * w;
    let mut out = vec![0.0; c * plane];
    for ch in 0..c {
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    out[ch * plane + (z * h + y) * w + x] = v[token_of(z, y, x) * c + ch];
                }
            }
        }
    }
    let id = tokens.id();
    Ok(tokens
        .tape()
        .op(&[tokens], vec![c, d, h, w], out, move |g, s| {
            if let Some(dv) = s.get(id) {
                for ch in 0..c {
                    for z in 0..d {
                        for y in 0..h {
                            for x in 0..w {
                                dv[token_of(z, y, x) * c + ch] +=
                                    g[ch * plane + (z * h + y) * w + x];
                            }
                        }
                    }
                }
            }
        }))
}

/// Row-wise positional encoding of `[N, k]` into `[N, 2 L k]`, matching
/// [`dgh_core::positional_encoding`].
pub fn encode<'t>(x: Var<'t>, frequencies: usize) -> Result<Var<'t>> {
    let (n, k) = match x.shape().as_slice() {
        [n, k] => (*n, *k),
        s => return shape_err(format!("encode: expected [N, k], got {s:?}")),
    };
    let v = x.value();
    let width = 2 * frequencies * k;
    let mut out = Vec::with_capacity(n * width);
    for i in 0..n {
        out.extend(dgh_core::positional_encoding(
            &v[i * k..(i + 1) * k],
            frequencies,
        ));
    }
    let id = x.id();
    Ok(x.tape().op(&[x], vec![n, width], out, move |g, s| {
        if let Some(dx) = s.get(id) {
            for i in 0..n {
                for f in 0..frequencies {
                    let a = (1u64 << f) as f64 * std::f64::consts::PI;
                    for j in 0..k {
                        let (sn, cs) = (a * v[i * k + j]).sin_cos();
                        let o = i * width + 2 * (f * k + j);
                        dx[i * k + j] += a * (cs * g[o] - sn * g[o + 1]);
                    }
                }
            }
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn conv_identity_kernel() {
        let tape = Tape::new();
        let data: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let x = tape.constant(&[1, 4, 4, 4], data.clone());
        let mut wt = vec![0.0; 27];
        wt[13] = 1.0;
        let w = tape.constant(&[1, 1, 3, 3, 3], wt);
        let b = tape.constant(&[1], vec![0.0]);
        let y = conv3d(x, w, b, 1, 1).unwrap();
        assert_eq!(y.shape(), vec![1, 4, 4, 4]);
        assert_eq!(*y.value(), data);
    }

    #[test]
    fn strided_conv_shapes() {
        let tape = Tape::new();
        let x = tape.constant(&[2, 8, 8, 8], vec![1.0; 1024]);
        let w = tape.constant(&[3, 2, 2, 2, 2], vec![1.0; 48]);
        let b = tape.constant(&[3], vec![0.5; 3]);
        let y = conv3d(x, w, b, 2, 0).unwrap();
        assert_eq!(y.shape(), vec![3, 4, 4, 4]);
        assert!(y.value().iter().all(|&v| v == 16.5));
    }

    #[test]
    fn upsample_shape_and_values() {
        let tape = Tape::new();
        let x = tape.constant(&[1, 2, 2, 2], (0..8).map(f64::from).collect());
        let w = tape.constant(&[1, 1, 2, 2, 2], vec![1.0; 8]);
        let b = tape.constant(&[1], vec![0.0]);
        let y = conv_transpose3d_2x(x, w, b).unwrap();
        assert_eq!(y.shape(), vec![1, 4, 4, 4]);
        let v = y.value();
        assert_eq!(v[(3 * 4 + 3) * 4 + 3], 7.0);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[(2 * 4) * 4 + 2], 5.0);
    }

    #[test]
    fn instance_norm_of_zeros_is_zero() {
        let tape = Tape::new();
        let x = tape.constant(&[2, 2, 2, 2], vec![0.0; 16]);
        let y = instance_norm(x, 1e-5).unwrap();
        assert!(y.value().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_broadcast_round_trip_on_constant_patches() {
        let tape = Tape::new();
        let mut data = vec![0.0; 2 * 64];
        for ch in 0..2 {
            for z in 0..4 {
                for y in 0..4 {
                    for x in 0..4 {
                        let tok = (z / 2) * 4 + (y / 2) * 2 + x / 2;
                        data[ch * 64 + (z * 4 + y) * 4 + x] = (tok * 10 + ch) as f64;
                    }
                }
            }
        }
        let v = tape.constant(&[2, 4, 4, 4], data.clone());
        let t = patch_pool(v, 2).unwrap();
        assert_eq!(t.shape(), vec![8, 2]);
        let back = patch_broadcast(t, [4, 4, 4], 2).unwrap();
        assert_eq!(*back.value(), data);
    }
}
