//! Central finite-difference checks of tape gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Entry with the largest error: (label, analytic, numeric).
    pub worst: Option<(String, f64, f64)>,
}

impl GradReport {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = relative_error(analytic, numeric);
        if self.worst.is_none() || e > self.max_relative_error {
            self.max_relative_error = e;
            self.worst = Some((label(), analytic, numeric));
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error < tolerance
    }
}

/// Checks d f / d x at `probes` entries of `x`, where `f` maps a leaf holding
/// `x` to a scalar.
pub fn check_input<F>(
    shape: &[usize],
    x: &[f64],
    probes: &[usize],
    h: f64,
    f: F,
) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let analytic = {
        let tape = Tape::new();
        let leaf = tape.leaf(shape, x.to_vec());
        let out = f(&tape, leaf)?;
        let g = tape.backward(out);
        g.wrt(leaf)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; x.len()])
    };
    let eval = |xs: Vec<f64>| -> Result<f64> {
        let tape = Tape::new();
        let leaf = tape.constant(shape, xs);
        Ok(f(&tape, leaf)?.item())
    };
    let mut report = GradReport::default();
    for &i in probes {
        let mut plus = x.to_vec();
        plus[i] += h;
        let mut minus = x.to_vec();
        minus[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        report.record(|| format!("x[{i}]"), analytic[i], numeric);
    }
    Ok(report)
}

/// Checks parameter gradients of `f` at `samples` randomly chosen scalar
/// entries across the whole store.
pub fn check_params<F>(
    store: &ParamStore,
    samples: usize,
    h: f64,
    rng: &mut ChaCha8Rng,
    f: F,
) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let grads: Vec<(ParamId, Vec<f64>)> = {
        let tape = Tape::new();
        let out = f(&tape, store)?;
        tape.backward(out).params(store)
    };
    let mut entries: Vec<(ParamId, usize)> = Vec::new();
    for (id, p) in store.iter() {
        entries.extend((0..p.data.len()).map(|i| (id, i)));
    }
    let analytic_of = |id: ParamId, i: usize| -> f64 {
        grads
            .iter()
            .find(|(g, _)| *g == id)
            .map(|(_, v)| v[i])
            .unwrap_or(0.0)
    };
    let mut scratch = store.clone();
    let mut eval = |id: ParamId, i: usize, v: f64| -> Result<f64> {
        scratch.get_mut(id).data[i] = v;
        let tape = Tape::new();
        let r = f(&tape, &scratch)?.item();
        Ok(r)
    };
    let mut report = GradReport::default();
    for _ in 0..samples.min(entries.len()) {
        let (id, i) = entries[rng.gen_range(0..entries.len())];
        let x0 = store.get(id).data[i];
        let fp = eval(id, i, x0 + h)?;
        let fm = eval(id, i, x0 - h)?;
        eval(id, i, x0)?;
        let numeric = (fp - fm) / (2.0 * h);
        report.record(
            || format!("{}[{i}]", store.get(id).name),
            analytic_of(id, i),
            numeric,
        );
    }
    Ok(report)
}

/// Scalar probe `Σ r_i · y_i` with fixed pseudo-random `r`, so that
/// symmetric outputs (e.g. normalized channels summing to zero) still carry
/// gradient.
pub fn project<'t>(y: Var<'t>, rng_seed: u64) -> Result<Var<'t>> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let r: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = y.tape().constant(&y.shape(), r);
    Ok(y.mul(c)?.sum())
}

/// One named entry of [`suite`].
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradReport,
    pub tolerance: f64,
}

impl SuiteEntry {
    pub fn passes(&self) -> bool {
        self.report.passes(self.tolerance)
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn probes(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.gen_range(0..n)).collect()
}

/// Finite-difference checks of every differentiable network operation,
/// each at `count` random entries.
pub fn suite(seed: u64, count: usize) -> Result<Vec<SuiteEntry>> {
    use crate::attention::attend;
    use crate::loss::{loss_point, loss_sdf, loss_ssim};
    use crate::mlp::{Mlp, MlpSpec};
    use crate::unet::{Unet3d, Unet3dSpec};
    use crate::volume_ops::{conv3d, conv_transpose3d_2x, encode, instance_norm, trilinear_sample};
    use dgh_core::volume::GridSpec;
    use rand::SeedableRng;

    let h = DEFAULT_STEP;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name, report, tolerance| {
        out.push(SuiteEntry {
            name,
            report,
            tolerance,
        })
    };

    {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", MlpSpec::new(vec![4, 8, 3]), &mut rng)?;
        let last = store.id("m.l1.w")?;
        store.get_mut(last).data = random_vec(&mut rng, 24, -0.5, 0.5);
        let x = random_vec(&mut rng, 5 * 4, -1.0, 1.0);
        let r = check_params(&store, count, h, &mut rng, |tape, s| {
            let input = tape.constant(&[5, 4], x.clone());
            Ok(mlp.forward(tape, s, input)?.sum())
        })?;
        push("dense", r, 1e-4);
    }

    let vol = random_vec(&mut rng, 2 * 6 * 6 * 6, -1.0, 1.0);
    let w3 = random_vec(&mut rng, 3 * 2 * 27, -0.3, 0.3);
    let b3 = random_vec(&mut rng, 3, -0.1, 0.1);
    let p = probes(&mut rng, vol.len(), count);
    let r = check_input(&[2, 6, 6, 6], &vol, &p, h, |tape, x| {
        let w = tape.constant(&[3, 2, 3, 3, 3], w3.clone());
        let b = tape.constant(&[3], b3.clone());
        project(conv3d(x, w, b, 1, 1)?, 1)
    })?;
    push("conv3d input", r, 1e-4);
    let p = probes(&mut rng, w3.len(), count);
    let r = check_input(&[3, 2, 3, 3, 3], &w3, &p, h, |tape, w| {
        let x = tape.constant(&[2, 6, 6, 6], vol.clone());
        let b = tape.constant(&[3], b3.clone());
        project(conv3d(x, w, b, 1, 1)?, 2)
    })?;
    push("conv3d weight", r, 1e-4);
    let w2 = random_vec(&mut rng, 3 * 2 * 8, -0.3, 0.3);
    let p = probes(&mut rng, vol.len(), count);
    let r = check_input(&[2, 6, 6, 6], &vol, &p, h, |tape, x| {
        let w = tape.constant(&[3, 2, 2, 2, 2], w2.clone());
        let b = tape.constant(&[3], b3.clone());
        project(conv3d(x, w, b, 2, 0)?, 3)
    })?;
    push("conv3d strided", r, 1e-4);
    let wt = random_vec(&mut rng, 2 * 3 * 8, -0.3, 0.3);
    let p = probes(&mut rng, wt.len(), count);
    let r = check_input(&[2, 3, 2, 2, 2], &wt, &p, h, |tape, w| {
        let x = tape.constant(&[2, 6, 6, 6], vol.clone());
        let b = tape.constant(&[3], b3.clone());
        project(conv_transpose3d_2x(x, w, b)?, 4)
    })?;
    push("conv transpose", r, 1e-4);
    let p = probes(&mut rng, vol.len(), count);
    let r = check_input(&[2, 6, 6, 6], &vol, &p, h, |_, x| {
        project(instance_norm(x, 1e-5)?, 5)
    })?;
    push("instance norm", r, 1e-3);

    let qkv = random_vec(&mut rng, 3 * 4 + 5 * 4 + 5 * 2, -1.0, 1.0);
    let p = probes(&mut rng, qkv.len(), count);
    let r = check_input(&[qkv.len()], &qkv, &p, h, |_, x| {
        let flat = x.reshape(&[1, qkv.len()])?;
        let q = flat.slice_cols(0, 12)?.reshape(&[3, 4])?;
        let k = flat.slice_cols(12, 20)?.reshape(&[5, 4])?;
        let v = flat.slice_cols(32, 10)?.reshape(&[5, 2])?;
        project(attend(q, k, v)?, 6)
    })?;
    push("attention", r, 1e-4);

    let spec = GridSpec::new([6, 5, 4], [-0.3, -0.25, -0.2], 0.1)?;
    let field = random_vec(&mut rng, 2 * 120, -1.0, 1.0);
    // Keep points off voxel faces so the kink in the stencil is not probed.
    let mut pts = Vec::new();
    for _ in 0..6 {
        for a in 0..3 {
            let n = spec.resolution[a] - 1;
            let cell = rng.gen_range(0..n) as f64 + rng.gen_range(0.1..0.9);
            pts.push(spec.origin[a] + cell * spec.voxel_size);
        }
    }
    let p = probes(&mut rng, pts.len(), count);
    let r = check_input(&[6, 3], &pts, &p, h, |tape, x| {
        let v = tape.constant(&[2, 4, 5, 6], field.clone());
        project(trilinear_sample(v, &spec, x)?, 7)
    })?;
    push("trilinear points", r, 1e-4);
    let p = probes(&mut rng, field.len(), count);
    let r = check_input(&[2, 4, 5, 6], &field, &p, h, |tape, v| {
        let x = tape.constant(&[6, 3], pts.clone());
        project(trilinear_sample(v, &spec, x)?, 8)
    })?;
    push("trilinear volume", r, 1e-4);

    let sdf: Vec<f64> = field[..120].iter().map(|v| v - 0.2).collect();
    let p = probes(&mut rng, pts.len(), count);
    let r = check_input(&[6, 3], &pts, &p, h, |tape, x| {
        let v = tape.constant(&[1, 4, 5, 6], sdf.clone());
        loss_sdf(x, v, &spec)
    })?;
    push("sdf penalty", r, 1e-4);

    let gt = random_vec(&mut rng, 18, -1.0, 1.0);
    let p = probes(&mut rng, pts.len(), count);
    let r = check_input(&[6, 3], &pts, &p, h, |tape, x| {
        loss_point(x, tape.constant(&[6, 3], gt.clone()))
    })?;
    push("point loss", r, 1e-4);

    let enc_in = random_vec(&mut rng, 4 * 3, -1.0, 1.0);
    let p = probes(&mut rng, enc_in.len(), count);
    let r = check_input(&[4, 3], &enc_in, &p, h, |_, x| project(encode(x, 3)?, 9))?;
    push("positional encoding", r, 1e-4);

    let img_a = random_vec(&mut rng, 3 * 14 * 13, 0.0, 1.0);
    let img_b = random_vec(&mut rng, 3 * 14 * 13, 0.0, 1.0);
    let p = probes(&mut rng, img_a.len(), count);
    let r = check_input(&[3, 14, 13], &img_a, &p, h, |tape, x| {
        loss_ssim(x, tape.constant(&[3, 14, 13], img_b.clone()))
    })?;
    push("ssim", r, 1e-4);

    {
        let mut store = ParamStore::new();
        let spec = Unet3dSpec {
            in_channels: 1,
            base_filters: 1,
            out_channels: 2,
            ..Unet3dSpec::default()
        };
        let net = Unet3d::new(&mut store, "u", spec, &mut rng)?;
        for (id, _) in store.clone().iter() {
            let n = store.get(id).data.len();
            let noise = random_vec(&mut rng, n, -0.1, 0.1);
            for (d, e) in store.get_mut(id).data.iter_mut().zip(noise) {
                *d += e;
            }
        }
        let x = random_vec(&mut rng, 16 * 16 * 16, -1.0, 1.0);
        let r = check_params(&store, count, h, &mut rng, |tape, s| {
            let input = tape.constant(&[1, 16, 16, 16], x.clone());
            project(net.forward(tape, s, input)?, 10)
        })?;
        push("unet", r, 1e-3);
    }
    Ok(out)
}
