//! Four-level 3D U-Net encoder used for pose and hair volumes.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{concat_flat, Tape, Var};
use crate::volume_ops::{conv3d, conv_transpose3d_2x, instance_norm};

pub const LEVELS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Unet3dSpec {
    pub in_channels: usize,
    /// Filters of the first block; block `i` uses `base_filters · 2^i`.
    pub base_filters: usize,
    pub out_channels: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_slope")]
    pub slope: f64,
}

fn default_eps() -> f64 {
    1e-5
}

fn default_slope() -> f64 {
    0.01
}

impl Default for Unet3dSpec {
    fn default() -> Self {
        Self {
            in_channels: 1,
            base_filters: 4,
            out_channels: 8,
            eps: default_eps(),
            slope: default_slope(),
        }
    }
}

impl Unet3dSpec {
    fn filters(&self, level: usize) -> usize {
        self.base_filters << level
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    /// `out` is the bias length; `fan_in` scales the uniform initialization.
    fn new(
        store: &mut ParamStore,
        name: String,
        shape: [usize; 5],
        fan_in: usize,
        out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.uniform_fan_in(format!("{name}.w"), &shape, fan_in, rng);
        let b = store.zeros(format!("{name}.b"), &[out]);
        Self { w, b }
    }
}

#[derive(Clone, Debug)]
pub struct Unet3d {
    pub spec: Unet3dSpec,
    enc: Vec<Conv>,
    down: Vec<Conv>,
    bottleneck: Conv,
    up: Vec<Conv>,
    dec: Vec<Conv>,
    head: Conv,
}

impl Unet3d {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        spec: Unet3dSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if spec.in_channels == 0 || spec.base_filters == 0 || spec.out_channels == 0 {
            return shape_err("unet channel counts must be positive");
        }
        let mut enc = Vec::new();
        let mut down = Vec::new();
        let mut cin = spec.in_channels;
        for l in 0..LEVELS {
            let f = spec.filters(l);
            enc.push(Conv::new(
                store,
                format!("{prefix}.enc{l}"),
                [f, cin, 3, 3, 3],
                cin * 27,
                f,
                rng,
            ));
            down.push(Conv::new(
                store,
                format!("{prefix}.down{l}"),
                [f, f, 2, 2, 2],
                f * 8,
                f,
                rng,
            ));
            cin = f;
        }
        let bottom = spec.filters(LEVELS - 1);
        let bottleneck = Conv::new(
            store,
            format!("{prefix}.mid"),
            [bottom, bottom, 3, 3, 3],
            bottom * 27,
            bottom,
            rng,
        );
        let mut up = Vec::new();
        let mut dec = Vec::new();
        let mut c = bottom;
        for l in (0..LEVELS).rev() {
            let f = spec.filters(l);
            up.push(Conv::new(
                store,
                format!("{prefix}.up{l}"),
                [c, f, 2, 2, 2],
                c * 8,
                f,
                rng,
            ));
            dec.push(Conv::new(
                store,
                format!("{prefix}.dec{l}"),
                [f, 2 * f, 3, 3, 3],
                2 * f * 27,
                f,
                rng,
            ));
            c = f;
        }
        let f0 = spec.filters(0);
        let head = Conv::new(
            store,
            format!("{prefix}.head"),
            [spec.out_channels, f0, 1, 1, 1],
            f0,
            spec.out_channels,
            rng,
        );
        Ok(Self {
            spec,
            enc,
            down,
            bottleneck,
            up,
            dec,
            head,
        })
    }

    fn block<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        conv: Conv,
    ) -> Result<Var<'t>> {
        let y = conv3d(
            x,
            tape.param(store, conv.w),
            tape.param(store, conv.b),
            1,
            1,
        )?;
        Ok(instance_norm(y, self.spec.eps)?.leaky_relu(self.spec.slope))
    }

    /// `[in_channels, D, H, W] -> [out_channels, D, H, W]`; every extent must
    /// be divisible by 16.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        input: Var<'t>,
    ) -> Result<Var<'t>> {
        let shape = input.shape();
        let div = 1 << LEVELS;
        if shape.len() != 4
            || shape[0] != self.spec.in_channels
            || shape[1..].iter().any(|&n| n == 0 || n % div != 0)
        {
            return shape_err(format!(
                "unet expects [{}, D, H, W] with extents divisible by {div}, got {shape:?}",
                self.spec.in_channels
            ));
        }
        let mut skips = Vec::with_capacity(LEVELS);
        let mut h = input;
        for l in 0..LEVELS {
            h = self.block(tape, store, h, self.enc[l])?;
            skips.push(h);
            let d = self.down[l];
            h = conv3d(h, tape.param(store, d.w), tape.param(store, d.b), 2, 0)?;
        }
        h = self.block(tape, store, h, self.bottleneck)?;
        for (i, l) in (0..LEVELS).rev().enumerate() {
            let u = self.up[i];
            h = conv_transpose3d_2x(h, tape.param(store, u.w), tape.param(store, u.b))?;
            let skip = skips[l];
            let mut s = skip.shape();
            s[0] *= 2;
            h = concat_flat(&[h, skip], s)?;
            h = self.block(tape, store, h, self.dec[i])?;
        }
        conv3d(
            h,
            tape.param(store, self.head.w),
            tape.param(store, self.head.b),
            1,
            0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn shape_contract_and_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let spec = Unet3dSpec {
            base_filters: 2,
            out_channels: 4,
            ..Unet3dSpec::default()
        };
        let net = Unet3d::new(&mut store, "u", spec, &mut rng).unwrap();
        let tape = Tape::new();
        let x = tape.constant(&[1, 32, 32, 32], vec![0.0; 32768]);
        let y = net.forward(&tape, &store, x).unwrap();
        assert_eq!(y.shape(), vec![4, 32, 32, 32]);
        assert!(y.value().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_indivisible_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let net = Unet3d::new(&mut store, "u", Unet3dSpec::default(), &mut rng).unwrap();
        let tape = Tape::new();
        let x = tape.constant(&[1, 8, 8, 8], vec![0.0; 512]);
        assert!(net.forward(&tape, &store, x).is_err());
    }
}
