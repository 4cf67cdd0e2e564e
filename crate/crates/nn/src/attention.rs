//! Scaled dot-product attention over patch tokens of feature volumes.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::volume_ops::{patch_broadcast, patch_pool};

/// `softmax(q kᵀ / sqrt(d)) v` for `q: [Tq, d]`, `k: [Tk, d]`, `v: [Tk, dv]`.
pub fn attend<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>) -> Result<Var<'t>> {
    let (qs, ks, vs) = (q.shape(), k.shape(), v.shape());
    if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 || qs[1] != ks[1] || ks[0] != vs[0] {
        return shape_err(format!("attend: incompatible q {qs:?}, k {ks:?}, v {vs:?}"));
    }
    let scale = 1.0 / (qs[1] as f64).sqrt();
    q.matmul(k.transpose()?)?
        .scale(scale)
        .softmax_rows()?
        .matmul(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSpec {
    pub channels: usize,
    pub key_width: usize,
    /// Edge length of the cubic voxel patch pooled into one token.
    pub patch: usize,
}

impl Default for AttentionSpec {
    fn default() -> Self {
        Self {
            channels: 8,
            key_width: 8,
            patch: 4,
        }
    }
}

/// Learned query/key/value projections applied to pooled patch tokens.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub spec: AttentionSpec,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
}

impl CrossAttention {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        spec: AttentionSpec,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (c, d) = (spec.channels, spec.key_width);
        let wq = store.uniform_fan_in(format!("{prefix}.wq"), &[c, d], c, rng);
        let wk = store.uniform_fan_in(format!("{prefix}.wk"), &[c, d], c, rng);
        let wv = store.uniform_fan_in(format!("{prefix}.wv"), &[c, c], c, rng);
        Self { spec, wq, wk, wv }
    }

    /// Tokens of `query` attend to tokens of `key`/`value`; the result is
    /// broadcast back to voxels, `[C, D, H, W]`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        query: Var<'t>,
        key: Var<'t>,
        value: Var<'t>,
    ) -> Result<Var<'t>> {
        let shape = query.shape();
        if key.shape() != shape || value.shape() != shape {
            return shape_err(format!(
                "cross attention: volumes {:?}, {:?}, {:?} differ",
                shape,
                key.shape(),
                value.shape()
            ));
        }
        if shape.len() != 4 || shape[0] != self.spec.channels {
            return shape_err(format!(
                "cross attention: expected [{}, D, H, W], got {shape:?}",
                self.spec.channels
            ));
        }
        let p = self.spec.patch;
        let q = patch_pool(query, p)?.matmul(tape.param(store, self.wq))?;
        let k = patch_pool(key, p)?.matmul(tape.param(store, self.wk))?;
        let v = patch_pool(value, p)?.matmul(tape.param(store, self.wv))?;
        patch_broadcast(attend(q, k, v)?, [shape[1], shape[2], shape[3]], p)
    }
}
