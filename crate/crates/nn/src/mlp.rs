//! Fully connected networks with leaky-ReLU hidden layers and a linear head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{concat_cols, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    /// Input width followed by the output width of every layer.
    pub widths: Vec<usize>,
    #[serde(default = "default_slope")]
    pub slope: f64,
    /// `concat_input[i]` appends the network input to the input of layer `i`.
    /// Missing entries mean `false`; layer 0 ignores the flag.
    #[serde(default)]
    pub concat_input: Vec<bool>,
}

fn default_slope() -> f64 {
    0.01
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        Self {
            widths,
            slope: default_slope(),
            concat_input: Vec::new(),
        }
    }

    /// Sets the skip flag on the final layer.
    pub fn with_input_skip_on_last(mut self) -> Self {
        let layers = self.layers();
        self.concat_input.resize(layers, false);
        if layers > 1 {
            self.concat_input[layers - 1] = true;
        }
        self
    }

    pub fn layers(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    fn skips(&self, layer: usize) -> bool {
        layer > 0 && self.concat_input.get(layer).copied().unwrap_or(false)
    }

    fn fan_in(&self, layer: usize) -> usize {
        self.widths[layer] + if self.skips(layer) { self.widths[0] } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return shape_err(format!(
                "mlp widths {:?} need at least two positive entries",
                self.widths
            ));
        }
        if self.concat_input.len() > self.layers() {
            return shape_err("mlp has more skip flags than layers");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `{prefix}.l{i}.w` (`[in, out]`) and `{prefix}.l{i}.b`.
    /// Hidden layers are uniform in `±sqrt(1/fan_in)`; the final layer is zero.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        spec: MlpSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let n = spec.layers();
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let (fan_in, out) = (spec.fan_in(i), spec.widths[i + 1]);
            let w_name = format!("{prefix}.l{i}.w");
            let w = if i + 1 == n {
                store.zeros(w_name, &[fan_in, out])
            } else {
                store.uniform_fan_in(w_name, &[fan_in, out], fan_in, rng)
            };
            let b = store.zeros(format!("{prefix}.l{i}.b"), &[out]);
            layers.push((w, b));
        }
        Ok(Self { spec, layers })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        input: Var<'t>,
    ) -> Result<Var<'t>> {
        match input.shape().as_slice() {
            [_, w] if *w == self.spec.input_width() => {}
            s => {
                return shape_err(format!(
                    "mlp expects [N, {}] input, got {s:?}",
                    self.spec.input_width()
                ))
            }
        }
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            if self.spec.skips(i) {
                h = concat_cols(&[h, input])?;
            }
            h = h
                .matmul(tape.param(store, w))?
                .add_row(tape.param(store, b))?;
            if i != last {
                h = h.leaky_relu(self.spec.slope);
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_final_layer_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", MlpSpec::new(vec![4, 8, 3]), &mut rng).unwrap();
        let tape = Tape::new();
        let x = tape.constant(&[2, 4], vec![0.3, -1.0, 2.0, 0.5, 1.0, 1.0, 1.0, 1.0]);
        let y = mlp.forward(&tape, &store, x).unwrap();
        assert_eq!(y.shape(), vec![2, 3]);
        assert!(y.value().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", MlpSpec::new(vec![2, 1]), &mut rng).unwrap();
        store.get_mut(store.id("m.l0.w").unwrap()).data = vec![1.0, 1.0];
        let tape = Tape::new();
        let x = tape.constant(&[1, 2], vec![3.0, 4.0]);
        assert_eq!(mlp.forward(&tape, &store, x).unwrap().item(), 7.0);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", MlpSpec::new(vec![2, 4, 1]), &mut rng).unwrap();
        let tape = Tape::new();
        assert!(mlp
            .forward(&tape, &store, tape.constant(&[1, 3], vec![0.0; 3]))
            .is_err());
        assert!(MlpSpec::new(vec![3]).validate().is_err());
    }

    #[test]
    fn skip_widens_last_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let spec = MlpSpec::new(vec![3, 5, 2]).with_input_skip_on_last();
        Mlp::new(&mut store, "m", spec, &mut rng).unwrap();
        assert_eq!(store.get(store.id("m.l1.w").unwrap()).shape, vec![8, 2]);
    }
}
