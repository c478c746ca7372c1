use std::ops::Range;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::Result;

/// Gate blocks are stacked in this order inside every LSTM weight matrix.
pub const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];
pub const FORGET_BIAS: f64 = 1.0;

/// A named tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSlot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DenseSlots {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LstmSlots {
    pub units: usize,
    pub w_input: usize,
    pub w_recurrent: usize,
    pub bias: usize,
}

/// Topological order of every trainable tensor:
/// `reducer.{weight,bias}`, then per layer `k` and direction
/// `{fwd,bwd}`: `layer{k}.{dir}.{w_input,w_recurrent,bias}`, then
/// `output.{weight,bias}`. Checkpoints store parameters in this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    tensors: Vec<TensorSlot>,
    pub(crate) reducer: Option<DenseSlots>,
    pub(crate) layers: Vec<[LstmSlots; 2]>,
    pub(crate) output: DenseSlots,
    total: usize,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let mut tensors = Vec::new();
        let mut push = |name: String, rows: usize, cols: usize| {
            let start = tensors.last().map_or(0, |t: &TensorSlot| t.range.end);
            tensors.push(TensorSlot {
                name,
                rows,
                cols,
                range: start..start + rows * cols,
            });
            tensors.len() - 1
        };

        let reducer = config.reducer_dim.map(|r| DenseSlots {
            weight: push("reducer.weight".into(), r, config.input_dim),
            bias: push("reducer.bias".into(), r, 1),
        });
        let mut in_dim = config.recurrent_input_dim();
        let mut layers = Vec::new();
        for (k, &units) in config.layer_units.iter().enumerate() {
            let mut dir = |d: &str| LstmSlots {
                units,
                w_input: push(format!("layer{k}.{d}.w_input"), 4 * units, in_dim),
                w_recurrent: push(format!("layer{k}.{d}.w_recurrent"), 4 * units, units),
                bias: push(format!("layer{k}.{d}.bias"), 4 * units, 1),
            };
            layers.push([dir("fwd"), dir("bwd")]);
            in_dim = 2 * units;
        }
        let output = DenseSlots {
            weight: push("output.weight".into(), 1, in_dim),
            bias: push("output.bias".into(), 1, 1),
        };
        let total = tensors.last().map_or(0, |t| t.range.end);
        Self {
            tensors,
            reducer,
            layers,
            output,
            total,
        }
    }

    pub fn tensors(&self) -> &[TensorSlot] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn slot(&self, name: &str) -> Option<&TensorSlot> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn matrix<'a>(&self, values: &'a [f64], idx: usize) -> ArrayView2<'a, f64> {
        let t = &self.tensors[idx];
        ArrayView2::from_shape((t.rows, t.cols), &values[t.range.clone()]).expect("layout shape")
    }

    pub(crate) fn vector<'a>(&self, values: &'a [f64], idx: usize) -> ArrayView1<'a, f64> {
        ArrayView1::from(&values[self.tensors[idx].range.clone()])
    }

    pub(crate) fn matrix_mut<'a>(&self, values: &'a mut [f64], idx: usize) -> ArrayViewMut2<'a, f64> {
        let t = &self.tensors[idx];
        ArrayViewMut2::from_shape((t.rows, t.cols), &mut values[t.range.clone()]).expect("layout shape")
    }

    pub(crate) fn vector_mut<'a>(&self, values: &'a mut [f64], idx: usize) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut values[self.tensors[idx].range.clone()])
    }
}

/// All trainable weights of one model, in [`ParamLayout`] order.
///
/// Values are kept representable as `f32` so checkpoints round-trip exactly;
/// [`ModelParams::values_mut`] bypasses that for perturbation experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ModelParams {
    pub(crate) fn from_parts(config: ModelConfig, values: Vec<f64>) -> Self {
        let layout = ParamLayout::new(&config);
        assert_eq!(layout.len(), values.len(), "parameter count does not match layout");
        Self {
            config,
            layout,
            values,
        }
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = ParamLayout::new(config).len();
        Ok(Self::from_parts(config.clone(), vec![0.0; n]))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.slot(name).map(|s| &self.values[s.range.clone()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.slot(name)?.range.clone();
        Some(&mut self.values[range])
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
    }
}

/// Gradient buffer laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layout: ParamLayout,
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layout: params.layout.clone(),
            values: vec![0.0; params.values.len()],
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.slot(name).map(|s| &self.values[s.range.clone()])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.values {
            *a *= s;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Xavier-uniform weights, zero biases except forget-gate biases at 1.
///
/// Each tensor draws from its own ChaCha stream keyed by its position in the
/// layout, so the values of one tensor do not depend on the shapes of the
/// others.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let layout = params.layout.clone();
    for (idx, slot) in layout.tensors.iter().enumerate() {
        let out = &mut params.values[slot.range.clone()];
        if slot.name.ends_with("bias") {
            if slot.name.starts_with("layer") {
                let units = slot.rows / 4;
                out[units..2 * units].fill(FORGET_BIAS);
            }
            continue;
        }
        let limit = (6.0 / (slot.rows + slot.cols) as f64).sqrt() as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(idx as u64);
        for v in out.iter_mut() {
            *v = rng.random_range(-limit..limit) as f64;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            input_dim: 5,
            reducer_dim: Some(3),
            layer_units: vec![4, 2],
            output_tanh: false,
            seed: 9,
        }
    }

    #[test]
    fn layout_order_and_shapes() {
        let layout = ParamLayout::new(&small());
        let names: Vec<_> = layout.tensors().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "reducer.weight",
                "reducer.bias",
                "layer0.fwd.w_input",
                "layer0.fwd.w_recurrent",
                "layer0.fwd.bias",
                "layer0.bwd.w_input",
                "layer0.bwd.w_recurrent",
                "layer0.bwd.bias",
                "layer1.fwd.w_input",
                "layer1.fwd.w_recurrent",
                "layer1.fwd.bias",
                "layer1.bwd.w_input",
                "layer1.bwd.w_recurrent",
                "layer1.bwd.bias",
                "output.weight",
                "output.bias",
            ]
        );
        let l1 = layout.slot("layer1.fwd.w_input").unwrap();
        assert_eq!((l1.rows, l1.cols), (8, 8));
        let out = layout.slot("output.weight").unwrap();
        assert_eq!((out.rows, out.cols), (1, 4));
    }

    #[test]
    fn default_first_layer_shape() {
        let layout = ParamLayout::new(&ModelConfig::new(48));
        let w = layout.slot("layer0.fwd.w_input").unwrap();
        assert_eq!((w.rows, w.cols), (800, 48));
        let mut with_reducer = ModelConfig::new(512);
        with_reducer.reducer_dim = Some(40);
        let w = ParamLayout::new(&with_reducer).slot("layer0.bwd.w_input").unwrap().clone();
        assert_eq!((w.rows, w.cols), (800, 40));
    }

    #[test]
    fn init_is_deterministic_with_forget_bias() {
        let a = init_params(&small()).unwrap();
        let b = init_params(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 10;
        assert_ne!(a.values(), init_params(&other).unwrap().values());

        for k in 0..2 {
            for d in ["fwd", "bwd"] {
                let bias = a.tensor(&format!("layer{k}.{d}.bias")).unwrap();
                let h = bias.len() / 4;
                assert!(bias[h..2 * h].iter().all(|&v| v == 1.0));
                assert!(bias[..h].iter().chain(&bias[2 * h..]).all(|&v| v == 0.0));
            }
        }
        assert!(a.tensor("reducer.bias").unwrap().iter().all(|&v| v == 0.0));
        let w = a.tensor("layer0.fwd.w_input").unwrap();
        let limit = (6.0f64 / (16 + 3) as f64).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(a.values().iter().all(|&v| v == v as f32 as f64));
    }
}
