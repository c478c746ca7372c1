//! Forward pass and backpropagation through time.
//!
//! Per direction the LSTM step is
//! `i,f,o = σ(·)`, `g = tanh(·)`, `c = f⊙c' + i⊙g`, `h = o⊙tanh(c)`
//! with gate pre-activations `W_in·x_t + W_rec·h' + b`. The reverse-time
//! direction reads the sequence from the end, so its "previous" step is
//! `t + 1`. Direction outputs are concatenated `[fwd | bwd]`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{Gradients, LstmSlots, ModelParams, ParamLayout};
use crate::data::{FeatureMatrix, GoldTrack, PredictionTrack};
use crate::error::{Error, Result};
use crate::metrics::{ccc_loss, ccc_loss_grad};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Four-way unrolled dot product; summation order is fixed.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Activations of one direction of one layer, indexed by time.
struct DirCache {
    /// Post-activation gates `[i | f | g | o]`, `T × 4H`.
    gates: Array2<f64>,
    cell: Array2<f64>,
    tanh_cell: Array2<f64>,
    hidden: Array2<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    dirs: [DirCache; 2],
}

struct ForwardCache {
    reduced: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    top: Array2<f64>,
    outputs: Vec<f64>,
}

fn lstm_direction(
    layout: &ParamLayout,
    values: &[f64],
    slots: &LstmSlots,
    x: ArrayView2<'_, f64>,
    reverse: bool,
) -> DirCache {
    let t_len = x.nrows();
    let h = slots.units;
    let w_in = layout.matrix(values, slots.w_input);
    let w_rec = layout.matrix(values, slots.w_recurrent);
    let w_rec = w_rec.as_slice().expect("contiguous");
    let bias = layout.vector(values, slots.bias);

    let mut gates = Array2::<f64>::zeros((t_len, 4 * h));
    general_mat_mul(1.0, &x, &w_in.t(), 0.0, &mut gates);
    gates += &bias;

    let mut cell = Array2::<f64>::zeros((t_len, h));
    let mut tanh_cell = Array2::<f64>::zeros((t_len, h));
    let mut hidden = Array2::<f64>::zeros((t_len, h));
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for step in 0..t_len {
        let t = if reverse { t_len - 1 - step } else { step };
        let mut z = gates.row_mut(t);
        let z = z.as_slice_mut().expect("contiguous");
        for (r, zr) in z.iter_mut().enumerate() {
            *zr += dot(&w_rec[r * h..(r + 1) * h], &h_prev);
        }
        for j in 0..h {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[h + j]);
            let g = z[2 * h + j].tanh();
            let o = sigmoid(z[3 * h + j]);
            z[j] = i;
            z[h + j] = f;
            z[2 * h + j] = g;
            z[3 * h + j] = o;
            let c = f * c_prev[j] + i * g;
            let tc = c.tanh();
            c_prev[j] = c;
            h_prev[j] = o * tc;
            cell[[t, j]] = c;
            tanh_cell[[t, j]] = tc;
            hidden[[t, j]] = o * tc;
        }
    }
    DirCache {
        gates,
        cell,
        tanh_cell,
        hidden,
    }
}

/// Accumulates this direction's parameter gradients into `grads` and
/// returns the gradient with respect to its input sequence.
fn lstm_direction_backward(
    layout: &ParamLayout,
    values: &[f64],
    slots: &LstmSlots,
    x: ArrayView2<'_, f64>,
    cache: &DirCache,
    d_hidden: ArrayView2<'_, f64>,
    reverse: bool,
    grads: &mut [f64],
) -> Array2<f64> {
    let t_len = x.nrows();
    let h = slots.units;
    let w_in = layout.matrix(values, slots.w_input);
    let w_rec = layout.matrix(values, slots.w_recurrent);
    let w_rec = w_rec.as_slice().expect("contiguous");

    let mut d_gates = Array2::<f64>::zeros((t_len, 4 * h));
    // Hidden state fed into each step, zero at the sequence start.
    let mut h_prev_seq = Array2::<f64>::zeros((t_len, h));
    let mut dh_rec = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for step in (0..t_len).rev() {
        let t = if reverse { t_len - 1 - step } else { step };
        let prev = match (reverse, t) {
            (false, 0) => None,
            (false, t) => Some(t - 1),
            (true, t) if t + 1 == t_len => None,
            (true, t) => Some(t + 1),
        };
        if let Some(p) = prev {
            h_prev_seq.row_mut(t).assign(&cache.hidden.row(p));
        }
        let gates = cache.gates.row(t);
        let mut dz = d_gates.row_mut(t);
        let dz = dz.as_slice_mut().expect("contiguous");
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = cache.tanh_cell[[t, j]];
            let c_prev = prev.map_or(0.0, |p| cache.cell[[p, j]]);
            let dh = d_hidden[[t, j]] + dh_rec[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dc_next[j] = dc * f;
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = d_o * o * (1.0 - o);
        }
        dh_rec.fill(0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr != 0.0 {
                axpy(dzr, &w_rec[r * h..(r + 1) * h], &mut dh_rec);
            }
        }
    }

    general_mat_mul(1.0, &d_gates.t(), &x, 1.0, &mut layout.matrix_mut(grads, slots.w_input));
    general_mat_mul(
        1.0,
        &d_gates.t(),
        &h_prev_seq,
        1.0,
        &mut layout.matrix_mut(grads, slots.w_recurrent),
    );
    layout.vector_mut(grads, slots.bias).scaled_add(1.0, &d_gates.sum_axis(Axis(0)));

    let mut d_x = Array2::<f64>::zeros(x.raw_dim());
    general_mat_mul(1.0, &d_gates, &w_in, 0.0, &mut d_x);
    d_x
}

fn check_input(params: &ModelParams, x: &ArrayView2<'_, f64>) -> Result<()> {
    let expected = params.config().input_dim;
    if x.ncols() != expected {
        return Err(Error::schema(format!(
            "features have D={} but the model expects {expected}",
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("empty feature sequence"));
    }
    Ok(())
}

fn run_forward(params: &ModelParams, x: ArrayView2<'_, f64>) -> ForwardCache {
    let layout = params.layout();
    let values = params.values();

    let reduced = layout.reducer.as_ref().map(|r| {
        let w = layout.matrix(values, r.weight);
        let b = layout.vector(values, r.bias);
        let mut a = Array2::<f64>::zeros((x.nrows(), w.nrows()));
        general_mat_mul(1.0, &x, &w.t(), 0.0, &mut a);
        a += &b;
        a.mapv_inplace(f64::tanh);
        a
    });

    let mut input = reduced.clone().unwrap_or_else(|| x.to_owned());
    let mut layers = Vec::with_capacity(layout.layers.len());
    for slots in &layout.layers {
        let fwd = lstm_direction(layout, values, &slots[0], input.view(), false);
        let bwd = lstm_direction(layout, values, &slots[1], input.view(), true);
        let out = ndarray::concatenate(Axis(1), &[fwd.hidden.view(), bwd.hidden.view()])
            .expect("same length")
            .as_standard_layout()
            .into_owned();
        layers.push(LayerCache {
            input: std::mem::replace(&mut input, out),
            dirs: [fwd, bwd],
        });
    }
    let top = input;

    let w_o = layout.vector(values, layout.output.weight);
    let b_o = values[layout.tensors()[layout.output.bias].range.start];
    let tanh_out = params.config().output_tanh;
    let outputs = top
        .rows()
        .into_iter()
        .map(|row| {
            let y = dot(row.as_slice().expect("contiguous"), w_o.as_slice().expect("contiguous")) + b_o;
            if tanh_out {
                y.tanh()
            } else {
                y
            }
        })
        .collect();
    ForwardCache {
        reduced,
        layers,
        top,
        outputs,
    }
}

/// Per-segment predictions for a raw feature matrix (`T × input_dim`).
pub fn predict(params: &ModelParams, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_input(params, &x)?;
    Ok(run_forward(params, x).outputs)
}

/// Runs the network over one conversation.
pub fn forward(params: &ModelParams, features: &FeatureMatrix) -> Result<PredictionTrack> {
    Ok(PredictionTrack {
        conversation_id: features.timeline.conversation_id.clone(),
        values: predict(params, features.rows.view())?,
        source: features.feature_set.clone(),
    })
}

/// Loss `1 − CCC(predictions, gold)` and its exact gradient with respect to
/// every parameter.
pub fn loss_and_gradients(params: &ModelParams, x: ArrayView2<'_, f64>, gold: &[f64]) -> Result<(f64, Gradients)> {
    check_input(params, &x)?;
    if x.nrows() < 2 {
        return Err(Error::invalid("backward needs at least two segments"));
    }
    if gold.len() != x.nrows() {
        return Err(Error::schema(format!(
            "gold has {} segments but features have {}",
            gold.len(),
            x.nrows()
        )));
    }
    let layout = params.layout();
    let values = params.values();
    let cache = run_forward(params, x);
    let loss = ccc_loss(&cache.outputs, gold)?;
    let mut d_out = Array1::from(ccc_loss_grad(&cache.outputs, gold)?);
    if params.config().output_tanh {
        for (d, y) in d_out.iter_mut().zip(&cache.outputs) {
            *d *= 1.0 - y * y;
        }
    }

    let mut grads = Gradients::zeros_like(params);
    let g = &mut grads.values;

    // Output neuron.
    let w_o = layout.vector(values, layout.output.weight);
    layout
        .vector_mut(g, layout.output.weight)
        .scaled_add(1.0, &d_out.view().dot(&cache.top));
    layout.vector_mut(g, layout.output.bias)[0] += d_out.sum();
    let mut d_top = Array2::<f64>::zeros(cache.top.raw_dim());
    general_mat_mul(
        1.0,
        &d_out.view().insert_axis(Axis(1)),
        &w_o.insert_axis(Axis(0)),
        0.0,
        &mut d_top,
    );

    // Recurrent stack, top to bottom.
    for (slots, layer) in layout.layers.iter().zip(&cache.layers).rev() {
        let h = slots[0].units;
        let d_f = d_top.slice(s![.., ..h]);
        let d_b = d_top.slice(s![.., h..]);
        let dx_f = lstm_direction_backward(layout, values, &slots[0], layer.input.view(), &layer.dirs[0], d_f, false, g);
        let dx_b = lstm_direction_backward(layout, values, &slots[1], layer.input.view(), &layer.dirs[1], d_b, true, g);
        d_top = dx_f + dx_b;
    }

    if let (Some(r), Some(reduced)) = (&layout.reducer, &cache.reduced) {
        let mut d_a = d_top;
        d_a.zip_mut_with(reduced, |d, y| *d *= 1.0 - y * y);
        general_mat_mul(1.0, &d_a.t(), &x, 1.0, &mut layout.matrix_mut(g, r.weight));
        layout.vector_mut(g, r.bias).scaled_add(1.0, &d_a.sum_axis(Axis(0)));
    }
    Ok((loss, grads))
}

/// Gradient of `1 − CCC` for one conversation.
pub fn backward(params: &ModelParams, features: &FeatureMatrix, gold: &GoldTrack) -> Result<(f64, Gradients)> {
    loss_and_gradients(params, features.rows.view(), &gold.values)
}
