//! LSTM cell. Gate blocks are laid out column-wise in the order
//! (input, forget, cell-candidate, output); the weight matrix is
//! `(input_dim + hidden) x 4*hidden` acting on `[x, h_prev]`.

use super::network::{LayerKind, LayerParams};
use super::{NnError, Real};

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Pre-activations for a batch: `gates = [x, h_prev] * W + b`.
pub(crate) fn gate_preactivations<T: Real>(
    concat: &[T],
    batch: usize,
    concat_dim: usize,
    hidden: usize,
    weights: &[T],
    biases: &[T],
    gates: &mut [T],
) {
    let width = 4 * hidden;
    for row in gates.chunks_exact_mut(width).take(batch) {
        row.copy_from_slice(biases);
    }
    T::gemm(
        batch,
        concat_dim,
        width,
        T::one(),
        concat,
        false,
        weights,
        false,
        T::one(),
        gates,
    );
}

/// Applies the gate nonlinearities in place and advances the cell.
/// `gates` holds activated `(i, f, g, o)` on return.
pub(crate) fn cell_update<T: Real>(
    gates: &mut [T],
    c_prev: &[T],
    hidden: usize,
    c_out: &mut [T],
    tanh_c_out: &mut [T],
    h_out: &mut [T],
) {
    let width = 4 * hidden;
    for (b, g) in gates.chunks_exact_mut(width).enumerate() {
        let (gi, rest) = g.split_at_mut(hidden);
        let (gf, rest) = rest.split_at_mut(hidden);
        let (gg, go) = rest.split_at_mut(hidden);
        let base = b * hidden;
        for j in 0..hidden {
            let i = sigmoid(gi[j]);
            let f = sigmoid(gf[j]);
            let cand = gg[j].tanh();
            let o = sigmoid(go[j]);
            gi[j] = i;
            gf[j] = f;
            gg[j] = cand;
            go[j] = o;
            let c = f * c_prev[base + j] + i * cand;
            let tc = c.tanh();
            c_out[base + j] = c;
            tanh_c_out[base + j] = tc;
            h_out[base + j] = o * tc;
        }
    }
}

/// One recurrence step for a single sample: returns `(h', c')`.
pub fn lstm_step<T: Real>(
    x: &[T],
    h: &[T],
    c: &[T],
    layer: &LayerParams<T>,
) -> Result<(Vec<T>, Vec<T>), NnError> {
    let LayerKind::Lstm { units } = layer.kind else {
        return Err(NnError::Shape(format!(
            "lstm_step needs an lstm layer, got {:?}",
            layer.kind
        )));
    };
    if x.len() != layer.input_dim || h.len() != units || c.len() != units {
        return Err(NnError::Shape(format!(
            "lstm expects x={}, h=c={units}; got x={}, h={}, c={}",
            layer.input_dim,
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let concat_dim = layer.input_dim + units;
    layer.check_lengths(concat_dim * 4 * units, 4 * units)?;
    let mut concat = Vec::with_capacity(concat_dim);
    concat.extend_from_slice(x);
    concat.extend_from_slice(h);
    let mut gates = vec![T::zero(); 4 * units];
    gate_preactivations(&concat, 1, concat_dim, units, &layer.weights, &layer.biases, &mut gates);
    let mut c_next = vec![T::zero(); units];
    let mut tanh_c = vec![T::zero(); units];
    let mut h_next = vec![T::zero(); units];
    cell_update(&mut gates, c, units, &mut c_next, &mut tanh_c, &mut h_next);
    Ok((h_next, c_next))
}
