//! Sequential network over batched time windows.
//!
//! Activations are row-major matrices with one row per (time step, batch
//! element), ordered time-major: row `t * batch + b`. Convolutional layers
//! see each row as an `h x w x c` volume; the first flat layer after a
//! convolution reads the same memory as a flattened vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{ConvGeom, Unfolded};
use super::lstm::cell_update;
use super::{NnError, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d { kernel: (usize, usize), filters: usize },
    Dense { units: usize },
    Lstm { units: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Only meaningful for convolutions.
    pub stride: (usize, usize),
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(kernel: (usize, usize), stride: (usize, usize), filters: usize) -> Self {
        Self {
            kind: LayerKind::Conv2d { kernel, filters },
            stride,
            activation: Activation::Relu,
        }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense { units },
            stride: (1, 1),
            activation,
        }
    }

    pub fn lstm(units: usize) -> Self {
        Self {
            kind: LayerKind::Lstm { units },
            stride: (1, 1),
            activation: Activation::Identity,
        }
    }
}

/// Layer stack plus where (if anywhere) the per-step auxiliary vector is
/// concatenated onto a layer's input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: (usize, usize, usize),
    pub aux_dim: usize,
    pub aux_layer: Option<usize>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Conv/dense: U(+-sqrt(6 / fan_in)), zero bias. LSTM: U(+-1/sqrt(units)),
    /// forget-gate bias 1, other biases zero.
    HeUniformLstmForgetOne,
}

/// Owned weights of one layer. `input_dim` is input channels for a
/// convolution and input features (auxiliary columns included) otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub kind: LayerKind,
    pub input_dim: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T> LayerParams<T> {
    pub(crate) fn check_lengths(&self, weights: usize, biases: usize) -> Result<(), NnError> {
        if self.weights.len() != weights || self.biases.len() != biases {
            return Err(NnError::Shape(format!(
                "{:?} expects {weights} weights and {biases} biases, has {} and {}",
                self.kind,
                self.weights.len(),
                self.biases.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Planned {
    spec: LayerSpec,
    conv: Option<ConvGeom>,
    /// Flat input width including auxiliary columns (volume size for conv).
    input_dim: usize,
    /// Width contributed by the previous layer (or the raw input).
    upstream_dim: usize,
    aux: bool,
    output_dim: usize,
    weight_offset: usize,
    weight_len: usize,
    bias_len: usize,
}

impl Planned {
    fn bias_offset(&self) -> usize {
        self.weight_offset + self.weight_len
    }

    fn param_range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.bias_offset() + self.bias_len
    }

    /// Channel count for conv, feature count otherwise.
    fn declared_input(&self) -> usize {
        match self.conv {
            Some(g) => g.in_c,
            None => self.input_dim,
        }
    }
}

fn plan(arch: &Architecture) -> Result<(Vec<Planned>, usize), NnError> {
    if arch.layers.is_empty() {
        return Err(NnError::Architecture("no layers".into()));
    }
    if let Some(i) = arch.aux_layer {
        if i >= arch.layers.len() {
            return Err(NnError::Architecture(format!("aux layer {i} out of range")));
        }
        if matches!(arch.layers[i].kind, LayerKind::Conv2d { .. }) {
            return Err(NnError::Architecture("aux input cannot feed a conv layer".into()));
        }
    } else if arch.aux_dim != 0 {
        return Err(NnError::Architecture("aux_dim set without an aux layer".into()));
    }
    let mut volume = Some(arch.input);
    let mut flat = arch.input.0 * arch.input.1 * arch.input.2;
    let mut offset = 0;
    let mut out = Vec::with_capacity(arch.layers.len());
    for (i, spec) in arch.layers.iter().enumerate() {
        let aux = arch.aux_layer == Some(i);
        let upstream_dim = flat;
        let input_dim = flat + if aux { arch.aux_dim } else { 0 };
        let (conv, output_dim, weight_len, bias_len) = match spec.kind {
            LayerKind::Conv2d { kernel, filters } => {
                let Some(vol) = volume else {
                    return Err(NnError::Architecture(format!(
                        "conv layer {i} follows a flat layer"
                    )));
                };
                let g = ConvGeom::new(vol, kernel, spec.stride, filters)?;
                volume = Some((g.out_h, g.out_w, filters));
                (Some(g), g.out_len(), g.weight_len(), filters)
            }
            LayerKind::Dense { units } => {
                volume = None;
                (None, units, input_dim * units, units)
            }
            LayerKind::Lstm { units } => {
                if spec.activation != Activation::Identity {
                    return Err(NnError::Architecture(format!(
                        "lstm layer {i} cannot take an output activation"
                    )));
                }
                volume = None;
                (None, units, (input_dim + units) * 4 * units, 4 * units)
            }
        };
        if output_dim == 0 {
            return Err(NnError::Architecture(format!("layer {i} has zero width")));
        }
        out.push(Planned {
            spec: *spec,
            conv,
            input_dim,
            upstream_dim,
            aux,
            output_dim,
            weight_offset: offset,
            weight_len,
            bias_len,
        });
        offset += weight_len + bias_len;
        flat = output_dim;
    }
    Ok((out, offset))
}

/// Hidden `(h, c)` per LSTM layer, each `batch x units`, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T> {
    pub batch: usize,
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> RecurrentState<T> {
    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|(h, c)| h.iter().chain(c).all(|v| *v == T::zero()))
    }
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv {
        col: Unfolded<T>,
        out: Vec<T>,
    },
    Dense {
        input: Vec<T>,
        out: Vec<T>,
    },
    Lstm {
        concat: Vec<T>,
        gates: Vec<T>,
        c_prev: Vec<T>,
        tanh_c: Vec<T>,
        out: Vec<T>,
        final_c: Vec<T>,
    },
}

/// Activations recorded by [`Network::forward`] for one batch of windows.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    batch: usize,
    steps: usize,
    param_count: usize,
    caches: Vec<LayerCache<T>>,
}

impl<T: Real> Tape<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Network output, `steps * batch` rows.
    pub fn output(&self) -> &[T] {
        match self.caches.last().expect("tape has at least one layer") {
            LayerCache::Conv { out, .. }
            | LayerCache::Dense { out, .. }
            | LayerCache::Lstm { out, .. } => out,
        }
    }

    /// Hidden state after the last recorded step.
    pub fn final_state(&self) -> RecurrentState<T> {
        let layers = self
            .caches
            .iter()
            .filter_map(|c| match c {
                LayerCache::Lstm { out, final_c, .. } => {
                    let units = final_c.len() / self.batch;
                    let h = out[out.len() - self.batch * units..].to_vec();
                    Some((h, final_c.clone()))
                }
                _ => None,
            })
            .collect();
        RecurrentState {
            batch: self.batch,
            layers,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    arch: Architecture,
    plan: Vec<Planned>,
    params: Vec<T>,
}

impl<T: Real> Network<T> {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Result<Self, NnError> {
        let (plan, count) = plan(&arch)?;
        Ok(Self {
            arch,
            plan,
            params: vec![T::zero(); count],
        })
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeros(arch)?;
        for p in &net.plan {
            let w = &mut net.params[p.weight_offset..p.weight_offset + p.weight_len];
            match p.spec.kind {
                LayerKind::Conv2d { .. } | LayerKind::Dense { .. } => {
                    let fan_in = match p.conv {
                        Some(g) => g.patch_len(),
                        None => p.input_dim,
                    };
                    let limit = (6.0 / fan_in as f64).sqrt();
                    for v in w.iter_mut() {
                        *v = T::lit(rng.random_range(-limit..limit));
                    }
                }
                LayerKind::Lstm { units } => {
                    let limit = 1.0 / (units as f64).sqrt();
                    for v in w.iter_mut() {
                        *v = T::lit(rng.random_range(-limit..limit));
                    }
                    let b = p.bias_offset();
                    for v in &mut net.params[b + units..b + 2 * units] {
                        *v = T::one();
                    }
                }
            }
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self, NnError> {
        let mut net = Self::zeros(arch)?;
        if params.len() != net.params.len() {
            return Err(NnError::Shape(format!(
                "architecture needs {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            plan: self.plan.clone(),
            params: self.params.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_layers(&self) -> usize {
        self.plan.len()
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.arch.input;
        h * w * c
    }

    pub fn output_dim(&self) -> usize {
        self.plan.last().map_or(0, |p| p.output_dim)
    }

    /// Output width of every layer, in order.
    pub fn layer_output_dims(&self) -> Vec<usize> {
        self.plan.iter().map(|p| p.output_dim).collect()
    }

    /// Output volume `(h, w, c)` of a conv layer.
    pub fn conv_output_shape(&self, layer: usize) -> Option<(usize, usize, usize)> {
        self.plan
            .get(layer)
            .and_then(|p| p.conv)
            .map(|g| (g.out_h, g.out_w, g.filters))
    }

    /// Flat-vector parameter range owned by `layer`.
    pub fn layer_param_range(&self, layer: usize) -> std::ops::Range<usize> {
        self.plan[layer].param_range()
    }

    pub fn layer_params(&self, layer: usize) -> LayerParams<T> {
        let p = &self.plan[layer];
        LayerParams {
            kind: p.spec.kind,
            input_dim: p.declared_input(),
            weights: self.params[p.weight_offset..p.bias_offset()].to_vec(),
            biases: self.params[p.bias_offset()..p.bias_offset() + p.bias_len].to_vec(),
        }
    }

    pub fn set_layer_params(&mut self, layer: usize, values: &LayerParams<T>) -> Result<(), NnError> {
        let p = &self.plan[layer];
        if values.kind != p.spec.kind || values.input_dim != p.declared_input() {
            return Err(NnError::Shape(format!(
                "layer {layer} is {:?} over {} inputs",
                p.spec.kind,
                p.declared_input()
            )));
        }
        values.check_lengths(p.weight_len, p.bias_len)?;
        let (w, b) = (p.weight_offset, p.bias_offset());
        self.params[w..b].copy_from_slice(&values.weights);
        self.params[b..b + p.bias_len].copy_from_slice(&values.biases);
        Ok(())
    }

    pub fn zero_state(&self, batch: usize) -> RecurrentState<T> {
        let layers = self
            .plan
            .iter()
            .filter_map(|p| match p.spec.kind {
                LayerKind::Lstm { units } => {
                    Some((vec![T::zero(); batch * units], vec![T::zero(); batch * units]))
                }
                _ => None,
            })
            .collect();
        RecurrentState { batch, layers }
    }

    /// Which rectified units are active in `tape`, layer by layer. Two
    /// tapes with different patterns straddle a ReLU kink.
    pub fn relu_pattern(&self, tape: &Tape<T>) -> Vec<bool> {
        let mut mask = Vec::new();
        for (p, cache) in self.plan.iter().zip(&tape.caches) {
            if p.spec.activation != Activation::Relu {
                continue;
            }
            if let LayerCache::Conv { out, .. } | LayerCache::Dense { out, .. } = cache {
                mask.extend(out.iter().map(|v| *v > T::zero()));
            }
        }
        mask
    }

    /// Runs `batch` windows of `steps` time steps.
    ///
    /// `input` holds `steps * batch` volumes and `aux` holds `steps * batch`
    /// auxiliary vectors, both time-major. `initial` defaults to zeros.
    pub fn forward(
        &self,
        input: &[T],
        aux: &[T],
        batch: usize,
        steps: usize,
        initial: Option<&RecurrentState<T>>,
    ) -> Result<Tape<T>, NnError> {
        let rows = batch * steps;
        if rows == 0 {
            return Err(NnError::Shape("empty batch or window".into()));
        }
        if input.len() != rows * self.input_len() {
            return Err(NnError::Shape(format!(
                "input has {} values, expected {rows} x {}",
                input.len(),
                self.input_len()
            )));
        }
        if aux.len() != rows * self.arch.aux_dim {
            return Err(NnError::Shape(format!(
                "aux has {} values, expected {rows} x {}",
                aux.len(),
                self.arch.aux_dim
            )));
        }
        let zero;
        let initial = match initial {
            Some(s) => {
                let expected = self.zero_state(batch);
                let ok = s.batch == batch
                    && s.layers.len() == expected.layers.len()
                    && s.layers.iter().zip(&expected.layers).all(|(a, b)| {
                        a.0.len() == b.0.len() && a.1.len() == b.1.len()
                    });
                if !ok {
                    return Err(NnError::Shape("recurrent state does not fit network".into()));
                }
                s
            }
            None => {
                zero = self.zero_state(batch);
                &zero
            }
        };

        let mut caches: Vec<LayerCache<T>> = Vec::with_capacity(self.plan.len());
        let mut lstm_index = 0;
        for p in &self.plan {
            let upstream: &[T] = match caches.last() {
                None => input,
                Some(LayerCache::Conv { out, .. })
                | Some(LayerCache::Dense { out, .. })
                | Some(LayerCache::Lstm { out, .. }) => out,
            };
            let with_aux;
            let layer_in: &[T] = if p.aux {
                with_aux = concat_columns(upstream, p.upstream_dim, aux, self.arch.aux_dim, rows);
                &with_aux
            } else {
                upstream
            };
            let w = &self.params[p.weight_offset..p.bias_offset()];
            let b = &self.params[p.bias_offset()..p.bias_offset() + p.bias_len];
            let mut cache = match p.spec.kind {
                LayerKind::Conv2d { .. } => {
                    let g = p.conv.expect("conv layer has geometry");
                    let col = g.unfold(layer_in, rows);
                    let mut out = Vec::new();
                    g.forward_unfolded(&col, rows, w, b, &mut out);
                    LayerCache::Conv { col, out }
                }
                LayerKind::Dense { units } => {
                    let mut out = Vec::with_capacity(rows * units);
                    for _ in 0..rows {
                        out.extend_from_slice(b);
                    }
                    T::gemm(rows, p.input_dim, units, T::one(), layer_in, false, w, false, T::one(), &mut out);
                    LayerCache::Dense {
                        input: layer_in.to_vec(),
                        out,
                    }
                }
                LayerKind::Lstm { units } => {
                    let (h0, c0) = &initial.layers[lstm_index];
                    lstm_index += 1;
                    lstm_forward(layer_in, p.input_dim, units, batch, steps, w, b, h0, c0)
                }
            };
            if p.spec.activation == Activation::Relu {
                let out = match &mut cache {
                    LayerCache::Conv { out, .. }
                    | LayerCache::Dense { out, .. }
                    | LayerCache::Lstm { out, .. } => out,
                };
                for v in out.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            caches.push(cache);
        }
        Ok(Tape {
            batch,
            steps,
            param_count: self.params.len(),
            caches,
        })
    }

    /// Exact gradient of `sum(d_output * output)` with respect to every
    /// parameter, accumulated over the recorded window (BPTT).
    pub fn backward(&self, tape: &Tape<T>, d_output: &[T]) -> Result<Vec<T>, NnError> {
        if tape.param_count != self.params.len() || tape.caches.len() != self.plan.len() {
            return Err(NnError::Tape(format!(
                "tape records {} layers / {} params, network has {} / {}",
                tape.caches.len(),
                tape.param_count,
                self.plan.len(),
                self.params.len()
            )));
        }
        let rows = tape.batch * tape.steps;
        if d_output.len() != rows * self.output_dim() {
            return Err(NnError::Shape(format!(
                "output gradient has {} values, expected {rows} x {}",
                d_output.len(),
                self.output_dim()
            )));
        }
        let mut grads = vec![T::zero(); self.params.len()];
        let mut upstream = d_output.to_vec();
        for li in (0..self.plan.len()).rev() {
            let p = &self.plan[li];
            let cache = &tape.caches[li];
            let mut d = std::mem::take(&mut upstream);
            if p.spec.activation == Activation::Relu {
                let out = match cache {
                    LayerCache::Conv { out, .. }
                    | LayerCache::Dense { out, .. }
                    | LayerCache::Lstm { out, .. } => out,
                };
                for (g, o) in d.iter_mut().zip(out) {
                    if *o <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let need_input_grad = li > 0;
            let (gw, gb) = grads[p.weight_offset..p.bias_offset() + p.bias_len].split_at_mut(p.weight_len);
            let w = &self.params[p.weight_offset..p.bias_offset()];
            let d_in = match (p.spec.kind, cache) {
                (LayerKind::Conv2d { filters, .. }, LayerCache::Conv { col, .. }) => {
                    let g = p.conv.expect("conv layer has geometry");
                    let positions = rows * g.out_positions();
                    let patch = g.patch_len();
                    if col.rows(patch) != positions {
                        return Err(NnError::Tape(format!("conv layer {li} cache has wrong size")));
                    }
                    col.transpose_matmul_add(patch, &d, filters, gw);
                    column_sums_into(&d, filters, gb);
                    if need_input_grad {
                        let mut dcol = vec![T::zero(); positions * patch];
                        T::gemm(positions, filters, patch, T::one(), &d, false, w, true, T::zero(), &mut dcol);
                        let mut d_in = vec![T::zero(); rows * g.in_len()];
                        g.col2im_add(&dcol, rows, &mut d_in);
                        Some(d_in)
                    } else {
                        None
                    }
                }
                (LayerKind::Dense { units }, LayerCache::Dense { input, .. }) => {
                    if input.len() != rows * p.input_dim {
                        return Err(NnError::Tape(format!("dense layer {li} cache has wrong size")));
                    }
                    T::gemm(p.input_dim, rows, units, T::one(), input, true, &d, false, T::one(), gw);
                    column_sums_into(&d, units, gb);
                    if need_input_grad {
                        let mut d_in = vec![T::zero(); rows * p.input_dim];
                        T::gemm(rows, units, p.input_dim, T::one(), &d, false, w, true, T::zero(), &mut d_in);
                        Some(d_in)
                    } else {
                        None
                    }
                }
                (LayerKind::Lstm { units }, LayerCache::Lstm { concat, gates, c_prev, tanh_c, .. }) => {
                    if gates.len() != rows * 4 * units {
                        return Err(NnError::Tape(format!("lstm layer {li} cache has wrong size")));
                    }
                    let d_in = lstm_backward(
                        &d, p.input_dim, units, tape.batch, tape.steps, w, concat, gates, c_prev,
                        tanh_c, gw, gb,
                    );
                    need_input_grad.then_some(d_in)
                }
                _ => {
                    return Err(NnError::Tape(format!("layer {li} cache kind does not match layer")));
                }
            };
            if let Some(d_in) = d_in {
                upstream = if p.aux {
                    drop_trailing_columns(&d_in, p.input_dim, p.upstream_dim, rows)
                } else {
                    d_in
                };
            }
        }
        Ok(grads)
    }
}

fn concat_columns<T: Real>(a: &[T], a_cols: usize, b: &[T], b_cols: usize, rows: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * (a_cols + b_cols));
    for r in 0..rows {
        out.extend_from_slice(&a[r * a_cols..(r + 1) * a_cols]);
        out.extend_from_slice(&b[r * b_cols..(r + 1) * b_cols]);
    }
    out
}

fn drop_trailing_columns<T: Real>(m: &[T], cols: usize, keep: usize, rows: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * keep);
    for r in 0..rows {
        out.extend_from_slice(&m[r * cols..r * cols + keep]);
    }
    out
}

fn column_sums_into<T: Real>(m: &[T], cols: usize, out: &mut [T]) {
    for row in m.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += *v;
        }
    }
}

/// The input projection is done for the whole window in one product; only
/// the recurrent projection runs per step.
#[allow(clippy::too_many_arguments)]
fn lstm_forward<T: Real>(
    input: &[T],
    input_dim: usize,
    units: usize,
    batch: usize,
    steps: usize,
    w: &[T],
    b: &[T],
    h0: &[T],
    c0: &[T],
) -> LayerCache<T> {
    let cd = input_dim + units;
    let width = 4 * units;
    let rows = batch * steps;
    let (w_x, w_h) = w.split_at(input_dim * width);
    let mut concat = vec![T::zero(); rows * cd];
    let mut gates = Vec::with_capacity(rows * width);
    for _ in 0..rows {
        gates.extend_from_slice(b);
    }
    T::gemm(rows, input_dim, width, T::one(), input, false, w_x, false, T::one(), &mut gates);
    let mut c_prev = vec![T::zero(); rows * units];
    let mut tanh_c = vec![T::zero(); rows * units];
    let mut out = vec![T::zero(); rows * units];
    let mut c = c0.to_vec();
    let mut c_next = vec![T::zero(); batch * units];
    for t in 0..steps {
        let r0 = t * batch;
        let (done, rest) = out.split_at_mut(r0 * units);
        let h_prev: &[T] = if t == 0 { h0 } else { &done[(r0 - batch) * units..] };
        for bi in 0..batch {
            let row = &mut concat[(r0 + bi) * cd..(r0 + bi + 1) * cd];
            row[..input_dim].copy_from_slice(&input[(r0 + bi) * input_dim..(r0 + bi + 1) * input_dim]);
            row[input_dim..].copy_from_slice(&h_prev[bi * units..(bi + 1) * units]);
        }
        let g = &mut gates[r0 * width..(r0 + batch) * width];
        T::gemm(batch, units, width, T::one(), h_prev, false, w_h, false, T::one(), g);
        c_prev[r0 * units..(r0 + batch) * units].copy_from_slice(&c);
        cell_update(
            g,
            &c,
            units,
            &mut c_next,
            &mut tanh_c[r0 * units..(r0 + batch) * units],
            &mut rest[..batch * units],
        );
        std::mem::swap(&mut c, &mut c_next);
    }
    LayerCache::Lstm {
        concat,
        gates,
        c_prev,
        tanh_c,
        out,
        final_c: c,
    }
}

/// Gate gradients are collected for the whole window so the weight and
/// input gradients are each one product; only `dh` flows step by step.
#[allow(clippy::too_many_arguments)]
fn lstm_backward<T: Real>(
    d_out: &[T],
    input_dim: usize,
    units: usize,
    batch: usize,
    steps: usize,
    w: &[T],
    concat: &[T],
    gates: &[T],
    c_prev: &[T],
    tanh_c: &[T],
    gw: &mut [T],
    gb: &mut [T],
) -> Vec<T> {
    let cd = input_dim + units;
    let width = 4 * units;
    let rows = batch * steps;
    let one = T::one();
    let (w_x, w_h) = w.split_at(input_dim * width);
    let mut dh_next = vec![T::zero(); batch * units];
    let mut dc_next = vec![T::zero(); batch * units];
    let mut dz_all = vec![T::zero(); rows * width];
    for t in (0..steps).rev() {
        let r0 = t * batch;
        let dz = &mut dz_all[r0 * width..(r0 + batch) * width];
        for bi in 0..batch {
            let r = r0 + bi;
            let g = &gates[r * width..(r + 1) * width];
            let dzr = &mut dz[bi * width..(bi + 1) * width];
            for j in 0..units {
                let (i, f, cand, o) = (g[j], g[units + j], g[2 * units + j], g[3 * units + j]);
                let tc = tanh_c[r * units + j];
                let dh = d_out[r * units + j] + dh_next[bi * units + j];
                let d_o = dh * tc;
                let dc = dh * o * (one - tc * tc) + dc_next[bi * units + j];
                dc_next[bi * units + j] = dc * f;
                dzr[j] = dc * cand * i * (one - i);
                dzr[units + j] = dc * c_prev[r * units + j] * f * (one - f);
                dzr[2 * units + j] = dc * i * (one - cand * cand);
                dzr[3 * units + j] = d_o * o * (one - o);
            }
        }
        if t > 0 {
            T::gemm(batch, width, units, one, dz, false, w_h, true, T::zero(), &mut dh_next);
        }
    }
    T::gemm(cd, rows, width, one, concat, true, &dz_all, false, one, gw);
    column_sums_into(&dz_all, width, gb);
    let mut d_in = vec![T::zero(); rows * input_dim];
    T::gemm(rows, width, input_dim, one, &dz_all, false, w_x, true, T::zero(), &mut d_in);
    d_in
}
