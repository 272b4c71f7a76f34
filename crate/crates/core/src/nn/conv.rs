//! Valid-padding 2-D cross-correlation via im2col + GEMM.

use super::network::{LayerKind, LayerParams};
use super::{NnError, Real, Tensor3};

/// Output extent of a valid convolution along one axis.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || kernel > input {
        return None;
    }
    Some((input - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub s_h: usize,
    pub s_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub filters: usize,
}

impl ConvGeom {
    pub fn new(
        input: (usize, usize, usize),
        kernel: (usize, usize),
        stride: (usize, usize),
        filters: usize,
    ) -> Result<Self, NnError> {
        let (in_h, in_w, in_c) = input;
        let out_h = conv_output_dim(in_h, kernel.0, stride.0);
        let out_w = conv_output_dim(in_w, kernel.1, stride.1);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) if filters > 0 && in_c > 0 => Ok(Self {
                in_h,
                in_w,
                in_c,
                k_h: kernel.0,
                k_w: kernel.1,
                s_h: stride.0,
                s_w: stride.1,
                out_h,
                out_w,
                filters,
            }),
            _ => Err(NnError::Shape(format!(
                "kernel {kernel:?} stride {stride:?} does not fit input {in_h}x{in_w}x{in_c}"
            ))),
        }
    }

    /// Length of one im2col row.
    pub fn patch_len(&self) -> usize {
        self.k_h * self.k_w * self.in_c
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn out_len(&self) -> usize {
        self.out_positions() * self.filters
    }

    pub fn weight_len(&self) -> usize {
        self.patch_len() * self.filters
    }

    /// Unfolds `frames` stacked input volumes into `frames * out_positions`
    /// rows of `patch_len` values. Row layout matches the weight layout
    /// `((ky * k_w + kx) * in_c + c, filter)`.
    pub fn im2col<T: Real>(&self, input: &[T], frames: usize, col: &mut Vec<T>) {
        let patch = self.patch_len();
        let run = self.k_w * self.in_c;
        col.clear();
        col.resize(frames * self.out_positions() * patch, T::zero());
        let mut row = 0;
        for n in 0..frames {
            let frame = &input[n * self.in_len()..(n + 1) * self.in_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let dst = &mut col[row * patch..(row + 1) * patch];
                    for ky in 0..self.k_h {
                        let y = oy * self.s_h + ky;
                        let src = (y * self.in_w + ox * self.s_w) * self.in_c;
                        dst[ky * run..(ky + 1) * run].copy_from_slice(&frame[src..src + run]);
                    }
                    row += 1;
                }
            }
        }
    }

    /// Unfolds into CSR form, keeping only non-zero patch entries. Works
    /// from the non-zero inputs outward, so cost scales with their count.
    #[cfg(test)]
    pub fn im2col_sparse<T: Real>(&self, input: &[T], frames: usize) -> Unfolded<T> {
        self.sparse_from(input, &nonzero_positions(input), frames)
    }

    fn sparse_from<T: Real>(&self, input: &[T], nonzero: &[usize], frames: usize) -> Unfolded<T> {
        let run = self.k_w * self.in_c;
        let positions = self.out_positions();
        // (row, patch index, value) for every output window touching a
        // non-zero input.
        let mut entries: Vec<(u32, u32, T)> = Vec::with_capacity(nonzero.len() * 4);
        for &i in nonzero {
            let v = input[i];
            let n = i / self.in_len();
            let rem = i % self.in_len();
            let (y, x, c) = (rem / (self.in_w * self.in_c), (rem / self.in_c) % self.in_w, rem % self.in_c);
            for oy in windows_covering(y, self.k_h, self.s_h, self.out_h) {
                for ox in windows_covering(x, self.k_w, self.s_w, self.out_w) {
                    let (ky, kx) = (y - oy * self.s_h, x - ox * self.s_w);
                    let row = n * positions + oy * self.out_w + ox;
                    entries.push((row as u32, (ky * run + kx * self.in_c + c) as u32, v));
                }
            }
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut starts = vec![0u32; frames * positions + 1];
        for e in &entries {
            starts[e.0 as usize + 1] += 1;
        }
        for r in 0..frames * positions {
            starts[r + 1] += starts[r];
        }
        Unfolded::Sparse {
            starts,
            index: entries.iter().map(|e| e.1).collect(),
            value: entries.iter().map(|e| e.2).collect(),
        }
    }

    /// Unfolds `frames` volumes, choosing the sparse form when fewer than
    /// one input value in 16 is non-zero.
    pub fn unfold<T: Real>(&self, input: &[T], frames: usize) -> Unfolded<T> {
        let nonzero = nonzero_positions(input);
        if nonzero.len() * 16 < input.len() {
            self.sparse_from(input, &nonzero, frames)
        } else {
            let mut col = Vec::new();
            self.im2col(input, frames, &mut col);
            Unfolded::Dense(col)
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatter-adds patch gradients back
    /// onto the input volumes.
    pub fn col2im_add<T: Real>(&self, dcol: &[T], frames: usize, dinput: &mut [T]) {
        let patch = self.patch_len();
        let run = self.k_w * self.in_c;
        let mut row = 0;
        for n in 0..frames {
            let frame = &mut dinput[n * self.in_len()..(n + 1) * self.in_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let src = &dcol[row * patch..(row + 1) * patch];
                    for ky in 0..self.k_h {
                        let y = oy * self.s_h + ky;
                        let dst = (y * self.in_w + ox * self.s_w) * self.in_c;
                        for (d, s) in frame[dst..dst + run]
                            .iter_mut()
                            .zip(&src[ky * run..(ky + 1) * run])
                        {
                            *d += *s;
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Forward over `frames` volumes given their unfolded input.
    pub fn forward_unfolded<T: Real>(
        &self,
        col: &Unfolded<T>,
        frames: usize,
        weights: &[T],
        bias: &[T],
        out: &mut Vec<T>,
    ) {
        let rows = frames * self.out_positions();
        out.clear();
        out.reserve(rows * self.filters);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        col.matmul_add(self.patch_len(), weights, self.filters, out);
    }
}

/// Indices of non-zero values. Scans in blocks without branching so the
/// mostly empty observation grids are skipped at memory speed.
fn nonzero_positions<T: Real>(input: &[T]) -> Vec<usize> {
    const BLOCK: usize = 32;
    let mut out = Vec::new();
    for (b, block) in input.chunks(BLOCK).enumerate() {
        if block.iter().fold(false, |any, v| any | (*v != T::zero())) {
            out.extend(
                block
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(i, _)| b * BLOCK + i),
            );
        }
    }
    out
}

/// Output indices `o` with `o * stride <= p < o * stride + kernel`.
fn windows_covering(p: usize, kernel: usize, stride: usize, out: usize) -> std::ops::Range<usize> {
    let lo = if p + 1 > kernel { (p + 1 - kernel).div_ceil(stride) } else { 0 };
    let hi = (p / stride + 1).min(out);
    lo..hi.max(lo)
}

/// Unfolded conv input: dense im2col rows or their CSR compression.
#[derive(Debug, Clone)]
pub(crate) enum Unfolded<T> {
    Dense(Vec<T>),
    Sparse {
        starts: Vec<u32>,
        index: Vec<u32>,
        value: Vec<T>,
    },
}

impl<T: Real> Unfolded<T> {
    pub fn rows(&self, patch: usize) -> usize {
        match self {
            Unfolded::Dense(col) => col.len() / patch,
            Unfolded::Sparse { starts, .. } => starts.len() - 1,
        }
    }

    /// `out += self * weights` where `out` is `rows x filters`.
    pub fn matmul_add(&self, patch: usize, weights: &[T], filters: usize, out: &mut [T]) {
        match self {
            Unfolded::Dense(col) => {
                let rows = col.len() / patch;
                T::gemm(rows, patch, filters, T::one(), col, false, weights, false, T::one(), out);
            }
            Unfolded::Sparse { starts, index, value } => {
                for (r, dst) in out.chunks_exact_mut(filters).enumerate() {
                    for k in starts[r] as usize..starts[r + 1] as usize {
                        let j = index[k] as usize;
                        let v = value[k];
                        for (o, w) in dst.iter_mut().zip(&weights[j * filters..(j + 1) * filters]) {
                            *o += v * *w;
                        }
                    }
                }
            }
        }
    }

    /// `grad += self^T * d` where `d` is `rows x filters`.
    pub fn transpose_matmul_add(&self, patch: usize, d: &[T], filters: usize, grad: &mut [T]) {
        match self {
            Unfolded::Dense(col) => {
                let rows = col.len() / patch;
                T::gemm(patch, rows, filters, T::one(), col, true, d, false, T::one(), grad);
            }
            Unfolded::Sparse { starts, index, value } => {
                for (r, src) in d.chunks_exact(filters).enumerate() {
                    for k in starts[r] as usize..starts[r + 1] as usize {
                        let j = index[k] as usize;
                        let v = value[k];
                        for (g, s) in grad[j * filters..(j + 1) * filters].iter_mut().zip(src) {
                            *g += v * *s;
                        }
                    }
                }
            }
        }
    }
}

/// Single-volume convolution: cross-correlation plus bias, no padding, no
/// activation.
pub fn conv2d_forward<T: Real>(
    input: &Tensor3<T>,
    layer: &LayerParams<T>,
    stride: (usize, usize),
) -> Result<Tensor3<T>, NnError> {
    let LayerKind::Conv2d { kernel, filters } = layer.kind else {
        return Err(NnError::Shape(format!(
            "conv2d_forward needs a conv layer, got {:?}",
            layer.kind
        )));
    };
    if layer.input_dim != input.channels() {
        return Err(NnError::Shape(format!(
            "input has {} channels but kernel expects {}",
            input.channels(),
            layer.input_dim
        )));
    }
    let geom = ConvGeom::new(input.shape(), kernel, stride, filters)?;
    layer.check_lengths(geom.weight_len(), filters)?;
    let col = geom.unfold(input.data(), 1);
    let mut out = Vec::new();
    geom.forward_unfolded(&col, 1, &layer.weights, &layer.biases, &mut out);
    Tensor3::from_vec(geom.out_h, geom.out_w, filters, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn conv_layer(k: (usize, usize), in_c: usize, filters: usize, w: Vec<f64>, b: Vec<f64>) -> LayerParams<f64> {
        LayerParams {
            kind: LayerKind::Conv2d { kernel: k, filters },
            input_dim: in_c,
            weights: w,
            biases: b,
        }
    }

    /// Direct nested-loop cross-correlation.
    fn naive_conv(input: &Tensor3<f64>, layer: &LayerParams<f64>, stride: (usize, usize)) -> Tensor3<f64> {
        let LayerKind::Conv2d { kernel, filters } = layer.kind else { unreachable!() };
        let oh = (input.height() - kernel.0) / stride.0 + 1;
        let ow = (input.width() - kernel.1) / stride.1 + 1;
        let mut out = Tensor3::zeros(oh, ow, filters);
        for oy in 0..oh {
            for ox in 0..ow {
                for f in 0..filters {
                    let mut acc = layer.biases[f];
                    for ky in 0..kernel.0 {
                        for kx in 0..kernel.1 {
                            for c in 0..input.channels() {
                                let wi = ((ky * kernel.1 + kx) * input.channels() + c) * filters + f;
                                acc += layer.weights[wi]
                                    * input.get(oy * stride.0 + ky, ox * stride.1 + kx, c);
                            }
                        }
                    }
                    out.set(oy, ox, f, acc);
                }
            }
        }
        out
    }

    #[test]
    fn table_one_first_layer_shape() {
        let input = Tensor3::<f64>::zeros(45, 30, 4);
        let layer = conv_layer((8, 6), 4, 32, vec![0.01; 8 * 6 * 4 * 32], vec![0.0; 32]);
        let out = conv2d_forward(&input, &layer, (4, 4)).unwrap();
        assert_eq!(out.shape(), (10, 7, 32));
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let input = Tensor3::<f64>::zeros(9, 7, 2);
        let layer = conv_layer((3, 2), 2, 3, vec![0.7; 3 * 2 * 2 * 3], vec![0.0; 3]);
        let out = conv2d_forward(&input, &layer, (2, 1)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_copies_input() {
        let data: Vec<f64> = (0..20).map(|i| i as f64 - 7.5).collect();
        let input = Tensor3::from_vec(4, 5, 1, data).unwrap();
        let layer = conv_layer((1, 1), 1, 1, vec![1.0], vec![0.0]);
        let out = conv2d_forward(&input, &layer, (1, 1)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn matches_nested_loop_reference() {
        let data: Vec<f64> = (0..11 * 9 * 3).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
        let input = Tensor3::from_vec(11, 9, 3, data).unwrap();
        let w: Vec<f64> = (0..4 * 3 * 3 * 5).map(|i| ((i * 104729) % 53) as f64 / 53.0 - 0.5).collect();
        let layer = conv_layer((4, 3), 3, 5, w, vec![0.1, -0.2, 0.3, 0.0, 0.05]);
        let got = conv2d_forward(&input, &layer, (3, 2)).unwrap();
        let want = naive_conv(&input, &layer, (3, 2));
        assert_eq!(got.shape(), want.shape());
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_and_dense_unfold_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = ConvGeom::new((9, 7, 3), (3, 2), (2, 1), 5).unwrap();
        let input: Vec<f64> = (0..2 * g.in_len())
            .map(|_| if rng.random::<f64>() < 0.1 { rng.random_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let w: Vec<f64> = (0..g.weight_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut col = Vec::new();
        g.im2col(&input, 2, &mut col);
        let dense = Unfolded::Dense(col);
        let sparse = g.im2col_sparse(&input, 2);
        let rows = 2 * g.out_positions();
        assert_eq!(sparse.rows(g.patch_len()), rows);
        let (mut a, mut b) = (vec![0.0f64; rows * 5], vec![0.0f64; rows * 5]);
        dense.matmul_add(g.patch_len(), &w, 5, &mut a);
        sparse.matmul_add(g.patch_len(), &w, 5, &mut b);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        let d: Vec<f64> = (0..rows * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut ga, mut gb) = (vec![0.0f64; g.weight_len()], vec![0.0f64; g.weight_len()]);
        dense.transpose_matmul_add(g.patch_len(), &d, 5, &mut ga);
        sparse.transpose_matmul_add(g.patch_len(), &d, 5, &mut gb);
        assert!(ga.iter().zip(&gb).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let input = Tensor3::<f64>::zeros(5, 5, 3);
        let layer = conv_layer((2, 2), 4, 1, vec![0.0; 16], vec![0.0]);
        let err = conv2d_forward(&input, &layer, (1, 1)).unwrap_err();
        assert!(matches!(err, NnError::Shape(msg) if msg.contains("3 channels")));
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let input = Tensor3::<f64>::zeros(3, 3, 1);
        let layer = conv_layer((4, 1), 1, 1, vec![0.0; 4], vec![0.0]);
        assert!(conv2d_forward(&input, &layer, (1, 1)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn output_dim_formula(h in 1usize..60, w in 1usize..60, kh in 1usize..10, kw in 1usize..10,
                              sh in 1usize..5, sw in 1usize..5) {
            proptest::prop_assume!(kh <= h && kw <= w);
            let g = ConvGeom::new((h, w, 1), (kh, kw), (sh, sw), 2).unwrap();
            proptest::prop_assert_eq!(g.out_h, (h - kh) / sh + 1);
            proptest::prop_assert_eq!(g.out_w, (w - kw) / sw + 1);
            let input = Tensor3::<f64>::zeros(h, w, 1);
            let layer = conv_layer((kh, kw), 1, 2, vec![0.0; kh * kw * 2], vec![0.0; 2]);
            let out = conv2d_forward(&input, &layer, (sh, sw)).unwrap();
            proptest::prop_assert_eq!(out.shape(), (g.out_h, g.out_w, 2));
        }
    }
}
