use super::{shape_mismatch, Shape, Tensor};
use crate::error::{Error, Result};

pub const KERNEL_SIZE: usize = 3;
const TAPS: usize = KERNEL_SIZE * KERNEL_SIZE;

/// A 3×3 dilated convolution with bias.
///
/// Padding is implicit: the input is zero-padded by `dilation` pixels on each
/// side so the output keeps the input's spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    weights: Tensor,
    bias: Vec<f32>,
    dilation: usize,
}

impl ConvLayer {
    pub fn new(weights: Tensor, bias: Vec<f32>, dilation: usize) -> Result<Self> {
        let s = weights.shape();
        if s.h != KERNEL_SIZE || s.w != KERNEL_SIZE {
            return Err(Error::invalid(format!(
                "convolution kernels must be 3x3, got weights {s}"
            )));
        }
        if !(1..=4).contains(&dilation) {
            return Err(Error::invalid(format!(
                "dilation must be in 1..=4, got {dilation}"
            )));
        }
        if bias.len() != s.n {
            return Err(Error::invalid(format!(
                "bias has {} entries for {} output channels",
                bias.len(),
                s.n
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("non-finite bias"));
        }
        Ok(ConvLayer {
            weights,
            bias,
            dilation,
        })
    }

    pub fn zeros(in_ch: usize, out_ch: usize, dilation: usize) -> Result<Self> {
        let w = Tensor::zeros(Shape::new(out_ch, in_ch, KERNEL_SIZE, KERNEL_SIZE));
        ConvLayer::new(w, vec![0.0; out_ch], dilation)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().c
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().n
    }

    pub fn param_count(&self) -> usize {
        self.weights.shape().len() + self.bias.len()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f32] {
        self.weights.data_mut()
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

/// Unrolls one `(c, h, w)` item into a `(c*9, h*w)` column matrix of dilated
/// taps, reading zero outside the image.
fn im2col(item: &[f32], c: usize, h: usize, w: usize, dilation: usize, cols: &mut [f64]) {
    let plane = h * w;
    debug_assert_eq!(cols.len(), c * TAPS * plane);
    let d = dilation as isize;
    for ci in 0..c {
        let src = &item[ci * plane..(ci + 1) * plane];
        for ky in 0..KERNEL_SIZE {
            let dy = (ky as isize - 1) * d;
            for kx in 0..KERNEL_SIZE {
                let dx = (kx as isize - 1) * d;
                let row = (ci * TAPS + ky * KERNEL_SIZE + kx) * plane;
                let dst = &mut cols[row..row + plane];
                let (x0, x1) = valid_range(w, dx);
                for y in 0..h {
                    let sy = y as isize + dy;
                    let line = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        line.fill(0.0);
                        continue;
                    }
                    let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                    line[..x0].fill(0.0);
                    line[x1..].fill(0.0);
                    for x in x0..x1 {
                        line[x] = f64::from(srow[(x as isize + dx) as usize]);
                    }
                }
            }
        }
    }
}

/// Scatters a column matrix back onto an item, summing overlapping taps.
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, dilation: usize, item: &mut [f64]) {
    let plane = h * w;
    let d = dilation as isize;
    for ci in 0..c {
        let dst = &mut item[ci * plane..(ci + 1) * plane];
        for ky in 0..KERNEL_SIZE {
            let dy = (ky as isize - 1) * d;
            for kx in 0..KERNEL_SIZE {
                let dx = (kx as isize - 1) * d;
                let row = (ci * TAPS + ky * KERNEL_SIZE + kx) * plane;
                let src = &cols[row..row + plane];
                let (x0, x1) = valid_range(w, dx);
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let base = sy as usize * w;
                    for x in x0..x1 {
                        dst[base + (x as isize + dx) as usize] += src[y * w + x];
                    }
                }
            }
        }
    }
}

/// Output columns `x` for which `x + dx` lies inside `[0, w)`.
fn valid_range(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (w as isize - dx).clamp(0, w as isize) as usize;
    (lo.min(hi), hi)
}

/// `c (m×n) = alpha * a (m×k) * b (k×n) + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches for the
    // given dimensions and strides; `c` is row-major contiguous.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_input(input: &Tensor, layer: &ConvLayer, op: &'static str) -> Result<()> {
    let s = input.shape();
    if s.c != layer.in_channels() {
        return Err(shape_mismatch(op, s, layer.weights.shape()));
    }
    Ok(())
}

/// Same-size dilated cross-correlation: `out[o] = bias[o] + Σ w[o,i,ky,kx] ·
/// in[i, y + (ky-1)d, x + (kx-1)d]`.
pub fn conv2d_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    check_input(input, layer, "conv2d_forward")?;
    let s = input.shape();
    let (out_ch, plane) = (layer.out_channels(), s.plane_len());
    let k = s.c * TAPS;
    let weights: Vec<f64> = layer.weights.data().iter().map(|&v| f64::from(v)).collect();
    let out_shape = Shape::new(s.n, out_ch, s.h, s.w);
    let mut acc = vec![0.0f64; out_shape.len()];
    let mut cols = vec![0.0f64; k * plane];
    for n in 0..s.n {
        im2col(input.item(n), s.c, s.h, s.w, layer.dilation, &mut cols);
        let out = &mut acc[n * out_ch * plane..(n + 1) * out_ch * plane];
        for (o, chunk) in out.chunks_exact_mut(plane).enumerate() {
            chunk.fill(f64::from(layer.bias[o]));
        }
        gemm(out_ch, k, plane, &weights, (k, 1), &cols, (plane, 1), 1.0, out);
    }
    Tensor::from_f64(out_shape, &acc, "conv2d_forward")
}

/// Gradients of `Σ upstream ⊙ conv2d_forward(input, layer)`.
pub fn conv2d_backward(input: &Tensor, layer: &ConvLayer, upstream: &Tensor) -> Result<ConvGrads> {
    let (grads, grad_input) = conv2d_backward_impl(input, layer, upstream, true)?;
    Ok(ConvGrads {
        input: grad_input.expect("input gradient requested"),
        weights: grads.0,
        bias: grads.1,
    })
}

/// Backward pass that can skip the input gradient (first network layer).
pub(crate) fn conv2d_backward_impl(
    input: &Tensor,
    layer: &ConvLayer,
    upstream: &Tensor,
    need_input: bool,
) -> Result<((Tensor, Vec<f32>), Option<Tensor>)> {
    check_input(input, layer, "conv2d_backward")?;
    let s = input.shape();
    let out_ch = layer.out_channels();
    let expected = Shape::new(s.n, out_ch, s.h, s.w);
    if upstream.shape() != expected {
        return Err(shape_mismatch("conv2d_backward", expected, upstream.shape()));
    }
    let plane = s.plane_len();
    let k = s.c * TAPS;
    let weights: Vec<f64> = layer.weights.data().iter().map(|&v| f64::from(v)).collect();

    let mut grad_w = vec![0.0f64; out_ch * k];
    let mut grad_b = vec![0.0f64; out_ch];
    let mut grad_in = if need_input {
        vec![0.0f64; s.len()]
    } else {
        Vec::new()
    };
    let mut cols = vec![0.0f64; k * plane];
    let mut up = vec![0.0f64; out_ch * plane];
    for n in 0..s.n {
        for (dst, &src) in up.iter_mut().zip(upstream.item(n)) {
            *dst = f64::from(src);
        }
        for (o, chunk) in up.chunks_exact(plane).enumerate() {
            grad_b[o] += chunk.iter().sum::<f64>();
        }
        im2col(input.item(n), s.c, s.h, s.w, layer.dilation, &mut cols);
        // dW += up · colsᵀ
        gemm(out_ch, plane, k, &up, (plane, 1), &cols, (1, plane), 1.0, &mut grad_w);
        if need_input {
            // dcols = Wᵀ · up
            gemm(k, out_ch, plane, &weights, (1, k), &up, (plane, 1), 0.0, &mut cols);
            let item = &mut grad_in[n * s.item_len()..(n + 1) * s.item_len()];
            col2im(&cols, s.c, s.h, s.w, layer.dilation, item);
        }
    }
    let grad_weights = Tensor::from_f64(layer.weights.shape(), &grad_w, "conv2d_backward")?;
    let grad_bias: Vec<f32> = grad_b.iter().map(|&v| v as f32).collect();
    let grad_input = if need_input {
        Some(Tensor::from_f64(s, &grad_in, "conv2d_backward")?)
    } else {
        None
    };
    Ok(((grad_weights, grad_bias), grad_input))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center_tap_layer(dilation: usize) -> ConvLayer {
        let mut w = Tensor::zeros(Shape::new(1, 1, 3, 3));
        w.set(0, 0, 1, 1, 1.0);
        ConvLayer::new(w, vec![0.0], dilation).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let input = Tensor::from_fn(Shape::new(1, 1, 4, 4), |_, _, y, x| (y * 4 + x) as f32 * 0.1);
        let out = conv2d_forward(&input, &center_tap_layer(1)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn dilated_all_ones_reads_zero_padding() {
        let input = Tensor::filled(Shape::new(1, 1, 5, 5), 1.0);
        let w = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0);
        let layer = ConvLayer::new(w, vec![0.0], 2).unwrap();
        let out = conv2d_forward(&input, &layer).unwrap();
        assert_eq!(out.get(0, 0, 2, 2), 9.0);
        assert_eq!(out.get(0, 0, 0, 0), 4.0);
        assert_eq!(out.get(0, 0, 4, 4), 4.0);
        // edge midpoint: 2 rows × 3 columns in bounds
        assert_eq!(out.get(0, 0, 0, 2), 6.0);
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let layer = ConvLayer::new(Tensor::zeros(Shape::new(2, 1, 3, 3)), vec![0.5, -1.5], 1).unwrap();
        let out = conv2d_forward(&Tensor::filled(Shape::new(1, 1, 2, 2), 3.0), &layer).unwrap();
        assert!(out.item(0)[..4].iter().all(|&v| v == 0.5));
        assert!(out.item(0)[4..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn rejects_channel_mismatch() {
        let layer = ConvLayer::zeros(2, 4, 1).unwrap();
        let err = conv2d_forward(&Tensor::zeros(Shape::new(1, 3, 4, 4)), &layer).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 3, 4, 4)") && msg.contains("(4, 2, 3, 3)"), "{msg}");
    }

    #[test]
    fn rejects_bad_layers() {
        assert!(ConvLayer::new(Tensor::zeros(Shape::new(1, 1, 5, 5)), vec![0.0], 1).is_err());
        assert!(ConvLayer::zeros(1, 1, 0).is_err());
        assert!(ConvLayer::zeros(1, 1, 5).is_err());
        assert!(ConvLayer::new(Tensor::zeros(Shape::new(2, 1, 3, 3)), vec![0.0], 1).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let input = Tensor::from_fn(Shape::new(2, 2, 5, 5), |n, c, y, x| (n + c + y * x) as f32 * 0.1);
        let layer = ConvLayer::new(
            Tensor::from_fn(Shape::new(3, 2, 3, 3), |o, i, y, x| (o + i + y + x) as f32 * 0.05),
            vec![0.1, 0.2, 0.3],
            2,
        )
        .unwrap();
        let g = conv2d_backward(&input, &layer, &Tensor::zeros(Shape::new(2, 3, 5, 5))).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_chain_rule() {
        let (x, wc, up) = (1.5f32, -0.75f32, 2.0f32);
        let mut w = Tensor::zeros(Shape::new(1, 1, 3, 3));
        w.set(0, 0, 1, 1, wc);
        let layer = ConvLayer::new(w, vec![0.0], 1).unwrap();
        let input = Tensor::filled(Shape::new(1, 1, 1, 1), x);
        let g = conv2d_backward(&input, &layer, &Tensor::filled(Shape::new(1, 1, 1, 1), up)).unwrap();
        assert_eq!(g.weights.get(0, 0, 1, 1), up * x);
        assert_eq!(g.input.data(), &[up * wc]);
        assert_eq!(g.bias, vec![up]);
        // off-centre taps only ever see padding on a 1×1 input
        assert_eq!(g.weights.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn upstream_shape_checked() {
        let layer = ConvLayer::zeros(1, 2, 1).unwrap();
        let input = Tensor::zeros(Shape::new(1, 1, 4, 4));
        assert!(conv2d_backward(&input, &layer, &Tensor::zeros(Shape::new(1, 1, 4, 4))).is_err());
    }

    #[test]
    fn valid_range_bounds() {
        assert_eq!(valid_range(5, 0), (0, 5));
        assert_eq!(valid_range(5, 2), (0, 3));
        assert_eq!(valid_range(5, -2), (2, 5));
        let (lo, hi) = valid_range(2, 4);
        assert!(lo >= hi);
    }
}
