//! Raw dense kernels shared by the differentiable ops.

use crate::error::{invalid, Result};

/// `c = a * b` (or `c += a * b` when `accumulate`), with optional transposes.
///
/// `a` is `m x k` after transposition, `b` is `k x n`, `c` is `m x n`, all
/// row-major and contiguous in their stored orientation.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: out size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the slices, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a same-padded, possibly dilated and strided 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub out_c: usize,
    pub dilation: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(
        input_shape: &[usize],
        kernel_shape: &[usize],
        dilation: usize,
        stride: usize,
    ) -> Result<Self> {
        let [in_h, in_w, in_c] = input_shape else {
            return invalid(format!("conv2d input must be [h, w, c], got {input_shape:?}"));
        };
        let [k_h, k_w, k_in, out_c] = kernel_shape else {
            return invalid(format!(
                "conv2d kernel must be [kh, kw, cin, cout], got {kernel_shape:?}"
            ));
        };
        if k_in != in_c {
            return invalid(format!(
                "conv2d kernel expects {k_in} input channels, input has {in_c}"
            ));
        }
        if k_h % 2 == 0 || k_w % 2 == 0 {
            return invalid(format!("conv2d kernel extents must be odd, got {k_h}x{k_w}"));
        }
        if dilation == 0 || stride == 0 {
            return invalid("conv2d dilation and stride must be >= 1");
        }
        if *in_h == 0 || *in_w == 0 {
            return invalid("conv2d input has an empty spatial extent");
        }
        Ok(Self {
            in_h: *in_h,
            in_w: *in_w,
            in_c: *in_c,
            k_h: *k_h,
            k_w: *k_w,
            out_c: *out_c,
            dilation,
            stride,
        })
    }

    pub fn pad_h(&self) -> usize {
        self.dilation * (self.k_h - 1) / 2
    }

    pub fn pad_w(&self) -> usize {
        self.dilation * (self.k_w - 1) / 2
    }

    pub fn out_h(&self) -> usize {
        (self.in_h - 1) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - 1) / self.stride + 1
    }

    /// Receptive field of one tap stack along an axis: `(k - 1) * dilation + 1`.
    pub fn receptive_field(&self) -> (usize, usize) {
        (
            (self.k_h - 1) * self.dilation + 1,
            (self.k_w - 1) * self.dilation + 1,
        )
    }

    pub fn patch_len(&self) -> usize {
        self.k_h * self.k_w * self.in_c
    }

    pub fn out_cells(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn is_pointwise(&self) -> bool {
        self.k_h == 1 && self.k_w == 1 && self.stride == 1
    }

    /// Input row/column sampled by output `(oy, ox)` and tap `(ky, kx)`, if in bounds.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky * self.dilation) as isize - self.pad_h() as isize;
        let ix = (ox * self.stride + kx * self.dilation) as isize - self.pad_w() as isize;
        if iy < 0 || ix < 0 || iy >= self.in_h as isize || ix >= self.in_w as isize {
            None
        } else {
            Some((iy as usize, ix as usize))
        }
    }
}

/// Unfolds input patches into a `[out_cells, k_h * k_w * in_c]` matrix.
pub fn im2col(geo: &ConvGeometry, input: &[f64]) -> Vec<f64> {
    let patch = geo.patch_len();
    let (oh, ow, c) = (geo.out_h(), geo.out_w(), geo.in_c);
    let mut cols = vec![0.0; oh * ow * patch];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * patch..][..patch];
            for ky in 0..geo.k_h {
                for kx in 0..geo.k_w {
                    if let Some((iy, ix)) = geo.source(oy, ox, ky, kx) {
                        let dst = (ky * geo.k_w + kx) * c;
                        let src = (iy * geo.in_w + ix) * c;
                        row[dst..dst + c].copy_from_slice(&input[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub fn col2im(geo: &ConvGeometry, cols: &[f64], grad_input: &mut [f64]) {
    let patch = geo.patch_len();
    let (oh, ow, c) = (geo.out_h(), geo.out_w(), geo.in_c);
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &cols[(oy * ow + ox) * patch..][..patch];
            for ky in 0..geo.k_h {
                for kx in 0..geo.k_w {
                    if let Some((iy, ix)) = geo.source(oy, ox, ky, kx) {
                        let src = (ky * geo.k_w + kx) * c;
                        let dst = (iy * geo.in_w + ix) * c;
                        for (g, &v) in grad_input[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                            *g += v;
                        }
                    }
                }
            }
        }
    }
}
