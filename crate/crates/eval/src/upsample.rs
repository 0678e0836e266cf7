//! Pyramid expansion of feature-grid attention to raster resolution.

use abn_numerics::Tensor;

use crate::error::{invalid, Result};

/// Bilinear resize with half-pixel centers and clamped edges.
fn bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let src = |o: usize, n_out: usize, n_in: usize| {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut data = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let (r0, r1, fr) = src(r, out_h, h);
        for c in 0..out_w {
            let (c0, c1, fc) = src(c, out_w, w);
            let at = |rr: usize, cc: usize| x.data()[rr * w + cc];
            let top = at(r0, c0) * (1.0 - fc) + at(r0, c1) * fc;
            let bottom = at(r1, c0) * (1.0 - fc) + at(r1, c1) * fc;
            data.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Tensor::new(vec![out_h, out_w], data).expect("sizes agree")
}

/// Expands `alpha` (`[h, w]`) to `[target, target]` by repeated 2x bilinear
/// steps, then renormalizes to the input's total mass. An integer factor that
/// is not a power of two finishes with one direct bilinear step.
pub fn upsample_pyramid(alpha: &Tensor, target: usize) -> Result<Tensor> {
    let [h, w] = alpha.shape() else {
        return invalid(format!("attention map must be 2-D, got {:?}", alpha.shape()));
    };
    let (h, w) = (*h, *w);
    if h == 0 || w == 0 || target % h != 0 || target % w != 0 {
        return invalid(format!("cannot expand {h}x{w} to {target}x{target} by an integer factor"));
    }
    let mut x = alpha.clone();
    let (mut ch, mut cw) = (h, w);
    while ch * 2 <= target && cw * 2 <= target && target % (ch * 2) == 0 && target % (cw * 2) == 0 {
        ch *= 2;
        cw *= 2;
        x = bilinear(&x, ch, cw);
    }
    if ch != target || cw != target {
        x = bilinear(&x, target, target);
    }
    let mass = alpha.sum();
    let now = x.sum();
    if now > 0.0 {
        x = x.map(|v| v * mass / now);
    }
    Ok(x)
}
