//! Fourier positional features for feature-map cells.

use abn_numerics::Tensor;

use crate::error::{invalid, Result};

/// Base of the wavelength schedule `f_u = BASE^u`.
pub const BASE: f64 = 1000.0;

/// Wavelength exponents `u_i = 4 i / d` for `i = 0 .. d / 4`.
pub fn wavelength_exponents(d: usize) -> Vec<f64> {
    (0..d / 4).map(|i| 4.0 * i as f64 / d as f64).collect()
}

/// `[h, w, d]` basis; channels `4i .. 4i + 4` hold `sin(x / f)`, `cos(x / f)`,
/// `sin(y / f)`, `cos(y / f)` for wavelength `f = 1000^(u_i)`, where `x` is
/// the column and `y` the row index of the cell.
pub fn positional_basis(w: usize, h: usize, d: usize) -> Result<Tensor> {
    if d == 0 || d % 4 != 0 {
        return invalid(format!("positional depth must be a positive multiple of 4, got {d}"));
    }
    if w == 0 || h == 0 {
        return invalid("positional basis needs a non-empty grid");
    }
    let freqs: Vec<f64> = wavelength_exponents(d).iter().map(|u| BASE.powf(*u)).collect();
    let mut data = Vec::with_capacity(w * h * d);
    for y in 0..h {
        for x in 0..w {
            for f in &freqs {
                let (xs, ys) = (x as f64 / f, y as f64 / f);
                data.extend_from_slice(&[xs.sin(), xs.cos(), ys.sin(), ys.cos()]);
            }
        }
    }
    Ok(Tensor::new(vec![h, w, d], data)?)
}
