//! Netpbm output for attention heatmaps and overlays.

use std::io::Write;
use std::path::Path;

use abn_numerics::Tensor;
use abn_scenegen::RasterStack;

use crate::error::Result;

/// `round(255 * a / max a)` per pixel; all zeros when the map is empty.
pub fn alpha_to_gray(alpha: &Tensor) -> Vec<u8> {
    let max = alpha.data().iter().copied().fold(0.0, f64::max);
    alpha
        .data()
        .iter()
        .map(|&a| if max > 0.0 { (255.0 * a / max).round() as u8 } else { 0 })
        .collect()
}

/// Signed map to gray: 128 is zero, 0 and 255 are `-m` and `+m` for the
/// largest magnitude `m`.
pub fn signed_to_gray(delta: &Tensor) -> Vec<u8> {
    let m = delta.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    delta
        .data()
        .iter()
        .map(|&d| if m > 0.0 { (127.5 + 127.5 * d / m).round().clamp(0.0, 255.0) as u8 } else { 128 })
        .collect()
}

/// Channel-wise maximum of the raster, in `[0, 1]`.
pub fn flatten_raster(raster: &RasterStack) -> Vec<f64> {
    let mut out = vec![0.0f64; raster.grid.cells()];
    for ch in &raster.channels {
        for (o, &v) in out.iter_mut().zip(ch) {
            *o = o.max(v as f64);
        }
    }
    out
}

/// Flattened raster in gray with attention tinted red at half opacity.
pub fn overlay(raster: &RasterStack, alpha: &Tensor) -> Vec<[u8; 3]> {
    let base = flatten_raster(raster);
    let max = alpha.data().iter().copied().fold(0.0, f64::max);
    base.iter()
        .zip(alpha.data())
        .map(|(&b, &a)| {
            let t = if max > 0.0 { 0.5 * a / max } else { 0.0 };
            let g = 255.0 * b;
            let px = |tint: f64| ((1.0 - t) * g + t * tint).round().clamp(0.0, 255.0) as u8;
            [px(255.0), px(0.0), px(0.0)]
        })
        .collect()
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    f.flush()?;
    Ok(())
}

pub fn write_ppm(path: &Path, width: usize, height: usize, pixels: &[[u8; 3]]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{width} {height}\n255\n")?;
    for p in pixels {
        f.write_all(p)?;
    }
    f.flush()?;
    Ok(())
}

/// Parses a binary PGM written by [`write_pgm`].
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return crate::error::invalid("truncated PGM header");
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| crate::error::CliError::InvalidArgument(format!("bad PGM field {s:?}")));
    if fields[0] != "P5" {
        return crate::error::invalid("not a binary PGM");
    }
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    Ok((w, h, bytes[pos + 1..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_scales_to_the_peak() {
        let a = Tensor::new(vec![2, 2], vec![0.0, 0.1, 0.2, 0.4]).unwrap();
        assert_eq!(alpha_to_gray(&a), vec![0, 64, 128, 255]);
        assert_eq!(alpha_to_gray(&Tensor::zeros(&[2, 2])), vec![0; 4]);
    }

    #[test]
    fn signed_gray_centers_zero() {
        let d = Tensor::new(vec![1, 3], vec![-0.5, 0.0, 0.25]).unwrap();
        assert_eq!(signed_to_gray(&d), vec![0, 128, 191]);
        assert_eq!(signed_to_gray(&Tensor::zeros(&[1, 2])), vec![128, 128]);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let px: Vec<u8> = (0..12).map(|i| i * 20).collect();
        write_pgm(&path, 4, 3, &px).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), (4, 3, px));
    }
}
