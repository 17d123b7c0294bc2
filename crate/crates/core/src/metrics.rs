//! Image comparison.

use thiserror::Error;

use crate::render::image::Rgb;

/// Reported value for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("image sizes differ: {a:?} vs {b:?}")]
pub struct SizeMismatch {
    pub a: (u32, u32),
    pub b: (u32, u32),
}

pub fn mse(a: &Rgb, b: &Rgb) -> Result<f64, SizeMismatch> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(SizeMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    let n = 3 * a.data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).powi(2)))
        .sum();
    Ok(sum / n as f64)
}

/// `10 log10(1 / MSE)` for images in [0, 1], capped at [`PSNR_CAP`].
pub fn psnr(a: &Rgb, b: &Rgb) -> Result<f64, SizeMismatch> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { PSNR_CAP } else { (10.0 * (1.0 / m).log10()).min(PSNR_CAP) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: f64) -> Rgb {
        Rgb::new(4, 3, vec![[v; 3]; 12])
    }

    #[test]
    fn examples() {
        assert_eq!(psnr(&flat(0.3), &flat(0.3)).unwrap(), 99.0);
        assert_eq!(psnr(&flat(0.0), &flat(1.0)).unwrap(), 0.0);
        assert!((psnr(&flat(0.5), &flat(0.0)).unwrap() - 6.0206).abs() < 1e-4);
        assert!(psnr(&flat(0.0), &Rgb::new(1, 1, vec![[0.0; 3]])).is_err());
    }
}
