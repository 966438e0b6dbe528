//! Reconstruction quality.

use crate::error::{Error, Result};
use crate::pixmap::GrayImage;

/// Mean squared pixel difference.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::InvalidImage(format!(
            "cannot compare {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = u64::from(x.abs_diff(y));
            d * d
        })
        .sum();
    Ok(sum as f64 / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

/// `inf` for the identical-image sentinel, otherwise four decimals.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = GrayImage::from_fn(8, 8, |x, y| (x * 30 + y) as u8).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let black = GrayImage::filled(4, 4, 0).unwrap();
        let white = GrayImage::filled(4, 4, 255).unwrap();
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        assert!((psnr_from_mse(1.0) - 48.1308).abs() < 1e-4);
        let b = GrayImage::from_fn(8, 8, |x, y| (x * 30 + y) as u8 ^ 3).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!(psnr(&a, &black).is_err());
        assert_eq!(format_psnr(f64::INFINITY), "inf");
    }
}
