//! Full-reference image metrics on the 8-bit intensity scale.

use crate::error::{Error, Result};
use crate::model::{check_shape, IntensityFrame, MAX_INTENSITY};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compute(a: &IntensityFrame, b: &IntensityFrame) -> Result<Self> {
        let rmse = rmse(a, b)?;
        Ok(Self {
            rmse,
            psnr: psnr_from_rmse(rmse),
            ssim: ssim(a, b)?,
        })
    }
}

pub fn rmse(a: &IntensityFrame, b: &IntensityFrame) -> Result<f64> {
    check_shape(a.width(), a.height(), b.width(), b.height())?;
    let (a, b) = (a.values().as_slice(), b.values().as_slice());
    if a.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

pub fn psnr(a: &IntensityFrame, b: &IntensityFrame) -> Result<f64> {
    Ok(psnr_from_rmse(rmse(a, b)?))
}

/// `20·log10(255 / rmse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (20.0 * (MAX_INTENSITY / rmse).log10()).min(PSNR_CAP_DB)
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable 'valid' filtering: output is `(w - k + 1) x (h - k + 1)`.
fn filter_valid(src: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = width - k + 1;
    let oh = height - k + 1;
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        let line = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged
/// over every window position that fits inside the image.
pub fn ssim(a: &IntensityFrame, b: &IntensityFrame) -> Result<f64> {
    check_shape(a.width(), a.height(), b.width(), b.height())?;
    let (width, height) = (a.width(), a.height());
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {width}x{height}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let x = a.values().as_slice();
    let y = b.values().as_slice();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(x, width, height, &taps);
    let mu_y = filter_valid(y, width, height, &taps);
    let e_xx = filter_valid(&xx, width, height, &taps);
    let e_yy = filter_valid(&yy, width, height, &taps);
    let e_xy = filter_valid(&xy, width, height, &taps);

    let c1 = (SSIM_K1 * MAX_INTENSITY).powi(2);
    let c2 = (SSIM_K2 * MAX_INTENSITY).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}
