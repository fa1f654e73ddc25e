//! Image quality metrics: PSNR, single-scale SSIM on BT.601 luma, and mean
//! CIE76 color difference in CIELAB (D65).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ImageU8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image is {0}x{1}; SSIM needs both sides of at least 11")]
    TooSmall(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub delta_e: f64,
}

fn check_dims(a: &ImageU8, b: &ImageU8) -> Result<(), MetricsError> {
    if a.same_dimensions(b) {
        Ok(())
    } else {
        Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ))
    }
}

/// All three metrics; SSIM is NaN when the image is too small for the window.
pub fn evaluate(a: &ImageU8, b: &ImageU8) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        psnr: psnr(a, b)?,
        ssim: match ssim(a, b) {
            Err(MetricsError::TooSmall(..)) => f64::NAN,
            other => other?,
        },
        delta_e: delta_e(a, b)?,
    })
}

/// Peak signal-to-noise ratio in dB over all samples; `+inf` for identical images.
pub fn psnr(a: &ImageU8, b: &ImageU8) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let se: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if se == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = se as f64 / a.data().len() as f64;
    Ok(20.0 * 255f64.log10() - 10.0 * mse.log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn luma(img: &ImageU8) -> Vec<f64> {
    img.pixels()
        .map(|[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect()
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

/// Separable Gaussian filter over valid window positions only.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03.
pub fn ssim(a: &ImageU8, b: &ImageU8) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(w, h));
    }
    let (x, y) = (luma(a), luma(b));
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mu_x = filter_valid(&x, w, h, &k);
    let mu_y = filter_valid(&y, w, h, &k);
    let s_xx = filter_valid(&xx, w, h, &k);
    let s_yy = filter_valid(&yy, w, h, &k);
    let s_xy = filter_valid(&xy, w, h, &k);
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = s_xx[i] - mx * mx;
            let vy = s_yy[i] - my * my;
            let cov = s_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

// sRGB (D65) to XYZ; the white point is derived from the same rows so that
// white maps to exactly a* = b* = 0
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn white_point() -> [f64; 3] {
    SRGB_TO_XYZ.map(|row| row[0] * 1.0 + row[1] * 1.0 + row[2] * 1.0)
}

fn xyz_of(lin: [f64; 3]) -> [f64; 3] {
    SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2])
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

/// 8-bit sRGB to CIELAB (D65).
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(|v| srgb_decode(v as f64 / 255.0));
    let xyz = xyz_of(lin);
    let white = white_point();
    let t = [xyz[0] / white[0], xyz[1] / white[1], xyz[2] / white[2]];
    let (fx, fy, fz) = (lab_f(t[0]), lab_f(t[1]), lab_f(t[2]));
    let l = if t[1] > LAB_EPSILON {
        116.0 * fy - 16.0
    } else {
        LAB_KAPPA * t[1]
    };
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// CIELAB (D65) back to 8-bit sRGB, rounding half-up and clamping.
pub fn lab_to_srgb(lab: [f64; 3]) -> [u8; 3] {
    let [l, a, b] = lab;
    let fy = (l + 16.0) / 116.0;
    let fx = fy + a / 500.0;
    let fz = fy - b / 200.0;
    let inv = |f: f64| {
        let f3 = f * f * f;
        if f3 > LAB_EPSILON {
            f3
        } else {
            (116.0 * f - 16.0) / LAB_KAPPA
        }
    };
    let ty = if l > LAB_KAPPA * LAB_EPSILON {
        fy * fy * fy
    } else {
        l / LAB_KAPPA
    };
    let white = white_point();
    let xyz = [inv(fx) * white[0], ty * white[1], inv(fz) * white[2]];
    let lin = invert3(&SRGB_TO_XYZ).map(|row| row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2]);
    lin.map(|v| crate::imaging::unit_to_byte(srgb_encode(v.max(0.0))))
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
        [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
        [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
    ]
}

/// Mean per-pixel CIE76 distance.
pub fn delta_e(a: &ImageU8, b: &ImageU8) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let total: f64 = a
        .pixels()
        .zip(b.pixels())
        .map(|(p, q)| {
            let (x, y) = (srgb_to_lab(p), srgb_to_lab(q));
            ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(total / a.pixel_count() as f64)
}
