//! Image comparison metrics and shadow measurements.

use serde::{Deserialize, Serialize};

use crate::color::luminance;
use crate::error::{Error, Result};
use crate::image::LinearImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masked_mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masked_mse: Option<f64>,
}

pub fn report(a: &LinearImage, b: &LinearImage, mask: Option<&[bool]>) -> Result<MetricReport> {
    let (masked_mae, masked_mse) = match mask {
        Some(m) => (Some(mae(a, b, Some(m))?), Some(mse(a, b, Some(m))?)),
        None => (None, None),
    };
    Ok(MetricReport {
        mae: mae(a, b, None)?,
        mse: mse(a, b, None)?,
        ssim: ssim(a, b)?,
        masked_mae,
        masked_mse,
    })
}

fn check_mask(img: &LinearImage, mask: Option<&[bool]>) -> Result<()> {
    if let Some(m) = mask {
        if m.len() != img.pixels().len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {} pixels",
                m.len(),
                img.pixels().len()
            )));
        }
        if !m.iter().any(|&x| x) {
            return Err(Error::EmptyMask);
        }
    }
    Ok(())
}

fn mean_channel_error(
    a: &LinearImage,
    b: &LinearImage,
    mask: Option<&[bool]>,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    a.check_same_dims(b)?;
    check_mask(a, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, (p, q)) in a.pixels().iter().zip(b.pixels()).enumerate() {
        if mask.is_some_and(|m| !m[k]) {
            continue;
        }
        for c in 0..3 {
            sum += f(p[c] as f64 - q[c] as f64);
        }
        count += 3;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Mean absolute channel difference over the mask (or every pixel).
pub fn mae(a: &LinearImage, b: &LinearImage, mask: Option<&[bool]>) -> Result<f64> {
    mean_channel_error(a, b, mask, f64::abs)
}

/// Mean squared channel difference over the mask (or every pixel).
pub fn mse(a: &LinearImage, b: &LinearImage, mask: Option<&[bool]>) -> Result<f64> {
    mean_channel_error(a, b, mask, |d| d * d)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        let x = i as f64 - half;
        (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

pub(crate) fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over every window position that fits inside the image, with an
/// 11x11 Gaussian window (sigma 1.5), dynamic range 1, channels averaged.
/// Inputs are clamped to [0, 1].
pub fn ssim(a: &LinearImage, b: &LinearImage) -> Result<f64> {
    a.check_same_dims(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps();
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = a.pixels().iter().map(|p| (p[c] as f64).clamp(0.0, 1.0)).collect();
        let y: Vec<f64> = b.pixels().iter().map(|p| (p[c] as f64).clamp(0.0, 1.0)).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, mxx, myy, mxy] =
            [&x, &y, &xx, &yy, &xy].map(|plane| filter_valid(plane, w, h, &taps));
        let mut sum = 0.0;
        for k in 0..ow * oh {
            let va = mxx[k] - mx[k] * mx[k];
            let vb = myy[k] - my[k] * my[k];
            let cov = mxy[k] - mx[k] * my[k];
            sum += ssim_from_moments(mx[k], my[k], va, vb, cov);
        }
        total += sum / (ow * oh) as f64;
    }
    Ok(total / 3.0)
}

/// Separable "valid" correlation.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| taps[k] * horiz[(y + k) * ow + x]).sum();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowStats {
    pub umbra_mean_luma: f64,
    pub edge_max_grad: f64,
}

/// Rec.709 luminance statistics: mean over `umbra`, and the largest
/// central-difference gradient magnitude over `edge_band`.
pub fn shadow_stats(img: &LinearImage, umbra: &[bool], edge_band: &[bool]) -> Result<ShadowStats> {
    check_mask(img, Some(umbra))?;
    check_mask(img, Some(edge_band))?;
    let (w, h) = img.dims();
    let luma = img.luminance();
    let (sum, n) = umbra
        .iter()
        .zip(&luma)
        .filter(|(m, _)| **m)
        .fold((0.0, 0usize), |(s, n), (_, l)| (s + l, n + 1));
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        luma[y * w + x]
    };
    let mut grad = 0.0f64;
    for (k, _) in edge_band.iter().enumerate().filter(|(_, m)| **m) {
        let (x, y) = ((k % w) as isize, (k / w) as isize);
        let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
        let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
        grad = grad.max((gx * gx + gy * gy).sqrt());
    }
    Ok(ShadowStats {
        umbra_mean_luma: sum / n as f64,
        edge_max_grad: grad,
    })
}

/// Pixels near the boundary of `region`: within `radius` (Chebyshev) of both
/// a region and a non-region pixel. Only pixels whose 4-neighbors are all
/// `valid` qualify, so central differences never straddle a silhouette.
pub fn boundary_band(region: &[bool], valid: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    let r = radius as isize;
    let (w, h) = (width as isize, height as isize);
    let ok = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && valid[(y * w + x) as usize];
    (0..width * height)
        .map(|k| {
            let (x, y) = ((k % width) as isize, (k / width) as isize);
            if !(ok(x, y) && ok(x - 1, y) && ok(x + 1, y) && ok(x, y - 1) && ok(x, y + 1)) {
                return false;
            }
            let (mut inside, mut outside) = (false, false);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    if region[(ny * w + nx) as usize] {
                        inside = true;
                    } else if valid[(ny * w + nx) as usize] {
                        outside = true;
                    }
                }
            }
            inside && outside
        })
        .collect()
}

/// Rec.709 luminance of every pixel.
pub fn luma(img: &LinearImage) -> Vec<f64> {
    img.pixels().iter().map(|p| luminance(*p)).collect()
}
