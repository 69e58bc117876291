//! Equirectangular environment maps.
//!
//! Pixel `(i, j)` covers longitude `phi = 2*pi*(i + 0.5)/W - pi` and colatitude
//! `theta = pi*(j + 0.5)/H`, and looks along
//! `d = (sin(theta) cos(phi), cos(theta), sin(theta) sin(phi))` with +Y up.
//! Normalized coordinates are `u = (phi + pi) / 2pi` and `v = theta / pi`.

use std::f64::consts::PI;
use std::path::Path;

use glam::DVec3;
use rayon::prelude::*;

use crate::color::{luminance, Rgb};
use crate::error::{Error, Result};
use crate::io::{self, Format, Raster};

/// Default blur angle for light diffusion, radians.
pub const DEFAULT_DIFFUSION_BETA: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
}

impl EnvironmentMap {
    pub fn new(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} map",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().flatten().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::invalid(format!(
                "radiance must be finite and >= 0, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn uniform(width: usize, value: Rgb) -> Result<Self> {
        Self::new(width, width / 2, vec![value; width * (width / 2)])
    }

    pub fn zeros(width: usize) -> Result<Self> {
        Self::uniform(width, [0.0; 3])
    }

    /// Evaluates `f` at every pixel-center direction.
    pub fn from_fn(width: usize, f: impl Fn(DVec3) -> Rgb + Sync) -> Result<Self> {
        let height = width / 2;
        check_dims(width, height)?;
        let data = (0..width * height)
            .into_par_iter()
            .map(|k| f(pixel_direction(k % width, k / width, width, height)))
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn pixel(&self, i: usize, j: usize) -> Rgb {
        self.data[j * self.width + i]
    }

    pub fn direction(&self, i: usize, j: usize) -> DVec3 {
        pixel_direction(i, j, self.width, self.height)
    }

    pub fn weights(&self) -> SolidAngleWeights {
        SolidAngleWeights::new(self.width, self.height)
    }

    /// Solid-angle-weighted integral of radiance per channel.
    pub fn energy(&self) -> [f64; 3] {
        let w = self.weights();
        let mut acc = [0.0f64; 3];
        for (k, px) in self.data.iter().enumerate() {
            let wk = w.row(k / self.width);
            for c in 0..3 {
                acc[c] += wk * px[c] as f64;
            }
        }
        acc
    }

    /// Mean radiance over the sphere per channel.
    pub fn mean_radiance(&self) -> [f64; 3] {
        self.energy().map(|e| e / (4.0 * PI))
    }

    pub fn luminance(&self) -> Vec<f64> {
        self.data.iter().map(|p| luminance(*p)).collect()
    }

    /// Bilinear lookup with longitude wraparound and colatitude clamped at
    /// the pole rows.
    pub fn sample(&self, d: DVec3) -> Result<Rgb> {
        let len = d.length();
        if !len.is_finite() || (len - 1.0).abs() > 1e-6 {
            return Err(Error::NonUnitDirection(len));
        }
        Ok(self.sample_unchecked(d))
    }

    pub(crate) fn sample_unchecked(&self, d: DVec3) -> Rgb {
        let (u, v) = direction_to_uv(d);
        let w = self.width as isize;
        let h = self.height;
        let x = u * self.width as f64 - 0.5;
        let y = (v * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let x0 = x.floor();
        let fx = x - x0;
        let y0 = y.floor();
        let fy = y - y0;
        let i0 = (x0 as isize).rem_euclid(w) as usize;
        let i1 = (i0 + 1) % self.width;
        let j0 = y0 as usize;
        let j1 = (j0 + 1).min(h - 1);
        let p00 = self.pixel(i0, j0);
        let p10 = self.pixel(i1, j0);
        let p01 = self.pixel(i0, j1);
        let p11 = self.pixel(i1, j1);
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = (top * (1.0 - fy) + bottom * fy) as f32;
        }
        out
    }

    /// Circular longitude shift by `round(delta_u * W)` pixels; content at
    /// `u` moves to `u + delta_u`.
    pub fn rotate(&self, delta_u: f64) -> Self {
        let shift = (delta_u * self.width as f64).round() as i64;
        let shift = shift.rem_euclid(self.width as i64) as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width) {
            for i in 0..self.width {
                data.push(row[(i + self.width - shift) % self.width]);
            }
        }
        Self { data, ..*self }
    }

    pub fn scale(&self, k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("scale must be >= 0, got {k}")));
        }
        Ok(self.map(|p| p.map(|c| (c as f64 * k) as f32)))
    }

    /// `a * self + b * other`, pixelwise. Negative results are rejected.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(p, q)| std::array::from_fn(|c| (a * p[c] as f64 + b * q[c] as f64) as f32))
            .collect();
        Self::new(self.width, self.height, data)
    }

    pub(crate) fn map(&self, f: impl Fn(Rgb) -> Rgb) -> Self {
        Self {
            data: self.data.iter().map(|p| f(*p)).collect(),
            ..*self
        }
    }

    /// Exact spherical Gaussian blur, normalized per output pixel:
    ///
    /// `out(p) = sum_q w(q) K(p,q) env(q) / sum_q w(q) K(p,q)` with
    /// `K = exp(-angle^2 / (2 beta^2))`.
    ///
    /// Cost is O((WH)^2); intended for maps up to 128x64. The kernel only
    /// depends on the two rows and the column offset, so it is tabulated once
    /// per output row.
    pub fn diffuse(&self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= PI) {
            return Err(Error::invalid(format!("blur angle must be in (0, pi], got {beta}")));
        }
        let (w, h) = (self.width, self.height);
        let weights = self.weights();
        let thetas: Vec<f64> = (0..h).map(|j| row_colatitude(j, h)).collect();
        let inv_two_beta2 = 1.0 / (2.0 * beta * beta);

        let rows: Vec<Vec<Rgb>> = (0..h)
            .into_par_iter()
            .map(|jp| {
                let (sp, cp) = thetas[jp].sin_cos();
                // kernel[jq * w + di], already multiplied by w(jq)
                let mut kernel = vec![0.0f64; h * w];
                let mut norm = 0.0f64;
                for jq in 0..h {
                    let (sq, cq) = thetas[jq].sin_cos();
                    let wq = weights.row(jq);
                    for di in 0..w {
                        let dphi = 2.0 * PI * di as f64 / w as f64;
                        let a = DVec3::new(sp, cp, 0.0);
                        let b = DVec3::new(sq * dphi.cos(), cq, sq * dphi.sin());
                        let alpha = angle_between(a, b);
                        let k = wq * (-alpha * alpha * inv_two_beta2).exp();
                        kernel[jq * w + di] = k;
                        norm += k;
                    }
                }
                (0..w)
                    .map(|ip| {
                        let mut acc = [0.0f64; 3];
                        for jq in 0..h {
                            let krow = &kernel[jq * w..(jq + 1) * w];
                            let src = &self.data[jq * w..(jq + 1) * w];
                            for (iq, px) in src.iter().enumerate() {
                                let k = krow[(iq + w - ip) % w];
                                acc[0] += k * px[0] as f64;
                                acc[1] += k * px[1] as f64;
                                acc[2] += k * px[2] as f64;
                            }
                        }
                        acc.map(|a| (a / norm) as f32)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            data: rows.into_iter().flatten().collect(),
            ..*self
        })
    }

    /// Solid-angle-weighted box reduction by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::invalid(format!(
                "cannot reduce {}x{} by {factor}",
                self.width, self.height
            )));
        }
        let (ow, oh) = (self.width / factor, self.height / factor);
        let weights = self.weights();
        let mut data = Vec::with_capacity(ow * oh);
        for oj in 0..oh {
            for oi in 0..ow {
                let mut acc = [0.0f64; 3];
                let mut wsum = 0.0;
                for j in oj * factor..(oj + 1) * factor {
                    let wj = weights.row(j);
                    for i in oi * factor..(oi + 1) * factor {
                        let p = self.pixel(i, j);
                        for c in 0..3 {
                            acc[c] += wj * p[c] as f64;
                        }
                        wsum += wj;
                    }
                }
                data.push(acc.map(|a| (a / wsum) as f32));
            }
        }
        Self::new(ow, oh, data)
    }

    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            pixels: self.data.clone(),
        }
    }

    pub fn from_raster(raster: Raster) -> Result<Self> {
        if raster.width < 4 || raster.width % 2 != 0 || raster.height * 2 != raster.width {
            return Err(Error::AspectRatio {
                width: raster.width,
                height: raster.height,
            });
        }
        Self::new(raster.width, raster.height, raster.pixels)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let format = Format::sniff(bytes)?;
        Self::from_raster(io::decode(bytes, format)?)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < 4 || width % 2 != 0 || height * 2 != width {
        return Err(Error::AspectRatio { width, height });
    }
    Ok(())
}

/// Reads `.hdr`, `.pfm` or sRGB `.png` into linear radiance. Maps that are not
/// exactly 2:1 are rejected, never resampled.
pub fn load_envmap(path: &Path) -> Result<EnvironmentMap> {
    EnvironmentMap::from_raster(io::read_raster(path)?)
}

/// `.hdr` and `.pfm` store linear values; `.png` is clipped to [0, 1] and
/// sRGB-encoded at exposure 1.
pub fn save_envmap(env: &EnvironmentMap, path: &Path) -> Result<()> {
    io::write_raster(&env.to_raster(), path)
}

pub fn sample_env(env: &EnvironmentMap, d: DVec3) -> Result<Rgb> {
    env.sample(d)
}

pub fn rotate_env(env: &EnvironmentMap, delta_u: f64) -> EnvironmentMap {
    env.rotate(delta_u)
}

pub fn scale_env(env: &EnvironmentMap, k: f64) -> Result<EnvironmentMap> {
    env.scale(k)
}

pub fn diffuse_env(env: &EnvironmentMap, beta: f64) -> Result<EnvironmentMap> {
    env.diffuse(beta)
}

/// Per-row pixel solid angles.
///
/// Each row gets the exact area of its latitude band split evenly over the
/// columns, `(2pi/W) * (cos(theta_top) - cos(theta_bottom))`, which equals
/// `sin(theta_j) * (2pi/W) * (pi/H)` up to a constant factor and sums to 4pi
/// at every resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidAngleWeights {
    width: usize,
    rows: Vec<f64>,
}

impl SolidAngleWeights {
    pub fn new(width: usize, height: usize) -> Self {
        let dphi = 2.0 * PI / width as f64;
        let half = PI / (2.0 * height as f64);
        let rows = (0..height)
            .map(|j| dphi * 2.0 * row_colatitude(j, height).sin() * half.sin())
            .collect();
        Self { width, rows }
    }

    pub fn row(&self, j: usize) -> f64 {
        self.rows[j]
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().sum::<f64>() * self.width as f64
    }
}

pub fn row_colatitude(j: usize, height: usize) -> f64 {
    PI * (j as f64 + 0.5) / height as f64
}

pub fn column_longitude(i: usize, width: usize) -> f64 {
    2.0 * PI * (i as f64 + 0.5) / width as f64 - PI
}

pub fn pixel_direction(i: usize, j: usize, width: usize, height: usize) -> DVec3 {
    angles_to_direction(column_longitude(i, width), row_colatitude(j, height))
}

pub fn angles_to_direction(phi: f64, theta: f64) -> DVec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    DVec3::new(st * cp, ct, st * sp)
}

pub fn uv_to_direction(u: f64, v: f64) -> DVec3 {
    angles_to_direction(2.0 * PI * u - PI, PI * v)
}

/// Normalized `(u, v)` of a unit direction; `u` in [0, 1), `v` in [0, 1].
pub fn direction_to_uv(d: DVec3) -> (f64, f64) {
    let phi = d.z.atan2(d.x);
    let mut u = (phi + PI) / (2.0 * PI);
    if u >= 1.0 {
        u -= 1.0;
    }
    let v = d.y.clamp(-1.0, 1.0).acos() / PI;
    (u, v)
}

/// Great-circle angle between unit vectors, accurate at small angles.
pub fn angle_between(a: DVec3, b: DVec3) -> f64 {
    let chord = (a - b).length();
    2.0 * (0.5 * chord).min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_map(width: usize, seed: u32) -> EnvironmentMap {
        let h = width / 2;
        let data = (0..width * h)
            .map(|k| {
                let x = (k as u32).wrapping_mul(2_654_435_761).wrapping_add(seed);
                let f = |s: u32| ((x.rotate_left(s) % 1000) as f32) / 250.0;
                [f(0), f(7), f(13)]
            })
            .collect();
        EnvironmentMap::new(width, h, data).unwrap()
    }

    #[test]
    fn weights_sum_to_four_pi() {
        for w in [4, 8, 16, 64, 128, 512] {
            let total = SolidAngleWeights::new(w, w / 2).total();
            assert!((total / (4.0 * PI) - 1.0).abs() < 1e-3, "{w}: {total}");
        }
    }

    #[test]
    fn weights_follow_sine_profile() {
        let w = SolidAngleWeights::new(64, 32);
        let r = w.row(3) / w.row(16);
        let expect = row_colatitude(3, 32).sin() / row_colatitude(16, 32).sin();
        assert!((r - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            EnvironmentMap::new(64, 33, vec![[0.0; 3]; 64 * 33]),
            Err(Error::AspectRatio { .. })
        ));
        assert!(EnvironmentMap::new(2, 1, vec![[0.0; 3]; 2]).is_err());
        assert!(EnvironmentMap::new(4, 2, vec![[-1.0, 0.0, 0.0]; 8]).is_err());
        assert!(EnvironmentMap::new(4, 2, vec![[f32::NAN, 0.0, 0.0]; 8]).is_err());
    }

    #[test]
    fn uv_direction_round_trip() {
        for &(u, v) in &[(0.0, 0.5), (0.25, 0.1), (0.999, 0.9), (0.5, 0.5)] {
            let (u2, v2) = direction_to_uv(uv_to_direction(u, v));
            assert!((u2 - u).abs() < 1e-12 && (v2 - v).abs() < 1e-12, "{u},{v}");
        }
    }

    #[test]
    fn sample_constant_field() {
        let env = EnvironmentMap::uniform(16, [0.3; 3]).unwrap();
        for d in [DVec3::X, DVec3::Y, -DVec3::Y, DVec3::new(0.6, 0.0, 0.8)] {
            let s = env.sample(d).unwrap();
            for c in s {
                assert!((c - 0.3).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sample_at_pixel_centers_is_exact() {
        let env = noise_map(32, 7);
        for j in 0..16 {
            for i in 0..32 {
                assert_eq!(env.sample(env.direction(i, j)).unwrap(), env.pixel(i, j));
            }
        }
    }

    #[test]
    fn sample_straddling_seam_matches_wraparound() {
        let env = noise_map(16, 3);
        // u = 0 exactly sits halfway between column W-1 and column 0
        let v = (5.0 + 0.5) / 8.0;
        let s = env.sample(uv_to_direction(0.0, v)).unwrap();
        let (a, b) = (env.pixel(15, 5), env.pixel(0, 5));
        for c in 0..3 {
            assert!((s[c] - 0.5 * (a[c] + b[c])).abs() < 1e-5);
        }
    }

    #[test]
    fn sample_rejects_non_unit() {
        let env = EnvironmentMap::zeros(8).unwrap();
        assert!(matches!(
            env.sample(DVec3::new(1.0, 1.0, 0.0)),
            Err(Error::NonUnitDirection(_))
        ));
    }

    #[test]
    fn rotation_identity_involution_and_group() {
        let env = noise_map(32, 1);
        assert_eq!(env.rotate(0.0), env);
        assert_eq!(env.rotate(0.5).rotate(0.5), env);
        assert_eq!(env.rotate(0.25).rotate(0.5), env.rotate(0.75));
        assert_eq!(env.rotate(0.75).rotate(0.5), env.rotate(0.25));
        let (a, b) = (env.rotate(0.25).energy(), env.energy());
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() <= 1e-12 * b[c]);
        }
    }

    #[test]
    fn rotation_moves_content_forward_in_u() {
        let mut data = vec![[0.0f32; 3]; 8 * 4];
        data[8 + 1] = [1.0; 3];
        let env = EnvironmentMap::new(8, 4, data).unwrap();
        assert_eq!(env.rotate(0.25).pixel(3, 1), [1.0; 3]);
    }

    #[test]
    fn scale_rules() {
        let env = noise_map(8, 2);
        assert_eq!(env.scale(1.0).unwrap(), env);
        assert!(env.scale(0.0).unwrap().pixels().iter().flatten().all(|c| *c == 0.0));
        assert!(env.scale(-1.0).is_err());
    }

    #[test]
    fn diffuse_keeps_uniform_map() {
        let env = EnvironmentMap::uniform(32, [0.7, 0.2, 1.5]).unwrap();
        let out = env.diffuse(0.8).unwrap();
        for (p, q) in out.pixels().iter().zip(env.pixels()) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn diffuse_preserves_energy() {
        let env = noise_map(64, 9);
        for beta in [0.05, 0.2, 0.8, 2.0, PI] {
            let out = env.diffuse(beta).unwrap();
            let (e0, e1) = (env.energy(), out.energy());
            for c in 0..3 {
                assert!((e1[c] / e0[c] - 1.0).abs() < 1e-3, "beta {beta}: {e0:?} {e1:?}");
            }
            assert!(out.pixels().iter().flatten().all(|c| *c >= 0.0));
        }
    }

    #[test]
    fn diffuse_rejects_bad_beta() {
        let env = EnvironmentMap::zeros(8).unwrap();
        assert!(env.diffuse(0.0).is_err());
        assert!(env.diffuse(-1.0).is_err());
        assert!(env.diffuse(4.0).is_err());
    }

    #[test]
    fn downsample_keeps_energy() {
        let env = noise_map(64, 4);
        let small = env.downsample(4).unwrap();
        assert_eq!((small.width(), small.height()), (16, 8));
        let (a, b) = (env.energy(), small.energy());
        for c in 0..3 {
            assert!((a[c] / b[c] - 1.0).abs() < 1e-3);
        }
        assert!(env.downsample(3).is_err());
    }

    #[test]
    fn angle_between_is_accurate_for_tiny_angles() {
        let a = DVec3::X;
        let b = DVec3::new(1e-9f64.cos(), 1e-9f64.sin(), 0.0);
        assert!((angle_between(a, b) - 1e-9).abs() < 1e-18);
        assert!((angle_between(DVec3::X, -DVec3::X) - PI).abs() < 1e-12);
    }
}
