//! Solid-angle-weighted least-squares fit of `ambient + gamma * Gaussian`.
//!
//! The center starts at the brightest pixel of a pre-blurred luminance map
//! and all seven parameters (longitude, colatitude, sigma, gamma, RGB ambient)
//! are refined with damped Gauss-Newton at the map's native resolution.

use std::f64::consts::PI;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::{GaussianLight, SIGMA_FLOOR, SIGMA_MAX};
use crate::envmap::{angle_between, angles_to_direction, EnvironmentMap};
use crate::error::{Error, Result};

/// Fits are initialized on maps reduced to this width.
pub const FIT_WORKING_WIDTH: usize = 64;
/// Minimum peak-to-mean luminance for a map to have a dominant light.
pub const MIN_PEAK_TO_MEAN: f64 = 1.5;

const INIT_SIGMA: f64 = 0.15;
const INIT_BLUR_PIXELS: f64 = 3.0;
const MAX_ITERATIONS: usize = 200;
const REL_TOLERANCE: f64 = 1e-8;
const INITIAL_DAMPING: f64 = 1e-3;
const DAMPING_UP: f64 = 10.0;
const DAMPING_DOWN: f64 = 3.0;
const MAX_DAMPING: f64 = 1e16;
const N_PARAMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightFit {
    pub light: GaussianLight,
    pub ambient: [f64; 3],
    pub rms_residual: f64,
    pub peak_to_mean: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Params {
    phi: f64,
    theta: f64,
    sigma: f64,
    gamma: f64,
    ambient: [f64; 3],
}

impl Params {
    fn center(&self) -> DVec3 {
        angles_to_direction(self.phi, self.theta)
    }

    fn stepped(&self, delta: &[f64; N_PARAMS]) -> Self {
        let mut theta = self.theta + delta[1];
        let mut phi = self.phi + delta[0];
        // crossing a pole flips longitude
        if theta < 0.0 {
            theta = -theta;
            phi += PI;
        } else if theta > PI {
            theta = 2.0 * PI - theta;
            phi += PI;
        }
        Params {
            phi: (phi + PI).rem_euclid(2.0 * PI) - PI,
            theta: theta.clamp(0.0, PI),
            sigma: (self.sigma + delta[2]).clamp(SIGMA_FLOOR, SIGMA_MAX),
            gamma: (self.gamma + delta[3]).max(1e-12),
            ambient: std::array::from_fn(|c| (self.ambient[c] + delta[4 + c]).max(0.0)),
        }
    }
}

struct Problem<'a> {
    env: &'a EnvironmentMap,
    dirs: Vec<DVec3>,
    weights: Vec<f64>,
}

impl Problem<'_> {
    fn objective(&self, p: &Params) -> f64 {
        let c = p.center();
        let inv = 1.0 / (2.0 * p.sigma * p.sigma);
        let mut sum = 0.0;
        for (k, px) in self.env.pixels().iter().enumerate() {
            let a = angle_between(self.dirs[k], c);
            let g = p.gamma * (-a * a * inv).exp();
            let mut r2 = 0.0;
            for ch in 0..3 {
                let r = px[ch] as f64 - p.ambient[ch] - g;
                r2 += r * r;
            }
            sum += self.weights[k] * r2;
        }
        sum
    }

    /// Accumulates `J^T W J` and `J^T W r` with `r = data - model`.
    fn normal_equations(&self, p: &Params) -> ([[f64; N_PARAMS]; N_PARAMS], [f64; N_PARAMS]) {
        let c = p.center();
        let (st, ct) = p.theta.sin_cos();
        let (sp, cp) = p.phi.sin_cos();
        let dc_dphi = DVec3::new(-st * sp, 0.0, st * cp);
        let dc_dtheta = DVec3::new(ct * cp, -st, ct * sp);
        let s2 = p.sigma * p.sigma;
        let mut jtj = [[0.0; N_PARAMS]; N_PARAMS];
        let mut jtr = [0.0; N_PARAMS];
        for (k, px) in self.env.pixels().iter().enumerate() {
            let d = self.dirs[k];
            let alpha = angle_between(d, c);
            let g = (-alpha * alpha / (2.0 * s2)).exp();
            // d(alpha)/d(c) = -d / sin(alpha); alpha/sin(alpha) stays bounded near 0
            let ratio = if alpha < 1e-6 {
                1.0
            } else {
                alpha / alpha.sin().max(1e-12)
            };
            let common = p.gamma * g * ratio / s2;
            let d_phi = common * d.dot(dc_dphi);
            let d_theta = common * d.dot(dc_dtheta);
            let d_sigma = p.gamma * g * alpha * alpha / (s2 * p.sigma);
            let d_gamma = g;
            let w = self.weights[k];
            for ch in 0..3 {
                let mut j = [d_phi, d_theta, d_sigma, d_gamma, 0.0, 0.0, 0.0];
                j[4 + ch] = 1.0;
                let r = px[ch] as f64 - p.ambient[ch] - p.gamma * g;
                for a in 0..N_PARAMS {
                    if j[a] == 0.0 {
                        continue;
                    }
                    jtr[a] += w * j[a] * r;
                    for b in a..N_PARAMS {
                        jtj[a][b] += w * j[a] * j[b];
                    }
                }
            }
        }
        for a in 0..N_PARAMS {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        (jtj, jtr)
    }
}

/// Fits `ambient + gamma * exp(-angle(d, c)^2 / (2 sigma^2))` to `env`.
///
/// Fails with [`Error::ZeroEnvironment`] on an all-black map and with
/// [`Error::NoDominantLight`] when the peak-to-mean luminance ratio is below
/// [`MIN_PEAK_TO_MEAN`]. The result depends only on the input.
pub fn fit_gaussian(env: &EnvironmentMap) -> Result<LightFit> {
    let (w, h) = (env.width(), env.height());
    let weights_by_row = env.weights();
    let weights: Vec<f64> = (0..w * h).map(|k| weights_by_row.row(k / w)).collect();
    let luma = env.luminance();

    let peak = luma.iter().copied().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::ZeroEnvironment);
    }
    let mean = luma.iter().zip(&weights).map(|(l, w)| l * w).sum::<f64>()
        / weights.iter().sum::<f64>();
    let peak_to_mean = peak / mean;
    if peak_to_mean < MIN_PEAK_TO_MEAN {
        return Err(Error::NoDominantLight { peak_to_mean });
    }

    let init = initial_params(env, &luma)?;
    let problem = Problem {
        env,
        dirs: (0..w * h).map(|k| env.direction(k % w, k / w)).collect(),
        weights,
    };

    let mut params = init;
    let mut f = problem.objective(&params);
    let mut damping = INITIAL_DAMPING;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && f > 0.0 && damping < MAX_DAMPING {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&params);
        let scale = (0..N_PARAMS).map(|a| jtj[a][a]).fold(0.0, f64::max);
        let mut lhs = jtj;
        for (a, row) in lhs.iter_mut().enumerate() {
            row[a] += damping * (jtj[a][a] + 1e-12 * scale);
        }
        let Some(delta) = solve(lhs, jtr) else {
            damping *= DAMPING_UP;
            continue;
        };
        let candidate = params.stepped(&delta);
        let f_new = problem.objective(&candidate);
        if f_new < f {
            let rel = (f - f_new) / f;
            params = candidate;
            f = f_new;
            damping /= DAMPING_DOWN;
            if rel < REL_TOLERANCE {
                break;
            }
        } else {
            damping *= DAMPING_UP;
        }
    }

    let center = params.center();
    let (mut u, v) = crate::envmap::direction_to_uv(center);
    if u >= 1.0 {
        u = 0.0;
    }
    let light = GaussianLight::new(u, v, params.sigma, params.gamma)?;
    let total_w: f64 = problem.weights.iter().sum();
    let rms_residual = (f / (3.0 * total_w)).sqrt();
    Ok(LightFit {
        light,
        ambient: params.ambient,
        rms_residual,
        peak_to_mean,
        iterations,
    })
}

fn initial_params(env: &EnvironmentMap, luma: &[f64]) -> Result<Params> {
    let (w, h) = (env.width(), env.height());
    let gray = EnvironmentMap::new(w, h, luma.iter().map(|&l| [l as f32; 3]).collect())?;
    let gray = if w > FIT_WORKING_WIDTH && w % FIT_WORKING_WIDTH == 0 {
        gray.downsample(w / FIT_WORKING_WIDTH)?
    } else {
        gray
    };
    let beta = (INIT_BLUR_PIXELS * PI / gray.height() as f64).min(PI);
    let blurred = gray.diffuse(beta)?;
    let mut best = 0usize;
    for (k, px) in blurred.pixels().iter().enumerate() {
        if px[0] > blurred.pixels()[best][0] {
            best = k;
        }
    }
    let dir = gray.direction(best % gray.width(), best / gray.width());
    let phi = dir.z.atan2(dir.x);
    let theta = dir.y.clamp(-1.0, 1.0).acos();

    let mut sorted = luma.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median_luma = sorted[sorted.len() / 2];
    let peak = sorted[sorted.len() - 1];
    let ambient = std::array::from_fn(|c| {
        let mut ch: Vec<f32> = env.pixels().iter().map(|p| p[c]).collect();
        ch.sort_by(f32::total_cmp);
        ch[ch.len() / 2] as f64
    });
    Ok(Params {
        phi,
        theta,
        sigma: INIT_SIGMA,
        gamma: (peak - median_luma).max(1e-6 * peak),
        ambient,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: [[f64; N_PARAMS]; N_PARAMS], mut b: [f64; N_PARAMS]) -> Option<[f64; N_PARAMS]> {
    for col in 0..N_PARAMS {
        let pivot = (col..N_PARAMS).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N_PARAMS {
            let f = a[row][col] / a[col][col];
            for k in col..N_PARAMS {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N_PARAMS];
    for row in (0..N_PARAMS).rev() {
        let mut s = b[row];
        for k in row + 1..N_PARAMS {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
