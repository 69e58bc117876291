//! Deterministic synthetic light stage.
//!
//! A tiny direct-lighting raytracer over spheres and a ground plane. It
//! produces one-light-at-a-time basis images with hard, binary shadows and a
//! brute-force environment-lit render that serves as ground truth for the
//! OLAT quadrature.

use std::f64::consts::PI;

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::envmap::EnvironmentMap;
use crate::error::{Error, Result};
use crate::image::LinearImage;
use crate::olat::OlatBasis;

mod scene;

pub use scene::{BuiltinScene, Camera, GroundPlane, Hit, SceneSpec, Sphere, Surface, SCENE_SCHEMA};

/// Seed used by [`raytrace_env`].
pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

fn check_unit(d: DVec3) -> Result<()> {
    let len = d.length();
    if !len.is_finite() || (len - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnitDirection(len));
    }
    Ok(())
}

/// First hit for every pixel, row-major.
pub fn primary_hits(scene: &SceneSpec, width: usize, height: usize) -> Vec<Option<Hit>> {
    (0..width * height)
        .into_par_iter()
        .map(|k| {
            let (o, d) = scene.camera.primary_ray(k % width, k / width, width, height);
            scene.intersect(o, d, 0.0)
        })
        .collect()
}

pub fn ground_mask(scene: &SceneSpec, width: usize, height: usize) -> Vec<bool> {
    primary_hits(scene, width, height)
        .iter()
        .map(|h| matches!(h, Some(Hit { surface: Surface::Ground, .. })))
        .collect()
}

/// Scene under a unit-radiance directional light from `d`: Lambertian
/// `albedo * max(0, n.d) / pi` with one binary shadow ray. Background pixels
/// are black and masked out.
pub fn raytrace_directional(
    scene: &SceneSpec,
    d: DVec3,
    width: usize,
    height: usize,
) -> Result<LinearImage> {
    check_unit(d)?;
    let hits = primary_hits(scene, width, height);
    let data = hits
        .par_iter()
        .map(|hit| match hit {
            Some(h) => {
                let cos = h.normal.dot(d);
                if cos <= 0.0 || scene.occluded(h, d) {
                    [0.0; 3]
                } else {
                    h.albedo.map(|a| (a * cos / PI) as f32)
                }
            }
            None => [0.0; 3],
        })
        .collect();
    let mask = hits.iter().map(Option::is_some).collect();
    LinearImage::new(width, height, data)?.with_mask(mask)
}

/// Ground-plane pixels whose shadow ray toward `d` is blocked. Empty when the
/// light is at or below the horizon.
pub fn umbra_mask(scene: &SceneSpec, d: DVec3, width: usize, height: usize) -> Result<Vec<bool>> {
    check_unit(d)?;
    let hits = primary_hits(scene, width, height);
    Ok(hits
        .iter()
        .map(|hit| match hit {
            Some(h) if h.surface == Surface::Ground => d.y > 0.0 && scene.occluded(h, d),
            _ => false,
        })
        .collect())
}

/// Fibonacci-sphere directions, `y` from near +1 down to near -1.
pub fn fibonacci_directions(n: usize) -> Vec<DVec3> {
    let golden = PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            DVec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// OLAT basis with `n_lights` Fibonacci directions weighted `4pi/n` each.
pub fn build_olat_basis(
    scene: &SceneSpec,
    n_lights: usize,
    width: usize,
    height: usize,
) -> Result<OlatBasis> {
    if n_lights < 4 {
        return Err(Error::invalid(format!("need at least 4 lights, got {n_lights}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("image size must be non-zero"));
    }
    scene.validate()?;
    let directions = fibonacci_directions(n_lights);
    let images = directions
        .par_iter()
        .map(|&d| raytrace_directional(scene, d, width, height))
        .collect::<Result<Vec<_>>>()?;
    let weights = vec![4.0 * PI / n_lights as f64; n_lights];
    OlatBasis::new(directions, weights, images)
}

pub fn raytrace_env(
    scene: &SceneSpec,
    env: &EnvironmentMap,
    samples_per_pixel: usize,
    width: usize,
    height: usize,
) -> Result<LinearImage> {
    raytrace_env_seeded(scene, env, samples_per_pixel, width, height, DEFAULT_SEED)
}

/// Stratified cosine-weighted hemisphere estimate of the direct-lighting
/// integral with binary shadow rays. Each pixel draws from its own stream
/// derived from `seed`, so results do not depend on thread count.
pub fn raytrace_env_seeded(
    scene: &SceneSpec,
    env: &EnvironmentMap,
    samples_per_pixel: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<LinearImage> {
    if samples_per_pixel == 0 {
        return Err(Error::invalid("samples per pixel must be >= 1"));
    }
    let hits = primary_hits(scene, width, height);
    let strata = (samples_per_pixel as f64).sqrt().floor() as usize;
    let data = hits
        .par_iter()
        .enumerate()
        .map(|(k, hit)| {
            let Some(h) = hit else {
                return [0.0; 3];
            };
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let (t, b) = orthonormal_basis(h.normal);
            let mut acc = [0.0f64; 3];
            for s in 0..samples_per_pixel {
                let (cell_x, cell_y, n) = if s < strata * strata {
                    (s % strata, s / strata, strata)
                } else {
                    (0, 0, 1)
                };
                let xi1 = (cell_x as f64 + rng.random::<f64>()) / n as f64;
                let xi2 = (cell_y as f64 + rng.random::<f64>()) / n as f64;
                let r = xi1.sqrt();
                let phi = 2.0 * PI * xi2;
                let local_z = (1.0 - xi1).max(0.0).sqrt();
                let dir = (t * (r * phi.cos()) + b * (r * phi.sin()) + h.normal * local_z)
                    .normalize();
                if scene.occluded(h, dir) {
                    continue;
                }
                let l = env.sample_unchecked(dir);
                for c in 0..3 {
                    acc[c] += l[c] as f64;
                }
            }
            std::array::from_fn(|c| (h.albedo[c] * acc[c] / samples_per_pixel as f64) as f32)
        })
        .collect();
    let mask = hits.iter().map(Option::is_some).collect();
    LinearImage::new(width, height, data)?.with_mask(mask)
}

fn orthonormal_basis(n: DVec3) -> (DVec3, DVec3) {
    let helper = if n.x.abs() < 0.9 { DVec3::X } else { DVec3::Y };
    let t = helper.cross(n).normalize();
    (t, n.cross(t))
}
