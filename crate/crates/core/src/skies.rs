//! Procedural outdoor environment maps: a sky gradient, a darker ground and
//! an optional sun.

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::envmap::{angle_between, uv_to_direction, EnvironmentMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sky {
    pub zenith: [f64; 3],
    pub horizon: [f64; 3],
    pub ground: [f64; 3],
    pub sun: Option<Sun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sun {
    pub u: f64,
    pub v: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl Sky {
    pub fn radiance(&self, d: DVec3) -> [f64; 3] {
        let mut out = if d.y >= 0.0 {
            let t = d.y.sqrt();
            std::array::from_fn(|c| self.horizon[c] * (1.0 - t) + self.zenith[c] * t)
        } else {
            self.ground
        };
        if let Some(s) = self.sun {
            let a = angle_between(d, uv_to_direction(s.u, s.v));
            let g = s.gamma * (-a * a / (2.0 * s.sigma * s.sigma)).exp();
            out.iter_mut().for_each(|c| *c += g);
        }
        out
    }

    pub fn render(&self, width: usize) -> Result<EnvironmentMap> {
        EnvironmentMap::from_fn(width, |d| self.radiance(d).map(|c| c as f32))
    }
}

pub const BUILTIN_SKIES: [&str; 3] = ["sunny", "sunset", "overcast"];

/// Named procedural skies. `overcast` has no dominant light.
pub fn builtin_sky(name: &str) -> Result<Sky> {
    let sky = match name {
        "sunny" => Sky {
            zenith: [0.25, 0.4, 0.8],
            horizon: [0.6, 0.7, 0.85],
            ground: [0.15, 0.13, 0.1],
            sun: Some(Sun {
                u: 0.25,
                v: 0.25,
                sigma: 0.08,
                gamma: 6.0,
            }),
        },
        "sunset" => Sky {
            zenith: [0.2, 0.25, 0.5],
            horizon: [0.9, 0.55, 0.3],
            ground: [0.1, 0.08, 0.07],
            sun: Some(Sun {
                u: 0.6,
                v: 0.4,
                sigma: 0.12,
                gamma: 4.0,
            }),
        },
        "overcast" => Sky {
            zenith: [0.55, 0.55, 0.58],
            horizon: [0.5, 0.5, 0.52],
            ground: [0.35, 0.34, 0.33],
            sun: None,
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown builtin environment {other:?}; known: {}",
                BUILTIN_SKIES.join(", ")
            )))
        }
    };
    Ok(sky)
}

pub fn builtin_env(name: &str, width: usize) -> Result<EnvironmentMap> {
    builtin_sky(name)?.render(width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gausslight::fit_gaussian;

    #[test]
    fn sunny_sky_fits_near_its_sun() {
        let env = builtin_env("sunny", 64).unwrap();
        let fit = fit_gaussian(&env).unwrap();
        assert!((fit.light.u() - 0.25).abs() < 1.0 / 64.0, "{fit:?}");
        assert!((fit.light.v() - 0.25).abs() < 1.0 / 64.0);
    }

    #[test]
    fn overcast_has_no_dominant_light() {
        let env = builtin_env("overcast", 64).unwrap();
        assert!(matches!(
            fit_gaussian(&env),
            Err(Error::NoDominantLight { .. })
        ));
    }

    #[test]
    fn unknown_name() {
        assert!(builtin_env("mars", 16).is_err());
    }
}
