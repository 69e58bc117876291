//! The editable dominant light: an isotropic Gaussian in great-circle angle
//! on the sphere, placed at normalized map coordinates `(u, v)`.

use std::f64::consts::PI;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::envmap::{angle_between, uv_to_direction, EnvironmentMap};
use crate::error::{Error, Result};

mod feature;
mod fit;

pub use feature::{
    from_feature_map, to_feature_map, FeatureManifest, LightFeatureMap, FEATURE_PLANES,
    FEATURE_SCHEMA, FEATURE_SIZE,
};
pub use fit::{fit_gaussian, LightFit, FIT_WORKING_WIDTH, MIN_PEAK_TO_MEAN};

/// Largest angular standard deviation, radians.
pub const SIGMA_MAX: f64 = PI / 4.0;
/// Peak radiance that maps to 1.0 in the feature map.
pub const GAMMA_MAX: f64 = 8.0;

const SIGMA_FLOOR: f64 = 1e-4;
const GAMMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLight", into = "RawLight")]
pub struct GaussianLight {
    u: f64,
    v: f64,
    sigma: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLight {
    u: f64,
    v: f64,
    sigma: f64,
    gamma: f64,
}

impl TryFrom<RawLight> for GaussianLight {
    type Error = Error;

    fn try_from(r: RawLight) -> Result<Self> {
        GaussianLight::new(r.u, r.v, r.sigma, r.gamma)
    }
}

impl From<GaussianLight> for RawLight {
    fn from(l: GaussianLight) -> Self {
        RawLight {
            u: l.u,
            v: l.v,
            sigma: l.sigma,
            gamma: l.gamma,
        }
    }
}

impl GaussianLight {
    pub fn new(u: f64, v: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::invalid(format!("u must be in [0, 1), got {u}")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("v must be in [0, 1], got {v}")));
        }
        if !(sigma > 0.0 && sigma <= SIGMA_MAX) {
            return Err(Error::invalid(format!(
                "sigma must be in (0, {SIGMA_MAX}], got {sigma}"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(Self { u, v, sigma, gamma })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn center(&self) -> DVec3 {
        uv_to_direction(self.u, self.v)
    }

    /// Radiance toward `d` (white light).
    pub fn radiance(&self, d: DVec3) -> f64 {
        let alpha = angle_between(d, self.center());
        self.gamma * (-alpha * alpha / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn edit(&self, edit: &LightEdit) -> Self {
        edit_light(self, edit)
    }
}

/// Environment map containing only the Gaussian light, no ambient term.
pub fn synth_gaussian_env(light: &GaussianLight, width: usize) -> Result<EnvironmentMap> {
    let center = light.center();
    let inv = 1.0 / (2.0 * light.sigma * light.sigma);
    EnvironmentMap::from_fn(width, |d| {
        let alpha = angle_between(d, center);
        let g = (light.gamma * (-alpha * alpha * inv).exp()) as f32;
        [g, g, g]
    })
}

/// Parameter edits applied to a light.
///
/// `u`/`v` replace the position, `du` then shifts longitude with wraparound,
/// and the scales multiply `sigma` and `gamma`. Results are clamped into range:
/// `v` to [0, 1], `sigma` to [1e-4, SIGMA_MAX], `gamma` to at least 1e-6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightEdit {
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub du: f64,
    pub sigma_scale: f64,
    pub gamma_scale: f64,
}

impl Default for LightEdit {
    fn default() -> Self {
        Self {
            u: None,
            v: None,
            du: 0.0,
            sigma_scale: 1.0,
            gamma_scale: 1.0,
        }
    }
}

pub fn edit_light(light: &GaussianLight, edit: &LightEdit) -> GaussianLight {
    let finite_or = |x: f64, d: f64| if x.is_finite() { x } else { d };
    let u = finite_or(edit.u.unwrap_or(light.u), light.u) + finite_or(edit.du, 0.0);
    let mut u = u.rem_euclid(1.0);
    if u >= 1.0 {
        u = 0.0;
    }
    let v = finite_or(edit.v.unwrap_or(light.v), light.v).clamp(0.0, 1.0);
    let sigma = (light.sigma * finite_or(edit.sigma_scale, 1.0)).clamp(SIGMA_FLOOR, SIGMA_MAX);
    let gamma = (light.gamma * finite_or(edit.gamma_scale, 1.0)).max(GAMMA_FLOOR);
    GaussianLight { u, v, sigma, gamma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmap::{column_longitude, row_colatitude};

    fn light(u: f64, v: f64, sigma: f64, gamma: f64) -> GaussianLight {
        GaussianLight::new(u, v, sigma, gamma).unwrap()
    }

    #[test]
    fn validation() {
        assert!(GaussianLight::new(1.0, 0.5, 0.1, 1.0).is_err());
        assert!(GaussianLight::new(0.5, 1.1, 0.1, 1.0).is_err());
        assert!(GaussianLight::new(0.5, 0.5, 0.0, 1.0).is_err());
        assert!(GaussianLight::new(0.5, 0.5, SIGMA_MAX * 1.01, 1.0).is_err());
        assert!(GaussianLight::new(0.5, 0.5, 0.1, 0.0).is_err());
        assert!(GaussianLight::new(0.0, 0.0, SIGMA_MAX, 1e-9).is_ok());
    }

    #[test]
    fn serde_validates() {
        let ok: GaussianLight =
            serde_json::from_str(r#"{"u":0.5,"v":0.5,"sigma":0.1,"gamma":2.0}"#).unwrap();
        assert_eq!(ok, light(0.5, 0.5, 0.1, 2.0));
        assert!(serde_json::from_str::<GaussianLight>(
            r#"{"u":1.5,"v":0.5,"sigma":0.1,"gamma":2.0}"#
        )
        .is_err());
    }

    #[test]
    fn synth_peaks_at_containing_pixel() {
        for &(u, v) in &[(0.3, 0.4), (0.01, 0.52), (0.99, 0.7), (0.52, 0.2)] {
            let env = synth_gaussian_env(&light(u, v, 0.1, 3.0), 64).unwrap();
            let (k, _) = env
                .luminance()
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |b, (k, &l)| if l > b.1 { (k, l) } else { b });
            assert_eq!(k % 64, (u * 64.0) as usize, "u={u}");
            assert_eq!(k / 64, (v * 32.0) as usize, "v={v}");
        }
    }

    #[test]
    fn synth_is_linear_in_gamma() {
        let a = synth_gaussian_env(&light(0.2, 0.4, 0.2, 1.0), 32).unwrap();
        let b = synth_gaussian_env(&light(0.2, 0.4, 0.2, 2.0), 32).unwrap();
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            for c in 0..3 {
                assert!((2.0 * p[c] - q[c]).abs() <= 1e-6 * q[c].max(1e-30));
            }
        }
    }

    #[test]
    fn synth_value_one_sigma_from_center() {
        // center on a pixel center, sigma equal to one row of colatitude
        let (w, h) = (64usize, 32usize);
        let (i, j) = (20usize, 12usize);
        let u = (column_longitude(i, w) + PI) / (2.0 * PI);
        let v = row_colatitude(j, h) / PI;
        let sigma = PI / h as f64;
        let gamma = 5.0;
        let env = synth_gaussian_env(&light(u, v, sigma, gamma), w).unwrap();
        let expect = gamma * (-0.5f64).exp();
        for jj in [j - 1, j + 1] {
            let got = env.pixel(i, jj)[0] as f64;
            assert!((got / expect - 1.0).abs() < 0.01, "{got} vs {expect}");
        }
        assert!((env.pixel(i, j)[0] as f64 - gamma).abs() < 1e-5);
    }

    #[test]
    fn synth_decreases_with_angle() {
        let l = light(0.4, 0.45, 0.3, 2.0);
        let env = synth_gaussian_env(&l, 64).unwrap();
        let c = l.center();
        let mut pairs: Vec<(f64, f32)> = (0..64 * 32)
            .map(|k| (angle_between(env.direction(k % 64, k / 64), c), env.pixels()[k][0]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn edit_identity_and_clamps() {
        let l = light(0.3, 0.4, 0.5, 2.0);
        assert_eq!(edit_light(&l, &LightEdit::default()), l);
        let doubled = edit_light(
            &l,
            &LightEdit {
                sigma_scale: 2.0,
                ..Default::default()
            },
        );
        assert_eq!(doubled.sigma(), SIGMA_MAX);
        let small = light(0.3, 0.4, 0.1, 2.0);
        let doubled = edit_light(
            &small,
            &LightEdit {
                sigma_scale: 2.0,
                gamma_scale: 0.5,
                ..Default::default()
            },
        );
        assert_eq!(doubled.sigma(), 0.2);
        assert_eq!(doubled.gamma(), 1.0);
        let dark = edit_light(
            &l,
            &LightEdit {
                gamma_scale: 0.0,
                v: Some(3.0),
                ..Default::default()
            },
        );
        assert!(dark.gamma() > 0.0);
        assert_eq!(dark.v(), 1.0);
    }

    #[test]
    fn quarter_shifts_wrap_back() {
        let l = light(0.3, 0.4, 0.1, 2.0);
        let step = LightEdit {
            du: 0.25,
            ..Default::default()
        };
        let mut cur = l;
        for _ in 0..4 {
            cur = edit_light(&cur, &step);
            assert!((0.0..1.0).contains(&cur.u()));
        }
        assert!((cur.u() - l.u()).abs() < 1e-12);
    }
}
