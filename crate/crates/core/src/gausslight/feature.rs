use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GaussianLight, GAMMA_MAX, SIGMA_MAX};
use crate::error::{Error, Result};

pub const FEATURE_SIZE: usize = 32;
pub const FEATURE_PLANES: usize = 4;
const PLANE_LEN: usize = FEATURE_SIZE * FEATURE_SIZE;
const CONSTANT_TOLERANCE: f64 = 1e-6;

pub const FEATURE_SCHEMA: &str = "compose-kit/light-feature-map/v1";

/// Normalized `(x, y, sigma, gamma)` repeated over four 32x32 planes, C-order
/// `4 x 32 x 32`.
#[derive(Debug, Clone, PartialEq)]
pub struct LightFeatureMap {
    values: Vec<f64>,
}

/// Sidecar manifest written next to the raw float file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub schema: String,
    pub shape: [usize; 3],
    pub dtype: String,
    pub sigma_max: f64,
    pub gamma_max: f64,
    pub light: GaussianLight,
}

impl LightFeatureMap {
    /// `x = u`, `y = v`, `sigma / SIGMA_MAX`, `min(gamma / GAMMA_MAX, 1)`.
    pub fn from_light(light: &GaussianLight) -> Self {
        let planes = [
            light.u(),
            light.v(),
            light.sigma() / SIGMA_MAX,
            (light.gamma() / GAMMA_MAX).min(1.0),
        ];
        let values = planes
            .iter()
            .flat_map(|&p| std::iter::repeat_n(p, PLANE_LEN))
            .collect();
        Self { values }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_PLANES * PLANE_LEN {
            return Err(Error::DimensionMismatch(format!(
                "feature map needs {} values, got {}",
                FEATURE_PLANES * PLANE_LEN,
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn plane(&self, k: usize) -> &[f64] {
        &self.values[k * PLANE_LEN..(k + 1) * PLANE_LEN]
    }

    pub fn to_light(&self) -> Result<GaussianLight> {
        let mut p = [0.0f64; FEATURE_PLANES];
        for (k, slot) in p.iter_mut().enumerate() {
            let plane = self.plane(k);
            let (lo, hi) = plane
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
            if !(hi - lo <= CONSTANT_TOLERANCE) {
                return Err(Error::NonConstantPlane { plane: k });
            }
            *slot = plane[0];
        }
        if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::invalid(format!(
                "feature values must be in [0, 1], got {bad}"
            )));
        }
        let u = if p[0] >= 1.0 { 0.0 } else { p[0] };
        GaussianLight::new(u, p[1], p[2] * SIGMA_MAX, p[3] * GAMMA_MAX)
    }

    /// Raw little-endian f32, C-order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != FEATURE_PLANES * PLANE_LEN * 4 {
            return Err(Error::Decode(format!(
                "feature map file has {} bytes, expected {}",
                bytes.len(),
                FEATURE_PLANES * PLANE_LEN * 4
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Self { values })
    }

    /// Writes the raw planes to `path` and a JSON manifest to
    /// `path.with_extension("json")`.
    pub fn write(&self, light: &GaussianLight, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        let manifest = FeatureManifest {
            schema: FEATURE_SCHEMA.into(),
            shape: [FEATURE_PLANES, FEATURE_SIZE, FEATURE_SIZE],
            dtype: "float32-le".into(),
            sigma_max: SIGMA_MAX,
            gamma_max: GAMMA_MAX,
            light: *light,
        };
        let sidecar = path.with_extension("json");
        fs::write(&sidecar, serde_json::to_vec_pretty(&manifest)?)
            .map_err(|e| Error::io(&sidecar, e))?;
        Ok(sidecar)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_le_bytes(&bytes)
    }
}

pub fn to_feature_map(light: &GaussianLight) -> LightFeatureMap {
    LightFeatureMap::from_light(light)
}

pub fn from_feature_map(fm: &LightFeatureMap) -> Result<GaussianLight> {
    fm.to_light()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        let l = GaussianLight::new(0.5, 0.5, SIGMA_MAX, GAMMA_MAX).unwrap();
        let fm = to_feature_map(&l);
        for (k, expect) in [0.5, 0.5, 1.0, 1.0].into_iter().enumerate() {
            assert!(fm.plane(k).iter().all(|&x| x == expect));
        }
    }

    #[test]
    fn gamma_clamps() {
        let l = GaussianLight::new(0.1, 0.2, 0.3, 2.0 * GAMMA_MAX).unwrap();
        assert!(to_feature_map(&l).plane(3).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn minimal_light_from_tiny_planes() {
        let eps = 1e-3;
        let mut values = vec![0.0; 2 * PLANE_LEN];
        values.extend(vec![eps; 2 * PLANE_LEN]);
        let l = from_feature_map(&LightFeatureMap::from_values(values).unwrap()).unwrap();
        assert_eq!((l.u(), l.v()), (0.0, 0.0));
        assert!((l.sigma() - eps * SIGMA_MAX).abs() < 1e-15);
        assert!((l.gamma() - eps * GAMMA_MAX).abs() < 1e-15);
    }

    #[test]
    fn non_constant_plane_is_rejected() {
        let l = GaussianLight::new(0.1, 0.2, 0.3, 1.0).unwrap();
        let mut values = to_feature_map(&l).values().to_vec();
        values[PLANE_LEN + 17] = 0.9;
        let err = from_feature_map(&LightFeatureMap::from_values(values).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonConstantPlane { plane: 1 }));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("light.f32");
        let l = GaussianLight::new(0.7, 0.3, 0.25, 3.5).unwrap();
        let sidecar = to_feature_map(&l).write(&l, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 4 * 4 * 32 * 32);
        let back = LightFeatureMap::read(&path).unwrap().to_light().unwrap();
        assert!((back.u() - l.u()).abs() < 1e-6);
        assert!((back.sigma() - l.sigma()).abs() < 1e-6);
        let m: FeatureManifest = serde_json::from_slice(&fs::read(sidecar).unwrap()).unwrap();
        assert_eq!(m.light, l);
        assert_eq!(m.shape, [4, 32, 32]);
    }

    proptest! {
        #[test]
        fn export_import_inverse(
            u in 0.0f64..1.0,
            v in 0.0f64..=1.0,
            s in 1e-3f64..=1.0,
            g in 1e-3f64..=1.0,
        ) {
            let l = GaussianLight::new(u, v, s * SIGMA_MAX, g * GAMMA_MAX).unwrap();
            let fm = to_feature_map(&l);
            prop_assert!(fm.values().iter().all(|x| (0.0..=1.0).contains(x)));
            let back = from_feature_map(&fm).unwrap();
            prop_assert_eq!(back.u(), l.u());
            prop_assert_eq!(back.v(), l.v());
            prop_assert!((back.sigma() - l.sigma()).abs() <= 4.0 * f64::EPSILON * l.sigma());
            prop_assert!((back.gamma() - l.gamma()).abs() <= 4.0 * f64::EPSILON * l.gamma());
        }
    }
}
