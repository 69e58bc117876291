//! Image-based relighting through an OLAT basis, light diffusion,
//! compositing and the end-to-end shadow edit.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use glam::DVec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envmap::{EnvironmentMap, DEFAULT_DIFFUSION_BETA};
use crate::error::{Error, Result};
use crate::gausslight::{fit_gaussian, synth_gaussian_env, GaussianLight, LightEdit, LightFit};
use crate::image::LinearImage;
use crate::io;

pub const BASIS_SCHEMA: &str = "compose-kit/olat-basis/v1";
/// Light count of the simulated stage.
pub const DEFAULT_LIGHTS: usize = 160;
pub const DEFAULT_RESOLUTION: usize = 256;
/// Width of the environment map the Gaussian light is rasterized into.
pub const DEFAULT_LIGHT_ENV_WIDTH: usize = 256;

/// Basis images, each the scene's response to a unit-radiance directional
/// light from `directions[i]`, with solid-angle `weights[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlatBasis {
    directions: Vec<DVec3>,
    weights: Vec<f64>,
    images: Vec<LinearImage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BasisManifest {
    schema: String,
    count: usize,
    width: usize,
    height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    lights: Vec<BasisLight>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BasisLight {
    direction: [f64; 3],
    weight: f64,
    image: String,
}

impl OlatBasis {
    pub fn new(directions: Vec<DVec3>, weights: Vec<f64>, images: Vec<LinearImage>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::EmptyBasis);
        }
        if directions.len() != weights.len() || directions.len() != images.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} directions, {} weights, {} images",
                directions.len(),
                weights.len(),
                images.len()
            )));
        }
        if let Some(d) = directions.iter().find(|d| (d.length() - 1.0).abs() > 1e-6) {
            return Err(Error::NonUnitDirection(d.length()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("basis weight must be > 0, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total / (4.0 * PI) - 1.0).abs() > 1e-3 {
            return Err(Error::invalid(format!(
                "basis weights sum to {total}, expected 4pi"
            )));
        }
        let dims = images[0].dims();
        if let Some(img) = images.iter().find(|i| i.dims() != dims) {
            return Err(Error::DimensionMismatch(format!(
                "basis images {}x{} and {}x{}",
                dims.0,
                dims.1,
                img.width(),
                img.height()
            )));
        }
        Ok(Self {
            directions,
            weights,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[DVec3] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn images(&self) -> &[LinearImage] {
        &self.images
    }

    pub fn dims(&self) -> (usize, usize) {
        self.images[0].dims()
    }

    /// Foreground mask shared by the basis images, if they carry one.
    pub fn mask(&self) -> Option<&[bool]> {
        self.images[0].mask()
    }

    /// Writes `manifest.json`, one `.pfm` per light and `mask.pfm`.
    pub fn save(&self, dir: &Path, scene: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (width, height) = self.dims();
        let mut lights = Vec::with_capacity(self.len());
        for (k, img) in self.images.iter().enumerate() {
            let name = format!("olat_{k:04}.pfm");
            img.save(&dir.join(&name))?;
            let d = self.directions[k];
            lights.push(BasisLight {
                direction: [d.x, d.y, d.z],
                weight: self.weights[k],
                image: name,
            });
        }
        let mask = match self.mask() {
            Some(_) => {
                self.images[0].save_mask(&dir.join("mask.pfm"))?;
                Some("mask.pfm".to_string())
            }
            None => None,
        };
        let manifest = BasisManifest {
            schema: BASIS_SCHEMA.into(),
            count: self.len(),
            width,
            height,
            scene: scene.map(str::to_string),
            mask,
            lights,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self::load_with_scene(dir)?.0)
    }

    /// Loads the basis and the scene name recorded in its manifest.
    pub fn load_with_scene(dir: &Path) -> Result<(Self, Option<String>)> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BasisManifest = serde_json::from_str(&text)?;
        if manifest.schema != BASIS_SCHEMA {
            return Err(Error::invalid(format!(
                "unknown basis schema {:?}",
                manifest.schema
            )));
        }
        if manifest.count != manifest.lights.len() {
            return Err(Error::Decode(format!(
                "manifest count {} but {} lights listed",
                manifest.count,
                manifest.lights.len()
            )));
        }
        let mask = match &manifest.mask {
            Some(name) => Some(
                io::read_raster(&dir.join(name))?
                    .pixels
                    .iter()
                    .map(|p| p[0] > 0.5)
                    .collect::<Vec<bool>>(),
            ),
            None => None,
        };
        let mut directions = Vec::with_capacity(manifest.count);
        let mut weights = Vec::with_capacity(manifest.count);
        let mut images = Vec::with_capacity(manifest.count);
        for light in &manifest.lights {
            let [x, y, z] = light.direction;
            directions.push(DVec3::new(x, y, z));
            weights.push(light.weight);
            let mut img = LinearImage::load(&dir.join(&light.image))?;
            if img.dims() != (manifest.width, manifest.height) {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, manifest says {}x{}",
                    light.image,
                    img.width(),
                    img.height(),
                    manifest.width,
                    manifest.height
                )));
            }
            if let Some(m) = &mask {
                img = img.with_mask(m.clone())?;
            }
            images.push(img);
        }
        Ok((Self::new(directions, weights, images)?, manifest.scene))
    }
}

/// `I(p) = sum_i weights_i * env(d_i) * images_i(p)`, channelwise.
///
/// Lights are accumulated in index order for every pixel, so the result is
/// bitwise independent of how rows are split across threads.
pub fn render_olat(basis: &OlatBasis, env: &EnvironmentMap) -> Result<LinearImage> {
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let coeffs: Vec<[f64; 3]> = basis
        .directions
        .iter()
        .zip(&basis.weights)
        .map(|(&d, &w)| env.sample(d).map(|l| l.map(|c| w * c as f64)))
        .collect::<Result<_>>()?;
    let active: Vec<usize> = (0..basis.len())
        .filter(|&i| coeffs[i].iter().any(|&c| c != 0.0))
        .collect();
    let (width, height) = basis.dims();
    let rows: Vec<Vec<[f32; 3]>> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut acc = vec![[0.0f64; 3]; width];
            for &i in &active {
                let c = coeffs[i];
                let src = &basis.images[i].pixels()[y * width..(y + 1) * width];
                for (a, p) in acc.iter_mut().zip(src) {
                    a[0] += c[0] * p[0] as f64;
                    a[1] += c[1] * p[1] as f64;
                    a[2] += c[2] * p[2] as f64;
                }
            }
            acc.into_iter().map(|a| a.map(|v| v as f32)).collect()
        })
        .collect();
    Ok(LinearImage::from_parts(
        width,
        height,
        rows.into_iter().flatten().collect(),
        basis.mask().map(<[bool]>::to_vec),
    ))
}

/// The diffuse image: a render under the blurred source map.
pub fn diffuse_image(basis: &OlatBasis, env: &EnvironmentMap, beta: f64) -> Result<LinearImage> {
    render_olat(basis, &env.diffuse(beta)?)
}

/// `omega_d * i_d + (1 - omega_d) * i_s`.
pub fn composite(i_d: &LinearImage, i_s: &LinearImage, omega_d: f64) -> Result<LinearImage> {
    i_d.check_same_dims(i_s)?;
    if !(0.0..=1.0).contains(&omega_d) {
        return Err(Error::invalid(format!("omega_d must be in [0, 1], got {omega_d}")));
    }
    let omega_s = 1.0 - omega_d;
    let data = i_d
        .pixels()
        .iter()
        .zip(i_s.pixels())
        .map(|(d, s)| std::array::from_fn(|c| (omega_d * d[c] as f64 + omega_s * s[c] as f64) as f32))
        .collect();
    let mask = i_d.mask().or(i_s.mask()).map(<[bool]>::to_vec);
    Ok(LinearImage::from_parts(i_d.width(), i_d.height(), data, mask))
}

/// Which light the shadow branch uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightTarget {
    /// Use this light as given; no fit is needed.
    Absolute(GaussianLight),
    /// Edit the light fitted to the source map.
    Relative(LightEdit),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub light: LightTarget,
    pub omega_d: f64,
    pub beta: f64,
    pub exposure: f64,
    pub light_env_width: usize,
}

impl EditRequest {
    pub fn new(light: LightTarget) -> Self {
        Self {
            light,
            omega_d: 0.5,
            beta: DEFAULT_DIFFUSION_BETA,
            exposure: 1.0,
            light_env_width: DEFAULT_LIGHT_ENV_WIDTH,
        }
    }

    pub fn omega_s(&self) -> f64 {
        1.0 - self.omega_d
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega_d) {
            return Err(Error::invalid(format!(
                "omega_d must be in [0, 1], got {}",
                self.omega_d
            )));
        }
        if !(self.beta > 0.0 && self.beta <= PI) {
            return Err(Error::invalid(format!("beta must be in (0, pi], got {}", self.beta)));
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::invalid(format!("exposure must be > 0, got {}", self.exposure)));
        }
        if self.light_env_width < 4 || self.light_env_width % 2 != 0 {
            return Err(Error::invalid(format!(
                "light map width must be even and >= 4, got {}",
                self.light_env_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditResult {
    pub edited: LinearImage,
    pub diffuse: LinearImage,
    pub shadowed: LinearImage,
    /// The light used for the shadow branch.
    pub light: GaussianLight,
    pub fit: Option<LightFit>,
}

/// Resolves the request's light, fitting `source_env` only for relative
/// edits.
pub fn resolve_light(source_env: &EnvironmentMap, target: &LightTarget) -> Result<(GaussianLight, Option<LightFit>)> {
    match target {
        LightTarget::Absolute(l) => Ok((*l, None)),
        LightTarget::Relative(e) => {
            let fit = fit_gaussian(source_env)?;
            Ok((fit.light.edit(e), Some(fit)))
        }
    }
}

/// Gaussian-lit render: the scene under the dominant light alone.
pub fn shadowed_image(basis: &OlatBasis, light: &GaussianLight, light_env_width: usize) -> Result<LinearImage> {
    render_olat(basis, &synth_gaussian_env(light, light_env_width)?)
}

/// Light estimation and editing, light diffusion, shadow synthesis and
/// compositing, in that order.
pub fn edit(basis: &OlatBasis, source_env: &EnvironmentMap, req: &EditRequest) -> Result<EditResult> {
    req.validate()?;
    let (light, fit) = resolve_light(source_env, &req.light)?;
    let diffuse = diffuse_image(basis, source_env, req.beta)?;
    let shadowed = shadowed_image(basis, &light, req.light_env_width)?;
    let edited = composite(&diffuse, &shadowed, req.omega_d)?;
    Ok(EditResult {
        edited,
        diffuse,
        shadowed,
        light,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthstage::{build_olat_basis, BuiltinScene};

    fn small_basis() -> OlatBasis {
        build_olat_basis(&BuiltinScene::SphereOnPlane.spec(), 24, 12, 12).unwrap()
    }

    #[test]
    fn validation() {
        let img = LinearImage::black(2, 2);
        assert!(matches!(
            OlatBasis::new(vec![], vec![], vec![]),
            Err(Error::EmptyBasis)
        ));
        assert!(OlatBasis::new(vec![DVec3::Y], vec![4.0 * PI], vec![img.clone()]).is_ok());
        assert!(OlatBasis::new(vec![DVec3::Y * 2.0], vec![4.0 * PI], vec![img.clone()]).is_err());
        assert!(OlatBasis::new(vec![DVec3::Y], vec![1.0], vec![img.clone()]).is_err());
        assert!(OlatBasis::new(
            vec![DVec3::Y, -DVec3::Y],
            vec![2.0 * PI, 2.0 * PI],
            vec![img, LinearImage::black(3, 2)]
        )
        .is_err());
    }

    #[test]
    fn black_env_renders_black() {
        let b = small_basis();
        let img = render_olat(&b, &EnvironmentMap::zeros(16).unwrap()).unwrap();
        assert!(img.pixels().iter().flatten().all(|&c| c == 0.0));
    }

    #[test]
    fn composite_endpoints_and_bounds() {
        let a = LinearImage::new(2, 1, vec![[0.1, 0.5, 2.0], [1.0, 0.0, 0.3]]).unwrap();
        let b = LinearImage::new(2, 1, vec![[0.7, 0.2, 0.0], [0.4, 0.9, 0.3]]).unwrap();
        assert_eq!(composite(&a, &b, 1.0).unwrap().pixels(), a.pixels());
        assert_eq!(composite(&a, &b, 0.0).unwrap().pixels(), b.pixels());
        assert_eq!(composite(&a, &a, 0.37).unwrap().pixels(), a.pixels());
        let mid = composite(&a, &b, 0.25).unwrap();
        for ((m, p), q) in mid.pixels().iter().zip(a.pixels()).zip(b.pixels()) {
            for c in 0..3 {
                assert!(m[c] >= p[c].min(q[c]) && m[c] <= p[c].max(q[c]));
            }
        }
        assert!(composite(&a, &b, 1.5).is_err());
        assert!(composite(&a, &b, -0.1).is_err());
        assert!(composite(&a, &LinearImage::black(1, 1), 0.5).is_err());
    }

    #[test]
    fn uniform_env_diffuse_matches_plain_render() {
        let b = small_basis();
        let env = EnvironmentMap::uniform(16, [0.4, 0.5, 0.6]).unwrap();
        let plain = render_olat(&b, &env).unwrap();
        let diffuse = diffuse_image(&b, &env, 0.8).unwrap();
        for (p, q) in plain.pixels().iter().zip(diffuse.pixels()) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() <= 1e-5 * p[c].max(1e-6));
            }
        }
    }

    #[test]
    fn basis_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let b = small_basis();
        b.save(dir.path(), Some("sphere_on_plane")).unwrap();
        let (back, scene) = OlatBasis::load_with_scene(dir.path()).unwrap();
        assert_eq!(back, b);
        assert_eq!(scene.as_deref(), Some("sphere_on_plane"));
    }

    #[test]
    fn absolute_edit_needs_no_fit() {
        let b = small_basis();
        let uniform = EnvironmentMap::uniform(16, [0.3; 3]).unwrap();
        let light = GaussianLight::new(0.25, 0.3, 0.2, 2.0).unwrap();
        let res = edit(&b, &uniform, &EditRequest::new(LightTarget::Absolute(light))).unwrap();
        assert!(res.fit.is_none());
        let rel = edit(&b, &uniform, &EditRequest::new(LightTarget::Relative(LightEdit::default())));
        assert!(matches!(rel, Err(Error::NoDominantLight { .. })));
    }

    #[test]
    fn full_diffusion_ignores_the_light() {
        let b = small_basis();
        let env = crate::gausslight::synth_gaussian_env(
            &GaussianLight::new(0.3, 0.3, 0.3, 3.0).unwrap(),
            16,
        )
        .unwrap();
        let mut req = EditRequest::new(LightTarget::Absolute(GaussianLight::new(0.1, 0.2, 0.1, 1.0).unwrap()));
        req.omega_d = 1.0;
        let a = edit(&b, &env, &req).unwrap();
        req.light = LightTarget::Absolute(GaussianLight::new(0.9, 0.4, 0.5, 7.0).unwrap());
        let c = edit(&b, &env, &req).unwrap();
        assert_eq!(a.edited, c.edited);
        assert_eq!(a.edited.pixels(), a.diffuse.pixels());
    }
}
