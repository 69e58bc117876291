use std::fs;
use std::path::Path;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENE_SCHEMA: &str = "compose-kit/scene/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub name: String,
    pub center: DVec3,
    pub radius: f64,
    pub albedo: [f64; 3],
}

/// Infinite horizontal plane `y = height` facing +Y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub height: f64,
    pub albedo: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: DVec3,
    pub look_at: DVec3,
    #[serde(default = "default_up")]
    pub up: DVec3,
    /// Vertical field of view, degrees.
    pub vfov_deg: f64,
}

fn default_up() -> DVec3 {
    DVec3::Y
}

impl Camera {
    /// Ray through the center of pixel `(px, py)`; row 0 is the top.
    pub fn primary_ray(&self, px: usize, py: usize, width: usize, height: usize) -> (DVec3, DVec3) {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(self.up).normalize();
        let up = right.cross(forward);
        let half = (self.vfov_deg.to_radians() * 0.5).tan();
        let aspect = width as f64 / height as f64;
        let sx = ((px as f64 + 0.5) / width as f64 * 2.0 - 1.0) * half * aspect;
        let sy = (1.0 - (py as f64 + 0.5) / height as f64 * 2.0) * half;
        (self.position, (forward + right * sx + up * sy).normalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub spheres: Vec<Sphere>,
    #[serde(default)]
    pub ground: Option<GroundPlane>,
    pub camera: Camera,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Sphere(usize),
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: DVec3,
    pub normal: DVec3,
    pub albedo: [f64; 3],
    pub surface: Surface,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENE_SCHEMA {
            return Err(Error::invalid(format!(
                "unknown scene schema {:?}, expected {SCENE_SCHEMA:?}",
                self.schema
            )));
        }
        if self.spheres.is_empty() && self.ground.is_none() {
            return Err(Error::invalid("scene has no primitives"));
        }
        let albedos = self
            .spheres
            .iter()
            .map(|s| s.albedo)
            .chain(self.ground.iter().map(|g| g.albedo));
        for a in albedos {
            if a.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::invalid(format!("albedo {a:?} outside [0, 1]")));
            }
        }
        for s in &self.spheres {
            if !(s.radius > 0.0) {
                return Err(Error::invalid(format!("sphere {} has radius {}", s.name, s.radius)));
            }
            if (self.camera.position - s.center).length() <= s.radius {
                return Err(Error::invalid(format!("camera is inside sphere {}", s.name)));
            }
        }
        if let Some(g) = &self.ground {
            if self.camera.position.y <= g.height {
                return Err(Error::invalid("camera is below the ground plane"));
            }
        }
        if !(self.camera.vfov_deg > 0.0 && self.camera.vfov_deg < 180.0) {
            return Err(Error::invalid("vertical field of view must be in (0, 180)"));
        }
        if (self.camera.look_at - self.camera.position).length() == 0.0 {
            return Err(Error::invalid("camera look_at equals its position"));
        }
        Ok(())
    }

    pub fn max_albedo(&self) -> f64 {
        self.spheres
            .iter()
            .map(|s| s.albedo)
            .chain(self.ground.iter().map(|g| g.albedo))
            .flatten()
            .fold(0.0, f64::max)
    }

    pub fn intersect(&self, origin: DVec3, dir: DVec3, t_min: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (k, s) in self.spheres.iter().enumerate() {
            if let Some(t) = sphere_t(s, origin, dir, t_min) {
                if best.is_none_or(|b| t < b.t) {
                    let point = origin + dir * t;
                    best = Some(Hit {
                        t,
                        point,
                        normal: (point - s.center) / s.radius,
                        albedo: s.albedo,
                        surface: Surface::Sphere(k),
                    });
                }
            }
        }
        if let Some(g) = &self.ground {
            if dir.y != 0.0 {
                let t = (g.height - origin.y) / dir.y;
                if t > t_min && best.is_none_or(|b| t < b.t) {
                    let mut point = origin + dir * t;
                    point.y = g.height;
                    best = Some(Hit {
                        t,
                        point,
                        normal: DVec3::Y,
                        albedo: g.albedo,
                        surface: Surface::Ground,
                    });
                }
            }
        }
        best
    }

    /// True if anything blocks the ray leaving `hit` toward `dir`.
    pub fn occluded(&self, hit: &Hit, dir: DVec3) -> bool {
        let origin = hit.point + hit.normal * SHADOW_EPSILON;
        if self
            .spheres
            .iter()
            .any(|s| sphere_t(s, origin, dir, 0.0).is_some())
        {
            return true;
        }
        match (&self.ground, hit.surface) {
            (Some(_), Surface::Ground) | (None, _) => false,
            (Some(g), _) => dir.y < 0.0 && origin.y > g.height,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: SceneSpec = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// A builtin scene name, or otherwise a path to a scene document.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match BuiltinScene::from_name(name_or_path) {
            Some(b) => Ok(b.spec()),
            None => Self::load(Path::new(name_or_path)),
        }
    }
}

const SHADOW_EPSILON: f64 = 1e-6;

fn sphere_t(s: &Sphere, origin: DVec3, dir: DVec3, t_min: f64) -> Option<f64> {
    let oc = origin - s.center;
    let b = oc.dot(dir);
    let c = oc.length_squared() - s.radius * s.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    if t0 > t_min {
        return Some(t0);
    }
    let t1 = -b + sq;
    (t1 > t_min).then_some(t1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinScene {
    SphereOnPlane,
    HeadProxy,
}

impl BuiltinScene {
    pub const ALL: [BuiltinScene; 2] = [BuiltinScene::SphereOnPlane, BuiltinScene::HeadProxy];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinScene::SphereOnPlane => "sphere_on_plane",
            BuiltinScene::HeadProxy => "head_proxy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn spec(self) -> SceneSpec {
        match self {
            // near top-down view so the cast shadow stays visible from every
            // light azimuth
            BuiltinScene::SphereOnPlane => SceneSpec {
                schema: SCENE_SCHEMA.into(),
                name: self.name().into(),
                spheres: vec![Sphere {
                    name: "ball".into(),
                    center: DVec3::new(0.0, 1.0, 0.0),
                    radius: 1.0,
                    albedo: [0.75, 0.55, 0.45],
                }],
                ground: Some(GroundPlane {
                    height: 0.0,
                    albedo: [0.8, 0.8, 0.8],
                }),
                camera: Camera {
                    position: DVec3::new(0.0, 12.0, 3.0),
                    look_at: DVec3::new(0.0, 0.0, 0.0),
                    up: DVec3::Y,
                    vfov_deg: 50.0,
                },
            },
            // head with a nose pointing at the camera (+Z)
            BuiltinScene::HeadProxy => SceneSpec {
                schema: SCENE_SCHEMA.into(),
                name: self.name().into(),
                spheres: vec![
                    Sphere {
                        name: "head".into(),
                        center: DVec3::new(0.0, 1.6, 0.0),
                        radius: 1.0,
                        albedo: [0.78, 0.57, 0.47],
                    },
                    Sphere {
                        name: "nose".into(),
                        center: DVec3::new(0.0, 1.55, 0.95),
                        radius: 0.28,
                        albedo: [0.78, 0.57, 0.47],
                    },
                ],
                ground: Some(GroundPlane {
                    height: 0.0,
                    albedo: [0.6, 0.6, 0.65],
                }),
                camera: Camera {
                    position: DVec3::new(0.0, 6.0, 7.5),
                    look_at: DVec3::new(0.0, 1.0, 0.5),
                    up: DVec3::Y,
                    vfov_deg: 45.0,
                },
            },
        }
    }
}
