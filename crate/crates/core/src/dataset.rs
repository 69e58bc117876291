//! Training-tuple factory: augmented environment renders paired with their
//! diffuse and Gaussian-lit ground truths and a light feature map.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envmap::{load_envmap, save_envmap, EnvironmentMap, DEFAULT_DIFFUSION_BETA};
use crate::error::{Error, Result};
use crate::gausslight::{to_feature_map, GaussianLight, GAMMA_MAX, SIGMA_MAX};
use crate::olat::{diffuse_image, render_olat, shadowed_image, OlatBasis, DEFAULT_LIGHTS, DEFAULT_LIGHT_ENV_WIDTH};
use crate::skies::builtin_env;
use crate::synthstage::{build_olat_basis, SceneSpec};

pub const RECIPE_SCHEMA: &str = "compose-kit/recipe/v1";
pub const MANIFEST_SCHEMA: &str = "compose-kit/dataset-sample/v1";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

const BUILTIN_PREFIX: &str = "builtin:";

/// Closed sampling interval `[lo, hi]`.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingRanges {
    /// Longitude shift as a fraction of the width, uniform.
    pub rotation: Range,
    /// Intensity scale, log-uniform.
    pub intensity: Range,
    pub u: Range,
    pub v: Range,
    /// Uniform on `(lo, hi]`.
    pub sigma: Range,
    /// Log-uniform.
    pub gamma: Range,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            rotation: [0.0, 1.0],
            intensity: [0.5, 2.0],
            u: [0.0, 1.0],
            v: [0.0, 1.0],
            sigma: [0.03, SIGMA_MAX],
            gamma: [0.5, GAMMA_MAX],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetRecipe {
    pub schema: String,
    /// Builtin scene names or scene document paths.
    pub scenes: Vec<String>,
    /// `builtin:<sky>` or image paths.
    pub envs: Vec<String>,
    pub count: usize,
    pub seed: u64,
    pub lights: usize,
    pub width: usize,
    pub height: usize,
    pub beta: f64,
    /// Environment maps are reduced to this width when it divides theirs.
    pub env_width: usize,
    pub light_env_width: usize,
    pub ranges: SamplingRanges,
}

impl Default for DatasetRecipe {
    fn default() -> Self {
        Self {
            schema: RECIPE_SCHEMA.into(),
            scenes: vec![],
            envs: vec![],
            count: 1,
            seed: 0,
            lights: DEFAULT_LIGHTS,
            width: 128,
            height: 128,
            beta: DEFAULT_DIFFUSION_BETA,
            env_width: 128,
            light_env_width: DEFAULT_LIGHT_ENV_WIDTH,
            ranges: SamplingRanges::default(),
        }
    }
}

fn check_range(name: &str, r: Range, lo: f64, hi: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi) {
        return Err(Error::invalid(format!(
            "{name} range {r:?} must be ordered and within [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl DatasetRecipe {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let recipe: Self = serde_json::from_str(&text)?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(Error::invalid("recipe lists no scenes"));
        }
        if self.envs.is_empty() {
            return Err(Error::invalid("recipe lists no environment maps"));
        }
        if self.count == 0 {
            return Err(Error::invalid("count must be >= 1"));
        }
        if !(self.beta > 0.0 && self.beta <= std::f64::consts::PI) {
            return Err(Error::invalid(format!("beta must be in (0, pi], got {}", self.beta)));
        }
        for (name, w) in [("env_width", self.env_width), ("light_env_width", self.light_env_width)] {
            if w < 4 || w % 2 != 0 {
                return Err(Error::invalid(format!("{name} must be even and >= 4, got {w}")));
            }
        }
        let r = &self.ranges;
        check_range("rotation", r.rotation, 0.0, 1.0)?;
        check_range("intensity", r.intensity, f64::MIN_POSITIVE, f64::MAX)?;
        check_range("u", r.u, 0.0, 1.0)?;
        check_range("v", r.v, 0.0, 1.0)?;
        check_range("sigma", r.sigma, 0.0, SIGMA_MAX)?;
        check_range("gamma", r.gamma, f64::MIN_POSITIVE, f64::MAX)?;
        if r.sigma[1] <= 0.0 {
            return Err(Error::invalid("sigma range must reach above 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFiles {
    pub input: String,
    pub env: String,
    pub diffuse: String,
    pub shadowed: String,
    pub light: String,
    pub light_manifest: String,
}

/// One manifest line. Paths are relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub schema: String,
    pub index: usize,
    pub seed: u64,
    pub scene: String,
    pub env: String,
    pub delta_u: f64,
    /// Pixel shift actually applied for `delta_u`.
    pub shift_px: usize,
    pub intensity: f64,
    pub beta: f64,
    pub light_env_width: usize,
    pub light: GaussianLight,
    pub files: SampleFiles,
}

impl SampleRecord {
    /// The augmented map, recomputed from its source.
    pub fn augment(&self, source: &EnvironmentMap) -> Result<EnvironmentMap> {
        source.rotate(self.delta_u).scale(self.intensity)
    }
}

/// Per-sample seed: `seed ^ index`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Resolves `builtin:<sky>` or loads a file, reducing to `env_width` when
/// possible.
pub fn resolve_env(name: &str, env_width: usize) -> Result<EnvironmentMap> {
    if let Some(sky) = name.strip_prefix(BUILTIN_PREFIX) {
        return builtin_env(sky, env_width);
    }
    let env = load_envmap(Path::new(name))?;
    if env.width() > env_width && env.width() % env_width == 0 {
        env.downsample(env.width() / env_width)
    } else {
        Ok(env)
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: Range) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

fn uniform_open_low(rng: &mut ChaCha8Rng, r: Range) -> f64 {
    r[1] - (r[1] - r[0]) * rng.random::<f64>()
}

fn log_uniform(rng: &mut ChaCha8Rng, r: Range) -> f64 {
    let (a, b) = (r[0].ln(), r[1].ln());
    (a + (b - a) * rng.random::<f64>()).exp()
}

struct Draw {
    scene: usize,
    env: usize,
    delta_u: f64,
    intensity: f64,
    light: GaussianLight,
}

fn draw(recipe: &DatasetRecipe, seed: u64) -> Result<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &recipe.ranges;
    let scene = rng.random_range(0..recipe.scenes.len());
    let env = rng.random_range(0..recipe.envs.len());
    let delta_u = uniform(&mut rng, r.rotation).rem_euclid(1.0);
    let intensity = log_uniform(&mut rng, r.intensity);
    let u = uniform(&mut rng, r.u);
    let v = uniform(&mut rng, r.v);
    let sigma = uniform_open_low(&mut rng, r.sigma);
    let gamma = log_uniform(&mut rng, r.gamma);
    Ok(Draw {
        scene,
        env,
        delta_u,
        intensity,
        light: GaussianLight::new(u.rem_euclid(1.0), v, sigma, gamma)?,
    })
}

fn rel(dir: &str, file: &str) -> String {
    format!("{dir}/{file}")
}

/// Renders `recipe.count` samples into `out_dir` and writes
/// `manifest.jsonl` and `recipe.json`. Samples are rendered in parallel;
/// output is independent of the thread count.
pub fn emit_dataset(recipe: &DatasetRecipe, out_dir: &Path) -> Result<Vec<SampleRecord>> {
    recipe.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let bases = recipe
        .scenes
        .iter()
        .map(|s| build_olat_basis(&SceneSpec::resolve(s)?, recipe.lights, recipe.width, recipe.height))
        .collect::<Result<Vec<OlatBasis>>>()?;
    let envs = recipe
        .envs
        .iter()
        .map(|e| resolve_env(e, recipe.env_width))
        .collect::<Result<Vec<_>>>()?;

    let records = (0..recipe.count)
        .into_par_iter()
        .map(|index| {
            let seed = sample_seed(recipe.seed, index);
            let d = draw(recipe, seed)?;
            let basis = &bases[d.scene];
            let env = envs[d.env].rotate(d.delta_u).scale(d.intensity)?;

            let dir = format!("sample_{index:05}");
            let abs = out_dir.join(&dir);
            fs::create_dir_all(&abs).map_err(|e| Error::io(&abs, e))?;
            let files = SampleFiles {
                input: rel(&dir, "input.pfm"),
                env: rel(&dir, "env.pfm"),
                diffuse: rel(&dir, "diffuse.pfm"),
                shadowed: rel(&dir, "shadowed.pfm"),
                light: rel(&dir, "light.f32"),
                light_manifest: rel(&dir, "light.json"),
            };
            render_olat(basis, &env)?.save(&out_dir.join(&files.input))?;
            save_envmap(&env, &out_dir.join(&files.env))?;
            diffuse_image(basis, &env, recipe.beta)?.save(&out_dir.join(&files.diffuse))?;
            shadowed_image(basis, &d.light, recipe.light_env_width)?.save(&out_dir.join(&files.shadowed))?;
            to_feature_map(&d.light).write(&d.light, &out_dir.join(&files.light))?;

            let shift_px = (d.delta_u * env.width() as f64).round() as usize % env.width();
            Ok(SampleRecord {
                schema: MANIFEST_SCHEMA.into(),
                index,
                seed,
                scene: recipe.scenes[d.scene].clone(),
                env: recipe.envs[d.env].clone(),
                delta_u: d.delta_u,
                shift_px,
                intensity: d.intensity,
                beta: recipe.beta,
                light_env_width: recipe.light_env_width,
                light: d.light,
                files,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut out = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    for r in &records {
        let line = serde_json::to_string(r)?;
        writeln!(out, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    let recipe_path = out_dir.join("recipe.json");
    fs::write(&recipe_path, serde_json::to_vec_pretty(recipe)?).map_err(|e| Error::io(&recipe_path, e))?;
    Ok(records)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<SampleRecord>> {
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
