//! `compose-kit`: batch front end for fitting, rendering, editing and
//! dataset generation.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for pipeline errors (the
//! error name is printed first on standard error).

use std::ffi::OsString;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use compose_core::dataset::{emit_dataset, DatasetRecipe};
use compose_core::envmap::{load_envmap, save_envmap, DEFAULT_DIFFUSION_BETA};
use compose_core::gausslight::{fit_gaussian, synth_gaussian_env, GaussianLight, LightEdit, LightFit};
use compose_core::image::load_mask;
use compose_core::io::Format;
use compose_core::metrics::report;
use compose_core::olat::{
    composite, edit, render_olat, EditRequest, LightTarget, DEFAULT_LIGHTS, DEFAULT_LIGHT_ENV_WIDTH,
};
use compose_core::synthstage::{build_olat_basis, SceneSpec};
use compose_core::{Error, LinearImage, OlatBasis};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "compose-kit", version, about = "Lighting decomposition and shadow editing toolkit")]
pub struct Cli {
    /// Seed for sampled quantities (dataset recipes).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "COMPOSE_KIT_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    /// Only report warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render an OLAT basis of a scene.
    GenOlat {
        /// Builtin scene name or scene file.
        #[arg(long)]
        scene: String,
        #[arg(long, default_value_t = DEFAULT_LIGHTS)]
        lights: usize,
        /// Image size as WxH.
        #[arg(long, value_parser = parse_size, default_value = "256x256")]
        size: (usize, usize),
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the dominant Gaussian light of an environment map.
    Fit {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the environment map of a single Gaussian light.
    SynthEnv {
        #[command(flatten)]
        light: LightArgs,
        /// Map width; the height is half of it.
        #[arg(long, default_value_t = DEFAULT_LIGHT_ENV_WIDTH)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blur an environment map on the sphere.
    Diffuse {
        #[arg(long)]
        env: PathBuf,
        /// Gaussian blur angle in radians.
        #[arg(long, default_value_t = DEFAULT_DIFFUSION_BETA)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relight a basis under an environment map.
    Render {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Exposure for .png output.
        #[arg(long, default_value_t = 1.0)]
        exposure: f64,
    },
    /// Edit the dominant light and composite with the diffuse render.
    Edit(EditArgs),
    /// Blend two images: omega_d * a + (1 - omega_d) * b.
    Composite {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        omega_d: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        exposure: f64,
    },
    /// Compare two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Mask image; pixels above 0.5 are selected.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Generate training samples from a recipe.
    EmitDataset {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API for one or more bases.
    Serve {
        #[arg(long, required = true)]
        basis: Vec<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Debug, Args)]
pub struct LightArgs {
    #[arg(long)]
    pub u: f64,
    #[arg(long)]
    pub v: f64,
    /// Angular spread in radians.
    #[arg(long, required_unless_present = "sigma_deg", conflicts_with = "sigma_deg")]
    pub sigma: Option<f64>,
    /// Angular spread in degrees.
    #[arg(long)]
    pub sigma_deg: Option<f64>,
    #[arg(long)]
    pub gamma: f64,
}

impl LightArgs {
    fn light(&self) -> Result<GaussianLight, Error> {
        let sigma = self.sigma.or(self.sigma_deg.map(f64::to_radians)).expect("clap requires sigma");
        GaussianLight::new(self.u, self.v, sigma, self.gamma)
    }
}

/// Light fields left out are taken from the light fitted to `--env`.
#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub basis: PathBuf,
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub v: Option<f64>,
    /// Angular spread in radians.
    #[arg(long, conflicts_with = "sigma_deg")]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub sigma_deg: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Longitude shift applied after the fields above, in fractions of a turn.
    #[arg(long, default_value_t = 0.0)]
    pub du: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    pub omega_d: f64,
    #[arg(long, default_value_t = DEFAULT_DIFFUSION_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_LIGHT_ENV_WIDTH)]
    pub light_env_width: usize,
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write diffuse, shadowed and light files here.
    #[arg(long)]
    pub save_intermediates: Option<PathBuf>,
}

impl EditArgs {
    fn sigma(&self) -> Option<f64> {
        self.sigma.or(self.sigma_deg.map(f64::to_radians))
    }

    /// The target light, fitting the source map only when a field is missing.
    fn target(&self, env: &compose_core::EnvironmentMap) -> Result<(GaussianLight, Option<LightFit>), Error> {
        let scales = LightEdit {
            du: self.du,
            sigma_scale: self.sigma_scale,
            gamma_scale: self.gamma_scale,
            ..Default::default()
        };
        if scales.sigma_scale <= 0.0 || scales.gamma_scale <= 0.0 {
            return Err(Error::InvalidParameter("scales must be > 0".into()));
        }
        if let (Some(u), Some(v), Some(s), Some(g)) = (self.u, self.v, self.sigma(), self.gamma) {
            return Ok((GaussianLight::new(u, v, s, g)?.edit(&scales), None));
        }
        let fit = fit_gaussian(env)?;
        let base = fit.light;
        let light = GaussianLight::new(
            self.u.unwrap_or(base.u()),
            self.v.unwrap_or(base.v()),
            self.sigma().unwrap_or(base.sigma()),
            self.gamma.unwrap_or(base.gamma()),
        )?;
        Ok((light.edit(&scales), Some(fit)))
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("bad dimension {t:?} in {s:?}"))
    };
    Ok((parse(w)?, parse(h)?))
}

/// Parses `args` and runs, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.quiet);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}: {e}", e.name());
            EXIT_DOMAIN
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

fn save_image(img: &LinearImage, path: &Path, exposure: f64) -> Result<(), Error> {
    match Format::from_path(path)? {
        Format::Png => {
            let png = img.to_png(exposure)?;
            fs::write(path, png).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        }
        _ => img.save(path),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fit_json(fit: &LightFit) -> serde_json::Value {
    serde_json::json!({
        "u": fit.light.u(),
        "v": fit.light.v(),
        "sigma": fit.light.sigma(),
        "gamma": fit.light.gamma(),
        "ambient": fit.ambient,
        "peak_to_mean": fit.peak_to_mean,
        "rms_residual": fit.rms_residual,
        "iterations": fit.iterations,
    })
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::GenOlat { scene, lights, size, out } => {
            let spec = SceneSpec::resolve(scene)?;
            log::info!("rendering {lights} lights at {}x{}", size.0, size.1);
            let basis = build_olat_basis(&spec, *lights, size.0, size.1)?;
            basis.save(out, Some(&spec.name))?;
            log::info!("wrote {}", out.display());
        }
        Command::Fit { env, json } => {
            let fit = fit_gaussian(&load_envmap(env)?)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&fit_json(&fit))?);
            } else {
                let l = fit.light;
                println!("u={}", l.u());
                println!("v={}", l.v());
                println!("sigma={}", l.sigma());
                println!("gamma={}", l.gamma());
                println!("ambient={},{},{}", fit.ambient[0], fit.ambient[1], fit.ambient[2]);
                println!("peak_to_mean={}", fit.peak_to_mean);
                println!("rms_residual={}", fit.rms_residual);
                println!("iterations={}", fit.iterations);
            }
        }
        Command::SynthEnv { light, size, out } => {
            save_envmap(&synth_gaussian_env(&light.light()?, *size)?, out)?;
        }
        Command::Diffuse { env, beta, out } => {
            save_envmap(&load_envmap(env)?.diffuse(*beta)?, out)?;
        }
        Command::Render { basis, env, out, exposure } => {
            let basis = OlatBasis::load(basis)?;
            save_image(&render_olat(&basis, &load_envmap(env)?)?, out, *exposure)?;
        }
        Command::Edit(args) => run_edit(args)?,
        Command::Composite { a, b, omega_d, out, exposure } => {
            let img = composite(&LinearImage::load(a)?, &LinearImage::load(b)?, *omega_d)?;
            save_image(&img, out, *exposure)?;
        }
        Command::Metrics { a, b, mask, json } => {
            let (a, b) = (LinearImage::load(a)?, LinearImage::load(b)?);
            let mask = match mask {
                Some(p) => {
                    let (w, h, m) = load_mask(p)?;
                    if (w, h) != a.dims() {
                        return Err(Error::DimensionMismatch(format!(
                            "mask is {w}x{h}, images are {}x{}",
                            a.width(),
                            a.height()
                        )));
                    }
                    Some(m)
                }
                None => None,
            };
            let r = report(&a, &b, mask.as_deref())?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!("mae={}", r.mae);
                println!("mse={}", r.mse);
                println!("ssim={}", r.ssim);
                if let (Some(ma), Some(ms)) = (r.masked_mae, r.masked_mse) {
                    println!("masked_mae={ma}");
                    println!("masked_mse={ms}");
                }
            }
        }
        Command::EmitDataset { recipe, out } => {
            let mut recipe = DatasetRecipe::load(recipe)?;
            if let Some(seed) = cli.seed {
                recipe.seed = seed;
            }
            let records = emit_dataset(&recipe, out)?;
            log::info!("wrote {} samples to {}", records.len(), out.display());
        }
        Command::Serve { basis, port, host } => {
            let state = compose_service::AppState::from_basis_dirs(basis)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
                path: PathBuf::from("<runtime>"),
                source: e,
            })?;
            let addr = SocketAddr::new(*host, *port);
            runtime
                .block_on(compose_service::serve(state, addr))
                .map_err(|e| Error::Io {
                    path: PathBuf::from(addr.to_string()),
                    source: e,
                })?;
        }
    }
    Ok(())
}

fn run_edit(args: &EditArgs) -> Result<(), Error> {
    let basis = OlatBasis::load(&args.basis)?;
    let env = load_envmap(&args.env)?;
    let (light, fit) = args.target(&env)?;
    let req = EditRequest {
        light: LightTarget::Absolute(light),
        omega_d: args.omega_d,
        beta: args.beta,
        exposure: args.exposure,
        light_env_width: args.light_env_width,
    };
    let result = edit(&basis, &env, &req)?;
    save_image(&result.edited, &args.out, args.exposure)?;
    if let Some(dir) = &args.save_intermediates {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        result.diffuse.save(&dir.join("diffuse.pfm"))?;
        result.shadowed.save(&dir.join("shadowed.pfm"))?;
        result.edited.save(&dir.join("edited.pfm"))?;
        save_envmap(
            &synth_gaussian_env(&light, args.light_env_width)?,
            &dir.join("light_env.pfm"),
        )?;
        let doc = serde_json::json!({
            "light": light,
            "fit": fit.as_ref().map(fit_json),
            "omega_d": args.omega_d,
            "beta": args.beta,
        });
        write_text(&dir.join("light.json"), &serde_json::to_string_pretty(&doc)?)?;
    }
    log::info!(
        "light u={:.4} v={:.4} sigma={:.4} gamma={:.4}",
        light.u(),
        light.v(),
        light.sigma(),
        light.gamma()
    );
    Ok(())
}
