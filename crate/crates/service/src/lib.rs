//! HTTP API over the relighting pipeline.
//!
//! Every scene pairs an immutable OLAT basis with a source environment map
//! and its fitted light. Uploading a new map swaps the whole session in one
//! step, so concurrent renders see either the old or the new state.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/health` | liveness |
//! | GET | `/api/scenes` | scene ids and metadata |
//! | POST | `/api/scenes/{id}/env` | replace the source map, returns the fit |
//! | GET | `/api/scenes/{id}/render` | tonemapped PNG |

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use compose_core::envmap::{EnvironmentMap, DEFAULT_DIFFUSION_BETA};
use compose_core::gausslight::{fit_gaussian, synth_gaussian_env, GaussianLight, LightFit};
use compose_core::olat::{composite, diffuse_image, shadowed_image, OlatBasis, DEFAULT_LIGHT_ENV_WIDTH};
use compose_core::skies::builtin_env;
use compose_core::{Error, LinearImage};

/// Source map every scene starts with.
pub const DEFAULT_ENV: &str = "sunny";
pub const DEFAULT_ENV_WIDTH: usize = 128;
const MAX_UPLOAD: usize = 256 << 20;

/// The source map of a scene and the light fitted to it, if any.
#[derive(Debug)]
pub struct Session {
    pub env: EnvironmentMap,
    pub fit: Option<LightFit>,
}

impl Session {
    pub fn new(env: EnvironmentMap) -> (Self, Result<LightFit, Error>) {
        let fit = fit_gaussian(&env);
        let session = Self {
            env,
            fit: fit.as_ref().ok().copied(),
        };
        (session, fit)
    }
}

struct SceneEntry {
    name: Option<String>,
    basis: Arc<OlatBasis>,
    session: RwLock<Arc<Session>>,
}

#[derive(Clone)]
pub struct AppState {
    scenes: Arc<BTreeMap<String, SceneEntry>>,
}

impl AppState {
    /// Scenes keyed by id, each starting from the default sky.
    pub fn new(scenes: Vec<(String, Option<String>, OlatBasis)>) -> Result<Self, Error> {
        let default_env = builtin_env(DEFAULT_ENV, DEFAULT_ENV_WIDTH)?;
        let mut map = BTreeMap::new();
        for (id, name, basis) in scenes {
            let (session, _) = Session::new(default_env.clone());
            let entry = SceneEntry {
                name,
                basis: Arc::new(basis),
                session: RwLock::new(Arc::new(session)),
            };
            if map.insert(id.clone(), entry).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate scene id {id:?}")));
            }
        }
        Ok(Self {
            scenes: Arc::new(map),
        })
    }

    /// Loads basis directories. A scene's id is the scene name recorded in its
    /// manifest, or else the directory name.
    pub fn from_basis_dirs(dirs: &[PathBuf]) -> Result<Self, Error> {
        let scenes = dirs
            .iter()
            .map(|dir| {
                let (basis, name) = OlatBasis::load_with_scene(dir)?;
                let id = name.clone().unwrap_or_else(|| dir_name(dir));
                Ok((id, name, basis))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Self::new(scenes)
    }

    fn scene(&self, id: &str) -> Result<&SceneEntry, ApiError> {
        self.scenes.get(id).ok_or_else(|| ApiError::UnknownScene(id.to_string()))
    }
}

fn dir_name(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "scene".into())
}

pub enum ApiError {
    UnknownScene(String),
    BadRequest(String),
    Domain(Error),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    message: String,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Domain(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, message) = match self {
            ApiError::UnknownScene(id) => (
                StatusCode::NOT_FOUND,
                "UnknownScene".to_string(),
                format!("no scene {id:?}"),
            ),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "InvalidParameter".into(), m),
            ApiError::Domain(e) => {
                let status = match e {
                    Error::InvalidParameter(_)
                    | Error::UnsupportedFormat(_)
                    | Error::Decode(_)
                    | Error::AspectRatio { .. }
                    | Error::NonUnitDirection(_)
                    | Error::Json(_) => StatusCode::BAD_REQUEST,
                    Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
                    _ => StatusCode::UNPROCESSABLE_ENTITY,
                };
                (status, e.name().to_string(), e.to_string())
            }
        };
        (status, Json(ErrorBody { error, message })).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/scenes", get(list_scenes))
        .route("/api/scenes/{id}/env", post(upload_env))
        .route("/api/scenes/{id}/render", get(render))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .layer(cors)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResponse {
    pub u: f64,
    pub v: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub ambient: [f64; 3],
    pub peak_to_mean: f64,
    pub rms_residual: f64,
    pub iterations: usize,
}

impl From<&LightFit> for FitResponse {
    fn from(f: &LightFit) -> Self {
        Self {
            u: f.light.u(),
            v: f.light.v(),
            sigma: f.light.sigma(),
            gamma: f.light.gamma(),
            ambient: f.ambient,
            peak_to_mean: f.peak_to_mean,
            rms_residual: f.rms_residual,
            iterations: f.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneInfo {
    pub id: String,
    pub scene: Option<String>,
    pub width: usize,
    pub height: usize,
    pub lights: usize,
    pub env_width: usize,
    pub fit: Option<FitResponse>,
}

async fn list_scenes(State(state): State<AppState>) -> Json<Vec<SceneInfo>> {
    let list = state
        .scenes
        .iter()
        .map(|(id, entry)| {
            let session = entry.session.read().expect("session lock").clone();
            let (width, height) = entry.basis.dims();
            SceneInfo {
                id: id.clone(),
                scene: entry.name.clone(),
                width,
                height,
                lights: entry.basis.len(),
                env_width: session.env.width(),
                fit: session.fit.as_ref().map(FitResponse::from),
            }
        })
        .collect();
    Json(list)
}

/// JSON form of an environment upload.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSpec {
    builtin: Option<String>,
    gaussian: Option<GaussianLight>,
    width: Option<usize>,
}

impl EnvSpec {
    fn build(&self) -> Result<EnvironmentMap, ApiError> {
        let width = self.width.unwrap_or(DEFAULT_ENV_WIDTH);
        match (&self.builtin, &self.gaussian) {
            (Some(name), None) => Ok(builtin_env(name, width)?),
            (None, Some(light)) => Ok(synth_gaussian_env(light, width)?),
            _ => Err(ApiError::BadRequest(
                "give exactly one of \"builtin\" or \"gaussian\"".into(),
            )),
        }
    }
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"))
}

async fn upload_env(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<FitResponse>, ApiError> {
    let entry = state.scene(&id)?;
    let env = if is_json(&headers) {
        let spec: EnvSpec = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        spec.build()?
    } else {
        EnvironmentMap::from_bytes(&body)?
    };
    let (session, fit) = tokio::task::spawn_blocking(move || Session::new(env))
        .await
        .expect("fit task");
    *entry.session.write().expect("session lock") = Arc::new(session);
    Ok(Json(FitResponse::from(&fit?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Edited,
    Diffuse,
    Shadowed,
    Envmap,
}

/// Parsed render query. Light fields left out are taken from the fitted
/// light.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderQuery {
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub omega_d: f64,
    pub beta: f64,
    pub exposure: f64,
    pub which: Which,
}

fn number(q: &HashMap<String, String>, key: &str) -> Result<Option<f64>, ApiError> {
    match q.get(key) {
        None => Ok(None),
        Some(s) => match s.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(ApiError::BadRequest(format!("{key}={s:?} is not a number"))),
        },
    }
}

impl RenderQuery {
    pub fn parse(q: &HashMap<String, String>) -> Result<Self, ApiError> {
        let which = match q.get("which").map(String::as_str) {
            None | Some("edited") => Which::Edited,
            Some("diffuse") => Which::Diffuse,
            Some("shadowed") => Which::Shadowed,
            Some("envmap") => Which::Envmap,
            Some(other) => {
                return Err(ApiError::BadRequest(format!(
                    "which={other:?}; expected edited, diffuse, shadowed or envmap"
                )))
            }
        };
        let query = Self {
            u: number(q, "u")?,
            v: number(q, "v")?,
            sigma: number(q, "sigma")?,
            gamma: number(q, "gamma")?,
            omega_d: number(q, "omega_d")?.unwrap_or(0.5),
            beta: number(q, "beta")?.unwrap_or(DEFAULT_DIFFUSION_BETA),
            exposure: number(q, "exposure")?.unwrap_or(1.0),
            which,
        };
        if !(0.0..=1.0).contains(&query.omega_d) {
            return Err(ApiError::BadRequest("omega_d must be in [0, 1]".into()));
        }
        if !(query.beta > 0.0 && query.beta <= std::f64::consts::PI) {
            return Err(ApiError::BadRequest("beta must be in (0, pi]".into()));
        }
        if query.exposure <= 0.0 {
            return Err(ApiError::BadRequest("exposure must be > 0".into()));
        }
        Ok(query)
    }

    fn light(&self, session: &Session) -> Result<GaussianLight, ApiError> {
        let given = [self.u, self.v, self.sigma, self.gamma];
        let base = match (given.iter().all(Option::is_some), &session.fit) {
            (true, _) => None,
            (false, Some(f)) => Some(f.light),
            // Refit only to report why there is no light to edit.
            (false, None) => Some(fit_gaussian(&session.env)?.light),
        };
        let pick = |q: Option<f64>, f: fn(&GaussianLight) -> f64| {
            q.or_else(|| base.as_ref().map(f)).expect("light field")
        };
        GaussianLight::new(
            pick(self.u, GaussianLight::u),
            pick(self.v, GaussianLight::v),
            pick(self.sigma, GaussianLight::sigma),
            pick(self.gamma, GaussianLight::gamma),
        )
        .map_err(|e| ApiError::BadRequest(e.to_string()))
    }
}

/// Renders one view for a session. Pure in its inputs.
pub fn render_view(basis: &OlatBasis, session: &Session, q: &RenderQuery) -> Result<Vec<u8>, ApiError> {
    let img: LinearImage = match q.which {
        Which::Envmap => {
            let r = session.env.to_raster();
            LinearImage::new(r.width, r.height, r.pixels)?
        }
        Which::Diffuse => diffuse_image(basis, &session.env, q.beta)?,
        Which::Shadowed => shadowed_image(basis, &q.light(session)?, DEFAULT_LIGHT_ENV_WIDTH)?,
        Which::Edited => {
            let light = q.light(session)?;
            let i_d = diffuse_image(basis, &session.env, q.beta)?;
            let i_s = shadowed_image(basis, &light, DEFAULT_LIGHT_ENV_WIDTH)?;
            composite(&i_d, &i_s, q.omega_d)?
        }
    };
    Ok(img.to_png(q.exposure)?)
}

async fn render(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let entry = state.scene(&id)?;
    let query = RenderQuery::parse(&params)?;
    let basis = entry.basis.clone();
    let session = entry.session.read().expect("session lock").clone();
    let png = tokio::task::spawn_blocking(move || render_view(&basis, &session, &query))
        .await
        .expect("render task")?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
