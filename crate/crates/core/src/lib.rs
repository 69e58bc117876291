//! Lighting decomposition and shadow editing over a synthetic light stage.
//!
//! An environment map is split into an editable Gaussian dominant light and
//! an ambient remainder. Scenes are relit through one-light-at-a-time (OLAT)
//! bases rendered by a small raytracer, so every edit (soften, intensify,
//! resize, rotate) is an exact linear combination of basis images.

pub mod color;
pub mod dataset;
pub mod envmap;
pub mod error;
pub mod gausslight;
pub mod image;
pub mod io;
pub mod metrics;
pub mod olat;
pub mod skies;
pub mod synthstage;

pub use envmap::EnvironmentMap;
pub use error::{Error, Result};
pub use gausslight::{GaussianLight, LightEdit, LightFit};
pub use image::LinearImage;
pub use olat::{EditRequest, LightTarget, OlatBasis};
