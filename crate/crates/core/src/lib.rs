//! Contrast-variant pooling for single-image illuminant estimation.
//!
//! Classical low-level estimators (White-Patch, Grey-World, Grey-Edge and
//! Double-Opponency) reduce a per-pixel feature map to one value per channel.
//! This crate makes that reduction pluggable: max, Minkowski norm, top-x
//! percent, or contrast-variant pooling (CVP), where the percentage is derived
//! from the image's own local contrast.
//!
//! ```
//! use cvpool::algorithms::{estimate, EstimatorSpec, Method};
//! use cvpool::imgio::Image;
//! use cvpool::pooling::PoolingSpec;
//!
//! let img = Image::from_fn(32, 32, |x, y| {
//!     let v = ((x / 4 + y / 4) % 3) as f64 / 3.0 + 0.1;
//!     [0.8 * v, 0.6 * v, 0.3 * v]
//! });
//! let spec = EstimatorSpec::new(Method::WhitePatch, PoolingSpec::cvp());
//! let e = estimate(&img, &spec).unwrap().illuminant;
//! assert!((e.r() / e.b() - 0.8 / 0.3).abs() < 1e-9);
//! ```

pub mod algorithms;
pub mod bench;
pub mod contrast;
pub mod error;
pub mod filters;
pub mod imgio;
pub mod metrics;
pub mod pooling;

pub use algorithms::{estimate, EstimatorSpec, Illuminant, Method};
pub use error::{Error, Result};
pub use imgio::Image;
pub use pooling::PoolingSpec;
