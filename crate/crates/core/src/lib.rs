//! Gradient maps of compatible subgroups of `SL(n, C)` acting on complex
//! Grassmannians: maximal weights, negative gradient flows, stability
//! tests, flow-limit stratification and chamber convexity audits.

pub mod convexity;
pub mod error;
pub mod kahler;
pub mod lab;
pub mod lie_core;
pub mod linalg;
pub mod flows;
pub mod hull;
pub mod minnorm;
pub mod moment;
mod ode;
pub mod scenarios;
pub mod stability;
pub mod strata;

pub use error::{GradmapError, Result};
