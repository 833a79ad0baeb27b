pub mod error;
pub mod gam_backfit;
pub mod gam_pspline;
pub mod gamboost;
pub mod harness;
pub mod linalg;
pub mod logistic_glm;
pub mod roc_eval;
pub mod simgen;
pub mod spline_basis;

pub use error::{Error, Result};
