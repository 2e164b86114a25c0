pub mod autodiff;
pub mod checks;
pub mod diagnostics;
pub mod error;
pub mod fmt;
pub mod graph;
pub mod layers;
pub mod matrix;
pub mod randalign;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
