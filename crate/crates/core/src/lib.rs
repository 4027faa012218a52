pub mod cli;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod linalg;
pub mod pipeline;
pub mod scenario;
pub mod sfm;
pub mod surface;
pub mod solver;
pub mod vectorize;
pub mod wigo;

pub use error::{Error, Result};
