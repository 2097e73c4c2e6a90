pub mod bethe;
pub mod cli;
pub mod error;
pub mod formula;
pub mod gwtree;
pub mod model;
pub mod moments;
pub mod numerics;
pub mod peel;
pub mod population;
pub mod rng;

pub use error::{Error, Result};
pub use model::ModelParams;
