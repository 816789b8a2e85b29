pub mod cli;
pub mod diffmath;
pub mod error;
pub mod eval;
pub mod io;
pub mod layers;
pub mod models;
pub mod params;
pub mod relation;
pub mod seed;
pub mod synthworld;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor2;
