pub mod circuit;
pub mod error;
pub mod eval;
pub mod flow;
pub mod gallery;
pub mod gaussian;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod ops;
pub mod qca;
pub mod tensor;

pub use error::{Error, Result};
