//! Block-term decomposition in multilinear rank-(1, L_r, L_r) terms.

pub mod cluster;
pub mod decomposition;
pub mod error;
pub mod experiment;
pub mod gf;
pub mod io;
pub mod linalg;
pub mod minors;
pub mod scalar;
pub mod sjbd;
pub mod solver;
pub mod tensor;
pub mod uniqueness;

pub use decomposition::{BlockTermDecomposition, Term};
pub use error::{Error, Result};
pub use scalar::{Field, Scalar};
pub use tensor::{Mode, Tensor3};
