pub mod dual;
pub mod error;
pub mod export;
pub mod field;
pub mod geodesics;
pub mod geometry;
mod linalg;
pub mod manifolds;
pub mod oracle;
pub mod sampling;
pub mod train;

pub use error::{AtlasError, Result};
