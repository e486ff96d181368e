//! Geodesic scattering data, travel-time recovery and boundary rigidity
//! experiments on semi-Riemannian manifolds with boundary.

pub mod error;
pub mod geodesic;
pub mod io;
pub mod jet;
pub mod metric;
pub mod numerics;
pub mod rigidity;
pub mod scattering;
pub mod variation;

pub use error::{Error, Result};
pub use numerics::{ChainParams, Numerics};
