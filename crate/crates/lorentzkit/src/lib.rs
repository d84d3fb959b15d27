//! Numerical Lorentzian geometry toolkit.
//!
//! Jets of closed-form metrics give exact pointwise curvature; on top of that
//! sit a Killing-field extension engine with its structure tensors, a
//! pseudo-convexity certifier, the stationary reduction of Kerr, and a
//! characteristic-data constructor for null hypersurfaces.

pub mod catalog;
pub mod cli;
pub mod error;
pub mod expr;
pub mod geodesic;
pub mod jet;
pub mod killext;
pub mod nullchar;
pub mod pconvex;
pub mod reduction;
pub mod report;
pub mod tensor;

pub use error::{GeoError, Result};
