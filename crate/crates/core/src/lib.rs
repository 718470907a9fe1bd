//! Numerical laboratory for stability of complex Monge-Ampere equations on
//! compact Kahler manifolds.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]
pub mod cli;
pub mod error;
pub mod experiments;
pub mod exponents;
pub mod fit;
pub mod grid;
pub mod quadrature;
pub mod radial;

pub use error::{Error, Result};
