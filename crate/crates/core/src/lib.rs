//! Numerical laboratory for state-constraint Hamilton-Jacobi-Bellman equations
//! delta u + |Du|^p - f(x) - eps Delta u = 0 on dilations of star-shaped domains.
//!
//! The equation is discretized as a controlled Markov chain. Discounted problems are solved by policy
//! iteration, the additive eigenvalue c and its Mather measures come from the average-cost linear
//! program, and the modules on top sweep the dilation parameter, run the vanishing-discount limit on
//! moving domains and check the quadratic case against the linear Dirichlet eigenproblem.

// `!(x > 0)` is meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod discount;
pub mod ergodic;
pub mod error;
pub mod geometry;
pub mod hjb;
pub mod hopf_cole;
pub mod lagrangian;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod scalar;
pub mod table;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type Domain = geometry::Domain<f64>;
pub type Grid = geometry::Grid<f64>;
pub type LagrangianSpec = lagrangian::LagrangianSpec<f64>;
pub type RunningCost = lagrangian::RunningCost<f64>;
pub type DiscreteMdp = mdp::DiscreteMdp<f64>;
pub type MdpOptions = mdp::MdpOptions<f64>;
pub type ValueField = hjb::ValueField<f64>;
pub type EigenResult = ergodic::EigenResult<f64>;
pub type MatherMeasure = ergodic::MatherMeasure<f64>;
pub type EigenCurve = curve::EigenCurve<f64>;
pub type LinearEigenpair = hopf_cole::LinearEigenpair<f64>;
