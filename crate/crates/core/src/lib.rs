//! Minimal penalty functions for convex risk measures.
//!
//! Two layers:
//!
//! - [`finite_duality`]: exact static duality on finite probability spaces
//!   (risk from a penalty, minimal penalty via biduality, Fenchel
//!   biconjugates, axiom checks).
//! - [`levy_model`], [`density`], [`convergence`], [`penalty_risk`]: Monte
//!   Carlo construction of density processes `D = E(Z^θ)` for a Lévy driver,
//!   the penalty `ϑ(Q)` built from convex functions of the Girsanov
//!   coefficients, and the risk measure it induces.

pub mod convergence;
pub mod density;
pub mod extended;
pub mod finite_duality;
pub mod levy_model;
pub mod optimize;
pub mod penalty_risk;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use extended::Extended;
pub use rng::RngStream;
pub use stats::Estimate;
