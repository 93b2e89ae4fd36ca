//! Explicit lower-bound machinery for estimating the L2 norm of a density
//! over anisotropic Nikolskii classes: rate exponents, bump-perturbation
//! families, membership checks, χ²-budget certificates and risk simulation.

pub mod density_lab;
pub mod error;
pub mod lb_verifier;
pub mod nikolskii;
pub mod numerics;
pub mod param_space;
pub mod risk_sim;
pub mod serde_ext;

pub use error::{Error, Result};
pub use param_space::ClassParams;
