//! Numerical building blocks shared by every module.

pub mod mollifier;
pub mod quadrature;
