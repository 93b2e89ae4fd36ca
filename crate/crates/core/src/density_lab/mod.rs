//! Perturbation families: bump shapes, base densities, lattice families and samplers.

pub mod base;
pub mod bump;
pub mod family;
pub mod sample;

pub use base::{mollified_uniform, shrunk_composite, BaseDensity, BaseKind};
pub use bump::{make_bump, BumpKind, BumpShape};
pub use family::{
    build_family_i, build_family_ii, build_family_nonneg, functional_norms, Construction, FamilyOptions,
    FunctionalNorms, Lattice, PerturbationFamily, PriorSpec,
};
pub use sample::{sample_density, sample_with, Sample};
