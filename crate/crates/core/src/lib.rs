//! Polytopal virtual element solver for steady Biot poroelasticity coupled to
//! stress-assisted diffusion.
//!
//! The stress is discretised with a Hellinger–Reissner virtual element space
//! (strongly symmetric, H(div)-conforming), the Darcy and diffusive fluxes with
//! the 2D mixed H(div) virtual element space, and pressure, displacement and
//! concentration with discontinuous polynomials. The nonlinear coupling through
//! the stress-dependent diffusivity is resolved by a Picard fixed-point loop.
//!
//! Module map:
//!
//! * [`mesh`]: polygonal meshes, generators, text format, per-cell geometry.
//! * [`polybasis`]: scaled monomials, vector decompositions, quadrature.
//! * [`model`]: material parameters, compliance, diffusivity law.
//! * [`hr_space`]: local Hellinger–Reissner stress space.
//! * [`hdiv_space`]: local mixed H(div) flux space.
//! * [`assembly`]: global numbering, block systems, load functionals.
//! * [`solver`]: sparse block solves and the Picard driver.
//! * [`verification`]: manufactured solutions, error norms, rate studies.
//! * [`saddle`]: finite-dimensional checks of the perturbed saddle-point theorem.

pub mod assembly;
pub mod hdiv_space;
pub mod hr_space;
pub mod mesh;
pub mod model;
pub mod polybasis;
pub mod saddle;
pub mod solver;
pub mod verification;

mod dense;

use thiserror::Error;

/// 2D point / vector type used throughout the crate.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Dense matrix type used for all element-level linear algebra.
pub type DMat = nalgebra::DMatrix<f64>;

/// Dense column vector.
pub type DVec = nalgebra::DVector<f64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Basis(#[from] polybasis::BasisError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Assembly(#[from] assembly::AssemblyError),
    #[error(transparent)]
    Solve(#[from] solver::SolveError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
