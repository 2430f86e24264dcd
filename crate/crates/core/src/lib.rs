//! Worst-case shape optimization for Dirichlet energies.
//!
//! Generalized domains in a rectangle `D` are represented by nodal
//! potentials `V ∈ [0, M]` on a structured P1 mesh: `V = 0` marks material
//! and large `V` marks void. The crate evaluates the worst-case energy
//! under `L^p`-bounded source perturbations, solves the associated
//! nonlinear state equation, and minimizes the worst-case objective under
//! the smooth volume constraint `∫ e^{-αV} ≤ m`.

pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod fem;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod optimize;
pub mod radial;
pub mod runlog;
pub mod state;

pub use error::{Error, Result};
pub use fem::{FemSpace, SparseSymmetricMatrix};
pub use field::ScalarField;
pub use functionals::FunctionalValue;
pub use grid::{RectDomain, Source, StructuredMesh};
pub use optimize::{OptimizationConfig, OptimizationResult, OptimizerKind};
pub use state::{StateConfig, StateSolution};
