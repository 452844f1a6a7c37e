//! Structured-grid solver laboratory for the 2D incompressible Stokes
//! equations.
//!
//! The crate assembles the Q2-Q1 Taylor-Hood discretization of the Stokes
//! system on uniform grids of the unit square, stores every operator in a
//! stencil ("array of arrays") format, and solves the resulting saddle-point
//! system with flexible GMRES under four preconditioning strategies:
//!
//! - monolithic multigrid with Braess-Sarazin relaxation,
//! - monolithic multigrid with additive Vanka relaxation (grouped patch
//!   matrices or one stored inverse per patch),
//! - monolithic multigrid with Schur-Uzawa relaxation,
//! - an upper block-triangular preconditioner with inner scalar multigrid.
//!
//! Every kernel is instrumented with read/write/flop counters, and an
//! analytic roofline-style cost model turns the tallies into modeled time,
//! arithmetic-intensity, and performance reports.

pub mod assembly;
pub mod blocktri;
pub mod counters;
pub mod krylov;
pub mod mesh;
pub mod mg;
pub mod perfmodel;
pub mod relax;
pub mod stencil;
pub mod vanka;
pub mod vector;

pub use assembly::{
    assemble_operators, assemble_problem, assemble_rhs, build_interpolation, l2_errors,
    manufactured_forcing, manufactured_solution, ErrorNorms, Operators,
};
pub use counters::{Counters, Counts, Kernel};
pub use mesh::{dof_coordinates, dof_counts, local_patch_numbering, DofClass, DofIndex, StructuredGrid};
pub use vector::BlockVector;

pub mod error;
pub use error::{Error, Result};
