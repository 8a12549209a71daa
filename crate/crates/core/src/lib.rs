//! Matrix-free finite-element homogenization on periodic voxel grids with an
//! FFT-diagonalised reference preconditioner.
//!
//! The crate is `no_std` with `alloc`. IO, threading and the command line
//! live in the `fehomog` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod krylov;
pub mod linalg;
pub mod mandel;
pub mod material;
mod math;
pub mod newton;
pub mod operator;
pub mod precond;
pub mod projection;
pub mod spectral;

pub use error::{Error, Result};
pub use fft::{Direction, FftBackend, NativeFft, RealFftNd};
pub use field::{NodalField, Physics, QuadField, TangentField};
pub use grid::{CellSpec, GridLayout, StencilKind};
pub use linalg::Matrix;
pub use material::{InternalState, J2Params, MaterialModel};
pub use newton::{
    average_stress, newton_solve, Clock, LoadStepReport, MaterialMap, NewtonCriterion, NewtonStep, NoClock,
    ReferencePolicy, SolveConfig, SolveReport, Solver, Termination,
};
pub use operator::{Discretization, Weighting};
pub use precond::{apply_preconditioner, assemble_reference, invert_blocks, AssemblyStats, FrequencyBlockDiag};
pub use projection::{compare_db_sb, gamma_apply, sb_newton_solve, Comparison, SbSolver};
pub use spectral::{condition_estimate, dense_assemble, eigenvalue_bounds, BoundSequences};
