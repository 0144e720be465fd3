//! Positivity-preserving eigensolvers for nonnegative matrices and M-matrices.
//!
//! The Noda iteration is inverse iteration whose shift is the Collatz–Wielandt
//! upper bound `max(Bx/x)`; every shifted matrix is then a nonsingular
//! M-matrix, so each iterate stays strictly positive and the bound decreases
//! monotonically to the Perron root. The inexact variants solve the shifted
//! systems only to the residual tolerance `γ·min(x_k)` (INI_1) or that tolerance
//! tightened by the latest relative eigenvalue change (INI_2), and keep both
//! properties. The same recursion with `min(Ax/x)` gives the smallest
//! eigenpair of an irreducible nonsingular M-matrix.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below name the double-precision instantiations used by the CLI.
//!
//! ```
//! use noda_core::{generate, solve_perron, Algorithm, SolveOptions};
//!
//! let b = generate::fibonacci::<f64>();
//! let h = solve_perron(&b, &SolveOptions::with_algorithm(Algorithm::Ini2)).unwrap();
//! assert!(h.converged && h.positivity_preserved);
//! assert!((h.eigenvalue() - 1.618_033_988_749_895).abs() < 1e-12);
//! ```
// `!(x > 0)` is meant to catch NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod generate;
pub mod inner;
pub mod io;
pub mod mmatrix;
pub mod outer;
pub mod perron;
pub mod scalar;
pub mod sparse;

pub use diagnostics::{dense_reference, itotal, rate_report, RateReport, ReferenceEigenpair};
pub use error::{NodaError, Result};
pub use inner::{InnerMethod, InnerRequest, InnerResult};
pub use mmatrix::{solve_mmatrix, to_nonnegative, ShiftConversion};
pub use outer::{Algorithm, ConvergenceHistory, OuterState, ProblemMode, SolveOptions, StartVector};
pub use perron::{power_method, solve_perron};
pub use scalar::Scalar;
pub use sparse::{PositiveUnitVector, ShiftedOperator, SparseMatrix};

pub type SparseMatrixF64 = SparseMatrix<f64>;
pub type SparseMatrixF32 = SparseMatrix<f32>;
pub type SolveOptionsF64 = SolveOptions<f64>;
pub type HistoryF64 = ConvergenceHistory<f64>;
pub type HistoryF32 = ConvergenceHistory<f32>;
pub type ReferenceF64 = ReferenceEigenpair<f64>;
