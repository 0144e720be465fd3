//! Perron root and vector of an irreducible nonnegative matrix.

use std::time::Instant;

use crate::error::{NodaError, Result};
use crate::outer::{self, Algorithm, Context, ConvergenceHistory, OuterState, ProblemMode, SolveOptions};
use crate::scalar::{norm2, Scalar};
use crate::sparse::{PositiveUnitVector, SparseMatrix};

/// `max(B x0 / x0)`, an upper bound on `ρ(B)`.
pub fn lambda_bar_init<T: Scalar>(b: &SparseMatrix<T>, x0: &PositiveUnitVector<T>) -> Result<T> {
    let bx = b.matvec(x0.as_slice())?;
    ProblemMode::Perron.bound(&bx, x0.as_slice())
}

/// One Noda / inexact Noda step from `state`.
///
/// The inner summary of `state` is filled in and the next state returned.
/// Returns `Ok(None)` when `state` already meets the outer tolerance, so no
/// singular system is ever assembled at an exact eigenvector.
pub fn outer_step<T: Scalar>(
    b: &SparseMatrix<T>,
    state: &mut OuterState<T>,
    prev_lambda: Option<T>,
    options: &SolveOptions<T>,
) -> Result<Option<OuterState<T>>> {
    options.validate()?;
    let ctx = Context::new(b, ProblemMode::Perron);
    if state.relative_residual <= options.outer_tol {
        return Ok(None);
    }
    let mut warnings = Vec::new();
    outer::step(&ctx, state, prev_lambda, options, &mut warnings).map(Some)
}

/// Initial outer state for `x0`.
pub fn initial_state<T: Scalar>(b: &SparseMatrix<T>, x0: PositiveUnitVector<T>) -> Result<OuterState<T>> {
    Context::new(b, ProblemMode::Perron).initial_state(x0)
}

/// Runs NI, INI_1, INI_2 or the power method on a nonnegative matrix.
pub fn solve_perron<T: Scalar>(b: &SparseMatrix<T>, options: &SolveOptions<T>) -> Result<ConvergenceHistory<T>> {
    if options.algorithm == Algorithm::Power {
        let x0 = options.x0.build(b.n())?;
        return power_method(b, x0, options.outer_tol, options.max_outer);
    }
    outer::run(b, ProblemMode::Perron, options)
}

/// Power iteration `x ← Bx/‖Bx‖` with the Collatz–Wielandt bound
/// `max(Bx/x)` as eigenvalue estimate and the same scaled-residual stop as the
/// Noda runs. Every state costs one product with `B`.
pub fn power_method<T: Scalar>(
    b: &SparseMatrix<T>,
    x0: PositiveUnitVector<T>,
    tol: T,
    max_it: usize,
) -> Result<ConvergenceHistory<T>> {
    let options =
        SolveOptions { algorithm: Algorithm::Power, outer_tol: tol, max_outer: max_it, ..SolveOptions::default() };
    if !(tol > T::zero()) {
        return Err(NodaError::InvalidOption("tol must be positive".into()));
    }
    let mut warnings = Vec::new();
    outer::validate_matrix(b, ProblemMode::Perron, &mut warnings)?;
    let ctx = Context::new(b, ProblemMode::Perron);
    if x0.len() != b.n() {
        return Err(NodaError::DimensionMismatch { expected: b.n(), found: x0.len() });
    }

    let started = Instant::now();
    let mut states = Vec::new();
    let mut x = x0;
    let mut converged = false;
    for k in 0..=max_it {
        let bx = b.matvec(x.as_slice())?;
        let lambda = ProblemMode::Perron.bound(&bx, x.as_slice())?;
        let state = ctx.state(k, x, &bx, lambda);
        let done = state.relative_residual <= tol;
        states.push(state);
        if done {
            converged = true;
            break;
        }
        if k == max_it {
            break;
        }
        if norm2(&bx) == T::zero() {
            return Err(NodaError::ZeroVector(k));
        }
        x = PositiveUnitVector::normalize(bx)?;
    }
    let wall_time = started.elapsed();
    Ok(outer::finish(ProblemMode::Perron, &options, &ctx, states, converged, wall_time, warnings))
}
