//! Smallest eigenpair of an irreducible nonsingular M-matrix.
//!
//! The iteration works on `A` directly with the increasing lower bound
//! `λ_k = min(Ax_k/x_k)` and never needs a splitting `A = σI − B`. The shift
//! `σ` only appears in [`to_nonnegative`], for cross-checks against the
//! Perron solver and for running the power method.

use crate::error::{NodaError, Result};
use crate::outer::{self, Algorithm, ConvergenceHistory, ProblemMode, SolveOptions};
use crate::perron;
use crate::scalar::{dot, Scalar};
use crate::sparse::{PositiveUnitVector, SignPattern, SparseMatrix};

/// Default margin of `σ` above the largest diagonal entry.
pub const DEFAULT_SIGMA_FACTOR: f64 = 1.05;

/// `min(A x0 / x0)`, a lower bound on the smallest eigenvalue.
pub fn lambda_under_init<T: Scalar>(a: &SparseMatrix<T>, x0: &PositiveUnitVector<T>) -> Result<T> {
    let ax = a.matvec(x0.as_slice())?;
    ProblemMode::MSmallest.bound(&ax, x0.as_slice())
}

/// Runs NI, INI_1 or INI_2 for the smallest eigenpair of `a`.
pub fn solve_mmatrix<T: Scalar>(a: &SparseMatrix<T>, options: &SolveOptions<T>) -> Result<ConvergenceHistory<T>> {
    outer::run(a, ProblemMode::MSmallest, options)
}

/// `B = σI − A` together with the `σ` used.
#[derive(Debug, Clone)]
pub struct ShiftConversion<T> {
    pub sigma: T,
    pub b: SparseMatrix<T>,
}

/// Default `σ` for a matrix whose largest diagonal entry is `d`: `1.05·d`,
/// or `d + 0.05` when `d ≤ 0`, nudged up by one ulp if rounding left it at `d`.
pub fn default_sigma<T: Scalar>(d: T) -> T {
    let margin = T::lit(DEFAULT_SIGMA_FACTOR - 1.0);
    let sigma = if d > T::zero() { T::lit(DEFAULT_SIGMA_FACTOR) * d } else { d + margin };
    if sigma > d {
        sigma
    } else {
        d + d.abs() * T::epsilon() + T::min_positive_value()
    }
}

/// Builds `B = σI − A`. `σ` defaults to [`default_sigma`] of the largest
/// diagonal entry and must not be below it.
pub fn to_nonnegative<T: Scalar>(a: &SparseMatrix<T>, sigma: Option<T>) -> Result<ShiftConversion<T>> {
    if !a.check_sign_pattern(SignPattern::ZMatrix) {
        return Err(NodaError::Validation("matrix is not a Z-matrix".into()));
    }
    let d = a.diagonal().into_iter().fold(T::neg_infinity(), T::max);
    let sigma = match sigma {
        Some(s) if s < d => {
            return Err(NodaError::Validation(format!(
                "sigma = {s} is below the largest diagonal entry {d}; sigma·I − A would have a negative diagonal"
            )))
        }
        Some(s) => s,
        None => default_sigma(d),
    };
    let mut triplets: Vec<(usize, usize, T)> =
        a.triplets().filter(|&(i, j, _)| i != j).map(|(i, j, v)| (i, j, -v)).collect();
    for (i, aii) in a.diagonal().into_iter().enumerate() {
        let v = sigma - aii;
        if v != T::zero() {
            triplets.push((i, i, v));
        }
    }
    let b = SparseMatrix::from_triplets(a.n(), &triplets)?.with_symmetric_hint(a.symmetric_hint());
    Ok(ShiftConversion { sigma, b })
}

/// Agreement between a Perron run on `σI − A` and an M-matrix run on `A`.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceReport<T> {
    pub sigma: T,
    pub rho: T,
    pub lambda: T,
    /// `|(σ − ρ) − λ| / |λ|`.
    pub relative_gap: T,
    /// Acute angle between the two eigenvectors, in radians.
    pub angle: T,
}

pub fn equivalence_check<T: Scalar>(
    sigma: T,
    perron_result: &ConvergenceHistory<T>,
    mmatrix_result: &ConvergenceHistory<T>,
) -> EquivalenceReport<T> {
    let rho = perron_result.eigenvalue();
    let lambda = mmatrix_result.eigenvalue();
    let diff = ((sigma - rho) - lambda).abs();
    let relative_gap = if lambda != T::zero() { diff / lambda.abs() } else { diff };
    let c = dot(perron_result.eigenvector().as_slice(), mmatrix_result.eigenvector().as_slice());
    let angle = c.min(T::one()).max(-T::one()).acos();
    EquivalenceReport { sigma, rho, lambda, relative_gap, angle }
}

/// Smallest eigenpair via the power method on `σI − A`; the history's
/// eigenvalue column is mapped back to `λ = σ − max(Bx/x)`.
pub fn power_on_shift<T: Scalar>(
    a: &SparseMatrix<T>,
    sigma: Option<T>,
    options: &SolveOptions<T>,
) -> Result<(T, ConvergenceHistory<T>)> {
    let conv = to_nonnegative(a, sigma)?;
    let opts = SolveOptions { algorithm: Algorithm::Power, ..options.clone() };
    let mut h = perron::solve_perron(&conv.b, &opts)?;
    for s in &mut h.states {
        s.lambda = conv.sigma - s.lambda;
    }
    Ok((conv.sigma, h))
}
