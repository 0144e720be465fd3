//! Outer iteration shared by the Perron and M-matrix front ends.
//!
//! Both problems run the same recursion: solve a shifted system from the
//! current positive iterate, normalize, and recompute the eigenvalue bound
//! from a fresh product with the matrix. In Perron mode the bound is
//! `max(Bx/x)` and the system is `(λ̄ I − B) y = x`; in M-matrix mode it is
//! `min(Ax/x)` and `(A − λ I) y = x`.

use std::time::{Duration, Instant};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NodaError, Result};
use crate::inner::{solve_inner, InnerFailure, InnerMethod, InnerRequest};
use crate::scalar::{norm2, Scalar};
use crate::sparse::{ratio_extrema, Orientation, PositiveUnitVector, ShiftedOperator, SignPattern, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Exact Noda iteration (inner residual held at a fixed 1e-14).
    Ni,
    /// Inner tolerance `γ·min(x_k)`.
    Ini1,
    /// Inner tolerance `min(γ·min(x_k), relative eigenvalue decrease)`.
    Ini2,
    /// Power iteration baseline; Perron mode only.
    Power,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ni => "NI",
            Algorithm::Ini1 => "INI_1",
            Algorithm::Ini2 => "INI_2",
            Algorithm::Power => "power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemMode {
    /// Largest eigenpair of an irreducible nonnegative matrix.
    Perron,
    /// Smallest eigenpair of an irreducible nonsingular M-matrix.
    MSmallest,
}

impl ProblemMode {
    fn orientation(self) -> Orientation {
        match self {
            ProblemMode::Perron => Orientation::ShiftMinusMatrix,
            ProblemMode::MSmallest => Orientation::MatrixMinusShift,
        }
    }

    fn sign_pattern(self) -> SignPattern {
        match self {
            ProblemMode::Perron => SignPattern::Nonnegative,
            ProblemMode::MSmallest => SignPattern::ZMatrix,
        }
    }

    /// `max(Mx/x)` in Perron mode, `min(Mx/x)` in M-matrix mode.
    pub fn bound<T: Scalar>(self, mx: &[T], x: &[T]) -> Result<T> {
        let (lo, hi) = ratio_extrema(mx, x)?;
        Ok(match self {
            ProblemMode::Perron => hi,
            ProblemMode::MSmallest => lo,
        })
    }

    /// True when `next` is a strict improvement on `prev`.
    pub fn improves<T: Scalar>(self, prev: T, next: T) -> bool {
        match self {
            ProblemMode::Perron => next < prev,
            ProblemMode::MSmallest => next > prev,
        }
    }
}

/// Initial iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum StartVector<T> {
    /// `e/√n`.
    Uniform,
    /// Entries `0.5 + u` with `u` drawn from ChaCha8 (`rand_chacha`) seeded
    /// by `seed_from_u64(seed)`, then normalized.
    Random(u64),
    Given(PositiveUnitVector<T>),
}

impl<T: Scalar> StartVector<T> {
    pub fn build(&self, n: usize) -> Result<PositiveUnitVector<T>> {
        match self {
            StartVector::Uniform => Ok(PositiveUnitVector::uniform(n)),
            StartVector::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let raw: Vec<T> = (0..n).map(|_| T::lit(0.5 + rng.gen::<f64>())).collect();
                PositiveUnitVector::normalize(raw)
            }
            StartVector::Given(v) => {
                if v.len() != n {
                    return Err(NodaError::DimensionMismatch { expected: n, found: v.len() });
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions<T> {
    pub algorithm: Algorithm,
    /// Must lie in (0, 1).
    pub gamma: T,
    /// Outer stop: `‖Mx − λx‖ / sqrt(‖M‖₁‖M‖∞) ≤ outer_tol`.
    pub outer_tol: T,
    /// Lower guard on INI inner tolerances.
    pub inner_floor: T,
    /// Fixed absolute inner tolerance for NI.
    pub ni_inner_tol: T,
    pub max_outer: usize,
    /// Inner iteration cap; `None` means `10·n`.
    pub inner_cap: Option<usize>,
    pub inner_method: InnerMethod,
    pub x0: StartVector<T>,
    /// Keep `f_k` and `y_{k+1}` in the history.
    pub record_vectors: bool,
    /// Stop early once the relative residual has failed to improve for this
    /// many consecutive steps.
    pub stall_limit: Option<usize>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ini1,
            gamma: T::lit(0.8),
            outer_tol: T::lit(1e-13),
            inner_floor: T::lit(1e-13),
            ni_inner_tol: T::lit(1e-14),
            max_outer: 100,
            inner_cap: None,
            inner_method: InnerMethod::Auto,
            x0: StartVector::Uniform,
            record_vectors: false,
            stall_limit: None,
        }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self { algorithm, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return Err(NodaError::InvalidOption(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.outer_tol > T::zero()) {
            return Err(NodaError::InvalidOption(format!("tol must be positive, got {}", self.outer_tol)));
        }
        if !(self.ni_inner_tol > T::zero()) || self.inner_floor < T::zero() {
            return Err(NodaError::InvalidOption("inner tolerance guards must be positive".into()));
        }
        if self.inner_cap == Some(0) {
            return Err(NodaError::InvalidOption("inner cap must be at least 1".into()));
        }
        Ok(())
    }

    fn inner_cap_for(&self, n: usize) -> usize {
        self.inner_cap.unwrap_or(10 * n).max(1)
    }
}

/// What happened in the inner solve launched from one outer iterate.
#[derive(Debug, Clone)]
pub struct InnerSummary<T> {
    /// Requested tolerance `η_k`.
    pub tolerance: T,
    pub iterations: usize,
    pub matvecs: usize,
    pub f_norm: T,
    pub satisfied: bool,
    pub method: InnerMethod,
    pub failure: Option<InnerFailure>,
    /// `f_k`, kept only with `record_vectors`.
    pub f: Option<Vec<T>>,
    /// `y_{k+1}`, kept only with `record_vectors`.
    pub y: Option<Vec<T>>,
}

/// Snapshot of outer iterate `k`.
#[derive(Debug, Clone)]
pub struct OuterState<T> {
    pub k: usize,
    pub x: PositiveUnitVector<T>,
    /// `λ̄_k` in Perron mode, `λ_k` in M-matrix mode.
    pub lambda: T,
    pub residual_norm: T,
    pub relative_residual: T,
    pub min_x: T,
    /// The solve performed from this iterate (absent on the last state).
    pub inner: Option<InnerSummary<T>>,
    /// This state's eigenvalue bound via the increment update
    /// `λ_{k-1} ∓ min((x_{k-1} + f_{k-1}) / y_k)`.
    pub lambda_increment: Option<T>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceHistory<T> {
    pub mode: ProblemMode,
    pub algorithm: Algorithm,
    pub gamma: T,
    pub outer_tol: T,
    pub n: usize,
    pub norm_estimate: T,
    pub states: Vec<OuterState<T>>,
    pub converged: bool,
    pub positivity_preserved: bool,
    pub i_outer: usize,
    pub i_inner: usize,
    pub i_total: usize,
    /// Inner iterations were charged one product each (CG or direct).
    pub symmetric_accounting: bool,
    pub wall_time: Duration,
    pub warnings: Vec<String>,
}

impl<T: Scalar> ConvergenceHistory<T> {
    pub fn last(&self) -> &OuterState<T> {
        self.states.last().expect("history always holds the initial state")
    }

    pub fn eigenvalue(&self) -> T {
        self.last().lambda
    }

    pub fn eigenvector(&self) -> &PositiveUnitVector<T> {
        &self.last().x
    }

    pub fn lambdas(&self) -> Vec<T> {
        self.states.iter().map(|s| s.lambda).collect()
    }

    pub fn relative_residuals(&self) -> Vec<T> {
        self.states.iter().map(|s| s.relative_residual).collect()
    }
}

/// Inner tolerance for the solve launched from `state`.
///
/// NI uses the fixed `ni_inner_tol`. INI_1 uses `max(γ·min(x_k), floor)`.
/// INI_2 uses `max(min(γ·min(x_k), d_k), floor)` for `k ≥ 1` where `d_k` is the
/// relative change of the eigenvalue bound over the previous step; when `d_k`
/// is not a positive finite number (possible in M-matrix mode when the bound
/// crosses zero) only `γ·min(x_k)` is used. The power method runs no inner
/// solves and gets zero.
pub fn inner_tolerance<T: Scalar>(
    options: &SolveOptions<T>,
    mode: ProblemMode,
    state: &OuterState<T>,
    prev_lambda: Option<T>,
) -> T {
    let scaled = options.gamma * state.min_x;
    match options.algorithm {
        Algorithm::Ni => options.ni_inner_tol,
        Algorithm::Power => T::zero(),
        Algorithm::Ini1 => scaled.max(options.inner_floor),
        Algorithm::Ini2 => {
            let capped = match (state.k, prev_lambda) {
                (k, Some(prev)) if k >= 1 => {
                    let d = match mode {
                        ProblemMode::Perron => (prev - state.lambda) / prev,
                        ProblemMode::MSmallest => (state.lambda - prev) / state.lambda,
                    };
                    if d.is_finite() && d > T::zero() {
                        scaled.min(d)
                    } else {
                        scaled
                    }
                }
                _ => scaled,
            };
            capped.max(options.inner_floor)
        }
    }
}

/// Per-run constants.
pub(crate) struct Context<'m, T> {
    pub matrix: &'m SparseMatrix<T>,
    pub mode: ProblemMode,
    pub scale: T,
}

impl<'m, T: Scalar> Context<'m, T> {
    pub fn new(matrix: &'m SparseMatrix<T>, mode: ProblemMode) -> Self {
        let est = matrix.norm_product_estimate();
        let scale = if est > T::zero() { est } else { T::one() };
        Self { matrix, mode, scale }
    }

    /// State for `x` with `mx = M x` already formed.
    pub fn state(&self, k: usize, x: PositiveUnitVector<T>, mx: &[T], lambda: T) -> OuterState<T> {
        let residual: Vec<T> = mx.iter().zip(x.as_slice()).map(|(&m, &xi)| m - lambda * xi).collect();
        let residual_norm = norm2(&residual);
        OuterState {
            k,
            min_x: x.min(),
            x,
            lambda,
            residual_norm,
            relative_residual: residual_norm / self.scale,
            inner: None,
            lambda_increment: None,
        }
    }

    pub fn initial_state(&self, x0: PositiveUnitVector<T>) -> Result<OuterState<T>> {
        let mx = self.matrix.matvec(x0.as_slice())?;
        let lambda = self.mode.bound(&mx, x0.as_slice())?;
        Ok(self.state(0, x0, &mx, lambda))
    }
}

pub(crate) fn validate_matrix<T: Scalar>(
    matrix: &SparseMatrix<T>,
    mode: ProblemMode,
    warnings: &mut Vec<String>,
) -> Result<()> {
    if !matrix.check_sign_pattern(mode.sign_pattern()) {
        let what = match mode {
            ProblemMode::Perron => "matrix has negative entries; Perron mode needs a nonnegative matrix",
            ProblemMode::MSmallest => "matrix has positive off-diagonal entries; M-matrix mode needs a Z-matrix",
        };
        return Err(NodaError::Validation(what.into()));
    }
    if !matrix.is_irreducible() {
        let msg = "matrix is reducible; a simple positive eigenvector is not guaranteed".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(())
}

/// One outer step from `state`: inner solve, positivity check, normalization
/// and a direct recomputation of the eigenvalue bound.
pub(crate) fn step<T: Scalar>(
    ctx: &Context<'_, T>,
    state: &mut OuterState<T>,
    prev_lambda: Option<T>,
    options: &SolveOptions<T>,
    warnings: &mut Vec<String>,
) -> Result<OuterState<T>> {
    let n = ctx.matrix.n();
    let tolerance = inner_tolerance(options, ctx.mode, state, prev_lambda);
    let request = InnerRequest {
        operator: ShiftedOperator::new(ctx.matrix, state.lambda, ctx.mode.orientation()),
        rhs: state.x.as_slice(),
        tol_abs: tolerance,
        max_iterations: options.inner_cap_for(n),
        method: options.inner_method,
    };
    let res = solve_inner(&request, ctx.matrix.symmetric_hint())?;

    if let Some(index) = res.y.iter().position(|&v| !(v > T::zero())) {
        let value = res.y[index].as_f64();
        if res.satisfied {
            return Err(NodaError::ContractViolation {
                step: state.k,
                detail: format!(
                    "inner solve met |f| = {:e} <= {:e} but y[{index}] = {value:e}",
                    res.f_norm.as_f64(),
                    tolerance.as_f64()
                ),
            });
        }
        return Err(NodaError::PositivityAtRisk { step: state.k, index, value, f_norm: res.f_norm.as_f64() });
    }
    if !res.satisfied {
        let msg = format!(
            "step {}: inner solve stopped at |f| = {:e} above tolerance {:e} ({:?}); continuing with positive y",
            state.k,
            res.f_norm.as_f64(),
            tolerance.as_f64(),
            res.failure
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    // (x_k + f_k) / y_{k+1}
    let shifted_rhs: Vec<T> = state.x.as_slice().iter().zip(&res.f).map(|(&x, &f)| x + f).collect();
    let (increment, _) = ratio_extrema(&shifted_rhs, &res.y)?;
    let lambda_increment = match ctx.mode {
        ProblemMode::Perron => state.lambda - increment,
        ProblemMode::MSmallest => state.lambda + increment,
    };

    let x_next = PositiveUnitVector::normalize(res.y.clone()).map_err(|_| NodaError::PositivityAtRisk {
        step: state.k,
        index: 0,
        value: 0.0,
        f_norm: res.f_norm.as_f64(),
    })?;
    let mx = ctx.matrix.matvec(x_next.as_slice())?;
    let lambda = ctx.mode.bound(&mx, x_next.as_slice())?;
    let mut next = ctx.state(state.k + 1, x_next, &mx, lambda);
    next.lambda_increment = Some(lambda_increment);

    if !ctx.mode.improves(state.lambda, lambda) {
        let msg = format!(
            "step {}: eigenvalue bound not strictly monotone ({:e} -> {:e})",
            state.k,
            state.lambda.as_f64(),
            lambda.as_f64()
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let keep = options.record_vectors;
    state.inner = Some(InnerSummary {
        tolerance,
        iterations: res.iterations,
        matvecs: res.matvecs,
        f_norm: res.f_norm,
        satisfied: res.satisfied,
        method: res.method,
        failure: res.failure,
        f: keep.then_some(res.f),
        y: keep.then_some(res.y),
    });
    Ok(next)
}

/// Full NI / INI run in either mode.
pub(crate) fn run<T: Scalar>(
    matrix: &SparseMatrix<T>,
    mode: ProblemMode,
    options: &SolveOptions<T>,
) -> Result<ConvergenceHistory<T>> {
    options.validate()?;
    if options.algorithm == Algorithm::Power {
        return Err(NodaError::InvalidOption(
            "power method is run through power_method on a nonnegative matrix".into(),
        ));
    }
    let mut warnings = Vec::new();
    validate_matrix(matrix, mode, &mut warnings)?;
    let ctx = Context::new(matrix, mode);
    let x0 = options.x0.build(matrix.n())?;

    let started = Instant::now();
    let mut states = Vec::new();
    let mut current = ctx.initial_state(x0)?;
    let mut prev_lambda = None;
    let mut converged = false;
    let mut best = current.relative_residual;
    let mut stalled = 0usize;
    loop {
        if current.relative_residual <= options.outer_tol {
            converged = true;
            break;
        }
        if current.k >= options.max_outer {
            break;
        }
        if let Some(limit) = options.stall_limit {
            if stalled >= limit {
                break;
            }
        }
        let next = step(&ctx, &mut current, prev_lambda, options, &mut warnings)?;
        prev_lambda = Some(current.lambda);
        states.push(current);
        current = next;
        if current.relative_residual < best {
            best = current.relative_residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
    }
    states.push(current);
    let wall_time = started.elapsed();
    Ok(finish(mode, options, &ctx, states, converged, wall_time, warnings))
}

pub(crate) fn finish<T: Scalar>(
    mode: ProblemMode,
    options: &SolveOptions<T>,
    ctx: &Context<'_, T>,
    states: Vec<OuterState<T>>,
    converged: bool,
    wall_time: Duration,
    warnings: Vec<String>,
) -> ConvergenceHistory<T> {
    let summaries: Vec<&InnerSummary<T>> = states.iter().filter_map(|s| s.inner.as_ref()).collect();
    let (i_outer, i_inner) = if options.algorithm == Algorithm::Power {
        (states.len(), 0)
    } else {
        (summaries.len(), summaries.iter().map(|s| s.iterations).sum())
    };
    let symmetric_accounting = summaries.iter().all(|s| s.method.matvecs_per_iteration() == 1);
    let positivity_preserved = states.iter().all(|s| s.x.as_slice().iter().all(|&v| v > T::zero()));
    ConvergenceHistory {
        mode,
        algorithm: options.algorithm,
        gamma: options.gamma,
        outer_tol: options.outer_tol,
        n: ctx.matrix.n(),
        norm_estimate: ctx.scale,
        states,
        converged,
        positivity_preserved,
        i_outer,
        i_inner,
        i_total: crate::diagnostics::itotal(i_outer, i_inner, symmetric_accounting),
        symmetric_accounting,
        wall_time,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(k: usize, lambda: f64, min_x: f64) -> OuterState<f64> {
        OuterState {
            k,
            x: PositiveUnitVector::uniform(2),
            lambda,
            residual_norm: 1.0,
            relative_residual: 1.0,
            min_x,
            inner: None,
            lambda_increment: None,
        }
    }

    fn opts(algorithm: Algorithm, gamma: f64) -> SolveOptions<f64> {
        SolveOptions { gamma, ..SolveOptions::with_algorithm(algorithm) }
    }

    #[test]
    fn ini1_tolerance_is_scaled_min() {
        let tol = inner_tolerance(&opts(Algorithm::Ini1, 0.8), ProblemMode::Perron, &state(3, 1.0, 0.01), None);
        assert!((tol - 0.008).abs() < 1e-18);
    }

    #[test]
    fn ini1_tolerance_floor() {
        let tol = inner_tolerance(&opts(Algorithm::Ini1, 0.8), ProblemMode::Perron, &state(3, 1.0, 1e-16), None);
        assert_eq!(tol, 1e-13);
    }

    #[test]
    fn ini2_tolerance_uses_relative_decrease() {
        let o = opts(Algorithm::Ini2, 0.8);
        let tol = inner_tolerance(&o, ProblemMode::Perron, &state(1, 1.25, 0.01), Some(2.0));
        assert!((tol - 0.008).abs() < 1e-18);
        // decrease of 1e-4 relative wins over γ·min(x)
        let tol = inner_tolerance(&o, ProblemMode::Perron, &state(4, 0.9999, 0.01), Some(1.0));
        assert!((tol - 1e-4).abs() < 1e-15);
        // first step ignores the previous value
        let tol = inner_tolerance(&o, ProblemMode::Perron, &state(0, 1.0, 0.01), None);
        assert!((tol - 0.008).abs() < 1e-18);
        // floor still applies
        let tol = inner_tolerance(&o, ProblemMode::Perron, &state(4, 1.0, 0.01), Some(1.0 + 1e-14));
        assert_eq!(tol, 1e-13);
    }

    #[test]
    fn ini2_mmatrix_falls_back_when_increment_undefined() {
        let o = opts(Algorithm::Ini2, 0.5);
        // λ_k = 0 makes d_k undefined
        let tol = inner_tolerance(&o, ProblemMode::MSmallest, &state(1, 0.0, 0.1), Some(-1.0));
        assert_eq!(tol, 0.05);
        // λ crossing zero gives a negative d_k
        let tol = inner_tolerance(&o, ProblemMode::MSmallest, &state(1, -0.5, 0.1), Some(-1.0));
        assert_eq!(tol, 0.05);
        let tol = inner_tolerance(&o, ProblemMode::MSmallest, &state(2, 1.0, 0.1), Some(0.99));
        assert!((tol - 0.01).abs() < 1e-15);
    }

    #[test]
    fn ni_tolerance_is_fixed() {
        let tol = inner_tolerance(&opts(Algorithm::Ni, 0.8), ProblemMode::Perron, &state(0, 1.0, 0.3), None);
        assert_eq!(tol, 1e-14);
    }

    #[test]
    fn option_validation() {
        assert!(opts(Algorithm::Ini1, 0.0).validate().is_err());
        assert!(opts(Algorithm::Ini1, 1.0).validate().is_err());
        let mut o = opts(Algorithm::Ini1, 0.5);
        o.outer_tol = 0.0;
        assert!(o.validate().is_err());
        assert!(opts(Algorithm::Ini1, 0.5).validate().is_ok());
    }

    #[test]
    fn random_start_is_seeded() {
        let a: PositiveUnitVector<f64> = StartVector::Random(7).build(5).unwrap();
        let b: PositiveUnitVector<f64> = StartVector::Random(7).build(5).unwrap();
        let c: PositiveUnitVector<f64> = StartVector::Random(8).build(5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((norm2(a.as_slice()) - 1.0).abs() < 1e-15);
    }
}
