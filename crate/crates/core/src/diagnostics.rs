//! Reference eigenpairs, convergence-rate measurements and cost accounting.

use serde::Serialize;

use crate::error::{NodaError, Result};
use crate::inner::InnerMethod;
use crate::outer::{self, Algorithm, ConvergenceHistory, ProblemMode, SolveOptions, StartVector};
use crate::scalar::{dot, norm2, Scalar};
use crate::sparse::{ratio_extrema, PositiveUnitVector, SparseMatrix};

/// Largest dimension the dense oracle accepts by default.
pub const DEFAULT_ORACLE_CAP: usize = 500;
/// Absolute floor below which eigenvalue errors count as rounding noise.
pub const ERROR_FLOOR: f64 = 1e-15;
/// Relative part of the error floor, in units of machine epsilon times the
/// reference eigenvalue.
pub const ERROR_FLOOR_ULPS: f64 = 32.0;
/// Slack added to the INI_1 factor bound.
pub const FACTOR_SLACK: f64 = 0.05;
/// Number of trailing pre-floor points used by the rate checks.
pub const TRAILING: usize = 3;

const ORACLE_TOL: f64 = 1e-14;
const ORACLE_ACCEPT: f64 = 1e-13;
const ORACLE_MAX_OUTER: usize = 200;
const ORACLE_STALL: usize = 3;
const EIGENVECTOR_ANGLE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ReferenceEigenpair<T> {
    pub value: T,
    pub vector: PositiveUnitVector<T>,
    /// `‖Mx − value·x‖`.
    pub achieved_residual: T,
    /// `max(Mx/x) − min(Mx/x)` at `vector`; the exact eigenvalue lies in
    /// that interval, so `value` is only known to within this width.
    pub bracket_width: T,
}

impl<T: Scalar> ReferenceEigenpair<T> {
    /// Errors below this are indistinguishable from zero: the larger of
    /// [`error_floor`] and the reference's own bracket width.
    pub fn floor(&self) -> T {
        error_floor(self.value).max(self.bracket_width)
    }
}

/// Reference eigenpair from Noda iteration with dense direct inner solves.
///
/// Runs to a scaled residual of 1e-14; if rounding stalls it above that, the
/// best iterate is accepted as long as it reaches 1e-13.
pub fn dense_reference<T: Scalar>(
    m: &SparseMatrix<T>,
    mode: ProblemMode,
    size_cap: usize,
) -> Result<ReferenceEigenpair<T>> {
    if m.n() > size_cap {
        return Err(NodaError::SizeCapExceeded { n: m.n(), cap: size_cap });
    }
    let options = SolveOptions {
        algorithm: Algorithm::Ni,
        outer_tol: T::lit(ORACLE_TOL),
        max_outer: ORACLE_MAX_OUTER,
        inner_method: InnerMethod::Direct,
        x0: StartVector::Uniform,
        stall_limit: Some(ORACLE_STALL),
        ..SolveOptions::default()
    };
    let history = outer::run(m, mode, &options)?;
    let best = history
        .states
        .iter()
        .min_by(|a, b| a.relative_residual.partial_cmp(&b.relative_residual).unwrap())
        .expect("history is never empty");
    if !(best.relative_residual <= T::lit(ORACLE_ACCEPT)) {
        return Err(NodaError::NoConvergence {
            iterations: history.states.len() - 1,
            residual: best.relative_residual.as_f64(),
        });
    }
    let mx = m.matvec(best.x.as_slice())?;
    let (lo, hi) = ratio_extrema(&mx, best.x.as_slice())?;
    Ok(ReferenceEigenpair {
        value: best.lambda,
        vector: best.x.clone(),
        achieved_residual: best.residual_norm,
        bracket_width: hi - lo,
    })
}

/// Eigenvalue errors of a history against a reference.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorSeries<T> {
    /// `λ̄_k − ρ` (Perron) or `λ − λ_k` (M-matrix), clipped below at `floor`.
    pub eps: Vec<T>,
    /// `true` where the raw error was at or below `floor`.
    pub at_floor: Vec<bool>,
    pub floor: T,
}

impl<T: Scalar> ErrorSeries<T> {
    /// Leading entries before the first one at the floor.
    pub fn pre_floor(&self) -> &[T] {
        let end = self.at_floor.iter().position(|&f| f).unwrap_or(self.eps.len());
        &self.eps[..end]
    }
}

/// Error floor for a reference value: `max(1e-15, 32·ε·|value|)`.
pub fn error_floor<T: Scalar>(value: T) -> T {
    T::lit(ERROR_FLOOR).max(T::lit(ERROR_FLOOR_ULPS) * T::epsilon() * value.abs())
}

pub fn error_series<T: Scalar>(
    history: &ConvergenceHistory<T>,
    reference: &ReferenceEigenpair<T>,
) -> Result<ErrorSeries<T>> {
    let floor = reference.floor();
    let mut eps = Vec::with_capacity(history.states.len());
    let mut at_floor = Vec::with_capacity(history.states.len());
    for s in &history.states {
        let raw = match history.mode {
            ProblemMode::Perron => s.lambda - reference.value,
            ProblemMode::MSmallest => reference.value - s.lambda,
        };
        if raw < -floor {
            return Err(NodaError::OracleInconsistency(format!(
                "step {}: bound {:e} is on the wrong side of the reference {:e}",
                s.k,
                s.lambda.as_f64(),
                reference.value.as_f64()
            )));
        }
        let floored = raw <= floor;
        at_floor.push(floored);
        eps.push(if floored { floor } else { raw });
    }
    Ok(ErrorSeries { eps, at_floor, floor })
}

/// `ρ_k = ε_{k+1} / ε_k`.
pub fn contraction_factors<T: Scalar>(eps: &[T]) -> Result<Vec<T>> {
    if eps.len() < 2 {
        return Err(NodaError::SeriesTooShort { needed: 2, found: eps.len() });
    }
    Ok(eps.windows(2).map(|w| w[1] / w[0]).collect())
}

/// `α_k = log(ε_{k+1}/ε_k) / log(ε_k/ε_{k−1})`; `None` where the denominator
/// vanishes (stagnation).
pub fn order_estimate<T: Scalar>(eps: &[T]) -> Result<Vec<Option<T>>> {
    if eps.len() < 3 {
        return Err(NodaError::SeriesTooShort { needed: 3, found: eps.len() });
    }
    Ok(eps
        .windows(3)
        .map(|w| {
            let den = (w[1] / w[0]).ln();
            let num = (w[2] / w[1]).ln();
            let alpha = num / den;
            (den != T::zero() && alpha.is_finite()).then_some(alpha)
        })
        .collect())
}

/// Tangent of the acute angle between two positive unit vectors.
pub fn tan_angle<T: Scalar>(x: &[T], x_ref: &[T]) -> T {
    let c = dot(x_ref, x);
    let orth: Vec<T> = x.iter().zip(x_ref).map(|(&a, &b)| a - c * b).collect();
    norm2(&orth) / c
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BracketReport<T> {
    pub min_ratio: T,
    pub max_ratio: T,
    pub reference: T,
    /// Both inequalities strict and `v` not an eigenvector.
    pub strict: bool,
}

/// `min(Mv/v) < value < max(Mv/v)` for a positive `v` that is not the
/// eigenvector, against an already computed reference.
pub fn check_bracket_with<T: Scalar>(
    m: &SparseMatrix<T>,
    v: &[T],
    reference: &ReferenceEigenpair<T>,
) -> Result<BracketReport<T>> {
    let mv = m.matvec(v)?;
    let (min_ratio, max_ratio) = ratio_extrema(&mv, v)?;
    let unit = PositiveUnitVector::normalize(v.to_vec())?;
    let tan = tan_angle(unit.as_slice(), reference.vector.as_slice());
    let off_eigenvector = tan > T::lit(EIGENVECTOR_ANGLE);
    Ok(BracketReport {
        min_ratio,
        max_ratio,
        reference: reference.value,
        strict: off_eigenvector && min_ratio < reference.value && reference.value < max_ratio,
    })
}

pub fn check_bracket<T: Scalar>(m: &SparseMatrix<T>, v: &[T], mode: ProblemMode) -> Result<BracketReport<T>> {
    let reference = dense_reference(m, mode, DEFAULT_ORACLE_CAP)?;
    check_bracket_with(m, v, &reference)
}

/// Total products with the matrix: `I_outer + I_inner` when every inner
/// iteration costs one product (symmetric case, CG), `I_outer + 2·I_inner`
/// otherwise (BiCGSTAB).
pub fn itotal(i_outer: usize, i_inner: usize, symmetric: bool) -> usize {
    if symmetric {
        i_outer + i_inner
    } else {
        i_outer + 2 * i_inner
    }
}

pub fn history_itotal<T: Scalar>(history: &ConvergenceHistory<T>, symmetric: bool) -> usize {
    itotal(history.i_outer, history.i_inner, symmetric)
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport<T> {
    pub eps: Vec<T>,
    pub at_floor: Vec<bool>,
    /// Contraction factors over consecutive pre-floor errors.
    pub rho: Vec<T>,
    pub order_estimates: Vec<Option<T>>,
    pub tan_phi: Vec<T>,
    /// `2γ/(1+γ)`.
    pub factor_bound: T,
}

pub fn rate_report<T: Scalar>(
    history: &ConvergenceHistory<T>,
    reference: &ReferenceEigenpair<T>,
) -> Result<RateReport<T>> {
    let series = error_series(history, reference)?;
    let pre = series.pre_floor();
    let rho = if pre.len() >= 2 { contraction_factors(pre)? } else { Vec::new() };
    let order_estimates = if pre.len() >= 3 { order_estimate(pre)? } else { Vec::new() };
    let tan_phi = history.states.iter().map(|s| tan_angle(s.x.as_slice(), reference.vector.as_slice())).collect();
    let two = T::lit(2.0);
    Ok(RateReport {
        eps: series.eps.clone(),
        at_floor: series.at_floor.clone(),
        rho,
        order_estimates,
        tan_phi,
        factor_bound: two * history.gamma / (T::one() + history.gamma),
    })
}

/// Outcome of one signature check.
#[derive(Debug, Clone, Serialize)]
pub struct SignatureCheck {
    pub name: String,
    /// `None` when the history is too short for the check to apply.
    pub passed: Option<bool>,
    pub detail: String,
}

impl<T: Scalar> RateReport<T> {
    pub fn pre_floor_len(&self) -> usize {
        self.at_floor.iter().position(|&f| f).unwrap_or(self.at_floor.len())
    }

    /// Last `TRAILING` contraction factors within `2γ/(1+γ) + 0.05`.
    pub fn linear_factor_check(&self) -> SignatureCheck {
        let name = "linear factor".to_string();
        if self.rho.is_empty() {
            return SignatureCheck { name, passed: None, detail: "no pre-floor contraction factors".into() };
        }
        let bound = self.factor_bound + T::lit(FACTOR_SLACK);
        let tail = &self.rho[self.rho.len().saturating_sub(TRAILING)..];
        let passed = tail.iter().all(|&r| r <= bound);
        SignatureCheck {
            name,
            passed: Some(passed),
            detail: format!("trailing rho {:?} vs bound {:.6}", to_f64s(tail), bound.as_f64()),
        }
    }

    /// Trailing contraction factors strictly decreasing, final one below 0.1.
    pub fn superlinear_check(&self) -> SignatureCheck {
        let name = "superlinear".to_string();
        if self.rho.is_empty() {
            return SignatureCheck { name, passed: None, detail: "no pre-floor contraction factors".into() };
        }
        let tail = &self.rho[self.rho.len().saturating_sub(TRAILING)..];
        let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
        let last = *tail.last().unwrap();
        SignatureCheck {
            name,
            passed: Some(decreasing && last < T::lit(0.1)),
            detail: format!("trailing rho {:?}", to_f64s(tail)),
        }
    }

    /// Last defined order estimate at least 1.7.
    pub fn quadratic_check(&self) -> SignatureCheck {
        let name = "quadratic".to_string();
        match self.order_estimates.iter().rev().find_map(|a| *a) {
            None => SignatureCheck { name, passed: None, detail: "no defined order estimate".into() },
            Some(alpha) => SignatureCheck {
                name,
                passed: Some(alpha >= T::lit(1.7)),
                detail: format!("last order estimate {:.4}", alpha.as_f64()),
            },
        }
    }
}

fn to_f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Strict monotonicity of the eigenvalue bounds up to the rounding floor.
#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    /// Steps checked strictly (the bound before the step was above the floor).
    pub strict_steps: usize,
    /// First step whose bound moved the wrong way, if any.
    pub violation: Option<usize>,
}

impl MonotoneReport {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

/// A step `k → k+1` must strictly improve the bound while `|λ_k − λ_final|`
/// exceeds the error floor of `λ_final`; below it, only moves in the wrong
/// direction larger than that floor count as violations.
pub fn check_monotone<T: Scalar>(history: &ConvergenceHistory<T>) -> MonotoneReport {
    let last = history.eigenvalue();
    let floor = error_floor(last);
    let mut strict_steps = 0;
    let mut violation = None;
    for (k, w) in history.states.windows(2).enumerate() {
        let (prev, next) = (w[0].lambda, w[1].lambda);
        let pre_floor = (prev - last).abs() > floor;
        let ok = if pre_floor {
            strict_steps += 1;
            history.mode.improves(prev, next)
        } else {
            match history.mode {
                ProblemMode::Perron => next <= prev + floor,
                ProblemMode::MSmallest => next >= prev - floor,
            }
        };
        if !ok && violation.is_none() {
            violation = Some(k);
        }
    }
    MonotoneReport { strict_steps, violation }
}
