//! Inner linear solves for the shifted systems.
//!
//! Every solve starts from the zero vector, and the residual `f = op·y − rhs`
//! handed back is always recomputed with one explicit operator application,
//! never taken from the Krylov recurrences. Krylov solvers first drive the
//! recurrence residual to `0.9·tol` and only then check the true residual; if
//! that check fails they restart from the true residual. Two failed checks in a
//! row without halving the true residual end the solve as stagnated, which is
//! the usual outcome when the tolerance is below the attainable accuracy of a
//! nearly singular shift.
//!
//! BiCGSTAB enlarges `ω` whenever `t` and `s` are close to orthogonal
//! (cosine below 0.7). Without that, the shifted systems of matrices close to
//! a cycle, whose spectra wrap around the origin, can diverge.

use serde::{Deserialize, Serialize};

use crate::dense::gauss_solve;
use crate::error::{NodaError, Result};
use crate::scalar::{axpy, dot, norm2, Scalar};
use crate::sparse::{LinearOperator, Orientation, ShiftedOperator};

const RECURRENCE_TARGET: f64 = 0.9;
const STAGNATION_FACTOR: f64 = 0.5;
const OMEGA_ANGLE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMethod {
    Cg,
    BiCgStab,
    /// CG when the operator is symmetric, BiCGSTAB otherwise.
    Auto,
    /// Dense Gaussian elimination; small problems and oracles only.
    Direct,
}

impl InnerMethod {
    /// Operator applications charged per inner iteration in the `I_total` count.
    pub fn matvecs_per_iteration(self) -> usize {
        match self {
            InnerMethod::BiCgStab => 2,
            _ => 1,
        }
    }
}

/// Why an inner solve ended without meeting its tolerance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerFailure {
    Breakdown(String),
    Stagnation,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct InnerRequest<'a, T> {
    pub operator: ShiftedOperator<'a, T>,
    pub rhs: &'a [T],
    pub tol_abs: T,
    pub max_iterations: usize,
    pub method: InnerMethod,
}

impl<'a, T: Scalar> InnerRequest<'a, T> {
    fn validate(&self) -> Result<()> {
        if !(self.tol_abs > T::zero()) {
            return Err(NodaError::InvalidOption(format!("inner tolerance must be positive, got {}", self.tol_abs)));
        }
        if self.max_iterations == 0 {
            return Err(NodaError::InvalidOption("inner iteration cap must be at least 1".into()));
        }
        if self.rhs.len() != self.operator.dim() {
            return Err(NodaError::DimensionMismatch { expected: self.operator.dim(), found: self.rhs.len() });
        }
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(NodaError::InvalidOption("right-hand side is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult<T> {
    pub y: Vec<T>,
    /// Explicit residual `op·y − rhs`.
    pub f: Vec<T>,
    pub f_norm: T,
    pub iterations: usize,
    pub matvecs: usize,
    pub satisfied: bool,
    /// Method actually run (never `Auto`).
    pub method: InnerMethod,
    pub failure: Option<InnerFailure>,
}

/// Bookkeeping shared by the Krylov loops.
struct Tracker<'o, 'a, T> {
    op: &'o ShiftedOperator<'a, T>,
    rhs: &'o [T],
    tol: T,
    matvecs: usize,
    last_explicit: Option<T>,
}

enum Check<T> {
    Accept(Vec<T>, T),
    Stagnated(Vec<T>, T),
    Restart(Vec<T>),
}

impl<'o, 'a, T: Scalar> Tracker<'o, 'a, T> {
    fn apply(&mut self, v: &[T], out: &mut [T]) -> Result<()> {
        self.matvecs += 1;
        self.op.apply_into(v, out)
    }

    fn residual(&mut self, y: &[T]) -> Result<(Vec<T>, T)> {
        let mut f = vec![T::zero(); y.len()];
        self.apply(y, &mut f)?;
        for (fi, &bi) in f.iter_mut().zip(self.rhs) {
            *fi -= bi;
        }
        let norm = norm2(&f);
        Ok((f, norm))
    }

    fn check(&mut self, y: &[T]) -> Result<Check<T>> {
        let (f, f_norm) = self.residual(y)?;
        if f_norm <= self.tol {
            return Ok(Check::Accept(f, f_norm));
        }
        if let Some(prev) = self.last_explicit {
            if !(f_norm <= T::lit(STAGNATION_FACTOR) * prev) {
                return Ok(Check::Stagnated(f, f_norm));
            }
        }
        self.last_explicit = Some(f_norm);
        Ok(Check::Restart(f))
    }

    fn finish(
        &mut self,
        y: Vec<T>,
        iterations: usize,
        method: InnerMethod,
        failure: Option<InnerFailure>,
    ) -> Result<InnerResult<T>> {
        let (f, f_norm) = self.residual(&y)?;
        Ok(self.result(y, f, f_norm, iterations, method, failure))
    }

    fn result(
        &self,
        y: Vec<T>,
        f: Vec<T>,
        f_norm: T,
        iterations: usize,
        method: InnerMethod,
        failure: Option<InnerFailure>,
    ) -> InnerResult<T> {
        let satisfied = f_norm <= self.tol;
        InnerResult {
            y,
            f,
            f_norm,
            iterations,
            matvecs: self.matvecs,
            satisfied,
            method,
            failure: if satisfied { None } else { failure },
        }
    }
}

/// Conjugate gradients for symmetric positive definite shifted systems.
pub fn cg_solve<T: Scalar>(req: &InnerRequest<'_, T>) -> Result<InnerResult<T>> {
    req.validate()?;
    let n = req.rhs.len();
    let target = T::lit(RECURRENCE_TARGET) * req.tol_abs;
    let mut tr = Tracker { op: &req.operator, rhs: req.rhs, tol: req.tol_abs, matvecs: 0, last_explicit: None };
    let mut y = vec![T::zero(); n];
    let mut r = req.rhs.to_vec();
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= req.tol_abs {
        return tr.finish(y, 0, InnerMethod::Cg, None);
    }
    let mut p = r.clone();
    let mut q = vec![T::zero(); n];
    let mut iterations = 0;
    while iterations < req.max_iterations {
        tr.apply(&p, &mut q)?;
        iterations += 1;
        let pq = dot(&p, &q);
        if !(pq > T::zero()) || !pq.is_finite() {
            let why = format!("nonpositive curvature p·Ap = {pq:e}");
            return tr.finish(y, iterations, InnerMethod::Cg, Some(InnerFailure::Breakdown(why)));
        }
        let alpha = rr / pq;
        axpy(alpha, &p, &mut y);
        axpy(-alpha, &q, &mut r);
        let rr_new = dot(&r, &r);
        if !rr_new.is_finite() {
            let why = "non-finite recurrence residual".to_string();
            return tr.finish(y, iterations, InnerMethod::Cg, Some(InnerFailure::Breakdown(why)));
        }
        if rr_new.sqrt() <= target {
            match tr.check(&y)? {
                Check::Accept(f, f_norm) => {
                    return Ok(tr.result(y, f, f_norm, iterations, InnerMethod::Cg, None));
                }
                Check::Stagnated(f, f_norm) => {
                    let failure = Some(InnerFailure::Stagnation);
                    return Ok(tr.result(y, f, f_norm, iterations, InnerMethod::Cg, failure));
                }
                Check::Restart(f) => {
                    r = f.into_iter().map(|v| -v).collect();
                    rr = dot(&r, &r);
                    p.copy_from_slice(&r);
                    continue;
                }
            }
        }
        let beta = rr_new / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    tr.finish(y, iterations, InnerMethod::Cg, Some(InnerFailure::MaxIterations))
}

/// BiCGSTAB for general shifted systems; two operator applications per iteration.
pub fn bicgstab_solve<T: Scalar>(req: &InnerRequest<'_, T>) -> Result<InnerResult<T>> {
    req.validate()?;
    let n = req.rhs.len();
    let method = InnerMethod::BiCgStab;
    let target = T::lit(RECURRENCE_TARGET) * req.tol_abs;
    let mut tr = Tracker { op: &req.operator, rhs: req.rhs, tol: req.tol_abs, matvecs: 0, last_explicit: None };
    let mut y = vec![T::zero(); n];
    let mut r = req.rhs.to_vec();
    if norm2(&r) <= req.tol_abs {
        return tr.finish(y, 0, method, None);
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut p = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut iterations = 0;

    let breakdown = |what: &str, value: T| Some(InnerFailure::Breakdown(format!("{what} = {value:e}")));

    while iterations < req.max_iterations {
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || !rho_new.is_finite() {
            return tr.finish(y, iterations, method, breakdown("rho", rho_new));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        tr.apply(&p, &mut v)?;
        iterations += 1;
        let denom = dot(&r_hat, &v);
        if denom == T::zero() || !denom.is_finite() {
            return tr.finish(y, iterations, method, breakdown("r_hat·v", denom));
        }
        alpha = rho_new / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }

        let mut converged_half = false;
        if norm2(&s) <= target {
            axpy(alpha, &p, &mut y);
            converged_half = true;
        } else {
            tr.apply(&s, &mut t)?;
            let tt = dot(&t, &t);
            if tt == T::zero() || !tt.is_finite() {
                axpy(alpha, &p, &mut y);
                return tr.finish(y, iterations, method, breakdown("t·t", tt));
            }
            omega = dot(&t, &s) / tt;
            // keep ω away from zero when t and s are nearly orthogonal, which
            // otherwise stalls the iteration on spectra wrapped around 0
            let cos = omega.abs() * tt.sqrt() / norm2(&s);
            if cos < T::lit(OMEGA_ANGLE) {
                omega *= T::lit(OMEGA_ANGLE) / cos;
            }
            for i in 0..n {
                y[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            rho = rho_new;
            if omega == T::zero() || !omega.is_finite() {
                return tr.finish(y, iterations, method, breakdown("omega", omega));
            }
        }

        if converged_half || norm2(&r) <= target {
            match tr.check(&y)? {
                Check::Accept(f, f_norm) => return Ok(tr.result(y, f, f_norm, iterations, method, None)),
                Check::Stagnated(f, f_norm) => {
                    let failure = Some(InnerFailure::Stagnation);
                    return Ok(tr.result(y, f, f_norm, iterations, method, failure));
                }
                Check::Restart(f) => {
                    r = f.into_iter().map(|x| -x).collect();
                    r_hat.copy_from_slice(&r);
                    rho = T::one();
                    alpha = T::one();
                    omega = T::one();
                    p.iter_mut().for_each(|x| *x = T::zero());
                    v.iter_mut().for_each(|x| *x = T::zero());
                }
            }
        }
    }
    tr.finish(y, iterations, method, Some(InnerFailure::MaxIterations))
}

/// Dense direct solve of the shifted system. Counted as zero inner iterations.
pub fn direct_solve<T: Scalar>(req: &InnerRequest<'_, T>) -> Result<InnerResult<T>> {
    req.validate()?;
    let op = &req.operator;
    let mut dense = op.base.to_dense();
    for (i, row) in dense.iter_mut().enumerate() {
        for v in row.iter_mut() {
            if op.orientation == Orientation::ShiftMinusMatrix {
                *v = -*v;
            }
        }
        match op.orientation {
            Orientation::ShiftMinusMatrix => row[i] += op.shift,
            Orientation::MatrixMinusShift => row[i] -= op.shift,
        }
    }
    let y = gauss_solve(dense, req.rhs)?;
    let mut tr = Tracker { op, rhs: req.rhs, tol: req.tol_abs, matvecs: 0, last_explicit: None };
    tr.finish(y, 0, InnerMethod::Direct, Some(InnerFailure::Stagnation))
}

/// Dispatches on `req.method`; `Auto` picks CG for symmetric operators.
pub fn solve_inner<T: Scalar>(req: &InnerRequest<'_, T>, symmetric: bool) -> Result<InnerResult<T>> {
    match req.method {
        InnerMethod::Cg => cg_solve(req),
        InnerMethod::BiCgStab => bicgstab_solve(req),
        InnerMethod::Direct => direct_solve(req),
        InnerMethod::Auto if symmetric => cg_solve(req),
        InnerMethod::Auto => bicgstab_solve(req),
    }
}
