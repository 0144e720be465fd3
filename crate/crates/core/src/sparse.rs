//! CSR storage, operator application and structural checks.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{NodaError, Result};
use crate::scalar::{norm2, Scalar};

static MATVEC_THREADS: AtomicUsize = AtomicUsize::new(1);

/// Rows below this count are always multiplied on the calling thread.
const PARALLEL_MIN_ROWS: usize = 4096;

/// Sets the number of threads used by [`SparseMatrix::matvec`]. `1` (the
/// default) is fully sequential.
pub fn set_matvec_threads(threads: usize) {
    MATVEC_THREADS.store(threads.max(1), Ordering::Relaxed);
}

pub fn matvec_threads() -> usize {
    MATVEC_THREADS.load(Ordering::Relaxed)
}

/// Square real matrix in compressed sparse row form.
///
/// Immutable after construction. Duplicate `(row, col)` entries are summed
/// when building; explicit zeros are kept and count as part of the pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    symmetric_hint: bool,
}

/// Sign structure accepted by [`SparseMatrix::check_sign_pattern`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignPattern {
    /// Every stored entry is `>= 0`.
    Nonnegative,
    /// Every stored off-diagonal entry is `<= 0`.
    ZMatrix,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        if n == 0 {
            return Err(NodaError::InvalidMatrix("dimension must be at least 1".into()));
        }
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(NodaError::InvalidMatrix(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            if !v.is_finite() {
                return Err(NodaError::InvalidMatrix(format!("entry ({i}, {j}) is not finite")));
            }
        }
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col_idx, values, symmetric_hint: false })
    }

    /// Builds from a dense row-major array, storing only nonzero entries.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(NodaError::InvalidMatrix(format!("row {i} has {} columns, expected {n}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    triplets.push((i, j, v));
                }
            }
        }
        let m = Self::from_triplets(n, &triplets)?;
        let sym = m.is_symmetric();
        Ok(m.with_symmetric_hint(sym))
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, &triplets).expect("identity is well formed").with_symmetric_hint(true)
    }

    /// Marks the matrix as symmetric (or not); drives inner solver selection.
    pub fn with_symmetric_hint(mut self, symmetric: bool) -> Self {
        self.symmetric_hint = symmetric;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetric_hint(&self) -> bool {
        self.symmetric_hint
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Stored entries of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut dense = vec![vec![T::zero(); self.n]; self.n];
        for (i, j, v) in self.triplets() {
            dense[i][j] = v;
        }
        dense
    }

    /// Exact structural and numerical symmetry of the stored entries.
    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(NodaError::DimensionMismatch { expected: self.n, found: len });
        }
        Ok(())
    }

    fn row_dot(&self, i: usize, v: &[T]) -> T {
        let mut acc = T::zero();
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.values[k] * v[self.col_idx[k]];
        }
        acc
    }

    /// `M v`.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.n];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = M v`. Each row sum is accumulated sequentially in column order,
    /// so the result does not depend on the thread count.
    pub fn matvec_into(&self, v: &[T], out: &mut [T]) -> Result<()> {
        self.check_len(v.len())?;
        self.check_len(out.len())?;
        let threads = matvec_threads();
        if threads <= 1 || self.n < PARALLEL_MIN_ROWS {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.row_dot(i, v);
            }
            return Ok(());
        }
        let chunk = self.n.div_ceil(threads);
        std::thread::scope(|scope| {
            for (c, block) in out.chunks_mut(chunk).enumerate() {
                scope.spawn(move || {
                    let base = c * chunk;
                    for (off, o) in block.iter_mut().enumerate() {
                        *o = self.row_dot(base + off, v);
                    }
                });
            }
        });
        Ok(())
    }

    /// `Mᵀ v` by a scatter pass over the CSR arrays.
    pub fn matvec_transpose(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        let mut out = vec![T::zero(); self.n];
        for (i, &vi) in v.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += self.values[k] * vi;
            }
        }
        Ok(out)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        let mut sums = vec![T::zero(); self.n];
        for (&j, &v) in self.col_idx.iter().zip(&self.values) {
            sums[j] += v.abs();
        }
        sums.into_iter().fold(T::zero(), T::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    /// `sqrt(‖M‖₁ ‖M‖∞)`, the cheap 2-norm estimate used to scale residuals.
    pub fn norm_product_estimate(&self) -> T {
        (self.norm_one() * self.norm_inf()).sqrt()
    }

    pub fn check_sign_pattern(&self, pattern: SignPattern) -> bool {
        match pattern {
            SignPattern::Nonnegative => self.values.iter().all(|&v| v >= T::zero()),
            SignPattern::ZMatrix => self.triplets().all(|(i, j, v)| i == j || v <= T::zero()),
        }
    }

    /// Strong connectivity of the stored sparsity pattern (explicit zeros
    /// included), via forward and backward reachability from node 0.
    pub fn is_irreducible(&self) -> bool {
        if self.n == 1 {
            return true;
        }
        let forward = reachable_count(self.n, &self.row_ptr, &self.col_idx);
        if forward != self.n {
            return false;
        }
        let (t_ptr, t_idx) = transpose_pattern(self.n, &self.row_ptr, &self.col_idx);
        reachable_count(self.n, &t_ptr, &t_idx) == self.n
    }

    /// Explicit transpose, rebuilt in CSR form.
    pub fn transpose(&self) -> Self {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.n, &triplets)
            .expect("transpose of a valid matrix is valid")
            .with_symmetric_hint(self.symmetric_hint)
    }

    /// `shift·I − M` (or `M − shift·I` for [`Orientation::MatrixMinusShift`]) as an explicit matrix.
    pub fn shifted(&self, shift: T, orientation: Orientation) -> Self {
        let mut triplets: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| match orientation {
                Orientation::ShiftMinusMatrix => (i, j, -v),
                Orientation::MatrixMinusShift => (i, j, v),
            })
            .collect();
        let diag = match orientation {
            Orientation::ShiftMinusMatrix => shift,
            Orientation::MatrixMinusShift => -shift,
        };
        triplets.extend((0..self.n).map(|i| (i, i, diag)));
        Self::from_triplets(self.n, &triplets)
            .expect("shifted matrix is valid")
            .with_symmetric_hint(self.symmetric_hint)
    }
}

fn reachable_count(n: usize, row_ptr: &[usize], col_idx: &[usize]) -> usize {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &w in &col_idx[row_ptr[u]..row_ptr[u + 1]] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count
}

fn transpose_pattern(n: usize, row_ptr: &[usize], col_idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut t_ptr = vec![0usize; n + 1];
    for &j in col_idx {
        t_ptr[j + 1] += 1;
    }
    for i in 0..n {
        t_ptr[i + 1] += t_ptr[i];
    }
    let mut fill = t_ptr.clone();
    let mut t_idx = vec![0usize; col_idx.len()];
    for i in 0..n {
        for &j in &col_idx[row_ptr[i]..row_ptr[i + 1]] {
            t_idx[fill[j]] = i;
            fill[j] += 1;
        }
    }
    (t_ptr, t_idx)
}

/// Anything that can be applied to a vector of fixed length.
pub trait LinearOperator<T: Scalar> {
    fn dim(&self) -> usize;

    fn apply_into(&self, v: &[T], out: &mut [T]) -> Result<()>;

    fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }
}

impl<T: Scalar> LinearOperator<T> for SparseMatrix<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, v: &[T], out: &mut [T]) -> Result<()> {
        self.matvec_into(v, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `shift·I − B`, the Perron-mode system matrix.
    ShiftMinusMatrix,
    /// `A − shift·I`, the M-matrix-mode system matrix.
    MatrixMinusShift,
}

/// A diagonal shift of a sparse matrix, applied without forming it.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedOperator<'a, T> {
    pub base: &'a SparseMatrix<T>,
    pub shift: T,
    pub orientation: Orientation,
}

impl<'a, T: Scalar> ShiftedOperator<'a, T> {
    pub fn new(base: &'a SparseMatrix<T>, shift: T, orientation: Orientation) -> Self {
        Self { base, shift, orientation }
    }

    pub fn is_symmetric(&self) -> bool {
        self.base.symmetric_hint()
    }
}

impl<T: Scalar> LinearOperator<T> for ShiftedOperator<'_, T> {
    fn dim(&self) -> usize {
        self.base.n()
    }

    fn apply_into(&self, v: &[T], out: &mut [T]) -> Result<()> {
        self.base.matvec_into(v, out)?;
        match self.orientation {
            Orientation::ShiftMinusMatrix => {
                for (o, &vi) in out.iter_mut().zip(v) {
                    *o = self.shift * vi - *o;
                }
            }
            Orientation::MatrixMinusShift => {
                for (o, &vi) in out.iter_mut().zip(v) {
                    *o -= self.shift * vi;
                }
            }
        }
        Ok(())
    }
}

/// Strictly positive vector of unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveUnitVector<T> {
    entries: Vec<T>,
}

impl<T: Scalar> PositiveUnitVector<T> {
    /// Normalizes `v`; fails if any component is not strictly positive.
    pub fn normalize(v: Vec<T>) -> Result<Self> {
        ensure_positive(&v)?;
        let norm = norm2(&v);
        let entries: Vec<T> = v.into_iter().map(|x| x / norm).collect();
        ensure_positive(&entries)?;
        Ok(Self { entries })
    }

    /// `e / sqrt(n)`.
    pub fn uniform(n: usize) -> Self {
        let value = T::one() / T::from_count(n).sqrt();
        Self { entries: vec![value; n] }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min(&self) -> T {
        self.entries.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.entries
    }
}

fn ensure_positive<T: Scalar>(v: &[T]) -> Result<()> {
    match v.iter().position(|&x| !(x > T::zero())) {
        Some(index) => Err(NodaError::NonPositiveComponent { index, value: v[index].as_f64() }),
        None => Ok(()),
    }
}

/// Componentwise `(min(w/v), max(w/v))` for strictly positive `v`.
pub fn ratio_extrema<T: Scalar>(w: &[T], v: &[T]) -> Result<(T, T)> {
    if w.len() != v.len() {
        return Err(NodaError::DimensionMismatch { expected: v.len(), found: w.len() });
    }
    ensure_positive(v)?;
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (&wi, &vi) in w.iter().zip(v) {
        let r = wi / vi;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exchange() -> SparseMatrix<f64> {
        SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn matvec_examples() {
        let id = SparseMatrix::<f64>::identity(3);
        assert_eq!(id.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(exchange().matvec(&[1.0, 2.0]).unwrap(), vec![2.0, 1.0]);
        let ones = SparseMatrix::from_dense(&vec![vec![1.0; 3]; 3]).unwrap();
        assert_eq!(ones.matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn matvec_rejects_wrong_length() {
        let err = exchange().matvec(&[1.0]).unwrap_err();
        assert!(matches!(err, NodaError::DimensionMismatch { expected: 2, found: 1 }));
        assert!(exchange().matvec_transpose(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn matvec_transpose_examples() {
        let id = SparseMatrix::<f64>::identity(2);
        assert_eq!(id.matvec_transpose(&[5.0, 7.0]).unwrap(), vec![5.0, 7.0]);
        let m = SparseMatrix::from_dense(&[vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.matvec_transpose(&[1.0, 1.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, 1.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.5);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(SparseMatrix::<f64>::from_triplets(0, &[]).is_err());
        assert!(SparseMatrix::from_triplets(2, &[(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, &[(0, 0, f64::NAN)]).is_err());
        assert!(SparseMatrix::from_dense(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn shifted_apply_examples() {
        let b = exchange();
        let op = ShiftedOperator::new(&b, 2.0, Orientation::ShiftMinusMatrix);
        assert_eq!(op.apply(&[1.0, 2.0]).unwrap(), vec![0.0, 3.0]);

        let a = SparseMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let op = ShiftedOperator::new(&a, 0.0, Orientation::MatrixMinusShift);
        assert_eq!(op.apply(&[1.0, 2.0]).unwrap(), vec![0.0, 3.0]);

        let v = [0.3, -1.7];
        let op = ShiftedOperator::new(&b, 0.0, Orientation::ShiftMinusMatrix);
        let neg: Vec<f64> = b.matvec(&v).unwrap().iter().map(|x| -x).collect();
        assert_eq!(op.apply(&v).unwrap(), neg);
    }

    #[test]
    fn shifted_apply_matches_reference_order_bitwise() {
        let b = SparseMatrix::from_dense(&[vec![0.1, 0.7, 0.0], vec![0.3, 0.0, 1.9], vec![2.2, 0.4, 0.6]]).unwrap();
        let v = [0.31, 1.7, 0.05];
        let shift = 3.3f64;
        let bv = b.matvec(&v).unwrap();
        let got = ShiftedOperator::new(&b, shift, Orientation::ShiftMinusMatrix).apply(&v).unwrap();
        for i in 0..3 {
            assert_eq!(got[i].to_bits(), (shift * v[i] - bv[i]).to_bits());
        }
        let got = ShiftedOperator::new(&b, shift, Orientation::MatrixMinusShift).apply(&v).unwrap();
        for i in 0..3 {
            assert_eq!(got[i].to_bits(), (bv[i] - shift * v[i]).to_bits());
        }
    }

    #[test]
    fn norm_estimate_examples() {
        assert_eq!(exchange().norm_product_estimate(), 1.0);
        let m = SparseMatrix::from_dense(&[vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.norm_one(), 2.0);
        assert_eq!(m.norm_inf(), 2.0);
        assert_eq!(m.norm_product_estimate(), 2.0);
        assert_eq!(SparseMatrix::<f64>::identity(7).norm_product_estimate(), 1.0);
    }

    #[test]
    fn ratio_extrema_examples() {
        assert_eq!(ratio_extrema(&[2.0, 1.0], &[1.0, 2.0]).unwrap(), (0.5, 2.0));
        assert_eq!(ratio_extrema(&[0.0, 3.0], &[1.0, 2.0]).unwrap(), (0.0, 1.5));
        let v = [0.2, 0.9, 1.3];
        let w: Vec<f64> = v.iter().map(|x| 4.0 * x).collect();
        assert_eq!(ratio_extrema(&w, &v).unwrap(), (4.0, 4.0));
    }

    #[test]
    fn ratio_extrema_rejects_nonpositive() {
        let err = ratio_extrema(&[1.0, 1.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, NodaError::NonPositiveComponent { index: 1, .. }));
        assert!(ratio_extrema(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sign_pattern_examples() {
        assert!(exchange().check_sign_pattern(SignPattern::Nonnegative));
        let z = SparseMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert!(z.check_sign_pattern(SignPattern::ZMatrix));
        assert!(!z.check_sign_pattern(SignPattern::Nonnegative));
        let bad = SparseMatrix::from_dense(&[vec![2.0, 1.0], vec![-1.0, 2.0]]).unwrap();
        assert!(!bad.check_sign_pattern(SignPattern::ZMatrix));
    }

    #[test]
    fn irreducibility_examples() {
        assert!(exchange().is_irreducible());
        let upper = SparseMatrix::from_dense(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(!upper.is_irreducible());
        let cycle: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5, 1.0)).collect();
        assert!(SparseMatrix::from_triplets(5, &cycle).unwrap().is_irreducible());
        assert!(SparseMatrix::<f64>::from_triplets(1, &[]).unwrap().is_irreducible());
        // explicit zeros count as edges
        let zeros = SparseMatrix::from_triplets(2, &[(0, 1, 0.0), (1, 0, 0.0)]).unwrap();
        assert!(zeros.is_irreducible());
    }

    #[test]
    fn positive_unit_vector_checks() {
        let v = PositiveUnitVector::normalize(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.6, 0.8]);
        assert_eq!(v.min(), 0.6);
        assert!(PositiveUnitVector::normalize(vec![1.0, 0.0]).is_err());
        assert!(PositiveUnitVector::normalize(vec![1.0, -2.0]).is_err());
        let u = PositiveUnitVector::<f64>::uniform(4);
        assert_eq!(u.as_slice(), &[0.5; 4]);
    }

    #[test]
    fn parallel_matvec_is_bitwise_sequential() {
        let n = 5000;
        let triplets: Vec<_> =
            (0..n).flat_map(|i| [(i, i, 2.0 + (i % 7) as f64), (i, (i * 13 + 5) % n, 0.37)]).collect();
        let m = SparseMatrix::from_triplets(n, &triplets).unwrap();
        let v: Vec<f64> = (0..n).map(|i| ((i * 31) % 17) as f64 / 3.0).collect();
        let seq = m.matvec(&v).unwrap();
        set_matvec_threads(4);
        let par = m.matvec(&v).unwrap();
        set_matvec_threads(1);
        assert_eq!(seq, par);
    }
}
