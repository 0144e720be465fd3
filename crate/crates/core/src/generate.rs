//! Test-matrix generators, also reachable from the CLI as `gen:<spec>`.
//!
//! Random matrices draw from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, so a `(n, density, seed)` triple always yields the same
//! matrix.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NodaError, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Tridiagonal `(−1, 2, −1)`, the 1D Dirichlet Laplacian.
pub fn laplacian_1d<T: Scalar>(n: usize) -> Result<SparseMatrix<T>> {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, T::lit(2.0)));
        if i + 1 < n {
            t.push((i, i + 1, -T::one()));
            t.push((i + 1, i, -T::one()));
        }
    }
    Ok(SparseMatrix::from_triplets(n, &t)?.with_symmetric_hint(true))
}

/// Five-point Dirichlet Laplacian on an `m × m` interior grid (`n = m²`).
pub fn laplacian_2d<T: Scalar>(m: usize) -> Result<SparseMatrix<T>> {
    let n = m * m;
    let mut t = Vec::with_capacity(5 * n);
    let idx = |r: usize, c: usize| r * m + c;
    for r in 0..m {
        for c in 0..m {
            let i = idx(r, c);
            t.push((i, i, T::lit(4.0)));
            if r > 0 {
                t.push((i, idx(r - 1, c), -T::one()));
            }
            if r + 1 < m {
                t.push((i, idx(r + 1, c), -T::one()));
            }
            if c > 0 {
                t.push((i, idx(r, c - 1), -T::one()));
            }
            if c + 1 < m {
                t.push((i, idx(r, c + 1), -T::one()));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n, &t)?.with_symmetric_hint(true))
}

/// Smallest eigenvalue of [`laplacian_1d`]: `4 sin²(π / (2(n+1)))`.
pub fn laplacian_1d_smallest(n: usize) -> f64 {
    let s = (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
    4.0 * s * s
}

/// Smallest eigenvalue of [`laplacian_2d`]: `8 sin²(π / (2(m+1)))`.
pub fn laplacian_2d_smallest(m: usize) -> f64 {
    2.0 * laplacian_1d_smallest(m)
}

fn off_diagonal_pattern(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    // a random Hamiltonian cycle keeps the pattern strongly connected
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    if n > 1 {
        for w in 0..n {
            let (i, j) = (perm[w], perm[(w + 1) % n]);
            t.push((i, j, 1.0 - rng.gen::<f64>()));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen::<f64>() < density {
                t.push((i, j, 1.0 - rng.gen::<f64>()));
            }
        }
    }
    t
}

/// Random irreducible nonnegative matrix: a random cycle plus off-diagonal
/// entries with probability `density`, values in (0, 1].
pub fn random_nonnegative<T: Scalar>(n: usize, density: f64, seed: u64) -> Result<SparseMatrix<T>> {
    check_density(density)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = off_diagonal_pattern(n, density, &mut rng);
    let t: Vec<_> = t.into_iter().map(|(i, j, v)| (i, j, T::lit(v))).collect();
    SparseMatrix::from_triplets(n, &t)
}

/// [`random_nonnegative`] plus a positive diagonal, which makes it primitive.
pub fn random_primitive<T: Scalar>(n: usize, density: f64, seed: u64) -> Result<SparseMatrix<T>> {
    check_density(density)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = off_diagonal_pattern(n, density, &mut rng);
    for i in 0..n {
        t.push((i, i, 1.0 - rng.gen::<f64>()));
    }
    let t: Vec<_> = t.into_iter().map(|(i, j, v)| (i, j, T::lit(v))).collect();
    SparseMatrix::from_triplets(n, &t)
}

/// Irreducible, strictly diagonally dominant Z-matrix (hence a nonsingular
/// M-matrix): `A = D − N` with `N` from the [`random_nonnegative`] pattern and
/// `d_i = Σ_j N_ij + u_i`, `u_i ∈ [0.1, 1.1)`.
pub fn random_zmatrix<T: Scalar>(n: usize, density: f64, seed: u64) -> Result<SparseMatrix<T>> {
    check_density(density)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = off_diagonal_pattern(n, density, &mut rng);
    let mut rowsum = vec![0.0f64; n];
    for &(i, _, v) in &t {
        rowsum[i] += v;
    }
    let mut out: Vec<(usize, usize, T)> = t.into_iter().map(|(i, j, v)| (i, j, T::lit(-v))).collect();
    for (i, s) in rowsum.into_iter().enumerate() {
        out.push((i, i, T::lit(s + 0.1 + rng.gen::<f64>())));
    }
    SparseMatrix::from_triplets(n, &out)
}

fn check_density(density: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&density) {
        return Err(NodaError::InvalidOption(format!("density must lie in [0,1], got {density}")));
    }
    Ok(())
}

/// `[[0,1],[1,0]]`: irreducible but imprimitive.
pub fn exchange<T: Scalar>() -> SparseMatrix<T> {
    SparseMatrix::from_dense(&[vec![T::zero(), T::one()], vec![T::one(), T::zero()]]).expect("valid")
}

/// `[[1,1],[1,0]]`, Perron root `(1+√5)/2`.
pub fn fibonacci<T: Scalar>() -> SparseMatrix<T> {
    SparseMatrix::from_dense(&[vec![T::one(), T::one()], vec![T::one(), T::zero()]]).expect("valid")
}

pub fn ones<T: Scalar>(n: usize) -> Result<SparseMatrix<T>> {
    let t: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j, T::one()))).collect();
    Ok(SparseMatrix::from_triplets(n, &t)?.with_symmetric_hint(true))
}

/// Cyclic shift `e_i → e_{i+1 mod n}`.
pub fn cycle<T: Scalar>(n: usize) -> Result<SparseMatrix<T>> {
    let t: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, T::one())).collect();
    SparseMatrix::from_triplets(n, &t)
}

/// Parses a generator spec (the part after `gen:`):
///
/// | spec | matrix |
/// |---|---|
/// | `laplacian1d:<n>` | [`laplacian_1d`] |
/// | `laplacian2d:<m>` | [`laplacian_2d`], `n = m²` |
/// | `random:<n>:<density>:<seed>` | [`random_nonnegative`] |
/// | `primitive:<n>:<density>:<seed>` | [`random_primitive`] |
/// | `zmatrix:<n>:<density>:<seed>` | [`random_zmatrix`] |
/// | `exchange`, `fibonacci` | 2×2 examples |
/// | `ones:<n>`, `cycle:<n>`, `identity:<n>` | |
pub fn from_spec<T: Scalar>(spec: &str) -> Result<SparseMatrix<T>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || NodaError::InvalidOption(format!("unrecognized generator spec '{spec}'"));
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let pos = |s: &str| int(s).and_then(|v| if v == 0 { Err(bad()) } else { Ok(v) });
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let seed = |s: &str| s.parse::<u64>().map_err(|_| bad());
    match parts.as_slice() {
        ["laplacian1d", n] => laplacian_1d(pos(n)?),
        ["laplacian2d", m] => laplacian_2d(pos(m)?),
        ["random", n, d, s] => random_nonnegative(pos(n)?, float(d)?, seed(s)?),
        ["primitive", n, d, s] => random_primitive(pos(n)?, float(d)?, seed(s)?),
        ["zmatrix", n, d, s] => random_zmatrix(pos(n)?, float(d)?, seed(s)?),
        ["exchange"] => Ok(exchange()),
        ["fibonacci"] => Ok(fibonacci()),
        ["ones", n] => ones(pos(n)?),
        ["cycle", n] => cycle(pos(n)?),
        ["identity", n] => Ok(SparseMatrix::identity(pos(n)?)),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SignPattern;

    #[test]
    fn laplacians_are_symmetric_z_matrices() {
        let a: SparseMatrix<f64> = laplacian_1d(6).unwrap();
        assert!(a.is_symmetric() && a.symmetric_hint());
        assert!(a.check_sign_pattern(SignPattern::ZMatrix));
        assert!(a.is_irreducible());
        let a: SparseMatrix<f64> = laplacian_2d(4).unwrap();
        assert_eq!(a.n(), 16);
        assert_eq!(a.nnz(), 16 + 2 * 2 * 4 * 3);
        assert!(a.is_symmetric() && a.is_irreducible());
    }

    #[test]
    fn random_matrices_are_irreducible_and_reproducible() {
        for seed in 0..5 {
            let b: SparseMatrix<f64> = random_nonnegative(30, 0.01, seed).unwrap();
            assert!(b.is_irreducible());
            assert!(b.check_sign_pattern(SignPattern::Nonnegative));
            assert_eq!(b, random_nonnegative(30, 0.01, seed).unwrap());
            let a: SparseMatrix<f64> = random_zmatrix(30, 0.05, seed).unwrap();
            assert!(a.is_irreducible() && a.check_sign_pattern(SignPattern::ZMatrix));
            for i in 0..30 {
                let off: f64 = a.row(i).filter(|&(j, _)| j != i).map(|(_, v)| -v).sum();
                assert!(a.get(i, i) > off);
            }
        }
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(from_spec::<f64>("laplacian2d:3").unwrap().n(), 9);
        assert_eq!(from_spec::<f64>("random:20:0.1:4").unwrap().n(), 20);
        assert_eq!(from_spec::<f64>("exchange").unwrap(), exchange());
        assert!(from_spec::<f64>("laplacian1d:0").is_err());
        assert!(from_spec::<f64>("random:20:2:4").is_err());
        assert!(from_spec::<f64>("nonsense").is_err());
    }

    #[test]
    fn analytic_eigenvalues() {
        let l = laplacian_1d_smallest(50);
        assert!((l - 4.0 * (std::f64::consts::PI / 102.0).sin().powi(2)).abs() < 1e-18);
        assert_eq!(laplacian_2d_smallest(64), 2.0 * laplacian_1d_smallest(64));
    }
}
