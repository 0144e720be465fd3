use noda_core::diagnostics::{check_bracket_with, dense_reference, order_estimate, tan_angle};
use noda_core::inner::{solve_inner, InnerMethod, InnerRequest};
use noda_core::io::{parse_matrix_market, write_matrix_market};
use noda_core::sparse::{ratio_extrema, LinearOperator, Orientation};
use noda_core::{generate, ProblemMode, ShiftedOperator, SparseMatrix};
use proptest::prelude::*;

/// Random irreducible nonnegative matrix with n in 2..=max_n.
fn nonneg_matrix(max_n: usize) -> impl Strategy<Value = SparseMatrix<f64>> {
    (2..=max_n, 0.0..0.4f64, any::<u64>()).prop_map(|(n, d, seed)| generate::random_nonnegative(n, d, seed).unwrap())
}

fn positive_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3..10.0f64, n)
}

fn matrix_and_vector(max_n: usize) -> impl Strategy<Value = (SparseMatrix<f64>, Vec<f64>)> {
    nonneg_matrix(max_n).prop_flat_map(|m| {
        let n = m.n();
        (Just(m), positive_vector(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifted_apply_is_bitwise_shift_minus_product((b, v) in matrix_and_vector(30), shift in 0.0..50.0f64) {
        let bv = b.matvec(&v).unwrap();
        let got = ShiftedOperator::new(&b, shift, Orientation::ShiftMinusMatrix).apply(&v).unwrap();
        for i in 0..v.len() {
            prop_assert_eq!(got[i].to_bits(), (shift * v[i] - bv[i]).to_bits());
        }
        let got = ShiftedOperator::new(&b, shift, Orientation::MatrixMinusShift).apply(&v).unwrap();
        for i in 0..v.len() {
            prop_assert_eq!(got[i].to_bits(), (bv[i] - shift * v[i]).to_bits());
        }
    }

    #[test]
    fn ratio_min_never_exceeds_max((b, v) in matrix_and_vector(30)) {
        let bv = b.matvec(&v).unwrap();
        let (lo, hi) = ratio_extrema(&bv, &v).unwrap();
        prop_assert!(lo <= hi);
    }

    #[test]
    fn transpose_matches_explicit_transpose((b, v) in matrix_and_vector(25)) {
        let n = b.n();
        let flipped: Vec<_> = b.triplets().map(|(i, j, x)| (j, i, x)).collect();
        let explicit = SparseMatrix::from_triplets(n, &flipped).unwrap();
        let t = b.transpose();
        prop_assert_eq!(t.to_dense(), explicit.to_dense());
        prop_assert_eq!(b.matvec_transpose(&v).unwrap(), explicit.matvec(&v).unwrap());
        prop_assert_eq!(t.transpose().to_dense(), b.to_dense());
    }

    #[test]
    fn irreducibility_survives_symmetric_permutation(b in nonneg_matrix(25), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = b.n();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<_> = b.triplets().map(|(i, j, x)| (perm[i], perm[j], x)).collect();
        let p = SparseMatrix::from_triplets(n, &permuted).unwrap();
        prop_assert!(b.is_irreducible());
        prop_assert_eq!(p.is_irreducible(), b.is_irreducible());
    }

    #[test]
    fn block_triangular_matrices_are_reducible(n in 2usize..20, split in 1usize..19, seed in any::<u64>()) {
        let split = split.min(n - 1);
        let full = generate::random_primitive::<f64>(n, 0.5, seed).unwrap();
        // dropping every entry from the trailing block into the leading one
        let kept: Vec<_> = full.triplets().filter(|&(i, j, _)| !(i < split && j >= split)).collect();
        let m = SparseMatrix::from_triplets(n, &kept).unwrap();
        prop_assert!(!m.is_irreducible());
    }

    #[test]
    fn tan_angle_is_symmetric(n in 2usize..30, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let unit = |rng: &mut rand_chacha::ChaCha8Rng| {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (x, y) = (unit(&mut rng), unit(&mut rng));
        let (a, b) = (tan_angle(&x, &y), tan_angle(&y, &x));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!(tan_angle(&x, &x) < 1e-7);
    }

    #[test]
    fn matrix_market_round_trip(n in 1usize..30, density in 0.0..0.5f64, seed in any::<u64>(), scale in -1e6..1e6f64) {
        let base = generate::random_nonnegative::<f64>(n, density, seed).unwrap();
        let scaled: Vec<_> = base.triplets().map(|(i, j, x)| (i, j, x * scale / 3.0)).collect();
        let m = SparseMatrix::from_triplets(n, &scaled).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let back: SparseMatrix<f64> = parse_matrix_market(buf.as_slice()).unwrap();
        prop_assert_eq!(back.n(), m.n());
        prop_assert_eq!(back.row_ptr(), m.row_ptr());
        prop_assert_eq!(back.col_idx(), m.col_idx());
        for (a, b) in back.values().iter().zip(m.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bracket_holds_for_random_positive_probes(
        (n, seed, v) in (2usize..12, any::<u64>()).prop_flat_map(|(n, s)| (Just(n), Just(s), positive_vector(n)))
    ) {
        let p = generate::random_primitive::<f64>(n, 0.3, seed).unwrap();
        let reference = dense_reference(&p, ProblemMode::Perron, 50).unwrap();
        let r = check_bracket_with(&p, &v, &reference).unwrap();
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let unit: Vec<f64> = v.iter().map(|x| x / s).collect();
        if tan_angle(&unit, reference.vector.as_slice()) > 1e-6 {
            prop_assert!(r.strict, "{:?}", r);
        }
        prop_assert!(r.min_ratio <= r.reference && r.reference <= r.max_ratio);
    }

    #[test]
    fn inner_residual_is_explicit_and_tolerance_is_monotone(
        n in 2usize..25, seed in any::<u64>(), shift_gap in 0.05..2.0f64, tight in 1e-12..1e-6f64, method_pick in 0usize..2
    ) {
        let b = generate::random_nonnegative::<f64>(n, 0.2, seed).unwrap();
        let rho = dense_reference(&b, ProblemMode::Perron, 100).unwrap().value;
        let op = ShiftedOperator::new(&b, rho * (1.0 + shift_gap) + 1e-3, Orientation::ShiftMinusMatrix);
        let rhs: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let method = [InnerMethod::Auto, InnerMethod::BiCgStab][method_pick];
        let solve = |tol: f64| {
            solve_inner(&InnerRequest { operator: op, rhs: &rhs, tol_abs: tol, max_iterations: 20 * n, method }, false).unwrap()
        };
        let loose = solve(tight * 1e4);
        let strict = solve(tight);
        let op_norm = op.shift + b.norm_product_estimate();
        let rhs_norm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (res, tol) in [(&loose, tight * 1e4), (&strict, tight)] {
            let mut f = op.apply(&res.y).unwrap();
            for (fi, r) in f.iter_mut().zip(&rhs) {
                *fi -= r;
            }
            let ynorm = res.y.iter().map(|x| x * x).sum::<f64>().sqrt();
            let slack = 4.0 * n as f64 * f64::EPSILON * (op_norm * ynorm + rhs_norm);
            let diff = f.iter().zip(&res.f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(diff <= slack, "diff {diff:e} slack {slack:e}");
            if res.satisfied {
                prop_assert!(res.f_norm <= tol);
            }
        }
        let floor = 1e3 * f64::EPSILON;
        prop_assert!(strict.f_norm <= loose.f_norm || (strict.f_norm < floor && loose.f_norm < floor));
    }
}

#[test]
fn order_estimate_recovers_prescribed_orders() {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    for p in [1.5, phi, 2.0] {
        // ε_{k+1} = ε_k^p starting inside (0, 1)
        let mut eps = vec![0.5f64];
        while eps.len() < 6 && *eps.last().unwrap() > 1e-200 {
            let next = eps.last().unwrap().powf(p);
            eps.push(next);
        }
        let alphas = order_estimate(&eps).unwrap();
        assert!(!alphas.is_empty());
        for a in alphas {
            let a = a.expect("defined");
            assert!((a - p).abs() < 1e-12, "p = {p}, alpha = {a}");
        }
    }
}
