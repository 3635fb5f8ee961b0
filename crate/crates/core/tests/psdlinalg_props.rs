mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{psd, random_psd, rng};
use singulax::psdlinalg::{jacobi_eigen, min_eigenvalue, pinv_psd, project_range, rank, sqrt_psd, SymPsdMatrix};

/// Exact rank of an integer matrix by fraction-free elimination.
fn exact_rank(m: &[Vec<i128>]) -> usize {
    let mut a: Vec<Vec<i128>> = m.to_vec();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev = 1i128;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(rank, pivot);
        for r in (rank + 1)..rows {
            for c in (col + 1)..cols {
                a[r][c] = (a[rank][col] * a[r][c] - a[r][col] * a[rank][c]) / prev;
            }
            a[r][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
    }
    rank
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn penrose_axioms(seed in any::<u64>(), dim in 1usize..=8, rank_frac in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let k = (rank_frac * dim as f64).round() as usize;
        let a = psd(random_psd(&mut r, dim, k));
        let res = pinv_psd(&a, 0.0).unwrap();
        let p = res.pinv.matrix();
        let m = a.matrix();
        let scale = a.lambda_max().max(1.0);
        prop_assert!(max_abs(&(m * p * m - m)) <= 1e-8 * scale);
        prop_assert!(max_abs(&(p * m * p - p)) <= 1e-8 * scale.max(p.amax()));
        let mp = m * p;
        let pm = p * m;
        prop_assert!(max_abs(&(&mp - mp.transpose())) <= 1e-8 * scale);
        prop_assert!(max_abs(&(&pm - pm.transpose())) <= 1e-8 * scale);
        prop_assert_eq!(res.rank, k);
    }

    #[test]
    fn double_pseudoinverse(seed in any::<u64>(), dim in 1usize..=6, k in 0usize..=6) {
        let k = k.min(dim);
        let mut r = rng(seed);
        let a = psd(random_psd(&mut r, dim, k));
        let once = pinv_psd(&a, 0.0).unwrap();
        let twice = pinv_psd(&once.pinv, 0.0).unwrap();
        let err = (twice.pinv.matrix() - a.matrix()).amax();
        prop_assert!(err <= 1e-8 * a.lambda_max().max(1.0), "err {err}");
    }

    #[test]
    fn rank_matches_exact_elimination(
        entries in prop::collection::vec(-2i64..=2, 1..=36),
        dim in 1usize..=6,
    ) {
        let rows = (entries.len() / dim).max(1);
        let b = DMatrix::from_fn(rows, dim, |i, j| entries.get(i * dim + j).copied().unwrap_or(0) as f64);
        let m = b.transpose() * &b;
        let exact: Vec<Vec<i128>> = (0..dim)
            .map(|i| (0..dim).map(|j| m[(i, j)] as i128).collect())
            .collect();
        let a = psd(m);
        prop_assert_eq!(rank(&a, 0.0), exact_rank(&exact));
    }

    #[test]
    fn min_eigenvalue_zero_iff_rank_deficient(seed in any::<u64>(), dim in 1usize..=6, k in 0usize..=6) {
        let k = k.min(dim);
        let mut r = rng(seed);
        let a = psd(random_psd(&mut r, dim, k));
        let deficient = rank(&a, 0.0) < dim;
        let lambda = min_eigenvalue(&a);
        let tol = 1e-10 * dim as f64 * a.lambda_max().max(1.0);
        prop_assert_eq!(deficient, lambda <= tol);
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal(seed in any::<u64>(), dim in 1usize..=6, k in 0usize..=6) {
        let k = k.min(dim);
        let mut r = rng(seed);
        let a = psd(random_psd(&mut r, dim, k));
        let v = common::uniform_vector(&mut r, dim);
        let pv = project_range(&a, &v).unwrap();
        let ppv = project_range(&a, &pv).unwrap();
        prop_assert!((&ppv - &pv).amax() <= 1e-10);
        // the residual is orthogonal to the range
        prop_assert!((a.matrix() * (&v - &pv)).amax() <= 1e-8 * a.lambda_max().max(1.0));
    }

    #[test]
    fn jacobi_reconstructs(seed in any::<u64>(), dim in 1usize..=8) {
        let mut r = rng(seed);
        let b = common::uniform_matrix(&mut r, dim, dim);
        let m = &b + b.transpose();
        let e = jacobi_eigen(&m);
        let back = &e.vectors * DMatrix::from_diagonal(&DVector::from_vec(e.values.clone())) * e.vectors.transpose();
        prop_assert!((back - &m).amax() <= 1e-12 * m.amax().max(1.0));
        let ortho = e.vectors.transpose() * &e.vectors - DMatrix::identity(dim, dim);
        prop_assert!(ortho.amax() <= 1e-12);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn square_root_squares_back(seed in any::<u64>(), dim in 1usize..=6, k in 0usize..=6) {
        let k = k.min(dim);
        let mut r = rng(seed);
        let a = psd(random_psd(&mut r, dim, k));
        let s = sqrt_psd(&a);
        prop_assert!((&s * &s - a.matrix()).amax() <= 1e-10 * a.lambda_max().max(1.0));
    }
}

#[test]
fn symmetric_input_with_roundoff_is_accepted() {
    let mut m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    m[(0, 1)] += 1e-14;
    let a = SymPsdMatrix::new(m).unwrap();
    assert_eq!(a.matrix()[(0, 1)], a.matrix()[(1, 0)]);
}
