use dirac_ml::eigsolve::{lowest, Backend, DenseMatrix, EigRequest, MatrixRef, SparseMatrix};
use num_complex::Complex64;
use proptest::prelude::*;

mod common;
use common::{c, oracle_eigenvalues, random_pencil};

#[test]
fn diagonal_matrix_exact() {
    let k = DenseMatrix::from_fn(3, |i, j| if i == j { c(i as f64 + 1.0, 0.0) } else { c(0.0, 0.0) });
    let s = lowest(&EigRequest::new(MatrixRef::Dense(&k), None, 3)).unwrap();
    assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
}

#[test]
fn random_pencil_dense_and_lanczos_match_oracle() {
    for seed in 0..3 {
        let (k, m) = random_pencil(40, seed);
        let want = oracle_eigenvalues(&k, &m);
        let mut req = EigRequest::new(MatrixRef::Dense(&k), Some(MatrixRef::Dense(&m)), 40);
        req.backend = Backend::Dense;
        let dense = lowest(&req).unwrap();
        for (a, b) in dense.eigenvalues.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "dense {a} vs oracle {b}");
        }
        let ks = SparseMatrix::from_dense(&k);
        let ms = SparseMatrix::from_dense(&m);
        let mut req = EigRequest::new(MatrixRef::Sparse(&ks), Some(MatrixRef::Sparse(&ms)), 8);
        req.backend = Backend::Lanczos;
        let lz = lowest(&req).unwrap();
        assert!(lz.converged, "{:?} {:?}", lz.residuals, lz.eigenvalues);
        for (a, b) in lz.eigenvalues.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "lanczos {a} vs oracle {b}");
        }
    }
}

fn fd_laplacian(n: usize) -> (SparseMatrix, f64) {
    let h = 1.0 / (n + 1) as f64;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, c(2.0 / (h * h), 0.0)));
        if i + 1 < n {
            t.push((i, i + 1, c(-1.0 / (h * h), 0.0)));
            t.push((i + 1, i, c(-1.0 / (h * h), 0.0)));
        }
    }
    (SparseMatrix::from_triplets(n, t), h)
}

#[test]
fn fd_laplacian_closed_form() {
    let n = 2000;
    let (k, h) = fd_laplacian(n);
    let mut req = EigRequest::new(MatrixRef::Sparse(&k), None, 6);
    req.backend = Backend::Lanczos;
    let s = lowest(&req).unwrap();
    for (j, e) in s.eigenvalues.iter().enumerate() {
        let x = ((j + 1) as f64 * std::f64::consts::PI * h / 2.0).sin();
        let want = 4.0 / (h * h) * x * x;
        assert!((e - want).abs() < 1e-10 * want.max(1.0), "{e} vs {want}");
    }
    assert!(s.max_residual() <= 1e-8);
}

#[test]
fn repeated_eigenvalues_are_all_found() {
    // Two identical uncoupled copies of the FD Laplacian: every level is double.
    let (a, h) = fd_laplacian(700);
    let n = a.dim();
    let mut t: Vec<_> = a.entries().collect();
    t.extend(a.entries().map(|(i, j, v)| (i + n, j + n, v)));
    let k = SparseMatrix::from_triplets(2 * n, t);
    let mut req = EigRequest::new(MatrixRef::Sparse(&k), None, 6);
    req.backend = Backend::Lanczos;
    let s = lowest(&req).unwrap();
    for (j, e) in s.eigenvalues.iter().enumerate() {
        let x = ((j / 2 + 1) as f64 * std::f64::consts::PI * h / 2.0).sin();
        let want = 4.0 / (h * h) * x * x;
        assert!((e - want).abs() < 1e-9 * want, "{j}: {e} vs {want}");
    }
    assert_eq!(s.clusters.len(), 3);
}

#[test]
fn shift_invariance() {
    let (k, _) = fd_laplacian(800);
    let mut base = None;
    for shift in [-1.0, -50.0, 5.0] {
        let mut req = EigRequest::new(MatrixRef::Sparse(&k), None, 4);
        req.backend = Backend::Lanczos;
        req.shift = Some(shift);
        let s = lowest(&req).unwrap();
        match &base {
            None => base = Some(s.eigenvalues.clone()),
            Some(b) => {
                for (x, y) in s.eigenvalues.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-8 * y.abs());
                }
            }
        }
    }
}

#[test]
fn deterministic_for_fixed_seed() {
    let (k, m) = random_pencil(30, 7);
    let ks = SparseMatrix::from_dense(&k);
    let ms = SparseMatrix::from_dense(&m);
    let run = || {
        let mut req = EigRequest::new(MatrixRef::Sparse(&ks), Some(MatrixRef::Sparse(&ms)), 5);
        req.backend = Backend::Lanczos;
        lowest(&req).unwrap().eigenvalues
    };
    assert_eq!(run(), run());
}

#[test]
fn eigenvectors_are_mass_orthonormal() {
    let (k, m) = random_pencil(40, 11);
    let ks = SparseMatrix::from_dense(&k);
    let ms = SparseMatrix::from_dense(&m);
    let mut req = EigRequest::new(MatrixRef::Sparse(&ks), Some(MatrixRef::Sparse(&ms)), 6);
    req.backend = Backend::Lanczos;
    req.want_vectors = true;
    let s = lowest(&req).unwrap();
    let v = s.vectors.unwrap();
    for i in 0..v.len() {
        let mv = ms.matvec(&v[i]);
        for (j, vj) in v.iter().enumerate() {
            let g: Complex64 = vj.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((g - want).norm() < 1e-8, "({i},{j}) {g}");
        }
    }
}

#[test]
fn bad_requests_rejected() {
    let k = DenseMatrix::identity(3);
    assert!(lowest(&EigRequest::new(MatrixRef::Dense(&k), None, 0)).is_err());
    assert!(lowest(&EigRequest::new(MatrixRef::Dense(&k), None, 4)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn residual_contract_on_random_pencils(seed in 0u64..1000, n in 8usize..30) {
        let (k, m) = random_pencil(n, seed);
        let s = lowest(&EigRequest::new(MatrixRef::Dense(&k), Some(MatrixRef::Dense(&m)), 3)).unwrap();
        prop_assert!(s.max_residual() <= 1e-8);
        prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}
