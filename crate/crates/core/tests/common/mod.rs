//! Helpers shared by integration tests.
#![allow(dead_code)]

use dirac_ml::eigsolve::DenseMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random Hermitian `K` and a well-conditioned SPD `M`.
pub fn random_pencil(n: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DenseMatrix::zeros(n);
    let mut b = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            b.set(i, j, c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        }
    }
    let k = DenseMatrix::from_fn(n, |i, j| a.get(i, j) + a.get(j, i).conj());
    let bb = b.adjoint().matmul(&b);
    let m = DenseMatrix::from_fn(n, |i, j| bb.get(i, j) * 0.1 + if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
    (k, m)
}

/// Oracle: eigenvalues of M^{-1/2} K M^{-1/2} through a plain Jacobi sweep on
/// the real symmetric embedding [[Re, -Im], [Im, Re]] of the Cholesky-reduced matrix.
pub fn oracle_eigenvalues(k: &DenseMatrix, m: &DenseMatrix) -> Vec<f64> {
    let n = k.dim();
    // Cholesky M = L L*.
    let mut l = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for p in 0..j {
                s -= l[i][p] * l[j][p].conj();
            }
            if i == j {
                l[i][i] = c(s.re.sqrt(), 0.0);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let solve_l = |b: &[Complex64]| {
        let mut x = vec![c(0.0, 0.0); n];
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= l[i][p] * x[p];
            }
            x[i] = s / l[i][i];
        }
        x
    };
    // X = L^{-1} K, C = L^{-1} X^*.
    let cols: Vec<Vec<Complex64>> = (0..n).map(|j| solve_l(&(0..n).map(|i| k.get(i, j)).collect::<Vec<_>>())).collect();
    let xs = |i: usize, j: usize| cols[j][i];
    let cols2: Vec<Vec<Complex64>> =
        (0..n).map(|j| solve_l(&(0..n).map(|i| xs(j, i).conj()).collect::<Vec<_>>())).collect();
    let cm = |i: usize, j: usize| cols2[j][i];
    let nn = 2 * n;
    let mut a = vec![vec![0.0; nn]; nn];
    for i in 0..n {
        for j in 0..n {
            let z = (cm(i, j) + cm(j, i).conj()) * 0.5;
            a[i][j] = z.re;
            a[i + n][j + n] = z.re;
            a[i][j + n] = -z.im;
            a[i + n][j] = z.im;
        }
    }
    for _ in 0..60 {
        let mut off = 0.0;
        for p in 0..nn {
            for q in p + 1..nn {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..nn {
            for q in p + 1..nn {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for r in 0..nn {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = cs * arp - sn * arq;
                    a[r][q] = sn * arp + cs * arq;
                }
                for r in 0..nn {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = cs * apr - sn * aqr;
                    a[q][r] = sn * apr + cs * aqr;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..nn).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    // Every eigenvalue appears twice in the real embedding.
    ev.iter().step_by(2).copied().collect()
}
