//! Lowest eigenpairs of Hermitian pencils `K x = λ M x`.
//!
//! Small problems go through a dense Cholesky reduction. Large ones use
//! shift-invert Lanczos in the `M` inner product with full
//! reorthogonalisation and locking; a final probe from a fresh random vector
//! catches copies of repeated eigenvalues that a single Krylov space misses.

use faer::linalg::solvers::{Solve, SolveCore};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 0x5eed_d1ac_0000_0001;
pub const DEFAULT_TOL: f64 = 1e-8;
const DENSE_LIMIT: usize = 600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigError {
    #[error("matrix dimensions disagree: {0}")]
    Shape(String),
    #[error("requested {requested} eigenvalues from a problem of size {size}")]
    Count { requested: usize, size: usize },
    #[error("mass matrix is not positive definite")]
    MassNotPositive,
    #[error("factorisation of K - σM failed for every tried shift (last σ = {0})")]
    Factorization(f64),
    #[error("dense eigensolver failed")]
    Dense,
}

/// Compressed-row sparse complex matrix assembled from summed triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            assert!(i < n && j < n, "entry ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect())
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..a.n {
            for j in 0..a.n {
                let v = a.get(i, j);
                if v != Complex64::new(0.0, 0.0) {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.n, t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n)
            .flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.cols[p], self.vals[p])))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.vals[self.row_ptr[i] + p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.vals[p] * x[self.cols[p]]).sum())
            .collect()
    }

    /// `self - σ other`.
    pub fn shifted(&self, other: &SparseMatrix, sigma: f64) -> SparseMatrix {
        let mut t: Vec<_> = self.entries().collect();
        t.extend(other.entries().map(|(i, j, v)| (i, j, -v * sigma)));
        SparseMatrix::from_triplets(self.n, t)
    }

    /// Largest `|a_ij - conj(a_ji)|` relative to the largest entry.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        self.entries().map(|(i, j, v)| (v - self.get(j, i).conj()).norm()).fold(0.0, f64::max) / scale
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Lowest Gershgorin bound on the spectrum of a Hermitian matrix.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let mut d = 0.0;
                let mut off = 0.0;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    if self.cols[p] == i {
                        d = self.vals[p].re;
                    } else {
                        off += self.vals[p].norm();
                    }
                }
                d - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n);
        for (i, j, v) in self.entries() {
            d.set(i, j, d.get(i, j) + v);
        }
        d
    }

    fn to_faer(&self) -> SparseColMat<usize, Complex64> {
        let t: Vec<_> = self.entries().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &t).expect("valid triplets")
    }
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Self::zeros(n);
        for i in 0..n {
            d.set(i, i, Complex64::new(1.0, 0.0));
        }
        d
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut d = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                d.set(i, j, f(i, j));
            }
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] += v;
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n).map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn matmul(&self, o: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * o.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> DenseMatrix {
        Self::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.norm();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst / scale
    }

    fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// Either storage for one side of a pencil.
#[derive(Debug, Clone, Copy)]
pub enum MatrixRef<'a> {
    Dense(&'a DenseMatrix),
    Sparse(&'a SparseMatrix),
}

impl MatrixRef<'_> {
    pub fn dim(&self) -> usize {
        match self {
            MatrixRef::Dense(d) => d.dim(),
            MatrixRef::Sparse(s) => s.dim(),
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        match self {
            MatrixRef::Dense(d) => d.matvec(x),
            MatrixRef::Sparse(s) => s.matvec(x),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            MatrixRef::Dense(d) => (*d).clone(),
            MatrixRef::Sparse(s) => s.to_dense(),
        }
    }

    fn to_sparse(&self) -> SparseMatrix {
        match self {
            MatrixRef::Dense(d) => SparseMatrix::from_dense(d),
            MatrixRef::Sparse(s) => (*s).clone(),
        }
    }
}

/// Owned storage of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl Matrix {
    pub fn as_ref(&self) -> MatrixRef<'_> {
        match self {
            Matrix::Dense(d) => MatrixRef::Dense(d),
            Matrix::Sparse(s) => MatrixRef::Sparse(s),
        }
    }

    pub fn dim(&self) -> usize {
        self.as_ref().dim()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.as_ref().matvec(x)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        match self {
            Matrix::Dense(d) => d.norm(),
            Matrix::Sparse(s) => s.norm(),
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        match self {
            Matrix::Dense(d) => d.hermitian_defect(),
            Matrix::Sparse(s) => s.hermitian_defect(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.as_ref().to_dense()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy)]
pub struct EigRequest<'a> {
    pub k: MatrixRef<'a>,
    /// `None` means the identity.
    pub m: Option<MatrixRef<'a>>,
    pub count: usize,
    /// Shift below the wanted eigenvalues; `None` picks one from Gershgorin data.
    pub shift: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub want_vectors: bool,
    pub backend: Backend,
}

impl<'a> EigRequest<'a> {
    pub fn new(k: MatrixRef<'a>, m: Option<MatrixRef<'a>>, count: usize) -> Self {
        EigRequest {
            k,
            m,
            count,
            shift: None,
            tol: DEFAULT_TOL,
            max_iter: 20,
            seed: DEFAULT_SEED,
            want_vectors: false,
            backend: Backend::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// `‖K x - λ M x‖ / ‖M x‖` per pair.
    pub residuals: Vec<f64>,
    /// Indices grouped by near-equality of eigenvalues.
    pub clusters: Vec<Vec<usize>>,
    pub vectors: Option<Vec<Vec<Complex64>>>,
    pub converged: bool,
    pub seed: u64,
    pub shift: Option<f64>,
}

impl Spectrum {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Groups sorted values whose gap is below `tol · max(1, |λ|)`.
pub fn cluster(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (v - values[*c.last().unwrap()]).abs() <= tol * v.abs().max(1.0) => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

const CLUSTER_TOL: f64 = 1e-6;

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn residual(k: &MatrixRef, m: Option<&MatrixRef>, lambda: f64, x: &[Complex64]) -> f64 {
    let kx = k.matvec(x);
    let mx = match m {
        Some(m) => m.matvec(x),
        None => x.to_vec(),
    };
    let r: Vec<Complex64> = kx.iter().zip(&mx).map(|(a, b)| a - b * lambda).collect();
    norm2(&r) / norm2(&mx)
}

pub fn lowest(req: &EigRequest) -> Result<Spectrum, EigError> {
    let n = req.k.dim();
    if let Some(m) = &req.m {
        if m.dim() != n {
            return Err(EigError::Shape(format!("K is {n}, M is {}", m.dim())));
        }
    }
    if req.count == 0 || req.count > n {
        return Err(EigError::Count { requested: req.count, size: n });
    }
    let dense = match req.backend {
        Backend::Dense => true,
        Backend::Lanczos => false,
        Backend::Auto => n <= DENSE_LIMIT,
    };
    if dense {
        lowest_dense(req)
    } else {
        lowest_lanczos(req)
    }
}

fn lowest_dense(req: &EigRequest) -> Result<Spectrum, EigError> {
    let n = req.k.dim();
    let k = req.k.to_dense().to_faer();
    let (evals, vecs): (Vec<f64>, Mat<Complex64>) = match &req.m {
        None => {
            let e = k.self_adjoint_eigen(Side::Lower).map_err(|_| EigError::Dense)?;
            ((0..n).map(|i| e.S()[i].re).collect(), e.U().to_owned())
        }
        Some(m) => {
            let m = m.to_dense().to_faer();
            let llt = m.llt(Side::Lower).map_err(|_| EigError::MassNotPositive)?;
            let l = llt.L();
            // C = L^{-1} K L^{-*}
            let mut x = k.clone();
            faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, x.as_mut(), faer::Par::Seq);
            let mut c = x.adjoint().to_owned();
            faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), faer::Par::Seq);
            let c = Mat::from_fn(n, n, |i, j| (c[(i, j)] + c[(j, i)].conj()) * 0.5);
            let e = c.self_adjoint_eigen(Side::Lower).map_err(|_| EigError::Dense)?;
            let mut y = e.U().to_owned();
            faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.adjoint(), y.as_mut(), faer::Par::Seq);
            ((0..n).map(|i| e.S()[i].re).collect(), y)
        }
    };
    let count = req.count;
    let eigenvalues = evals[..count].to_vec();
    let vectors: Vec<Vec<Complex64>> = (0..count).map(|j| (0..n).map(|i| vecs[(i, j)]).collect()).collect();
    let residuals: Vec<f64> =
        vectors.iter().zip(&eigenvalues).map(|(x, &l)| residual(&req.k, req.m.as_ref(), l, x)).collect();
    let converged = residuals.iter().all(|&r| r <= req.tol);
    Ok(Spectrum {
        clusters: cluster(&eigenvalues, CLUSTER_TOL),
        eigenvalues,
        residuals,
        vectors: req.want_vectors.then_some(vectors),
        converged,
        seed: req.seed,
        shift: None,
    })
}

enum ShiftedFactor {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, Complex64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, Complex64>),
}

impl ShiftedFactor {
    fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = rhs.len();
        let mut b = Mat::from_fn(n, 1, |i, _| rhs[i]);
        match self {
            ShiftedFactor::Cholesky(f) => f.solve_in_place_with_conj(Conj::No, b.as_mut()),
            ShiftedFactor::Lu(f) => f.solve_in_place_with_conj(Conj::No, b.as_mut()),
        }
        (0..n).map(|i| b[(i, 0)]).collect()
    }
}

fn factor_lu(k: &SparseMatrix, m: &SparseMatrix, sigma: f64) -> Option<ShiftedFactor> {
    let a = k.shifted(m, sigma).to_faer();
    let lu = a.sp_lu().ok()?;
    // Reject numerically singular factorizations.
    let probe: Vec<Complex64> = (0..k.dim()).map(|i| Complex64::new(1.0 + (i % 7) as f64, 0.0)).collect();
    let x = lu.solve(Mat::from_fn(k.dim(), 1, |i, _| probe[i]));
    if (0..k.dim()).all(|i| x[(i, 0)].is_finite()) {
        Some(ShiftedFactor::Lu(lu))
    } else {
        None
    }
}

/// Hermitian tridiagonal eigenproblem through the dense solver.
fn tridiag_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Mat<f64>) {
    let j = alpha.len();
    let t = Mat::from_fn(j, j, |r, c| {
        if r == c {
            alpha[r]
        } else if r == c + 1 {
            beta[c]
        } else if c == r + 1 {
            beta[r]
        } else {
            0.0
        }
    });
    let e = t.self_adjoint_eigen(Side::Lower).expect("tridiagonal eigen");
    ((0..j).map(|i| e.S()[i]).collect(), e.U().to_owned())
}

struct Locked {
    theta: f64,
    x: Vec<Complex64>,
}

fn lowest_lanczos(req: &EigRequest) -> Result<Spectrum, EigError> {
    let n = req.k.dim();
    let k = req.k.to_sparse();
    let m = match &req.m {
        Some(m) => m.to_sparse(),
        None => SparseMatrix::identity(n),
    };
    let mut sigma = match req.shift {
        Some(s) => s,
        None => default_shift(&k, &m),
    };
    // Walk the shift down until K - σM is positive definite, which also
    // certifies that σ lies below the spectrum; LU is the last resort.
    let mut factor = None;
    for attempt in 0..40 {
        if let Ok(f) = k.shifted(&m, sigma).to_faer().sp_cholesky(Side::Lower) {
            factor = Some(ShiftedFactor::Cholesky(f));
            break;
        }
        sigma -= (sigma.abs() + 1.0) * (1u64 << attempt.min(20)) as f64 * 0.5;
    }
    if factor.is_none() {
        factor = factor_lu(&k, &m, sigma);
    }
    let factor = factor.ok_or(EigError::Factorization(sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let apply = |v: &[Complex64]| factor.solve(&m.matvec(v));
    let m_dot = |a: &[Complex64], b: &[Complex64]| dot(a, &m.matvec(b));

    let want = req.count;
    let mut locked: Vec<Locked> = Vec::new();
    let mut converged = true;
    let mut probes_clean = 0;
    let mut rounds = 0;
    let mut stalls = 0u32;
    while probes_clean < 1 {
        rounds += 1;
        if rounds > req.max_iter.max(4) + 2 * want {
            converged = false;
            break;
        }
        let need = want.saturating_sub(locked.len()).max(1);
        let steps = ((2 * need + 40) << stalls.min(4)).min(n - locked.len());
        let found = lanczos_run(&apply, &m_dot, &m, &locked, steps, need, &mut rng, req.tol);
        if found.is_empty() {
            stalls += 1;
        }
        let threshold = {
            let mut th: Vec<f64> = locked.iter().map(|l| l.theta).collect();
            th.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if th.len() >= want {
                Some(th[want - 1])
            } else {
                None
            }
        };
        let mut added = false;
        for l in found {
            let useful = match threshold {
                Some(t) => l.theta > t * (1.0 + 1e-12),
                None => true,
            };
            if useful {
                locked.push(l);
                added = true;
            }
        }
        if locked.len() >= want && !added {
            probes_clean += 1;
        }
    }
    let mut pairs: Vec<(f64, Vec<Complex64>)> = locked.into_iter().map(|l| (sigma + 1.0 / l.theta, l.x)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.truncate(want + REFINE_GUARD);
    let kref = MatrixRef::Sparse(&k);
    let mref = MatrixRef::Sparse(&m);
    let worst = |p: &[(f64, Vec<Complex64>)]| {
        p.iter().take(want).map(|(l, x)| residual(&kref, Some(&mref), *l, x)).fold(0.0, f64::max)
    };
    if let Some(refined) = refine(&k, &m, &apply, &pairs) {
        if refined.len() >= want.min(pairs.len()) && worst(&refined) < worst(&pairs) {
            pairs = refined;
        }
    }
    pairs.truncate(want);
    if pairs.len() < want {
        converged = false;
    }
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let residuals: Vec<f64> = pairs.iter().map(|(l, x)| residual(&kref, Some(&mref), *l, x)).collect();
    converged &= residuals.iter().all(|&r| r <= req.tol);
    Ok(Spectrum {
        clusters: cluster(&eigenvalues, CLUSTER_TOL),
        eigenvalues,
        residuals,
        vectors: req.want_vectors.then(|| pairs.into_iter().map(|p| p.1).collect()),
        converged,
        seed: req.seed,
        shift: Some(sigma),
    })
}

/// Extra Ritz pairs carried through refinement so the last wanted pair is
/// not at the edge of the block.
const REFINE_GUARD: usize = 2;
const REFINE_STEPS: usize = 2;

/// Block inverse iteration with Rayleigh-Ritz on the converged Ritz vectors,
/// reusing the shifted factorization; removes the roundoff the long Krylov
/// recombination leaves in the vectors.
fn refine(
    k: &SparseMatrix,
    m: &SparseMatrix,
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    pairs: &[(f64, Vec<Complex64>)],
) -> Option<Vec<(f64, Vec<Complex64>)>> {
    let mut x: Vec<Vec<Complex64>> = pairs.iter().map(|p| p.1.clone()).collect();
    let mut out = Vec::new();
    for _ in 0..REFINE_STEPS {
        let y: Vec<Vec<Complex64>> = x.iter().map(|v| apply(v)).collect();
        let ky: Vec<Vec<Complex64>> = y.iter().map(|v| k.matvec(v)).collect();
        let my: Vec<Vec<Complex64>> = y.iter().map(|v| m.matvec(v)).collect();
        let b = y.len();
        let herm = |a: &[Vec<Complex64>]| {
            let raw = DenseMatrix::from_fn(b, |i, j| dot(&y[i], &a[j]));
            DenseMatrix::from_fn(b, |i, j| (raw.get(i, j) + raw.get(j, i).conj()) * 0.5)
        };
        let (kp, mp) = (herm(&ky), herm(&my));
        let mut req = EigRequest::new(MatrixRef::Dense(&kp), Some(MatrixRef::Dense(&mp)), b);
        req.backend = Backend::Dense;
        req.want_vectors = true;
        let small = lowest_dense(&req).ok()?;
        let coeffs = small.vectors?;
        x = coeffs
            .iter()
            .map(|c| {
                let mut v = vec![Complex64::new(0.0, 0.0); y[0].len()];
                for (cj, yj) in c.iter().zip(&y) {
                    for (vi, yi) in v.iter_mut().zip(yj) {
                        *vi += yi * cj;
                    }
                }
                let nv = dot(&v, &m.matvec(&v)).re.sqrt();
                v.iter_mut().for_each(|e| *e /= nv);
                v
            })
            .collect();
        out = small.eigenvalues.iter().copied().zip(x.iter().cloned()).collect();
    }
    out.iter().all(|(l, _)| l.is_finite()).then_some(out)
}

/// Starting shift: `-1` for positive semidefinite `K`, otherwise the
/// Gershgorin bound of `K` scaled by the mass matrix when that is available.
pub fn default_shift(k: &SparseMatrix, m: &SparseMatrix) -> f64 {
    let kl = k.gershgorin_lower();
    if kl >= 0.0 {
        return -1.0;
    }
    let mu = m.gershgorin_lower();
    if mu > 0.0 {
        kl / mu - 1.0
    } else {
        kl - 1.0
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

/// One Lanczos sweep in the complement of `locked`; returns Ritz pairs whose
/// residual in the shift-inverted operator is below `tol` relative to `θ`.
#[allow(clippy::too_many_arguments)]
fn lanczos_run(
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    m_dot: &dyn Fn(&[Complex64], &[Complex64]) -> Complex64,
    m: &SparseMatrix,
    locked: &[Locked],
    steps: usize,
    need: usize,
    rng: &mut ChaCha8Rng,
    tol: f64,
) -> Vec<Locked> {
    let n = m.dim();
    let orth = |v: &mut Vec<Complex64>, basis: &[Vec<Complex64>], mbasis: &[Vec<Complex64>]| {
        for _ in 0..2 {
            for (b, mb) in basis.iter().zip(mbasis) {
                let c = dot(mb, v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
    };
    let lx: Vec<Vec<Complex64>> = locked.iter().map(|l| l.x.clone()).collect();
    let lmx: Vec<Vec<Complex64>> = lx.iter().map(|x| m.matvec(x)).collect();
    let mut v = random_unit(n, rng);
    orth(&mut v, &lx, &lmx);
    let nv = m_dot(&v, &v).re.sqrt();
    v.iter_mut().for_each(|x| *x /= nv);

    let mut q: Vec<Vec<Complex64>> = vec![v];
    let mut mq: Vec<Vec<Complex64>> = vec![m.matvec(&q[0])];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let tight = (tol * 1e-6).max(1e-14);
    for j in 0..steps {
        let mut w = apply(&q[j]);
        let a = dot(&mq[j], &w).re;
        alpha.push(a);
        // Krylov basis first, locked set last: the reverse order feeds locked
        // components of earlier q back into w, where they grow each step.
        for _ in 0..2 {
            orth(&mut w, &q, &mq);
            orth(&mut w, &lx, &lmx);
        }
        let mw = m.matvec(&w);
        let b = dot(&w, &mw).re.max(0.0).sqrt();
        let last = j + 1 == steps;
        let check = last || (j + 1 >= need && (j + 1) % 5 == 0);
        if check || b < 1e-14 * a.abs() {
            let (theta, s) = tridiag_eigen(&alpha, &beta);
            let jj = theta.len();
            let top = need.min(jj);
            let ok = (0..top).all(|r| {
                let idx = jj - 1 - r;
                (b * s[(jj - 1, idx)]).abs() <= tight * theta[idx].abs()
            });
            if ok || last || b < 1e-14 * a.abs() {
                let mut out = Vec::new();
                for r in 0..jj {
                    let idx = jj - 1 - r;
                    if (b * s[(jj - 1, idx)]).abs() > tight * theta[idx].abs() && !(b < 1e-14 * a.abs()) {
                        break;
                    }
                    let mut x = vec![Complex64::new(0.0, 0.0); n];
                    for (c, qc) in q.iter().enumerate().take(jj) {
                        let coef = s[(c, idx)];
                        for (xi, qi) in x.iter_mut().zip(qc) {
                            *xi += qi * coef;
                        }
                    }
                    let nx = m_dot(&x, &x).re.sqrt();
                    x.iter_mut().for_each(|v| *v /= nx);
                    out.push(Locked { theta: theta[idx], x });
                    if out.len() >= need + 2 {
                        break;
                    }
                }
                return out;
            }
        }
        if b < 1e-300 {
            break;
        }
        beta.push(b);
        let v: Vec<Complex64> = w.iter().map(|x| x / b).collect();
        mq.push(mw.iter().map(|x| x / b).collect());
        q.push(v);
    }
    Vec::new()
}
