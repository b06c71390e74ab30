//! Gamma-matrix families built by the even/odd doubling recursion, with exact
//! entries, plus the maps Γ(x), λ(x), the boundary matrix B and projectors P±.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub const MAX_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliffordError {
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    Dimension(usize),
    #[error("vector has length {got}, expected {expected}")]
    Mismatch { expected: usize, got: usize },
    #[error("normal has norm {0}, expected 1")]
    NotUnit(f64),
    #[error("lambda block needs an even dimension, got {0}")]
    Parity(usize),
}

/// Rational number `num / 2^exp`, kept in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: i64,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: i64, exp: u32) -> Self {
        let mut d = Dyadic { num, exp };
        d.reduce();
        d
    }

    pub fn int(num: i64) -> Self {
        Dyadic { num, exp: 0 }
    }

    fn reduce(&mut self) {
        if self.num == 0 {
            self.exp = 0;
            return;
        }
        while self.exp > 0 && self.num % 2 == 0 {
            self.num /= 2;
            self.exp -= 1;
        }
    }

    pub fn half(self) -> Self {
        Dyadic::new(self.num, self.exp + 1)
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / (1u64 << self.exp) as f64
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, 1u64 << self.exp)
        }
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, o: Dyadic) -> Dyadic {
        let e = self.exp.max(o.exp);
        let a = self.num << (e - self.exp);
        let b = o.num << (e - o.exp);
        Dyadic::new(a + b, e)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic { num: -self.num, exp: self.exp }
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, o: Dyadic) -> Dyadic {
        self + (-o)
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, o: Dyadic) -> Dyadic {
        Dyadic::new(self.num * o.num, self.exp + o.exp)
    }
}

/// Complex number with dyadic real and imaginary parts.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Exact {
    pub re: Dyadic,
    pub im: Dyadic,
}

impl Exact {
    pub const ZERO: Exact = Exact { re: Dyadic::ZERO, im: Dyadic::ZERO };
    pub const ONE: Exact = Exact { re: Dyadic::ONE, im: Dyadic::ZERO };
    pub const I: Exact = Exact { re: Dyadic::ZERO, im: Dyadic::ONE };

    pub fn int(re: i64, im: i64) -> Self {
        Exact { re: Dyadic::int(re), im: Dyadic::int(im) }
    }

    pub fn conj(self) -> Self {
        Exact { re: self.re, im: -self.im }
    }

    pub fn half(self) -> Self {
        Exact { re: self.re.half(), im: self.im.half() }
    }

    pub fn is_zero(self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}+{:?}i)", self.re, self.im)
    }
}

impl Add for Exact {
    type Output = Exact;
    fn add(self, o: Exact) -> Exact {
        Exact { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, o: Exact) -> Exact {
        Exact { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact { re: -self.re, im: -self.im }
    }
}

impl Mul for Exact {
    type Output = Exact;
    fn mul(self, o: Exact) -> Exact {
        Exact { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

/// Dense square matrix with exact entries, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ExactMatrix {
    size: usize,
    data: Vec<Exact>,
}

impl fmt::Debug for ExactMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries((0..self.size).map(|i| &self.data[i * self.size..(i + 1) * self.size])).finish()
    }
}

impl ExactMatrix {
    pub fn zeros(size: usize) -> Self {
        ExactMatrix { size, data: vec![Exact::ZERO; size * size] }
    }

    pub fn identity(size: usize) -> Self {
        Self::scalar(size, Exact::ONE)
    }

    pub fn scalar(size: usize, z: Exact) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.data[i * size + i] = z;
        }
        m
    }

    pub fn from_rows(rows: &[&[Exact]]) -> Self {
        let size = rows.len();
        let mut m = Self::zeros(size);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), size, "ragged rows");
            m.data[i * size..(i + 1) * size].copy_from_slice(r);
        }
        m
    }

    /// `[[a, b], [c, d]]` assembled from equally sized blocks.
    pub fn blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let h = a.size;
        let mut m = Self::zeros(2 * h);
        for i in 0..h {
            for j in 0..h {
                m.set(i, j, a.get(i, j));
                m.set(i, j + h, b.get(i, j));
                m.set(i + h, j, c.get(i, j));
                m.set(i + h, j + h, d.get(i, j));
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> Exact {
        self.data[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, z: Exact) {
        self.data[i * self.size + j] = z;
    }

    pub fn adjoint(&self) -> Self {
        let n = self.size;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(j, i, self.get(i, j).conj());
            }
        }
        m
    }

    pub fn scale(&self, z: Exact) -> Self {
        ExactMatrix { size: self.size, data: self.data.iter().map(|&a| a * z).collect() }
    }

    pub fn trace(&self) -> Exact {
        (0..self.size).fold(Exact::ZERO, |acc, i| acc + self.get(i, i))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.size).all(|i| (0..self.size).all(|j| i == j || self.get(i, j).is_zero()))
    }

    pub fn to_complex(&self) -> CMatrix {
        CMatrix { size: self.size, data: self.data.iter().map(|z| z.to_c64()).collect() }
    }
}

impl Add for &ExactMatrix {
    type Output = ExactMatrix;
    fn add(self, o: &ExactMatrix) -> ExactMatrix {
        ExactMatrix { size: self.size, data: self.data.iter().zip(&o.data).map(|(&a, &b)| a + b).collect() }
    }
}

impl Sub for &ExactMatrix {
    type Output = ExactMatrix;
    fn sub(self, o: &ExactMatrix) -> ExactMatrix {
        ExactMatrix { size: self.size, data: self.data.iter().zip(&o.data).map(|(&a, &b)| a - b).collect() }
    }
}

impl Mul for &ExactMatrix {
    type Output = ExactMatrix;
    fn mul(self, o: &ExactMatrix) -> ExactMatrix {
        let n = self.size;
        let mut m = ExactMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = o.get(k, j);
                    if !b.is_zero() {
                        let idx = i * n + j;
                        m.data[idx] = m.data[idx] + a * b;
                    }
                }
            }
        }
        m
    }
}

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    size: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(size: usize) -> Self {
        CMatrix { size, data: vec![Complex64::new(0.0, 0.0); size * size] }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.data[i * size + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, z: Complex64) {
        self.data[i * self.size + j] = z;
    }

    pub fn adjoint(&self) -> Self {
        let n = self.size;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(j, i, self.get(i, j).conj());
            }
        }
        m
    }

    pub fn scale(&self, z: Complex64) -> Self {
        CMatrix { size: self.size, data: self.data.iter().map(|&a| a * z).collect() }
    }

    pub fn add_scaled(&mut self, other: &CMatrix, z: Complex64) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * z;
        }
    }

    pub fn matmul(&self, o: &CMatrix) -> CMatrix {
        let n = self.size;
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    m.data[i * n + j] += a * o.get(k, j);
                }
            }
        }
        m
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.size;
        (0..n).map(|i| (0..n).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    /// Largest entrywise modulus of `self - o`.
    pub fn max_diff(&self, o: &CMatrix) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Which sign is taken in front of the odd-step product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SignChoice {
    #[default]
    Plus,
    Minus,
}

impl SignChoice {
    fn factor(self) -> Exact {
        match self {
            SignChoice::Plus => Exact::ONE,
            SignChoice::Minus => -Exact::ONE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CliffordRep {
    pub n: usize,
    pub size: usize,
    pub gammas: Vec<ExactMatrix>,
    pub sign_choice: SignChoice,
}

pub fn build_gammas(n: usize) -> Result<CliffordRep, CliffordError> {
    build_gammas_with(n, SignChoice::Plus)
}

pub fn build_gammas_with(n: usize, sign: SignChoice) -> Result<CliffordRep, CliffordError> {
    if n == 0 || n > MAX_DIM {
        return Err(CliffordError::Dimension(n));
    }
    let mut gammas = vec![ExactMatrix::identity(1)];
    if n >= 2 {
        let sx = ExactMatrix::from_rows(&[&[Exact::ZERO, Exact::ONE], &[Exact::ONE, Exact::ZERO]]);
        let sy = ExactMatrix::from_rows(&[&[Exact::ZERO, -Exact::I], &[Exact::I, Exact::ZERO]]);
        gammas = vec![sx, sy];
    }
    let mut dim = gammas.len().max(1);
    while dim < n {
        if dim % 2 == 0 {
            let m = dim / 2;
            let mut prod = ExactMatrix::identity(gammas[0].size());
            for g in &gammas {
                prod = &prod * g;
            }
            let mut phase = sign.factor();
            for _ in 0..m {
                phase = phase * Exact::I;
            }
            gammas.push(prod.scale(phase));
        } else {
            let h = gammas[0].size();
            let zero = ExactMatrix::zeros(h);
            let mut next: Vec<ExactMatrix> = gammas.iter().map(|g| ExactMatrix::blocks(&zero, g, g, &zero)).collect();
            let ii = ExactMatrix::scalar(h, Exact::I);
            next.push(ExactMatrix::blocks(&zero, &ii.scale(-Exact::ONE), &ii, &zero));
            gammas = next;
        }
        dim += 1;
    }
    let size = gammas[0].size();
    Ok(CliffordRep { n, size, gammas, sign_choice: sign })
}

impl CliffordRep {
    /// Checks Hermiticity and `γ_j γ_k + γ_k γ_j = 2 δ_jk I` with exact arithmetic.
    pub fn anticommutation_failures(&self) -> Vec<(usize, usize)> {
        let id2 = ExactMatrix::scalar(self.size, Exact::int(2, 0));
        let zero = ExactMatrix::zeros(self.size);
        let mut bad = Vec::new();
        for j in 0..self.gammas.len() {
            if self.gammas[j].adjoint() != self.gammas[j] {
                bad.push((j, j));
                continue;
            }
            for k in j..self.gammas.len() {
                let (a, b) = (&self.gammas[j], &self.gammas[k]);
                let ac = &(a * b) + &(b * a);
                let want = if j == k { &id2 } else { &zero };
                if &ac != want {
                    bad.push((j, k));
                }
            }
        }
        bad
    }

    fn check_len(&self, x: &[f64]) -> Result<(), CliffordError> {
        if x.len() != self.n {
            return Err(CliffordError::Mismatch { expected: self.n, got: x.len() });
        }
        Ok(())
    }
}

/// `Γ(x) = Σ x_j γ_j`.
pub fn gamma_of(rep: &CliffordRep, x: &[f64]) -> Result<CMatrix, CliffordError> {
    rep.check_len(x)?;
    let mut m = CMatrix::zeros(rep.size);
    for (g, &xj) in rep.gammas.iter().zip(x) {
        m.add_scaled(&g.to_complex(), Complex64::new(xj, 0.0));
    }
    Ok(m)
}

/// `Γ` restricted to the first `x.len()` generators of `rep`.
fn partial_gamma(rep: &CliffordRep, x: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(rep.size);
    for (g, &xj) in rep.gammas.iter().zip(x) {
        m.add_scaled(&g.to_complex(), Complex64::new(xj, 0.0));
    }
    m
}

#[derive(Clone, Debug)]
pub struct BoundaryProjectorData {
    pub b: CMatrix,
    pub p_plus: CMatrix,
    pub p_minus: CMatrix,
    pub nu: Vec<f64>,
}

const UNIT_TOL: f64 = 1e-14;

/// `B = -i α_{n+1} Γ(ν)` with `α_j` taken from the representation for `n + 1`.
pub fn boundary_matrix(rep_ambient: &CliffordRep, nu: &[f64]) -> Result<BoundaryProjectorData, CliffordError> {
    if nu.len() + 1 != rep_ambient.n {
        return Err(CliffordError::Mismatch { expected: rep_ambient.n - 1, got: nu.len() });
    }
    let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(CliffordError::NotUnit(norm));
    }
    let alpha = rep_ambient.gammas[rep_ambient.n - 1].to_complex();
    let b = alpha.matmul(&partial_gamma(rep_ambient, nu)).scale(Complex64::new(0.0, -1.0));
    let id = CMatrix::identity(rep_ambient.size);
    let mut p_plus = id.clone();
    p_plus.add_scaled(&b, Complex64::new(1.0, 0.0));
    let p_plus = p_plus.scale(Complex64::new(0.5, 0.0));
    let mut p_minus = id;
    p_minus.add_scaled(&b, Complex64::new(-1.0, 0.0));
    let p_minus = p_minus.scale(Complex64::new(0.5, 0.0));
    Ok(BoundaryProjectorData { b, p_plus, p_minus, nu: nu.to_vec() })
}

/// Exact boundary matrix for a coordinate normal `±e_axis`.
pub fn boundary_matrix_exact(rep_ambient: &CliffordRep, axis: usize, positive: bool) -> ExactMatrix {
    let alpha = &rep_ambient.gammas[rep_ambient.n - 1];
    let g = &rep_ambient.gammas[axis];
    let s = if positive { -Exact::I } else { Exact::I };
    (alpha * g).scale(s)
}

/// `λ(x) = Σ_{j<2m} γ_j(2m-1) x_j - i x_{2m} I`, the upper-right block of `Γ_{2m}(x)`.
pub fn lambda_block(rep: &CliffordRep, x: &[f64]) -> Result<CMatrix, CliffordError> {
    if rep.n % 2 != 0 {
        return Err(CliffordError::Parity(rep.n));
    }
    rep.check_len(x)?;
    let n = rep.n;
    let half = rep.size / 2;
    let mut lam = CMatrix::zeros(half);
    if n > 2 {
        let lower = build_gammas_with(n - 1, rep.sign_choice)?;
        lam = partial_gamma(&lower, &x[..n - 1]);
    } else {
        lam.set(0, 0, Complex64::new(x[0], 0.0));
    }
    let mut shift = CMatrix::identity(half);
    shift = shift.scale(Complex64::new(0.0, -x[n - 1]));
    lam.add_scaled(&shift, Complex64::new(1.0, 0.0));
    Ok(lam)
}

/// Rebuilds `[[0, λ], [λ*, 0]]`.
pub fn from_lambda(lam: &CMatrix) -> CMatrix {
    let h = lam.size();
    let mut m = CMatrix::zeros(2 * h);
    let adj = lam.adjoint();
    for i in 0..h {
        for j in 0..h {
            m.set(i, j + h, lam.get(i, j));
            m.set(i + h, j, adj.get(i, j));
        }
    }
    m
}
