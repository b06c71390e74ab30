//! Exact spectra of `-f''` on `(0, δ)` with Robin or Dirichlet ends.
//!
//! The left solution `f = c - α s`, with `c = cos(√E t)` and
//! `s = sin(√E t)/√E`, is entire in `E`. Eigenvalues are located by the
//! Prüfer angle of that solution at `t = δ`, which is monotone in `E`, so
//! every root is isolated by bisection without a sign-change scan.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Model1DError {
    #[error("interval length must be positive, got {0}")]
    Delta(f64),
    #[error("eigenvalue count must be at least 1")]
    Count,
    #[error("could not bracket eigenvalue {index}: angle {angle} at E = {energy}")]
    Bracket { index: usize, energy: f64, angle: f64 },
}

/// End condition. `Robin(a)` means the form carries `-a |f(end)|²`, i.e.
/// `f'(0) + a f(0) = 0` on the left and `f'(δ) - a f(δ) = 0` on the right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Dirichlet,
    Robin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model1DParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl Model1DParams {
    pub fn new(alpha: f64, beta: f64, delta: f64) -> Result<Self, Model1DError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Model1DError::Delta(delta));
        }
        Ok(Model1DParams { alpha, beta, delta })
    }
}

/// Normalised eigenfunction in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eigenfunction {
    /// `c1 cos(k t) + c2 sin(k t)`.
    Oscillatory { k: f64, c1: f64, c2: f64 },
    /// `a e^{-κ t} + b e^{-κ (δ - t)}`.
    Decaying { kappa: f64, a: f64, b: f64, delta: f64 },
    /// `c0 + c1 t`.
    Linear { c0: f64, c1: f64 },
}

impl Eigenfunction {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Eigenfunction::Oscillatory { k, c1, c2 } => c1 * (k * t).cos() + c2 * (k * t).sin(),
            Eigenfunction::Decaying { kappa, a, b, delta } => a * (-kappa * t).exp() + b * (-kappa * (delta - t)).exp(),
            Eigenfunction::Linear { c0, c1 } => c0 + c1 * t,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Eigenfunction::Oscillatory { k, c1, c2 } => k * (-c1 * (k * t).sin() + c2 * (k * t).cos()),
            Eigenfunction::Decaying { kappa, a, b, delta } => {
                kappa * (-a * (-kappa * t).exp() + b * (-kappa * (delta - t)).exp())
            }
            Eigenfunction::Linear { c1, .. } => c1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model1DSpectrum {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub eigenfunctions: Vec<Eigenfunction>,
    /// `|ψ(0)|²` for the normalised ground state.
    pub boundary_value_sq_at_0: f64,
    /// Set when the Robin strengths fall outside `α > β > 0`, where the
    /// negative-root structure is not covered by the standard analysis.
    pub outside_analyzed_regime: bool,
}

/// Problem on `(0, δ)` with the given end conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalProblem {
    pub left: Boundary,
    pub right: Boundary,
    pub delta: f64,
}

fn reduce_pi(a: f64) -> f64 {
    let mut a = a;
    if a < 0.0 {
        a += PI;
    }
    if a >= PI {
        a -= PI;
    }
    a
}

impl IntervalProblem {
    /// Prüfer angle of the left solution at `t = δ`; continuous and
    /// increasing in `E`. For `E < 0` the solution is divided by `cosh(κδ)`.
    fn prufer_angle(&self, e: f64) -> f64 {
        let d = self.delta;
        if e > 0.0 {
            let k = e.sqrt();
            let omega0 = match self.left {
                Boundary::Dirichlet => 0.0,
                Boundary::Robin(a) => f64::atan2(k, -a),
            };
            let omega = omega0 + k * d;
            let m = (omega / PI).floor();
            let frac = omega - m * PI;
            m * PI + f64::atan2(frac.sin() / k, frac.cos())
        } else if e < 0.0 {
            let kappa = (-e).sqrt();
            let th = (kappa * d).tanh();
            let (f, fp) = match self.left {
                Boundary::Dirichlet => (th / kappa, 1.0),
                Boundary::Robin(a) => (1.0 - a * th / kappa, kappa * th - a),
            };
            let m = if f < 0.0 { PI } else { 0.0 };
            m + reduce_pi(f64::atan2(f, fp))
        } else {
            let (f, fp) = match self.left {
                Boundary::Dirichlet => (d, 1.0),
                Boundary::Robin(a) => (1.0 - a * d, -a),
            };
            let m = if f < 0.0 { PI } else { 0.0 };
            m + reduce_pi(f64::atan2(f, fp))
        }
    }

    fn target_angle(&self) -> f64 {
        match self.right {
            Boundary::Dirichlet => PI,
            Boundary::Robin(b) => f64::atan2(1.0, b),
        }
    }

    /// Right boundary functional on the left solution, and the scale it is
    /// measured against.
    pub fn secular(&self, e: f64) -> (f64, f64) {
        let d = self.delta;
        // (c, s, -E s) with the E < 0 branch divided by cosh(κδ).
        let (c, s, es) = if e > 0.0 {
            let k = e.sqrt();
            let (sn, cs) = (k * d).sin_cos();
            (cs, sn / k, -k * sn)
        } else if e < 0.0 {
            let kappa = (-e).sqrt();
            let th = (kappa * d).tanh();
            (1.0, th / kappa, kappa * th)
        } else {
            (1.0, d, 0.0)
        };
        // f = lc c + ls s, f' = lc (-E s) + ls c
        let (lc, ls) = match self.left {
            Boundary::Dirichlet => (0.0, 1.0),
            Boundary::Robin(a) => (1.0, -a),
        };
        match self.right {
            Boundary::Dirichlet => {
                // Normalise by the size of the boundary data (f, f'/w) at δ,
                // since both terms of f(δ) can be small at a root.
                let w = e.abs().sqrt().max(1.0 / d);
                let fp = lc * es + ls * c;
                (lc * c + ls * s, (lc * c).abs() + (ls * s).abs() + fp.abs() / w)
            }
            Boundary::Robin(b) => {
                let terms = [lc * es, ls * c, -b * lc * c, -b * ls * s];
                (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
            }
        }
    }

    pub fn residual(&self, e: f64) -> f64 {
        let (v, scale) = self.secular(e);
        if scale == 0.0 {
            0.0
        } else {
            v.abs() / scale
        }
    }

    fn angle_gap(&self, e: f64, index: usize) -> f64 {
        self.prufer_angle(e) - self.target_angle() - index as f64 * PI
    }

    fn strength_scale(&self) -> f64 {
        let s = |b: Boundary| match b {
            Boundary::Dirichlet => 0.0,
            Boundary::Robin(a) => a.abs(),
        };
        s(self.left) + s(self.right) + 1.0 / self.delta
    }

    /// The `index`-th eigenvalue (0-based).
    pub fn eigenvalue(&self, index: usize) -> Result<f64, Model1DError> {
        let scale = self.strength_scale();
        let mut lo = -(scale * scale) - 1.0;
        let mut tries = 0;
        while self.angle_gap(lo, index) >= 0.0 {
            lo *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Model1DError::Bracket { index, energy: lo, angle: self.prufer_angle(lo) });
            }
        }
        let top = (index as f64 + 2.0) * PI / self.delta;
        let mut hi = top * top + scale * scale + 1.0;
        tries = 0;
        while self.angle_gap(hi, index) <= 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Model1DError::Bracket { index, energy: hi, angle: self.prufer_angle(hi) });
            }
        }
        if lo < 0.0 && hi > 0.0 && self.secular(0.0).0 == 0.0 {
            let g0 = self.angle_gap(-f64::MIN_POSITIVE, index);
            let g1 = self.angle_gap(f64::MIN_POSITIVE, index);
            if g0 <= 0.0 && g1 >= 0.0 {
                return Ok(0.0);
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.angle_gap(mid, index) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (rl, rh) = (self.residual(lo), self.residual(hi));
        Ok(if rl <= rh { lo } else { hi })
    }

    pub fn eigenfunction(&self, e: f64) -> Eigenfunction {
        let d = self.delta;
        if e > 0.0 {
            let k = e.sqrt();
            let (c1, c2) = match self.left {
                Boundary::Dirichlet => (0.0, 1.0),
                Boundary::Robin(a) => (1.0, -a / k),
            };
            let (s2, c2kd) = ((2.0 * k * d).sin(), (k * d).sin());
            let cc = 0.5 * d + s2 / (4.0 * k);
            let ss = 0.5 * d - s2 / (4.0 * k);
            let cs = c2kd * c2kd / (2.0 * k);
            let norm = (c1 * c1 * cc + c2 * c2 * ss + 2.0 * c1 * c2 * cs).sqrt();
            Eigenfunction::Oscillatory { k, c1: c1 / norm, c2: c2 / norm }
        } else if e < 0.0 {
            let kappa = (-e).sqrt();
            let ex = (-kappa * d).exp();
            // a (κ - α) = b e^{-κδ} (κ + α) on the left; b (κ - β) = a e^{-κδ} (κ + β) on the right.
            let (l1, l2) = match self.left {
                Boundary::Dirichlet => (1.0, -1.0),
                Boundary::Robin(a) => (kappa - a, kappa + a),
            };
            let (r1, r2) = match self.right {
                Boundary::Dirichlet => (1.0, -1.0),
                Boundary::Robin(b) => (kappa - b, kappa + b),
            };
            let lw = l1.abs() / l1.hypot(l2);
            let rw = r1.abs() / r1.hypot(r2);
            let (a, b) = if lw >= rw { (ex * l2 / l1, 1.0) } else { (1.0, ex * r2 / r1) };
            let one_minus = -(-2.0 * kappa * d).exp_m1();
            let norm2 = (a * a + b * b) * one_minus / (2.0 * kappa) + 2.0 * a * b * d * ex;
            let norm = norm2.sqrt();
            Eigenfunction::Decaying { kappa, a: a / norm, b: b / norm, delta: d }
        } else {
            let (c0, c1) = match self.left {
                Boundary::Dirichlet => (0.0, 1.0),
                Boundary::Robin(a) => (1.0, -a),
            };
            let norm = (c0 * c0 * d + c0 * c1 * d * d + c1 * c1 * d * d * d / 3.0).sqrt();
            Eigenfunction::Linear { c0: c0 / norm, c1: c1 / norm }
        }
    }

    pub fn spectrum(&self, jmax: usize) -> Result<Model1DSpectrum, Model1DError> {
        if jmax == 0 {
            return Err(Model1DError::Count);
        }
        if !(self.delta > 0.0) {
            return Err(Model1DError::Delta(self.delta));
        }
        let mut eigenvalues = Vec::with_capacity(jmax);
        for j in 0..jmax {
            eigenvalues.push(self.eigenvalue(j)?);
        }
        let residuals = eigenvalues.iter().map(|&e| self.residual(e)).collect();
        let eigenfunctions: Vec<Eigenfunction> = eigenvalues.iter().map(|&e| self.eigenfunction(e)).collect();
        let psi0 = eigenfunctions[0].value(0.0);
        Ok(Model1DSpectrum {
            eigenvalues,
            residuals,
            eigenfunctions,
            boundary_value_sq_at_0: psi0 * psi0,
            outside_analyzed_regime: false,
        })
    }
}

/// Robin at 0, Dirichlet at δ.
pub fn spectrum_s(p: &Model1DParams, jmax: usize) -> Result<Model1DSpectrum, Model1DError> {
    IntervalProblem { left: Boundary::Robin(p.alpha), right: Boundary::Dirichlet, delta: p.delta }.spectrum(jmax)
}

/// Robin at both ends.
pub fn spectrum_sprime(p: &Model1DParams, jmax: usize) -> Result<Model1DSpectrum, Model1DError> {
    let mut spec = IntervalProblem { left: Boundary::Robin(p.alpha), right: Boundary::Robin(p.beta), delta: p.delta }
        .spectrum(jmax)?;
    spec.outside_analyzed_regime = !(p.alpha > p.beta && p.beta > 0.0);
    Ok(spec)
}

/// `E_1(S) + α²` evaluated without cancellation, for `αδ > 1`.
///
/// The ground state is `-κ²` with `κ = α tanh(κδ)`, so
/// `α² - κ² = (α - κ)(α + κ)` and `α - κ = 2α e^{-2κδ} / (1 + e^{-2κδ})`.
pub fn ground_shift_s(p: &Model1DParams) -> Result<Option<f64>, Model1DError> {
    if p.alpha * p.delta <= 1.0 {
        return Ok(None);
    }
    let e1 = spectrum_s(p, 1)?.eigenvalues[0];
    let mut kappa = (-e1).sqrt();
    for _ in 0..4 {
        kappa = p.alpha * (kappa * p.delta).tanh();
    }
    let q = (-2.0 * kappa * p.delta).exp();
    let gap = 2.0 * p.alpha * q / (1.0 + q);
    Ok(Some(-gap * (p.alpha + kappa)))
}

/// Constants of a two-sided Weyl bound `b⁻ j² - b₀ ≤ E_j(S') ≤ b⁺ j²`, taken
/// from the Dirichlet-at-0 and Neumann-at-0 comparison spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylBounds {
    pub b_plus: f64,
    pub b_minus: f64,
    pub b_zero: f64,
}

/// Bounds valid for `j` in `2..=jmax` for every `α`, by interlacing with the
/// Neumann and Dirichlet problems at 0.
pub fn weyl_bounds(beta: f64, delta: f64, jmax: usize) -> Result<WeylBounds, Model1DError> {
    let dir = IntervalProblem { left: Boundary::Dirichlet, right: Boundary::Robin(beta), delta }.spectrum(jmax)?;
    let neu = IntervalProblem { left: Boundary::Robin(0.0), right: Boundary::Robin(beta), delta }.spectrum(jmax)?;
    let b_minus = PI * PI / (2.0 * delta * delta);
    let mut b_plus: f64 = 0.0;
    let mut b_zero: f64 = 0.0;
    for j in 2..=jmax {
        let jf = (j * j) as f64;
        b_plus = b_plus.max(dir.eigenvalues[j - 1] / jf);
        b_zero = b_zero.max(b_minus * jf - neu.eigenvalues[j - 2]);
    }
    Ok(WeylBounds { b_plus, b_minus, b_zero })
}
