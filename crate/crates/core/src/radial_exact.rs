//! Exact spectra of rotationally symmetric problems from secular equations:
//! the MIT-bag operator `A_m` on a disk and on a ball, the mass-jump operator
//! `B_{m,M}` on the plane, and closed-form spectra of the squared intrinsic
//! Dirac operator on a circle and a round sphere.
//!
//! Disk channels use the ansatz `u = (f(r) e^{ikθ}, i g(r) e^{i(k+1)θ})` with
//! mass term `m σ_z`, for which
//!
//! ```text
//! f' − k f / r = −(E + m) g,     g' + (k + 1) g / r = (E − m) f,
//! ```
//!
//! and the boundary condition `u = B u` reads `f(R) = g(R)`. Regular
//! solutions are written with `Ĵ_ν = J_ν(pR) / p^ν`, `p² = E² − m²`, an
//! entire function of `p²` that becomes `I_ν(qR) / q^ν` for `p² = −q² < 0`.
//! This removes both the branch switch at `E² = m²` and the spurious root at
//! `E = −m` of the textbook form. Ball channels use the relativistic quantum
//! number `κ ≠ 0` with the same reduction in spherical Bessel functions.

use std::f64::consts::PI;

use thiserror::Error;

use crate::specfun::{
    bessel_i_scaled_all, bessel_j_all, bessel_k_scaled_all, sph_bessel_i_scaled_all, sph_bessel_j_all, MAX_ARG,
    MAX_ORDER,
};

/// Default channel caps: `k ∈ [−cap−1, cap]` on the disk, `1 ≤ |κ| ≤ cap` on the ball.
pub const DISK_CHANNEL_CAP: usize = 12;
pub const BALL_CHANNEL_CAP: usize = 6;
/// Scan points per half-period `π / R` of the oscillatory regime.
const SCAN_DENSITY: f64 = 32.0;
/// Grid points closer than this (in `q R`) to the jump threshold are skipped.
const THRESHOLD_GAP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("invalid problem: {0}")]
    Parameters(String),
    #[error("search window |E| ≤ {0} exceeds the Bessel argument range")]
    WindowExceeded(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Disk { radius: f64 },
    Ball { radius: f64 },
}

impl Geometry {
    pub fn radius(&self) -> f64 {
        match *self {
            Geometry::Disk { radius } | Geometry::Ball { radius } => radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProblem {
    pub geometry: Geometry,
    /// Mass inside the domain.
    pub m: f64,
    /// Mass outside the disk; only for the jump problem.
    pub exterior_mass: Option<f64>,
    pub channel_cap: usize,
    /// Number of eigenvalues of the square wanted, counted with multiplicity.
    pub jmax: usize,
}

impl RadialProblem {
    pub fn disk(radius: f64, m: f64, jmax: usize) -> Self {
        RadialProblem {
            geometry: Geometry::Disk { radius },
            m,
            exterior_mass: None,
            channel_cap: DISK_CHANNEL_CAP,
            jmax,
        }
    }

    pub fn disk_jump(radius: f64, m: f64, exterior_mass: f64, jmax: usize) -> Self {
        RadialProblem { exterior_mass: Some(exterior_mass), ..Self::disk(radius, m, jmax) }
    }

    pub fn ball(radius: f64, m: f64, jmax: usize) -> Self {
        RadialProblem {
            geometry: Geometry::Ball { radius },
            m,
            exterior_mass: None,
            channel_cap: BALL_CHANNEL_CAP,
            jmax,
        }
    }

    fn validate(&self) -> Result<(), RadialError> {
        let r = self.geometry.radius();
        if !(r > 0.0 && r.is_finite()) {
            return Err(RadialError::Parameters(format!("radius must be positive, got {r}")));
        }
        if !self.m.is_finite() {
            return Err(RadialError::Parameters("mass must be finite".into()));
        }
        if self.jmax == 0 {
            return Err(RadialError::Parameters("jmax must be positive".into()));
        }
        let cap_limit = match self.geometry {
            Geometry::Disk { .. } => MAX_ORDER - 1,
            Geometry::Ball { .. } => MAX_ORDER,
        };
        if self.channel_cap == 0 || self.channel_cap > cap_limit {
            return Err(RadialError::Parameters(format!("channel cap must be in 1..={cap_limit}")));
        }
        if let Some(mm) = self.exterior_mass {
            if !(mm.is_finite() && mm > 0.0) {
                return Err(RadialError::Parameters(format!("exterior mass must be positive, got {mm}")));
            }
            if matches!(self.geometry, Geometry::Ball { .. }) {
                return Err(RadialError::Parameters("jump problems are only set up on the disk".into()));
            }
        }
        Ok(())
    }

    fn channels(&self) -> Vec<i32> {
        let cap = self.channel_cap as i32;
        match self.geometry {
            Geometry::Disk { .. } => (-cap - 1..=cap).collect(),
            Geometry::Ball { .. } => (-cap..=cap).filter(|&k| k != 0).collect(),
        }
    }

    /// Degeneracy of every level of channel `c`.
    fn multiplicity(&self, c: i32) -> usize {
        match self.geometry {
            Geometry::Disk { .. } => 1,
            Geometry::Ball { .. } => 2 * c.unsigned_abs() as usize,
        }
    }

    fn outermost(&self, c: i32) -> bool {
        let cap = self.channel_cap as i32;
        match self.geometry {
            Geometry::Disk { .. } => c == cap || c == -cap - 1,
            Geometry::Ball { .. } => c.abs() == cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialEigenvalue {
    /// `k` on the disk, `κ` on the ball.
    pub channel: i32,
    /// 1-based position within the channel, by increasing square.
    pub index: usize,
    /// Eigenvalue `E` of the operator itself.
    pub energy: f64,
    /// `E²`, the eigenvalue of the square.
    pub square: f64,
    pub multiplicity: usize,
    /// Secular function at the root relative to the size of its terms.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpectrum {
    /// Sorted by square, then channel.
    pub eigenvalues: Vec<RadialEigenvalue>,
    /// Set when a completeness check failed: a root may be missing.
    pub warning: Option<String>,
}

impl RadialSpectrum {
    /// Squares with multiplicities expanded.
    pub fn squares(&self) -> Vec<f64> {
        self.eigenvalues.iter().flat_map(|e| std::iter::repeat_n(e.square, e.multiplicity)).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

/// `Σ_j (sign x²/4)^j / (j! (ν+j)!) / 2^ν`, which is `x^{−ν} J_ν(x)` (sign −1)
/// or `x^{−ν} I_ν(x)` (sign +1).
fn reduced_cylinder_series(nu: usize, x: f64, sign: f64) -> f64 {
    let mut lead = 1.0;
    for i in 1..=nu {
        lead /= 2.0 * i as f64;
    }
    let q = sign * x * x / 4.0;
    let (mut term, mut sum) = (lead, lead);
    for j in 1..60 {
        term *= q / (j as f64 * (nu + j) as f64);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `Σ_s (sign x²/2)^s / (s! (2l+2s+1)!!)`, which is `x^{−l} j_l(x)` or `x^{−l} i_l(x)`.
fn reduced_spherical_series(l: usize, x: f64, sign: f64) -> f64 {
    let mut lead = 1.0;
    for i in 0..=l {
        lead /= (2 * i + 1) as f64;
    }
    let q = sign * x * x / 2.0;
    let (mut term, mut sum) = (lead, lead);
    for s in 1..60 {
        term *= q / (s as f64 * (2 * l + 2 * s + 1) as f64);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Cylinder,
    Spherical,
}

/// `Ĵ_0 ..= Ĵ_nmax` at `z = p²` and radius `r`, all multiplied by one common
/// positive factor (`e^{−qR}` when `z < 0`).
fn reduced_bessel(family: Family, nmax: usize, z: f64, r: f64) -> Vec<f64> {
    let k = z.abs().sqrt();
    let x = k * r;
    let sign = if z >= 0.0 { -1.0 } else { 1.0 };
    if x <= 1.0 {
        let damp = if z < 0.0 { (-x).exp() } else { 1.0 };
        return (0..=nmax)
            .map(|nu| {
                let s = match family {
                    Family::Cylinder => reduced_cylinder_series(nu, x, sign),
                    Family::Spherical => reduced_spherical_series(nu, x, sign),
                };
                damp * s * r.powi(nu as i32)
            })
            .collect();
    }
    let vals = match (family, z >= 0.0) {
        (Family::Cylinder, true) => bessel_j_all(nmax, x),
        (Family::Cylinder, false) => bessel_i_scaled_all(nmax, x),
        (Family::Spherical, true) => sph_bessel_j_all(nmax, x),
        (Family::Spherical, false) => sph_bessel_i_scaled_all(nmax, x),
    };
    let mut pow = 1.0;
    vals.iter()
        .map(|v| {
            let out = v / pow;
            pow *= k;
            out
        })
        .collect()
}

/// Interior boundary values `(f̃, g̃)` of the regular solution, up to a common
/// factor that never changes sign.
fn interior_pair(family: Family, channel: i32, e: f64, m: f64, r: f64) -> (f64, f64) {
    let z = e * e - m * m;
    // Disk k ≥ 0 and ball κ < 0 pair order l with l+1; disk k = −n and ball
    // κ > 0 pair order n with n−1.
    let (ord, upper) = match family {
        Family::Cylinder if channel >= 0 => (channel as usize, true),
        Family::Cylinder => ((-channel) as usize, false),
        Family::Spherical if channel < 0 => ((-channel - 1) as usize, true),
        Family::Spherical => (channel as usize, false),
    };
    if upper {
        let v = reduced_bessel(family, ord + 1, z, r);
        (v[ord], (e - m) * v[ord + 1])
    } else {
        let v = reduced_bessel(family, ord, z, r);
        ((e + m) * v[ord], -v[ord - 1])
    }
}

/// MIT secular function on the disk, `(f̃ − g̃, |f̃| + |g̃|)`.
pub fn disk_secular(k: i32, e: f64, m: f64, r: f64) -> (f64, f64) {
    let (f, g) = interior_pair(Family::Cylinder, k, e, m, r);
    (f - g, f.abs() + g.abs())
}

/// MIT secular function on the ball for relativistic quantum number `κ ≠ 0`.
pub fn ball_secular(kappa: i32, e: f64, m: f64, r: f64) -> (f64, f64) {
    let (f, g) = interior_pair(Family::Spherical, kappa, e, m, r);
    (f - g, f.abs() + g.abs())
}

/// Matching of the interior solution to the exterior one decaying like
/// `K_k(q r)`, `q = √(M² − E²)`: the exterior pair is `(K_k, q K_{k+1} / (E + M))`
/// and continuity of both components means `f̃ q K_{k+1} − g̃ (E + M) K_k = 0`.
/// Returned divided by `K_k` so it stays finite near the threshold.
pub fn disk_jump_secular(k: i32, e: f64, m: f64, mm: f64, r: f64) -> (f64, f64) {
    let (f, g) = interior_pair(Family::Cylinder, k, e, m, r);
    let q = (mm * mm - e * e).sqrt();
    let (kf, kg) = (k.unsigned_abs() as usize, (k + 1).unsigned_abs() as usize);
    let ks = bessel_k_scaled_all(kf.max(kg), q * r);
    let a = f * q * (ks[kg] / ks[kf]);
    let b = g * (e + mm);
    (a - b, a.abs() + b.abs())
}

/// Signed-change bracketing on `grid` and bisection down to adjacent floats.
fn roots_on_grid(f: &dyn Fn(f64) -> f64, grid: &[f64]) -> Vec<f64> {
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..grid.len() {
        if vals[i] == 0.0 {
            out.push(grid[i]);
            continue;
        }
        if i + 1 < grid.len() && vals[i + 1] != 0.0 && (vals[i] < 0.0) != (vals[i + 1] < 0.0) {
            let (mut a, mut b, mut fa) = (grid[i], grid[i + 1], vals[i]);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if (fm < 0.0) == (fa < 0.0) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            out.push(0.5 * (a + b));
        }
    }
    out
}

/// Energies to scan for `|E| ≤ emax`: uniform in `E` inside `|E| < |m|` and
/// uniform in `p` outside, both at `SCAN_DENSITY · refine` points per `π/R`.
fn scan_grid(m: f64, emax: f64, r: f64, refine: f64) -> Vec<f64> {
    let step = PI / (r * SCAN_DENSITY * refine);
    let inner = m.abs().min(emax);
    let mut g = Vec::new();
    let n_in = (2.0 * inner / step).ceil() as usize;
    for i in 0..=n_in {
        g.push(-inner + 2.0 * inner * i as f64 / n_in.max(1) as f64);
    }
    if emax > m.abs() {
        let pmax = (emax * emax - m * m).sqrt();
        let n_out = (pmax / step).ceil() as usize;
        for i in 1..=n_out {
            let p = pmax * i as f64 / n_out as f64;
            let e = (m * m + p * p).sqrt();
            g.push(e);
            g.push(-e);
        }
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

struct ChannelRoot {
    channel: i32,
    energy: f64,
    residual: f64,
}

fn secular(p: &RadialProblem, c: i32, e: f64) -> (f64, f64) {
    let r = p.geometry.radius();
    match (p.geometry, p.exterior_mass) {
        (Geometry::Disk { .. }, None) => disk_secular(c, e, p.m, r),
        (Geometry::Disk { .. }, Some(mm)) => disk_jump_secular(c, e, p.m, mm, r),
        (Geometry::Ball { .. }, _) => ball_secular(c, e, p.m, r),
    }
}

fn all_roots(p: &RadialProblem, emax: f64, refine: f64) -> Vec<ChannelRoot> {
    let r = p.geometry.radius();
    let mut grid = scan_grid(p.m, emax, r, refine);
    if let Some(mm) = p.exterior_mass {
        grid.retain(|e| (mm * mm - e * e).max(0.0).sqrt() * r >= THRESHOLD_GAP);
    }
    let mut out = Vec::new();
    for c in p.channels() {
        let f = |e: f64| secular(p, c, e).0;
        for e in roots_on_grid(&f, &grid) {
            let (v, scale) = secular(p, c, e);
            let residual = if scale > 0.0 { v.abs() / scale } else { v.abs() };
            out.push(ChannelRoot { channel: c, energy: e, residual });
        }
    }
    out
}

/// Eigenvalues of the square of the operator described by `p`, lowest first.
pub fn radial_spectrum(p: &RadialProblem) -> Result<RadialSpectrum, RadialError> {
    p.validate()?;
    let r = p.geometry.radius();
    // Lowest levels of A_m² lie near ((|k|+1)/R)² once m ≤ 0 and above m² once m > 0.
    let mut emax = (p.jmax as f64 / 2.0 + 3.0) / r + p.m.max(0.0);
    let cap = p.exterior_mass.map(|mm| mm * (1.0 - 1e-12));
    let limit = (MAX_ARG / r).hypot(p.m);
    loop {
        let window = cap.map_or(emax, |c| emax.min(c));
        // Oscillatory arguments are capped; the modified-Bessel regime is scaled.
        if (window * window - p.m * p.m).max(0.0).sqrt() * r > MAX_ARG {
            return Err(RadialError::WindowExceeded(window));
        }
        let roots = all_roots(p, window, 1.0);
        let count: usize = roots.iter().map(|x| p.multiplicity(x.channel)).sum();
        let at_cap = cap.is_some_and(|c| window >= c);
        if count >= p.jmax || at_cap || window >= limit {
            let mut warning = None;
            let fine = all_roots(p, window, 2.0);
            if fine.len() != roots.len() {
                warning = Some(format!("root count changed from {} to {} on a finer scan", roots.len(), fine.len()));
            }
            return Ok(assemble(p, fine, warning));
        }
        emax *= 1.5;
    }
}

fn assemble(p: &RadialProblem, roots: Vec<ChannelRoot>, mut warning: Option<String>) -> RadialSpectrum {
    let mut eig: Vec<RadialEigenvalue> = roots
        .into_iter()
        .map(|x| RadialEigenvalue {
            channel: x.channel,
            index: 0,
            energy: x.energy,
            square: x.energy * x.energy,
            multiplicity: p.multiplicity(x.channel),
            residual: x.residual,
        })
        .collect();
    eig.sort_by(|a, b| a.square.total_cmp(&b.square).then(a.channel.cmp(&b.channel)));
    // Keep whole levels until jmax values of the square are covered.
    let mut kept = Vec::new();
    let mut total = 0;
    for e in eig {
        if total >= p.jmax {
            break;
        }
        total += e.multiplicity;
        kept.push(e);
    }
    for i in 0..kept.len() {
        let c = kept[i].channel;
        kept[i].index = kept[..=i].iter().filter(|e| e.channel == c).count();
    }
    if let Some(last) = kept.last() {
        if kept.iter().any(|e| p.outermost(e.channel)) && total >= p.jmax {
            warning.get_or_insert(format!(
                "outermost channel reached below E² = {:.6}; raise the channel cap",
                last.square
            ));
        }
    }
    RadialSpectrum { eigenvalues: kept, warning }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSource {
    /// Circle of perimeter `ℓ`: `((k+½)·2π/ℓ)²`, each twice.
    Circle { length: f64 },
    /// Round sphere of radius `R`: `((k+1)/R)²`, multiplicity `4(k+1)`.
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpectrum {
    pub values: Vec<f64>,
    pub source: ReferenceSource,
}

/// First `count` eigenvalues of the squared intrinsic Dirac operator, with
/// multiplicities expanded.
pub fn reference_boundary_spectrum(source: ReferenceSource, count: usize) -> ReferenceSpectrum {
    let mut values = Vec::with_capacity(count);
    let mut k = 0usize;
    while values.len() < count {
        let (v, mult) = match source {
            ReferenceSource::Circle { length } => ((2.0 * PI * (k as f64 + 0.5) / length).powi(2), 2),
            ReferenceSource::Sphere { radius } => (((k + 1) as f64 / radius).powi(2), 4 * (k + 1)),
        };
        values.extend(std::iter::repeat_n(v, mult.min(count - values.len())));
        k += 1;
    }
    ReferenceSpectrum { values, source }
}
