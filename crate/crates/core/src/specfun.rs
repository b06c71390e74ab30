//! Integer-order Bessel functions J, I, K and spherical j, i for real arguments.
//!
//! Small arguments use power series, moderate and large arguments use Miller's
//! backward recurrence normalised by an exact sum rule, and K is seeded by
//! K0, K1 (series or Steed's continued fraction) and recurred upward.

use thiserror::Error;

pub const MAX_ORDER: usize = 40;
pub const MAX_ARG: f64 = 200.0;
/// Argument cap for the exponentially scaled variants used by the radial solvers.
pub const MAX_SCALED_ARG: f64 = 1.0e4;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE: f64 = 1.0e250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecfunError {
    #[error("order {0} outside 0..={MAX_ORDER}")]
    Order(usize),
    #[error("argument {0} outside the supported range")]
    Argument(f64),
    #[error("K_k is singular at x = 0")]
    Singular,
}

/// Value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEval {
    pub order: usize,
    pub argument: f64,
    pub value: f64,
    pub est_abs_err: f64,
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn scale(&mut self, s: f64) {
        self.sum *= s;
        self.comp *= s;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check(k: usize, x: f64, cap: f64) -> Result<(), SpecfunError> {
    if k > MAX_ORDER {
        return Err(SpecfunError::Order(k));
    }
    if !(0.0..=cap).contains(&x) {
        return Err(SpecfunError::Argument(x));
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `Σ_s (sign x²/4)^s / (s! (s+k)!)` times `(x/2)^k`.
fn cylinder_series(k: usize, x: f64, sign: f64) -> f64 {
    let q = sign * 0.25 * x * x;
    let mut term = (0.5 * x).powi(k as i32) / factorial(k);
    let mut acc = CompensatedSum::new();
    acc.add(term);
    for s in 1..200 {
        term *= q / (s as f64 * (s + k) as f64);
        acc.add(term);
        if term.abs() <= 1e-18 * acc.value().abs() {
            break;
        }
    }
    acc.value()
}

fn even_start(top: f64) -> usize {
    let m = top.ceil() as usize;
    m + (m % 2)
}

/// Miller recurrence for `J_0..=J_kmax`, normalised by `J_0 + 2 Σ J_{2j} = 1`.
fn j_miller(kmax: usize, x: f64) -> Vec<f64> {
    let top = (kmax as f64).max(x);
    let start = even_start(top + 50.0 + 12.0 * top.cbrt());
    let mut out = vec![0.0; kmax + 1];
    let (mut above, mut cur) = (0.0_f64, 1.0e-30_f64);
    let mut norm = CompensatedSum::new();
    for n in (1..=start).rev() {
        let below = 2.0 * n as f64 / x * cur - above;
        above = cur;
        cur = below;
        let idx = n - 1;
        if idx <= kmax {
            out[idx] = cur;
        }
        if idx > 0 && idx % 2 == 0 {
            norm.add(2.0 * cur);
        }
        if cur.abs() > RESCALE {
            let s = 1.0 / RESCALE;
            cur *= s;
            above *= s;
            norm.scale(s);
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm.add(cur);
    let inv = 1.0 / norm.value();
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

/// Miller recurrence for `e^{-x} I_0..=I_kmax`, normalised by `I_0 + 2 Σ I_j = e^x`.
fn i_scaled_miller(kmax: usize, x: f64) -> Vec<f64> {
    let kf = kmax as f64;
    let start = even_start((kf * kf + 80.0 * x).sqrt() + 30.0);
    let mut out = vec![0.0; kmax + 1];
    let (mut above, mut cur) = (0.0_f64, 1.0e-30_f64);
    let mut norm = CompensatedSum::new();
    for n in (1..=start).rev() {
        let below = 2.0 * n as f64 / x * cur + above;
        above = cur;
        cur = below;
        let idx = n - 1;
        if idx <= kmax {
            out[idx] = cur;
        }
        if idx > 0 {
            norm.add(2.0 * cur);
        }
        if cur.abs() > RESCALE {
            let s = 1.0 / RESCALE;
            cur *= s;
            above *= s;
            norm.scale(s);
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm.add(cur);
    let inv = 1.0 / norm.value();
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

/// `J_0(x) ..= J_kmax(x)`.
pub fn bessel_j_all(kmax: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![0.0; kmax + 1];
        v[0] = 1.0;
        return v;
    }
    if x <= 8.0 {
        (0..=kmax).map(|k| cylinder_series(k, x, -1.0)).collect()
    } else {
        j_miller(kmax, x)
    }
}

pub fn bessel_j(k: usize, x: f64) -> Result<f64, SpecfunError> {
    check(k, x, MAX_ARG)?;
    Ok(bessel_j_all(k, x)[k])
}

pub fn bessel_j_eval(k: usize, x: f64) -> Result<BesselEval, SpecfunError> {
    let value = bessel_j(k, x)?;
    let est_abs_err = f64::EPSILON * (8.0 + x.sqrt());
    Ok(BesselEval { order: k, argument: x, value, est_abs_err })
}

/// `e^{-x} I_0(x) ..= e^{-x} I_kmax(x)`.
pub fn bessel_i_scaled_all(kmax: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![0.0; kmax + 1];
        v[0] = 1.0;
        return v;
    }
    if x <= 1.0 {
        let e = (-x).exp();
        (0..=kmax).map(|k| e * cylinder_series(k, x, 1.0)).collect()
    } else {
        i_scaled_miller(kmax, x)
    }
}

pub fn bessel_i_scaled(k: usize, x: f64) -> Result<f64, SpecfunError> {
    check(k, x, MAX_SCALED_ARG)?;
    Ok(bessel_i_scaled_all(k, x)[k])
}

pub fn bessel_i(k: usize, x: f64) -> Result<f64, SpecfunError> {
    check(k, x, MAX_ARG)?;
    if x <= 1.0 {
        return Ok(cylinder_series(k, x, 1.0));
    }
    Ok(bessel_i_scaled_all(k, x)[k] * x.exp())
}

/// `e^x K_0(x)` and `e^x K_1(x)`.
fn k01_scaled(x: f64) -> (f64, f64) {
    if x <= 2.0 {
        let q = 0.25 * x * x;
        let lg = (0.5 * x).ln();
        let i0 = cylinder_series(0, x, 1.0);
        let i1 = cylinder_series(1, x, 1.0);
        let mut s0 = CompensatedSum::new();
        let mut s1 = CompensatedSum::new();
        let mut harm = 0.0;
        let mut t0 = 1.0;
        let mut t1 = 1.0;
        for s in 0..60 {
            if s > 0 {
                harm += 1.0 / s as f64;
                t0 *= q / (s * s) as f64;
                t1 *= q / (s * (s + 1)) as f64;
            }
            let psi1 = -EULER_GAMMA + harm;
            let psi2 = psi1 + 1.0 / (s + 1) as f64;
            s0.add(t0 * psi1);
            s1.add(t1 * (psi1 + psi2));
            if t0 < 1e-20 && t1 < 1e-20 {
                break;
            }
        }
        let k0 = -lg * i0 + s0.value();
        let k1 = 1.0 / x + lg * i1 - 0.25 * x * s1.value();
        let e = x.exp();
        return (k0 * e, k1 * e);
    }
    // Steed's method on the second continued fraction, order zero.
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let (mut q1, mut q2) = (0.0, 1.0);
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        a -= 2.0 * (i - 1) as f64;
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// `e^x K_0(x) ..= e^x K_kmax(x)` by upward recurrence.
pub fn bessel_k_scaled_all(kmax: usize, x: f64) -> Vec<f64> {
    let (k0, k1) = k01_scaled(x);
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(k0);
    if kmax >= 1 {
        out.push(k1);
    }
    for n in 1..kmax {
        let next = out[n - 1] + 2.0 * n as f64 / x * out[n];
        out.push(next);
    }
    out
}

pub fn bessel_k_scaled(k: usize, x: f64) -> Result<f64, SpecfunError> {
    check(k, x, MAX_SCALED_ARG)?;
    if x == 0.0 {
        return Err(SpecfunError::Singular);
    }
    Ok(bessel_k_scaled_all(k, x)[k])
}

pub fn bessel_k(k: usize, x: f64) -> Result<f64, SpecfunError> {
    check(k, x, MAX_ARG)?;
    if x == 0.0 {
        return Err(SpecfunError::Singular);
    }
    Ok(bessel_k_scaled_all(k, x)[k] * (-x).exp())
}

/// `x^l / (2l+1)!! Σ_s (sign x²/2)^s / (s! (2l+3)(2l+5)…(2l+2s+1))`.
fn spherical_series(l: usize, x: f64, sign: f64) -> f64 {
    let mut lead = 1.0;
    for i in 0..l {
        lead *= x / (2 * i + 3) as f64;
    }
    let q = sign * 0.5 * x * x;
    let mut term = lead;
    let mut acc = CompensatedSum::new();
    acc.add(term);
    for s in 1..200 {
        term *= q / (s as f64 * (2 * l + 2 * s + 1) as f64);
        acc.add(term);
        if term.abs() <= 1e-18 * acc.value().abs() {
            break;
        }
    }
    acc.value()
}

/// `j_0(x) ..= j_lmax(x)`.
pub fn sph_bessel_j_all(lmax: usize, x: f64) -> Vec<f64> {
    if x < 1.0 {
        return (0..=lmax).map(|l| spherical_series(l, x, -1.0)).collect();
    }
    let top = (lmax as f64).max(x);
    let start = (top + 50.0 + 12.0 * top.cbrt()).ceil() as usize;
    let mut out = vec![0.0; lmax.max(1) + 1];
    let keep = out.len() - 1;
    let (mut above, mut cur) = (0.0_f64, 1.0e-30_f64);
    for n in (1..=start).rev() {
        let below = (2 * n + 1) as f64 / x * cur - above;
        above = cur;
        cur = below;
        let idx = n - 1;
        if idx <= keep {
            out[idx] = cur;
        }
        if cur.abs() > RESCALE {
            let s = 1.0 / RESCALE;
            cur *= s;
            above *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    let (sn, cs) = x.sin_cos();
    let j0 = sn / x;
    let j1 = sn / (x * x) - cs / x;
    let scale = if j0.abs() >= j1.abs() { j0 / out[0] } else { j1 / out[1] };
    out.truncate(lmax + 1);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

pub fn sph_bessel_j(l: usize, x: f64) -> Result<f64, SpecfunError> {
    check(l, x, MAX_ARG)?;
    Ok(sph_bessel_j_all(l, x)[l])
}

/// `e^{-x} i_0(x) ..= e^{-x} i_lmax(x)` for the modified spherical Bessel functions.
pub fn sph_bessel_i_scaled_all(lmax: usize, x: f64) -> Vec<f64> {
    if x < 1.0 {
        let e = (-x).exp();
        return (0..=lmax).map(|l| e * spherical_series(l, x, 1.0)).collect();
    }
    let lf = lmax as f64;
    let start = ((lf * lf + 80.0 * x).sqrt() + 30.0).ceil() as usize;
    let mut out = vec![0.0; lmax + 1];
    let (mut above, mut cur) = (0.0_f64, 1.0e-30_f64);
    for n in (1..=start).rev() {
        let below = (2 * n + 1) as f64 / x * cur + above;
        above = cur;
        cur = below;
        let idx = n - 1;
        if idx <= lmax {
            out[idx] = cur;
        }
        if cur.abs() > RESCALE {
            let s = 1.0 / RESCALE;
            cur *= s;
            above *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    let i0 = -(-2.0 * x).exp_m1() / (2.0 * x);
    let scale = i0 / out[0];
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
        assert!((bessel_j(0, 1.0).unwrap() - 0.765197686557967).abs() < 1e-15);
        assert!((bessel_i(0, 1.0).unwrap() - 1.266065877752008).abs() < 1e-15);
    }

    #[test]
    fn k_known_values() {
        assert!((bessel_k(0, 1.0).unwrap() - 0.421_024_438_240_708_34).abs() < 1e-15);
        assert!((bessel_k(0, 2.0).unwrap() - 0.113_893_872_749_533_44).abs() < 1e-15);
        assert!((bessel_k(1, 2.0).unwrap() - 0.139_865_881_816_522_43).abs() < 1e-15);
        assert!(bessel_k(1, 0.0).is_err());
    }

    #[test]
    fn ranges_rejected() {
        assert!(bessel_j(41, 1.0).is_err());
        assert!(bessel_j(1, 201.0).is_err());
        assert!(bessel_j(1, -1.0).is_err());
    }
}
