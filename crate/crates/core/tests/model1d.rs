use dirac_ml::model1d::{
    ground_shift_s, spectrum_s, spectrum_sprime, weyl_bounds, Boundary, IntervalProblem, Model1DParams,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Shooting oracle: RK4 for `-f'' = E f` from `t = 0` with the left condition,
/// returning the right boundary functional at `t = δ`.
fn shoot(left: Boundary, right: Boundary, delta: f64, e: f64) -> f64 {
    let (mut f, mut g) = match left {
        Boundary::Dirichlet => (0.0, 1.0),
        Boundary::Robin(a) => (1.0, -a),
    };
    let steps = 4000;
    let h = delta / steps as f64;
    let rhs = |f: f64, g: f64| (g, -e * f);
    for _ in 0..steps {
        let (k1f, k1g) = rhs(f, g);
        let (k2f, k2g) = rhs(f + 0.5 * h * k1f, g + 0.5 * h * k1g);
        let (k3f, k3g) = rhs(f + 0.5 * h * k2f, g + 0.5 * h * k2g);
        let (k4f, k4g) = rhs(f + h * k3f, g + h * k3g);
        f += h / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f);
        g += h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
    }
    match right {
        Boundary::Dirichlet => f,
        Boundary::Robin(b) => g - b * f,
    }
}

/// Sign-change scan of the shooting functional on a fine energy grid.
fn shooting_spectrum(left: Boundary, right: Boundary, delta: f64, emin: f64, emax: f64, count: usize) -> Vec<f64> {
    let n = 6000;
    let step = (emax - emin) / n as f64;
    let mut out = Vec::new();
    let mut prev = shoot(left, right, delta, emin);
    for i in 1..=n {
        let e = emin + step * i as f64;
        let cur = shoot(left, right, delta, e);
        if (cur < 0.0) != (prev < 0.0) {
            out.push(bisect(|x| shoot(left, right, delta, x), e - step, e));
            if out.len() == count {
                break;
            }
        }
        prev = cur;
    }
    out
}

#[test]
fn zero_mode_at_critical_strength() {
    let p = Model1DParams::new(2.0, 0.0, 0.5).unwrap();
    let s = spectrum_s(&p, 3).unwrap();
    assert_eq!(s.eigenvalues[0], 0.0);
    // Eigenfunction is proportional to δ - t.
    let f = s.eigenfunctions[0];
    let ratio = f.value(0.1) / (0.5 - 0.1);
    for t in [0.0, 0.2, 0.33, 0.49] {
        assert!((f.value(t) - ratio * (0.5 - t)).abs() < 1e-14);
    }
}

#[test]
fn neumann_dirichlet_and_neumann_neumann() {
    let s = spectrum_s(&Model1DParams::new(0.0, 0.0, 1.0).unwrap(), 8).unwrap();
    for (j, e) in s.eigenvalues.iter().enumerate() {
        let want = ((j as f64 + 0.5) * PI).powi(2);
        assert!((e - want).abs() < 1e-10 * want);
    }
    let delta = 1.7;
    let s = spectrum_sprime(&Model1DParams::new(0.0, 0.0, delta).unwrap(), 8).unwrap();
    for (j, e) in s.eigenvalues.iter().enumerate() {
        let want = (j as f64 * PI / delta).powi(2);
        assert!((e - want).abs() < 1e-10 * want.max(1.0), "{j}: {e} vs {want}");
    }
    assert!(s.outside_analyzed_regime);
}

#[test]
fn strong_robin_ground_state_s() {
    let p = Model1DParams::new(20.0, 0.0, 1.0).unwrap();
    let s = spectrum_s(&p, 4).unwrap();
    // Oracle: k coth k = 20 by bisection.
    let k = bisect(|k: f64| k / k.tanh() - 20.0, 1.0, 40.0);
    assert!((s.eigenvalues[0] + k * k).abs() < 1e-9);
    assert!((s.eigenvalues[0] + 400.0).abs() < 1e-6);
    // Normalised ground state sinh(k(δ - t)).
    let norm2 = 0.5 * ((2.0 * k).sinh() / (2.0 * k) - 1.0);
    let want = k.sinh().powi(2) / norm2;
    assert!((s.boundary_value_sq_at_0 - want).abs() < 1e-9 * want);
    assert!(s.boundary_value_sq_at_0 > 35.0 && s.boundary_value_sq_at_0 < 45.0);
    // Positive modes: α sin(kδ) = k cos(kδ), one root per branch ((j-½)π, jπ).
    for j in 1..4 {
        let f = |k: f64| 20.0 * k.sin() - k * k.cos();
        let lo = (j as f64 - 0.5) * PI + 1e-12;
        let hi = j as f64 * PI + 0.5 * PI - 1e-12;
        let kr = bisect(f, lo, hi);
        assert!((s.eigenvalues[j] - kr * kr).abs() < 1e-9 * kr * kr, "{j}");
    }
}

#[test]
fn strong_robin_ground_state_sprime() {
    let p = Model1DParams::new(20.0, 1.0, 1.0).unwrap();
    let s = spectrum_sprime(&p, 3).unwrap();
    assert!(!s.outside_analyzed_regime);
    // Oracle: g(k) = h(k) on (α, ∞), written without the pole.
    let f = |k: f64| (k + 20.0) * (k + 1.0) - (k - 1.0) * (k - 20.0) * (2.0 * k).exp();
    let k = bisect(f, 20.0, 40.0);
    assert!((s.eigenvalues[0] + k * k).abs() < 1e-9);
    assert!((s.eigenvalues[0] + 400.0).abs() < 1e-6);
}

#[test]
fn secular_residuals_bounded() {
    for (a, b, d) in [(20.0, 1.0, 1.0), (-10.0, 3.0, 0.7), (100.0, 0.0, 1.0), (0.3, 50.0, 2.0)] {
        let p = Model1DParams::new(a, b, d).unwrap();
        for s in [spectrum_s(&p, 12).unwrap(), spectrum_sprime(&p, 12).unwrap()] {
            assert!(s.residuals.iter().all(|&r| r <= 1e-12), "{a} {b} {d}: {:?}", s.residuals);
            assert!(s.eigenvalues.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn matches_shooting_oracle() {
    for (a, b, d) in [(3.0, 1.0, 1.0), (-2.0, 0.5, 1.3), (8.0, 6.0, 0.9), (1.0, -2.0, 1.0)] {
        let sp = IntervalProblem { left: Boundary::Robin(a), right: Boundary::Robin(b), delta: d };
        let got = sp.spectrum(5).unwrap().eigenvalues;
        let want = shooting_spectrum(sp.left, sp.right, d, -200.0, 400.0, 5);
        assert_eq!(want.len(), 5);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-7 * w.abs().max(1.0), "{a} {b}: {g} vs {w}");
        }
        let s = IntervalProblem { left: Boundary::Robin(a), right: Boundary::Dirichlet, delta: d };
        let got = s.spectrum(5).unwrap().eigenvalues;
        let want = shooting_spectrum(s.left, s.right, d, -200.0, 400.0, 5);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-7 * w.abs().max(1.0));
        }
    }
}

#[test]
fn eigenfunctions_satisfy_problem() {
    for (a, b, d) in [(20.0, 1.0, 1.0), (-3.0, 2.0, 1.5), (0.5, 0.0, 2.0)] {
        let p = IntervalProblem { left: Boundary::Robin(a), right: Boundary::Robin(b), delta: d };
        let s = p.spectrum(6).unwrap();
        for (e, f) in s.eigenvalues.iter().zip(&s.eigenfunctions) {
            assert!(
                (f.derivative(0.0) + a * f.value(0.0)).abs() < 1e-8 * (1.0 + a.abs()) * f.value(0.0).abs().max(1.0)
            );
            assert!((f.derivative(d) - b * f.value(d)).abs() < 1e-8 * (1.0 + e.abs()));
            // Second difference against -E f.
            let h = 1e-4;
            for t in [0.2 * d, 0.5 * d, 0.8 * d] {
                let f2 = (f.value(t + h) - 2.0 * f.value(t) + f.value(t - h)) / (h * h);
                assert!((f2 + e * f.value(t)).abs() < 1e-4 * (1.0 + e.abs()) * 10.0);
            }
            // Unit L² norm by Simpson.
            let n = 20000;
            let hh = d / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * f.value(i as f64 * hh).powi(2);
            }
            assert!((acc * hh / 3.0 - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn weyl_sandwich() {
    let (beta, delta) = (1.0, 1.0);
    let w = weyl_bounds(beta, delta, 10).unwrap();
    // Independent comparison spectra: Dirichlet-at-0 from sin(kt), Neumann-at-0 from cos(kt).
    let dir = shooting_spectrum(Boundary::Dirichlet, Boundary::Robin(beta), delta, -50.0, 1200.0, 10);
    let neu = shooting_spectrum(Boundary::Robin(0.0), Boundary::Robin(beta), delta, -50.0, 1200.0, 10);
    let b_plus = (2..=10).map(|j| dir[j - 1] / (j * j) as f64).fold(0.0, f64::max);
    assert!((w.b_plus - b_plus).abs() < 1e-6 * b_plus);
    let b_zero = (2..=10).map(|j| w.b_minus * (j * j) as f64 - neu[j - 2]).fold(0.0, f64::max);
    assert!((w.b_zero - b_zero).abs() < 1e-5 * b_zero.abs().max(1.0));
    for alpha in [-10.0, 0.0, 10.0, 100.0] {
        let s = spectrum_sprime(&Model1DParams::new(alpha, beta, delta).unwrap(), 10).unwrap();
        for j in 2..=10 {
            let e = s.eigenvalues[j - 1];
            let jj = (j * j) as f64;
            assert!(w.b_minus * jj - w.b_zero <= e && e <= w.b_plus * jj, "α={alpha} j={j}: {e}");
            // Interlacing with the comparison problems.
            assert!(neu[j - 2] <= e + 1e-9 && e <= dir[j - 1] + 1e-9);
        }
    }
}

#[test]
fn ground_state_gap_decays_geometrically() {
    let gaps: Vec<f64> = [10.0, 15.0, 20.0, 25.0]
        .iter()
        .map(|&a| ground_shift_s(&Model1DParams::new(a, 0.0, 1.0).unwrap()).unwrap().unwrap().abs())
        .collect();
    for w in gaps.windows(2) {
        assert!(w[1] <= (-4.0f64).exp() * w[0], "{gaps:?}");
    }
    // Oracle for the leading behaviour: with q = e^{-2κ}, α - κ = 2αq/(1+q).
    let a = 10.0;
    let k = bisect(|k: f64| k / k.tanh() - a, 1.0, 2.0 * a);
    assert!((gaps[0] - (a * a - k * k)).abs() < 1e-12 * a * a);
    assert!(ground_shift_s(&Model1DParams::new(0.5, 0.0, 1.0).unwrap()).unwrap().is_none());
}

#[test]
fn rejects_bad_input() {
    assert!(Model1DParams::new(1.0, 1.0, 0.0).is_err());
    assert!(Model1DParams::new(1.0, 1.0, -1.0).is_err());
    let p = Model1DParams::new(1.0, 1.0, 1.0).unwrap();
    assert!(spectrum_s(&p, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ordered_with_small_residuals(a in -30.0f64..60.0, b in 0.0f64..30.0, d in 0.2f64..3.0) {
        let p = Model1DParams::new(a, b, d).unwrap();
        for s in [spectrum_s(&p, 8).unwrap(), spectrum_sprime(&p, 8).unwrap()] {
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.residuals.iter().all(|&r| r <= 1e-12));
        }
    }

    /// Raising the Robin strength lowers every eigenvalue.
    #[test]
    fn monotone_in_alpha(a in -20.0f64..40.0, da in 0.01f64..5.0, d in 0.3f64..2.0) {
        let lo = spectrum_s(&Model1DParams::new(a, 0.0, d).unwrap(), 5).unwrap();
        let hi = spectrum_s(&Model1DParams::new(a + da, 0.0, d).unwrap(), 5).unwrap();
        for (x, y) in hi.eigenvalues.iter().zip(&lo.eigenvalues) {
            prop_assert!(x <= y);
        }
    }
}
