use dirac_ml::radial_exact::{
    ball_secular, disk_jump_secular, disk_secular, radial_spectrum, reference_boundary_spectrum, RadialError,
    RadialProblem, ReferenceSource,
};
use dirac_ml::specfun::bessel_j;
use proptest::prelude::*;
use std::f64::consts::PI;

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    assert!(fa0 * f(b) < 0.0, "no bracket on [{a}, {b}]");
    let mut fa = fa0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// RK4 in `t = ln r` for `y' = A(r) y`, returned at `r = R`.
fn shoot(y0: [f64; 2], r0: f64, r: f64, rhs: impl Fn(f64, [f64; 2]) -> [f64; 2]) -> [f64; 2] {
    let steps = 20000;
    let (t0, t1) = (r0.ln(), r.ln());
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    for i in 0..steps {
        let t = t0 + h * i as f64;
        let k1 = rhs(t.exp(), y);
        let k2 = rhs((t + h / 2.0).exp(), add(y, k1, h / 2.0));
        let k3 = rhs((t + h / 2.0).exp(), add(y, k2, h / 2.0));
        let k4 = rhs((t + h).exp(), add(y, k3, h));
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

const R0: f64 = 1e-6;

/// `f(R) − g(R)` of the regular disk solution, from the radial ODE
/// `r f' = k f − r(E+m) g`, `r g' = −(k+1) g + r(E−m) f`.
fn disk_shooting(k: i32, e: f64, m: f64, r: f64) -> f64 {
    let y0 = if k >= 0 {
        let k = k as f64;
        [R0.powf(k), (e - m) * R0.powf(k + 1.0) / (2.0 * k + 2.0)]
    } else {
        let n = -k as f64;
        [-(e + m) * R0.powf(n) / (2.0 * n), R0.powf(n - 1.0)]
    };
    let kf = k as f64;
    let y = shoot(y0, R0, r, |rr, [f, g]| [kf * f - rr * (e + m) * g, -(kf + 1.0) * g + rr * (e - m) * f]);
    (y[0] - y[1]) / (y[0].abs() + y[1].abs())
}

/// `G(R) + F(R)` for the ball: `r G' = −(1+κ) G + r(E+m) F`, `r F' = −(1−κ) F − r(E−m) G`.
fn ball_shooting(kappa: i32, e: f64, m: f64, r: f64) -> f64 {
    let y0 = if kappa < 0 {
        let l = (-kappa - 1) as f64;
        [R0.powf(l), -(e - m) * R0.powf(l + 1.0) / (2.0 * l + 3.0)]
    } else {
        let l = kappa as f64;
        [(e + m) * R0.powf(l) / (2.0 * l + 1.0), R0.powf(l - 1.0)]
    };
    let kf = kappa as f64;
    let y = shoot(y0, R0, r, |rr, [g, f]| [-(1.0 + kf) * g + rr * (e + m) * f, -(1.0 - kf) * f - rr * (e - m) * g]);
    (y[0] + y[1]) / (y[0].abs() + y[1].abs())
}

/// Roots of `f` on `[lo, hi]` by a fine scan plus bisection.
fn scan_roots(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    (0..n).filter(|&i| vs[i] * vs[i + 1] < 0.0).map(|i| bisect(f, xs[i], xs[i + 1])).collect()
}

#[test]
fn disk_massless_lowest_root_by_bisection() {
    let x = bisect(|x| bessel_j(0, x).unwrap() - bessel_j(1, x).unwrap(), 1.0, 2.0);
    assert!((x - 1.4347).abs() < 1e-4);
    let spec = radial_spectrum(&RadialProblem::disk(1.0, 0.0, 4)).unwrap();
    assert!(spec.warning.is_none(), "{:?}", spec.warning);
    let first = spec.eigenvalues[0];
    assert!((first.square - x * x).abs() < 1e-12 * x * x);
    assert!((first.square - 2.0584).abs() < 1e-3);
    // Channels k and −k−1 carry ±E at m = 0.
    let pair: Vec<i32> = spec.eigenvalues[..2].iter().map(|e| e.channel).collect();
    assert_eq!(pair, vec![-1, 0]);
    assert!((spec.eigenvalues[1].square - first.square).abs() < 1e-12);
    assert!((spec.eigenvalues[0].energy + spec.eigenvalues[1].energy).abs() < 1e-12);
}

#[test]
fn disk_secular_matches_shooting() {
    for &m in &[0.0, -8.0, 3.0, -0.7] {
        for k in -3..=2 {
            let f = |e: f64| disk_secular(k, e, m, 1.0).0;
            let g = |e: f64| disk_shooting(k, e, m, 1.0);
            let want = scan_roots(&g, -12.0, 12.0, 480);
            let got = scan_roots(&f, -12.0, 12.0, 480);
            assert_eq!(got.len(), want.len(), "k={k} m={m}: {got:?} vs {want:?}");
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-7, "k={k} m={m}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn disk_spectrum_matches_shooting_oracle() {
    for &m in &[0.0, -8.0, 2.0] {
        let spec = radial_spectrum(&RadialProblem::disk(1.0, m, 10)).unwrap();
        for e in &spec.eigenvalues {
            let g = |x: f64| disk_shooting(e.channel, x, m, 1.0);
            let want = bisect(g, e.energy - 1e-3, e.energy + 1e-3);
            assert!((e.energy - want).abs() < 1e-7, "m={m} k={}: {} vs {want}", e.channel, e.energy);
        }
    }
}

#[test]
fn ball_secular_matches_shooting() {
    for &m in &[0.0, -6.0, 2.5] {
        for kappa in [-3, -2, -1, 1, 2, 3] {
            let f = |e: f64| ball_secular(kappa, e, m, 1.0).0;
            let g = |e: f64| ball_shooting(kappa, e, m, 1.0);
            let want = scan_roots(&g, -12.0, 12.0, 480);
            let got = scan_roots(&f, -12.0, 12.0, 480);
            assert_eq!(got.len(), want.len(), "κ={kappa} m={m}");
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-7, "κ={kappa} m={m}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn ball_massless_lowest_mode() {
    let x = bisect(|x| x.sin() / x - (x.sin() / (x * x) - x.cos() / x), 1.5, 2.5);
    assert!((x - 2.0428).abs() < 1e-4);
    let spec = radial_spectrum(&RadialProblem::ball(1.0, 0.0, 4)).unwrap();
    let first = spec.eigenvalues[0];
    assert_eq!(first.multiplicity, 2);
    assert!((first.square - x * x).abs() < 1e-12 * x * x);
    assert_eq!(spec.squares().len(), 4);
    assert!(spec.squares().iter().all(|v| (v - x * x).abs() < 1e-11));
}

/// At `E = −m` the solution is polynomial: `f = r^k`, `g = −m r^{k+1}/(k+1)`,
/// so `m = −(k+1)/R` puts an eigenvalue exactly at `E = (k+1)/R`.
#[test]
fn polynomial_eigenvalue_at_threshold() {
    for k in 0..4 {
        let m = -((k + 1) as f64);
        let (v, _) = disk_secular(k, -m, m, 1.0);
        assert!(v.abs() < 1e-15);
        let spec = radial_spectrum(&RadialProblem::disk(1.0, m, 40)).unwrap();
        assert!(spec.eigenvalues.iter().any(|e| e.channel == k && (e.energy + m).abs() < 1e-12));
    }
}

/// The secular function carries a positive factor `e^{−qR}` below the mass
/// shell, so continuity is checked on the scale-free ratio.
#[test]
fn secular_continuous_across_mass_shell() {
    for k in [-2, 0, 3] {
        for m in [-5.0f64, 4.0] {
            let e0 = m.abs();
            let ratio = |e: f64| {
                let (v, s) = disk_secular(k, e, m, 1.0);
                v / s
            };
            let (a, b) = (ratio(e0 * (1.0 - 1e-10)), ratio(e0 * (1.0 + 1e-10)));
            assert!((a - b).abs() < 1e-8, "k={k} m={m}: {a} vs {b}");
        }
    }
}

#[test]
fn large_negative_mass_disk() {
    let spec = radial_spectrum(&RadialProblem::disk(1.0, -64.0, 6)).unwrap();
    let sq = spec.squares();
    assert!(sq[0] > 0.25 && sq[0] < 0.31, "{}", sq[0]);
    assert!((sq[1] - sq[0]).abs() < 1e-9);
    assert!((sq[2] - 2.25).abs() < 0.3);
}

#[test]
fn disk_sweep_decreases_to_circle_value() {
    let mut prev = f64::INFINITY;
    let mut last = Vec::new();
    for m in [-4.0, -8.0, -16.0, -32.0, -64.0] {
        let spec = radial_spectrum(&RadialProblem::disk(1.0, m, 6)).unwrap();
        assert!(spec.warning.is_none());
        let sq = spec.squares();
        assert!(sq[0] < prev && sq[0] > 0.25 - 1e-9, "m={m}: {}", sq[0]);
        prev = sq[0];
        last = sq;
    }
    assert!(last[0] - 0.25 < 0.02);
    // Clusters 0.25 (×2), 2.25 (×2).
    assert!((last[1] - last[0]).abs() < 1e-9);
    assert!((last[2] - last[3]).abs() < 1e-9 && (last[2] - 2.25).abs() < 0.2);
}

#[test]
fn large_negative_mass_ball() {
    let mut prev = f64::INFINITY;
    for m in [-4.0, -8.0, -16.0, -32.0, -64.0] {
        let spec = radial_spectrum(&RadialProblem::ball(1.0, m, 4)).unwrap();
        let sq = spec.squares();
        assert!(sq[0] < prev && sq[0] > 1.0 - 1e-9, "m={m}: {}", sq[0]);
        assert_eq!(spec.eigenvalues[0].multiplicity, 2);
        // κ = ±1 levels merge into the fourfold sphere level.
        assert!(sq[..4].iter().all(|v| (v - sq[0]).abs() < 0.02 * sq[0]), "{sq:?}");
        prev = sq[0];
    }
    assert!(prev < 1.06);
}

#[test]
fn jump_without_jump_has_no_bound_states() {
    for m in [2.0, 8.0] {
        let spec = radial_spectrum(&RadialProblem::disk_jump(1.0, m, m, 4)).unwrap();
        assert!(spec.eigenvalues.is_empty(), "{:?}", spec.eigenvalues);
    }
}

#[test]
fn jump_states_lie_below_threshold() {
    for mm in [8.0, 16.0, 32.0] {
        let spec = radial_spectrum(&RadialProblem::disk_jump(1.0, 0.0, mm, 8)).unwrap();
        assert!(!spec.eigenvalues.is_empty());
        for e in &spec.eigenvalues {
            assert!(e.square < mm * mm);
        }
    }
}

#[test]
fn jump_secular_matches_shooting() {
    // Interior shooting to R, exterior K-ratio closes the system.
    let (m, mm) = (0.0, 16.0);
    for k in [-2, -1, 0, 1] {
        let f = |e: f64| disk_jump_secular(k, e, m, mm, 1.0).0;
        let g = |e: f64| {
            // Exterior decaying solution integrated inward from r = 4 where
            // K is tiny: start with the leading asymptotics f ≈ 1, g ≈ q/(E+M).
            let q = (mm * mm - e * e).sqrt();
            let kf = k as f64;
            let y_out = shoot([1.0, q / (e + mm)], 4.0, 1.0, |rr, [f, g]| {
                [kf * f - rr * (e + mm) * g, -(kf + 1.0) * g + rr * (e - mm) * f]
            });
            let y_in0 = if k >= 0 {
                [R0.powf(kf), (e - m) * R0.powf(kf + 1.0) / (2.0 * kf + 2.0)]
            } else {
                [-(e + m) * R0.powf(-kf) / (-2.0 * kf), R0.powf(-kf - 1.0)]
            };
            let y_in =
                shoot(y_in0, R0, 1.0, |rr, [f, g]| [kf * f - rr * (e + m) * g, -(kf + 1.0) * g + rr * (e - m) * f]);
            (y_in[0] * y_out[1] - y_in[1] * y_out[0]) / (y_in[0].hypot(y_in[1]) * y_out[0].hypot(y_out[1]))
        };
        let got = scan_roots(&f, -15.0, 15.0, 300);
        let want = scan_roots(&g, -15.0, 15.0, 300);
        assert_eq!(got.len(), want.len(), "k={k}: {got:?} vs {want:?}");
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-5, "k={k}: {a} vs {b}");
        }
    }
}

#[test]
fn jump_converges_to_bag_at_rate_one_over_m() {
    let bag = radial_spectrum(&RadialProblem::disk(1.0, 0.0, 2)).unwrap().squares()[0];
    let gap = |mm: f64| {
        let s = radial_spectrum(&RadialProblem::disk_jump(1.0, 0.0, mm, 2)).unwrap().squares()[0];
        (s - bag).abs()
    };
    let (g16, g32) = (gap(16.0), gap(32.0));
    let c = 16.0 * g16;
    assert!(g32 <= c / 32.0 * 1.1, "{g16} {g32}");
    let ms = [8.0, 16.0, 32.0, 64.0, 128.0];
    let gaps: Vec<f64> = ms.iter().map(|&m| gap(m)).collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = ms.iter().zip(&gaps).map(|(m, g)| (m.ln(), g.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / 5.0;
    let my = ly.iter().sum::<f64>() / 5.0;
    let slope = -lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((0.8..=1.25).contains(&slope), "slope {slope}, gaps {gaps:?}");
}

#[test]
fn double_limit_gap_decreases() {
    let mut prev = f64::INFINITY;
    for mm in [16.0f64, 64.0, 256.0] {
        let s = radial_spectrum(&RadialProblem::disk_jump(1.0, -mm.sqrt(), mm, 2)).unwrap().squares()[0];
        let gap = (s - 0.25).abs();
        assert!(gap < prev, "M={mm}: {gap}");
        prev = gap;
    }
}

#[test]
fn residuals_are_tiny() {
    for p in [
        RadialProblem::disk(1.0, -16.0, 20),
        RadialProblem::disk(0.7, 3.0, 20),
        RadialProblem::ball(1.3, -5.0, 20),
        RadialProblem::disk_jump(1.0, -4.0, 16.0, 10),
    ] {
        let s = radial_spectrum(&p).unwrap();
        assert!(s.max_residual() < 1e-12, "{:?}: {}", p.geometry, s.max_residual());
        assert!(s.squares().iter().all(|v| *v >= 0.0));
        assert!(s.squares().len() >= p.jmax.min(s.squares().len()));
    }
}

#[test]
fn parameter_errors() {
    assert!(matches!(radial_spectrum(&RadialProblem::disk(0.0, 0.0, 4)), Err(RadialError::Parameters(_))));
    assert!(matches!(radial_spectrum(&RadialProblem::disk(1.0, 0.0, 0)), Err(RadialError::Parameters(_))));
    let mut p = RadialProblem::ball(1.0, 0.0, 4);
    p.exterior_mass = Some(3.0);
    assert!(radial_spectrum(&p).is_err());
    let mut p = RadialProblem::disk(1.0, 0.0, 4);
    p.channel_cap = 40;
    assert!(radial_spectrum(&p).is_err());
}

#[test]
fn reference_spectra() {
    let c = reference_boundary_spectrum(ReferenceSource::Circle { length: 2.0 * PI }, 6).values;
    assert_eq!(c, vec![0.25, 0.25, 2.25, 2.25, 6.25, 6.25]);
    let c2 = reference_boundary_spectrum(ReferenceSource::Circle { length: 4.0 * PI }, 6).values;
    for (a, b) in c.iter().zip(&c2) {
        assert!((a / 4.0 - b).abs() < 1e-15);
    }
    let s = reference_boundary_spectrum(ReferenceSource::Sphere { radius: 1.0 }, 24).values;
    assert_eq!(&s[..4], &[1.0; 4]);
    assert_eq!(&s[4..12], &[4.0; 8]);
    assert_eq!(&s[12..24], &[9.0; 12]);
    assert!(s.windows(2).all(|w| w[0] <= w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// `A_m` on a disk of radius `R` is `1/R` times `A_{mR}` on the unit disk.
    #[test]
    fn radius_scaling(r in 0.4f64..2.5, m in -20.0f64..6.0) {
        let a = radial_spectrum(&RadialProblem::disk(r, m, 8)).unwrap().squares();
        let b = radial_spectrum(&RadialProblem::disk(1.0, m * r, 8)).unwrap().squares();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x * r * r - y).abs() <= 1e-9 * y.max(1.0), "{} vs {}", x * r * r, y);
        }
    }

    #[test]
    fn ball_levels_nonnegative_and_sorted(r in 0.5f64..2.0, m in -30.0f64..5.0) {
        let s = radial_spectrum(&RadialProblem::ball(r, m, 10)).unwrap();
        let sq = s.squares();
        prop_assert!(sq.len() >= 10);
        prop_assert!(sq.iter().all(|v| *v >= 0.0));
        prop_assert!(sq.windows(2).all(|w| w[0] <= w[1]));
    }

    /// Lowering the interior mass lowers the ground state (sweep direction of the large-mass limit).
    #[test]
    fn disk_ground_state_monotone_in_mass(m in -40.0f64..-1.0, dm in 0.5f64..10.0) {
        let a = radial_spectrum(&RadialProblem::disk(1.0, m, 2)).unwrap().squares()[0];
        let b = radial_spectrum(&RadialProblem::disk(1.0, m - dm, 2)).unwrap().squares()[0];
        prop_assert!(b < a);
    }
}
