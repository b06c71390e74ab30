//! Smooth closed planar curves in arclength, and tubular charts around them.

use std::f64::consts::PI;

use thiserror::Error;

use crate::quadrature::{gauss_legendre, integrate};

const TWO_PI: f64 = 2.0 * PI;
const PANELS: usize = 256;
const PANEL_ORDER: usize = 12;
const SAMPLES: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid curve parameters: {0}")]
    Parameters(String),
    #[error("curve self-intersects near t = {0}")]
    SelfIntersection(f64),
    #[error("curve is degenerate (zero speed) near t = {0}")]
    Degenerate(f64),
    #[error("layer width {delta} exceeds the admissible {limit}")]
    LayerTooWide { delta: f64, limit: f64 },
    #[error("cannot parse Fourier coefficients: {0}")]
    Parse(String),
}

/// `x(t) += ax cos(kt) + bx sin(kt)`, `y(t) += ay cos(kt) + by sin(kt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierTerm {
    pub k: u32,
    pub ax: f64,
    pub bx: f64,
    pub ay: f64,
    pub by: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    Circle { r: f64 },
    Ellipse { a: f64, b: f64 },
    Fourier { terms: Vec<FourierTerm> },
}

impl CurveKind {
    /// Position and the first two derivatives in the raw parameter.
    fn eval(&self, t: f64) -> [[f64; 2]; 3] {
        match self {
            CurveKind::Circle { r } => {
                let (s, c) = t.sin_cos();
                [[r * c, r * s], [-r * s, r * c], [-r * c, -r * s]]
            }
            CurveKind::Ellipse { a, b } => {
                let (s, c) = t.sin_cos();
                [[a * c, b * s], [-a * s, b * c], [-a * c, -b * s]]
            }
            CurveKind::Fourier { terms } => {
                let mut out = [[0.0; 2]; 3];
                for term in terms {
                    let k = term.k as f64;
                    let (s, c) = (k * t).sin_cos();
                    out[0][0] += term.ax * c + term.bx * s;
                    out[0][1] += term.ay * c + term.by * s;
                    out[1][0] += k * (-term.ax * s + term.bx * c);
                    out[1][1] += k * (-term.ay * s + term.by * c);
                    out[2][0] -= k * k * (term.ax * c + term.bx * s);
                    out[2][1] -= k * k * (term.ay * c + term.by * s);
                }
                out
            }
        }
    }
}

/// Parses CSV rows `k, ax, bx, ay, by`; blank lines and `#` comments are skipped.
pub fn parse_fourier_csv(text: &str) -> Result<Vec<FourierTerm>, GeometryError> {
    let mut terms = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(GeometryError::Parse(format!("line {}: expected 5 fields", lineno + 1)));
        }
        if lineno == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        let bad = |e: String| GeometryError::Parse(format!("line {}: {e}", lineno + 1));
        let k = fields[0].parse::<u32>().map_err(|e| bad(e.to_string()))?;
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse::<f64>().map_err(|e| bad(e.to_string()))?;
        }
        terms.push(FourierTerm { k, ax: v[0], bx: v[1], ay: v[2], by: v[3] });
    }
    if terms.is_empty() {
        return Err(GeometryError::Parse("no coefficient rows".into()));
    }
    Ok(terms)
}

/// Positively oriented smooth simple closed curve with arclength access.
#[derive(Debug, Clone)]
pub struct ClosedCurve {
    kind: CurveKind,
    /// Raw parameter runs backwards when the input was clockwise.
    reversed: bool,
    /// Cumulative arclength at panel boundaries in the oriented parameter.
    arclength_table: Vec<f64>,
    total_length: f64,
    rule: (Vec<f64>, Vec<f64>),
}

impl ClosedCurve {
    pub fn circle(r: f64) -> Result<Self, GeometryError> {
        if !(r > 0.0) {
            return Err(GeometryError::Parameters(format!("radius {r}")));
        }
        Self::new(CurveKind::Circle { r })
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0 && b > 0.0) {
            return Err(GeometryError::Parameters(format!("semi-axes {a}, {b}")));
        }
        Self::new(CurveKind::Ellipse { a, b })
    }

    pub fn fourier(terms: Vec<FourierTerm>) -> Result<Self, GeometryError> {
        Self::new(CurveKind::Fourier { terms })
    }

    pub fn new(kind: CurveKind) -> Result<Self, GeometryError> {
        let rule = gauss_legendre(PANEL_ORDER);
        let mut curve = ClosedCurve { kind, reversed: false, arclength_table: Vec::new(), total_length: 0.0, rule };
        // Shoelace area on samples fixes the orientation.
        let pts: Vec<[f64; 2]> = (0..SAMPLES).map(|i| curve.kind.eval(TWO_PI * i as f64 / SAMPLES as f64)[0]).collect();
        let area: f64 = (0..SAMPLES)
            .map(|i| {
                let (p, q) = (pts[i], pts[(i + 1) % SAMPLES]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum();
        curve.reversed = area < 0.0;
        for i in 0..SAMPLES {
            let t = TWO_PI * i as f64 / SAMPLES as f64;
            let d = curve.kind.eval(t)[1];
            if d[0].hypot(d[1]) < 1e-12 {
                return Err(GeometryError::Degenerate(t));
            }
        }
        curve.check_simple(&pts)?;
        let mut table = Vec::with_capacity(PANELS + 1);
        table.push(0.0);
        let h = TWO_PI / PANELS as f64;
        for p in 0..PANELS {
            let a = h * p as f64;
            let piece = integrate(|t| curve.speed(t), a, a + h, &curve.rule);
            table.push(table[p] + piece);
        }
        curve.total_length = table[PANELS];
        curve.arclength_table = table;
        Ok(curve)
    }

    fn check_simple(&self, pts: &[[f64; 2]]) -> Result<(), GeometryError> {
        let n = pts.len();
        let cross =
            |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        for i in 0..n {
            let (p1, p2) = (pts[i], pts[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (q1, q2) = (pts[j], pts[(j + 1) % n]);
                let d1 = cross(q1, q2, p1);
                let d2 = cross(q1, q2, p2);
                let d3 = cross(p1, p2, q1);
                let d4 = cross(p1, p2, q2);
                if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                    return Err(GeometryError::SelfIntersection(TWO_PI * i as f64 / n as f64));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    /// Position and derivatives in the positively oriented parameter `t ∈ [0, 2π)`.
    pub fn eval_param(&self, t: f64) -> [[f64; 2]; 3] {
        if self.reversed {
            let [p, d, dd] = self.kind.eval(-t);
            [p, [-d[0], -d[1]], dd]
        } else {
            self.kind.eval(t)
        }
    }

    fn speed(&self, t: f64) -> f64 {
        let d = self.eval_param(t)[1];
        d[0].hypot(d[1])
    }

    pub fn length(&self) -> f64 {
        self.total_length
    }

    pub fn perimeter(&self) -> f64 {
        self.total_length
    }

    /// Arclength from `t = 0` to `t`, for `t ∈ [0, 2π]`.
    pub fn arclength_of_param(&self, t: f64) -> f64 {
        let h = TWO_PI / PANELS as f64;
        let p = ((t / h).floor() as usize).min(PANELS - 1);
        let a = h * p as f64;
        self.arclength_table[p] + integrate(|u| self.speed(u), a, t, &self.rule)
    }

    /// Parameter at arclength `s`, wrapped into `[0, ℓ)`.
    pub fn param_of_arclength(&self, s: f64) -> f64 {
        let s = s.rem_euclid(self.total_length);
        let h = TWO_PI / PANELS as f64;
        let p = self.arclength_table.partition_point(|&v| v <= s).clamp(1, PANELS) - 1;
        let (s0, s1) = (self.arclength_table[p], self.arclength_table[p + 1]);
        let mut t = h * (p as f64 + (s - s0) / (s1 - s0));
        for _ in 0..8 {
            let dt = (self.arclength_of_param(t) - s) / self.speed(t);
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        t
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        self.eval_param(self.param_of_arclength(s))[0]
    }

    /// Unit tangent in the direction of increasing arclength.
    pub fn tangent(&self, s: f64) -> [f64; 2] {
        let d = self.eval_param(self.param_of_arclength(s))[1];
        let n = d[0].hypot(d[1]);
        [d[0] / n, d[1] / n]
    }

    /// Unit normal pointing out of the enclosed domain.
    pub fn normal(&self, s: f64) -> [f64; 2] {
        let [tx, ty] = self.tangent(s);
        [ty, -tx]
    }

    /// Signed curvature; positive on convex arcs (unit circle: 1).
    pub fn curvature(&self, s: f64) -> f64 {
        self.curvature_at_param(self.param_of_arclength(s))
    }

    pub fn curvature_at_param(&self, t: f64) -> f64 {
        let [_, d, dd] = self.eval_param(t);
        let sp = d[0].hypot(d[1]);
        (d[0] * dd[1] - d[1] * dd[0]) / (sp * sp * sp)
    }

    /// Point, outward normal and curvature at arclength `s` in one evaluation.
    pub fn frame(&self, s: f64) -> CurvePoint {
        let t = self.param_of_arclength(s);
        let [p, d, dd] = self.eval_param(t);
        let sp = d[0].hypot(d[1]);
        CurvePoint {
            position: p,
            tangent: [d[0] / sp, d[1] / sp],
            normal: [d[1] / sp, -d[0] / sp],
            curvature: (d[0] * dd[1] - d[1] * dd[0]) / (sp * sp * sp),
        }
    }

    /// `n` points at equal arclength spacing starting from `s = 0`.
    pub fn uniform_samples(&self, n: usize) -> Vec<CurvePoint> {
        let h = self.total_length / n as f64;
        (0..n).map(|i| self.frame(h * i as f64)).collect()
    }

    /// `∮ κ ds` by Gauss–Legendre panels in the raw parameter.
    pub fn total_turning(&self) -> f64 {
        let h = TWO_PI / PANELS as f64;
        (0..PANELS)
            .map(|p| {
                let a = h * p as f64;
                integrate(|t| self.curvature_at_param(t) * self.speed(t), a, a + h, &self.rule)
            })
            .sum()
    }

    /// Largest `|κ|` and largest `max(-κ, 0)` over the sample grid.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        let mut abs_max: f64 = 0.0;
        let mut neg_max: f64 = 0.0;
        for i in 0..4 * SAMPLES {
            let k = self.curvature_at_param(TWO_PI * i as f64 / (4 * SAMPLES) as f64);
            abs_max = abs_max.max(k.abs());
            neg_max = neg_max.max(-k);
        }
        (abs_max, neg_max)
    }

    /// Mean of the sampled boundary points.
    pub fn center(&self) -> [f64; 2] {
        let pts = self.uniform_samples(SAMPLES);
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.position[0]).sum();
        let sy: f64 = pts.iter().map(|p| p.position[1]).sum();
        [sx / n, sy / n]
    }

    /// True when every ray from `c` meets the curve once.
    pub fn is_star_shaped_about(&self, c: [f64; 2]) -> bool {
        (0..4 * SAMPLES).all(|i| {
            let [p, d, _] = self.eval_param(TWO_PI * i as f64 / (4 * SAMPLES) as f64);
            (p[0] - c[0]) * d[1] - (p[1] - c[1]) * d[0] > 0.0
        })
    }

    /// Largest distance from `c` to the curve.
    pub fn circumradius_about(&self, c: [f64; 2]) -> f64 {
        (0..4 * SAMPLES)
            .map(|i| {
                let p = self.eval_param(TWO_PI * i as f64 / (4 * SAMPLES) as f64)[0];
                (p[0] - c[0]).hypot(p[1] - c[1])
            })
            .fold(0.0, f64::max)
    }

    /// Copy rotated by `angle` about the origin.
    pub fn rotated(&self, angle: f64) -> Result<Self, GeometryError> {
        let (s, c) = angle.sin_cos();
        let rot = |x: f64, y: f64| (c * x - s * y, s * x + c * y);
        let terms = match &self.kind {
            CurveKind::Circle { r } => vec![FourierTerm { k: 1, ax: *r, bx: 0.0, ay: 0.0, by: *r }],
            CurveKind::Ellipse { a, b } => vec![FourierTerm { k: 1, ax: *a, bx: 0.0, ay: 0.0, by: *b }],
            CurveKind::Fourier { terms } => terms.clone(),
        };
        let terms = terms
            .into_iter()
            .map(|t| {
                let (ax, ay) = rot(t.ax, t.ay);
                let (bx, by) = rot(t.bx, t.by);
                FourierTerm { k: t.k, ax, bx, ay, by }
            })
            .collect();
        ClosedCurve::fourier(terms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub position: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Interior,
    Exterior,
}

/// Coordinates `(s, t) ↦ γ(s) - t ν*(s)` in a layer of width `delta`, where
/// `ν*` points away from the chosen side.
#[derive(Debug, Clone)]
pub struct TubularChart<'a> {
    pub curve: &'a ClosedCurve,
    pub side: Side,
    pub delta: f64,
}

pub fn tubular(curve: &ClosedCurve, side: Side, delta: f64) -> Result<TubularChart<'_>, GeometryError> {
    let (abs_max, neg_max) = curve.curvature_bounds();
    let limit = match side {
        Side::Interior => 0.9 / abs_max,
        Side::Exterior if neg_max > 0.0 => 0.9 / neg_max,
        Side::Exterior => f64::INFINITY,
    };
    if !(delta > 0.0) || delta >= limit {
        return Err(GeometryError::LayerTooWide { delta, limit });
    }
    Ok(TubularChart { curve, side, delta })
}

impl TubularChart<'_> {
    fn orient(&self) -> f64 {
        match self.side {
            Side::Interior => 1.0,
            Side::Exterior => -1.0,
        }
    }

    pub fn map(&self, s: f64, t: f64) -> [f64; 2] {
        let f = self.curve.frame(s);
        let o = self.orient();
        [f.position[0] - t * o * f.normal[0], f.position[1] - t * o * f.normal[1]]
    }

    /// Principal curvature seen from the chosen side.
    pub fn side_curvature(&self, s: f64) -> f64 {
        self.orient() * self.curve.curvature(s)
    }

    /// Volume weight `φ = 1 - t h*`.
    pub fn weight(&self, s: f64, t: f64) -> f64 {
        1.0 - t * self.side_curvature(s)
    }
}
