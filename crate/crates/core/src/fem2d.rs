//! Linear finite elements for the squared bag and jump operators on planar
//! domains bounded by a star-shaped `ClosedCurve`.
//!
//! Meshes are built from rings `c + ρ(γ(s) − c)` around the curve centroid,
//! so the ring `ρ = 1` lies exactly on the curve. Bag problems constrain
//! boundary spinors to `g·e(s)` with `e` the `+1` eigenvector of `B`; jump
//! problems extend the rings outward to a dilated copy of the curve with
//! Dirichlet data there.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::boundary_spectra::{transported_frame, BoundaryError};
use crate::clifford::{boundary_matrix, build_gammas, CliffordError};
use crate::eigsolve::{lowest, EigError, EigRequest, MatrixRef, SparseMatrix, Spectrum};
use crate::geometry::ClosedCurve;
use crate::quadrature::gauss_legendre;

/// Smallest interior angle allowed outside graded layers.
pub const MIN_ANGLE_DEG: f64 = 20.0;
/// Mass magnitude from which a boundary layer is graded automatically.
pub const AUTO_LAYER_MASS: f64 = 16.0;
/// Default layer width in units of the decay length `1/|m|`.
pub const LAYER_WIDTHS: f64 = 3.0;
/// Default geometric growth of layer cells.
pub const LAYER_RATIO: f64 = 1.2;
/// Uniform cells across the layer width.
pub const LAYER_CELLS: f64 = 192.0;
/// Tangential spacing inside a layer relative to `h`.
pub const LAYER_TANGENTIAL: f64 = 0.5;
/// Far-field cells outside the curve grow up to this multiple of `h`.
const FAR_SIZE_FACTOR: f64 = 4.0;
const MIN_RING_NODES: usize = 6;
const ON_CURVE_TOL: f64 = 1e-12;
/// Shift below the spectrum of the nonnegative squared operators.
const SOLVER_SHIFT: f64 = -1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid mesh parameters: {0}")]
    Parameters(String),
    #[error("curve is not star-shaped about its centroid")]
    NotStarShaped,
    #[error("mesh quality: triangle {triangle} has minimum angle {angle_deg:.2}° (< {MIN_ANGLE_DEG}°)")]
    Quality { triangle: usize, angle_deg: f64 },
    #[error("mesh text: {0}")]
    Format(String),
    #[error("operation needs a {0} mesh")]
    ProblemKind(&'static str),
    #[error("interface node mismatch: {0}")]
    Interface(String),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Eig(#[from] EigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Problem {
    /// The curve is the outer boundary with the MIT constraint.
    Bag,
    /// The curve is an interior interface; Dirichlet data on a dilated copy
    /// of the curve enclosing the disk of radius `box_half_width`.
    Jump { box_half_width: f64 },
}

/// Graded layer along the curve: uniform cells of thickness `cell` out to
/// depth `width`, then cells growing by `ratio` until they reach the bulk
/// size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub width: f64,
    pub ratio: f64,
    pub cell: f64,
}

impl LayerSpec {
    pub fn new(width: f64, ratio: f64) -> Self {
        LayerSpec { width, ratio, cell: width / LAYER_CELLS }
    }

    /// Layer resolving decay rate `|mass|`.
    pub fn for_decay(mass: f64) -> Self {
        LayerSpec::new(LAYER_WIDTHS / mass.abs(), LAYER_RATIO)
    }

    /// The default layer for `|mass|`, or `None` below the activation
    /// threshold.
    pub fn for_mass(mass: f64) -> Option<Self> {
        (mass.abs() >= AUTO_LAYER_MASS).then(|| LayerSpec::for_decay(mass))
    }

    /// Layer for a jump problem, resolving the faster of the two decays.
    pub fn for_jump(m: f64, big_m: f64) -> Option<Self> {
        LayerSpec::for_mass(m.abs().max(big_m.abs()))
    }

    /// Cell thicknesses from the curve outward, stopping before `h`, each
    /// flagged when it belongs to the uniform part.
    fn steps(&self, h: f64) -> Vec<(f64, bool)> {
        let cell = self.cell.min(h);
        let uniform = (self.width / cell).ceil() as usize;
        let mut out = vec![(cell, true); uniform];
        let mut t = cell * self.ratio;
        while t < h {
            out.push((t, false));
            t *= self.ratio;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Interior,
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub vertex: usize,
    /// Exact arclength parameter on the curve.
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub curve: ClosedCurve,
    pub center: [f64; 2],
    pub problem: Problem,
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    /// Triangles inside a graded layer, exempt from the angle bound.
    pub graded: Vec<bool>,
    /// Nodes on the curve, sorted by `s`.
    pub boundary_nodes: Vec<BoundaryNode>,
    /// Outer Dirichlet nodes of a jump mesh.
    pub dirichlet: Vec<usize>,
    /// Longest edge.
    pub h: f64,
    pub layer: Option<LayerSpec>,
}

struct Ring {
    rho: f64,
    count: usize,
    offset: f64,
    /// The gap between this ring and the previous one is a graded cell.
    graded_gap: bool,
}

/// Builds a ring mesh of the domain inside `curve` (bag) or of the region
/// between the curve and the outer Dirichlet contour (jump).
pub fn build_mesh(curve: &ClosedCurve, h: f64, problem: Problem, layer: Option<LayerSpec>) -> Result<Mesh2D, FemError> {
    build_mesh_layers(curve, h, problem, layer, layer)
}

/// As [`build_mesh`] with separate layers inside and outside the curve;
/// `outer` is ignored for bag meshes.
pub fn build_mesh_layers(
    curve: &ClosedCurve,
    h: f64,
    problem: Problem,
    inner_layer: Option<LayerSpec>,
    outer_layer: Option<LayerSpec>,
) -> Result<Mesh2D, FemError> {
    let outer_layer = if problem == Problem::Bag { None } else { outer_layer };
    let center = curve.center();
    if !curve.is_star_shaped_about(center) {
        return Err(FemError::NotStarShaped);
    }
    let r_out = curve.circumradius_about(center);
    let r_in = (0..1024)
        .map(|i| {
            let p = curve.point(curve.length() * i as f64 / 1024.0);
            (p[0] - center[0]).hypot(p[1] - center[1])
        })
        .fold(f64::INFINITY, f64::min);
    if !(h > 0.0 && h < 0.5 * r_in) {
        return Err(FemError::Parameters(format!("h = {h} must be positive and below half the inradius {r_in:.4}")));
    }
    for l in inner_layer.iter().chain(outer_layer.iter()) {
        if !(l.width > 0.0 && l.ratio > 1.0 && l.cell > 0.0) {
            return Err(FemError::Parameters(format!("layer {l:?} needs positive width and cell, and ratio > 1")));
        }
    }
    if let Problem::Jump { box_half_width } = problem {
        if box_half_width < 2.0 * r_out {
            return Err(FemError::Parameters(format!(
                "box half-width {box_half_width} is below twice the circumradius {r_out:.4}"
            )));
        }
    }
    let ell = curve.length();
    let layered = inner_layer.is_some() || outer_layer.is_some();
    let h_curve = if layered { LAYER_TANGENTIAL * h } else { h };
    let nb = ((ell / h_curve).ceil() as usize).max(MIN_RING_NODES);
    // Per side: (thickness, uniform layer cell, graded). A side without a
    // layer next to a refined curve ring grows back to `h` through regular,
    // quality-checked rings.
    let steps = |l: Option<LayerSpec>| -> Vec<(f64, bool, bool)> {
        match l {
            Some(l) => l.steps(h).into_iter().map(|(t, u)| (t, u, true)).collect(),
            None => std::iter::successors(Some(h_curve), |t| Some(t * LAYER_RATIO))
                .take_while(|&t| t < h)
                .map(|t| (t, false, false))
                .collect(),
        }
    };
    let ring_count = |rho: f64, size: f64| ((rho * ell / size).ceil() as usize).max(MIN_RING_NODES);

    // Inner rings, listed from the curve inwards.
    let mut inner = vec![Ring { rho: 1.0, count: nb, offset: 0.0, graded_gap: false }];
    let mut rho = 1.0;
    // Uniform layer rings keep the curve's node count; growth rings relax
    // towards the bulk count.
    for (t, uniform, graded) in steps(inner_layer) {
        rho -= t / r_out;
        let count = if uniform { nb } else { ring_count(rho, t.max(h_curve)) };
        inner.push(Ring { rho, count, offset: 0.0, graded_gap: graded });
    }
    if rho * r_out < 2.0 * h {
        return Err(FemError::Parameters("graded layer fills the whole domain".into()));
    }
    let bulk = ((rho * r_out / h).round() as usize).max(1);
    let rho_layer = rho;
    for k in (1..bulk).rev() {
        let r = rho_layer * k as f64 / bulk as f64;
        inner.push(Ring { rho: r, count: ring_count(r, h), offset: 0.0, graded_gap: false });
    }
    inner.reverse();
    // `inner[0]` is innermost; the gap flag belongs to the ring on the far
    // side from the curve, so shift flags one place outward.
    let flags: Vec<bool> = inner.iter().map(|r| r.graded_gap).collect();
    for (i, ring) in inner.iter_mut().enumerate() {
        ring.graded_gap = i > 0 && flags[i - 1];
    }
    let mut rings = inner;

    let mut dirichlet_ring = None;
    if let Problem::Jump { box_half_width } = problem {
        let rho_max = box_half_width / r_in;
        let mut rho = 1.0;
        for (t, uniform, graded) in steps(outer_layer) {
            rho += t / r_out;
            let count = if uniform { nb } else { ring_count(rho, t.max(h_curve)) };
            rings.push(Ring { rho, count, offset: 0.0, graded_gap: graded });
        }
        let mut t = h;
        loop {
            let next = rho + t / r_out;
            let last = next + 0.5 * t / r_out >= rho_max;
            rho = if last { rho_max } else { next };
            rings.push(Ring { rho, count: ring_count(rho, t), offset: 0.0, graded_gap: false });
            if last {
                break;
            }
            t = (t * LAYER_RATIO).min(FAR_SIZE_FACTOR * h);
        }
        dirichlet_ring = Some(rings.len() - 1);
    }
    // Stagger alternate bulk rings. Layer rings stay aligned with the curve
    // nodes so thin cells split into right triangles: staggering them would
    // create angles near 180° and spoil the gradients.
    let curve_ring = rings.iter().position(|r| r.rho == 1.0).expect("curve ring present");
    for (i, ring) in rings.iter_mut().enumerate() {
        let aligned = ring.count == nb && (ring.graded_gap || i == curve_ring);
        ring.offset = if !aligned && i.abs_diff(curve_ring) % 2 == 1 { 0.5 } else { 0.0 };
    }

    let mut vertices = vec![center];
    let mut starts = Vec::with_capacity(rings.len());
    let mut boundary_nodes = Vec::new();
    for (ri, ring) in rings.iter().enumerate() {
        starts.push(vertices.len());
        for i in 0..ring.count {
            let s = ell * (i as f64 + ring.offset) / ring.count as f64;
            let p = curve.point(s);
            if ri == curve_ring {
                boundary_nodes.push(BoundaryNode { vertex: vertices.len(), s });
                vertices.push(p);
            } else {
                vertices.push([center[0] + ring.rho * (p[0] - center[0]), center[1] + ring.rho * (p[1] - center[1])]);
            }
        }
    }

    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    let mut graded = Vec::new();
    let mut push = |t: [usize; 3], region: Region, g: bool, verts: &[[f64; 2]]| {
        let t = if signed_area(verts, t) < 0.0 { [t[0], t[2], t[1]] } else { t };
        triangles.push(t);
        regions.push(region);
        graded.push(g);
    };
    let n0 = rings[0].count;
    for i in 0..n0 {
        push([0, starts[0] + i, starts[0] + (i + 1) % n0], Region::Interior, false, &vertices);
    }
    for k in 1..rings.len() {
        let (a, b) = (&rings[k - 1], &rings[k]);
        let region = if b.rho <= 1.0 { Region::Interior } else { Region::Exterior };
        for t in zipper(starts[k - 1], a.count, a.offset, starts[k], b.count, b.offset) {
            push(t, region, b.graded_gap, &vertices);
        }
    }
    let dirichlet = match dirichlet_ring {
        Some(r) => (starts[r]..starts[r] + rings[r].count).collect(),
        None => Vec::new(),
    };
    let mut mesh = Mesh2D {
        curve: curve.clone(),
        center,
        problem,
        vertices,
        triangles,
        regions,
        graded,
        boundary_nodes,
        dirichlet,
        h: 0.0,
        layer: inner_layer.or(outer_layer),
    };
    mesh.h = mesh.max_edge();
    mesh.check_quality()?;
    Ok(mesh)
}

/// Triangulates the band between two closed rings of `na` and `nb` nodes
/// by advancing along whichever ring has the nearer next node.
fn zipper(a0: usize, na: usize, oa: f64, b0: usize, nb: usize, ob: f64) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(na + nb);
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        let next_a = (i as f64 + 1.0 + oa) / na as f64;
        let next_b = (j as f64 + 1.0 + ob) / nb as f64;
        if j == nb || (i < na && next_a <= next_b) {
            out.push([a0 + i % na, a0 + (i + 1) % na, b0 + j % nb]);
            i += 1;
        } else {
            out.push([a0 + i % na, b0 + (j + 1) % nb, b0 + j % nb]);
            j += 1;
        }
    }
    out
}

fn signed_area(v: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [a, b, c] = [v[t[0]], v[t[1]], v[t[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Mesh2D {
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|&t| signed_area(&self.vertices, t)).sum()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    /// Smallest interior angle of triangle `t`, in degrees.
    pub fn min_angle_deg(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let (la, lb, lc) = (dist(b, c), dist(a, c), dist(a, b));
        let angle = |opp: f64, x: f64, y: f64| ((x * x + y * y - opp * opp) / (2.0 * x * y)).clamp(-1.0, 1.0).acos();
        angle(la, lb, lc).min(angle(lb, la, lc)).min(angle(lc, la, lb)).to_degrees()
    }

    pub fn max_edge(&self) -> f64 {
        self.edges().keys().map(|&(a, b)| dist(self.vertices[a], self.vertices[b])).fold(0.0, f64::max)
    }

    /// Edges keyed by sorted endpoints, with the number of adjacent triangles.
    pub fn edges(&self) -> HashMap<(usize, usize), usize> {
        let mut e = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *e.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        e
    }

    /// Worst triangle outside graded layers and its minimum angle.
    pub fn worst_element(&self) -> Option<(usize, f64)> {
        (0..self.triangles.len())
            .filter(|&t| !self.graded[t])
            .map(|t| (t, self.min_angle_deg(t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Checks orientation, the angle bound outside layers and that the
    /// curve nodes lie on the curve.
    pub fn check_quality(&self) -> Result<(), FemError> {
        for t in 0..self.triangles.len() {
            if self.triangle_area(t) <= 0.0 {
                return Err(FemError::Quality { triangle: t, angle_deg: 0.0 });
            }
        }
        if let Some((t, a)) = self.worst_element() {
            if a < MIN_ANGLE_DEG {
                return Err(FemError::Quality { triangle: t, angle_deg: a });
            }
        }
        for b in &self.boundary_nodes {
            let d = dist(self.vertices[b.vertex], self.curve.point(b.s));
            if d > ON_CURVE_TOL {
                return Err(FemError::Interface(format!("node {} is {d:.2e} off the curve", b.vertex)));
            }
        }
        Ok(())
    }

    /// Smallest edge length measured along the curve normal between a curve
    /// node and the neighbouring ring.
    pub fn smallest_normal_edge(&self) -> f64 {
        let on_curve: HashMap<usize, f64> = self.boundary_nodes.iter().map(|b| (b.vertex, b.s)).collect();
        let mut best = f64::INFINITY;
        for (&(a, b), _) in self.edges().iter() {
            for (p, q) in [(a, b), (b, a)] {
                if let (Some(&s), false) = (on_curve.get(&p), on_curve.contains_key(&q)) {
                    let nu = self.curve.normal(s);
                    let d = [self.vertices[q][0] - self.vertices[p][0], self.vertices[q][1] - self.vertices[p][1]];
                    best = best.min((d[0] * nu[0] + d[1] * nu[1]).abs());
                }
            }
        }
        best
    }

    /// Regular subdivision of every triangle into four. Midpoints of curve
    /// edges are placed on the curve at the mean arclength parameter.
    pub fn refine(&self) -> Result<Mesh2D, FemError> {
        let ell = self.curve.length();
        let position: HashMap<usize, usize> =
            self.boundary_nodes.iter().enumerate().map(|(k, b)| (b.vertex, k)).collect();
        let nbdry = self.boundary_nodes.len();
        let is_dirichlet: std::collections::HashSet<usize> = self.dirichlet.iter().copied().collect();
        let mut vertices = self.vertices.clone();
        let mut boundary_nodes = self.boundary_nodes.clone();
        let mut dirichlet = self.dirichlet.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = mid.get(&key) {
                return m;
            }
            let idx = vertices.len();
            let curve_edge = match (position.get(&a), position.get(&b)) {
                (Some(&i), Some(&j)) => (i + 1) % nbdry == j || (j + 1) % nbdry == i,
                _ => false,
            };
            if curve_edge {
                let (sa, sb) = (self.boundary_nodes[position[&a]].s, self.boundary_nodes[position[&b]].s);
                let s =
                    if (sa - sb).abs() > 0.5 * ell { (0.5 * (sa + sb + ell)).rem_euclid(ell) } else { 0.5 * (sa + sb) };
                vertices.push(self.curve.point(s));
                boundary_nodes.push(BoundaryNode { vertex: idx, s });
            } else {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                if is_dirichlet.contains(&a) && is_dirichlet.contains(&b) {
                    dirichlet.push(idx);
                }
            }
            mid.insert(key, idx);
            idx
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut regions = Vec::with_capacity(4 * self.triangles.len());
        let mut graded = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            for tri in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                triangles.push(tri);
                regions.push(self.regions[t]);
                graded.push(self.graded[t]);
            }
        }
        boundary_nodes.sort_by(|x, y| x.s.total_cmp(&y.s));
        let mut mesh = Mesh2D {
            curve: self.curve.clone(),
            center: self.center,
            problem: self.problem,
            vertices,
            triangles,
            regions,
            graded,
            boundary_nodes,
            dirichlet,
            h: 0.0,
            layer: self.layer,
        };
        mesh.h = mesh.max_edge();
        mesh.check_quality()?;
        Ok(mesh)
    }

    /// Plain-text export with `$vertices`, `$triangles` and `$boundary`
    /// sections, plus `$exterior`, `$dirichlet` and `$graded` id lists.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.problem {
            Problem::Bag => out.push_str("$problem\nbag\n"),
            Problem::Jump { box_half_width } => {
                let _ = writeln!(out, "$problem\njump {box_half_width:.17e}");
            }
        }
        out.push_str("$vertices\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "{i} {:.17e} {:.17e}", v[0], v[1]);
        }
        out.push_str("$triangles\n");
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {} {}", t[0], t[1], t[2]);
        }
        out.push_str("$boundary\n");
        for b in &self.boundary_nodes {
            let _ = writeln!(out, "{} {:.17e}", b.vertex, b.s);
        }
        let ids = |out: &mut String, name: &str, ids: Vec<usize>| {
            let _ = writeln!(out, "${name}");
            for i in ids {
                let _ = writeln!(out, "{i}");
            }
        };
        ids(&mut out, "exterior", (0..self.triangles.len()).filter(|&t| self.regions[t] == Region::Exterior).collect());
        ids(&mut out, "dirichlet", self.dirichlet.clone());
        ids(&mut out, "graded", (0..self.triangles.len()).filter(|&t| self.graded[t]).collect());
        out
    }

    /// Reads the format written by [`Mesh2D::to_text`]; the curve is supplied
    /// separately and curve nodes are checked against it.
    pub fn from_text(text: &str, curve: &ClosedCurve) -> Result<Mesh2D, FemError> {
        let mut sections: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut current = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(name) = line.strip_prefix('$') {
                current = Some(name);
                sections.entry(name).or_default();
            } else if let Some(name) = current {
                sections.entry(name).or_default().push(line);
            } else {
                return Err(FemError::Format(format!("data before any section: {line}")));
            }
        }
        let section = |name: &str| sections.get(name).cloned().unwrap_or_default();
        let num = |tok: &str| tok.parse::<f64>().map_err(|_| FemError::Format(format!("bad number {tok}")));
        let idx = |tok: &str| tok.parse::<usize>().map_err(|_| FemError::Format(format!("bad index {tok}")));
        let problem = match section("problem").first().map(|l| l.split_whitespace().collect::<Vec<_>>()) {
            None => Problem::Bag,
            Some(p) if p.first() == Some(&"bag") => Problem::Bag,
            Some(p) if p.first() == Some(&"jump") && p.len() == 2 => Problem::Jump { box_half_width: num(p[1])? },
            Some(p) => return Err(FemError::Format(format!("unknown problem {p:?}"))),
        };
        let mut vertices = Vec::new();
        for (k, line) in section("vertices").iter().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 || idx(f[0])? != k {
                return Err(FemError::Format(format!("vertex line {line}")));
            }
            vertices.push([num(f[1])?, num(f[2])?]);
        }
        let mut triangles = Vec::new();
        for (k, line) in section("triangles").iter().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 || idx(f[0])? != k {
                return Err(FemError::Format(format!("triangle line {line}")));
            }
            let t = [idx(f[1])?, idx(f[2])?, idx(f[3])?];
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(FemError::Format(format!("triangle {k} references a missing vertex")));
            }
            triangles.push(t);
        }
        let mut boundary_nodes = Vec::new();
        for line in section("boundary") {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(FemError::Format(format!("boundary line {line}")));
            }
            boundary_nodes.push(BoundaryNode { vertex: idx(f[0])?, s: num(f[1])? });
        }
        let ids = |name: &str| section(name).iter().map(|l| idx(l)).collect::<Result<Vec<_>, _>>();
        let mut regions = vec![Region::Interior; triangles.len()];
        for t in ids("exterior")? {
            *regions.get_mut(t).ok_or_else(|| FemError::Format(format!("exterior id {t}")))? = Region::Exterior;
        }
        let mut graded = vec![false; triangles.len()];
        for t in ids("graded")? {
            *graded.get_mut(t).ok_or_else(|| FemError::Format(format!("graded id {t}")))? = true;
        }
        boundary_nodes.sort_by(|x, y| x.s.total_cmp(&y.s));
        let mut mesh = Mesh2D {
            curve: curve.clone(),
            center: curve.center(),
            problem,
            vertices,
            triangles,
            regions,
            graded,
            boundary_nodes,
            dirichlet: ids("dirichlet")?,
            h: 0.0,
            layer: None,
        };
        mesh.h = mesh.max_edge();
        mesh.check_quality()?;
        Ok(mesh)
    }
}

/// Degrees of freedom attached to a vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeDofs {
    /// Two unconstrained spinor components at `first` and `first + 1`.
    Spinor { first: usize },
    /// Constrained boundary spinor `g·e` with one scalar unknown `g`.
    Frame { dof: usize, e: [Complex64; 2] },
    /// Dirichlet node.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub nodes: Vec<NodeDofs>,
    pub count: usize,
}

impl DofMap {
    /// `(dof, spinor direction)` pairs spanning the values at vertex `v`.
    pub fn basis(&self, v: usize) -> Vec<(usize, [Complex64; 2])> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self.nodes[v] {
            NodeDofs::Spinor { first } => vec![(first, [one, zero]), (first + 1, [zero, one])],
            NodeDofs::Frame { dof, e } => vec![(dof, e)],
            NodeDofs::Fixed => Vec::new(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, NodeDofs::Frame { .. })).count()
    }

    pub fn spinor_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, NodeDofs::Spinor { .. })).count()
    }

    /// Nodal spinor values of a coefficient vector.
    pub fn nodal_values(&self, x: &[Complex64]) -> Vec<[Complex64; 2]> {
        (0..self.nodes.len())
            .map(|v| {
                self.basis(v)
                    .iter()
                    .fold([Complex64::new(0.0, 0.0); 2], |acc, &(d, e)| [acc[0] + x[d] * e[0], acc[1] + x[d] * e[1]])
            })
            .collect()
    }
}

/// Discretized form `K`, mass matrix and the curve line term on its own.
#[derive(Debug, Clone)]
pub struct QuadraticPencil {
    pub k: SparseMatrix,
    pub mass: SparseMatrix,
    /// The line-integral part of `K`.
    pub line: SparseMatrix,
    pub dof_map: DofMap,
}

impl QuadraticPencil {
    pub fn dim(&self) -> usize {
        self.dof_map.count
    }

    /// Value of the form at coefficient vector `x`.
    pub fn form(&self, x: &[Complex64]) -> f64 {
        quad(&self.k, x)
    }

    pub fn line_form(&self, x: &[Complex64]) -> f64 {
        quad(&self.line, x)
    }
}

fn quad(a: &SparseMatrix, x: &[Complex64]) -> f64 {
    a.matvec(x).iter().zip(x).map(|(y, xi)| (xi.conj() * y).re).sum()
}

fn inner(a: &[Complex64; 2], b: &[Complex64; 2]) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// P1 stiffness and mass of one triangle.
fn element(v: &[[f64; 2]], t: [usize; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let p = t.map(|i| v[i]);
    let area = signed_area(v, t);
    // Gradient of the hat at vertex a is the rotated opposite edge / 2A.
    let grad: [[f64; 2]; 3] = std::array::from_fn(|a| {
        let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
        [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)]
    });
    let mut s = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            s[a][b] = area * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
            m[a][b] = area / 12.0 * if a == b { 2.0 } else { 1.0 };
        }
    }
    (s, m)
}

/// Symmetric 7-point rule, exact to degree 5: barycentric points and
/// weights normalised to sum to one.
const TRIANGLE_RULE: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059_715_871_789_769_82, 0.470_142_064_105_115_1, 0.470_142_064_105_115_1], 0.132_394_152_788_506_2),
    ([0.470_142_064_105_115_1, 0.059_715_871_789_769_82, 0.470_142_064_105_115_1], 0.132_394_152_788_506_2),
    ([0.470_142_064_105_115_1, 0.470_142_064_105_115_1, 0.059_715_871_789_769_82], 0.132_394_152_788_506_2),
    ([0.797_426_985_353_087_3, 0.101_286_507_323_456_3, 0.101_286_507_323_456_3], 0.125_939_180_544_827_2),
    ([0.101_286_507_323_456_3, 0.797_426_985_353_087_3, 0.101_286_507_323_456_3], 0.125_939_180_544_827_2),
    ([0.101_286_507_323_456_3, 0.101_286_507_323_456_3, 0.797_426_985_353_087_3], 0.125_939_180_544_827_2),
];

/// P1 stiffness and mass of a triangle whose edge `a → b` lies on the curve
/// between arclengths `sa` and `sb`. The element is the image of the
/// reference triangle under the blending map that follows the curve exactly
/// on that edge and is affine along the other two; the basis is P1 on the
/// reference triangle.
fn curved_element(curve: &ClosedCurve, pts: [[f64; 2]; 3], sa: f64, sb: f64) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let ell = curve.length();
    let [p1, p2, p3] = pts;
    let ds = sb - sa;
    let ref_grad = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut s = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for (bary, w) in TRIANGLE_RULE {
        let (xi, eta) = (bary[1], bary[2]);
        let t = xi / (1.0 - eta);
        let f = curve.frame((sa + t * ds).rem_euclid(ell));
        let chord = [p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1])];
        let delta = [f.position[0] - chord[0], f.position[1] - chord[1]];
        let d_delta = [f.tangent[0] * ds - (p2[0] - p1[0]), f.tangent[1] * ds - (p2[1] - p1[1])];
        let j_xi = [f.tangent[0] * ds, f.tangent[1] * ds];
        let j_eta = [p3[0] - p1[0] - delta[0] + t * d_delta[0], p3[1] - p1[1] - delta[1] + t * d_delta[1]];
        let det = j_xi[0] * j_eta[1] - j_eta[0] * j_xi[1];
        // Rows of J^{-T} applied to reference gradients.
        let phys =
            ref_grad.map(|g| [(j_eta[1] * g[0] - j_xi[1] * g[1]) / det, (-j_eta[0] * g[0] + j_xi[0] * g[1]) / det]);
        let phi = [1.0 - xi - eta, xi, eta];
        let wd = 0.5 * w * det.abs();
        for a in 0..3 {
            for b in 0..3 {
                s[a][b] += wd * (phys[a][0] * phys[b][0] + phys[a][1] * phys[b][1]);
                m[a][b] += wd * phi[a] * phi[b];
            }
        }
    }
    (s, m)
}

/// For each triangle with an edge on the curve: local indices `(a, b, c)`
/// with `a → b` following the curve orientation, and the arclength interval.
fn curved_edges(mesh: &Mesh2D) -> HashMap<usize, ([usize; 3], f64, f64)> {
    let mut by_edge: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for (va, vb, sa, sb) in curve_edges(mesh) {
        by_edge.insert((va, vb), (sa, sb));
    }
    let mut out = HashMap::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b, c) = (k, (k + 1) % 3, (k + 2) % 3);
            if let Some(&(sa, sb)) = by_edge.get(&(t[a], t[b])) {
                out.insert(ti, ([a, b, c], sa, sb));
            } else if let Some(&(sa, sb)) = by_edge.get(&(t[b], t[a])) {
                out.insert(ti, ([b, a, c], sa, sb));
            }
        }
    }
    out
}

/// Element matrices in the triangle's own vertex order, curved when the
/// triangle has an edge on the curve.
fn element_matrices(
    mesh: &Mesh2D,
    ti: usize,
    curved: &HashMap<usize, ([usize; 3], f64, f64)>,
) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let t = mesh.triangles[ti];
    match curved.get(&ti) {
        None => element(&mesh.vertices, t),
        Some(&(local, sa, sb)) => {
            let (cs, cm) = curved_element(&mesh.curve, local.map(|k| mesh.vertices[t[k]]), sa, sb);
            let mut s = [[0.0; 3]; 3];
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    s[local[i]][local[j]] = cs[i][j];
                    m[local[i]][local[j]] = cm[i][j];
                }
            }
            (s, m)
        }
    }
}

/// Volume terms `∫ |∇u|² + w|u|²` with `w` chosen per region.
fn assemble_volume(
    mesh: &Mesh2D,
    dofs: &DofMap,
    weight: impl Fn(Region) -> f64,
) -> (Vec<(usize, usize, Complex64)>, Vec<(usize, usize, Complex64)>) {
    let curved = curved_edges(mesh);
    let mut k = Vec::new();
    let mut m = Vec::new();
    for (ti, &t) in mesh.triangles.iter().enumerate() {
        let (s, mm) = element_matrices(mesh, ti, &curved);
        let w = weight(mesh.regions[ti]);
        let basis: Vec<_> = t.iter().map(|&v| dofs.basis(v)).collect();
        for a in 0..3 {
            for b in 0..3 {
                for &(da, ea) in &basis[a] {
                    for &(db, eb) in &basis[b] {
                        let c = inner(&ea, &eb);
                        k.push((da, db, c * (s[a][b] + w * mm[a][b])));
                        m.push((da, db, c * mm[a][b]));
                    }
                }
            }
        }
    }
    (k, m)
}

/// Curve edges as consecutive boundary nodes with the arclength interval.
fn curve_edges(mesh: &Mesh2D) -> Vec<(usize, usize, f64, f64)> {
    let ell = mesh.curve.length();
    let n = mesh.boundary_nodes.len();
    (0..n)
        .map(|i| {
            let (a, b) = (mesh.boundary_nodes[i], mesh.boundary_nodes[(i + 1) % n]);
            let sb = if i + 1 == n { b.s + ell } else { b.s };
            (a.vertex, b.vertex, a.s, sb)
        })
        .collect()
}

/// Line integral over the exact curve with 3-point Gauss per edge:
/// `∫ φ_a φ_b ⟨v_a, W(s) v_b⟩ ds` where `W` is supplied per point.
fn assemble_line(
    mesh: &Mesh2D,
    dofs: &DofMap,
    weight: impl Fn(f64) -> Result<[[Complex64; 2]; 2], FemError>,
) -> Result<Vec<(usize, usize, Complex64)>, FemError> {
    let (xs, ws) = gauss_legendre(3);
    let ell = mesh.curve.length();
    let mut out = Vec::new();
    for (va, vb, sa, sb) in curve_edges(mesh) {
        let ends = [dofs.basis(va), dofs.basis(vb)];
        let half = 0.5 * (sb - sa);
        for (x, w) in xs.iter().zip(&ws) {
            let lam = 0.5 * (1.0 + x);
            let phi = [1.0 - lam, lam];
            let wmat = weight((sa + lam * (sb - sa)).rem_euclid(ell))?;
            for a in 0..2 {
                for b in 0..2 {
                    for &(da, ea) in &ends[a] {
                        for &(db, eb) in &ends[b] {
                            let we = [wmat[0][0] * eb[0] + wmat[0][1] * eb[1], wmat[1][0] * eb[0] + wmat[1][1] * eb[1]];
                            out.push((da, db, inner(&ea, &we) * (w * half * phi[a] * phi[b])));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Form `∫_Ω |∇u|² + m²|u|² + ∫_Σ (m + κ/2)|u|²` on spinors with `u = Bu`
/// on the curve, the constraint imposed by frame reduction.
pub fn assemble_bag_form(mesh: &Mesh2D, m: f64) -> Result<QuadraticPencil, FemError> {
    if mesh.problem != Problem::Bag {
        return Err(FemError::ProblemKind("bag"));
    }
    let normals: Vec<[f64; 2]> = mesh.boundary_nodes.iter().map(|b| mesh.curve.normal(b.s)).collect();
    let (frame, _, _) = transported_frame(&normals)?;
    let mut nodes = vec![NodeDofs::Fixed; mesh.vertices.len()];
    for (b, e) in mesh.boundary_nodes.iter().zip(&frame) {
        nodes[b.vertex] = NodeDofs::Frame { dof: 0, e: *e };
    }
    let mut count = 0;
    for n in nodes.iter_mut() {
        match n {
            NodeDofs::Frame { dof, .. } => {
                *dof = count;
                count += 1;
            }
            _ => {
                *n = NodeDofs::Spinor { first: count };
                count += 2;
            }
        }
    }
    let dofs = DofMap { nodes, count };
    let (mut k, m_entries) = assemble_volume(mesh, &dofs, |_| m * m);
    let zero = Complex64::new(0.0, 0.0);
    let line = assemble_line(mesh, &dofs, |s| {
        let w = Complex64::new(m + 0.5 * mesh.curve.curvature(s), 0.0);
        Ok([[w, zero], [zero, w]])
    })?;
    k.extend(line.iter().copied());
    Ok(QuadraticPencil {
        k: SparseMatrix::from_triplets(count, k),
        mass: SparseMatrix::from_triplets(count, m_entries),
        line: SparseMatrix::from_triplets(count, line),
        dof_map: dofs,
    })
}

/// Form of the squared jump operator:
/// `∫_Ω |∇u|² + m²|u|² + ∫_{Ω^c} |∇u|² + M²|u|² + (M − m)∫_Σ (|P₋u|² − |P₊u|²)`
/// with Dirichlet data on the outer contour.
pub fn assemble_jump_form(mesh: &Mesh2D, m: f64, big_m: f64) -> Result<QuadraticPencil, FemError> {
    if !matches!(mesh.problem, Problem::Jump { .. }) {
        return Err(FemError::ProblemKind("jump"));
    }
    let exterior_vertex = {
        let mut flag = vec![false; mesh.vertices.len()];
        let mut interior = vec![false; mesh.vertices.len()];
        for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
            for &v in t {
                match r {
                    Region::Exterior => flag[v] = true,
                    Region::Interior => interior[v] = true,
                }
            }
        }
        (flag, interior)
    };
    for b in &mesh.boundary_nodes {
        if !(exterior_vertex.0[b.vertex] && exterior_vertex.1[b.vertex]) {
            return Err(FemError::Interface(format!("node {} does not touch both sides", b.vertex)));
        }
    }
    let fixed: std::collections::HashSet<usize> = mesh.dirichlet.iter().copied().collect();
    let mut count = 0;
    let nodes: Vec<NodeDofs> = (0..mesh.vertices.len())
        .map(|v| {
            if fixed.contains(&v) {
                NodeDofs::Fixed
            } else {
                count += 2;
                NodeDofs::Spinor { first: count - 2 }
            }
        })
        .collect();
    let dofs = DofMap { nodes, count };
    let (mut k, m_entries) = assemble_volume(mesh, &dofs, |r| match r {
        Region::Interior => m * m,
        Region::Exterior => big_m * big_m,
    });
    let rep = build_gammas(3)?;
    let line = assemble_line(mesh, &dofs, |s| {
        let b = boundary_matrix(&rep, &mesh.curve.normal(s))?.b;
        let f = Complex64::new(m - big_m, 0.0);
        Ok([[f * b.get(0, 0), f * b.get(0, 1)], [f * b.get(1, 0), f * b.get(1, 1)]])
    })?;
    k.extend(line.iter().copied());
    Ok(QuadraticPencil {
        k: SparseMatrix::from_triplets(count, k),
        mass: SparseMatrix::from_triplets(count, m_entries),
        line: SparseMatrix::from_triplets(count, line),
        dof_map: dofs,
    })
}

/// Lowest `count` eigenvalues of the pencil `K x = λ M x`.
pub fn lowest_eigenvalues(pencil: &QuadraticPencil, count: usize) -> Result<Spectrum, FemError> {
    let req = EigRequest::new(MatrixRef::Sparse(&pencil.k), Some(MatrixRef::Sparse(&pencil.mass)), count);
    solve_pencil(pencil, count, req.tol, req.seed)
}

/// As [`lowest_eigenvalues`] with an explicit tolerance and start-vector seed.
pub fn solve_pencil(pencil: &QuadraticPencil, count: usize, tol: f64, seed: u64) -> Result<Spectrum, FemError> {
    let mut req = EigRequest::new(MatrixRef::Sparse(&pencil.k), Some(MatrixRef::Sparse(&pencil.mass)), count);
    req.shift = Some(SOLVER_SHIFT);
    req.tol = tol;
    req.seed = seed;
    Ok(lowest(&req)?)
}

/// Coefficients of the frame-following field `g(s)·e(s)` on curve nodes,
/// `g = exp(iπ s/ℓ)` making it continuous around the antiperiodic frame,
/// and zero inside.
pub fn frame_field(mesh: &Mesh2D, pencil: &QuadraticPencil) -> Vec<Complex64> {
    let ell = mesh.curve.length();
    let mut x = vec![Complex64::new(0.0, 0.0); pencil.dim()];
    for b in &mesh.boundary_nodes {
        if let NodeDofs::Frame { dof, .. } = pencil.dof_map.nodes[b.vertex] {
            x[dof] = Complex64::from_polar(1.0, PI * b.s / ell);
        }
    }
    x
}
