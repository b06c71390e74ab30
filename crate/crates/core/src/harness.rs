//! Convergence studies, configuration files, and CSV/SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::boundary_spectra::{
    assemble_extrinsic_dirac, assemble_l, discretize, extrapolated_l_spectrum, lichnerowicz_residual, BoundaryError,
    Scheme,
};
use crate::clifford::{build_gammas, CliffordError};
use crate::eigsolve::{cluster, lowest, Backend, EigError, EigRequest, DEFAULT_SEED, DEFAULT_TOL};
use crate::fem2d::{self, FemError, LayerSpec, Problem};
use crate::geometry::{parse_fourier_csv, ClosedCurve, CurveKind, GeometryError};
use crate::model1d::{spectrum_s, spectrum_sprime, Model1DError, Model1DParams};
use crate::radial_exact::{radial_spectrum, reference_boundary_spectrum, RadialError, RadialProblem, ReferenceSource};

/// Jump eigenvalues at or above this fraction of `M²` sit too close to the
/// exterior continuum and are dropped.
pub const THRESHOLD_FRACTION: f64 = 0.9;
/// Residual contract for every finite element solve.
pub const FEM_RESIDUAL_LIMIT: f64 = 1e-8;
/// Relative agreement required between fem and exact gaps.
pub const BACKEND_AGREEMENT: f64 = 0.02;
/// Accepted range of the decay rate `-d ln gap / d ln M` in study T2.
pub const T2_RATE_RANGE: (f64, f64) = (0.8, 1.25);
pub const LICHNEROWICZ_FOURIER_LIMIT: f64 = 1e-10;
/// Accepted error reduction per grid doubling for the fd2 scheme.
pub const FD2_RATIO_RANGE: (f64, f64) = (3.5, 4.5);
pub const LENGTH_LAW_LIMIT: f64 = 1e-3;
pub const THREADS_ENV: &str = "DIRAC_ML_THREADS";

const EXACT_CLUSTER_TOL: f64 = 1e-8;
const FEM_CLUSTER_TOL: f64 = 1e-3;
const BOUNDARY_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("`{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("sweep `{0}` is empty")]
    EmptySweep(String),
    #[error("sweep `{0}` is not strictly monotone")]
    NotMonotone(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("at {param} = {value}: {source}")]
    SweepPoint { param: String, value: f64, source: Box<HarnessError>, partial: Box<StudyReport> },
    #[error("report has no rows")]
    EmptyReport,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Model1D(#[from] Model1DError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Eig(#[from] EigError),
}

fn value_error(key: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Value { key: key.to_string(), msg: msg.into() }
}

fn io_error(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), source }
}

/// `key = value` lines with `#` comments. Later lines and [`Config::set`]
/// override earlier values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
    /// Directory that relative paths in values are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Config {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(HarnessError::Config { line: i + 1, msg: "empty key".into() });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Config { entries, base_dir: None })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| v.parse::<T>().map_err(|e| value_error(key, format!("`{v}`: {e}")))).transpose()
    }

    /// Comma- or whitespace-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }

    pub fn curve(&self, key: &str) -> Result<Option<ClosedCurve>, HarnessError> {
        self.get(key).map(|v| parse_curve(v, self.base_dir.as_deref())).transpose()
    }
}

pub fn parse_list<T: FromStr>(key: &str, text: &str) -> Result<Vec<T>, HarnessError>
where
    T::Err: std::fmt::Display,
{
    text.trim_matches(|c| c == '(' || c == ')' || c == '[' || c == ']')
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| value_error(key, format!("`{t}`: {e}"))))
        .collect()
}

/// Parses `circle R`, `ellipse a b`, or `fourier <path>`; relative paths are
/// taken from `base_dir` when given.
pub fn parse_curve(spec: &str, base_dir: Option<&Path>) -> Result<ClosedCurve, HarnessError> {
    let mut parts = spec.split_whitespace();
    let kind = parts.next().unwrap_or("");
    let rest: Vec<&str> = parts.collect();
    let nums = |n: usize| -> Result<Vec<f64>, HarnessError> {
        if rest.len() != n {
            return Err(value_error("curve", format!("`{kind}` takes {n} number(s), got `{spec}`")));
        }
        rest.iter().map(|t| t.parse::<f64>().map_err(|e| value_error("curve", format!("`{t}`: {e}")))).collect()
    };
    match kind {
        "circle" => Ok(ClosedCurve::circle(nums(1)?[0])?),
        "ellipse" => {
            let v = nums(2)?;
            Ok(ClosedCurve::ellipse(v[0], v[1])?)
        }
        "fourier" => {
            if rest.len() != 1 {
                return Err(value_error("curve", "`fourier` takes one path"));
            }
            let mut path = PathBuf::from(rest[0]);
            if path.is_relative() {
                if let Some(base) = base_dir {
                    path = base.join(path);
                }
            }
            let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
            Ok(ClosedCurve::fourier(parse_fourier_csv(&text)?)?)
        }
        _ => Err(value_error("curve", format!("unknown curve `{spec}`; use circle, ellipse or fourier"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    /// Bag spectrum against the boundary reference as `m → -∞`.
    T1,
    /// Jump spectrum against the bag spectrum as `M → +∞`.
    T2,
    /// Jump spectrum against the boundary reference with `m = -M^p`.
    T3,
    T1Ball,
    Lichnerowicz,
    LengthInvariance,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::T1 => "T1",
            StudyKind::T2 => "T2",
            StudyKind::T3 => "T3",
            StudyKind::T1Ball => "T1-ball",
            StudyKind::Lichnerowicz => "lichnerowicz",
            StudyKind::LengthInvariance => "length-invariance",
        }
    }
}

impl FromStr for StudyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Ok(StudyKind::T1),
            "t2" => Ok(StudyKind::T2),
            "t3" => Ok(StudyKind::T3),
            "t1-ball" | "t1ball" => Ok(StudyKind::T1Ball),
            "lichnerowicz" => Ok(StudyKind::Lichnerowicz),
            "length-invariance" => Ok(StudyKind::LengthInvariance),
            _ => Err(format!("unknown study `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverBackend {
    /// Separable radial solvers; disk and ball only.
    Exact,
    /// Finite elements on any star-shaped curve.
    Fem,
}

impl FromStr for SolverBackend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(SolverBackend::Exact),
            "fem" => Ok(SolverBackend::Fem),
            _ => Err(format!("unknown backend `{s}`")),
        }
    }
}

/// Keys accepted in study config files.
pub const STUDY_KEYS: &[(&str, &str)] = &[
    ("study", "T1 | T2 | T3 | T1-ball | lichnerowicz | length-invariance"),
    ("curve", "circle R | ellipse a b | fourier <path>"),
    ("radius", "ball radius (T1-ball)"),
    ("backend", "exact | fem"),
    ("m-list", "interior masses swept by T1 and T1-ball"),
    ("M-list", "exterior masses swept by T2 and T3"),
    ("m", "fixed interior mass for T2"),
    ("p", "coupling exponent for T3, m = -M^p"),
    ("ngrid-list", "grid sizes for lichnerowicz and length-invariance"),
    ("jmax", "eigenvalues per sweep point"),
    ("h", "fem mesh spacing"),
    ("box", "fem Dirichlet radius for jump problems"),
    ("final-gap", "threshold on the last gap_1 (T1, T1-ball)"),
    ("seed", "eigensolver start-vector seed"),
    ("tol", "eigensolver tolerance"),
    ("csv", "output CSV path"),
    ("svg", "output SVG path"),
];

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub curve: ClosedCurve,
    pub ball_radius: f64,
    pub backend: SolverBackend,
    pub m_list: Vec<f64>,
    pub big_m_list: Vec<f64>,
    /// Interior mass held fixed in T2.
    pub m: f64,
    /// Exponent `p` of the T3 coupling `m = -M^p`.
    pub coupling_exponent: f64,
    pub ngrid_list: Vec<usize>,
    pub jmax: usize,
    pub h: f64,
    /// Dirichlet radius for fem jump meshes; `None` picks three circumradii.
    pub box_half_width: Option<f64>,
    pub final_gap: Option<f64>,
    pub seed: u64,
    pub tol: f64,
    /// Worker cap for sweep points; `None` reads the environment.
    pub threads: Option<usize>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl StudyConfig {
    /// Defaults for `study` on the unit disk (or unit ball, or ellipse(2,1)
    /// for the curve suites).
    pub fn new(study: StudyKind) -> Self {
        let circle = ClosedCurve::circle(1.0).expect("unit circle");
        let ellipse = ClosedCurve::ellipse(2.0, 1.0).expect("ellipse(2,1)");
        let mut cfg = StudyConfig {
            study,
            curve: circle,
            ball_radius: 1.0,
            backend: SolverBackend::Exact,
            m_list: vec![-4.0, -8.0, -16.0, -32.0, -64.0],
            big_m_list: vec![8.0, 16.0, 32.0, 64.0, 128.0],
            m: 0.0,
            coupling_exponent: 0.5,
            ngrid_list: vec![128, 256, 512],
            jmax: 5,
            h: 0.02,
            box_half_width: None,
            final_gap: None,
            seed: DEFAULT_SEED,
            tol: DEFAULT_TOL,
            threads: None,
            csv: None,
            svg: None,
        };
        match study {
            StudyKind::T1 => cfg.final_gap = Some(0.02),
            StudyKind::T1Ball => {
                cfg.final_gap = Some(0.06);
                cfg.jmax = 4;
            }
            StudyKind::T2 => cfg.jmax = 4,
            StudyKind::T3 => {
                cfg.big_m_list = vec![16.0, 64.0, 256.0];
                cfg.jmax = 4;
            }
            StudyKind::Lichnerowicz => cfg.curve = ellipse,
            StudyKind::LengthInvariance => {
                cfg.curve = ellipse;
                cfg.ngrid_list = vec![256];
                cfg.jmax = 6;
            }
        }
        cfg
    }

    /// Reads every study key present in `c` over the defaults of its study.
    pub fn from_config(c: &Config) -> Result<Self, HarnessError> {
        let study: StudyKind = c.parsed("study")?.ok_or_else(|| value_error("study", "missing"))?;
        let mut cfg = Self::new(study);
        for key in c.keys() {
            if !STUDY_KEYS.iter().any(|(k, _)| *k == key) {
                return Err(value_error(key, "unknown key"));
            }
        }
        if let Some(curve) = c.curve("curve")? {
            cfg.curve = curve;
        }
        if let Some(v) = c.parsed("radius")? {
            cfg.ball_radius = v;
        }
        if let Some(v) = c.parsed("backend")? {
            cfg.backend = v;
        }
        if let Some(v) = c.list("m-list")? {
            cfg.m_list = v;
        }
        if let Some(v) = c.list("M-list")? {
            cfg.big_m_list = v;
        }
        if let Some(v) = c.parsed("m")? {
            cfg.m = v;
        }
        if let Some(v) = c.parsed("p")? {
            cfg.coupling_exponent = v;
        }
        if let Some(v) = c.list("ngrid-list")? {
            cfg.ngrid_list = v;
        }
        if let Some(v) = c.parsed("jmax")? {
            cfg.jmax = v;
        }
        if let Some(v) = c.parsed("h")? {
            cfg.h = v;
        }
        if let Some(v) = c.parsed("box")? {
            cfg.box_half_width = Some(v);
        }
        if let Some(v) = c.parsed("final-gap")? {
            cfg.final_gap = Some(v);
        }
        if let Some(v) = c.parsed("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = c.parsed("tol")? {
            cfg.tol = v;
        }
        let path = |key: &str| {
            c.get(key).map(|v| match &c.base_dir {
                Some(base) if Path::new(v).is_relative() => base.join(v),
                _ => PathBuf::from(v),
            })
        };
        cfg.csv = path("csv");
        cfg.svg = path("svg");
        cfg.validate()?;
        Ok(cfg)
    }

    /// Name and values of the driving parameter.
    pub fn sweep(&self) -> (&'static str, Vec<f64>) {
        match self.study {
            StudyKind::T1 | StudyKind::T1Ball => ("m", self.m_list.clone()),
            StudyKind::T2 | StudyKind::T3 => ("M", self.big_m_list.clone()),
            StudyKind::Lichnerowicz | StudyKind::LengthInvariance => {
                ("ngrid", self.ngrid_list.iter().map(|&n| n as f64).collect())
            }
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let (name, values) = self.sweep();
        if values.is_empty() {
            return Err(HarnessError::EmptySweep(name.into()));
        }
        let up = values.windows(2).all(|w| w[1] > w[0]);
        let down = values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) || values.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::NotMonotone(name.into()));
        }
        if self.jmax == 0 {
            return Err(value_error("jmax", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(value_error("tol", "must be positive"));
        }
        if !(self.coupling_exponent > 0.0 && self.coupling_exponent < 1.0) {
            return Err(value_error("p", "must lie in (0, 1)"));
        }
        match self.study {
            StudyKind::T2 | StudyKind::T3 if values.iter().any(|&v| v <= 0.0) => {
                Err(value_error("M-list", "exterior masses must be positive"))
            }
            StudyKind::T1Ball if self.backend == SolverBackend::Fem => {
                Err(HarnessError::Unsupported("T1-ball needs the exact backend".into()))
            }
            StudyKind::T1 | StudyKind::T2 | StudyKind::T3 if self.backend == SolverBackend::Exact => {
                disk_radius(&self.curve).map(|_| ())
            }
            StudyKind::Lichnerowicz | StudyKind::LengthInvariance if values.iter().any(|&v| v < 8.0) => {
                Err(value_error("ngrid-list", "grids need at least 8 nodes"))
            }
            _ if self.backend == SolverBackend::Fem && !(self.h > 0.0) => Err(value_error("h", "must be positive")),
            _ => Ok(()),
        }
    }

    fn cluster_tol(&self) -> f64 {
        match self.backend {
            SolverBackend::Exact => EXACT_CLUSTER_TOL,
            SolverBackend::Fem => FEM_CLUSTER_TOL,
        }
    }
}

fn disk_radius(curve: &ClosedCurve) -> Result<f64, HarnessError> {
    match curve.kind() {
        CurveKind::Circle { r } => Ok(*r),
        _ => Err(HarnessError::Unsupported("the exact backend needs a circle (disk) geometry".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub param: f64,
    pub values: Vec<f64>,
    pub reference: Vec<f64>,
}

impl StudyRow {
    /// `|value - reference|` per column.
    pub fn gaps(&self) -> Vec<f64> {
        self.values.iter().zip(&self.reference).map(|(v, r)| (v - r).abs()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub study: StudyKind,
    pub param_name: String,
    pub columns: Vec<String>,
    pub rows: Vec<StudyRow>,
    pub assertions: Vec<Assertion>,
    /// Solver warnings and dropped eigenvalues, by sweep point.
    pub notes: Vec<String>,
    /// Set when the sweep stopped early.
    pub partial: bool,
    pub seed: u64,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        !self.partial && !self.assertions.is_empty() && self.assertions.iter().all(|a| a.passed)
    }

    pub fn gap_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.gaps()[j]).collect()
    }

    /// Least-squares slope of `ln gap_j` against `ln |param|` per column;
    /// `None` when fewer than two usable points exist.
    pub fn slopes(&self) -> Vec<Option<f64>> {
        let xs: Vec<f64> = self.rows.iter().map(|r| r.param).collect();
        (0..self.columns.len()).map(|j| loglog_slope(&xs, &self.gap_column(j))).collect()
    }

    pub fn to_table(&self) -> Table {
        let mut header = vec![self.param_name.clone()];
        header.extend(self.columns.iter().cloned());
        header.extend(self.columns.iter().map(|c| format!("ref_{c}")));
        header.extend(self.columns.iter().map(|c| format!("gap_{c}")));
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![Cell::Float(r.param)];
                cells.extend(r.values.iter().chain(&r.reference).chain(&r.gaps()).map(|&v| Cell::Float(v)));
                cells
            })
            .collect();
        Table { header, rows }
    }

    /// One line per assertion plus the fitted slopes.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "study {} ({} rows{})",
            self.study.name(),
            self.rows.len(),
            if self.partial { ", partial" } else { "" }
        );
        for (c, s) in self.columns.iter().zip(self.slopes()) {
            if let Some(s) = s {
                let _ = writeln!(out, "slope {c}: {s:.4}");
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        for a in &self.assertions {
            let _ = writeln!(out, "{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
        }
        out
    }
}

/// Least-squares slope of `ln y` against `ln |x|` over points with finite,
/// positive `y`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.abs() > 0.0 && y.is_finite() && **y > 0.0)
        .map(|(x, y)| (x.abs().ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.len() >= 2 && xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// One solved sweep point.
#[derive(Debug, Clone)]
struct PointResult {
    values: Vec<f64>,
    reference: Vec<f64>,
    notes: Vec<String>,
    /// Largest eigensolver residual, fem only.
    residual: Option<f64>,
    /// Exact-backend values at the same point, for the cross-check.
    exact: Option<Vec<f64>>,
}

impl PointResult {
    fn new(values: Vec<f64>, reference: Vec<f64>) -> Self {
        PointResult { values, reference, notes: Vec::new(), residual: None, exact: None }
    }
}

/// Worker count from [`THREADS_ENV`], else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Evaluates `f` at every index on up to `threads` workers; results come
/// back in index order regardless of scheduling.
fn parallel_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots").into_iter().map(|r| r.expect("every index evaluated")).collect()
}

fn pad(mut values: Vec<f64>, jmax: usize) -> Vec<f64> {
    values.truncate(jmax);
    values.resize(jmax, f64::NAN);
    values
}

fn radial_squares(p: &RadialProblem, notes: &mut Vec<String>) -> Result<Vec<f64>, HarnessError> {
    let spec = radial_spectrum(p)?;
    if let Some(w) = &spec.warning {
        notes.push(w.clone());
    }
    Ok(spec.squares())
}

fn exact_bag(cfg: &StudyConfig, m: f64, notes: &mut Vec<String>) -> Result<Vec<f64>, HarnessError> {
    let r = disk_radius(&cfg.curve)?;
    Ok(pad(radial_squares(&RadialProblem::disk(r, m, cfg.jmax), notes)?, cfg.jmax))
}

fn drop_threshold(values: Vec<f64>, big_m: f64, jmax: usize, notes: &mut Vec<String>) -> Vec<f64> {
    let limit = THRESHOLD_FRACTION * big_m * big_m;
    let kept: Vec<f64> = values.into_iter().filter(|&v| v < limit).collect();
    if kept.len() < jmax {
        notes
            .push(format!("M = {big_m}: only {} eigenvalue(s) below {THRESHOLD_FRACTION}·M² = {limit:.6}", kept.len()));
    }
    pad(kept, jmax)
}

fn exact_jump(cfg: &StudyConfig, m: f64, big_m: f64, notes: &mut Vec<String>) -> Result<Vec<f64>, HarnessError> {
    let r = disk_radius(&cfg.curve)?;
    let squares = radial_squares(&RadialProblem::disk_jump(r, m, big_m, cfg.jmax), notes)?;
    Ok(drop_threshold(squares, big_m, cfg.jmax, notes))
}

/// Interior layer for a negative mass, when it fits in half the distance
/// from the centroid to the curve.
fn decay_layer(curve: &ClosedCurve, mass: f64) -> Option<LayerSpec> {
    let c = curve.center();
    let inradius = curve
        .uniform_samples(256)
        .iter()
        .map(|p| (p.position[0] - c[0]).hypot(p.position[1] - c[1]))
        .fold(f64::INFINITY, f64::min);
    let layer = LayerSpec::for_decay(mass);
    (mass < 0.0 && layer.width < 0.5 * inradius).then_some(layer)
}

fn fem_bag(cfg: &StudyConfig, m: f64) -> Result<(Vec<f64>, f64), HarnessError> {
    let mesh = fem2d::build_mesh(&cfg.curve, cfg.h, Problem::Bag, decay_layer(&cfg.curve, m))?;
    let pencil = fem2d::assemble_bag_form(&mesh, m)?;
    let spec = fem2d::solve_pencil(&pencil, cfg.jmax, cfg.tol, cfg.seed)?;
    Ok((pad(spec.eigenvalues.clone(), cfg.jmax), spec.max_residual()))
}

fn jump_box(cfg: &StudyConfig) -> f64 {
    cfg.box_half_width.unwrap_or_else(|| 3.0 * cfg.curve.circumradius_about(cfg.curve.center()))
}

fn fem_jump(cfg: &StudyConfig, m: f64, big_m: f64, notes: &mut Vec<String>) -> Result<(Vec<f64>, f64), HarnessError> {
    let problem = Problem::Jump { box_half_width: jump_box(cfg) };
    let mesh = fem2d::build_mesh_layers(
        &cfg.curve,
        cfg.h,
        problem,
        decay_layer(&cfg.curve, m),
        Some(LayerSpec::for_decay(big_m)),
    )?;
    let pencil = fem2d::assemble_jump_form(&mesh, m, big_m)?;
    let spec = fem2d::solve_pencil(&pencil, cfg.jmax, cfg.tol, cfg.seed)?;
    Ok((drop_threshold(spec.eigenvalues.clone(), big_m, cfg.jmax, notes), spec.max_residual()))
}

/// Boundary reference `E_j(Dsl²)`: closed form on the circle, extrapolated
/// `L` spectrum otherwise.
fn boundary_reference(cfg: &StudyConfig) -> Result<Vec<f64>, HarnessError> {
    match cfg.curve.kind() {
        CurveKind::Circle { .. } => {
            Ok(reference_boundary_spectrum(ReferenceSource::Circle { length: cfg.curve.length() }, cfg.jmax).values)
        }
        _ => Ok(extrapolated_l_spectrum(&cfg.curve, 512, 0.0, cfg.jmax)?),
    }
}

fn solve_point(cfg: &StudyConfig, x: f64, shared_ref: &[f64]) -> Result<PointResult, HarnessError> {
    let mut notes = Vec::new();
    let mut out = match (cfg.study, cfg.backend) {
        (StudyKind::T1, SolverBackend::Exact) => PointResult::new(exact_bag(cfg, x, &mut notes)?, shared_ref.to_vec()),
        (StudyKind::T1, SolverBackend::Fem) => {
            let (values, res) = fem_bag(cfg, x)?;
            let mut p = PointResult::new(values, shared_ref.to_vec());
            p.residual = Some(res);
            if disk_radius(&cfg.curve).is_ok() {
                p.exact = Some(exact_bag(cfg, x, &mut notes)?);
            }
            p
        }
        (StudyKind::T1Ball, _) => {
            let squares = radial_squares(&RadialProblem::ball(cfg.ball_radius, x, cfg.jmax), &mut notes)?;
            PointResult::new(pad(squares, cfg.jmax), shared_ref.to_vec())
        }
        (StudyKind::T2, SolverBackend::Exact) => {
            let values = exact_jump(cfg, cfg.m, x, &mut notes)?;
            PointResult::new(values, shared_ref.to_vec())
        }
        (StudyKind::T2, SolverBackend::Fem) => {
            let (values, res) = fem_jump(cfg, cfg.m, x, &mut notes)?;
            let mut p = PointResult::new(values, shared_ref.to_vec());
            p.residual = Some(res);
            p
        }
        (StudyKind::T3, backend) => {
            let m = -x.powf(cfg.coupling_exponent);
            let mut p = match backend {
                SolverBackend::Exact => PointResult::new(exact_jump(cfg, m, x, &mut notes)?, shared_ref.to_vec()),
                SolverBackend::Fem => {
                    let (values, res) = fem_jump(cfg, m, x, &mut notes)?;
                    let mut p = PointResult::new(values, shared_ref.to_vec());
                    p.residual = Some(res);
                    p
                }
            };
            p.notes.push(format!("M = {x}: m = {m:.6}"));
            p
        }
        (StudyKind::Lichnerowicz, _) => {
            let n = x as usize;
            let fd2 = lichnerowicz_residual(&discretize(&cfg.curve, n, Scheme::Fd2)?)?;
            let fourier = lichnerowicz_residual(&discretize(&cfg.curve, n, Scheme::Fourier)?)?;
            PointResult::new(vec![fd2, fourier], vec![0.0, 0.0])
        }
        (StudyKind::LengthInvariance, _) => {
            let n = x as usize;
            let circle = ClosedCurve::circle(cfg.curve.length() / (2.0 * std::f64::consts::PI))?;
            let values = extrapolated_l_spectrum(&cfg.curve, n, 0.0, cfg.jmax)?;
            let reference = extrapolated_l_spectrum(&circle, n, 0.0, cfg.jmax)?;
            PointResult::new(values, reference)
        }
    };
    out.notes.splice(0..0, notes);
    Ok(out)
}

/// Reference shared by all sweep points, or per-point references for T2.
fn sweep_references(cfg: &StudyConfig, sweep: &[f64]) -> Result<Vec<Vec<f64>>, HarnessError> {
    let shared = match cfg.study {
        StudyKind::T1 | StudyKind::T3 => boundary_reference(cfg)?,
        StudyKind::T1Ball => {
            reference_boundary_spectrum(ReferenceSource::Sphere { radius: cfg.ball_radius }, cfg.jmax).values
        }
        StudyKind::T2 => {
            let mut notes = Vec::new();
            match cfg.backend {
                SolverBackend::Exact => exact_bag(cfg, cfg.m, &mut notes)?,
                SolverBackend::Fem => fem_bag(cfg, cfg.m)?.0,
            }
        }
        StudyKind::Lichnerowicz | StudyKind::LengthInvariance => Vec::new(),
    };
    Ok(vec![shared; sweep.len()])
}

/// Runs the sweep, evaluates the study's assertions and writes the
/// configured CSV/SVG files. A solver failure stops the report at the last
/// good sweep point; the partial report is written and returned inside the
/// error.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    cfg.validate()?;
    let (param_name, sweep) = cfg.sweep();
    let columns: Vec<String> = match cfg.study {
        StudyKind::Lichnerowicz => vec!["fd2".into(), "fourier".into()],
        _ => (1..=cfg.jmax).map(|j| format!("E_{j}")).collect(),
    };
    let refs = sweep_references(cfg, &sweep)?;
    let threads = cfg.threads.unwrap_or_else(thread_cap);
    let results = parallel_map(sweep.len(), threads, |i| solve_point(cfg, sweep[i], &refs[i]));

    let mut report = StudyReport {
        study: cfg.study,
        param_name: param_name.to_string(),
        columns,
        rows: Vec::new(),
        assertions: Vec::new(),
        notes: Vec::new(),
        partial: false,
        seed: cfg.seed,
    };
    let mut points = Vec::new();
    let mut failure = None;
    for (x, r) in sweep.iter().zip(results) {
        match r {
            Ok(p) => {
                report.rows.push(StudyRow { param: *x, values: p.values.clone(), reference: p.reference.clone() });
                report.notes.extend(p.notes.iter().cloned());
                points.push(p);
            }
            Err(e) => {
                failure = Some((*x, e));
                break;
            }
        }
    }
    if let Some((x, e)) = failure {
        report.partial = true;
        report.notes.push(format!("stopped at {param_name} = {x}: {e}"));
        if !report.rows.is_empty() {
            write_outputs(&report, cfg)?;
        }
        return Err(HarnessError::SweepPoint {
            param: param_name.to_string(),
            value: x,
            source: Box::new(e),
            partial: Box::new(report),
        });
    }
    report.assertions = assertions(cfg, &report, &points);
    write_outputs(&report, cfg)?;
    Ok(report)
}

fn write_outputs(report: &StudyReport, cfg: &StudyConfig) -> Result<(), HarnessError> {
    if let Some(path) = &cfg.csv {
        emit_csv(report, path)?;
    }
    if let Some(path) = &cfg.svg {
        emit_svg(report, path)?;
    }
    Ok(())
}

/// Cluster sizes of the first `n` values, dropping the last cluster, which
/// may be cut off by `n`.
fn complete_clusters(values: &[f64], tol: f64) -> Vec<usize> {
    let mut sizes: Vec<usize> = cluster(values, tol).iter().map(Vec::len).collect();
    sizes.pop();
    sizes
}

fn assertions(cfg: &StudyConfig, report: &StudyReport, points: &[PointResult]) -> Vec<Assertion> {
    let mut out = Vec::new();
    let mut check = |name: String, passed: bool, detail: String| out.push(Assertion { name, passed, detail });
    let gaps1 = report.gap_column(0);
    let last = report.rows.last().expect("non-empty sweep");
    match cfg.study {
        StudyKind::T1 | StudyKind::T1Ball | StudyKind::T2 | StudyKind::T3 => {
            check("gap_1 strictly decreasing".into(), strictly_decreasing(&gaps1), fmt_list(&gaps1));
        }
        _ => {}
    }
    if let (StudyKind::T1 | StudyKind::T1Ball, Some(limit)) = (cfg.study, cfg.final_gap) {
        let g = *gaps1.last().expect("non-empty sweep");
        check(format!("final gap_1 < {limit}"), g < limit, format!("{g:.6e}"));
    }
    if cfg.study == StudyKind::T1 {
        for j in 1..cfg.jmax.min(3) {
            let g = report.gap_column(j);
            check(format!("gap_{} strictly decreasing", j + 1), strictly_decreasing(&g), fmt_list(&g));
        }
        let want = complete_clusters(&last.reference, EXACT_CLUSTER_TOL);
        let got = complete_clusters(&last.values, cfg.cluster_tol());
        if !want.is_empty() {
            let ok = got.len() >= want.len() && got[..want.len()] == want[..];
            check("multiplicities match the reference".into(), ok, format!("clusters {got:?}, reference {want:?}"));
        }
        if points.iter().any(|p| p.exact.is_some()) {
            let worst = points
                .iter()
                .zip(&report.rows)
                .filter_map(|(p, row)| {
                    let exact = p.exact.as_ref()?;
                    let rel = row
                        .values
                        .iter()
                        .zip(exact)
                        .zip(&row.reference)
                        .map(|((f, e), r)| ((f - r).abs() - (e - r).abs()).abs() / (e - r).abs())
                        .fold(0.0, f64::max);
                    Some(rel)
                })
                .fold(0.0, f64::max);
            check(
                format!("fem gaps agree with exact within {}%", BACKEND_AGREEMENT * 100.0),
                worst < BACKEND_AGREEMENT,
                format!("worst relative gap difference {worst:.3e}"),
            );
        }
    }
    if cfg.study == StudyKind::T2 {
        let slope = report.slopes()[0];
        let (lo, hi) = T2_RATE_RANGE;
        let ok = slope.is_some_and(|s| (lo..=hi).contains(&-s));
        check(
            format!("decay rate of gap_1 in [{lo}, {hi}]"),
            ok,
            slope.map_or("no slope".into(), |s| format!("log-log slope {s:.4}")),
        );
    }
    if cfg.study == StudyKind::Lichnerowicz {
        let fourier = report.gap_column(1);
        let worst = fourier.iter().copied().fold(0.0, f64::max);
        check(
            format!("fourier residual <= {LICHNEROWICZ_FOURIER_LIMIT:e}"),
            worst <= LICHNEROWICZ_FOURIER_LIMIT,
            format!("{worst:.3e}"),
        );
        let fd2 = report.gap_column(0);
        if fd2.len() >= 2 {
            let (lo, hi) = FD2_RATIO_RANGE;
            let ratios: Vec<f64> = report
                .rows
                .windows(2)
                .zip(fd2.windows(2))
                .map(|(r, g)| (g[0] / g[1]).powf(2f64.ln() / (r[1].param / r[0].param).ln()))
                .collect();
            let ok = ratios.iter().all(|q| (lo..=hi).contains(q));
            check(format!("fd2 reduction per doubling in [{lo}, {hi}]"), ok, fmt_list(&ratios));
        }
    }
    if cfg.study == StudyKind::LengthInvariance {
        let worst = report
            .rows
            .iter()
            .flat_map(|r| r.gaps().into_iter().zip(r.reference.clone()).map(|(g, v)| g / v.abs()))
            .fold(0.0, f64::max);
        check(format!("relative gap < {LENGTH_LAW_LIMIT:e}"), worst < LENGTH_LAW_LIMIT, format!("{worst:.3e}"));
    }
    let fem_residuals: Vec<f64> = points.iter().filter_map(|p| p.residual).collect();
    if !fem_residuals.is_empty() {
        let worst = fem_residuals.iter().copied().fold(0.0, f64::max);
        check(format!("fem residuals <= {FEM_RESIDUAL_LIMIT:e}"), worst <= FEM_RESIDUAL_LIMIT, format!("{worst:.3e}"));
    }
    let incomplete = report.rows.iter().any(|r| r.values.iter().any(|v| v.is_nan()));
    if incomplete {
        check("every sweep point has jmax eigenvalues".into(), false, "see notes".into());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

/// Header plus rows, rendered as CSV with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
            w.write_record(&self.header)?;
            for row in &self.rows {
                w.write_record(row.iter().map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(x) => format_float(*x),
                    Cell::Text(t) => t.clone(),
                }))?;
            }
            Ok(())
        };
        write(&mut w).expect("writing to memory");
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("cells are UTF-8")
    }
}

/// Parses CSV produced by [`Table::to_csv`] into the header and numeric rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), HarnessError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let bad = |line: usize, msg: String| HarnessError::Config { line, msg };
    let header: Vec<String> = reader.headers().map_err(|e| bad(1, e.to_string()))?.iter().map(str::to_string).collect();
    if header.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(i + 2, e.to_string()))?;
        let row = rec
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| bad(i + 2, format!("`{t}`: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Writes the report table; an empty report is an error and leaves no file.
pub fn emit_csv(report: &StudyReport, path: &Path) -> Result<(), HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    write_file(path, &report.to_table().to_csv())
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const SVG_MARGIN: f64 = 70.0;
const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// Log-log plot of every gap column against `|param|`.
pub fn render_svg(report: &StudyReport) -> Result<String, HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let series: Vec<Vec<(f64, f64)>> = (0..report.columns.len())
        .map(|j| {
            report
                .rows
                .iter()
                .zip(report.gap_column(j))
                .filter(|(r, g)| r.param.abs() > 0.0 && g.is_finite() && *g > 0.0)
                .map(|(r, g)| (r.param.abs().log10(), g.log10()))
                .collect()
        })
        .collect();
    let all: Vec<&(f64, f64)> = series.iter().flatten().collect();
    let range = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(|p| f(p)).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(|p| f(p)).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let px = |x: f64| SVG_MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * SVG_MARGIN);
    let py = |y: f64| SVG_H - SVG_MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * SVG_MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (SVG_MARGIN, SVG_W - SVG_MARGIN, SVG_MARGIN, SVG_H - SVG_MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="14">study {}: gaps vs {}</text>"#,
        SVG_W / 2.0,
        report.study.name(),
        report.param_name
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">log10 |{}|</text>"#,
        SVG_W / 2.0,
        SVG_H - 20.0,
        report.param_name
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">log10 gap</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.2}</text>"#, px(xv), b + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#, l - 6.0, py(yv) + 4.0);
    }
    for (j, pts) in series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">gap_{}</text>"#,
            r + 6.0,
            t + 16.0 * j as f64,
            report.columns[j]
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg(report: &StudyReport, path: &Path) -> Result<(), HarnessError> {
    write_file(path, &render_svg(report)?)
}

/// Anticommutation report for every dimension `1..=n`: one line per
/// dimension and an overall verdict.
pub fn clifford_check(n: usize) -> Result<(Vec<String>, bool), HarnessError> {
    let mut lines = Vec::new();
    let mut all = true;
    for dim in 1..=n {
        let rep = build_gammas(dim)?;
        let bad = rep.anticommutation_failures();
        all &= bad.is_empty();
        lines.push(format!(
            "{} n={dim} size={} failures={}",
            if bad.is_empty() { "PASS" } else { "FAIL" },
            rep.size,
            bad.len()
        ));
    }
    Ok((lines, all))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model1DOp {
    S,
    SPrime,
}

impl FromStr for Model1DOp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "S" => Ok(Model1DOp::S),
            "Sprime" | "S'" => Ok(Model1DOp::SPrime),
            _ => Err(format!("unknown operator `{s}`; use S or Sprime")),
        }
    }
}

/// Columns `j, eigenvalue, residual`.
pub fn model1d_table(op: Model1DOp, p: &Model1DParams, jmax: usize) -> Result<Table, HarnessError> {
    let spec = match op {
        Model1DOp::S => spectrum_s(p, jmax)?,
        Model1DOp::SPrime => spectrum_sprime(p, jmax)?,
    };
    let mut t = Table::new(&["j", "eigenvalue", "residual"]);
    for (j, (e, r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
        t.rows.push(vec![Cell::Int(j as i64 + 1), Cell::Float(*e), Cell::Float(*r)]);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveOp {
    L,
    Dsigma,
    Lichnerowicz,
}

impl FromStr for CurveOp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "L" => Ok(CurveOp::L),
            "Dsigma" => Ok(CurveOp::Dsigma),
            "lichnerowicz" => Ok(CurveOp::Lichnerowicz),
            _ => Err(format!("unknown operator `{s}`; use L, Dsigma or lichnerowicz")),
        }
    }
}

pub fn parse_scheme(s: &str) -> Result<Scheme, HarnessError> {
    match s {
        "fourier" => Ok(Scheme::Fourier),
        "fd2" => Ok(Scheme::Fd2),
        _ => Err(value_error("scheme", format!("unknown scheme `{s}`; use fourier or fd2"))),
    }
}

/// `L`: lowest `jmax` eigenvalues. `Dsigma`: the `jmax` eigenvalues of
/// smallest modulus, signed. `lichnerowicz`: one residual row.
pub fn curve_spectrum_table(
    curve: &ClosedCurve,
    op: CurveOp,
    ngrid: usize,
    scheme: Scheme,
    jmax: usize,
    seed: u64,
) -> Result<Table, HarnessError> {
    let d = discretize(curve, ngrid, scheme)?;
    if op == CurveOp::Lichnerowicz {
        let mut t = Table::new(&["residual"]);
        t.rows.push(vec![Cell::Float(lichnerowicz_residual(&d)?)]);
        return Ok(t);
    }
    let matrix = match op {
        CurveOp::L => assemble_l(&d, 0.0)?,
        _ => assemble_extrinsic_dirac(&d)?,
    };
    let mut pairs: Vec<(f64, f64)> = match op {
        CurveOp::L => {
            let mut req = EigRequest::new(matrix.matrix.as_ref(), None, jmax);
            req.tol = BOUNDARY_TOL;
            req.seed = seed;
            let spec = lowest(&req)?;
            spec.eigenvalues.into_iter().zip(spec.residuals).collect()
        }
        _ => {
            let dense = crate::eigsolve::Matrix::Dense(matrix.matrix.to_dense());
            let mut req = EigRequest::new(dense.as_ref(), None, dense.dim());
            req.backend = Backend::Dense;
            let spec = lowest(&req)?;
            let mut all: Vec<(f64, f64)> = spec.eigenvalues.into_iter().zip(spec.residuals).collect();
            all.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));
            all.truncate(jmax);
            all
        }
    };
    pairs.truncate(jmax);
    let mut t = Table::new(&["j", "eigenvalue", "residual"]);
    for (j, (e, r)) in pairs.into_iter().enumerate() {
        t.rows.push(vec![Cell::Int(j as i64 + 1), Cell::Float(e), Cell::Float(r)]);
    }
    Ok(t)
}

/// Columns `channel, j, eigenvalue_of_square, secular_residual`, one row
/// per level (degenerate levels appear once, in their channel).
pub fn radial_table(p: &RadialProblem) -> Result<(Table, Option<String>), HarnessError> {
    let spec = radial_spectrum(p)?;
    let mut t = Table::new(&["channel", "j", "eigenvalue_of_square", "secular_residual"]);
    for e in &spec.eigenvalues {
        t.rows.push(vec![
            Cell::Int(e.channel as i64),
            Cell::Int(e.index as i64),
            Cell::Float(e.square),
            Cell::Float(e.residual),
        ]);
    }
    Ok((t, spec.warning))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FemRun {
    pub h: f64,
    pub m: f64,
    /// Exterior mass; `Some` selects the jump problem.
    pub big_m: Option<f64>,
    pub box_half_width: Option<f64>,
    pub jmax: usize,
    pub tol: f64,
    pub seed: u64,
}

/// Columns `j, eigenvalue, residual`. For jump problems eigenvalues at or
/// above `0.9 M²` are dropped and reported in the returned notes.
pub fn fem2d_table(curve: &ClosedCurve, run: &FemRun) -> Result<(Table, Vec<String>), HarnessError> {
    let (spec, limit) = match run.big_m {
        None => {
            let mesh = fem2d::build_mesh(curve, run.h, Problem::Bag, decay_layer(curve, run.m))?;
            let pencil = fem2d::assemble_bag_form(&mesh, run.m)?;
            (fem2d::solve_pencil(&pencil, run.jmax, run.tol, run.seed)?, f64::INFINITY)
        }
        Some(big_m) => {
            let l = run.box_half_width.unwrap_or_else(|| 3.0 * curve.circumradius_about(curve.center()));
            let mesh = fem2d::build_mesh_layers(
                curve,
                run.h,
                Problem::Jump { box_half_width: l },
                decay_layer(curve, run.m),
                Some(LayerSpec::for_decay(big_m)),
            )?;
            let pencil = fem2d::assemble_jump_form(&mesh, run.m, big_m)?;
            (fem2d::solve_pencil(&pencil, run.jmax, run.tol, run.seed)?, THRESHOLD_FRACTION * big_m * big_m)
        }
    };
    let mut notes = Vec::new();
    let mut t = Table::new(&["j", "eigenvalue", "residual"]);
    for (e, r) in spec.eigenvalues.iter().zip(&spec.residuals) {
        if *e >= limit {
            notes.push(format!("dropped {e:.6e}: at or above {THRESHOLD_FRACTION}·M² = {limit:.6e}"));
            continue;
        }
        t.rows.push(vec![Cell::Int(t.rows.len() as i64 + 1), Cell::Float(*e), Cell::Float(*r)]);
    }
    Ok((t, notes))
}
