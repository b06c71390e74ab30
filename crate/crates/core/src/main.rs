use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use dirac_ml::eigsolve::{DEFAULT_SEED, DEFAULT_TOL};
use dirac_ml::harness::{
    self, clifford_check, curve_spectrum_table, fem2d_table, model1d_table, parse_scheme, radial_table, run_study,
    Config, CurveOp, FemRun, HarnessError, Model1DOp, StudyConfig, Table,
};
use dirac_ml::model1d::Model1DParams;
use dirac_ml::radial_exact::RadialProblem;

const CONFIG_HELP: &str = "\
Config file: one `key = value` per line, `#` starts a comment. Every flag of a
subcommand can be given as a key of the same name (e.g. `alpha = 20`,
`curve = ellipse 2.0 1.0`); flags on the command line win.

Study keys:
  study       T1 | T2 | T3 | T1-ball | lichnerowicz | length-invariance
  curve       circle R | ellipse a b | fourier <path>  (rows k, ax, bx, ay, by)
  radius      ball radius (T1-ball)
  backend     exact | fem
  m-list      interior masses swept by T1 and T1-ball
  M-list      exterior masses swept by T2 and T3
  m           fixed interior mass for T2
  p           T3 coupling exponent, m = -M^p (default 0.5)
  ngrid-list  grid sizes for lichnerowicz and length-invariance
  jmax, h, box, final-gap, seed, tol, csv, svg

Environment: DIRAC_ML_THREADS caps the number of sweep points solved at once.
Exit status: 0 when every assertion passes, 1 when one fails, 2 on errors.";

#[derive(Parser, Debug)]
#[command(name = "dirac-ml", version, about = "Spectral solvers for Dirac operators with large-mass boundary conditions", after_help = CONFIG_HELP)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Eigensolver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of eigenvalues.
    #[arg(long, global = true)]
    jmax: Option<usize>,
    /// Also write an SVG gap plot (study only; needs --out).
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact anticommutation check of the gamma matrices in dimensions 1..=n.
    CliffordCheck {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Spectrum of the 1D Robin model operators.
    Model1d {
        /// S or Sprime.
        #[arg(long)]
        op: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Boundary operators on a closed curve.
    CurveSpectrum {
        #[arg(long)]
        curve: Option<String>,
        /// L, Dsigma or lichnerowicz.
        #[arg(long)]
        op: Option<String>,
        #[arg(long)]
        ngrid: Option<usize>,
        /// fourier or fd2.
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Exact spectrum of the squared bag (or jump) operator on the disk.
    DiskExact(RadialArgs),
    /// Exact spectrum of the squared bag operator on the ball.
    BallExact(RadialArgs),
    /// Finite element spectrum on a star-shaped domain.
    Fem2d {
        /// bag or jump.
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        curve: Option<String>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        m: Option<f64>,
        /// Exterior mass (jump).
        #[arg(long = "M")]
        big_m: Option<f64>,
        /// Dirichlet radius (jump).
        #[arg(long = "box")]
        box_half_width: Option<f64>,
    },
    /// Convergence study with pass/fail assertions.
    Study {
        #[arg(long)]
        study: Option<String>,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        curve: Option<String>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long = "m-list", allow_hyphen_values = true)]
        m_list: Option<String>,
        #[arg(long = "M-list")]
        big_m_list: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        m: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long = "ngrid-list")]
        ngrid_list: Option<String>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long = "box")]
        box_half_width: Option<f64>,
        #[arg(long = "final-gap")]
        final_gap: Option<f64>,
    },
}

#[derive(clap::Args, Debug)]
struct RadialArgs {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    /// Exterior mass; selects the jump problem (disk only).
    #[arg(long = "M")]
    big_m: Option<f64>,
    /// Channel cap.
    #[arg(long)]
    channels: Option<usize>,
}

fn set<T: ToString>(cfg: &mut Config, key: &str, value: Option<T>) {
    if let Some(v) = value {
        cfg.set(key, v.to_string());
    }
}

fn value<T: FromStr>(cfg: &Config, key: &str, default: Option<T>) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    match cfg.parsed(key)? {
        Some(v) => Ok(v),
        None => default.ok_or_else(|| HarnessError::Value { key: key.into(), msg: "missing".into() }),
    }
}

fn parse_enum<T: FromStr<Err = String>>(key: &str, text: &str) -> Result<T, HarnessError> {
    text.parse().map_err(|msg| HarnessError::Value { key: key.into(), msg })
}

fn emit_table(table: &Table, out: Option<&Path>, name: &str) -> Result<(), HarnessError> {
    let text = table.to_csv();
    match out {
        Some(dir) => {
            let path = dir.join(format!("{name}.csv"));
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })?;
            std::fs::write(&path, text).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    set(&mut cfg, "seed", cli.seed);
    set(&mut cfg, "tol", cli.tol);
    set(&mut cfg, "jmax", cli.jmax);
    let out = cli.out.as_deref();
    let seed: u64 = value(&cfg, "seed", Some(DEFAULT_SEED))?;
    let tol: f64 = value(&cfg, "tol", Some(DEFAULT_TOL))?;

    match cli.command {
        Command::CliffordCheck { n } => {
            set(&mut cfg, "n", n);
            let (lines, ok) = clifford_check(value(&cfg, "n", Some(12))?)?;
            for l in lines {
                println!("{l}");
            }
            Ok(ok)
        }
        Command::Model1d { op, alpha, beta, delta } => {
            set(&mut cfg, "op", op);
            set(&mut cfg, "alpha", alpha);
            set(&mut cfg, "beta", beta);
            set(&mut cfg, "delta", delta);
            let op: Model1DOp = parse_enum("op", &value::<String>(&cfg, "op", Some("S".into()))?)?;
            let p = Model1DParams::new(
                value(&cfg, "alpha", None)?,
                value(&cfg, "beta", Some(0.0))?,
                value(&cfg, "delta", None)?,
            )?;
            emit_table(&model1d_table(op, &p, value(&cfg, "jmax", Some(10))?)?, out, "model1d")?;
            Ok(true)
        }
        Command::CurveSpectrum { curve, op, ngrid, scheme } => {
            set(&mut cfg, "curve", curve);
            set(&mut cfg, "op", op);
            set(&mut cfg, "ngrid", ngrid);
            set(&mut cfg, "scheme", scheme);
            let curve = cfg
                .curve("curve")?
                .ok_or_else(|| HarnessError::Value { key: "curve".into(), msg: "missing".into() })?;
            let op: CurveOp = parse_enum("op", &value::<String>(&cfg, "op", Some("L".into()))?)?;
            let scheme = parse_scheme(&value::<String>(&cfg, "scheme", Some("fourier".into()))?)?;
            let table = curve_spectrum_table(
                &curve,
                op,
                value(&cfg, "ngrid", Some(256))?,
                scheme,
                value(&cfg, "jmax", Some(8))?,
                seed,
            )?;
            emit_table(&table, out, "curve-spectrum")?;
            Ok(true)
        }
        Command::DiskExact(args) => radial(&mut cfg, args, false, out),
        Command::BallExact(args) => radial(&mut cfg, args, true, out),
        Command::Fem2d { problem, curve, h, m, big_m, box_half_width } => {
            set(&mut cfg, "problem", problem);
            set(&mut cfg, "curve", curve);
            set(&mut cfg, "h", h);
            set(&mut cfg, "m", m);
            set(&mut cfg, "M", big_m);
            set(&mut cfg, "box", box_half_width);
            let curve = cfg.curve("curve")?.unwrap_or(harness::parse_curve("circle 1.0", None)?);
            let problem: String = value(&cfg, "problem", Some("bag".into()))?;
            let big_m = match problem.as_str() {
                "bag" => None,
                "jump" => Some(value(&cfg, "M", None)?),
                other => {
                    return Err(HarnessError::Value {
                        key: "problem".into(),
                        msg: format!("unknown problem `{other}`"),
                    })
                }
            };
            let run = FemRun {
                h: value(&cfg, "h", Some(0.05))?,
                m: value(&cfg, "m", Some(0.0))?,
                big_m,
                box_half_width: cfg.parsed("box")?,
                jmax: value(&cfg, "jmax", Some(8))?,
                tol,
                seed,
            };
            let (table, notes) = fem2d_table(&curve, &run)?;
            for n in notes {
                eprintln!("note: {n}");
            }
            emit_table(&table, out, "fem2d")?;
            Ok(true)
        }
        Command::Study {
            study,
            backend,
            curve,
            radius,
            m_list,
            big_m_list,
            m,
            p,
            ngrid_list,
            h,
            box_half_width,
            final_gap,
        } => {
            set(&mut cfg, "study", study);
            set(&mut cfg, "backend", backend);
            set(&mut cfg, "curve", curve);
            set(&mut cfg, "radius", radius);
            set(&mut cfg, "m-list", m_list);
            set(&mut cfg, "M-list", big_m_list);
            set(&mut cfg, "m", m);
            set(&mut cfg, "p", p);
            set(&mut cfg, "ngrid-list", ngrid_list);
            set(&mut cfg, "h", h);
            set(&mut cfg, "box", box_half_width);
            set(&mut cfg, "final-gap", final_gap);
            let mut sc = StudyConfig::from_config(&cfg)?;
            let stem = format!("study_{}", sc.study.name());
            if let Some(dir) = out {
                sc.csv.get_or_insert_with(|| dir.join(format!("{stem}.csv")));
                if cli.svg {
                    sc.svg.get_or_insert_with(|| dir.join(format!("{stem}.svg")));
                }
            }
            let to_stdout = sc.csv.is_none();
            let report = match run_study(&sc) {
                Ok(r) => r,
                Err(HarnessError::SweepPoint { partial, param, value, source }) => {
                    eprint!("{}", partial.summary());
                    return Err(HarnessError::SweepPoint { partial, param, value, source });
                }
                Err(e) => return Err(e),
            };
            if to_stdout {
                print!("{}", report.to_table().to_csv());
            }
            eprint!("{}", report.summary());
            Ok(report.passed())
        }
    }
}

fn radial(cfg: &mut Config, args: RadialArgs, ball: bool, out: Option<&Path>) -> Result<bool, HarnessError> {
    set(cfg, "radius", args.radius);
    set(cfg, "m", args.m);
    set(cfg, "M", args.big_m);
    set(cfg, "channels", args.channels);
    let radius = value(cfg, "radius", Some(1.0))?;
    let m = value(cfg, "m", Some(0.0))?;
    let jmax = value(cfg, "jmax", Some(10))?;
    let mut p = match (ball, cfg.parsed::<f64>("M")?) {
        (true, Some(_)) => {
            return Err(HarnessError::Unsupported("jump problems are only set up on the disk".into()));
        }
        (true, None) => RadialProblem::ball(radius, m, jmax),
        (false, Some(big_m)) => RadialProblem::disk_jump(radius, m, big_m, jmax),
        (false, None) => RadialProblem::disk(radius, m, jmax),
    };
    if let Some(cap) = cfg.parsed("channels")? {
        p.channel_cap = cap;
    }
    let (table, warning) = radial_table(&p)?;
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    emit_table(&table, out, if ball { "ball-exact" } else { "disk-exact" })?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
