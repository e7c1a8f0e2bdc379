//! `symcd`: decompose, approximate, analyze and reproduce.
//!
//! Exit codes:
//!   0  success
//!   1  unknown builtin scenario
//!   2  dimension mismatch
//!   3  parse failure (matrix, config or command line) or unreadable file
//!   4  solver failure
//!   5  no stabilizing approximation found
//!   6  unstable verdict under --strict-stability
//!   7  any other precondition or numeric failure

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use symcd::analysis::{self, FirstOrderTF, FrequencyGrid, Verdict};
use symcd::constraints::ProblemKind;
use symcd::matkit::{self, NumericConfig};
use symcd::scenarios::{self, GridSpec, Method, PlantSource, ScenarioSpec};
use symcd::solve::{Adapter, SdpOptions};
use symcd::symmetry::{frobenius_approximation, StructuredDecomposition, SymmetryKind, SymmetrySpec};
use symcd::Error;

#[derive(Parser, Debug)]
#[command(name = "symcd", version, about = "Symmetric approximations of cross-directional plants")]
struct Cli {
    /// JSON config with numeric tolerances, grid, solver, output directory and verbosity.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write gains in dB.
    #[arg(long, global = true)]
    db: bool,
    /// Exit with status 6 when a closed loop is judged unstable.
    #[arg(long, global = true)]
    strict_stability: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct SymArgs {
    /// Symmetry kind.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Number of blocks.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    b_y: usize,
    #[arg(long, default_value_t = 1)]
    b_u: usize,
    /// JSON file holding a symmetry section; overrides --kind/--n.
    #[arg(long)]
    symmetry: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum KindArg {
    Circulant,
    BlockCirculant,
    BlockCentrosymmetric,
    BcAndCs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum MethodArg {
    Frobenius,
    Lmi,
    Bmi,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ProblemArg {
    /// Performance and robustness at the listed frequencies.
    Bmi,
    /// Stability plus a worst-case error and robustness trade-off.
    Example29,
    /// Stop after the stabilizing initialization.
    Init,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frobenius decomposition R = R_S + Δ_S.
    Decompose {
        matrix: PathBuf,
        #[command(flatten)]
        sym: SymArgs,
    },
    /// Symmetric approximation by the chosen method.
    Approximate {
        matrix: PathBuf,
        #[command(flatten)]
        sym: SymArgs,
        #[arg(long, value_enum, default_value = "frobenius")]
        method: MethodArg,
        /// NP1 frequencies in rad/s, comma separated.
        #[arg(long, value_delimiter = ',')]
        omega: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, value_enum, default_value = "bmi")]
        problem: ProblemArg,
        /// T(s) as `bandwidth` or `numerator,pole`.
        #[arg(long = "T", default_value = "1")]
        t: String,
        #[arg(long, default_value = "1")]
        g: String,
    },
    /// Stability, sensitivity and robustness of a given approximation.
    Analyze {
        matrix: PathBuf,
        approx: PathBuf,
        #[command(flatten)]
        sym: SymArgs,
        #[arg(long = "T", default_value = "1")]
        t: String,
        #[arg(long, default_value = "1")]
        g: String,
        /// `lo,hi,count` in rad/s on a log scale.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Runs a builtin scenario or a scenario file.
    Reproduce {
        /// Builtin name; omit when --scenario is given.
        name: Option<String>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    #[serde(default)]
    numeric: Option<NumericConfig>,
    #[serde(default)]
    grid: Option<GridSpec>,
    #[serde(default)]
    solver: Option<String>,
    #[serde(default)]
    out: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[serde(default)]
    verbosity: Option<String>,
}

impl CliConfig {
    fn load(path: &Path) -> Result<CliConfig, Error> {
        let text = std::fs::read_to_string(path)?;
        let cfg: CliConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if let Some(g) = &cfg.grid {
            g.build()?;
        }
        if let Some(n) = &cfg.numeric {
            if !(n.psd_tol > 0.0 && n.hermitian_tol > 0.0) || n.rank_tol.is_some_and(|t| !(t > 0.0)) {
                return Err(Error::Parse("numeric tolerances must be positive".into()));
            }
        }
        if let Some(s) = &cfg.solver {
            Adapter::from_name(s)?;
        }
        if let Some(v) = &cfg.verbosity {
            v.parse::<log::LevelFilter>()
                .map_err(|_| Error::Parse(format!("unknown verbosity '{v}'")))?;
        }
        Ok(cfg)
    }
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    db: bool,
    strict: bool,
    sdp: SdpOptions,
    grid: Option<GridSpec>,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Unstable(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::UnknownBuiltin(_) => 1,
        Error::Dimension(_) => 2,
        Error::Parse(_) | Error::Io(_) => 3,
        Error::Solver(_) => 4,
        Error::NoStabilizer(_) => 5,
        _ => 7,
    }
}

fn parse_tf(s: &str) -> Result<FirstOrderTF, Error> {
    let bad = || Error::Parse(format!("transfer function '{s}': expected `bandwidth` or `numerator,pole`"));
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [bw] => FirstOrderTF::lowpass(*bw),
        [k, a] => FirstOrderTF::new(*k, *a),
        _ => Err(bad()),
    }
}

fn parse_grid(s: &str) -> Result<GridSpec, Error> {
    let bad = || Error::Parse(format!("grid '{s}': expected `lo,hi,count`"));
    let p: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi, n] = p.as_slice() else { return Err(bad()) };
    let g = GridSpec {
        lo: lo.parse().map_err(|_| bad())?,
        hi: hi.parse().map_err(|_| bad())?,
        count: n.parse().map_err(|_| bad())?,
    };
    g.build()?;
    Ok(g)
}

fn symmetry_spec(a: &SymArgs) -> Result<SymmetrySpec, Error> {
    if let Some(path) = &a.symmetry {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())));
    }
    let (Some(kind), Some(n)) = (a.kind, a.n) else {
        return Err(Error::Parse("give --kind and --n, or --symmetry <file>".into()));
    };
    let kind = match kind {
        KindArg::Circulant => SymmetryKind::Circulant,
        KindArg::BlockCirculant => SymmetryKind::BlockCirculant,
        KindArg::BlockCentrosymmetric => SymmetryKind::BlockCentrosymmetric,
        KindArg::BcAndCs => SymmetryKind::BcAndCs,
    };
    Ok(SymmetrySpec { kind, n, b_y: a.b_y, b_u: a.b_u, generators: None })
}

fn write(ctx: &Ctx, name: &str, body: String) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

fn write_json<T: Serialize>(ctx: &Ctx, name: &str, v: &T) -> Result<PathBuf, Error> {
    write(ctx, name, serde_json::to_string_pretty(v).expect("json") + "\n")
}

fn check_stable(ctx: &Ctx, what: &str, v: Verdict) -> Result<(), Failure> {
    if ctx.strict && v != Verdict::Stable {
        return Err(Failure::Unstable(format!("{what}: closed loop verdict is {v:?}")));
    }
    Ok(())
}

fn cmd_decompose(ctx: &Ctx, matrix: &Path, sym: &SymArgs) -> Result<(), Failure> {
    let r = matkit::read_matrix(matrix)?;
    let g = symmetry_spec(sym)?.build()?;
    let d = frobenius_approximation(&r, &g)?;
    let m = analysis::case_metrics(&d)?;
    write_json(ctx, "R_S.json", &matkit::matrix_to_json(&d.r_s))?;
    write_json(ctx, "Delta_S.json", &matkit::matrix_to_json(&d.delta_s))?;
    write(ctx, "metrics.csv", scenarios::metrics_csv(&[("frobenius".into(), m)]))?;
    println!(
        "rho(Phi_S) = {:.4}  |Delta_S|/|R| = {:.4}  cond(R) = {:.4}",
        m.rho_phi, m.delta_ratio_2, m.cond_r
    );
    let v = analysis::stability_spectral_radius(&d.phi_s)?.verdict;
    check_stable(ctx, "frobenius", v)
}

#[allow(clippy::too_many_arguments)]
fn cmd_approximate(
    ctx: &Ctx,
    matrix: &Path,
    sym: &SymArgs,
    method: MethodArg,
    omega: &[f64],
    eps: f64,
    max_iter: usize,
    problem: ProblemArg,
    t: &str,
    g: &str,
) -> Result<(), Failure> {
    let method = match method {
        MethodArg::Frobenius => Method::Frobenius,
        MethodArg::Lmi => Method::Lmi,
        MethodArg::Bmi => Method::Bmi,
    };
    let spec = ScenarioSpec {
        name: format!("approximate-{}", method.name()),
        symmetry: symmetry_spec(sym)?,
        plant: PlantSource::File { path: matrix.to_path_buf() },
        t: parse_tf(t)?,
        g: parse_tf(g)?,
        methods: vec![method],
        grid: ctx.grid.clone().unwrap_or(GridSpec { lo: 1e-2, hi: 1e5, count: 400 }),
        omegas: omega.to_vec(),
        seed: ctx.seed,
        bmi_problem: match problem {
            ProblemArg::Bmi => ProblemKind::BmiProblem,
            ProblemArg::Example29 => ProblemKind::Example29,
            ProblemArg::Init => ProblemKind::Init,
        },
        eps,
        max_iter,
        budget_s: None,
        potential: Default::default(),
    };
    let report = scenarios::run_scenario_with(&spec, &ctx.sdp)?;
    let m = &report.methods[0];
    let name = method.name();
    write_json(ctx, &format!("R_S_{name}.json"), &matkit::matrix_to_json(&m.decomposition.r_s))?;
    write_json(ctx, &format!("report_{name}.json"), m)?;
    if let Some(tr) = &m.trace {
        write(ctx, &format!("trace_{name}.csv"), tr.to_csv())?;
    }
    println!("method {name}: verdict {:?}, rho = {:.6}", m.verdict, m.metrics.rho_phi);
    let cert = &m.certificates;
    if let Some(a) = cert.alpha_inf {
        println!("alpha_inf = {a:.6e}");
    }
    if let Some(b) = cert.beta {
        println!("beta = {b:.6e}");
    }
    for (w, a) in spec.omegas.iter().zip(&cert.alpha_omega) {
        println!("alpha_omega({w}) = {a:.6e}");
    }
    check_stable(ctx, name, m.verdict)
}

fn cmd_analyze(
    ctx: &Ctx,
    matrix: &Path,
    approx: &Path,
    sym: &SymArgs,
    t: &str,
    g: &str,
    grid: Option<&str>,
) -> Result<(), Failure> {
    let r = matkit::read_matrix(matrix)?;
    let r_s = matkit::read_matrix(approx)?;
    let group = symmetry_spec(sym)?.build()?;
    let (t, gtf) = (parse_tf(t)?, parse_tf(g)?);
    let grid: FrequencyGrid = match grid {
        Some(s) => parse_grid(s)?.build()?,
        None => match &ctx.grid {
            Some(gs) => gs.build()?,
            None => FrequencyGrid::default(),
        },
    };
    let d = StructuredDecomposition::new(&r, r_s, &group)?;
    let stab = scenarios::stability_summary(&d, &t, &grid)?;
    let m = analysis::case_metrics(&d)?;
    let sens = analysis::sensitivity_sweep(&d, &t, &grid);
    let rob = analysis::robustness_sweep(&d, &t, &gtf, &grid);
    write(ctx, "sensitivity.csv", scenarios::sensitivity_csv(&sens, ctx.db))?;
    write(ctx, "robustness.csv", scenarios::robustness_csv(&rob, ctx.db))?;
    write(ctx, "metrics.csv", scenarios::metrics_csv(&[("given".into(), m)]))?;
    write_json(ctx, "stability.json", &stab)?;
    println!(
        "pole formula: {:?}  nyquist: {:?}  rho = {:.6}  U = {}  dominant: {}",
        stab.pole_formula.verdict,
        stab.nyquist.verdict,
        stab.spectral_radius.rho,
        stab.gersgorin_u.map_or("n/a".into(), |u| format!("{u:.6}")),
        stab.diag_dominant.map_or("n/a".into(), |b| b.to_string())
    );
    check_stable(ctx, "given approximation", stab.pole_formula.verdict)
}

fn cmd_reproduce(ctx: &Ctx, name: Option<&str>, scenario: Option<&Path>, seed_given: bool) -> Result<(), Failure> {
    let mut spec = match (name, scenario) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            serde_json::from_str::<ScenarioSpec>(&text).map_err(|e| {
                Error::Parse(format!("{}: {e}", path.display()))
            })?
        }
        (Some(n), None) => scenarios::builtin(n)?,
        (None, None) => {
            return Err(Error::UnknownBuiltin(String::new()).into());
        }
    };
    if seed_given {
        spec.seed = ctx.seed;
    }
    if let Some(g) = &ctx.grid {
        spec.grid = g.clone();
    }
    let report = scenarios::run_scenario_with(&spec, &ctx.sdp)?;
    let dir = ctx.out.join(&spec.name);
    scenarios::write_bundle(&report, &dir, ctx.db)?;
    print!("{}", scenarios::summary_table(&report));
    println!("bundle written to {}", dir.display());
    for m in &report.methods {
        if m.method != Method::Frobenius {
            check_stable(ctx, m.method.name(), m.verdict)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let level = cfg
        .verbosity
        .as_deref()
        .map(|v| v.parse().expect("validated"))
        .unwrap_or(log::LevelFilter::Warn);
    env_logger::Builder::new().filter_level(level).parse_default_env().try_init().ok();
    let adapter = match &cfg.solver {
        Some(s) => Adapter::from_name(s)?,
        None => Adapter::from_env()?,
    };
    let ctx = Ctx {
        out: cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("symcd-out")),
        seed: cli.seed.unwrap_or(0),
        db: cli.db,
        strict: cli.strict_stability,
        sdp: SdpOptions { numeric: cfg.numeric.unwrap_or_default(), adapter, ..Default::default() },
        grid: cfg.grid.clone(),
    };
    match &cli.cmd {
        Command::Decompose { matrix, sym } => cmd_decompose(&ctx, matrix, sym),
        Command::Approximate { matrix, sym, method, omega, eps, max_iter, problem, t, g } => {
            cmd_approximate(&ctx, matrix, sym, *method, omega, *eps, *max_iter, *problem, t, g)
        }
        Command::Analyze { matrix, approx, sym, t, g, grid } => {
            cmd_analyze(&ctx, matrix, approx, sym, t, g, grid.as_deref())
        }
        Command::Reproduce { name, scenario } => {
            cmd_reproduce(&ctx, name.as_deref(), scenario.as_deref(), cli.seed.is_some())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Unstable(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(6)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
