//! End-to-end runs: the two circulant examples, a synthetic
//! storage-ring-sized instance and the generator behind it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CaseMetrics, FirstOrderTF, FrequencyGrid, StabilityReport, Verdict};
use crate::constraints::{self as cs, AssembleOptions, Potential, ProblemKind, Tying};
use crate::error::{Error, Result};
use crate::matkit::{self, c, ComplexMatrix, NormKind, C64};
use crate::solve::{self, alg, InitOptions, IterationTrace, LoopOptions, SdpOptions, SolveStatus};
use crate::symmetry::{frobenius_approximation, StructuredDecomposition, SymmetryGroup, SymmetryKind, SymmetrySpec};

pub const BUILTINS: [&str; 3] = ["example-7.1", "example-7.2", "alba-synthetic"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Frobenius,
    Lmi,
    Bmi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Frobenius => "frobenius",
            Method::Lmi => "lmi",
            Method::Bmi => "bmi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub b_y: usize,
    pub b_u: usize,
    /// Target ‖Δ_S^F‖₂ / ‖R‖₂.
    pub planted_delta: f64,
    /// Condition number imposed on the symmetric part.
    #[serde(default)]
    pub condition_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSource {
    Inline {
        re: Vec<Vec<f64>>,
        #[serde(default)]
        im: Vec<Vec<f64>>,
    },
    File {
        path: PathBuf,
    },
    Generator {
        #[serde(flatten)]
        spec: GeneratorSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::log(self.lo, self.hi, self.count)
    }
}

fn default_eps() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    200
}

fn default_problem() -> ProblemKind {
    ProblemKind::BmiProblem
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub symmetry: SymmetrySpec,
    pub plant: PlantSource,
    /// Target complementary sensitivity T(s).
    pub t: FirstOrderTF,
    /// Actuator dynamics g(s).
    pub g: FirstOrderTF,
    pub methods: Vec<Method>,
    pub grid: GridSpec,
    /// NP1 frequencies in rad/s.
    #[serde(default)]
    pub omegas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Problem solved by the bmi method: `bmi_problem`, `example29`, or
    /// `init` to stop once the stabilizing initialization has succeeded.
    #[serde(default = "default_problem")]
    pub bmi_problem: ProblemKind,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Wall-clock budget for each convexifying loop, in seconds.
    #[serde(default)]
    pub budget_s: Option<f64>,
    #[serde(default)]
    pub potential: Potential,
}

/// R̂ = diag(r̂₁, r̂₂, r̂₂*) plus the hollow part with δ̂₁, δ̂₂, mapped back
/// with the unitary DFT.
pub fn example_plant(delta_scale: f64) -> Result<ComplexMatrix> {
    let (r1, r2) = (c(0.1, 0.0), c(-2.0, 1.0));
    let (d1, d2) = (c(1.0, 0.2) * delta_scale, c(-4.0, -4.0) * delta_scale);
    let z = c(0.0, 0.0);
    let r_hat = ComplexMatrix::from_row_slice(
        3,
        3,
        &[r1, d1, d1.conj(), d2, r2, z, d2.conj(), z, r2.conj()],
    );
    let g = crate::symmetry::group_from_kind(SymmetryKind::Circulant, 3, 1, 1, None)?;
    let r = g.from_symmetric_domain(&r_hat)?;
    if matkit::max_abs_imag(&r) > 1e-12 {
        return Err(Error::Numeric("example plant is not real".into()));
    }
    Ok(matkit::from_real(&matkit::real_part(&r)))
}

fn inline(r: &ComplexMatrix) -> PlantSource {
    PlantSource::Inline {
        re: (0..r.nrows()).map(|i| r.row(i).iter().map(|z| z.re).collect()).collect(),
        im: (0..r.nrows()).map(|i| r.row(i).iter().map(|z| z.im).collect()).collect(),
    }
}

pub fn builtin(name: &str) -> Result<ScenarioSpec> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let circ3 = SymmetrySpec { kind: SymmetryKind::Circulant, n: 3, b_y: 1, b_u: 1, generators: None };
    let t1 = FirstOrderTF::lowpass(1.0)?;
    match name {
        "example-7.1" => Ok(ScenarioSpec {
            name: name.into(),
            symmetry: circ3,
            plant: inline(&example_plant(1.0)?),
            t: t1,
            g: t1,
            methods: vec![Method::Frobenius, Method::Bmi],
            grid: GridSpec { lo: 1e-2, hi: 1e4, count: 600 },
            omegas: vec![],
            seed: 0,
            bmi_problem: ProblemKind::Init,
            eps: 1e-3,
            max_iter: 50,
            budget_s: None,
            potential: Potential::Psd,
        }),
        "example-7.2" => Ok(ScenarioSpec {
            name: name.into(),
            symmetry: circ3,
            plant: inline(&example_plant(0.1)?),
            t: t1,
            g: t1,
            methods: vec![Method::Frobenius, Method::Lmi, Method::Bmi],
            grid: GridSpec { lo: 1e-2, hi: 1e4, count: 600 },
            omegas: vec![two_pi * 100.0],
            seed: 0,
            bmi_problem: ProblemKind::BmiProblem,
            eps: 1e-3,
            max_iter: 200,
            budget_s: None,
            potential: Potential::Psd,
        }),
        "alba-synthetic" => Ok(ScenarioSpec {
            name: name.into(),
            symmetry: SymmetrySpec { kind: SymmetryKind::BcAndCs, n: 4, b_y: 22, b_u: 22, generators: None },
            plant: PlantSource::Generator {
                spec: GeneratorSpec { n: 4, b_y: 22, b_u: 22, planted_delta: 0.0434, condition_target: Some(856.0) },
            },
            t: FirstOrderTF::lowpass(two_pi * 200.0)?,
            g: FirstOrderTF::lowpass(two_pi * 700.0)?,
            methods: vec![Method::Frobenius, Method::Lmi, Method::Bmi],
            grid: GridSpec { lo: 1e-1, hi: 1e6, count: 400 },
            omegas: vec![two_pi * 100.0],
            seed: 0,
            bmi_problem: ProblemKind::BmiProblem,
            eps: 1e-3,
            max_iter: 2,
            budget_s: Some(600.0),
            potential: Potential::Psd,
        }),
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// Generator

/// Random real S-member with i.i.d. Gaussian basis coefficients.
fn random_member(g: &SymmetryGroup, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let y: Vec<C64> = (0..g.commutant_dim()).map(|_| c(StandardNormal.sample(rng), 0.0)).collect();
    g.from_coefficients(&y)
}

/// Maps singular values σ ↦ σ_max·(σ/σ_max)^b so that κ hits the target.
/// R·h(R*R) is a function of R*R, so it stays in the commutant.
fn shape_condition(r: &ComplexMatrix, target: f64) -> Result<ComplexMatrix> {
    if !(target >= 1.0) || !target.is_finite() {
        return Err(Error::Precondition(format!("condition target {target} must be finite and >= 1")));
    }
    let svd = matkit::to_faer(r).thin_svd().map_err(|_| Error::Numeric("SVD did not converge".into()))?;
    let k = r.nrows().min(r.ncols());
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i].re).collect();
    let (smax, smin) = (s[0], s[k - 1]);
    if !(smin > 0.0) {
        return Err(Error::Precondition("condition target needs a full-rank symmetric part".into()));
    }
    let kappa = smax / smin;
    if kappa <= 1.0 + 1e-12 {
        if (target - 1.0).abs() < 1e-12 {
            return Ok(r.clone());
        }
        return Err(Error::Precondition(
            "all singular values coincide; the condition target cannot be reached".into(),
        ));
    }
    let b = target.ln() / kappa.ln();
    let u = matkit::from_faer(svd.U());
    let v = matkit::from_faer(svd.V());
    let d = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        k,
        s.iter().map(|&x| c(smax * (x / smax).powf(b), 0.0)),
    ));
    Ok(matkit::matmul(&matkit::matmul(&u, &d), &v.adjoint()))
}

/// R = R_S + s·Δ with Δ the S⊥ part of E·R_S and s chosen so that
/// ‖Δ_S^F‖₂/‖R‖₂ hits the planted value.
pub fn generate_instance(gs: &GeneratorSpec, g: &SymmetryGroup, seed: u64) -> Result<ComplexMatrix> {
    if (gs.n, gs.b_y, gs.b_u) != (g.n, g.b_y, g.b_u) {
        return Err(Error::Dimension(format!(
            "generator is n={} b=({}, {}), symmetry is n={} b=({}, {})",
            gs.n, gs.b_y, gs.b_u, g.n, g.b_y, g.b_u
        )));
    }
    if !(0.0..1.0).contains(&gs.planted_delta) {
        return Err(Error::Precondition("planted_delta must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r_s = random_member(g, &mut rng);
    if let Some(k) = gs.condition_target {
        r_s = shape_condition(&r_s, k)?;
    }
    r_s = matkit::from_real(&matkit::real_part(&r_s));
    if gs.planted_delta == 0.0 {
        return Ok(r_s);
    }
    // Multiplicative draw E·R_S: the asymmetry follows the dominant
    // directions of R_S, so ‖Φ‖ stays moderate even for large κ.
    let e = ComplexMatrix::from_fn(g.n_y(), g.n_y(), |_, _| c(StandardNormal.sample(&mut rng), 0.0));
    let raw = matkit::matmul(&e, &r_s);
    let delta = &raw - g.reynolds(&raw)?;
    let dn = matkit::norm(&delta, NormKind::Two);
    if !(dn > 0.0) {
        return Err(Error::Precondition("the orthogonal complement of the commutant is trivial".into()));
    }
    let ratio = |s: f64| s * dn / matkit::norm(&(&r_s + &delta * c(s, 0.0)), NormKind::Two);
    let target = gs.planted_delta;
    let mut hi = matkit::norm(&r_s, NormKind::Two) / dn;
    while ratio(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(&r_s + &delta * c(0.5 * (lo + hi), 0.0))
}

// ---------------------------------------------------------------------------
// Running

#[derive(Debug, Clone, Serialize)]
pub struct StabilitySummary {
    pub pole_formula: StabilityReport,
    pub nyquist: StabilityReport,
    pub spectral_radius: StabilityReport,
    /// Only defined when the symmetric-domain error is block-hollow.
    pub gersgorin_u: Option<f64>,
    pub diag_dominant: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Certificates {
    pub alpha_inf: Option<f64>,
    pub beta: Option<f64>,
    pub alpha_omega: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub verdict: Verdict,
    pub stability: StabilitySummary,
    pub metrics: CaseMetrics,
    pub certificates: Certificates,
    /// 1/‖R_S^†‖₂, the leading-order robustness margin.
    pub rs_bound: f64,
    /// 1/‖M(j0)‖₂ from the full robustness expression.
    pub robustness_dc: Option<f64>,
    pub peak_gain: f64,
    pub peak_db: f64,
    pub peak_omega_rad_s: f64,
    /// Largest first-order performance bound over the NP1 frequencies.
    pub perf_bounds: Vec<Option<f64>>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub halted: Option<String>,
    pub fallback_used: bool,
    pub init_attempts: Option<usize>,
    pub init_sigma: Option<f64>,
    /// Symmetric-domain diagonal of R_S for inspection.
    #[serde(serialize_with = "ser_complex")]
    pub r_s_hat_diag: Vec<C64>,
    #[serde(skip)]
    pub decomposition: StructuredDecomposition,
    #[serde(skip)]
    pub sensitivity: analysis::Sweep<analysis::SensitivityPoint>,
    #[serde(skip)]
    pub robustness: analysis::Sweep<analysis::RobustnessPoint>,
    #[serde(skip)]
    pub trace: Option<IterationTrace>,
}

fn ser_complex<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    /// "inline", "file" or "generated".
    pub provenance: String,
    pub seed: u64,
    pub symmetry: SymmetrySpec,
    pub commutant_dim: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub omegas: Vec<f64>,
    pub methods: Vec<MethodReport>,
    #[serde(skip)]
    pub r: ComplexMatrix,
}

impl Report {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

pub fn load_plant(spec: &ScenarioSpec, g: &SymmetryGroup) -> Result<(ComplexMatrix, &'static str)> {
    match &spec.plant {
        PlantSource::Inline { re, im } => {
            let rows = re.len();
            let cols = re.first().map_or(0, |r| r.len());
            Ok((matkit::from_parts(rows, cols, re, im)?, "inline"))
        }
        PlantSource::File { path } => Ok((matkit::read_matrix(path)?, "file")),
        PlantSource::Generator { spec: gs } => Ok((generate_instance(gs, g, spec.seed)?, "generated")),
    }
}

fn stage<T>(r: Result<T>, name: &str) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

fn hollow_only<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Precondition(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn stability_summary(d: &StructuredDecomposition, t: &FirstOrderTF, grid: &FrequencyGrid) -> Result<StabilitySummary> {
    Ok(StabilitySummary {
        pole_formula: analysis::stability_first_order(&d.phi_s, t)?,
        nyquist: analysis::stability_nyquist(&d.phi_s, t, grid)?,
        spectral_radius: analysis::stability_spectral_radius(&d.phi_s)?,
        gersgorin_u: hollow_only(analysis::gersgorin_bound(d, NormKind::Two))?,
        diag_dominant: hollow_only(analysis::diag_dominance(d, NormKind::Two))?,
    })
}

struct Approximation {
    x: ComplexMatrix,
    certificates: Certificates,
    trace: Option<IterationTrace>,
    init: Option<(usize, f64)>,
}

fn loop_options(spec: &ScenarioSpec, sdp: &SdpOptions) -> LoopOptions {
    LoopOptions {
        eps: spec.eps,
        max_iter: spec.max_iter,
        budget: spec.budget_s.map(Duration::from_secs_f64),
        sdp: *sdp,
    }
}

fn certificates(p: &cs::ConicProblem, y: &[f64]) -> Certificates {
    let get = |name: &str| p.vars.find(name).map(|id| p.vars.scalar(id, y));
    let alpha_omega = (0..)
        .map_while(|k| get(&format!("alpha_omega_{k}")))
        .collect();
    Certificates { alpha_inf: get("alpha_inf"), beta: get("beta"), alpha_omega }
}

fn solve_lmi(r: &ComplexMatrix, g: &SymmetryGroup, d_f: &StructuredDecomposition, sdp: &SdpOptions) -> Result<Approximation> {
    let opts = AssembleOptions { weights: Some(cs::frobenius_weights(d_f, &[])), ..Default::default() };
    let p = cs::assemble(ProblemKind::LmiProblem, r, g, &opts)?;
    let out = solve::solve_sdp(&p, sdp)?;
    if out.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("LMI problem ended {:?}: {}", out.status, out.message)));
    }
    Ok(Approximation {
        x: cs::x_matrix(&p, g, &out.assignment)?,
        certificates: certificates(&p, &out.assignment),
        trace: None,
        init: None,
    })
}

/// Sets every scalar bound just above the value it certifies at the start.
fn feasible_start(p: &cs::ConicProblem, y: &mut [f64], p_hat: Option<&ComplexMatrix>) -> Result<()> {
    let n = p.r_hat.nrows();
    let phi = matkit::matmul(&p.r_hat, &p.vars.matrix(p.x, y)) - matkit::identity(n);
    let x = p.vars.matrix(p.x, y);
    let pad = |v: f64| v * (1.0 + 1e-3) + 1e-6;
    let sq = |m: &ComplexMatrix| matkit::norm(m, NormKind::Two).powi(2);
    if let Some(id) = p.vars.find("alpha_inf") {
        y[p.vars.group(id).offset] = pad(sq(&phi));
    }
    if let Some(id) = p.vars.find("beta") {
        y[p.vars.group(id).offset] = pad(sq(&x));
    }
    for b in &p.bmis {
        if let cs::BmiKind::Np1 { t_re, t_im, .. } = b.kind {
            let t = c(t_re, t_im);
            let id = b.scalar.expect("NP1 bound");
            y[p.vars.group(id).offset] = pad(sq(&(&phi - &phi * &phi * t)));
        }
    }
    if let (Some(id), Some(ph)) = (p.vars.find("P"), p_hat) {
        let coeffs = p.vars.coefficients_of(id, ph)?;
        p.vars.set(id, y, &coeffs);
    }
    Ok(())
}

fn solve_bmi(
    spec: &ScenarioSpec,
    r: &ComplexMatrix,
    g: &SymmetryGroup,
    d_f: &StructuredDecomposition,
    sdp: &SdpOptions,
) -> Result<Approximation> {
    let rho_f = matkit::spectral_radius(&d_f.phi_s)?;
    let stop_after_init = spec.bmi_problem == ProblemKind::Init;
    let (x0, init) = if rho_f < 1.0 && !stop_after_init {
        (d_f.r_s_pinv.clone(), None)
    } else {
        let io = InitOptions {
            seed: spec.seed,
            lp: LoopOptions { max_iter: spec.max_iter.min(50), ..loop_options(spec, sdp) },
            ..Default::default()
        };
        let out = stage(alg::init_unstable(r, g, &io), "init")?;
        if stop_after_init {
            let sigma = out.sigma;
            return Ok(Approximation {
                x: out.x,
                certificates: Certificates::default(),
                trace: Some(out.trace),
                init: Some((out.attempts, sigma)),
            });
        }
        (out.x, Some((out.attempts, out.sigma)))
    };
    let ts: Vec<C64> = spec.omegas.iter().map(|&w| spec.t.eval(w)).collect();
    let opts = AssembleOptions {
        weights: Some(cs::frobenius_weights(d_f, &ts)),
        np1: spec.omegas.iter().copied().zip(ts.iter().copied()).collect(),
        potential: spec.potential,
        tying: Tying::Paired,
        ..Default::default()
    };
    let p = cs::assemble(spec.bmi_problem, r, g, &opts)?;
    let mut y0 = vec![0.0; p.vars.total()];
    let xc = cs::x_coefficients(&p, g, &x0)?;
    p.vars.set(p.x, &mut y0, &xc);
    // A fresh Lyapunov solution puts the start well inside NS3, whereas the
    // init certificate sits on its boundary.
    let p_hat = match p.vars.find("P") {
        None => None,
        Some(_) => {
            let n = p.r_hat.nrows();
            let phi = matkit::matmul(&p.r_hat, &p.vars.matrix(p.x, &y0)) - matkit::identity(n);
            Some(alg::lyapunov(&phi)?)
        }
    };
    feasible_start(&p, &mut y0, p_hat.as_ref())?;
    let (y, trace) = convexify(&p, &y0, &loop_options(spec, sdp))?;
    Ok(Approximation {
        x: cs::x_matrix(&p, g, &y)?,
        certificates: certificates(&p, &y),
        trace: Some(trace),
        init,
    })
}

fn convexify(p: &cs::ConicProblem, y0: &[f64], lo: &LoopOptions) -> Result<(Vec<f64>, IterationTrace)> {
    stage(solve::convexifying_loop(p, y0, lo), "alg1")
}

/// R_S from the solved X; X is real whenever R is, so only rounding is
/// discarded.
fn r_s_from_x(x: &ComplexMatrix, r: &ComplexMatrix) -> Result<ComplexMatrix> {
    let r_s = matkit::pinv(x, None)?;
    if matkit::max_abs_imag(r) == 0.0 && matkit::max_abs_imag(&r_s) < 1e-9 * matkit::max_abs(&r_s) {
        return Ok(matkit::from_real(&matkit::real_part(&r_s)));
    }
    Ok(r_s)
}

fn analyse(
    method: Method,
    d: StructuredDecomposition,
    spec: &ScenarioSpec,
    grid: &FrequencyGrid,
    approx: Approximation,
) -> Result<MethodReport> {
    let stability = stage(stability_summary(&d, &spec.t, grid), "analysis")?;
    let metrics = analysis::case_metrics(&d)?;
    let sensitivity = analysis::sensitivity_sweep(&d, &spec.t, grid);
    let robustness = analysis::robustness_sweep(&d, &spec.t, &spec.g, grid);
    let (peak_omega, peak_gain) = analysis::peak(&sensitivity).unwrap_or((f64::NAN, f64::NAN));
    let perf_bounds = spec
        .omegas
        .iter()
        .map(|&w| analysis::performance_error(&d, &spec.t, w).ok().and_then(|p| p.bound))
        .collect();
    let r_s_pinv_norm = matkit::norm(&d.r_s_pinv, NormKind::Two);
    let verdict = stability.pole_formula.verdict;
    let r_s_hat_diag = (0..d.r_s_hat.nrows().min(d.r_s_hat.ncols())).map(|i| d.r_s_hat[(i, i)]).collect();
    let robustness_dc = analysis::robustness_at(&d, &spec.t, &spec.g, 0.0);
    let tr = approx.trace.as_ref();
    Ok(MethodReport {
        method,
        verdict,
        stability,
        metrics,
        certificates: approx.certificates,
        rs_bound: if r_s_pinv_norm > 0.0 { 1.0 / r_s_pinv_norm } else { f64::INFINITY },
        robustness_dc,
        peak_gain,
        peak_db: analysis::to_db(peak_gain),
        peak_omega_rad_s: peak_omega,
        perf_bounds,
        iterations: tr.map(|t| t.iterates.len() - 1),
        converged: tr.map(|t| t.converged),
        halted: tr.and_then(|t| t.halted.clone()),
        fallback_used: tr.is_some_and(|t| t.iterates.iter().any(|i| i.fallback)),
        init_attempts: approx.init.map(|i| i.0),
        init_sigma: approx.init.map(|i| i.1),
        r_s_hat_diag,
        decomposition: d,
        sensitivity,
        robustness,
        trace: approx.trace,
    })
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<Report> {
    run_scenario_with(spec, &SdpOptions { adapter: solve::Adapter::from_env()?, ..Default::default() })
}

pub fn run_scenario_with(spec: &ScenarioSpec, sdp: &SdpOptions) -> Result<Report> {
    let g = stage(spec.symmetry.build(), "symmetry")?;
    let (r, provenance) = stage(load_plant(spec, &g), "plant")?;
    stage(g.check_dims(&r, g.n_y(), g.n_u(), "R"), "plant")?;
    let grid = stage(spec.grid.build(), "grid")?;
    if spec.methods.contains(&Method::Bmi) && spec.bmi_problem == ProblemKind::BmiProblem && spec.omegas.is_empty() {
        return Err(Error::Precondition("the bmi method needs at least one NP1 frequency".into()).at_stage("config"));
    }
    let d_f = stage(frobenius_approximation(&r, &g), "frobenius")?;
    let mut methods = Vec::new();
    for &m in &spec.methods {
        log::info!("{}: running {}", spec.name, m.name());
        let approx = match m {
            Method::Frobenius => Approximation {
                x: d_f.r_s_pinv.clone(),
                certificates: Certificates::default(),
                trace: None,
                init: None,
            },
            Method::Lmi => stage(solve_lmi(&r, &g, &d_f, sdp), "lmi")?,
            Method::Bmi => stage(solve_bmi(spec, &r, &g, &d_f, sdp), "bmi")?,
        };
        let d = match m {
            Method::Frobenius => d_f.clone(),
            _ => stage(StructuredDecomposition::new(&r, r_s_from_x(&approx.x, &r)?, &g), m.name())?,
        };
        methods.push(analyse(m, d, spec, &grid, approx)?);
    }
    Ok(Report {
        scenario: spec.name.clone(),
        provenance: provenance.to_string(),
        seed: spec.seed,
        symmetry: spec.symmetry.clone(),
        commutant_dim: g.commutant_dim(),
        n_y: g.n_y(),
        n_u: g.n_u(),
        omegas: spec.omegas.clone(),
        methods,
        r,
    })
}

// ---------------------------------------------------------------------------
// Output

pub fn metrics_csv(rows: &[(String, CaseMetrics)]) -> String {
    let mut s = String::from(
        "method,rho_phi,delta_ratio_2,delta_ratio_mean,delta_ratio_max,phi_norm_2,r_s_pinv_norm_2,cond_r\n",
    );
    for (name, m) in rows {
        s.push_str(&format!(
            "{name},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            m.rho_phi, m.delta_ratio_2, m.delta_ratio_mean, m.delta_ratio_max, m.phi_norm_2, m.r_s_pinv_norm_2, m.cond_r
        ));
    }
    s
}

fn gain(x: f64, db: bool) -> f64 {
    if db {
        analysis::to_db(x)
    } else {
        x
    }
}

pub fn sensitivity_csv(s: &analysis::Sweep<analysis::SensitivityPoint>, db: bool) -> String {
    let unit = if db { "db" } else { "linear" };
    let mut out = format!("omega_rad_s,sigma_max_{unit},sigma_min_{unit}\n");
    for p in &s.points {
        out.push_str(&format!("{:.10e},{:.10e},{:.10e}\n", p.omega_rad_s, gain(p.sigma_max, db), gain(p.sigma_min, db)));
    }
    out
}

pub fn robustness_csv(s: &analysis::Sweep<analysis::RobustnessPoint>, db: bool) -> String {
    let unit = if db { "db" } else { "linear" };
    let mut out = format!("omega_rad_s,theta_bound_{unit}\n");
    for p in &s.points {
        out.push_str(&format!("{:.10e},{:.10e}\n", p.omega_rad_s, gain(p.theta_bound, db)));
    }
    out
}

/// Writes summary.json, metrics.csv and per-method CSVs into `dir`.
pub fn write_bundle(report: &Report, dir: &Path, db: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    let summary = serde_json::to_string_pretty(report).map_err(|e| Error::Numeric(e.to_string()))?;
    put("summary.json".into(), summary + "\n")?;
    let rows: Vec<(String, CaseMetrics)> =
        report.methods.iter().map(|m| (m.method.name().to_string(), m.metrics)).collect();
    put("metrics.csv".into(), metrics_csv(&rows))?;
    for m in &report.methods {
        let name = m.method.name();
        put(format!("sensitivity_{name}.csv"), sensitivity_csv(&m.sensitivity, db))?;
        put(format!("robustness_{name}.csv"), robustness_csv(&m.robustness, db))?;
        if let Some(t) = &m.trace {
            put(format!("trace_{name}.csv"), t.to_csv())?;
        }
        let rs = serde_json::to_string(&matkit::matrix_to_json(&m.decomposition.r_s)).expect("matrix json");
        put(format!("R_S_{name}.json"), rs + "\n")?;
    }
    Ok(written)
}

/// Compact table printed by the reproduce command.
pub fn summary_table(report: &Report) -> String {
    let mut s = format!(
        "{} ({}, {}x{}, commutant dim {})\n",
        report.scenario, report.provenance, report.n_y, report.n_u, report.commutant_dim
    );
    s.push_str(&format!(
        "{:<10} {:>10} {:>12} {:>10} {:>10} {:>10}\n",
        "method", "verdict", "rho", "peak dB", "1/|R_S^+|", "iters"
    ));
    let mut by: BTreeMap<Method, &MethodReport> = BTreeMap::new();
    for m in &report.methods {
        by.insert(m.method, m);
    }
    for (k, m) in by {
        s.push_str(&format!(
            "{:<10} {:>10} {:>12.6} {:>10.3} {:>10.4} {:>10}\n",
            k.name(),
            format!("{:?}", m.verdict).to_lowercase(),
            m.metrics.rho_phi,
            m.peak_db,
            m.rs_bound,
            m.iterations.map_or("-".to_string(), |i| i.to_string())
        ));
    }
    if let (Some(f), Some(b)) = (report.method(Method::Frobenius), report.method(Method::Bmi)) {
        if f.verdict != Verdict::Stable && b.verdict == Verdict::Stable {
            s.push_str(&format!("unstable -> stabilized, rho_final = {:.4} < 1\n", b.metrics.rho_phi));
        }
        if f.peak_gain.is_finite() && b.peak_gain.is_finite() {
            s.push_str(&format!("peak(frobenius) - peak(bmi) = {:.3} dB\n", f.peak_db - b.peak_db));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_plant_is_real_and_unscaled() {
        let r = example_plant(1.0).unwrap();
        assert_eq!(r.shape(), (3, 3));
        let g = crate::symmetry::group_from_kind(SymmetryKind::Circulant, 3, 1, 1, None).unwrap();
        let r_hat = g.to_symmetric_domain(&r).unwrap();
        assert!((r_hat[(0, 0)] - c(0.1, 0.0)).norm() < 1e-12);
        assert!((r_hat[(1, 1)] - c(-2.0, 1.0)).norm() < 1e-12);
        assert!((r_hat[(1, 0)] - c(-4.0, -4.0)).norm() < 1e-12);
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin("nope"), Err(Error::UnknownBuiltin(_))));
        for b in BUILTINS {
            builtin(b).unwrap();
        }
    }

    #[test]
    fn generator_zero_delta_is_symmetric() {
        let g = crate::symmetry::group_from_kind(SymmetryKind::BcAndCs, 4, 3, 3, None).unwrap();
        let gs = GeneratorSpec { n: 4, b_y: 3, b_u: 3, planted_delta: 0.0, condition_target: Some(20.0) };
        let r = generate_instance(&gs, &g, 5).unwrap();
        assert!(g.contains(&r, 1e-10));
        assert!((matkit::cond(&r) - 20.0).abs() < 1e-6);
    }

    #[test]
    fn condition_target_below_one_rejected() {
        let g = crate::symmetry::group_from_kind(SymmetryKind::BcAndCs, 4, 2, 2, None).unwrap();
        let gs = GeneratorSpec { n: 4, b_y: 2, b_u: 2, planted_delta: 0.1, condition_target: Some(0.5) };
        assert!(matches!(generate_instance(&gs, &g, 0), Err(Error::Precondition(_))));
    }
}
