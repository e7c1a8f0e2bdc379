//! Closed-loop IMC analysis: stability verdicts, block Geršgorin bounds and
//! frequency sweeps of sensitivity, performance error and robustness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{self, c, ComplexMatrix, NormKind, C64, ONE};
use crate::symmetry::StructuredDecomposition;

/// Real-axis band around the stability boundary reported as inconclusive.
pub const MARGINAL_BAND: f64 = 1e-6;
/// Condition number above which I + TΦ counts as singular.
pub const SINGULAR_COND: f64 = 1e12;

/// T(s) = gain_num / (s + pole).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstOrderTF {
    pub gain_num: f64,
    pub pole: f64,
}

impl FirstOrderTF {
    pub fn new(gain_num: f64, pole: f64) -> Result<Self> {
        if !(pole > 0.0) || !pole.is_finite() || !gain_num.is_finite() {
            return Err(Error::Precondition(format!(
                "first-order transfer function needs a finite pole > 0, got {pole}"
            )));
        }
        Ok(FirstOrderTF { gain_num, pole })
    }

    /// Unit DC gain filter λ/(s+λ).
    pub fn lowpass(bandwidth: f64) -> Result<Self> {
        Self::new(bandwidth, bandwidth)
    }

    pub fn dc_gain(&self) -> f64 {
        self.gain_num / self.pole
    }

    pub fn eval(&self, omega: f64) -> C64 {
        c(self.gain_num, 0.0) / c(self.pole, omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub points: Vec<f64>,
    pub scale: GridScale,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>, scale: GridScale) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Precondition("frequency grid needs at least 2 points".into()));
        }
        if points.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Precondition("frequencies must be finite and >= 0".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("frequencies must be strictly increasing".into()));
        }
        Ok(FrequencyGrid { points, scale })
    }

    pub fn log(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0) || !(hi > lo) || count < 2 {
            return Err(Error::Precondition(format!("bad log grid [{lo}, {hi}] x {count}")));
        }
        let (a, b) = (lo.log10(), hi.log10());
        let pts = (0..count)
            .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
            .collect();
        Self::new(pts, GridScale::Log)
    }

    pub fn linear(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(hi > lo) {
            return Err(Error::Precondition(format!("bad linear grid [{lo}, {hi}] x {count}")));
        }
        let pts = (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect();
        Self::new(pts, GridScale::Linear)
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid::log(1e-2, 1e5, 400).expect("static grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    PoleFormula,
    NyquistDet,
    SpectralRadius,
    Gersgorin,
    DiagDominance,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub method: StabilityMethod,
    #[serde(serialize_with = "ser_complex_list")]
    pub eigenvalues: Vec<C64>,
    pub rho: f64,
    pub bound_u: Option<f64>,
    pub winding: Option<i64>,
}

fn ser_complex_list<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

fn square(phi: &ComplexMatrix) -> Result<()> {
    if !phi.is_square() {
        return Err(Error::Dimension(format!(
            "error matrix must be square, got {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    Ok(())
}

/// Exact verdict from the pole of 1 + φT(s): s = −pole − φ·gain_num.
pub fn stability_first_order(phi: &ComplexMatrix, t: &FirstOrderTF) -> Result<StabilityReport> {
    square(phi)?;
    let eig = matkit::eigenvalues(phi)?;
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut verdict = Verdict::Stable;
    if t.gain_num != 0.0 {
        let boundary = -t.pole / t.gain_num;
        for z in &eig {
            let margin = (z.re - boundary) * t.gain_num.signum();
            if margin.abs() < MARGINAL_BAND {
                if verdict == Verdict::Stable {
                    verdict = Verdict::Inconclusive;
                }
            } else if margin < 0.0 {
                verdict = Verdict::Unstable;
            }
        }
    }
    Ok(StabilityReport {
        verdict,
        method: StabilityMethod::PoleFormula,
        eigenvalues: eig,
        rho,
        bound_u: None,
        winding: None,
    })
}

/// Sufficient test ρ(Φ) < 1; never reports unstable.
pub fn stability_spectral_radius(phi: &ComplexMatrix) -> Result<StabilityReport> {
    square(phi)?;
    let eig = matkit::eigenvalues(phi)?;
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(StabilityReport {
        verdict: if rho < 1.0 { Verdict::Stable } else { Verdict::Inconclusive },
        method: StabilityMethod::SpectralRadius,
        eigenvalues: eig,
        rho,
        bound_u: None,
        winding: None,
    })
}

const MAX_REFINE_DEPTH: u32 = 40;
const PHASE_STEP: f64 = std::f64::consts::FRAC_PI_2;

/// Unwrapped phase change of f between w0 and w1, bisecting wherever a
/// step reaches π/2.
fn phase_change(f: &dyn Fn(f64) -> C64, w0: f64, f0: C64, w1: f64, f1: C64, depth: u32) -> Option<f64> {
    let step = (f1 / f0).arg();
    if step.abs() < PHASE_STEP {
        return Some(step);
    }
    if depth == 0 {
        return None;
    }
    let wm = 0.5 * (w0 + w1);
    let fm = f(wm);
    if fm.norm() < 1e-12 {
        return None;
    }
    Some(phase_change(f, w0, f0, wm, fm, depth - 1)? + phase_change(f, wm, fm, w1, f1, depth - 1)?)
}

/// Winding of ∏(1 + φ_i T(jω)) about the origin along the full imaginary
/// axis, accumulated per factor from unwrapped phase.
pub fn stability_nyquist(phi: &ComplexMatrix, t: &FirstOrderTF, grid: &FrequencyGrid) -> Result<StabilityReport> {
    square(phi)?;
    let eig = matkit::eigenvalues(phi)?;
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut total = 0.0;
    let mut ok = true;
    for &z in &eig {
        let f = move |w: f64| ONE + z * t.eval(w);
        // Extend the grid until the factor is close to its value at ±j∞.
        let mut wmax = *grid.points.last().unwrap();
        let mut ext = 0;
        while (z * t.eval(wmax)).norm() > 0.1 && ext < 30 {
            wmax *= 10.0;
            ext += 1;
        }
        let mut ws: Vec<f64> = grid.points.iter().cloned().filter(|&w| w > 0.0 && w < wmax).collect();
        ws.push(wmax);
        let mut path: Vec<f64> = ws.iter().rev().map(|w| -w).collect();
        path.push(0.0);
        path.extend(ws.iter().cloned());
        if path.iter().map(|&w| f(w)).any(|v| v.norm() < 1e-12) {
            ok = false;
            break;
        }
        // Start and finish at f(±j∞) = 1.
        let mut acc = f(path[0]).arg();
        for pair in path.windows(2) {
            match phase_change(&f, pair[0], f(pair[0]), pair[1], f(pair[1]), MAX_REFINE_DEPTH) {
                Some(d) => acc += d,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        acc -= f(*path.last().unwrap()).arg();
        total += acc;
    }
    let marginal = t.gain_num != 0.0
        && eig
            .iter()
            .any(|z| (z.re + t.pole / t.gain_num).abs() < MARGINAL_BAND);
    let winding = (total / (2.0 * std::f64::consts::PI)).round() as i64;
    let verdict = if !ok || marginal {
        Verdict::Inconclusive
    } else if winding == 0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    Ok(StabilityReport {
        verdict,
        method: StabilityMethod::NyquistDet,
        eigenvalues: eig,
        rho,
        bound_u: None,
        winding: if ok { Some(winding) } else { None },
    })
}

struct Blocks {
    n: usize,
    by: usize,
    bu: usize,
}

impl Blocks {
    fn of(d: &StructuredDecomposition) -> Result<Self> {
        let n = d.n_blocks;
        Ok(Blocks { n, by: d.r.nrows() / n, bu: d.r.ncols() / n })
    }

    fn get(&self, m: &ComplexMatrix, i: usize, j: usize) -> ComplexMatrix {
        m.view((i * self.by, j * self.bu), (self.by, self.bu)).into_owned()
    }
}

fn hollow_parts(d: &StructuredDecomposition) -> Result<(Blocks, Vec<ComplexMatrix>)> {
    let b = Blocks::of(d)?;
    let scale = matkit::max_abs(&d.r_hat).max(1.0);
    for i in 0..b.n {
        if matkit::max_abs(&b.get(&d.delta_s_hat, i, i)) > 1e-8 * scale {
            return Err(Error::Precondition(format!(
                "symmetric-domain error is not block-hollow (block {i})"
            )));
        }
        for j in 0..b.n {
            if i != j && matkit::max_abs(&b.get(&d.r_s_hat, i, j)) > 1e-8 * scale {
                return Err(Error::Precondition(format!(
                    "symmetric-domain approximation is not block-diagonal (block {i},{j})"
                )));
            }
        }
    }
    let pinvs = (0..b.n)
        .map(|i| matkit::pinv(&b.get(&d.r_s_hat, i, i), None))
        .collect::<Result<Vec<_>>>()?;
    Ok((b, pinvs))
}

fn row_col_max(n: usize, w: impl Fn(usize, usize) -> f64) -> (f64, f64) {
    let row = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| w(i, j)).sum::<f64>())
        .fold(0.0, f64::max);
    let col = (0..n)
        .map(|j| (0..n).filter(|&i| i != j).map(|i| w(i, j)).sum::<f64>())
        .fold(0.0, f64::max);
    (row, col)
}

/// Block Geršgorin bound U ≥ ρ(Φ̂_S) for a hollow symmetric-domain error.
///
/// Block (i,j) of Δ̂R̂_S^† is δ̂_ij r̂_j^†; the similar product R̂_S^†Δ̂ has
/// blocks r̂_i^† δ̂_ij. Row and column sums of both are bounds, and the
/// smallest is returned.
pub fn gersgorin_bound(d: &StructuredDecomposition, kind: NormKind) -> Result<f64> {
    let (b, pinvs) = hollow_parts(d)?;
    let mut w1 = vec![vec![0.0; b.n]; b.n];
    let mut w2 = vec![vec![0.0; b.n]; b.n];
    for i in 0..b.n {
        for j in 0..b.n {
            if i != j {
                let dij = b.get(&d.delta_s_hat, i, j);
                w1[i][j] = matkit::norm(&(&dij * &pinvs[j]), kind);
                w2[i][j] = matkit::norm(&(&pinvs[i] * &dij), kind);
            }
        }
    }
    let (r1, c1) = row_col_max(b.n, |i, j| w1[i][j]);
    let (r2, c2) = row_col_max(b.n, |i, j| w2[i][j]);
    Ok(r1.min(c1).min(r2).min(c2))
}

/// Row or column block-diagonal dominance 1/‖r̂_i^†‖ > Σ_{j≠i} ‖δ̂_ij‖.
pub fn diag_dominance(d: &StructuredDecomposition, kind: NormKind) -> Result<bool> {
    let (b, pinvs) = hollow_parts(d)?;
    let inv_norm: Vec<f64> = pinvs
        .iter()
        .map(|p| {
            let v = matkit::norm(p, kind);
            if v > 0.0 { 1.0 / v } else { f64::INFINITY }
        })
        .collect();
    let dn: Vec<Vec<f64>> = (0..b.n)
        .map(|i| (0..b.n).map(|j| matkit::norm(&b.get(&d.delta_s_hat, i, j), kind)).collect())
        .collect();
    let row = (0..b.n).all(|i| inv_norm[i] > (0..b.n).filter(|&j| j != i).map(|j| dn[i][j]).sum());
    let col = (0..b.n).all(|j| inv_norm[j] > (0..b.n).filter(|&i| i != j).map(|i| dn[i][j]).sum());
    Ok(row || col)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityPoint {
    pub omega_rad_s: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessPoint {
    pub omega_rad_s: f64,
    pub theta_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep<P> {
    pub points: Vec<P>,
    /// Frequencies where I + TΦ was numerically singular.
    pub skipped: Vec<f64>,
}

impl<P> Default for Sweep<P> {
    fn default() -> Self {
        Sweep { points: Vec::new(), skipped: Vec::new() }
    }
}

fn loop_inverse(phi: &ComplexMatrix, tw: C64) -> Option<ComplexMatrix> {
    let m = matkit::identity(phi.nrows()) + phi * tw;
    let sv = matkit::singular_values(&m);
    let (hi, lo) = (sv[0], sv[sv.len() - 1]);
    if !(lo > 0.0) || hi / lo > SINGULAR_COND {
        return None;
    }
    m.try_inverse()
}

/// σ_max, σ_min of S(jω) = I − T(I+Φ)(I+TΦ)⁻¹.
pub fn sensitivity_at(phi: &ComplexMatrix, t: &FirstOrderTF, omega: f64) -> Option<(f64, f64)> {
    let tw = t.eval(omega);
    let inv = loop_inverse(phi, tw)?;
    let id = matkit::identity(phi.nrows());
    let s = &id - (&id + phi) * inv * tw;
    let sv = matkit::singular_values(&s);
    Some((sv[0], sv[sv.len() - 1]))
}

pub fn sensitivity_sweep(d: &StructuredDecomposition, t: &FirstOrderTF, grid: &FrequencyGrid) -> Sweep<SensitivityPoint> {
    let mut out = Sweep::default();
    for &w in &grid.points {
        match sensitivity_at(&d.phi_s, t, w) {
            Some((hi, lo)) => out.points.push(SensitivityPoint {
                omega_rad_s: w,
                sigma_max: hi,
                sigma_min: lo,
            }),
            None => {
                log::warn!("I + T(jω)Φ is near-singular at ω = {w}; point omitted");
                out.skipped.push(w);
            }
        }
    }
    out
}

/// Largest σ_max over a sweep and the frequency where it occurs.
pub fn peak(sweep: &Sweep<SensitivityPoint>) -> Option<(f64, f64)> {
    sweep
        .points
        .iter()
        .max_by(|a, b| a.sigma_max.total_cmp(&b.sigma_max))
        .map(|p| (p.omega_rad_s, p.sigma_max))
}

pub fn to_db(x: f64) -> f64 {
    20.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerformanceError {
    pub exact: f64,
    /// First-order bound, absent when ρ(T(jω)Φ) ≥ 1.
    pub bound: Option<f64>,
}

/// ‖E(jω)‖₂ with E = T(1−T)Φ(I+TΦ)⁻¹ and its first-order bound
/// |T(1−T)|·‖Φ − TΦ²‖₂.
pub fn performance_error(d: &StructuredDecomposition, t: &FirstOrderTF, omega: f64) -> Result<PerformanceError> {
    let phi = &d.phi_s;
    let tw = t.eval(omega);
    let inv = loop_inverse(phi, tw)
        .ok_or_else(|| Error::Numeric(format!("I + T(jω)Φ is singular at ω = {omega}")))?;
    let k = tw * (ONE - tw);
    let exact = matkit::norm(&(phi * inv * k), NormKind::Two);
    let bound = if matkit::spectral_radius(&(phi * tw))? < 1.0 {
        Some(k.norm() * matkit::norm(&(phi - phi * phi * tw), NormKind::Two))
    } else {
        None
    };
    Ok(PerformanceError { exact, bound })
}

/// 1/‖M(jω)‖₂ = |g(jω)| / (|T(jω)|·‖R_S^†(I+T(jω)Φ)⁻¹‖₂).
pub fn robustness_at(d: &StructuredDecomposition, t: &FirstOrderTF, g: &FirstOrderTF, omega: f64) -> Option<f64> {
    let tw = t.eval(omega);
    let inv = loop_inverse(&d.phi_s, tw)?;
    let m = matkit::norm(&(&d.r_s_pinv * inv), NormKind::Two) * tw.norm();
    Some(if m > 0.0 { g.eval(omega).norm() / m } else { f64::INFINITY })
}

pub fn robustness_sweep(
    d: &StructuredDecomposition,
    t: &FirstOrderTF,
    g: &FirstOrderTF,
    grid: &FrequencyGrid,
) -> Sweep<RobustnessPoint> {
    let mut out = Sweep::default();
    for &w in &grid.points {
        match robustness_at(d, t, g, w) {
            Some(b) => out.points.push(RobustnessPoint { omega_rad_s: w, theta_bound: b }),
            None => {
                log::warn!("I + T(jω)Φ is near-singular at ω = {w}; point omitted");
                out.skipped.push(w);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub rho_phi: f64,
    pub delta_ratio_2: f64,
    pub delta_ratio_mean: f64,
    pub delta_ratio_max: f64,
    pub phi_norm_2: f64,
    pub r_s_pinv_norm_2: f64,
    pub cond_r: f64,
}

pub fn case_metrics(d: &StructuredDecomposition) -> Result<CaseMetrics> {
    let sum_abs = |m: &ComplexMatrix| m.iter().map(|z| z.norm()).sum::<f64>();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(CaseMetrics {
        rho_phi: matkit::spectral_radius(&d.phi_s)?,
        delta_ratio_2: ratio(matkit::norm(&d.delta_s, NormKind::Two), matkit::norm(&d.r, NormKind::Two)),
        delta_ratio_mean: ratio(sum_abs(&d.delta_s), sum_abs(&d.r)),
        delta_ratio_max: ratio(matkit::max_abs(&d.delta_s), matkit::max_abs(&d.r)),
        phi_norm_2: matkit::norm(&d.phi_s, NormKind::Two),
        r_s_pinv_norm_2: matkit::norm(&d.r_s_pinv, NormKind::Two),
        cond_r: matkit::cond(&d.r),
    })
}
