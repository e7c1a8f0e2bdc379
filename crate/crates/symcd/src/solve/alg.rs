//! Convexifying iteration for BMI-constrained problems and the stabilizing
//! initialization built on it.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{solve_sdp_from, SdpOptions, SolveStatus};
use crate::constraints::{assemble, x_matrix, AssembleOptions, ConicProblem, ProblemKind};
use crate::error::{Error, Result};
use crate::matkit::{self, c, ComplexMatrix};
use crate::symmetry::{frobenius_approximation, SymmetryGroup};

/// BMI feasibility slack tolerated on recorded iterates.
pub const BMI_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct LoopOptions {
    pub eps: f64,
    pub max_iter: usize,
    pub budget: Option<Duration>,
    pub sdp: SdpOptions,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions { eps: 1e-3, max_iter: 200, budget: None, sdp: SdpOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Iterate {
    pub k: usize,
    /// Full variable vector; the X coefficients are a slice of it.
    pub y: Vec<f64>,
    pub objective: f64,
    /// ‖x_{k} − x_{k−1}‖ on X coefficients; NaN for the start point.
    pub step_norm: f64,
    pub rho: f64,
    pub min_bmi_eig: f64,
    /// Linearized at the midpoint of the last two iterates after an
    /// infeasible subproblem.
    pub fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub iterates: Vec<Iterate>,
    pub converged: bool,
    pub eps: f64,
    /// Why the loop stopped when it did not converge.
    pub halted: Option<String>,
}

impl IterationTrace {
    pub fn last(&self) -> &Iterate {
        self.iterates.last().expect("trace holds the start point")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,objective,step_norm,rho,min_bmi_eig\n");
        for it in &self.iterates {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                it.k, it.objective, it.step_norm, it.rho, it.min_bmi_eig
            ));
        }
        s
    }
}

fn min_bmi_eig(p: &ConicProblem, y: &[f64]) -> f64 {
    p.bmis.iter().map(|b| b.min_eig(&p.vars, y)).fold(f64::INFINITY, f64::min)
}

/// ρ(R̂X̂ − I) at an assignment.
pub fn rho_at(p: &ConicProblem, y: &[f64]) -> Result<f64> {
    let n = p.r_hat.nrows();
    let phi = matkit::matmul(&p.r_hat, &p.vars.matrix(p.x, y)) - matkit::identity(n);
    matkit::spectral_radius(&phi)
}

fn x_step(p: &ConicProblem, a: &[f64], b: &[f64]) -> f64 {
    let xa = p.vars.slice(p.x, a);
    let xb = p.vars.slice(p.x, b);
    xa.iter().zip(xb).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// Sequential convex restriction: solve the convexified problem at y_k,
/// move to its solution, stop when the X step falls below ε.
pub fn convexifying_loop(p: &ConicProblem, y0: &[f64], opts: &LoopOptions) -> Result<(Vec<f64>, IterationTrace)> {
    if y0.len() != p.vars.total() {
        return Err(Error::Dimension(format!(
            "start point has {} entries, problem has {} variables",
            y0.len(),
            p.vars.total()
        )));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    let e0 = min_bmi_eig(p, y0);
    if e0 < -BMI_TOL {
        return Err(Error::Precondition(format!(
            "start point violates the bilinear constraints (min eigenvalue {e0:e})"
        )));
    }
    let t0 = Instant::now();
    let mut trace = IterationTrace { iterates: Vec::new(), converged: false, eps: opts.eps, halted: None };
    trace.iterates.push(Iterate {
        k: 0,
        y: y0.to_vec(),
        objective: p.objective_value(y0),
        step_norm: f64::NAN,
        rho: rho_at(p, y0)?,
        min_bmi_eig: e0,
        fallback: false,
    });
    let mut y_k = y0.to_vec();
    let mut y_prev: Option<Vec<f64>> = None;
    let mut fallback_used = false;

    for k in 1..=opts.max_iter {
        if let Some(b) = opts.budget {
            if t0.elapsed() > b {
                trace.halted = Some(format!("wall-clock budget of {:.1} s exhausted", b.as_secs_f64()));
                break;
            }
        }
        let sub = p.convexified(&y_k)?;
        let mut out = solve_sdp_from(&sub, &opts.sdp, Some(&y_k))?;
        let mut fallback = false;
        if out.status != SolveStatus::Optimal {
            match (&y_prev, fallback_used) {
                (Some(prev), false) => {
                    fallback_used = true;
                    fallback = true;
                    let mid: Vec<f64> = y_k.iter().zip(prev).map(|(a, b)| 0.5 * (a + b)).collect();
                    log::warn!("subproblem {k} {:?}; relinearizing at the midpoint", out.status);
                    let sub = p.convexified(&mid)?;
                    out = solve_sdp_from(&sub, &opts.sdp, Some(&mid))?;
                }
                _ => {}
            }
            if out.status != SolveStatus::Optimal {
                trace.halted = Some(format!("subproblem {k} ended {:?}: {}", out.status, out.message));
                break;
            }
        }
        let y_next = out.assignment;
        let step = x_step(p, &y_next, &y_k);
        let e = min_bmi_eig(p, &y_next);
        trace.iterates.push(Iterate {
            k,
            y: y_next.clone(),
            objective: p.objective_value(&y_next),
            step_norm: step,
            rho: rho_at(p, &y_next)?,
            min_bmi_eig: e,
            fallback,
        });
        log::info!("alg1 k={k} obj={:.6e} step={step:.3e} minBMI={e:.3e}", p.objective_value(&y_next));
        y_prev = Some(std::mem::replace(&mut y_k, y_next));
        if step < opts.eps {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged && trace.halted.is_none() {
        trace.halted = Some(format!("iteration cap {} reached", opts.max_iter));
    }
    Ok((y_k, trace))
}

#[derive(Debug, Clone)]
pub struct InitOptions {
    pub p0_scale: f64,
    /// Defaults to 2·ρ(Φ^F), doubled until the start point is feasible.
    pub sigma0: Option<f64>,
    /// Attempts after the first, each with a random positive definite P₀.
    pub retries: usize,
    pub seed: u64,
    pub lp: LoopOptions,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            p0_scale: 1.0,
            sigma0: None,
            retries: 40,
            seed: 0,
            lp: LoopOptions { max_iter: 50, ..LoopOptions::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitOutcome {
    /// Original-domain X with ρ(RX − I) < 1.
    pub x: ComplexMatrix,
    pub sigma: f64,
    pub rho: f64,
    /// Symmetric-domain Lyapunov matrix certifying the bound.
    pub p_hat: ComplexMatrix,
    pub trace: IterationTrace,
    pub attempts: usize,
}

/// Random Hermitian positive definite Q·diag(10^u)·Q* with u ~ U(−1.5, 1.5).
fn random_pd(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<ComplexMatrix> {
    let a = ComplexMatrix::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let (_, q) = matkit::hermitian_eigh(&matkit::hermitian_part(&a))?;
    let d = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        c(scale * 10f64.powf(rng.random_range(-1.5..1.5)), 0.0)
    }));
    Ok(matkit::hermitian_part(&(&q * d * q.adjoint())))
}

/// Finds X with ρ(RX − I) < 1 by minimizing σ subject to the convexified
/// spectral-radius bound, starting from the Frobenius pseudoinverse.
pub fn init_unstable(r: &ComplexMatrix, g: &SymmetryGroup, opts: &InitOptions) -> Result<InitOutcome> {
    if !(opts.p0_scale > 0.0) || opts.sigma0.is_some_and(|s| !(s > 0.0)) {
        return Err(Error::Precondition("P0 scale and sigma0 must be positive".into()));
    }
    let d = frobenius_approximation(r, g)?;
    let p = assemble(ProblemKind::Init, r, g, &AssembleOptions::default())?;
    let x_id = p.x;
    let p_id = p.vars.find("P").expect("init problem declares P");
    let s_id = p.vars.find("sigma").expect("init problem declares sigma");
    let xc = crate::constraints::x_coefficients(&p, g, &d.r_s_pinv)?;
    let mut y0 = vec![0.0; p.vars.total()];
    p.vars.set(x_id, &mut y0, &xc);
    let rho0 = rho_at(&p, &y0)?;
    if rho0 < 1.0 {
        let trace = IterationTrace {
            iterates: vec![Iterate {
                k: 0,
                y: y0.clone(),
                objective: rho0,
                step_norm: f64::NAN,
                rho: rho0,
                min_bmi_eig: f64::NAN,
                fallback: false,
            }],
            converged: true,
            eps: opts.lp.eps,
            halted: None,
        };
        let phi = matkit::matmul(&p.r_hat, &p.vars.matrix(x_id, &y0)) - matkit::identity(p.r_hat.nrows());
        let p_hat = lyapunov(&phi)?;
        return Ok(InitOutcome { x: d.r_s_pinv.clone(), sigma: rho0, rho: rho0, p_hat, trace, attempts: 0 });
    }

    let ny = p.r_hat.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut last_sigma = f64::INFINITY;
    for attempt in 0..=opts.retries {
        let p0 = if attempt == 0 {
            matkit::identity(ny) * c(opts.p0_scale, 0.0)
        } else {
            random_pd(ny, opts.p0_scale, &mut rng)?
        };
        let pc = p.vars.coefficients_of(p_id, &p0)?;
        p.vars.set(p_id, &mut y0, &pc);
        let mut sigma = opts.sigma0.unwrap_or(2.0 * rho0);
        y0[p.vars.group(s_id).offset] = sigma;
        while min_bmi_eig(&p, &y0) <= 10.0 * p.margin {
            sigma *= 2.0;
            y0[p.vars.group(s_id).offset] = sigma;
            if sigma > 1e12 * (1.0 + rho0) {
                return Err(Error::Numeric("cannot find a feasible starting sigma".into()));
            }
        }
        let (y, trace) = match convexifying_loop(&p, &y0, &opts.lp) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("init attempt {attempt} failed: {e}");
                continue;
            }
        };
        let sigma = p.vars.scalar(s_id, &y);
        let rho = rho_at(&p, &y)?;
        last_sigma = last_sigma.min(sigma);
        log::info!("init attempt {attempt}: sigma {sigma:.4} rho {rho:.4}");
        if sigma < 1.0 && rho < 1.0 {
            return Ok(InitOutcome {
                x: x_matrix(&p, g, &y)?,
                sigma,
                rho,
                p_hat: p.vars.matrix(p_id, &y),
                trace,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::NoStabilizer(format!(
        "{} attempts ended with sigma >= 1 (best {last_sigma:.4}); either a local optimum or no stabilizing member of the commutant exists",
        opts.retries + 1
    )))
}

/// P = Σ_k (A*)^k A^k, the solution of P − A*PA = I, by repeated squaring.
pub fn lyapunov(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if matkit::spectral_radius(a)? >= 1.0 {
        return Err(Error::Precondition("Lyapunov equation needs rho(A) < 1".into()));
    }
    let n = a.nrows();
    let mut p = matkit::identity(n);
    let mut ak = a.clone();
    for _ in 0..64 {
        let next = &p + matkit::matmul(&matkit::matmul(&ak.adjoint(), &p), &ak);
        let done = (&next - &p).norm() <= 1e-15 * next.norm();
        p = next;
        ak = matkit::matmul(&ak, &ak);
        if done {
            break;
        }
    }
    Ok(matkit::hermitian_part(&p))
}
