//! SDP solving, the convexifying iteration for BMIs and the stabilizing
//! initialization for unstable Frobenius approximations.

pub mod alg;
pub mod ipm;

use serde::Serialize;

use crate::constraints::ConicProblem;
use crate::error::{Error, Result};
use crate::matkit::NumericConfig;

pub use alg::{convexifying_loop, init_unstable, lyapunov, IterationTrace, Iterate, LoopOptions, InitOptions, InitOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    /// min over constraints of λ_min(F(y)) − margin, by direct eigensolve.
    pub min_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub assignment: Vec<f64>,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub message: String,
}

/// Available SDP back ends. Only the built-in interior point method ships;
/// `SYMCD_SOLVER` may name it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapter {
    Ipm,
}

impl Adapter {
    pub fn from_env() -> Result<Adapter> {
        match std::env::var("SYMCD_SOLVER") {
            Err(_) => Ok(Adapter::Ipm),
            Ok(s) => Adapter::from_name(&s),
        }
    }

    pub fn from_name(name: &str) -> Result<Adapter> {
        match name.trim().to_ascii_lowercase().as_str() {
            "" | "ipm" => Ok(Adapter::Ipm),
            other => Err(Error::Solver(format!("unknown solver adapter '{other}' (available: ipm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub ipm: ipm::IpmOptions,
    pub numeric: NumericConfig,
    pub adapter: Adapter,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            ipm: ipm::IpmOptions::default(),
            numeric: NumericConfig::default(),
            adapter: Adapter::Ipm,
        }
    }
}

/// min over LMIs of λ_min(F(y)) − margin.
pub fn min_slack(p: &ConicProblem, y: &[f64]) -> f64 {
    p.lmis
        .iter()
        .map(|l| l.min_eig(&p.vars, y) - l.margin)
        .fold(f64::INFINITY, f64::min)
}

/// Solves an LMI-only problem. An optimal answer is re-checked by direct
/// eigenvalue computation and downgraded if any constraint is violated by
/// more than 10·psd_tol.
pub fn solve_sdp(p: &ConicProblem, opts: &SdpOptions) -> Result<SolveOutcome> {
    solve_sdp_from(p, opts, None)
}

pub fn solve_sdp_from(p: &ConicProblem, opts: &SdpOptions, start: Option<&[f64]>) -> Result<SolveOutcome> {
    if !p.bmis.is_empty() {
        return Err(Error::Precondition(
            "problem still contains bilinear constraints; convexify first".into(),
        ));
    }
    p.validate()?;
    let Adapter::Ipm = opts.adapter;
    let mut r = ipm::solve(p, &opts.ipm, start);
    if start.is_some() && r.status != ipm::IpmStatus::Optimal {
        // A start hugging the cone boundary can wreck centrality; retry cold.
        log::debug!("warm start ended {:?}; retrying from the default point", r.status);
        r = ipm::solve(p, &opts.ipm, None);
    }
    let slack = min_slack(p, &r.y);
    let mut residuals = Residuals {
        primal: r.primal_infeasibility,
        dual: r.dual_infeasibility,
        gap: r.relative_gap,
        min_slack: slack,
    };
    let (mut status, mut message) = match r.status {
        ipm::IpmStatus::Optimal if r.reduced_accuracy => (SolveStatus::Optimal, "reduced accuracy".to_string()),
        ipm::IpmStatus::Optimal => (SolveStatus::Optimal, String::new()),
        ipm::IpmStatus::Infeasible => (SolveStatus::Infeasible, "Farkas certificate found".to_string()),
        ipm::IpmStatus::Unbounded => (SolveStatus::NumericalFailure, "objective unbounded below".to_string()),
        ipm::IpmStatus::Stalled => (SolveStatus::NumericalFailure, "step length collapsed".to_string()),
        ipm::IpmStatus::IterationLimit => (SolveStatus::IterationLimit, String::new()),
    };
    if status == SolveStatus::Optimal && slack < -10.0 * opts.numeric.psd_tol {
        status = SolveStatus::NumericalFailure;
        message = format!("re-verification failed: min slack {slack:e}");
    }
    if !slack.is_finite() {
        residuals.min_slack = f64::NEG_INFINITY;
    }
    Ok(SolveOutcome {
        status,
        objective: p.objective_value(&r.y),
        assignment: r.y,
        residuals,
        iterations: r.iterations,
        message,
    })
}
