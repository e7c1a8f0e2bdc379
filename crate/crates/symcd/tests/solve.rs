use std::time::Duration;

use symcd::constraints::{self as cs, AssembleOptions, ProblemKind};
use symcd::error::Error;
use symcd::matkit::{self, c, ComplexMatrix};
use symcd::scenarios::{self, Method};
use symcd::solve::{self, alg::BMI_TOL, init_unstable, lyapunov, InitOptions};
use symcd::symmetry::{frobenius_approximation, group_from_kind, SymmetryKind};

fn circ3() -> symcd::symmetry::SymmetryGroup {
    group_from_kind(SymmetryKind::Circulant, 3, 1, 1, None).unwrap()
}

/// λ_min of the Hermitian part by nalgebra's eigensolver.
fn min_eig(h: &ComplexMatrix) -> f64 {
    let h = (h + h.adjoint()) * c(0.5, 0.0);
    h.symmetric_eigen().eigenvalues.min()
}

fn rho(a: &ComplexMatrix) -> f64 {
    matkit::eigenvalues(a).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn init_iterates_certify_sigma() {
    let r = scenarios::example_plant(1.0).unwrap();
    let g = circ3();
    let out = init_unstable(&r, &g, &InitOptions::default()).unwrap();
    assert!(out.rho < 1.0 && out.sigma < 1.0);
    assert!(out.trace.iterates.len() <= 51);
    // Same layout as the problem init_unstable builds internally.
    let p = cs::assemble(ProblemKind::Init, &r, &g, &AssembleOptions::default()).unwrap();
    let pid = p.vars.find("P").unwrap();
    let sid = p.vars.find("sigma").unwrap();
    for it in &out.trace.iterates {
        let x = p.vars.matrix(p.x, &it.y);
        let phi = &p.r_hat * x - matkit::identity(3);
        let pm = p.vars.matrix(pid, &it.y);
        let s = p.vars.scalar(sid, &it.y);
        assert!(it.min_bmi_eig >= -BMI_TOL, "iterate {} min eig {}", it.k, it.min_bmi_eig);
        assert!(min_eig(&pm) > 0.0);
        // [[σ²P⁻¹, Φ], [Φ*, P]] ⪰ 0  ⇔  σ²P − Φ*PΦ ⪰ 0
        let schur = &pm * c(s * s, 0.0) - phi.adjoint() * &pm * &phi;
        assert!(min_eig(&schur) >= -1e-6 * (1.0 + pm.norm()), "iterate {}", it.k);
        assert!(s >= rho(&phi) - 1e-6, "iterate {}: sigma {s} rho {}", it.k, rho(&phi));
    }
}

#[test]
fn lyapunov_certifies_fixed_x() {
    let r = scenarios::example_plant(0.1).unwrap();
    let d = frobenius_approximation(&r, &circ3()).unwrap();
    let p = lyapunov(&d.phi_s_hat).unwrap();
    let a = &d.phi_s_hat;
    let resid = &p - a.adjoint() * &p * a - matkit::identity(3);
    assert!(resid.norm() < 1e-10);
    // NS3 with this P: P − Φ*PΦ = I ≻ 0.
    assert!(min_eig(&(&p - a.adjoint() * &p * a)) > 0.5);
    assert!(lyapunov(&(a * c(10.0, 0.0))).is_err());
}

#[test]
fn hopeless_plant_has_no_stabilizer() {
    // R = 0: RX − I = −I for every X, so ρ = 1 can never be beaten.
    let r = ComplexMatrix::zeros(3, 3);
    let opts = InitOptions { retries: 2, ..InitOptions::default() };
    match init_unstable(&r, &circ3(), &opts) {
        Err(Error::NoStabilizer(_)) | Err(Error::Rank(_)) => {}
        other => panic!("expected no stabilizer, got {other:?}"),
    }
}

#[test]
fn bmi_iterates_stay_feasible() {
    let spec = scenarios::builtin("example-7.2").unwrap();
    let report = scenarios::run_scenario(&spec).unwrap();
    let bmi = report.method(Method::Bmi).unwrap();
    let trace = bmi.trace.as_ref().unwrap();
    assert!(!trace.iterates.is_empty());
    let mut prev = f64::INFINITY;
    for it in &trace.iterates {
        assert!(it.min_bmi_eig >= -BMI_TOL, "iterate {}: {}", it.k, it.min_bmi_eig);
        assert!(it.rho < 1.0, "iterate {}: rho {}", it.k, it.rho);
        // Each iterate is feasible for the next subproblem.
        assert!(it.objective <= prev + 1e-6, "objective rose at {}", it.k);
        prev = it.objective;
    }
}

#[test]
fn loop_respects_budget_and_cap() {
    let r = scenarios::example_plant(1.0).unwrap();
    let mut opts = InitOptions::default();
    opts.lp.max_iter = 1;
    opts.retries = 0;
    opts.lp.budget = Some(Duration::from_secs(60));
    // One subproblem cannot always finish the job; either outcome must be
    // reported with a trace of at most two points.
    if let Ok(out) = init_unstable(&r, &circ3(), &opts) {
        assert!(out.trace.iterates.len() <= 2);
    }
    let g = circ3();
    let p = cs::assemble(ProblemKind::Init, &r, &g, &AssembleOptions::default()).unwrap();
    let y0 = vec![0.0; p.vars.total() + 1];
    assert!(matches!(
        solve::convexifying_loop(&p, &y0, &solve::LoopOptions::default()),
        Err(Error::Dimension(_))
    ));
}
