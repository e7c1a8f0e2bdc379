use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use symcd::constraints::{self as cs, Bmi, BmiKind, Potential, Tying, Variables};
use symcd::matkit::{self, c, ComplexMatrix};
use symcd::solve::lyapunov;
use symcd::symmetry::{group_from_kind, SymmetryGroup, SymmetryKind};

/// Real entries: paired tying spans the real commutant members.
fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| c(StandardNormal.sample(rng), 0.0))
}

/// Spectral norm from nalgebra's SVD, independent of the faer route.
fn norm2(a: &ComplexMatrix) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

fn pick_group(rng: &mut ChaCha8Rng) -> SymmetryGroup {
    let n = rng.random_range(2..5);
    match rng.random_range(0..3) {
        0 => group_from_kind(SymmetryKind::Circulant, n, 1, 1, None).unwrap(),
        1 => group_from_kind(SymmetryKind::BlockCirculant, n, 2, 2, None).unwrap(),
        _ => group_from_kind(SymmetryKind::BcAndCs, n, 2, 2, None).unwrap(),
    }
}

/// Random commutant R̂ and X̂ (symmetric domain) with the X variable set.
struct Setup {
    g: SymmetryGroup,
    r_hat: ComplexMatrix,
    vars: Variables,
    x: usize,
    y: Vec<f64>,
}

fn setup(rng: &mut ChaCha8Rng, x_scale: f64) -> Setup {
    let g = pick_group(rng);
    let r = g.reynolds(&random(g.n_y(), g.n_u(), rng)).unwrap() + matkit::identity(g.n_y()) * c(2.0, 0.0);
    let r_hat = g.to_symmetric_domain(&r).unwrap();
    let mut vars = Variables::default();
    let x = vars.add_commutant("X", &g.transposed(), Tying::Paired);
    let mut y = vec![0.0; vars.total()];
    // Perturb R⁻¹ so that ‖RX − I‖ lands on either side of 1.
    let base = matkit::pinv(&r, None).unwrap();
    let noise = g.transposed().reynolds(&random(g.n_u(), g.n_y(), rng)).unwrap();
    let xm = base + noise * c(x_scale, 0.0);
    let xh = g.transposed().to_symmetric_domain(&xm).unwrap();
    let coeffs = vars.coefficients_of(x, &xh).unwrap();
    vars.set(x, &mut y, &coeffs);
    Setup { g, r_hat, vars, x, y }
}

fn phi(s: &Setup, y: &[f64]) -> ComplexMatrix {
    &s.r_hat * s.vars.matrix(s.x, y) - matkit::identity(s.r_hat.nrows())
}

/// Skip draws too close to a boundary for a sign test to be meaningful.
const BAND: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ns1_is_the_norm_bound(seed: u64, scale in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = setup(&mut rng, scale);
        let n = norm2(&phi(&s, &s.y));
        prop_assume!((n - 1.0).abs() > BAND);
        let l = cs::build_ns1(&s.r_hat, s.x, 0.0);
        prop_assert_eq!(l.min_eig(&s.vars, &s.y) >= 0.0, n < 1.0, "norm {}", n);
    }

    #[test]
    fn np2_is_the_squared_norm_bound(seed: u64, scale in 0.01f64..2.0, alpha in 0.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = setup(&mut rng, scale);
        let a = s.vars.add_scalar("alpha");
        s.y.push(alpha);
        let n = norm2(&phi(&s, &s.y));
        prop_assume!((n * n - alpha).abs() > BAND);
        let l = cs::build_np2(&s.r_hat, s.x, a, 0.0);
        prop_assert_eq!(l.min_eig(&s.vars, &s.y) >= 0.0, n * n < alpha);
    }

    #[test]
    fn rs_is_the_pseudoinverse_bound(seed: u64, scale in 0.01f64..2.0, beta in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = setup(&mut rng, scale);
        let b = s.vars.add_scalar("beta");
        s.y.push(beta);
        let n = norm2(&s.vars.matrix(s.x, &s.y));
        prop_assume!((n * n - beta).abs() > BAND);
        let l = cs::build_rs(&s.vars, s.x, b, 0.0);
        prop_assert_eq!(l.min_eig(&s.vars, &s.y) >= 0.0, n * n < beta);
    }

    /// NS1 feasibility carries over to NS2 (‖Φ²‖ ≤ ‖Φ‖²) and to NS4 with
    /// Q = P⁻¹ from P − Φ*PΦ = I and Z = X·Q.
    #[test]
    fn ns1_implies_ns2_and_ns4(seed: u64, scale in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = setup(&mut rng, scale);
        let l1 = cs::build_ns1(&s.r_hat, s.x, 0.0);
        prop_assume!(l1.min_eig(&s.vars, &s.y) > BAND);

        let ns2 = Bmi { kind: BmiKind::Ns2, r_hat: s.r_hat.clone(), x: s.x, p: None, scalar: None, margin: 0.0, potential: Potential::Psd };
        prop_assert!(ns2.min_eig(&s.vars, &s.y) >= -1e-10);

        let f = phi(&s, &s.y);
        let p = lyapunov(&f).unwrap();
        let q = p.clone().try_inverse().unwrap();
        let xh = s.vars.matrix(s.x, &s.y);
        let n = s.r_hat.nrows();
        // P, and so Q, commute with the group because Φ does.
        let z = s.vars.add_commutant("Z", &s.g.transposed(), Tying::Paired);
        let qid = s.vars.add_hermitian("Q", n);
        s.y.resize(s.vars.total(), 0.0);
        let zc = s.vars.coefficients_of(z, &(&xh * &q)).unwrap();
        s.vars.set(z, &mut s.y, &zc);
        let qc = s.vars.coefficients_of(qid, &q).unwrap();
        s.vars.set(qid, &mut s.y, &qc);
        let l4 = cs::build_ns4(&s.r_hat, z, qid, 0.0);
        prop_assert!(l4.min_eig(&s.vars, &s.y) > 0.0);
        let back = cs::recover_ns4(&s.vars.matrix(z, &s.y), &s.vars.matrix(qid, &s.y)).unwrap();
        prop_assert!((&back - &xh).norm() < 1e-8 * (1.0 + xh.norm()));
    }
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let a = random(n, n, rng);
    &a * a.adjoint() + matkit::identity(n) * c(0.1, 0.0)
}

/// One BMI of each kind over a shared variable vector.
fn bmis(s: &mut Setup, rng: &mut ChaCha8Rng) -> Vec<Bmi> {
    let n = s.r_hat.nrows();
    let p = s.vars.add_hermitian("P", n);
    let sc = s.vars.add_scalar("s");
    let t = c(rng.random_range(0.0..1.0), rng.random_range(-1.0..0.0));
    let mk = |kind, p, scalar| Bmi { kind, r_hat: s.r_hat.clone(), x: s.x, p, scalar, margin: 0.0, potential: Potential::Psd };
    vec![
        mk(BmiKind::Ns2, None, None),
        mk(BmiKind::Np1 { omega: 1.0, t_re: t.re, t_im: t.im }, None, Some(sc)),
        mk(BmiKind::Ns3, Some(p), None),
        mk(BmiKind::Init, Some(p), Some(sc)),
    ]
}

fn random_point(s: &Setup, base: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y = base.to_vec();
    let xg = s.vars.group(s.x);
    for v in &mut y[xg.offset..xg.offset + xg.len] {
        let e: f64 = StandardNormal.sample(rng);
        *v += 0.3 * e;
    }
    let p = s.vars.find("P").unwrap();
    let pc = s.vars.coefficients_of(p, &random_pd(s.r_hat.nrows(), rng)).unwrap();
    s.vars.set(p, &mut y, &pc);
    let sc = s.vars.find("s").unwrap();
    y[s.vars.group(sc).offset] = rng.random_range(0.1..3.0);
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// G(X, X) = 0 and G(X, X_k) ⪰ 0, so the convexified set lies inside
    /// the true one and touches it at the linearization point.
    #[test]
    fn convexifier_potential(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = setup(&mut rng, 0.5);
        let list = bmis(&mut s, &mut rng);
        s.y.resize(s.vars.total(), 0.0);
        let y = random_point(&s, &s.y, &mut rng);
        let y_k = random_point(&s, &s.y, &mut rng);
        for b in &list {
            let g0 = b.potential_matrix(&s.vars, &y, &y).unwrap();
            prop_assert!(g0.norm() < 1e-9 * (1.0 + b.true_matrix(&s.vars, &y).norm()), "{} G(X,X) = {}", b.name(), g0.norm());
            let g = b.potential_matrix(&s.vars, &y, &y_k).unwrap();
            let lam = matkit::min_hermitian_eigenvalue(&matkit::hermitian_part(&g));
            prop_assert!(lam >= -1e-9 * (1.0 + g.norm()), "{} λmin(G) = {}", b.name(), lam);
        }
    }

    /// Feasibility of the convexified LMI implies feasibility of the BMI.
    #[test]
    fn convexified_feasible_implies_bmi_feasible(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = setup(&mut rng, 0.5);
        let list = bmis(&mut s, &mut rng);
        s.y.resize(s.vars.total(), 0.0);
        let y_k = random_point(&s, &s.y, &mut rng);
        let y = random_point(&s, &s.y, &mut rng);
        for b in &list {
            let l = b.convexify(&s.vars, &y_k).unwrap();
            if l.min_eig(&s.vars, &y) >= 0.0 {
                prop_assert!(b.min_eig(&s.vars, &y) >= -1e-9, "{}", b.name());
            }
        }
    }
}
