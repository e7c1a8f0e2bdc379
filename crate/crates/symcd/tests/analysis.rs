use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use symcd::analysis::{self, FirstOrderTF, FrequencyGrid, Verdict};
use symcd::matkit::{self, c, ComplexMatrix, NormKind};
use symcd::symmetry::{frobenius_approximation, group_from_kind, StructuredDecomposition, SymmetryGroup, SymmetryKind};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| c(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

/// Cyclic groups only: the DFT makes their error block-hollow, which the
/// Geršgorin and dominance checks require.
fn pick_group(rng: &mut ChaCha8Rng) -> SymmetryGroup {
    let n = rng.random_range(2..6);
    let g = match rng.random_range(0..2) {
        0 => group_from_kind(SymmetryKind::Circulant, n, 1, 1, None).unwrap(),
        _ => group_from_kind(SymmetryKind::BlockCirculant, n, 2, 2, None).unwrap(),
    };
    assert!(g.diagonalizes_commutant());
    g
}

/// ρ of R·pinv(R_S) − I computed from scratch.
fn rho_oracle(d: &StructuredDecomposition) -> f64 {
    let p = d.r_s.clone().pseudo_inverse(1e-12).unwrap();
    let phi = &d.r * p - matkit::identity(d.r.nrows());
    matkit::eigenvalues(&phi).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gersgorin_bounds_rho(seed: u64, scale in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = pick_group(&mut rng);
        let base = g.reynolds(&random(g.n_y(), g.n_u(), &mut rng)).unwrap();
        let noise = random(g.n_y(), g.n_u(), &mut rng);
        let r = base + noise * c(scale, 0.0);
        let Ok(d) = frobenius_approximation(&r, &g) else { return Ok(()) };
        let u = analysis::gersgorin_bound(&d, NormKind::Two).unwrap();
        prop_assert!(u >= rho_oracle(&d) - 1e-9, "U = {u}");
    }

    #[test]
    fn dominance_implies_stability(seed: u64, bw in 0.1f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = pick_group(&mut rng);
        let base = g.reynolds(&random(g.n_y(), g.n_u(), &mut rng)).unwrap();
        let raw = random(g.n_y(), g.n_u(), &mut rng);
        let hollow = &raw - g.reynolds(&raw).unwrap();
        let mut scale = 1.0;
        let d = loop {
            let r = &base + &hollow * c(scale, 0.0);
            let d = frobenius_approximation(&r, &g).unwrap();
            if analysis::diag_dominance(&d, NormKind::Two).unwrap() {
                break d;
            }
            scale *= 0.5;
            prop_assume!(scale > 1e-8);
        };
        let t = FirstOrderTF::lowpass(bw).unwrap();
        prop_assert!(rho_oracle(&d) < 1.0);
        prop_assert_eq!(analysis::stability_first_order(&d.phi_s, &t).unwrap().verdict, Verdict::Stable);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn nyquist_agrees_with_pole_formula(seed: u64, bw_exp in -1.0f64..3.0, size in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bw = 10f64.powf(bw_exp);
        let eig: Vec<_> = (0..size)
            .map(|_| loop {
                let z = c(rng.random_range(-5.0..3.0), rng.random_range(-4.0..4.0));
                if (z.re + 1.0).abs() > 0.05 {
                    break z;
                }
            })
            .collect();
        let q = random(size, size, &mut rng) + matkit::identity(size) * c(3.0, 0.0);
        let qi = q.clone().try_inverse().unwrap();
        let phi = &q * symcd::symmetry::diag_vector(&eig) * qi;
        let t = FirstOrderTF::lowpass(bw).unwrap();
        let grid = FrequencyGrid::log(bw * 1e-3, bw * 1e3, 200).unwrap();
        let pole = analysis::stability_first_order(&phi, &t).unwrap();
        let nyq = analysis::stability_nyquist(&phi, &t, &grid).unwrap();
        prop_assert_ne!(pole.verdict, Verdict::Inconclusive);
        prop_assert_eq!(pole.verdict, nyq.verdict);
        let unstable = eig.iter().any(|z| z.re < -1.0);
        prop_assert_eq!(pole.verdict == Verdict::Unstable, unstable);
    }
}

#[test]
fn stable_example_verdicts_agree() {
    let r = symcd::scenarios::example_plant(0.1).unwrap();
    let g = group_from_kind(SymmetryKind::Circulant, 3, 1, 1, None).unwrap();
    let d = frobenius_approximation(&r, &g).unwrap();
    let t = FirstOrderTF::lowpass(1.0).unwrap();
    let grid = FrequencyGrid::default();
    let pole = analysis::stability_first_order(&d.phi_s, &t).unwrap();
    let nyq = analysis::stability_nyquist(&d.phi_s, &t, &grid).unwrap();
    assert_eq!(pole.verdict, Verdict::Stable);
    assert_eq!(nyq.verdict, Verdict::Stable);
    let u = analysis::gersgorin_bound(&d, NormKind::Two).unwrap();
    assert!(u >= rho_oracle(&d) - 1e-12);
}

#[test]
fn unstable_example_verdicts_agree() {
    let r = symcd::scenarios::example_plant(1.0).unwrap();
    let g = group_from_kind(SymmetryKind::Circulant, 3, 1, 1, None).unwrap();
    let d = frobenius_approximation(&r, &g).unwrap();
    let t = FirstOrderTF::lowpass(1.0).unwrap();
    let nyq = analysis::stability_nyquist(&d.phi_s, &t, &FrequencyGrid::default()).unwrap();
    assert_eq!(nyq.verdict, Verdict::Unstable);
    // One right-half-plane zero of 1 + φT: a single clockwise turn.
    assert_eq!(nyq.winding, Some(-1));
}

#[test]
fn zero_error_sensitivity_is_one_minus_t() {
    let g = group_from_kind(SymmetryKind::Circulant, 4, 1, 1, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r = g.reynolds(&random(4, 4, &mut rng)).unwrap();
    let d = frobenius_approximation(&r, &g).unwrap();
    let t = FirstOrderTF::lowpass(5.0).unwrap();
    let grid = FrequencyGrid::log(0.1, 100.0, 30).unwrap();
    let s = analysis::sensitivity_sweep(&d, &t, &grid);
    for p in &s.points {
        let want = (c(1.0, 0.0) - t.eval(p.omega_rad_s)).norm();
        assert!((p.sigma_max - want).abs() < 1e-9);
        assert!((p.sigma_min - want).abs() < 1e-9);
    }
}
