//! Primal-dual interior point method for block LMIs with complex
//! Hermitian blocks.
//!
//! The problem is taken in the form
//!
//! ```text
//!   min cᵀy   s.t.   Z = F(y) − margin·I ⪰ 0,   F(y) = F₀ + Σ yᵢ Fᵢ
//! ```
//!
//! with its conic dual max −⟨F₀ − margin·I, X⟩ s.t. ⟨Fᵢ, X⟩ = cᵢ, X ⪰ 0.
//! Iterates may be infeasible; directions are HKM with a Mehrotra
//! predictor-corrector. The Fᵢ are never formed: every Fᵢ is a sum of
//! sparse pieces s·L·E·R and the Schur complement is accumulated piece pair
//! by piece pair.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Par, Side};

use crate::constraints::{ConicProblem, Lmi, Term, Variables};
use crate::matkit::{self, c, from_faer, to_faer, ComplexMatrix, C64, ONE};

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub tau: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions { tol: 1e-8, max_iter: 120, tau: 0.98 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    /// A Farkas ray certifies that no y satisfies the LMIs.
    Infeasible,
    Unbounded,
    Stalled,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: IpmStatus,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// ‖⟨Fᵢ, X⟩ − cᵢ‖ / (1 + ‖c‖)
    pub primal_infeasibility: f64,
    /// ‖F(y) − margin·I − Z‖_F / (1 + ‖F₀‖_F)
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    /// Converged to √tol but not tol before round-off stalled progress.
    pub reduced_accuracy: bool,
}

/// One sparse contribution K = L·E·R to a block of one LMI; E(i) holds the
/// scaled basis entries of variable i.
struct Piece {
    lmi: usize,
    rows: (usize, usize),
    cols: (usize, usize),
    l: Option<ComplexMatrix>,
    r: Option<ComplexMatrix>,
    vars: Vec<usize>,
    /// entries of E(vars[k]) are starts[k]..starts[k+1]
    starts: Vec<usize>,
    entries: Vec<(usize, usize, C64)>,
}

impl Piece {
    fn adjoint(&self) -> Piece {
        Piece {
            lmi: self.lmi,
            rows: self.cols,
            cols: self.rows,
            l: self.r.as_ref().map(|m| m.adjoint()),
            r: self.l.as_ref().map(|m| m.adjoint()),
            vars: self.vars.clone(),
            starts: self.starts.clone(),
            entries: self.entries.iter().map(|&(p, q, v)| (q, p, v.conj())).collect(),
        }
    }

    /// R · Y[cols, rows] · L, the matrix paired with E in tr(K·Y).
    fn sandwich(&self, y: &ComplexMatrix, other_rows: (usize, usize), l: Option<&ComplexMatrix>) -> ComplexMatrix {
        let mut m = y.view((self.cols.0, other_rows.0), (self.cols.1, other_rows.1)).into_owned();
        if let Some(r) = &self.r {
            m = matkit::matmul(r, &m);
        }
        if let Some(l) = l {
            m = matkit::matmul(&m, l);
        }
        m
    }
}

fn pieces_for(lmi_index: usize, lmi: &Lmi, vars: &Variables) -> Vec<Piece> {
    let off = lmi.offsets();
    let mut out = Vec::new();
    for e in &lmi.entries {
        let rows = (off[e.row], lmi.blocks[e.row]);
        let cols = (off[e.col], lmi.blocks[e.col]);
        let (group, l, r, scale, basis): (usize, _, _, C64, Vec<Vec<(usize, usize, C64)>>) = match &e.term {
            Term::Const(_) => continue,
            Term::Lin { group, left, right, scale } => {
                (*group, left.clone(), right.clone(), *scale, vars.group(*group).basis.clone())
            }
            Term::Scalar { group, mat, scale } => {
                let d = mat.as_ref().map_or(rows.1, |m| m.ncols());
                let eye: Vec<_> = (0..d).map(|k| (k, k, ONE)).collect();
                (*group, mat.clone(), None, *scale, vec![eye])
            }
        };
        let g = vars.group(group);
        let diag = e.row == e.col;
        let s = if diag { scale * 0.5 } else { scale };
        let mut starts = vec![0];
        let mut entries = Vec::new();
        for b in &basis {
            entries.extend(b.iter().map(|&(p, q, v)| (p, q, v * s)));
            starts.push(entries.len());
        }
        let piece = Piece {
            lmi: lmi_index,
            rows,
            cols,
            l,
            r,
            vars: (g.offset..g.offset + g.len).collect(),
            starts,
            entries,
        };
        out.push(piece.adjoint());
        out.push(piece);
    }
    out
}

struct Blocks {
    lmis: Vec<Lmi>,
    pieces: Vec<Piece>,
    dims: Vec<usize>,
    f0: Vec<ComplexMatrix>,
}

impl Blocks {
    fn new(p: &ConicProblem) -> Blocks {
        let lmis = p.lmis.clone();
        let zeros = vec![0.0; p.vars.total()];
        let f0 = lmis.iter().map(|l| l.evaluate(&p.vars, &zeros)).collect();
        let pieces = lmis.iter().enumerate().flat_map(|(k, l)| pieces_for(k, l, &p.vars)).collect();
        let dims = lmis.iter().map(|l| l.dim()).collect();
        Blocks { lmis, pieces, dims, f0 }
    }

    /// F(y) − margin·I per block.
    fn slack(&self, vars: &Variables, y: &[f64]) -> Vec<ComplexMatrix> {
        self.lmis
            .iter()
            .map(|l| {
                let mut f = l.evaluate(vars, y);
                for i in 0..f.nrows() {
                    f[(i, i)] -= c(l.margin, 0.0);
                }
                f
            })
            .collect()
    }

    /// Σ yᵢ Fᵢ per block (no constant).
    fn linear(&self, vars: &Variables, y: &[f64]) -> Vec<ComplexMatrix> {
        self.lmis
            .iter()
            .zip(&self.f0)
            .map(|(l, f0)| l.evaluate(vars, y) - f0)
            .collect()
    }

    /// ⟨Fᵢ, Y⟩ = Re tr(Fᵢ·Y) for every variable.
    fn inner(&self, m: usize, y: &[ComplexMatrix]) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for p in &self.pieces {
            let q = p.sandwich(&y[p.lmi], p.rows, p.l.as_ref());
            for (k, &i) in p.vars.iter().enumerate() {
                let mut acc = 0.0;
                for &(a, b, v) in &p.entries[p.starts[k]..p.starts[k + 1]] {
                    acc += (v * q[(b, a)]).re;
                }
                out[i] += acc;
            }
        }
        out
    }

    /// M_ij = Re tr(Fᵢ·X·Fⱼ·W).
    ///
    /// Pieces come in (adjoint, original) pairs at indices 2k, 2k+1, so the
    /// partner of piece a is a^1. The (a, b) contribution is the transpose
    /// of the (b^1, a^1) one, and only one of each couple is computed.
    fn schur(&self, m: usize, x: &[ComplexMatrix], w: &[ComplexMatrix]) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(m, m);
        let np = self.pieces.len();
        let mut gq: Vec<C64> = Vec::new();
        let mut hp: Vec<C64> = Vec::new();
        for ai in 0..np {
            for bi in 0..np {
                let (ca, cb) = (bi ^ 1, ai ^ 1);
                if (ca, cb) < (ai, bi) {
                    continue;
                }
                let self_paired = (ca, cb) == (ai, bi);
                let (a, b) = (&self.pieces[ai], &self.pieces[bi]);
                if a.lmi != b.lmi {
                    continue;
                }
                let k = a.lmi;
                // G = R_a X[c_a, r_b] L_b,  H = R_b W[c_b, r_a] L_a
                let g = a.sandwich(&x[k], b.rows, b.l.as_ref());
                let h = b.sandwich(&w[k], a.rows, a.l.as_ref());
                for (ka, &i) in a.vars.iter().enumerate() {
                    let ea = &a.entries[a.starts[ka]..a.starts[ka + 1]];
                    let mut row = vec![0.0; b.vars.len()];
                    for &(p, q, v) in ea {
                        gq.clear();
                        gq.extend((0..g.ncols()).map(|s| v * g[(q, s)]));
                        hp.clear();
                        hp.extend((0..h.nrows()).map(|t| h[(t, p)]));
                        for (kb, acc) in row.iter_mut().enumerate() {
                            let eb = &b.entries[b.starts[kb]..b.starts[kb + 1]];
                            let mut sum = C64::new(0.0, 0.0);
                            for &(s, t, wv) in eb {
                                sum += wv * gq[s] * hp[t];
                            }
                            *acc += sum.re;
                        }
                    }
                    for (kb, &j) in b.vars.iter().enumerate() {
                        out[(i, j)] += row[kb];
                        if !self_paired {
                            out[(j, i)] += row[kb];
                        }
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

fn dot(a: &[ComplexMatrix], b: &[ComplexMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y.iter()).map(|(u, v)| (u.conj() * v).re).sum::<f64>()).sum()
}

fn fro(a: &[ComplexMatrix]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn herm(a: ComplexMatrix) -> ComplexMatrix {
    matkit::hermitian_part(&a)
}

fn llt(a: &ComplexMatrix) -> Option<faer::linalg::solvers::Llt<C64>> {
    to_faer(a).llt(Side::Lower).ok()
}

/// Largest α ≤ 1 with A + α·ΔA ⪰ 0 (A ≻ 0), or None if A is not PD.
fn max_step(a: &ComplexMatrix, da: &ComplexMatrix) -> Option<f64> {
    let f = llt(a)?;
    let l = f.L();
    let mut t1 = to_faer(da);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, t1.as_mut(), Par::Seq);
    let mut t2 = t1.adjoint().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, t2.as_mut(), Par::Seq);
    let lam = matkit::min_hermitian_eigenvalue(&from_faer(t2.as_ref()));
    Some(if lam >= 0.0 { 1.0 } else { (-1.0 / lam).min(1.0) })
}

fn identity_like(dims: &[usize], s: f64) -> Vec<ComplexMatrix> {
    dims.iter().map(|&d| matkit::identity(d) * c(s, 0.0)).collect()
}

pub fn solve(p: &ConicProblem, opts: &IpmOptions, start: Option<&[f64]>) -> IpmResult {
    let vars = &p.vars;
    let m = vars.total();
    let blocks = Blocks::new(p);
    let n_total: usize = blocks.dims.iter().sum();
    let cvec = &p.objective;
    let cnorm = vnorm(cvec);
    let c_mats: Vec<ComplexMatrix> = blocks
        .f0
        .iter()
        .zip(&blocks.lmis)
        .map(|(f, l)| {
            let mut f = f.clone();
            for i in 0..f.nrows() {
                f[(i, i)] -= c(l.margin, 0.0);
            }
            f
        })
        .collect();
    let f0norm = fro(&blocks.f0);
    let sqn = (n_total as f64).sqrt();

    let mut y = start.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; m]);
    // Initial scales as in SDPT3; ‖Fₖ‖² is the diagonal of M at X = W = I.
    let fk: Vec<f64> = {
        let eye = identity_like(&blocks.dims, 1.0);
        let g = blocks.schur(m, &eye, &eye);
        (0..m).map(|k| g[(k, k)].max(0.0).sqrt()).collect()
    };
    let xi_x = fk
        .iter()
        .zip(cvec)
        .map(|(f, ck)| n_total as f64 * (1.0 + ck.abs()) / (1.0 + f))
        .fold(10.0f64.max(sqn), f64::max);
    let xi_z = fk.iter().fold(10.0f64.max(sqn).max(f0norm), |a, &f| a.max(f));
    let mut x = identity_like(&blocks.dims, xi_x);
    let mut z = identity_like(&blocks.dims, xi_z);
    if start.is_some() {
        // Start from the given y when it is strictly inside the cone.
        let s = blocks.slack(vars, &y);
        if s.iter().all(|b| llt(b).is_some()) {
            z = s;
        }
    }

    let mut result = IpmResult {
        status: IpmStatus::IterationLimit,
        y: y.clone(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        relative_gap: f64::INFINITY,
        iterations: 0,
        reduced_accuracy: false,
    };
    let mut slow = 0;
    let mut best: Option<(f64, IpmResult)> = None;
    // Iteration and score of the last halving of the best score.
    let mut last_gain = (0, f64::INFINITY);

    for it in 0..=opts.max_iter {
        let fy = blocks.slack(vars, &y);
        let rd: Vec<ComplexMatrix> = fy.iter().zip(&z).map(|(f, zz)| f - zz).collect();
        let fx = blocks.inner(m, &x);
        let rp: Vec<f64> = fx.iter().zip(cvec).map(|(a, b)| a - b).collect();
        let mu = dot(&x, &z) / n_total as f64;
        let pobj = -dot(&c_mats, &x);
        let dobj: f64 = cvec.iter().zip(&y).map(|(a, b)| a * b).sum();
        let pinf = vnorm(&rp) / (1.0 + cnorm);
        let dinf = fro(&rd) / (1.0 + f0norm);
        let gap = (dobj - pobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        result.y = y.clone();
        result.primal_objective = pobj;
        result.dual_objective = dobj;
        result.primal_infeasibility = pinf;
        result.dual_infeasibility = dinf;
        result.relative_gap = gap;
        result.iterations = it;
        let score = gap.max(pinf).max(dinf);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, result.clone()));
        }
        if score < 0.5 * last_gain.1 {
            last_gain = (it, score);
        }
        log::debug!("ipm {it:3}: dobj {dobj:+.8e} pobj {pobj:+.8e} gap {gap:.1e} pinf {pinf:.1e} dinf {dinf:.1e} mu {mu:.1e}");

        if gap < opts.tol && pinf < opts.tol && dinf < opts.tol {
            result.status = IpmStatus::Optimal;
            return result;
        }
        if best.as_ref().is_some_and(|(b, _)| *b < opts.tol.sqrt() && score > 1e3 * b) {
            // Round-off has taken over; the best iterate is the answer.
            break;
        }
        if last_gain.1 < opts.tol.sqrt() && it >= last_gain.0 + 6 {
            // Stuck just short of tolerance.
            break;
        }
        // Farkas ray: X ⪰ 0, ⟨Fᵢ, X⟩ ≈ 0, −⟨F₀ − margin·I, X⟩ > 0.
        if pobj > 1e-12 && vnorm(&fx) < 1e-8 * pobj {
            result.status = IpmStatus::Infeasible;
            return result;
        }
        if vnorm(&y) > 1e12 || dobj < -1e12 * (1.0 + cnorm) {
            result.status = IpmStatus::Unbounded;
            return result;
        }
        if it == opts.max_iter {
            break;
        }

        let w: Vec<ComplexMatrix> = match z
            .iter()
            .map(|zz| llt(zz).map(|f| from_faer(f.inverse().as_ref())))
            .collect::<Option<Vec<_>>>()
        {
            Some(w) => w,
            None => {
                result.status = IpmStatus::Stalled;
                break;
            }
        };
        let mut schur = blocks.schur(m, &x, &w);
        // Jacobi equilibration: solve (D M D)(D⁻¹dy) = D·rhs with D = diag(M)^-½.
        let dscale: Vec<f64> = (0..m).map(|i| 1.0 / schur[(i, i)].abs().max(1e-300).sqrt()).collect();
        for i in 0..m {
            for j in 0..m {
                schur[(i, j)] *= dscale[i] * dscale[j];
            }
            schur[(i, i)] += 1e-15;
        }
        let chol = schur.llt(Side::Lower).ok();
        let lu = if chol.is_none() { Some(schur.partial_piv_lu()) } else { None };
        let solve_m = |rhs: &[f64]| -> Vec<f64> {
            let b = Mat::<f64>::from_fn(m, 1, |i, _| rhs[i] * dscale[i]);
            let s = match (&chol, &lu) {
                (Some(ch), _) => ch.solve(&b),
                (None, Some(lu)) => lu.solve(&b),
                _ => unreachable!(),
            };
            (0..m).map(|i| s[(i, 0)] * dscale[i]).collect()
        };

        let direction = |rc: &[ComplexMatrix]| {
            let t: Vec<ComplexMatrix> = (0..rc.len())
                .map(|k| matkit::matmul(&(&rc[k] - matkit::matmul(&x[k], &rd[k])), &w[k]))
                .collect();
            let g = blocks.inner(m, &t);
            let rhs: Vec<f64> = rp.iter().zip(&g).map(|(a, b)| a + b).collect();
            let mut dy = solve_m(&rhs);
            let build = |dy: &[f64]| {
                let lin = blocks.linear(vars, dy);
                let dz: Vec<ComplexMatrix> = rd.iter().zip(&lin).map(|(a, b)| herm(a + b)).collect();
                let dx: Vec<ComplexMatrix> = (0..rc.len())
                    .map(|k| herm(matkit::matmul(&(&rc[k] - matkit::matmul(&x[k], &dz[k])), &w[k])))
                    .collect();
                (dz, dx)
            };
            let (mut dz, mut dx) = build(&dy);
            // Refine on the primal equations ⟨Fᵢ, ΔX⟩ = −r_p.
            let mut res = f64::INFINITY;
            for _ in 0..3 {
                let fdx = blocks.inner(m, &dx);
                let short: Vec<f64> = rp.iter().zip(&fdx).map(|(a, b)| -a - b).collect();
                let r = vnorm(&short);
                if r <= 1e-14 * (1.0 + vnorm(&rp)) || r > 0.5 * res {
                    break;
                }
                res = r;
                let delta = solve_m(&short);
                for (a, b) in dy.iter_mut().zip(&delta) {
                    *a -= b;
                }
                (dz, dx) = build(&dy);
            }
            (dy, dz, dx)
        };
        let steps = |dx: &[ComplexMatrix], dz: &[ComplexMatrix]| -> Option<(f64, f64)> {
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for k in 0..dx.len() {
                ap = ap.min(max_step(&x[k], &dx[k])?);
                ad = ad.min(max_step(&z[k], &dz[k])?);
            }
            Some((ap, ad))
        };

        let xz: Vec<ComplexMatrix> = (0..x.len()).map(|k| matkit::matmul(&x[k], &z[k])).collect();
        let rc_aff: Vec<ComplexMatrix> = xz.iter().map(|a| -a).collect();
        let (_, dz_a, dx_a) = direction(&rc_aff);
        let Some((ap, ad)) = steps(&dx_a, &dz_a) else {
            result.status = IpmStatus::Stalled;
            break;
        };
        let xa: Vec<ComplexMatrix> = (0..x.len()).map(|k| &x[k] + &dx_a[k] * c(ap, 0.0)).collect();
        let za: Vec<ComplexMatrix> = (0..z.len()).map(|k| &z[k] + &dz_a[k] * c(ad, 0.0)).collect();
        let mu_aff = dot(&xa, &za) / n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc: Vec<ComplexMatrix> = (0..x.len())
            .map(|k| {
                let d = blocks.dims[k];
                matkit::identity(d) * c(sigma * mu, 0.0) - &xz[k] - matkit::matmul(&dx_a[k], &dz_a[k])
            })
            .collect();
        let (dy, dz, dx) = direction(&rc);
        let Some((ap, ad)) = steps(&dx, &dz) else {
            result.status = IpmStatus::Stalled;
            break;
        };
        let ap = (opts.tau * ap).min(1.0);
        let ad = (opts.tau * ad).min(1.0);
        log::trace!("ipm {it:3}: sigma {sigma:.2e} ap {ap:.2e} ad {ad:.2e}");
        for k in 0..x.len() {
            x[k] = herm(&x[k] + &dx[k] * c(ap, 0.0));
            z[k] = herm(&z[k] + &dz[k] * c(ad, 0.0));
        }
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += ad * d;
        }
        if ap.min(ad) < 1e-8 {
            slow += 1;
            if slow >= 5 {
                result.status = IpmStatus::Stalled;
                break;
            }
        } else {
            slow = 0;
        }
    }
    // Accept the best iterate at reduced accuracy, as SDP codes commonly do.
    match best {
        Some((b, mut r)) if b < opts.tol.sqrt() => {
            r.status = IpmStatus::Optimal;
            r.reduced_accuracy = true;
            r
        }
        _ => result,
    }
}
