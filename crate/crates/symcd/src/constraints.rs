//! Matrix-inequality constraints on commutant-parameterized variables and
//! the optimization problems assembled from them.
//!
//! All constraints live in symmetric-domain coordinates: R̂ = (V*⊗I)R(V⊗I)
//! and X̂ = Σ y_k Ê_k with real y. A unitary congruence does not change
//! positive semidefiniteness, so every LMI below is equivalent to its
//! original-domain form.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::matkit::{self, c, ComplexMatrix, NormKind, C64, ONE, ZERO};
use crate::symmetry::{SparseEntries, StructuredDecomposition, SymmetryGroup};

pub const DEFAULT_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tying {
    /// Real coefficients: conjugate symmetric-domain blocks stay tied.
    #[default]
    Paired,
    /// Independent real and imaginary parts per basis element.
    Untied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Commutant,
    SymmetricCommutant,
    Hermitian,
    Scalar,
}

/// A block of consecutive entries of the flat variable vector y, mapped to
/// a matrix by Σ y_k E_k.
#[derive(Debug, Clone)]
pub struct VarGroup {
    pub name: String,
    pub kind: GroupKind,
    pub offset: usize,
    pub len: usize,
    pub rows: usize,
    pub cols: usize,
    pub basis: Vec<SparseEntries>,
}

#[derive(Debug, Clone, Default)]
pub struct Variables {
    pub groups: Vec<VarGroup>,
}

impl Variables {
    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.len).sum()
    }

    fn push(&mut self, name: &str, kind: GroupKind, rows: usize, cols: usize, basis: Vec<SparseEntries>) -> usize {
        let offset = self.total();
        self.groups.push(VarGroup {
            name: name.to_string(),
            kind,
            offset,
            len: basis.len(),
            rows,
            cols,
            basis,
        });
        self.groups.len() - 1
    }

    /// Symmetric-domain commutant variable for matrices acted on by `g`.
    pub fn add_commutant(&mut self, name: &str, g: &SymmetryGroup, tying: Tying) -> usize {
        let mut basis: Vec<SparseEntries> = (0..g.commutant_dim()).map(|k| g.hat_basis_entries(k)).collect();
        if tying == Tying::Untied {
            let imag: Vec<SparseEntries> = basis
                .iter()
                .map(|e| e.iter().map(|&(i, j, z)| (i, j, z * c(0.0, 1.0))).collect())
                .collect();
            basis.extend(imag);
        }
        self.push(name, GroupKind::Commutant, g.n_y(), g.n_u(), basis)
    }

    /// Real symmetric members of a square commutant, in the symmetric
    /// domain (Hermitian there).
    pub fn add_symmetric_commutant(&mut self, name: &str, g: &SymmetryGroup) -> Result<usize> {
        if g.b_y != g.b_u {
            return Err(Error::Dimension("symmetric commutant needs square blocks".into()));
        }
        let mut ortho: Vec<matkit::RealMatrix> = Vec::new();
        for k in 0..g.commutant_dim() {
            let b = g.basis_element(k);
            let mut s = (&b + b.transpose()) * 0.5;
            for q in &ortho {
                let d = q.dot(&s);
                s -= q * d;
            }
            let nrm = s.norm();
            if nrm > 1e-10 {
                ortho.push(s / nrm);
            }
        }
        let mut basis = Vec::with_capacity(ortho.len());
        for s in &ortho {
            let h = g.to_symmetric_domain(&matkit::from_real(s))?;
            let scale = matkit::max_abs(&h);
            let mut e = Vec::new();
            for i in 0..h.nrows() {
                for j in 0..h.ncols() {
                    let mut z = h[(i, j)];
                    if z.re.abs() < 1e-13 * scale {
                        z.re = 0.0;
                    }
                    if z.im.abs() < 1e-13 * scale {
                        z.im = 0.0;
                    }
                    if z != ZERO {
                        e.push((i, j, z));
                    }
                }
            }
            basis.push(e);
        }
        Ok(self.push(name, GroupKind::SymmetricCommutant, g.n_y(), g.n_y(), basis))
    }

    /// General n×n Hermitian matrix with the orthonormal basis e_pp,
    /// (e_pq + e_qp)/√2 and i(e_pq − e_qp)/√2.
    pub fn add_hermitian(&mut self, name: &str, n: usize) -> usize {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut basis = Vec::with_capacity(n * n);
        for p in 0..n {
            basis.push(vec![(p, p, ONE)]);
        }
        for p in 0..n {
            for q in p + 1..n {
                basis.push(vec![(p, q, c(s, 0.0)), (q, p, c(s, 0.0))]);
                basis.push(vec![(p, q, c(0.0, s)), (q, p, c(0.0, -s))]);
            }
        }
        self.push(name, GroupKind::Hermitian, n, n, basis)
    }

    pub fn add_scalar(&mut self, name: &str) -> usize {
        self.push(name, GroupKind::Scalar, 1, 1, vec![vec![(0, 0, ONE)]])
    }

    pub fn group(&self, id: usize) -> &VarGroup {
        &self.groups[id]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn slice<'a>(&self, id: usize, y: &'a [f64]) -> &'a [f64] {
        let g = &self.groups[id];
        &y[g.offset..g.offset + g.len]
    }

    pub fn matrix(&self, id: usize, y: &[f64]) -> ComplexMatrix {
        let g = &self.groups[id];
        let mut out = ComplexMatrix::zeros(g.rows, g.cols);
        for (k, e) in g.basis.iter().enumerate() {
            let yk = y[g.offset + k];
            if yk != 0.0 {
                for &(i, j, z) in e {
                    out[(i, j)] += z * yk;
                }
            }
        }
        out
    }

    pub fn scalar(&self, id: usize, y: &[f64]) -> f64 {
        y[self.groups[id].offset]
    }

    /// Basis coefficients of `m`; errors if `m` is not in the span.
    pub fn coefficients_of(&self, id: usize, m: &ComplexMatrix) -> Result<Vec<f64>> {
        let g = &self.groups[id];
        if m.nrows() != g.rows || m.ncols() != g.cols {
            return Err(Error::Dimension(format!(
                "{} is {}x{}, got {}x{}",
                g.name,
                g.rows,
                g.cols,
                m.nrows(),
                m.ncols()
            )));
        }
        let coeffs: Vec<f64> = g
            .basis
            .iter()
            .map(|e| e.iter().map(|&(i, j, z)| (z.conj() * m[(i, j)]).re).sum())
            .collect();
        let mut rebuilt = ComplexMatrix::zeros(g.rows, g.cols);
        for (e, &yk) in g.basis.iter().zip(&coeffs) {
            for &(i, j, z) in e {
                rebuilt[(i, j)] += z * yk;
            }
        }
        let resid = (&rebuilt - m).norm();
        if resid > 1e-8 * m.norm().max(1.0) {
            return Err(Error::Precondition(format!(
                "matrix is not in the span of {} (residual {resid:e})",
                g.name
            )));
        }
        Ok(coeffs)
    }

    pub fn set(&self, id: usize, y: &mut [f64], values: &[f64]) {
        let g = &self.groups[id];
        y[g.offset..g.offset + g.len].copy_from_slice(values);
    }
}

#[derive(Debug, Clone)]
pub enum Term {
    Const(ComplexMatrix),
    /// scale · L · (Σ y_k E_k) · R over one variable group.
    Lin {
        group: usize,
        left: Option<ComplexMatrix>,
        right: Option<ComplexMatrix>,
        scale: C64,
    },
    /// y · scale · M (identity when `mat` is None) for a scalar group.
    Scalar {
        group: usize,
        mat: Option<ComplexMatrix>,
        scale: C64,
    },
}

impl Term {
    pub fn lin(group: usize) -> Term {
        Term::Lin { group, left: None, right: None, scale: ONE }
    }

    pub fn left(group: usize, l: ComplexMatrix) -> Term {
        Term::Lin { group, left: Some(l), right: None, scale: ONE }
    }

    pub fn scalar_eye(group: usize, scale: f64) -> Term {
        Term::Scalar { group, mat: None, scale: c(scale, 0.0) }
    }

    fn value(&self, vars: &Variables, y: &[f64], rows: usize, cols: usize) -> ComplexMatrix {
        match self {
            Term::Const(m) => m.clone(),
            Term::Lin { group, left, right, scale } => {
                let mut e = vars.matrix(*group, y);
                if let Some(l) = left {
                    e = l * e;
                }
                if let Some(r) = right {
                    e *= r;
                }
                e * *scale
            }
            Term::Scalar { group, mat, scale } => {
                let v = *scale * vars.scalar(*group, y);
                match mat {
                    Some(m) => m * v,
                    None => ComplexMatrix::identity(rows, cols) * v,
                }
            }
        }
    }

    fn shape(&self, vars: &Variables) -> Option<(usize, usize)> {
        match self {
            Term::Const(m) => Some(m.shape()),
            Term::Lin { group, left, right, .. } => {
                let g = vars.group(*group);
                let r = left.as_ref().map_or(g.rows, |l| l.nrows());
                let cc = right.as_ref().map_or(g.cols, |m| m.ncols());
                let inner_ok = left.as_ref().map_or(true, |l| l.ncols() == g.rows)
                    && right.as_ref().map_or(true, |m| m.nrows() == g.cols);
                inner_ok.then_some((r, cc))
            }
            Term::Scalar { mat, .. } => mat.as_ref().map(|m| m.shape()),
        }
    }
}

/// A term placed at block (row, col). Off-diagonal terms are mirrored with
/// their conjugate transpose; a diagonal term K contributes (K + K*)/2.
#[derive(Debug, Clone)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub term: Term,
}

/// Block Hermitian affine expression required to satisfy F(y) ⪰ margin·I.
#[derive(Debug, Clone)]
pub struct Lmi {
    pub name: String,
    pub blocks: Vec<usize>,
    pub entries: Vec<Entry>,
    pub margin: f64,
}

impl Lmi {
    pub fn new(name: &str, blocks: Vec<usize>, margin: f64) -> Lmi {
        Lmi { name: name.to_string(), blocks, entries: Vec::new(), margin }
    }

    pub fn add(&mut self, row: usize, col: usize, term: Term) -> &mut Self {
        self.entries.push(Entry { row, col, term });
        self
    }

    pub fn add_identity(&mut self, block: usize) -> &mut Self {
        let n = self.blocks[block];
        self.add(block, block, Term::Const(matkit::identity(n)))
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = acc;
                acc += b;
                o
            })
            .collect()
    }

    /// Checks every term against the block layout.
    pub fn validate(&self, vars: &Variables) -> Result<()> {
        for e in &self.entries {
            if e.row >= self.blocks.len() || e.col >= self.blocks.len() {
                return Err(Error::Dimension(format!("{}: block index out of range", self.name)));
            }
            let want = (self.blocks[e.row], self.blocks[e.col]);
            match e.term.shape(vars) {
                Some(s) if s == want => {}
                None if matches!(e.term, Term::Scalar { mat: None, .. }) && want.0 == want.1 => {}
                other => {
                    return Err(Error::Dimension(format!(
                        "{}: term at ({}, {}) has shape {:?}, block is {:?}",
                        self.name, e.row, e.col, other, want
                    )))
                }
            }
        }
        Ok(())
    }

    /// F(y), without the margin.
    pub fn evaluate(&self, vars: &Variables, y: &[f64]) -> ComplexMatrix {
        let off = self.offsets();
        let n = self.dim();
        let mut out = ComplexMatrix::zeros(n, n);
        for e in &self.entries {
            let (br, bc) = (self.blocks[e.row], self.blocks[e.col]);
            let k = e.term.value(vars, y, br, bc);
            if e.row == e.col {
                let h = (&k + k.adjoint()) * c(0.5, 0.0);
                let mut v = out.view_mut((off[e.row], off[e.col]), (br, bc));
                v += &h;
            } else {
                {
                    let mut v = out.view_mut((off[e.row], off[e.col]), (br, bc));
                    v += &k;
                }
                let mut v = out.view_mut((off[e.col], off[e.row]), (bc, br));
                v += k.adjoint();
            }
        }
        out
    }

    pub fn min_eig(&self, vars: &Variables, y: &[f64]) -> f64 {
        matkit::min_hermitian_eigenvalue(&self.evaluate(vars, y))
    }

    /// Satisfied when λ_min(F(y)) ≥ margin − tol.
    pub fn is_satisfied(&self, vars: &Variables, y: &[f64], tol: f64) -> bool {
        self.min_eig(vars, y) >= self.margin - tol
    }

    pub fn groups_used(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .entries
            .iter()
            .filter_map(|e| match &e.term {
                Term::Lin { group, .. } | Term::Scalar { group, .. } => Some(*group),
                Term::Const(_) => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

// ---------------------------------------------------------------------------
// Linear constraints

fn eye(n: usize) -> ComplexMatrix {
    matkit::identity(n)
}

/// [[I, R̂X̂ − I], [·, I]] ⪰ margin, i.e. ‖RX − I‖₂ < 1 − margin.
pub fn build_ns1(r_hat: &ComplexMatrix, x: usize, margin: f64) -> Lmi {
    let ny = r_hat.nrows();
    let mut l = Lmi::new("NS1", vec![ny, ny], margin);
    l.add_identity(0).add_identity(1);
    l.add(0, 1, Term::left(x, r_hat.clone()));
    l.add(0, 1, Term::Const(-eye(ny)));
    l
}

/// [[I, R̂X̂ − I], [·, α∞ I]] ⪰ margin.
pub fn build_np2(r_hat: &ComplexMatrix, x: usize, alpha: usize, margin: f64) -> Lmi {
    let ny = r_hat.nrows();
    let mut l = Lmi::new("NP2", vec![ny, ny], margin);
    l.add_identity(0);
    l.add(1, 1, Term::scalar_eye(alpha, 1.0));
    l.add(0, 1, Term::left(x, r_hat.clone()));
    l.add(0, 1, Term::Const(-eye(ny)));
    l
}

/// [[I, X̂], [X̂*, β I]] ⪰ margin, i.e. ‖X‖₂² ≤ β.
pub fn build_rs(vars: &Variables, x: usize, beta: usize, margin: f64) -> Lmi {
    let g = vars.group(x);
    let mut l = Lmi::new("RS", vec![g.rows, g.cols], margin);
    l.add_identity(0);
    l.add(1, 1, Term::scalar_eye(beta, 1.0));
    l.add(0, 1, Term::lin(x));
    l
}

/// [[Q, R̂Ẑ − Q], [·, Q]] ⪰ margin with Q = P_S⁻¹ and Z_S = X P_S⁻¹.
pub fn build_ns4(r_hat: &ComplexMatrix, z: usize, q: usize, margin: f64) -> Lmi {
    let ny = r_hat.nrows();
    let mut l = Lmi::new("NS4", vec![ny, ny], margin);
    l.add(0, 0, Term::lin(q));
    l.add(1, 1, Term::lin(q));
    l.add(0, 1, Term::left(z, r_hat.clone()));
    l.add(0, 1, Term::Lin { group: q, left: None, right: None, scale: -ONE });
    l
}

/// X = Z_S · Q⁻¹ recovered after an NS4 solve.
pub fn recover_ns4(z: &ComplexMatrix, q: &ComplexMatrix) -> Result<ComplexMatrix> {
    let qi = q
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Rank("recovered P_S⁻¹ is singular".into()))?;
    if matkit::cond(q) > 1e12 {
        return Err(Error::Rank("recovered P_S⁻¹ is numerically singular".into()));
    }
    Ok(z * qi)
}

/// upper − s ⪰ margin for a scalar s.
pub fn build_upper_bound(name: &str, s: usize, upper: f64, margin: f64) -> Lmi {
    let mut l = Lmi::new(name, vec![1], margin);
    l.add(0, 0, Term::Const(ComplexMatrix::from_element(1, 1, c(upper, 0.0))));
    l.add(0, 0, Term::scalar_eye(s, -1.0));
    l
}

// ---------------------------------------------------------------------------
// Bilinear constraints

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BmiKind {
    /// [[I, Φ²], [·, I]] ⪰ 0.
    Ns2,
    /// [[P⁻¹, Φ], [·, P]] ≻ 0.
    Ns3,
    /// [[I, Φ − TΦ²], [·, α_ω I]] ⪰ 0, certifying ‖Φ − TΦ²‖₂ ≤ √α_ω.
    Np1 { omega: f64, t_re: f64, t_im: f64 },
    /// [[σ²P⁻¹, Φ], [·, P]] ≻ 0, so ρ(Φ) < σ.
    Init,
}

/// Which convexifying potential to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// Positive semidefinite potential, realized as a Schur-augmented LMI.
    #[default]
    Psd,
    /// Off-diagonal potential for NS2 and NP1; indefinite in general.
    OffDiagonal,
}

#[derive(Debug, Clone)]
pub struct Bmi {
    pub kind: BmiKind,
    pub r_hat: ComplexMatrix,
    pub x: usize,
    /// P for NS3 and Init.
    pub p: Option<usize>,
    /// α_ω for NP1, σ for Init.
    pub scalar: Option<usize>,
    pub margin: f64,
    pub potential: Potential,
}

impl Bmi {
    pub fn name(&self) -> &'static str {
        match self.kind {
            BmiKind::Ns2 => "NS2",
            BmiKind::Ns3 => "NS3",
            BmiKind::Np1 { .. } => "NP1",
            BmiKind::Init => "INIT",
        }
    }

    fn t(&self) -> C64 {
        match self.kind {
            BmiKind::Np1 { t_re, t_im, .. } => c(t_re, t_im),
            _ => ZERO,
        }
    }

    fn phi(&self, vars: &Variables, y: &[f64]) -> ComplexMatrix {
        &self.r_hat * vars.matrix(self.x, y) - eye(self.r_hat.nrows())
    }

    fn p_matrix(&self, vars: &Variables, y: &[f64]) -> ComplexMatrix {
        vars.matrix(self.p.expect("P variable"), y)
    }

    fn scalar_value(&self, vars: &Variables, y: &[f64]) -> f64 {
        vars.scalar(self.scalar.expect("scalar variable"), y)
    }

    /// Inverse-free form of the true constraint; PSD exactly when the BMI
    /// holds (for NS3 and Init given P ≻ 0).
    pub fn true_matrix(&self, vars: &Variables, y: &[f64]) -> ComplexMatrix {
        let a = self.phi(vars, y);
        let n = a.nrows();
        let block = |tl: ComplexMatrix, tr: ComplexMatrix, br: ComplexMatrix| {
            let mut m = ComplexMatrix::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&tl);
            m.view_mut((0, n), (n, n)).copy_from(&tr);
            m.view_mut((n, 0), (n, n)).copy_from(&tr.adjoint());
            m.view_mut((n, n), (n, n)).copy_from(&br);
            matkit::hermitian_part(&m)
        };
        match self.kind {
            BmiKind::Ns2 => block(eye(n), &a * &a, eye(n)),
            BmiKind::Np1 { .. } => {
                let alpha = self.scalar_value(vars, y);
                block(eye(n), &a - &a * &a * self.t(), eye(n) * c(alpha, 0.0))
            }
            BmiKind::Ns3 => {
                let p = self.p_matrix(vars, y);
                block(p.clone(), &p * &a, p)
            }
            BmiKind::Init => {
                let p = self.p_matrix(vars, y);
                let s = self.scalar_value(vars, y);
                block(&p * c(s * s, 0.0), &p * &a, p)
            }
        }
    }

    /// Smallest eigenvalue of the true constraint; for NS3 and Init also
    /// bounded by λ_min(P) so that an indefinite P never counts as feasible.
    pub fn min_eig(&self, vars: &Variables, y: &[f64]) -> f64 {
        let m = matkit::min_hermitian_eigenvalue(&self.true_matrix(vars, y));
        match self.kind {
            BmiKind::Ns3 | BmiKind::Init => m.min(matkit::min_hermitian_eigenvalue(&self.p_matrix(vars, y))),
            _ => m,
        }
    }

    /// The true constraint after the congruence used by the convexification
    /// at y_k, and the convexified 2×2 block matrix C. The potential is
    /// their difference, G = true − C.
    pub fn split(&self, vars: &Variables, y: &[f64], y_k: &[f64]) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let a = self.phi(vars, y);
        let a_k = self.phi(vars, y_k);
        let n = a.nrows();
        let d = &a - &a_k;
        let t = self.t();
        let block = |tl: &ComplexMatrix, tr: &ComplexMatrix, br: &ComplexMatrix| {
            let mut m = ComplexMatrix::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(tl);
            m.view_mut((0, n), (n, n)).copy_from(tr);
            m.view_mut((n, 0), (n, n)).copy_from(&tr.adjoint());
            m.view_mut((n, n), (n, n)).copy_from(br);
            m
        };
        match self.kind {
            BmiKind::Ns2 => {
                let l = &a_k * &a + &a * &a_k - &a_k * &a_k;
                let truth = block(&eye(n), &(&a * &a), &eye(n));
                let conv = match self.potential {
                    Potential::Psd => block(&(eye(n) - &d * d.adjoint()), &l, &(eye(n) - d.adjoint() * &d)),
                    Potential::OffDiagonal => block(&eye(n), &l, &eye(n)),
                };
                Ok((truth, conv))
            }
            BmiKind::Np1 { .. } => {
                let alpha = c(self.scalar_value(vars, y), 0.0);
                let l = &a - (&a_k * &a + &a * &a_k - &a_k * &a_k) * t;
                let truth = block(&eye(n), &(&a - &a * &a * t), &(eye(n) * alpha));
                let conv = match self.potential {
                    Potential::Psd => {
                        let m = c(t.norm(), 0.0);
                        block(
                            &(eye(n) - &d * d.adjoint() * m),
                            &l,
                            &(eye(n) * alpha - d.adjoint() * &d * m),
                        )
                    }
                    Potential::OffDiagonal => block(&eye(n), &l, &(eye(n) * alpha)),
                };
                Ok((truth, conv))
            }
            BmiKind::Ns3 | BmiKind::Init => {
                let p = self.p_matrix(vars, y);
                let p_k = self.p_matrix(vars, y_k);
                let p_inv = p
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Rank("P is singular".into()))?;
                let (s, s_k) = if self.kind == BmiKind::Init {
                    (self.scalar_value(vars, y), self.scalar_value(vars, y_k))
                } else {
                    (1.0, 1.0)
                };
                let truth_tl = &p_k * &p_inv * &p_k * c(s * s, 0.0);
                let conv_tl = &p_k * c(2.0 * s_k * s, 0.0) - &p * c(s_k * s_k, 0.0);
                let tr = &p_k * &a;
                Ok((block(&truth_tl, &tr, &p), block(&conv_tl, &tr, &p)))
            }
        }
    }

    /// G(X, X_k) = true − convexified.
    pub fn potential_matrix(&self, vars: &Variables, y: &[f64], y_k: &[f64]) -> Result<ComplexMatrix> {
        let (t, cv) = self.split(vars, y, y_k)?;
        Ok(t - cv)
    }

    /// The convexified LMI at the linearization point y_k.
    pub fn convexify(&self, vars: &Variables, y_k: &[f64]) -> Result<Lmi> {
        let r = &self.r_hat;
        let n = r.nrows();
        let x = self.x;
        let x_k = vars.matrix(x, y_k);
        let a_k = r * &x_k - eye(n);
        let r_xk = r * &x_k;
        let name = format!("{}@k", self.name());
        let lmi = match self.kind {
            BmiKind::Ns2 | BmiKind::Np1 { .. } => {
                let t = if self.kind == BmiKind::Ns2 { -ONE } else { self.t() };
                // Φ² = Φ_kΦ + ΦΦ_k − Φ_k² + D² with D = R̂(X̂ − X̂_k); the D²
                // remainder is absorbed by the Schur-augmented blocks.
                let augment = self.potential == Potential::Psd && t != ZERO;
                let blocks = if augment { vec![n; 4] } else { vec![n; 2] };
                let mut l = Lmi::new(&name, blocks, self.margin);
                l.add_identity(0);
                match self.kind {
                    BmiKind::Np1 { .. } => {
                        l.add(1, 1, Term::scalar_eye(self.scalar.expect("α_ω"), 1.0));
                    }
                    _ => {
                        l.add_identity(1);
                    }
                }
                if self.kind == BmiKind::Ns2 {
                    // L = Φ_kΦ + ΦΦ_k − Φ_k²
                    l.add(0, 1, Term::left(x, &a_k * r));
                    l.add(0, 1, Term::Lin { group: x, left: Some(r.clone()), right: Some(a_k.clone()), scale: ONE });
                    l.add(0, 1, Term::Const(-(&a_k * c(2.0, 0.0)) - &a_k * &a_k));
                } else {
                    // L = Φ − T(Φ_kΦ + ΦΦ_k − Φ_k²)
                    l.add(0, 1, Term::left(x, r - &a_k * r * t));
                    l.add(0, 1, Term::Lin { group: x, left: Some(r.clone()), right: Some(a_k.clone()), scale: -t });
                    l.add(0, 1, Term::Const(-eye(n) + (&a_k * c(2.0, 0.0) + &a_k * &a_k) * t));
                }
                if augment {
                    l.add_identity(2).add_identity(3);
                    let (u_scale, v_scale) = if self.kind == BmiKind::Ns2 {
                        (ONE, ONE)
                    } else {
                        let cc = 1.0 / t.norm().sqrt();
                        (-t * cc, c(1.0 / cc, 0.0))
                    };
                    // U = u_scale·D at (0,2), V = v_scale·D at (3,1).
                    l.add(0, 2, Term::Lin { group: x, left: Some(r.clone()), right: None, scale: u_scale });
                    l.add(0, 2, Term::Const(-&r_xk * u_scale));
                    l.add(3, 1, Term::Lin { group: x, left: Some(r.clone()), right: None, scale: v_scale });
                    l.add(3, 1, Term::Const(-&r_xk * v_scale));
                }
                l
            }
            BmiKind::Ns3 | BmiKind::Init => {
                let p = self.p.expect("P variable");
                let p_k = vars.matrix(p, y_k);
                let mut l = Lmi::new(&name, vec![n, n], self.margin);
                if self.kind == BmiKind::Ns3 {
                    l.add(0, 0, Term::Const(&p_k * c(2.0, 0.0)));
                    l.add(0, 0, Term::Lin { group: p, left: None, right: None, scale: -ONE });
                } else {
                    let sigma = self.scalar.expect("σ");
                    let s_k = vars.scalar(sigma, y_k);
                    l.add(0, 0, Term::Scalar { group: sigma, mat: Some(&p_k * c(2.0 * s_k, 0.0)), scale: ONE });
                    l.add(0, 0, Term::Lin { group: p, left: None, right: None, scale: c(-s_k * s_k, 0.0) });
                }
                l.add(0, 1, Term::left(x, &p_k * r));
                l.add(0, 1, Term::Const(-p_k.clone()));
                l.add(1, 1, Term::lin(p));
                l
            }
        };
        lmi.validate(vars)?;
        Ok(lmi)
    }
}

// ---------------------------------------------------------------------------
// Problem assembly

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// min α∞ + β s.t. NS3 (bilinear), NP2, RS.
    Example29,
    /// min α∞/ᾱ∞ + β/β̄ s.t. NP2, RS, α∞ < 1.
    LmiProblem,
    /// LmiProblem plus NP1 at each listed frequency.
    BmiProblem,
    /// min σ s.t. [[σ²P⁻¹, Φ], [·, P]] ≻ 0.
    Init,
}

/// Normalizing weights from the Frobenius baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha_inf: f64,
    pub beta: f64,
    pub alpha_omega: Vec<f64>,
}

/// ᾱ∞ = ‖Φ^F‖₂², β̄ = ‖(R^F)^†‖₂², ᾱ_ω = ‖Φ^F − T(jω)(Φ^F)²‖₂².
pub fn frobenius_weights(d: &StructuredDecomposition, t_values: &[C64]) -> Weights {
    let phi = &d.phi_s;
    let sq = |m: &ComplexMatrix| matkit::norm(m, NormKind::Two).powi(2);
    Weights {
        alpha_inf: sq(phi),
        beta: sq(&d.r_s_pinv),
        alpha_omega: t_values.iter().map(|&t| sq(&(phi - phi * phi * t))).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct AssembleOptions {
    pub weights: Option<Weights>,
    /// (ω, T(jω)) pairs for NP1.
    pub np1: Vec<(f64, C64)>,
    pub margin: f64,
    pub tying: Tying,
    pub potential: Potential,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            weights: None,
            np1: Vec::new(),
            margin: DEFAULT_MARGIN,
            tying: Tying::Paired,
            potential: Potential::Psd,
        }
    }
}

/// Linear objective, LMIs and tagged BMIs over one variable vector.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub kind: ProblemKind,
    pub vars: Variables,
    pub objective: Vec<f64>,
    pub lmis: Vec<Lmi>,
    pub bmis: Vec<Bmi>,
    pub margin: f64,
    pub x: usize,
    pub r_hat: ComplexMatrix,
}

impl ConicProblem {
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.vars.total();
        if self.objective.len() != total {
            return Err(Error::Dimension(format!(
                "objective has {} coefficients for {total} variables",
                self.objective.len()
            )));
        }
        if self.objective.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Precondition("objective coefficients must be finite and >= 0".into()));
        }
        for l in &self.lmis {
            for gid in l.groups_used() {
                if gid >= self.vars.groups.len() {
                    return Err(Error::Precondition(format!("{} uses an undeclared variable", l.name)));
                }
            }
            l.validate(&self.vars)?;
        }
        Ok(())
    }

    /// LMIs of the subproblem at linearization point y_k.
    pub fn convexified(&self, y_k: &[f64]) -> Result<ConicProblem> {
        let mut out = self.clone();
        for b in &self.bmis {
            out.lmis.push(b.convexify(&self.vars, y_k)?);
        }
        out.bmis.clear();
        Ok(out)
    }

    /// Debug dump: variables with bases, constraints with per-term data.
    pub fn to_json(&self) -> serde_json::Value {
        let m = |a: &ComplexMatrix| matkit::matrix_to_json(a);
        let groups: Vec<_> = self
            .vars
            .groups
            .iter()
            .map(|g| {
                json!({
                    "name": g.name, "kind": g.kind, "offset": g.offset, "len": g.len,
                    "rows": g.rows, "cols": g.cols,
                    "basis": g.basis.iter().map(|e| e.iter().map(|&(i, j, z)| json!([i, j, z.re, z.im])).collect::<Vec<_>>()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let lmis: Vec<_> = self
            .lmis
            .iter()
            .map(|l| {
                let entries: Vec<_> = l
                    .entries
                    .iter()
                    .map(|e| {
                        let term = match &e.term {
                            Term::Const(a) => json!({"const": m(a)}),
                            Term::Lin { group, left, right, scale } => json!({
                                "group": group, "left": left.as_ref().map(m), "right": right.as_ref().map(m),
                                "scale": [scale.re, scale.im]}),
                            Term::Scalar { group, mat, scale } => json!({
                                "scalar": group, "mat": mat.as_ref().map(m), "scale": [scale.re, scale.im]}),
                        };
                        json!({"row": e.row, "col": e.col, "term": term})
                    })
                    .collect();
                json!({"name": l.name, "blocks": l.blocks, "margin": l.margin, "entries": entries})
            })
            .collect();
        json!({
            "kind": self.kind,
            "variables": groups,
            "objective": self.objective,
            "lmis": lmis,
            "bmis": self.bmis.iter().map(|b| json!({"kind": b.kind, "potential": b.potential})).collect::<Vec<_>>(),
        })
    }
}

pub fn assemble(kind: ProblemKind, r: &ComplexMatrix, g: &SymmetryGroup, opts: &AssembleOptions) -> Result<ConicProblem> {
    g.check_dims(r, g.n_y(), g.n_u(), "R")?;
    let r_hat = g.to_symmetric_domain(r)?;
    let ny = g.n_y();
    let mut vars = Variables::default();
    let x = vars.add_commutant("X", &g.transposed(), opts.tying);
    let margin = opts.margin;
    let mut lmis = Vec::new();
    let mut bmis = Vec::new();
    let mut obj_terms: Vec<(usize, f64)> = Vec::new();
    let needs_weights = matches!(kind, ProblemKind::LmiProblem | ProblemKind::BmiProblem);
    let w = if needs_weights {
        Some(opts.weights.clone().ok_or_else(|| {
            Error::Precondition("normalizing weights need a Frobenius baseline".into())
        })?)
    } else {
        None
    };
    match kind {
        ProblemKind::Init => {
            let p = vars.add_hermitian("P", ny);
            let sigma = vars.add_scalar("sigma");
            bmis.push(Bmi { kind: BmiKind::Init, r_hat: r_hat.clone(), x, p: Some(p), scalar: Some(sigma), margin, potential: opts.potential });
            obj_terms.push((sigma, 1.0));
        }
        ProblemKind::Example29 => {
            let p = vars.add_hermitian("P", ny);
            let alpha = vars.add_scalar("alpha_inf");
            let beta = vars.add_scalar("beta");
            bmis.push(Bmi { kind: BmiKind::Ns3, r_hat: r_hat.clone(), x, p: Some(p), scalar: None, margin, potential: opts.potential });
            lmis.push(build_np2(&r_hat, x, alpha, margin));
            lmis.push(build_rs(&vars, x, beta, margin));
            obj_terms.push((alpha, 1.0));
            obj_terms.push((beta, 1.0));
        }
        ProblemKind::LmiProblem | ProblemKind::BmiProblem => {
            let w = w.expect("weights checked above");
            let alpha = vars.add_scalar("alpha_inf");
            let beta = vars.add_scalar("beta");
            lmis.push(build_np2(&r_hat, x, alpha, margin));
            lmis.push(build_rs(&vars, x, beta, margin));
            lmis.push(build_upper_bound("alpha_inf<1", alpha, 1.0, margin));
            obj_terms.push((alpha, 1.0 / w.alpha_inf.max(f64::MIN_POSITIVE)));
            obj_terms.push((beta, 1.0 / w.beta.max(f64::MIN_POSITIVE)));
            if kind == ProblemKind::BmiProblem {
                if opts.np1.is_empty() {
                    return Err(Error::Precondition("BMI problem needs at least one NP1 frequency".into()));
                }
                if w.alpha_omega.len() != opts.np1.len() {
                    return Err(Error::Precondition("one weight per NP1 frequency is required".into()));
                }
                for (k, &(omega, t)) in opts.np1.iter().enumerate() {
                    let a = vars.add_scalar(&format!("alpha_omega_{k}"));
                    bmis.push(Bmi {
                        kind: BmiKind::Np1 { omega, t_re: t.re, t_im: t.im },
                        r_hat: r_hat.clone(),
                        x,
                        p: None,
                        scalar: Some(a),
                        margin,
                        potential: opts.potential,
                    });
                    obj_terms.push((a, 1.0 / w.alpha_omega[k].max(f64::MIN_POSITIVE)));
                }
            }
        }
    }
    let mut objective = vec![0.0; vars.total()];
    for (gid, wgt) in obj_terms {
        objective[vars.group(gid).offset] += wgt;
    }
    let p = ConicProblem { kind, vars, objective, lmis, bmis, margin, x, r_hat };
    p.validate()?;
    Ok(p)
}

/// Maps an original-domain X (n_u×n_y) to X-group coefficients.
pub fn x_coefficients(p: &ConicProblem, g: &SymmetryGroup, x: &ComplexMatrix) -> Result<Vec<f64>> {
    let xh = g.transposed().to_symmetric_domain(x)?;
    p.vars.coefficients_of(p.x, &xh)
}

/// Original-domain X from a solution vector.
pub fn x_matrix(p: &ConicProblem, g: &SymmetryGroup, y: &[f64]) -> Result<ComplexMatrix> {
    g.transposed().from_symmetric_domain(&p.vars.matrix(p.x, y))
}
