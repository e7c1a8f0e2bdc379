//! Permutation symmetries R(Π⊗I) = (Π⊗I)R, their commutant and the
//! symmetric-domain transform.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{self, c, ComplexMatrix, NormKind, RealMatrix, C64, ZERO};

pub const DEFAULT_ELEMENT_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryKind {
    Circulant,
    BlockCirculant,
    BlockCentrosymmetric,
    BcAndCs,
    Custom,
}

/// Symmetry section of a config or scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetrySpec {
    pub kind: SymmetryKind,
    pub n: usize,
    #[serde(default = "one")]
    pub b_y: usize,
    #[serde(default = "one")]
    pub b_u: usize,
    #[serde(default)]
    pub generators: Option<Vec<Vec<usize>>>,
}

fn one() -> usize {
    1
}

impl SymmetrySpec {
    pub fn build(&self) -> Result<SymmetryGroup> {
        group_from_kind(self.kind, self.n, self.b_y, self.b_u, self.generators.as_deref())
    }
}

/// One-line notation: `p[i]` is the image of `i`, so Π has ones at (p[i], i).
pub type Perm = Vec<usize>;

pub fn perm_matrix(p: &[usize]) -> RealMatrix {
    let n = p.len();
    let mut m = RealMatrix::zeros(n, n);
    for (i, &pi) in p.iter().enumerate() {
        m[(pi, i)] = 1.0;
    }
    m
}

fn compose(a: &[usize], b: &[usize]) -> Perm {
    // (a ∘ b)(i) = a(b(i)), matching Π_a Π_b.
    b.iter().map(|&bi| a[bi]).collect()
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &x in p {
        if x >= n || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

pub fn cyclic_shift(n: usize) -> Perm {
    (0..n).map(|i| (i + 1) % n).collect()
}

pub fn exchange(n: usize) -> Perm {
    (0..n).map(|i| n - 1 - i).collect()
}

/// Unitary DFT, V[j,k] = exp(−2πi·jk/n)/√n.
pub fn dft(n: usize) -> ComplexMatrix {
    let s = 1.0 / (n as f64).sqrt();
    ComplexMatrix::from_fn(n, n, |j, k| {
        let ang = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
        c(ang.cos() * s, ang.sin() * s)
    })
}

/// Sparse entry list of a symmetric-domain basis element.
pub type SparseEntries = Vec<(usize, usize, C64)>;

#[derive(Debug, Clone)]
pub struct SymmetryGroup {
    pub kind: SymmetryKind,
    pub n: usize,
    pub b_y: usize,
    pub b_u: usize,
    pub generators: Vec<Perm>,
    pub elements: Vec<Perm>,
    /// n×n unitary; the block transform is V⊗I.
    pub v: ComplexMatrix,
    /// Orthonormal basis of the b = 1 commutant, one normalized orbit
    /// indicator per orbit of index pairs.
    pub base_basis: Vec<RealMatrix>,
    /// V* A V for every element of `base_basis`.
    pub base_hat: Vec<ComplexMatrix>,
    /// Symmetric-domain index paired with each index by conjugation.
    pub conj_pair: Vec<usize>,
}

pub fn group_from_kind(
    kind: SymmetryKind,
    n: usize,
    b_y: usize,
    b_u: usize,
    custom_gens: Option<&[Perm]>,
) -> Result<SymmetryGroup> {
    group_with_cap(kind, n, b_y, b_u, custom_gens, DEFAULT_ELEMENT_CAP)
}

pub fn group_with_cap(
    kind: SymmetryKind,
    n: usize,
    b_y: usize,
    b_u: usize,
    custom_gens: Option<&[Perm]>,
    element_cap: usize,
) -> Result<SymmetryGroup> {
    if n < 2 {
        return Err(Error::Symmetry(format!("n must be at least 2, got {n}")));
    }
    if b_y == 0 || b_u == 0 {
        return Err(Error::Symmetry("block sizes must be positive".into()));
    }
    let generators: Vec<Perm> = match kind {
        SymmetryKind::Circulant | SymmetryKind::BlockCirculant => vec![cyclic_shift(n)],
        SymmetryKind::BlockCentrosymmetric => vec![exchange(n)],
        SymmetryKind::BcAndCs => vec![cyclic_shift(n), exchange(n)],
        SymmetryKind::Custom => custom_gens
            .ok_or_else(|| Error::Symmetry("custom symmetry needs generators".into()))?
            .to_vec(),
    };
    if kind == SymmetryKind::Circulant && (b_y != 1 || b_u != 1) {
        return Err(Error::Symmetry(
            "circulant kind has unit blocks; use block_circulant".into(),
        ));
    }
    for g in &generators {
        if !is_permutation(g, n) {
            return Err(Error::Symmetry(format!("{g:?} is not a permutation of 0..{n}")));
        }
    }
    let elements = enumerate_group(&generators, n, element_cap)?;
    let base_basis = reynolds_basis(&elements, n);
    let (v, cyclic) = match kind {
        SymmetryKind::Circulant | SymmetryKind::BlockCirculant | SymmetryKind::BcAndCs => {
            (dft(n), true)
        }
        _ => (numeric_transform(&generators, &base_basis, n)?, false),
    };
    let base_hat: Vec<ComplexMatrix> = base_basis
        .iter()
        .map(|a| {
            let mut h = v.adjoint() * matkit::from_real(a) * &v;
            clean(&mut h, 1e-13);
            h
        })
        .collect();
    let conj_pair = if cyclic {
        (0..n).map(|k| (n - k) % n).collect()
    } else {
        conj_pairing(&v)
    };
    Ok(SymmetryGroup {
        kind,
        n,
        b_y,
        b_u,
        generators,
        elements,
        v,
        base_basis,
        base_hat,
        conj_pair,
    })
}

fn clean(h: &mut ComplexMatrix, tol: f64) {
    let scale = matkit::max_abs(h).max(1.0);
    for z in h.iter_mut() {
        if z.re.abs() < tol * scale {
            z.re = 0.0;
        }
        if z.im.abs() < tol * scale {
            z.im = 0.0;
        }
    }
}

fn enumerate_group(gens: &[Perm], n: usize, cap: usize) -> Result<Vec<Perm>> {
    let id: Perm = (0..n).collect();
    let mut seen: HashSet<Perm> = HashSet::new();
    let mut out = vec![id.clone()];
    let mut queue = VecDeque::from([id.clone()]);
    seen.insert(id);
    while let Some(p) = queue.pop_front() {
        for g in gens {
            let q = compose(g, &p);
            if seen.insert(q.clone()) {
                if out.len() >= cap {
                    return Err(Error::Symmetry(format!(
                        "group exceeds the element cap of {cap}"
                    )));
                }
                out.push(q.clone());
                queue.push_back(q);
            }
        }
    }
    Ok(out)
}

/// Reynolds averages of the elementary matrices, deduplicated by
/// Gram–Schmidt.
fn reynolds_basis(elements: &[Perm], n: usize) -> Vec<RealMatrix> {
    let mut basis: Vec<RealMatrix> = Vec::new();
    for p in 0..n {
        for q in 0..n {
            let mut e = RealMatrix::zeros(n, n);
            e[(p, q)] = 1.0;
            let mut avg = reynolds_real(&e, elements);
            for b in &basis {
                let d = b.dot(&avg);
                avg -= b * d;
            }
            let nrm = avg.norm();
            if nrm > 1e-10 {
                basis.push(avg / nrm);
            }
        }
    }
    basis
}

fn reynolds_real(a: &RealMatrix, elements: &[Perm]) -> RealMatrix {
    let n = a.nrows();
    let mut out = RealMatrix::zeros(n, n);
    for g in elements {
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += a[(g[i], g[j])];
            }
        }
    }
    out / elements.len() as f64
}

/// Deterministic pseudo-random weights for generic combinations.
fn generic_weight(k: usize) -> f64 {
    let x = ((k as f64 + 1.0) * 0.618_033_988_749_895).fract();
    0.5 + x
}

/// Transform for groups without a cyclic generator: joint eigenvectors of
/// the generators when they commute, otherwise eigenvectors of a generic
/// element of a commutative commutant.
fn numeric_transform(gens: &[Perm], base: &[RealMatrix], n: usize) -> Result<ComplexMatrix> {
    let mats: Vec<RealMatrix> = gens.iter().map(|g| perm_matrix(g)).collect();
    let commuting = mats.iter().enumerate().all(|(i, a)| {
        mats[i + 1..].iter().all(|b| (a * b - b * a).norm() < 1e-12)
    });
    let combo: RealMatrix = if commuting {
        mats.iter()
            .enumerate()
            .fold(RealMatrix::zeros(n, n), |acc, (k, m)| acc + m * generic_weight(k))
    } else {
        let commutative = base.iter().enumerate().all(|(i, a)| {
            base[i + 1..].iter().all(|b| (a * b - b * a).norm() < 1e-10)
        });
        if !commutative {
            return Err(Error::Symmetry(
                "group with non-commuting generators and a non-commutative commutant is not supported"
                    .into(),
            ));
        }
        base.iter()
            .enumerate()
            .fold(RealMatrix::zeros(n, n), |acc, (k, m)| acc + m * generic_weight(k))
    };
    // M is normal, so the commuting Hermitian matrices M + Mᵀ and i(M − Mᵀ)
    // share its eigenvectors; a generic mix of them separates the clusters.
    let m = matkit::from_real(&combo);
    let herm = &m + m.adjoint();
    let skew = (&m - m.adjoint()) * c(0.0, 1.0);
    let mix = herm + skew * c(generic_weight(97) * std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let (_, q) = matkit::hermitian_eigh(&mix)?;
    let resid = {
        let d = q.adjoint() * &m * &q;
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off.max(d[(i, j)].norm());
                }
            }
        }
        off
    };
    if resid > 1e-8 {
        return Err(Error::Numeric(format!(
            "generic commutant element was not diagonalized (off-diagonal {resid:e})"
        )));
    }
    Ok(q)
}

fn conj_pairing(v: &ComplexMatrix) -> Vec<usize> {
    let n = v.ncols();
    (0..n)
        .map(|k| {
            let target = v.column(k).map(|z| z.conj());
            (0..n)
                .find(|&l| (v.column(l) - &target).norm() < 1e-8)
                .unwrap_or(k)
        })
        .collect()
}

impl SymmetryGroup {
    pub fn n_y(&self) -> usize {
        self.n * self.b_y
    }

    pub fn n_u(&self) -> usize {
        self.n * self.b_u
    }

    /// The same group acting on n_u×n_y matrices, e.g. X = R_S^†.
    pub fn transposed(&self) -> SymmetryGroup {
        let mut t = self.clone();
        std::mem::swap(&mut t.b_y, &mut t.b_u);
        t
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Real dimension of the commutant S.
    pub fn commutant_dim(&self) -> usize {
        self.base_basis.len() * self.b_y * self.b_u
    }

    /// Whether every commutant member is block-diagonal with b_y×b_u blocks
    /// in the symmetric domain.
    pub fn diagonalizes_commutant(&self) -> bool {
        self.base_hat.iter().all(|h| {
            (0..self.n).all(|i| (0..self.n).all(|j| i == j || h[(i, j)].norm() < 1e-10))
        })
    }

    fn split(&self, k: usize) -> (usize, usize, usize) {
        let per = self.b_y * self.b_u;
        (k / per, (k % per) / self.b_u, k % self.b_u)
    }

    /// Basis element k = (orbit·b_y + α)·b_u + β, i.e. A_o ⊗ e_αβ.
    pub fn basis_element(&self, k: usize) -> RealMatrix {
        let (o, a, b) = self.split(k);
        let mut e = RealMatrix::zeros(self.b_y, self.b_u);
        e[(a, b)] = 1.0;
        self.base_basis[o].kronecker(&e)
    }

    /// Entries of (V*⊗I) B_k (V⊗I).
    pub fn hat_basis_entries(&self, k: usize) -> SparseEntries {
        let (o, a, b) = self.split(k);
        let h = &self.base_hat[o];
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let z = h[(i, j)];
                if z != ZERO {
                    out.push((i * self.b_y + a, j * self.b_u + b, z));
                }
            }
        }
        out
    }

    pub fn check_dims(&self, a: &ComplexMatrix, rows: usize, cols: usize, what: &str) -> Result<()> {
        if a.nrows() != rows || a.ncols() != cols {
            return Err(Error::Dimension(format!(
                "{what} is {}x{}, expected {rows}x{cols}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(())
    }

    /// (1/|G|) Σ_g (Π_g⊗I)ᵀ A (Π_g⊗I) for an (n·b_r)×(n·b_c) matrix.
    pub fn reynolds(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (br, bc) = self.block_shape(a)?;
        let mut out = ComplexMatrix::zeros(a.nrows(), a.ncols());
        for g in &self.elements {
            for i in 0..self.n {
                for j in 0..self.n {
                    let src = a.view((g[i] * br, g[j] * bc), (br, bc));
                    let mut dst = out.view_mut((i * br, j * bc), (br, bc));
                    dst += src;
                }
            }
        }
        Ok(out / c(self.order() as f64, 0.0))
    }

    fn block_shape(&self, a: &ComplexMatrix) -> Result<(usize, usize)> {
        if a.nrows() % self.n != 0 || a.ncols() % self.n != 0 {
            return Err(Error::Dimension(format!(
                "{}x{} is not partitioned into {} blocks",
                a.nrows(),
                a.ncols(),
                self.n
            )));
        }
        Ok((a.nrows() / self.n, a.ncols() / self.n))
    }

    fn block_transform(&self, b: usize) -> ComplexMatrix {
        matkit::kron(&self.v, &matkit::identity(b))
    }

    /// (V*⊗I) A (V⊗I) for any n-partitioned matrix.
    pub fn to_symmetric_domain(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (br, bc) = self.block_shape(a)?;
        Ok(self.block_transform(br).adjoint() * a * self.block_transform(bc))
    }

    pub fn from_symmetric_domain(&self, a_hat: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (br, bc) = self.block_shape(a_hat)?;
        Ok(self.block_transform(br) * a_hat * self.block_transform(bc).adjoint())
    }

    /// Basis coefficients ⟨B_k, A⟩ (complex for complex A).
    pub fn coefficients(&self, a: &ComplexMatrix) -> Result<Vec<C64>> {
        self.check_dims(a, self.n_y(), self.n_u(), "matrix")?;
        let mut out = Vec::with_capacity(self.commutant_dim());
        for k in 0..self.commutant_dim() {
            let (o, al, be) = self.split(k);
            let base = &self.base_basis[o];
            let mut s = ZERO;
            for p in 0..self.n {
                for q in 0..self.n {
                    let w = base[(p, q)];
                    if w != 0.0 {
                        s += a[(p * self.b_y + al, q * self.b_u + be)] * w;
                    }
                }
            }
            out.push(s);
        }
        Ok(out)
    }

    pub fn from_coefficients(&self, y: &[C64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.n_y(), self.n_u());
        for (k, &yk) in y.iter().enumerate() {
            let (o, al, be) = self.split(k);
            let base = &self.base_basis[o];
            for p in 0..self.n {
                for q in 0..self.n {
                    let w = base[(p, q)];
                    if w != 0.0 {
                        out[(p * self.b_y + al, q * self.b_u + be)] += yk * w;
                    }
                }
            }
        }
        out
    }

    /// Σ y_k Ê_k in the symmetric domain.
    pub fn hat_from_coefficients(&self, y: &[C64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.n_y(), self.n_u());
        for (k, &yk) in y.iter().enumerate() {
            for (i, j, z) in self.hat_basis_entries(k) {
                out[(i, j)] += yk * z;
            }
        }
        out
    }

    /// Symmetric-domain route: orthogonal projection of Â onto span{Ê_k}.
    pub fn project_hat(&self, a_hat: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_dims(a_hat, self.n_y(), self.n_u(), "matrix")?;
        let coeffs: Vec<C64> = (0..self.commutant_dim())
            .map(|k| {
                self.hat_basis_entries(k)
                    .iter()
                    .fold(ZERO, |s, &(i, j, z)| s + z.conj() * a_hat[(i, j)])
            })
            .collect();
        Ok(self.hat_from_coefficients(&coeffs))
    }

    /// Entry-wise block diagonal of a symmetric-domain matrix.
    pub fn block_diagonal_part(&self, a_hat: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (br, bc) = self.block_shape(a_hat)?;
        let mut out = ComplexMatrix::zeros(a_hat.nrows(), a_hat.ncols());
        for i in 0..self.n {
            out.view_mut((i * br, i * bc), (br, bc))
                .copy_from(&a_hat.view((i * br, i * bc), (br, bc)));
        }
        Ok(out)
    }

    pub fn hat_block<'a>(&self, a_hat: &'a ComplexMatrix, i: usize, j: usize) -> ComplexMatrix {
        let (br, bc) = (a_hat.nrows() / self.n, a_hat.ncols() / self.n);
        a_hat.view((i * br, j * bc), (br, bc)).into_owned()
    }

    /// Whether A(Π⊗I_bu) = (Π⊗I_by)A for every generator, to `tol`.
    pub fn contains(&self, a: &ComplexMatrix, tol: f64) -> bool {
        match asymmetry(a, self, NormKind::Frobenius) {
            Ok(e) => e <= tol * a.norm().max(1.0),
            Err(_) => false,
        }
    }
}

/// ε = max over generators of ‖R(Π⊗I_bu) − (Π⊗I_by)R‖.
pub fn asymmetry(r: &ComplexMatrix, g: &SymmetryGroup, kind: NormKind) -> Result<f64> {
    g.check_dims(r, g.n_y(), g.n_u(), "R")?;
    let mut worst = 0.0f64;
    for p in &g.generators {
        let pi = matkit::from_real(&perm_matrix(p));
        let py = matkit::kron(&pi, &matkit::identity(g.b_y));
        let pu = matkit::kron(&pi, &matkit::identity(g.b_u));
        worst = worst.max(matkit::norm(&(r * pu - py * r), kind));
    }
    Ok(worst)
}

/// R = R_S + Δ_S with symmetric-domain images and the error matrix.
#[derive(Debug, Clone)]
pub struct StructuredDecomposition {
    pub r: ComplexMatrix,
    pub r_s: ComplexMatrix,
    pub delta_s: ComplexMatrix,
    pub r_hat: ComplexMatrix,
    pub r_s_hat: ComplexMatrix,
    pub delta_s_hat: ComplexMatrix,
    pub phi_s: ComplexMatrix,
    pub phi_s_hat: ComplexMatrix,
    pub r_s_pinv: ComplexMatrix,
    pub asymmetry_eps: f64,
    /// Number of blocks n in the partition.
    pub n_blocks: usize,
}

impl StructuredDecomposition {
    /// Builds the decomposition for a given S-member approximation R_S.
    pub fn new(r: &ComplexMatrix, r_s: ComplexMatrix, g: &SymmetryGroup) -> Result<Self> {
        matkit::ensure_valid(r)?;
        g.check_dims(r, g.n_y(), g.n_u(), "R")?;
        g.check_dims(&r_s, g.n_y(), g.n_u(), "R_S")?;
        let delta_s = r - &r_s;
        let (phi_s, r_s_pinv) = error_matrix_parts(r, &r_s, &delta_s)?;
        Ok(StructuredDecomposition {
            r_hat: g.to_symmetric_domain(r)?,
            r_s_hat: g.to_symmetric_domain(&r_s)?,
            delta_s_hat: g.to_symmetric_domain(&delta_s)?,
            phi_s_hat: g.to_symmetric_domain(&phi_s)?,
            asymmetry_eps: asymmetry(r, g, NormKind::Two)?,
            n_blocks: g.n,
            r: r.clone(),
            r_s,
            delta_s,
            phi_s,
            r_s_pinv,
        })
    }
}

/// Φ_S = Δ_S R_S^† = R R_S^† − I; both forms must agree.
pub fn error_matrix(d: &StructuredDecomposition) -> Result<ComplexMatrix> {
    Ok(error_matrix_parts(&d.r, &d.r_s, &d.delta_s)?.0)
}

fn error_matrix_parts(
    r: &ComplexMatrix,
    r_s: &ComplexMatrix,
    delta_s: &ComplexMatrix,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let ny = r_s.nrows();
    let rank = matkit::rank(r_s, None);
    if rank < ny {
        return Err(Error::Rank(format!(
            "R_S has rank {rank} < {ny} rows; R R_S^† − I is not the error matrix"
        )));
    }
    let p = matkit::pinv(r_s, None)?;
    let first = delta_s * &p;
    let second = r * &p - matkit::identity(ny);
    let gap = (&first - &second).norm() / first.norm().max(1.0);
    if gap > 1e-9 {
        return Err(Error::Rank(format!(
            "the two forms of the error matrix differ by {gap:e}"
        )));
    }
    Ok((first, p))
}

/// Orthogonal Frobenius projection of R onto S, computed by group averaging
/// and cross-checked in the symmetric domain.
pub fn frobenius_approximation(r: &ComplexMatrix, g: &SymmetryGroup) -> Result<StructuredDecomposition> {
    matkit::ensure_valid(r)?;
    g.check_dims(r, g.n_y(), g.n_u(), "R")?;
    let by_average = g.reynolds(r)?;
    let by_hat = g.from_symmetric_domain(&g.project_hat(&g.to_symmetric_domain(r)?)?)?;
    let gap = (&by_average - &by_hat).norm() / r.norm().max(1.0);
    if gap > 1e-10 {
        return Err(Error::Numeric(format!(
            "group average and symmetric-domain projection disagree by {gap:e}"
        )));
    }
    StructuredDecomposition::new(r, by_average, g)
}

/// Independent dimension count: rank of the Reynolds images of all n² unit
/// matrices (b = 1), times b_y·b_u.
pub fn commutant_dim_by_rank(g: &SymmetryGroup) -> usize {
    let n = g.n;
    let mut cols = RealMatrix::zeros(n * n, n * n);
    for p in 0..n {
        for q in 0..n {
            let mut e = RealMatrix::zeros(n, n);
            e[(p, q)] = 1.0;
            let avg = reynolds_real(&e, &g.elements);
            for (k, x) in avg.iter().enumerate() {
                cols[(k, p * n + q)] = *x;
            }
        }
    }
    let s = cols.svd(false, false).singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|&&x| x > 1e-10 * smax.max(1.0)).count() * g.b_y * g.b_u
}

/// Burnside count (1/|G|) Σ_g fix(g)² · b_y·b_u.
pub fn commutant_dim_by_characters(g: &SymmetryGroup) -> usize {
    let total: usize = g
        .elements
        .iter()
        .map(|p| {
            let f = p.iter().enumerate().filter(|(i, &pi)| *i == pi).count();
            f * f
        })
        .sum();
    total / g.order() * g.b_y * g.b_u
}

/// Orbits of index pairs (p, q) under the group, as a lookup table.
pub fn pair_orbits(g: &SymmetryGroup) -> HashMap<(usize, usize), usize> {
    let mut map = HashMap::new();
    let mut next = 0;
    for p in 0..g.n {
        for q in 0..g.n {
            if map.contains_key(&(p, q)) {
                continue;
            }
            for e in &g.elements {
                map.insert((e[p], e[q]), next);
            }
            next += 1;
        }
    }
    map
}

pub fn diag_vector(v: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&DVector::from_vec(v.to_vec()))
}
