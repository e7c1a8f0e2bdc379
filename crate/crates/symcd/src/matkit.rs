//! Dense complex linear algebra used throughout the crate.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
/// Row/column counts are carried by the nalgebra matrix itself; use
/// [`from_parts`] or [`ensure_valid`] when ingesting external data.
pub type ComplexMatrix = DMatrix<C64>;
pub type RealMatrix = DMatrix<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const J: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    /// Singular value cutoff for pseudoinverses; `None` picks eps·max(m,n)·σ_max.
    #[serde(default)]
    pub rank_tol: Option<f64>,
    #[serde(default = "default_psd_tol")]
    pub psd_tol: f64,
    #[serde(default = "default_hermitian_tol")]
    pub hermitian_tol: f64,
}

fn default_psd_tol() -> f64 {
    1e-8
}

fn default_hermitian_tol() -> f64 {
    1e-10
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            rank_tol: None,
            psd_tol: default_psd_tol(),
            hermitian_tol: default_hermitian_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdVerdict {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Two,
    Frobenius,
    One,
    Inf,
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn ensure_valid(a: &ComplexMatrix) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "empty matrix {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Builds a matrix from row-major real and imaginary parts.
pub fn from_parts(rows: usize, cols: usize, re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<ComplexMatrix> {
    let shape_ok = |m: &[Vec<f64>]| m.len() == rows && m.iter().all(|r| r.len() == cols);
    if !shape_ok(re) || !(im.is_empty() || shape_ok(im)) {
        return Err(Error::Dimension(format!(
            "declared {rows}x{cols} does not match entry arrays"
        )));
    }
    let a = ComplexMatrix::from_fn(rows, cols, |i, j| {
        let imv = if im.is_empty() { 0.0 } else { im[i][j] };
        c(re[i][j], imv)
    });
    ensure_valid(&a)?;
    Ok(a)
}

pub fn from_real(a: &RealMatrix) -> ComplexMatrix {
    a.map(|x| c(x, 0.0))
}

pub fn real_part(a: &ComplexMatrix) -> RealMatrix {
    a.map(|z| z.re)
}

pub fn max_abs_imag(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.im.abs()))
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn hermitian_part(h: &ComplexMatrix) -> ComplexMatrix {
    (h + h.adjoint()) * c(0.5, 0.0)
}

/// ‖H − H*‖_max ≤ tol · max(1, ‖H‖_max).
pub fn is_hermitian(h: &ComplexMatrix, tol: f64) -> bool {
    if !h.is_square() {
        return false;
    }
    let scale = max_abs(h).max(1.0);
    let n = h.nrows();
    for i in 0..n {
        for j in i..n {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Copies into a faer matrix; the decompositions below run on faer.
pub fn to_faer(a: &ComplexMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn from_faer(a: faer::MatRef<'_, C64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Product a·b; large operands go through faer, which is several times
/// faster than nalgebra for complex matrices.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    if a.nrows() * a.ncols() * b.ncols() < 32 * 32 * 32 {
        return a * b;
    }
    from_faer((to_faer(a) * to_faer(b)).as_ref())
}

/// Singular values, largest first.
pub fn singular_values(a: &ComplexMatrix) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    let s = to_faer(a)
        .singular_values()
        .expect("SVD did not converge");
    DVector::from_vec(s)
}

pub fn pinv(a: &ComplexMatrix, rank_tol: Option<f64>) -> Result<ComplexMatrix> {
    let (m, n) = a.shape();
    if a.is_empty() {
        return Ok(ComplexMatrix::zeros(n, m));
    }
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|_| Error::Numeric("SVD did not converge".into()))?;
    let sv: Vec<f64> = (0..m.min(n)).map(|k| svd.S()[k].re).collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = rank_tol.unwrap_or(f64::EPSILON * m.max(n) as f64 * smax);
    if tol < 0.0 {
        return Err(Error::Precondition("rank_tol must be non-negative".into()));
    }
    let (u, v) = (svd.U(), svd.V());
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > tol && sv[k] > 0.0).collect();
    // V_r · diag(1/s) · U_rᴴ
    let vs = faer::Mat::<C64>::from_fn(n, keep.len(), |i, k| v[(i, keep[k])] / sv[keep[k]]);
    let ur = faer::Mat::<C64>::from_fn(m, keep.len(), |i, k| u[(i, keep[k])]);
    Ok(from_faer((&vs * ur.adjoint()).as_ref()))
}

pub fn rank(a: &ComplexMatrix, rank_tol: Option<f64>) -> usize {
    let s = singular_values(a);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let tol = rank_tol.unwrap_or(f64::EPSILON * a.nrows().max(a.ncols()) as f64 * smax);
    s.iter().filter(|&&x| x > tol && x > 0.0).count()
}

/// Eigenvalues of a general square matrix; no diagonalizability assumed.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    match a.nrows() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![a[(0, 0)]]),
        _ => to_faer(a)
            .eigenvalues()
            .map_err(|_| Error::Numeric("eigenvalue iteration did not converge".into())),
    }
}

pub fn spectral_radius(a: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().fold(0.0, |m, z| m.max(z.norm())))
}

pub fn norm(a: &ComplexMatrix, kind: NormKind) -> f64 {
    match kind {
        NormKind::Two => singular_values(a).iter().cloned().fold(0.0, f64::max),
        NormKind::Frobenius => a.norm(),
        NormKind::One => (0..a.ncols())
            .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Inf => (0..a.nrows())
            .map(|i| a.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max),
    }
}

pub fn cond(a: &ComplexMatrix) -> f64 {
    let s = singular_values(a);
    let smin = s[s.len() - 1];
    if smin == 0.0 {
        f64::INFINITY
    } else {
        s[0] / smin
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &ComplexMatrix) -> Vec<f64> {
    if h.is_empty() {
        return Vec::new();
    }
    to_faer(&hermitian_part(h))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("Hermitian eigensolver did not converge")
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigh(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let e = to_faer(&hermitian_part(h))
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::Numeric("Hermitian eigensolver did not converge".into()))?;
    let n = h.nrows();
    let vals = (0..n).map(|k| e.S()[k].re).collect();
    Ok((vals, from_faer(e.U())))
}

pub fn min_hermitian_eigenvalue(h: &ComplexMatrix) -> f64 {
    hermitian_eigenvalues(h)[0]
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn realify_hermitian(h: &ComplexMatrix, tol: f64) -> Result<RealMatrix> {
    if !is_hermitian(h, tol) {
        return Err(Error::NotHermitian(format!(
            "{}x{} input exceeds tolerance {tol:e}",
            h.nrows(),
            h.ncols()
        )));
    }
    let n = h.nrows();
    let mut out = RealMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    Ok(out)
}

pub fn is_psd(h: &ComplexMatrix, tol: f64) -> PsdVerdict {
    let min_eigenvalue = min_hermitian_eigenvalue(h);
    PsdVerdict {
        is_psd: min_eigenvalue >= -tol,
        min_eigenvalue,
        tolerance: tol,
    }
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Vec<Vec<f64>>,
}

pub fn matrix_to_json(a: &ComplexMatrix) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| a.row(i).iter().map(|z| z.re).collect()).collect();
    let ims: Vec<Vec<f64>> = (0..a.nrows()).map(|i| a.row(i).iter().map(|z| z.im).collect()).collect();
    serde_json::to_value(MatrixFile {
        rows: a.nrows(),
        cols: a.ncols(),
        re: rows,
        im: ims,
    })
    .expect("matrix serializes")
}

pub fn parse_matrix_json(text: &str) -> Result<ComplexMatrix> {
    let f: MatrixFile = serde_json::from_str(text).map_err(|e| {
        Error::Parse(e.to_string())
    })?;
    from_parts(f.rows, f.cols, &f.re, &f.im)
}

/// Real CSV. The first line is either `<rows>,<cols>` or a non-numeric
/// header such as `rows,cols`, in which case the shape is inferred.
pub fn parse_matrix_csv(text: &str) -> Result<ComplexMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let dims: Vec<&str> = head.split(',').map(str::trim).collect();
    let declared = match dims.as_slice() {
        [r, c] => match (r.parse::<usize>(), c.parse::<usize>()) {
            (Ok(r), Ok(c)) => Some((r, c)),
            _ => None,
        },
        _ => None,
    };
    let mut rows = Vec::new();
    for (ln, line) in lines {
        let row: std::result::Result<Vec<f64>, _> = line
            .split(',')
            .enumerate()
            .map(|(col, s)| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {} column {}: bad number '{}'", ln + 1, col + 1, s.trim()))
                })
            })
            .collect();
        rows.push(row?);
    }
    let (r, c) = match declared {
        Some(d) => d,
        None => (rows.len(), rows.first().map_or(0, |r| r.len())),
    };
    from_parts(r, c, &rows, &[])
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = std::fs::read_to_string(path)?;
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        parse_matrix_csv(&text)
    } else {
        parse_matrix_json(&text)
    }
}

pub fn write_matrix(path: &Path, a: &ComplexMatrix) -> Result<()> {
    let text = serde_json::to_string_pretty(&matrix_to_json(a)).expect("json");
    std::fs::write(path, text)?;
    Ok(())
}
