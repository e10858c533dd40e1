//! Dense complex linear-algebra primitives with explicit tolerance semantics.
//!
//! Everything downstream (channels, projectors, waterfilling) is built on the
//! small contract defined here: a validated Hermitian wrapper, a descending
//! Hermitian eigendecomposition with deterministic eigenvector phases, the
//! Moore-Penrose pseudoinverse, orthogonal-complement projectors and the
//! spectral radius. Matrices are `nalgebra` dynamic matrices over `Complex64`.
//!
//! Tolerances:
//! - `RANK_TOL` — singular values below `RANK_TOL * sigma_max` count as zero;
//! - `HERMITIAN_TOL` — max-entry asymmetry allowed by [`HermitianMatrix::new`],
//!   relative to the largest entry modulus.
//!
//! Repeated eigenvalues admit any orthonormal basis of the eigenspace, so
//! tests downstream compare projectors or subspaces, never raw eigenvectors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Relative rank tolerance: singular values below `RANK_TOL * sigma_max` are
/// treated as zero. Double-precision noise floor with headroom.
pub const RANK_TOL: f64 = 1e-10;

/// Relative Hermitian-symmetry tolerance (against the largest entry modulus).
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Shorthand complex constructor.
#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest entry modulus of a matrix (0 for empty matrices).
pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Checks that every entry is finite.
pub fn ensure_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::DomainError(format!("{what} contains non-finite entries")))
    }
}

/// A square complex matrix validated (or forced) to be Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMat);

impl HermitianMatrix {
    /// Validates that `m` is square and Hermitian within [`HERMITIAN_TOL`]
    /// relative to its largest entry modulus.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        ensure_finite(&m, "Hermitian matrix")?;
        let scale = max_abs_entry(&m);
        let asymmetry = max_abs_entry(&(&m - m.adjoint()));
        let tol = HERMITIAN_TOL * scale.max(1e-300);
        if scale > 0.0 && asymmetry > tol {
            return Err(Error::NotHermitian { asymmetry, tol });
        }
        Ok(Self(m))
    }

    /// Wraps `(m + m^H) / 2`. For products that are Hermitian analytically but
    /// carry rounding noise.
    pub fn symmetrized(m: CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrized needs a square matrix");
        let h = (&m + m.adjoint()).scale(0.5);
        Self(h)
    }

    pub fn identity(n: usize) -> Self {
        Self(CMat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMat::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }
}

impl std::ops::Deref for HermitianMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

/// Hermitian eigendecomposition, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Real eigenvalues, descending.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: CMat,
}

/// Eigendecomposition of a Hermitian matrix: `M = V diag(values) V^H`.
///
/// Eigenvalues are sorted descending (stable on ties). Each eigenvector is
/// rotated so its largest-modulus entry is real positive, which pins the
/// arbitrary phase and makes outputs reproducible for regression tests.
pub fn hermitian_eig(m: &HermitianMatrix) -> HermitianEig {
    let n = m.dim();
    if n == 0 {
        return HermitianEig { values: Vec::new(), vectors: CMat::zeros(0, 0) };
    }
    let se = m.as_matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        let col = se.eigenvectors.column(k);
        let mut pivot = 0usize;
        let mut best = 0.0;
        for i in 0..n {
            let a = col[i].norm();
            if a > best {
                best = a;
                pivot = i;
            }
        }
        let rotation = if best > 0.0 { (col[pivot] / best).conj() } else { c(1.0, 0.0) };
        for i in 0..n {
            vectors[(i, j)] = col[i] * rotation;
        }
    }
    HermitianEig { values, vectors }
}

/// Thin singular value decomposition `M = U diag(sigma) V^H`, singular
/// values sorted descending.
///
/// Computed by one-sided Jacobi rotations (high relative accuracy, fully
/// deterministic). `u` is `m x k` and `v` is `n x k` with `k = min(m, n)`;
/// columns belonging to zero singular values are zero in `u`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v: CMat,
}

/// One-sided Jacobi SVD. Orthogonalizes the columns of `M` by two-sided
/// 2x2 Hermitian eigensolves on the column Gram, accumulating the rotations
/// into `V`; on convergence the column norms are the singular values.
pub fn complex_svd(m: &CMat) -> Svd {
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows == 0 || cols == 0 {
        return Svd { u: CMat::zeros(rows, 0), singular_values: Vec::new(), v: CMat::zeros(cols, 0) };
    }
    if rows < cols {
        let t = complex_svd(&m.adjoint());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    let mut a = m.clone();
    let mut v = CMat::identity(cols, cols);
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dotc(&a.column(j));
                if alpha == 0.0 || beta == 0.0 || gamma.norm() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Unitary diagonalizing the 2x2 Hermitian pair Gram
                // [[alpha, gamma], [conj(gamma), beta]]; the larger
                // eigenvalue lands on column i. The eigenvector component
                // t = lambda_1 - alpha is rationalized to avoid cancellation
                // when the off-diagonal is small.
                let diff = alpha - beta;
                let root = (diff * diff + 4.0 * gamma.norm_sqr()).sqrt();
                let t = if diff >= 0.0 {
                    2.0 * gamma.norm_sqr() / (diff + root)
                } else {
                    0.5 * (root - diff)
                };
                let x = gamma;
                let y = c(t, 0.0);
                let scale = (x.norm_sqr() + y.norm_sqr()).sqrt();
                let (x, y) = (x / scale, y / scale);
                for row in 0..rows {
                    let p = a[(row, i)];
                    let q = a[(row, j)];
                    a[(row, i)] = p * x + q * y;
                    a[(row, j)] = q * x.conj() - p * y.conj();
                }
                for row in 0..cols {
                    let p = v[(row, i)];
                    let q = v[(row, j)];
                    v[(row, i)] = p * x + q * y;
                    v[(row, j)] = q * x.conj() - p * y.conj();
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|k| a.column(k).norm()).collect();
    order.sort_by(|&p, &q| norms[q].partial_cmp(&norms[p]).expect("finite norms"));
    let mut u = CMat::zeros(rows, cols);
    let mut vs = CMat::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > 0.0 {
            let inv = 1.0 / s;
            for row in 0..rows {
                u[(row, dst)] = a[(row, src)] * inv;
            }
        }
        for row in 0..cols {
            vs[(row, dst)] = v[(row, src)];
        }
    }
    Svd { u, singular_values: sigma, v: vs }
}

/// Singular values of `M`, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    complex_svd(m).singular_values
}

/// Moore-Penrose pseudoinverse with singular values below
/// `tol_rank * sigma_max` treated as zero. The zero matrix maps to the zero
/// matrix (transposed shape).
pub fn pseudoinverse(g: &CMat, tol_rank: f64) -> CMat {
    if g.is_empty() {
        return CMat::zeros(g.ncols(), g.nrows());
    }
    let svd = complex_svd(g);
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let mut acc = CMat::zeros(g.ncols(), g.nrows());
    if smax <= 0.0 {
        return acc;
    }
    let cutoff = tol_rank * smax;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            acc += (svd.v.column(k) * svd.u.column(k).adjoint()).map(|z| z / c(s, 0.0));
        }
    }
    acc
}

/// Orthogonal projector onto the orthogonal complement of the column space of
/// `U`: `P = I - U (U^H U)^{-1} U^H`, computed from an SVD basis.
///
/// `U` must have full column rank (smallest singular value above
/// `RANK_TOL * sigma_max`); an empty `U` yields the identity and a square
/// full-rank `U` yields the zero projector.
pub fn orth_complement_projector(u: &CMat) -> Result<HermitianMatrix> {
    let n = u.nrows();
    if u.ncols() == 0 {
        return Ok(HermitianMatrix::identity(n));
    }
    if u.ncols() > n {
        return Err(Error::RankDeficient(format!(
            "{}x{} matrix cannot have full column rank",
            n,
            u.ncols()
        )));
    }
    ensure_finite(u, "projector input")?;
    let svd = complex_svd(u);
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let smin = svd.singular_values.last().copied().unwrap_or(0.0);
    if smax <= 0.0 || smin <= RANK_TOL * smax {
        return Err(Error::RankDeficient(format!(
            "column space collapsed: sigma_min/sigma_max = {:.3e}",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let basis = svd.u;
    let p = CMat::identity(n, n) - &basis * basis.adjoint();
    Ok(HermitianMatrix::symmetrized(p))
}

/// Orthonormal basis (as columns) of the column space of `m`, using the
/// relative singular-value cutoff `tol`.
pub fn range_basis(m: &CMat, tol: f64) -> CMat {
    if m.is_empty() {
        return CMat::zeros(m.nrows(), 0);
    }
    let svd = complex_svd(m);
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let rank = svd.singular_values.iter().filter(|&&s| s > tol * smax).count();
    svd.u.columns(0, rank).into_owned()
}

/// Orthonormal basis (as columns) of the orthogonal complement of the column
/// space of `m`. Empty input yields the full identity basis.
pub fn complement_basis(m: &CMat) -> CMat {
    let n = m.nrows();
    let basis = range_basis(m, RANK_TOL);
    let rank = basis.ncols();
    if rank == 0 {
        return CMat::identity(n, n);
    }
    if rank == n {
        return CMat::zeros(n, 0);
    }
    let p = HermitianMatrix::symmetrized(CMat::identity(n, n) - &basis * basis.adjoint());
    let eig = hermitian_eig(&p);
    // Eigenvalues of a projector are 1 (complement) then 0; descending order
    // puts the complement basis first.
    eig.vectors.columns(0, n - rank).into_owned()
}

/// Largest eigenvalue modulus of a square matrix.
///
/// Hermitian inputs go through the symmetric eigensolver; general matrices
/// through a complex Schur decomposition.
pub fn spectral_radius(m: &CMat) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "spectral_radius needs a square matrix");
    if m.is_empty() || max_abs_entry(m) == 0.0 {
        return 0.0;
    }
    let scale = max_abs_entry(m);
    if max_abs_entry(&(m - m.adjoint())) <= HERMITIAN_TOL * scale {
        let eig = hermitian_eig(&HermitianMatrix::symmetrized(m.clone()));
        return eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    }
    let (_, t) = m
        .clone()
        .try_schur(f64::EPSILON, 0)
        .expect("Schur iteration failed to converge")
        .unpack();
    (0..t.nrows()).map(|i| t[(i, i)].norm()).fold(0.0, f64::max)
}

/// Solves `A X = B` for Hermitian positive definite `A` via Cholesky.
pub fn solve_hpd(a: &HermitianMatrix, b: &CMat) -> Result<CMat> {
    let chol = a
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// `log2 det(A)` for Hermitian positive definite `A` via Cholesky.
pub fn log2_det_hpd(a: &HermitianMatrix) -> Result<f64> {
    let chol = a
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("matrix is not positive definite".into()))?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[(i, i)].re.ln();
    }
    Ok(2.0 * acc / std::f64::consts::LN_2)
}
