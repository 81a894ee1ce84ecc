//! Dense complex matrix kernel.
//!
//! Everything downstream works on [`CMatrix`], a column-major `nalgebra`
//! matrix of `Complex64`. Covariance-like quantities are wrapped in
//! [`HermitianMatrix`], which checks the Hermitian property once at
//! construction and stores the exactly-symmetrized matrix.

use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Relative tolerance for the Hermitian check and PSD clamping.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// A square complex matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates `m` and stores its Hermitian part.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                context: "hermitian matrix",
            });
        }
        let asymmetry = hermitian_asymmetry(&m);
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asymmetry > HERMITIAN_TOL * (1.0 + scale) {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(Self::symmetrize(m))
    }

    /// Takes the Hermitian part `(m + mᴴ)/2` without validation.
    ///
    /// Used for products that are Hermitian in exact arithmetic.
    pub fn symmetrize(m: CMatrix) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let adj = m.adjoint();
        HermitianMatrix((m + adj) * C64::new(0.5, 0.0))
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(n, n))
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        HermitianMatrix(CMatrix::identity(n, n) * C64::new(scale, 0.0))
    }

    /// Builds a real symmetric matrix from a closure over `(i, j)`, `i <= j`.
    pub fn from_real_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        HermitianMatrix(CMatrix::from_fn(n, n, |i, j| {
            C64::new(if i <= j { f(i, j) } else { f(j, i) }, 0.0)
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    /// Real multiple `s·A`.
    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix(&self.0 * C64::new(s, 0.0))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        HermitianMatrix(&self.0 + &other.0)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    /// Real trace.
    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// Inverse of a positive definite matrix.
    pub fn inverse(&self, context: &'static str) -> Result<HermitianMatrix> {
        hpd_inverse(&self.0, context).map(HermitianMatrix::symmetrize)
    }
}

impl Deref for HermitianMatrix {
    type Target = CMatrix;

    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

impl AsRef<CMatrix> for HermitianMatrix {
    fn as_ref(&self) -> &CMatrix {
        &self.0
    }
}

/// max |Aᵢⱼ − conj(Aⱼᵢ)|
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Spectral norm of a Hermitian matrix.
fn spectral_radius(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Hermitian square root `S` with `S·Sᴴ = A` for a PSD matrix `A`.
///
/// Eigenvalues in `[-1e-10·‖A‖, 0)` are clamped to zero; anything more
/// negative is rejected.
pub fn hermitian_sqrt(a: &HermitianMatrix) -> Result<CMatrix> {
    let eig = SymmetricEigen::new(a.as_matrix().clone());
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let floor = -HERMITIAN_TOL * spectral_radius(&values);
    if let Some(&bad) = values.iter().find(|&&v| v < floor) {
        return Err(Error::NotPositiveSemidefinite { eigenvalue: bad });
    }
    let n = a.dim();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let root = C64::new(v.max(0.0).sqrt(), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= root;
        }
    }
    let s = &scaled * eig.eigenvectors.adjoint();
    Ok(HermitianMatrix::symmetrize(s).into_inner())
}

/// Kronecker product; block `(i, j)` of the result is `a[(i, j)]·b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Stacks the columns of `a` into a single column.
pub fn vec(a: &CMatrix) -> CMatrix {
    // nalgebra storage is column-major already.
    CMatrix::from_column_slice(a.nrows() * a.ncols(), 1, a.as_slice())
}

/// Inverse of `vec` for a column of length `rows·cols`.
pub fn unvec(v: &CMatrix, rows: usize, cols: usize) -> CMatrix {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    CMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// One circularly-symmetric complex Gaussian draw with unit total variance.
pub fn cgaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `m×n` matrix of i.i.d. CN(0, 1) entries, real and imaginary parts
/// each with variance 1/2. Entries are drawn in column-major order.
pub fn sample_cgaussian<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> CMatrix {
    let mut out = CMatrix::zeros(m, n);
    for z in out.iter_mut() {
        *z = cgaussian(rng);
    }
    out
}

/// Complex trace.
pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// Trace of a product that is real in exact arithmetic. Fails if the
/// imaginary residue exceeds `1e-10·(1 + |tr|)`.
pub fn real_trace(a: &CMatrix, context: &'static str) -> Result<f64> {
    let t = trace(a);
    if t.im.abs() > HERMITIAN_TOL * (1.0 + t.norm()) {
        return Err(Error::ComplexResidue {
            context,
            residue: t.im.abs(),
        });
    }
    Ok(t.re)
}

/// `Tr(A·B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius norm.
pub fn fro(a: &CMatrix) -> f64 {
    a.norm()
}

/// `s` as a complex scalar.
pub fn real(s: f64) -> C64 {
    C64::new(s, 0.0)
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
///
/// A Cholesky pivot ratio below `n·ε` is reported as singular.
pub fn hpd_inverse(a: &CMatrix, context: &'static str) -> Result<CMatrix> {
    let chol = hpd_cholesky(a, context)?;
    Ok(chol.inverse())
}

/// Solves `A·X = B` for Hermitian positive definite `A`.
pub fn hpd_solve(a: &CMatrix, b: &CMatrix, context: &'static str) -> Result<CMatrix> {
    let chol = hpd_cholesky(a, context)?;
    Ok(chol.solve(b))
}

fn hpd_cholesky(a: &CMatrix, context: &'static str) -> Result<Cholesky<C64, nalgebra::Dyn>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let sym = HermitianMatrix::symmetrize(a.clone()).into_inner();
    let chol = Cholesky::new(sym).ok_or(Error::Singular { context })?;
    let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().map(|z| z.re).collect();
    let max = pivots.iter().copied().fold(0.0, f64::max);
    let min = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    let n = pivots.len().max(1) as f64;
    if !(min > 0.0) || min * min <= n * f64::EPSILON * max * max {
        return Err(Error::Singular { context });
    }
    Ok(chol)
}

/// General inverse via LU.
pub fn inverse(a: &CMatrix, context: &'static str) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    a.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or(Error::Singular { context })
}

/// The first `cols` columns of the `rows×rows` identity (or the leading
/// block of a wide identity), scaled by `s`.
pub fn identity_shaped(rows: usize, cols: usize, s: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| if i == j { real(s) } else { real(0.0) })
}
