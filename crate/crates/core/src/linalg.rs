//! Dense matrix kernels shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix` over either `f64` or `Complex<f64>`. The
//! [`Scalar`] trait ties the storage type to a [`Field`] tag so that estimator
//! code is written once and monomorphised per field.
//!
//! All decompositions return factors in a fixed, documented order and phase so
//! downstream results are bit-reproducible for a given input.

use nalgebra::{ComplexField, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type Mat<T> = DMatrix<T>;

/// Relative tolerance for Hermitian/PSD membership checks.
pub const HERMITIAN_TOL: f64 = 1e-8;
/// Relative tolerance accepted by [`eigh`] for the Hermitian precondition.
pub const EIG_HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Real => f.write_str("real"),
            Field::Complex => f.write_str("complex"),
        }
    }
}

impl std::str::FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(Error::InvalidArgument(format!("unknown field '{other}'"))),
        }
    }
}

/// Scalar types the estimators run over: `f64` (orthogonal group) and
/// `Complex<f64>` (unitary group).
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const FIELD: Field;

    fn from_parts(re: f64, im: f64) -> Self;

    fn re(self) -> f64;

    fn im(self) -> f64;

    /// Standard normal draw with unit total variance (`E|z|^2 = 1`).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    fn re(self) -> f64 {
        self
    }

    fn im(self) -> f64 {
        0.0
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for C64 {
    const FIELD: Field = Field::Complex;

    fn from_parts(re: f64, im: f64) -> Self {
        Complex::new(re, im)
    }

    fn re(self) -> f64 {
        self.re
    }

    fn im(self) -> f64 {
        self.im
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// Deterministic generator for stream `stream` of a run seeded with `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn frobenius<T: Scalar>(x: &Mat<T>) -> f64 {
    x.iter().map(|v| v.modulus_squared()).sum::<f64>().sqrt()
}

pub fn all_finite<T: Scalar>(x: &Mat<T>) -> bool {
    x.iter().all(|v| v.re().is_finite() && v.im().is_finite())
}

pub fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<T> {
    // column-major fill order is part of the determinism contract
    Mat::from_fn(rows, cols, |_, _| T::standard_normal(rng))
}

pub fn diag_real<T: Scalar>(values: &[f64]) -> Mat<T> {
    Mat::from_fn(values.len(), values.len(), |i, j| {
        if i == j {
            T::from_real(values[i])
        } else {
            T::zero()
        }
    })
}

/// `U diag(d) U*`.
pub fn conjugate_diag<T: Scalar>(u: &Mat<T>, d: &[f64]) -> Mat<T> {
    let mut scaled = u.clone();
    for (j, &dj) in d.iter().enumerate() {
        scaled.column_mut(j).scale_mut(dj);
    }
    &scaled * u.adjoint()
}

fn hermitian_defect<T: Scalar>(x: &Mat<T>) -> f64 {
    frobenius(&(x - x.adjoint()))
}

fn ensure_square<T: Scalar>(x: &Mat<T>, what: &str) -> Result<()> {
    if !x.is_square() || x.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "{what} must be square and non-empty, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if !all_finite(x) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Checks `x` is Hermitian within `tol * ||x||_F` and returns its Hermitian part.
pub fn hermitian_part<T: Scalar>(x: &Mat<T>, tol: f64) -> Result<Mat<T>> {
    ensure_square(x, "matrix")?;
    let defect = hermitian_defect(x);
    let scale = frobenius(x);
    if defect > tol * scale.max(f64::MIN_POSITIVE) && defect > 0.0 {
        return Err(Error::InvalidInput(format!(
            "matrix is not Hermitian: ||X - X*|| = {defect:.3e}, ||X|| = {scale:.3e}"
        )));
    }
    Ok((x + x.adjoint()).scale(0.5))
}

/// Rotates `v` so its largest-magnitude entry (first on ties) is real and
/// non-negative; returns the unit phase that was removed.
fn normalize_phase<T: Scalar>(mut v: nalgebra::DVectorViewMut<'_, T>) -> T {
    let mut best = 0;
    let mut best_mod = -1.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.modulus();
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    if best_mod <= 0.0 {
        return T::one();
    }
    let pivot = v[best];
    let phase = pivot.unscale(pivot.modulus());
    let inv = phase.conjugate();
    for x in v.iter_mut() {
        *x *= inv;
    }
    phase
}

#[derive(Clone, Debug)]
pub struct SvdFactors<T: Scalar> {
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: Mat<T>,
    /// Nonincreasing, nonnegative.
    pub s: Vec<f64>,
    /// `cols x k` with orthonormal columns.
    pub v: Mat<T>,
}

impl<T: Scalar> SvdFactors<T> {
    pub fn reconstruct(&self) -> Mat<T> {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.adjoint()
    }
}

/// Unsorted thin SVD, accepted only if it reconstructs `x` and both factors
/// are orthonormal.
fn raw_svd<T: Scalar>(x: &Mat<T>) -> Option<(Mat<T>, Vec<f64>, Mat<T>)> {
    let raw = x.clone().try_svd(true, true, 5.0 * f64::EPSILON, 0)?;
    let u = raw.u?;
    let v = raw.v_t?.adjoint();
    let s: Vec<f64> = raw.singular_values.iter().copied().collect();
    let k = s.len();
    let mut us = u.clone();
    for (j, &sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(sj);
    }
    let scale = frobenius(x).max(f64::MIN_POSITIVE);
    let ok = frobenius(&(us * v.adjoint() - x)) <= 1e-11 * scale
        && frobenius(&(u.adjoint() * &u - Mat::<T>::identity(k, k))) <= 1e-11
        && frobenius(&(v.adjoint() * &v - Mat::<T>::identity(k, k))) <= 1e-11;
    ok.then_some((u, s, v))
}

/// Thin SVD `X = U diag(S) V*`.
///
/// Singular values are sorted nonincreasing. Each left singular vector is
/// rotated so that its largest-magnitude entry is real and nonnegative, and
/// the matching right singular vector absorbs the same phase.
pub fn svd<T: Scalar>(x: &Mat<T>) -> Result<SvdFactors<T>> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("svd of an empty matrix".into()));
    }
    if !all_finite(x) {
        return Err(Error::InvalidInput("svd input has non-finite entries".into()));
    }
    // the adjoint route is a fallback for the rare inputs where the direct
    // bidiagonal iteration returns an inaccurate factorisation
    let (u_raw, values, v_raw) = raw_svd(x)
        .or_else(|| raw_svd(&x.adjoint()).map(|(u, s, v)| (v, s, u)))
        .ok_or(Error::NoConvergence("svd"))?;
    let k = values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let mut u = Mat::zeros(x.nrows(), k);
    let mut v = Mat::zeros(x.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u_raw.column(src));
        v.set_column(dst, &v_raw.column(src));
        s.push(values[src].max(0.0));
    }
    for j in 0..k {
        let phase = normalize_phase(u.column_mut(j));
        let inv = phase.conjugate();
        for e in v.column_mut(j).iter_mut() {
            *e *= inv;
        }
    }
    Ok(SvdFactors { u, s, v })
}

#[derive(Clone, Debug)]
pub struct EigFactors<T: Scalar> {
    /// Orthonormal eigenvectors, column `i` pairs with `lambda[i]`.
    pub u: Mat<T>,
    /// Nonincreasing.
    pub lambda: Vec<f64>,
}

impl<T: Scalar> EigFactors<T> {
    pub fn reconstruct(&self) -> Mat<T> {
        conjugate_diag(&self.u, &self.lambda)
    }
}

/// Spectral decomposition of a Hermitian matrix (Hermitian within `1e-10`
/// relative). Eigenvalues are sorted nonincreasing with a stable tie-break,
/// eigenvectors use the same phase convention as [`svd`].
pub fn eigh<T: Scalar>(x: &Mat<T>) -> Result<EigFactors<T>> {
    let h = hermitian_part(x, EIG_HERMITIAN_TOL)?;
    eigh_hermitian(h)
}

fn eigh_hermitian<T: Scalar>(h: Mat<T>) -> Result<EigFactors<T>> {
    let n = h.nrows();
    let raw = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or(Error::NoConvergence("symmetric eigendecomposition"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw.eigenvalues[b].total_cmp(&raw.eigenvalues[a]));
    let mut u = Mat::zeros(n, n);
    let mut lambda = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &raw.eigenvectors.column(src));
        lambda.push(raw.eigenvalues[src]);
    }
    for j in 0..n {
        normalize_phase(u.column_mut(j));
    }
    Ok(EigFactors { u, lambda })
}

/// Eigendecomposition of a matrix that must be Hermitian PSD within
/// [`HERMITIAN_TOL`]; negative eigenvalues inside the tolerance are clamped.
pub fn eigh_psd<T: Scalar>(c: &Mat<T>) -> Result<EigFactors<T>> {
    let h = hermitian_part(c, HERMITIAN_TOL)?;
    let scale = frobenius(&h);
    let mut eig = eigh_hermitian(h)?;
    if let Some(&min) = eig.lambda.last() {
        if min < -HERMITIAN_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not positive semidefinite: eigenvalue {min:.3e} with ||C|| = {scale:.3e}"
            )));
        }
    }
    for l in eig.lambda.iter_mut() {
        *l = l.max(0.0);
    }
    Ok(eig)
}

/// Returns `F` (`N x rank`) with `F F*` equal to the best rank-`rank` PSD
/// approximation of `C`, built from the top eigenpairs: `F = U_r diag(sqrt(lambda_r))`.
pub fn psd_factor<T: Scalar>(c: &Mat<T>, rank: usize) -> Result<Mat<T>> {
    if rank > c.nrows() {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} exceeds dimension {}",
            c.nrows()
        )));
    }
    let eig = eigh_psd(c)?;
    Ok(factor_from_eig(&eig, rank))
}

pub(crate) fn factor_from_eig<T: Scalar>(eig: &EigFactors<T>, rank: usize) -> Mat<T> {
    let mut f = eig.u.columns(0, rank).into_owned();
    for j in 0..rank {
        f.column_mut(j).scale_mut(eig.lambda[j].max(0.0).sqrt());
    }
    f
}

/// Hermitian PSD square root.
pub fn psd_sqrt<T: Scalar>(x: &Mat<T>) -> Result<Mat<T>> {
    let eig = eigh_psd(x)?;
    let roots: Vec<f64> = eig.lambda.iter().map(|l| l.sqrt()).collect();
    Ok(conjugate_diag(&eig.u, &roots))
}

/// First-order change of the square root of a positive diagonal matrix
/// `diag(x)` under a Hermitian perturbation `E`: entries `E_ij / (sqrt(x_i) + sqrt(x_j))`.
pub fn sqrt_perturbation_first_order<T: Scalar>(x: &[f64], e: &Mat<T>) -> Result<Mat<T>> {
    let n = x.len();
    if e.nrows() != n || e.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "perturbation is {}x{} but the diagonal has {n} entries",
            e.nrows(),
            e.ncols()
        )));
    }
    if let Some(i) = x.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Singular(format!(
            "diagonal entry {i} is {} (must be strictly positive)",
            x[i]
        )));
    }
    let roots: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
    Ok(Mat::from_fn(n, n, |i, j| e[(i, j)].unscale(roots[i] + roots[j])))
}

/// Haar-distributed `d x d` orthogonal (real) or unitary (complex) matrix.
///
/// QR of a Gaussian matrix followed by multiplying column `j` of `Q` by the
/// phase of `R_jj`, which makes the law exactly Haar.
pub fn haar<T: Scalar, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat<T> {
    assert!(d >= 1, "Haar sampling needs d >= 1");
    let z: Mat<T> = gaussian_matrix(d, d, rng);
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let m = rjj.modulus();
        if m > 0.0 {
            let phase = rjj.unscale(m);
            for e in q.column_mut(j).iter_mut() {
                *e *= phase;
            }
        }
    }
    q
}

/// Seeded convenience wrapper around [`haar`].
pub fn haar_seeded<T: Scalar>(d: usize, seed: u64) -> Result<Mat<T>> {
    if d == 0 {
        return Err(Error::InvalidArgument("Haar dimension must be >= 1".into()));
    }
    Ok(haar(d, &mut seeded_rng(seed, 0)))
}

/// Orthonormal basis (`n x k`) of the span of the top-`k` eigenvectors.
pub fn top_eigvectors<T: Scalar>(eig: &EigFactors<T>, k: usize) -> Mat<T> {
    eig.u.columns(0, k).into_owned()
}
