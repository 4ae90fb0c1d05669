//! Estimators for `A` given a homolog `B ≈ A` and the Gram matrix `C = A A*`.
//!
//! * least squares (orthogonal/unitary Procrustes on a PSD factor of `C`),
//! * twicing `2 Â_LS - B`,
//! * anisotropic twicing `B + U W U* (Â_LS - B)` with `W = (I - T)^{-1}`,
//! * the interpolating family `B + U (I + T + ... + T^t) U* (Â_LS - B)`.
//!
//! `T` is diagonal in the eigenbasis `U` of `C`. With `λ` the eigenvalues of
//! `C` (the squared singular values of `A`):
//!
//! ```text
//! real:    T_ii = (1/D) [ -1/2 + Σ_j λ_i / (λ_i + λ_j) ]
//! complex: T_ii = (1/D)          Σ_j λ_i / (λ_i + λ_j)
//! ```
//!
//! The ratio is of eigenvalues of `C`, not of their squares; the squared form
//! fails the Monte Carlo unbiasedness check in `checks::theorem_one`.
//!
//! Rectangular problems are reduced to square ones: for `N > D` onto the
//! top-`D` eigenspace of `C`, for `N < D` onto the row space of `B` (the latter
//! carries no unbiasedness guarantee).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    conjugate_diag, eigh_psd, factor_from_eig, frobenius, hermitian_part, svd, EigFactors, Field,
    Mat, Scalar, HERMITIAN_TOL,
};

/// Relative size below which an alignment or homolog singular value counts as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct EstimationProblem<T: Scalar> {
    b: Mat<T>,
    c: Mat<T>,
}

impl<T: Scalar> EstimationProblem<T> {
    /// `b` is the `N x D` homolog, `c` the `N x N` Hermitian PSD Gram matrix.
    pub fn new(b: Mat<T>, c: Mat<T>) -> Result<Self> {
        if b.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::InvalidInput("homolog must be non-empty".into()));
        }
        if c.nrows() != b.nrows() || c.ncols() != b.nrows() {
            return Err(Error::InvalidInput(format!(
                "C is {}x{} but B has {} rows",
                c.nrows(),
                c.ncols(),
                b.nrows()
            )));
        }
        if !crate::linalg::all_finite(&b) {
            return Err(Error::InvalidInput("homolog has non-finite entries".into()));
        }
        let c = hermitian_part(&c, HERMITIAN_TOL)?;
        eigh_psd(&c)?;
        Ok(Self { b, c })
    }

    pub fn b(&self) -> &Mat<T> {
        &self.b
    }

    pub fn c(&self) -> &Mat<T> {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn d(&self) -> usize {
        self.b.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "t", rename_all = "lowercase")]
pub enum Method {
    Ls,
    Twicing,
    At,
    Family(u32),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ls => f.write_str("ls"),
            Method::Twicing => f.write_str("twicing"),
            Method::At => f.write_str("at"),
            Method::Family(t) => write!(f, "family{t}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `ls`, `twicing` (or `tw`), `at`, and `family<t>` / `family:<t>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" => Ok(Method::Ls),
            "twicing" | "tw" => Ok(Method::Twicing),
            "at" => Ok(Method::At),
            other => {
                let t = other
                    .strip_prefix("family")
                    .map(|r| r.trim_start_matches(':'))
                    .and_then(|r| r.parse::<u32>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{other}'")))?;
                Ok(Method::Family(t))
            }
        }
    }
}

/// `T` and `W = (I - T)^{-1}` in the eigenbasis `U` of a square `C`.
#[derive(Clone, Debug)]
pub struct CorrectionSpectrum<T: Scalar> {
    pub u: Mat<T>,
    pub lambda: Vec<f64>,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
}

impl<T: Scalar> CorrectionSpectrum<T> {
    /// Diagonal of `I + T + ... + T^t`.
    pub fn partial_sum(&self, t: u32) -> Vec<f64> {
        self.t
            .iter()
            .map(|&x| (0..=t).fold((0.0, 1.0), |(acc, p), _| (acc + p, p * x)).0)
            .collect()
    }

    pub fn gains(&self, method: Method) -> Option<Vec<f64>> {
        match method {
            Method::At => Some(self.w.clone()),
            Method::Family(t) => Some(self.partial_sum(t)),
            Method::Ls | Method::Twicing => None,
        }
    }

    /// `U diag(gains) U* x`.
    pub fn apply(&self, gains: &[f64], x: &Mat<T>) -> Mat<T> {
        conjugate_diag(&self.u, gains) * x
    }

    /// `U T U* x`, the first-order bias of least squares for `x = A - B`.
    pub fn bias_operator(&self, x: &Mat<T>) -> Mat<T> {
        self.apply(&self.t, x)
    }

    pub fn max_t(&self) -> f64 {
        self.t.iter().copied().fold(0.0, f64::max)
    }
}

/// `λ_i / (λ_i + λ_j)` with `0/0 := 1/2`.
fn eigen_ratio(li: f64, lj: f64) -> f64 {
    let s = li + lj;
    if s > 0.0 {
        li / s
    } else {
        0.5
    }
}

/// Diagonal of `T` for eigenvalues `lambda` of `C`.
pub fn t_diagonal(lambda: &[f64], field: Field) -> Vec<f64> {
    let d = lambda.len() as f64;
    let offset = match field {
        Field::Real => -0.5,
        Field::Complex => 0.0,
    };
    lambda
        .iter()
        .map(|&li| (offset + lambda.iter().map(|&lj| eigen_ratio(li, lj)).sum::<f64>()) / d)
        .collect()
}

fn spectrum_from_eig<T: Scalar>(eig: &EigFactors<T>) -> CorrectionSpectrum<T> {
    let t = t_diagonal(&eig.lambda, T::FIELD);
    let w = t.iter().map(|x| 1.0 / (1.0 - x)).collect();
    CorrectionSpectrum {
        u: eig.u.clone(),
        lambda: eig.lambda.clone(),
        t,
        w,
    }
}

/// Correction spectrum of a square Hermitian PSD `C`; the field is that of `T`.
pub fn correction_spectrum<T: Scalar>(c: &Mat<T>) -> Result<CorrectionSpectrum<T>> {
    Ok(spectrum_from_eig(&eigh_psd(c)?))
}

#[derive(Clone, Debug)]
pub struct LsSolution<T: Scalar> {
    pub estimate: Mat<T>,
    /// Singular values of `B* F`.
    pub alignment: Vec<f64>,
}

impl<T: Scalar> LsSolution<T> {
    /// A zero singular value in `B* F` makes the minimiser non-unique.
    pub fn degenerate(&self) -> bool {
        let top = self.alignment.first().copied().unwrap_or(0.0);
        self.alignment.iter().any(|&s| s <= RANK_TOL * top) || top == 0.0
    }
}

/// Everything that depends on `C` alone, reusable across many homologs.
#[derive(Clone, Debug)]
pub struct Estimator<T: Scalar> {
    c: Mat<T>,
    d: usize,
    eig: EigFactors<T>,
    factor: Mat<T>,
    spectrum: Option<CorrectionSpectrum<T>>,
}

impl<T: Scalar> Estimator<T> {
    /// `c` is `N x N`; `d` the column count of `A` (and of every homolog).
    pub fn new(c: &Mat<T>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("D must be >= 1".into()));
        }
        let c = hermitian_part(c, HERMITIAN_TOL)?;
        let eig = eigh_psd(&c)?;
        let n = c.nrows();
        let factor = factor_from_eig(&eig, n.min(d));
        let spectrum = (n == d).then(|| spectrum_from_eig(&eig));
        Ok(Self {
            c,
            d,
            eig,
            factor,
            spectrum,
        })
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// PSD factor `F` (`N x min(N, D)`) of the best rank-`D` part of `C`.
    pub fn factor(&self) -> &Mat<T> {
        &self.factor
    }

    /// Present only for square problems.
    pub fn spectrum(&self) -> Option<&CorrectionSpectrum<T>> {
        self.spectrum.as_ref()
    }

    fn check_homolog(&self, b: &Mat<T>) -> Result<()> {
        if b.nrows() != self.n() || b.ncols() != self.d {
            return Err(Error::InvalidInput(format!(
                "homolog is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                self.n(),
                self.d
            )));
        }
        Ok(())
    }

    /// `Â_LS = F V0 U0*` where `B* F = U0 Σ0 V0*`.
    pub fn least_squares(&self, b: &Mat<T>) -> Result<LsSolution<T>> {
        self.check_homolog(b)?;
        let align = svd(&(b.adjoint() * &self.factor))?;
        let estimate = &self.factor * &align.v * align.u.adjoint();
        Ok(LsSolution {
            estimate,
            alignment: align.s,
        })
    }

    pub fn estimate(&self, b: &Mat<T>, method: Method) -> Result<Mat<T>> {
        let ls = self.checked_least_squares(b)?;
        self.finish(b, ls, method)
    }

    /// Several methods on one homolog, sharing the least-squares solve.
    pub fn estimate_many(&self, b: &Mat<T>, methods: &[Method]) -> Result<Vec<Mat<T>>> {
        let ls = self.checked_least_squares(b)?;
        methods.iter().map(|&m| self.finish(b, ls.clone(), m)).collect()
    }

    fn checked_least_squares(&self, b: &Mat<T>) -> Result<Mat<T>> {
        let ls = self.least_squares(b)?;
        if ls.degenerate() {
            tracing::warn!(
                singular_values = ?ls.alignment,
                "B*F has a zero singular value; least-squares alignment is not unique"
            );
        }
        Ok(ls.estimate)
    }

    fn finish(&self, b: &Mat<T>, ls: Mat<T>, method: Method) -> Result<Mat<T>> {
        match method {
            // empty correction
            Method::Ls | Method::Family(0) => Ok(ls),
            Method::Twicing => Ok(ls.scale(2.0) - b),
            Method::At | Method::Family(_) => match self.n().cmp(&self.d) {
                Ordering::Equal => {
                    let spectrum = self.spectrum.as_ref().expect("square problem has a spectrum");
                    let gains = spectrum.gains(method).expect("corrected method");
                    Ok(b + spectrum.apply(&gains, &(ls - b)))
                }
                Ordering::Greater => self.corrected_tall(b, method),
                Ordering::Less => self.corrected_wide(b, method),
            },
        }
    }

    /// `N > D`: solve on `(P* B, P* C P)` with `P` the top-`D` eigenvectors of
    /// `C`, then lift with `P`.
    fn corrected_tall(&self, b: &Mat<T>, method: Method) -> Result<Mat<T>> {
        let p = self.column_space();
        let b0 = p.adjoint() * b;
        let c0 = p.adjoint() * &self.c * &p;
        let inner = Estimator::new(&c0, self.d)?;
        Ok(&p * inner.estimate(&b0, method)?)
    }

    /// `N < D`: solve on `(B P, C)` with `P` an orthonormal basis (`D x N`) of
    /// the row space of `B`, then map back with `P*`.
    fn corrected_wide(&self, b: &Mat<T>, method: Method) -> Result<Mat<T>> {
        let p = row_space(b)?;
        let b0 = b * &p;
        let inner = Estimator::new(&self.c, self.n())?;
        Ok(inner.estimate(&b0, method)? * p.adjoint())
    }

    /// `N x D` orthonormal basis of the top-`D` eigenspace of `C` (`N >= D`).
    pub fn column_space(&self) -> Mat<T> {
        self.eig.u.columns(0, self.d.min(self.n())).into_owned()
    }
}

/// `D x N` orthonormal basis of the row space of a wide `N x D` matrix `b`.
pub fn row_space<T: Scalar>(b: &Mat<T>) -> Result<Mat<T>> {
    let f = svd(b)?;
    let top = f.s.first().copied().unwrap_or(0.0);
    let rank = f.s.iter().filter(|&&s| s > RANK_TOL * top && top > 0.0).count();
    if rank < b.nrows() {
        return Err(Error::RankDeficientHomolog {
            rank,
            needed: b.nrows(),
        });
    }
    Ok(f.v)
}

pub fn estimate<T: Scalar>(p: &EstimationProblem<T>, method: Method) -> Result<Mat<T>> {
    Estimator::new(&p.c, p.d())?.estimate(&p.b, method)
}

pub fn estimate_ls<T: Scalar>(p: &EstimationProblem<T>) -> Result<Mat<T>> {
    estimate(p, Method::Ls)
}

pub fn estimate_twicing<T: Scalar>(p: &EstimationProblem<T>) -> Result<Mat<T>> {
    estimate(p, Method::Twicing)
}

pub fn estimate_at<T: Scalar>(p: &EstimationProblem<T>) -> Result<Mat<T>> {
    estimate(p, Method::At)
}

pub fn estimate_family<T: Scalar>(p: &EstimationProblem<T>, t: u32) -> Result<Mat<T>> {
    estimate(p, Method::Family(t))
}

/// First-order prediction of `Â_LS` for the problem `B = A - E`, `C = A A*`:
/// `A + U [Σ^{-1} Z + Σ^{-1} E0* Σ] V*` with `A = U Σ V*`, `E0 = U* E V` and
/// `Z_ij = -(conj(E0_ji) σ_j³ + E0_ij σ_i³) / (σ_i² + σ_j²)`.
///
/// Test oracle only; `A` must be square and nonsingular.
pub fn ls_first_order_expansion<T: Scalar>(a: &Mat<T>, e: &Mat<T>) -> Result<Mat<T>> {
    if !a.is_square() || a.shape() != e.shape() {
        return Err(Error::InvalidArgument(
            "expansion needs square A and E of the same shape".into(),
        ));
    }
    let f = svd(a)?;
    let top = f.s[0];
    if top == 0.0 || f.s.iter().any(|&s| s <= 1e-14 * top) {
        return Err(Error::Singular("A has a zero singular value".into()));
    }
    let sig = &f.s;
    let e0 = f.u.adjoint() * e * &f.v;
    let d = sig.len();
    let m = Mat::from_fn(d, d, |i, j| {
        let (si, sj) = (sig[i], sig[j]);
        let denom = si * si + sj * sj;
        let z = -(e0[(j, i)].conjugate().scale(sj * sj * sj) + e0[(i, j)].scale(si * si * si))
            .unscale(denom);
        z.unscale(si) + e0[(j, i)].conjugate().scale(sj / si)
    });
    Ok(a + &f.u * m * f.v.adjoint())
}

/// Relative Frobenius distance `||x - y|| / ||y||`.
pub fn relative_error<T: Scalar>(x: &Mat<T>, y: &Mat<T>) -> f64 {
    frobenius(&(x - y)) / frobenius(y).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag_real, gaussian_matrix, haar, seeded_rng, C64};

    fn scalar<T: Scalar>(v: T) -> Mat<T> {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn method_parsing() {
        assert_eq!("ls".parse::<Method>().unwrap(), Method::Ls);
        assert_eq!("tw".parse::<Method>().unwrap(), Method::Twicing);
        assert_eq!("family10".parse::<Method>().unwrap(), Method::Family(10));
        assert_eq!("family:3".parse::<Method>().unwrap(), Method::Family(3));
        assert!("famly".parse::<Method>().is_err());
        assert_eq!(Method::Family(5).to_string(), "family5");
    }

    #[test]
    fn scalar_complex_ls_takes_phase_from_homolog() {
        let p = EstimationProblem::new(scalar(C64::new(0.0, 0.9)), scalar(C64::new(4.0, 0.0))).unwrap();
        let a = estimate_ls(&p).unwrap();
        assert!((a[(0, 0)] - C64::new(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn spectrum_examples() {
        let s = correction_spectrum(&scalar(3.0f64)).unwrap();
        assert_eq!(s.t, vec![0.0]);
        assert_eq!(s.w, vec![1.0]);

        let s = correction_spectrum(&scalar(C64::new(3.0, 0.0))).unwrap();
        assert_eq!(s.t, vec![0.5]);
        assert_eq!(s.w, vec![2.0]);

        let s = correction_spectrum(&diag_real::<f64>(&[1.0, 4.0])).unwrap();
        assert_eq!(s.lambda, vec![4.0, 1.0]);
        assert!((s.t[0] - 0.4).abs() < 1e-15 && (s.t[1] - 0.1).abs() < 1e-15);
        assert!((s.w[0] - 5.0 / 3.0).abs() < 1e-15 && (s.w[1] - 10.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn spectrum_zero_eigenvalues() {
        // 0/0 -> 1/2; 0 against positive -> 0
        let t = t_diagonal(&[0.0, 0.0], Field::Complex);
        assert_eq!(t, vec![0.5, 0.5]);
        let t = t_diagonal(&[2.0, 0.0], Field::Real);
        assert_eq!(t, vec![(-0.5 + 0.5 + 1.0) / 2.0, (-0.5 + 0.0 + 0.5) / 2.0]);
    }

    #[test]
    fn zero_perturbation_recovers_a() {
        let mut rng = seeded_rng(21, 0);
        let a: Mat<f64> = gaussian_matrix(5, 3, &mut rng);
        let p = EstimationProblem::new(a.clone(), &a * a.transpose()).unwrap();
        for m in [Method::Ls, Method::Twicing, Method::At, Method::Family(4)] {
            let est = estimate(&p, m).unwrap();
            assert!(relative_error(&est, &a) < 1e-10, "{m}");
        }
        let a: Mat<C64> = gaussian_matrix(4, 4, &mut rng);
        let p = EstimationProblem::new(a.clone(), &a * a.adjoint()).unwrap();
        assert!(relative_error(&estimate_at(&p).unwrap(), &a) < 1e-10);
    }

    #[test]
    fn ls_satisfies_constraint() {
        let mut rng = seeded_rng(22, 0);
        for (n, d) in [(3, 3), (6, 2), (2, 5)] {
            let a: Mat<C64> = gaussian_matrix(n, d, &mut rng);
            let b = &a + gaussian_matrix::<C64, _>(n, d, &mut rng).scale(0.1);
            let c = &a * a.adjoint();
            let est = estimate_ls(&EstimationProblem::new(b, c.clone()).unwrap()).unwrap();
            assert!(frobenius(&(&est * est.adjoint() - &c)) <= 1e-8 * frobenius(&c));
        }
    }

    #[test]
    fn ls_beats_random_feasible_points() {
        let mut rng = seeded_rng(23, 0);
        let a: Mat<f64> = gaussian_matrix(3, 3, &mut rng);
        let b = &a + gaussian_matrix::<f64, _>(3, 3, &mut rng).scale(0.3);
        let c = &a * a.transpose();
        let est = Estimator::new(&c, 3).unwrap();
        let best = frobenius(&(est.least_squares(&b).unwrap().estimate - &b));
        for _ in 0..10_000 {
            let q: Mat<f64> = haar(3, &mut rng);
            assert!(best <= frobenius(&(est.factor() * q - &b)) + 1e-12);
        }
    }

    #[test]
    fn twicing_identity() {
        let mut rng = seeded_rng(24, 0);
        let a: Mat<f64> = gaussian_matrix(3, 3, &mut rng);
        let b = &a + gaussian_matrix::<f64, _>(3, 3, &mut rng).scale(0.05);
        let p = EstimationProblem::new(b.clone(), &a * a.transpose()).unwrap();
        let ls = estimate_ls(&p).unwrap();
        let tw = estimate_twicing(&p).unwrap();
        assert!(frobenius(&(tw - (&b + (ls - &b).scale(2.0)))) <= 1e-14);
    }

    #[test]
    fn scalar_reductions() {
        let b = scalar(C64::new(0.3, -1.1));
        let p = EstimationProblem::new(b, scalar(C64::new(2.0, 0.0))).unwrap();
        let at = estimate_at(&p).unwrap();
        let tw = estimate_twicing(&p).unwrap();
        assert!((at[(0, 0)] - tw[(0, 0)]).norm() < 1e-15);
        let f1 = estimate_family(&p, 1).unwrap();
        let ls = estimate_ls(&p).unwrap();
        let expect = ls.scale(1.5) - p.b().scale(0.5);
        assert!((f1[(0, 0)] - expect[(0, 0)]).norm() < 1e-15);

        let p = EstimationProblem::new(scalar(-0.7f64), scalar(5.0)).unwrap();
        assert_eq!(estimate_at(&p).unwrap(), estimate_ls(&p).unwrap());
    }

    #[test]
    fn family_zero_is_ls_and_converges_to_at() {
        let mut rng = seeded_rng(25, 0);
        let a: Mat<f64> = gaussian_matrix(6, 6, &mut rng);
        let b = &a + gaussian_matrix::<f64, _>(6, 6, &mut rng).scale(0.1);
        let p = EstimationProblem::new(b, &a * a.transpose()).unwrap();
        let ls = estimate_ls(&p).unwrap();
        assert!(relative_error(&estimate_family(&p, 0).unwrap(), &ls) < 1e-14);
        let at = estimate_at(&p).unwrap();
        assert!(relative_error(&estimate_family(&p, 200).unwrap(), &at) <= 1e-8);
    }

    #[test]
    fn rectangular_projection_identities() {
        let mut rng = seeded_rng(26, 0);
        let a: Mat<C64> = gaussian_matrix(7, 3, &mut rng);
        let b = &a + gaussian_matrix::<C64, _>(7, 3, &mut rng).scale(0.1);
        let est = Estimator::new(&(&a * a.adjoint()), 3).unwrap();
        let p = est.column_space();
        let at = est.estimate(&b, Method::At).unwrap();
        assert!(relative_error(&(&p * p.adjoint() * &at), &at) <= 1e-10);

        let a: Mat<f64> = gaussian_matrix(2, 5, &mut rng);
        let b = &a + gaussian_matrix::<f64, _>(2, 5, &mut rng).scale(0.1);
        let est = Estimator::new(&(&a * a.transpose()), 5).unwrap();
        let at = est.estimate(&b, Method::At).unwrap();
        let p = row_space(&b).unwrap();
        assert!(relative_error(&(&at * &p * p.transpose()), &at) <= 1e-10);
    }

    #[test]
    fn wide_homolog_must_have_full_row_rank() {
        let b = Mat::<f64>::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let c = diag_real::<f64>(&[1.0, 1.0]);
        let p = EstimationProblem::new(b, c).unwrap();
        assert!(matches!(
            estimate_at(&p),
            Err(Error::RankDeficientHomolog { rank: 1, needed: 2 })
        ));
    }

    #[test]
    fn wide_family_zero_matches_direct_ls() {
        let mut rng = seeded_rng(27, 0);
        let a: Mat<f64> = gaussian_matrix(3, 7, &mut rng);
        let b = &a + gaussian_matrix::<f64, _>(3, 7, &mut rng).scale(0.2);
        let p = EstimationProblem::new(b, &a * a.transpose()).unwrap();
        let ls = estimate_ls(&p).unwrap();
        assert!(relative_error(&estimate_family(&p, 0).unwrap(), &ls) <= 1e-12);
    }

    #[test]
    fn equivariance_under_left_unitary() {
        let mut rng = seeded_rng(28, 0);
        let a: Mat<C64> = gaussian_matrix(4, 4, &mut rng);
        let b = &a + gaussian_matrix::<C64, _>(4, 4, &mut rng).scale(0.05);
        let c = &a * a.adjoint();
        let q: Mat<C64> = haar(4, &mut rng);
        for m in [Method::Ls, Method::At, Method::Family(3)] {
            let base = estimate(&EstimationProblem::new(b.clone(), c.clone()).unwrap(), m).unwrap();
            let moved = estimate(
                &EstimationProblem::new(&q * &b, &q * &c * q.adjoint()).unwrap(),
                m,
            )
            .unwrap();
            assert!(relative_error(&moved, &(&q * base)) <= 1e-10, "{m}");
        }
    }

    #[test]
    fn first_order_expansion_scalar() {
        let a = scalar(2.0f64);
        let pred = ls_first_order_expansion(&a, &scalar(0.1)).unwrap();
        assert!((pred[(0, 0)] - 2.0).abs() < 1e-15);
        let pred = ls_first_order_expansion(&scalar(C64::new(2.0, 0.0)), &scalar(C64::new(0.0, 0.1))).unwrap();
        assert!((pred[(0, 0)] - C64::new(2.0, -0.1)).norm() < 1e-15);
        assert_eq!(ls_first_order_expansion(&a, &scalar(0.0)).unwrap(), a);
        assert!(matches!(
            ls_first_order_expansion(&diag_real::<f64>(&[1.0, 0.0]), &diag_real(&[0.0, 0.0])),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn problem_validation() {
        let b = Mat::<f64>::zeros(2, 2);
        let c = Mat::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(EstimationProblem::new(b.clone(), c).is_err());
        assert!(EstimationProblem::new(b, Mat::zeros(3, 3)).is_err());
    }
}
