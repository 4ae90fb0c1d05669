//! Coefficient sets, Kam autocorrelation matrices `C_l = A_l A_l*`, and the
//! Legendre projection that extracts them from a rotational covariance.
//!
//! Coefficient storage: `A_l` is `S_l x (2l+1)` with column `m + l`. For a real
//! volume `A_l` is real for even `l` and purely imaginary for odd `l`; both are
//! stored as the real matrix `X_l` with `A_l = X_l` (even) or `A_l = i X_l`
//! (odd). Either way `C_l = X_l X_l^T`.
//!
//! The covariance and the autocorrelations are related by
//!
//! ```text
//! C_l(k1, k2)     = 2π (2l+1) ∫_0^π Σ(k1, k2, ψ) P_l(cos ψ) sin ψ dψ
//! Σ(k1, k2, ψ)    = (1 / 4π) Σ_l C_l(k1, k2) P_l(cos ψ)
//! C_l(k1, k2)     = Σ_{s,s'} j_ls(k1) C_l[s, s'] j_ls'(k2)
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{conjugate_diag, eigh, frobenius, Mat, EigFactors, HERMITIAN_TOL};
use crate::sphbasis::{legendre_all, BasisSpec, QuadratureKind, QuadratureRule};

/// Orders `m` (as column indices `m + l`) kept under `C_n` symmetry.
pub fn retained_columns(l: usize, sym_order: usize) -> Vec<usize> {
    let n = sym_order.max(1) as i64;
    let li = l as i64;
    (-li..=li)
        .filter(|m| m.rem_euclid(n) == 0)
        .map(|m| (m + li) as usize)
        .collect()
}

/// Largest possible rank of `C_l`: `min(S_l, #retained orders)`.
pub fn rank_cap(basis: &BasisSpec, l: usize, sym_order: usize) -> usize {
    basis.s(l).min(retained_columns(l, sym_order).len())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    pub basis: BasisSpec,
    /// Cyclic symmetry order the set is restricted to (1 = none).
    pub sym_order: usize,
    pub blocks: Vec<Mat<f64>>,
}

impl CoefficientSet {
    pub fn zeros(basis: BasisSpec) -> Self {
        let blocks = (0..=basis.max_degree)
            .map(|l| Mat::zeros(basis.s(l), 2 * l + 1))
            .collect();
        Self {
            basis,
            sym_order: 1,
            blocks,
        }
    }

    pub fn new(basis: BasisSpec, sym_order: usize, blocks: Vec<Mat<f64>>) -> Result<Self> {
        let set = Self {
            basis,
            sym_order,
            blocks,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sym_order == 0 {
            return Err(Error::InvalidInput("symmetry order must be >= 1".into()));
        }
        if self.blocks.len() != self.basis.max_degree + 1 {
            return Err(Error::InvalidInput(format!(
                "{} coefficient blocks for L = {}",
                self.blocks.len(),
                self.basis.max_degree
            )));
        }
        for (l, b) in self.blocks.iter().enumerate() {
            if b.nrows() != self.basis.s(l) || b.ncols() != 2 * l + 1 {
                return Err(Error::InvalidInput(format!(
                    "A_{l} is {}x{}, expected {}x{}",
                    b.nrows(),
                    b.ncols(),
                    self.basis.s(l),
                    2 * l + 1
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("A_{l} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn max_degree(&self) -> usize {
        self.basis.max_degree
    }

    /// Frobenius norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_compatible(other)?;
        Ok(Self {
            basis: self.basis.clone(),
            sym_order: self.sym_order,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn ensure_compatible(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::Incompatible("coefficient sets use different bases".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutocorrelationSet {
    pub basis: BasisSpec,
    pub rank_caps: Vec<usize>,
    pub blocks: Vec<Mat<f64>>,
}

impl AutocorrelationSet {
    pub fn new(basis: BasisSpec, rank_caps: Vec<usize>, blocks: Vec<Mat<f64>>) -> Result<Self> {
        let set = Self {
            basis,
            rank_caps,
            blocks,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let l_count = self.basis.max_degree + 1;
        if self.blocks.len() != l_count || self.rank_caps.len() != l_count {
            return Err(Error::InvalidInput("autocorrelation tables do not match L".into()));
        }
        for (l, c) in self.blocks.iter().enumerate() {
            let s = self.basis.s(l);
            if c.nrows() != s || c.ncols() != s {
                return Err(Error::InvalidInput(format!("C_{l} must be {s}x{s}")));
            }
            if self.rank_caps[l] > 2 * l + 1 || self.rank_caps[l] > s {
                return Err(Error::InvalidInput(format!(
                    "rank cap {} for l = {l} exceeds min(2l+1, S_l)",
                    self.rank_caps[l]
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("C_{l} has non-finite entries")));
            }
            let scale = frobenius(c);
            if frobenius(&(c - c.transpose())) > HERMITIAN_TOL * scale {
                return Err(Error::InvalidInput(format!("C_{l} is not symmetric")));
            }
            if scale > 0.0 {
                let eig = eigh(&symmetrize(c))?;
                let min = eig.lambda.last().copied().unwrap_or(0.0);
                if min < -HERMITIAN_TOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "C_{l} has eigenvalue {min:.3e} below -1e-8 ||C_l||"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn symmetrize(c: &Mat<f64>) -> Mat<f64> {
    (c + c.transpose()) * 0.5
}

fn clamp_rank(eig: &EigFactors<f64>, rank: usize) -> Mat<f64> {
    let lambda: Vec<f64> = eig
        .lambda
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < rank { v.max(0.0) } else { 0.0 })
        .collect();
    symmetrize(&conjugate_diag(&eig.u, &lambda))
}

/// `C_l = A_l A_l*` for every `l`, with rank caps from the symmetry order.
pub fn autocorr_from_coeffs(a: &CoefficientSet) -> AutocorrelationSet {
    let blocks = a.blocks.par_iter().map(|x| x * x.transpose()).collect();
    let rank_caps = (0..=a.max_degree()).map(|l| rank_cap(&a.basis, l, a.sym_order)).collect();
    AutocorrelationSet {
        basis: a.basis.clone(),
        rank_caps,
        blocks,
    }
}

/// Replaces each `C_l` by its best PSD approximation of rank at most its cap.
pub fn rank_truncate(c: &AutocorrelationSet) -> Result<AutocorrelationSet> {
    let blocks = c
        .blocks
        .par_iter()
        .zip(&c.rank_caps)
        .map(|(m, &cap)| {
            if m.nrows() == 0 {
                return Ok(m.clone());
            }
            Ok(clamp_rank(&eigh(&symmetrize(m))?, cap))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AutocorrelationSet {
        basis: c.basis.clone(),
        rank_caps: c.rank_caps.clone(),
        blocks,
    })
}

/// Zeroes the columns of every `A_l` whose order is not a multiple of `n`.
pub fn symmetry_mask(a: &CoefficientSet, n: usize) -> Result<CoefficientSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("symmetry order must be >= 1".into()));
    }
    let blocks = a
        .blocks
        .iter()
        .enumerate()
        .map(|(l, x)| {
            let keep = retained_columns(l, n);
            let mut out = Mat::zeros(x.nrows(), x.ncols());
            for &j in &keep {
                out.set_column(j, &x.column(j));
            }
            out
        })
        .collect();
    // masking with n after masking with n' keeps orders divisible by both
    let order = lcm(a.sym_order, n);
    Ok(CoefficientSet {
        basis: a.basis.clone(),
        sym_order: order,
        blocks,
    })
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    a / gcd(a, b) * b
}

/// Rotational covariance `Σ(k1, k2, ψ)` sampled on quadrature grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSlice {
    pub radial: QuadratureRule,
    pub polar: QuadratureRule,
    /// `values[(i * n_r + j) * n_ψ + p] = Σ(k_i, k_j, ψ_p)`.
    pub values: Vec<f64>,
}

impl CovarianceSlice {
    pub fn from_fn(radial: QuadratureRule, polar: QuadratureRule, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(radial.len() * radial.len() * polar.len());
        for &k1 in &radial.nodes {
            for &k2 in &radial.nodes {
                for &psi in &polar.nodes {
                    values.push(f(k1, k2, psi));
                }
            }
        }
        Self { radial, polar, values }
    }

    pub fn get(&self, i: usize, j: usize, p: usize) -> f64 {
        self.values[(i * self.radial.len() + j) * self.polar.len() + p]
    }

    pub fn validate(&self) -> Result<()> {
        let (nr, np) = (self.radial.len(), self.polar.len());
        if self.radial.kind != QuadratureKind::Radial || self.polar.kind != QuadratureKind::Polar {
            return Err(Error::InvalidInput("covariance slice axes have the wrong kinds".into()));
        }
        if nr == 0 || np == 0 || self.values.len() != nr * nr * np {
            return Err(Error::InvalidInput(format!(
                "covariance slice has {} values for a {nr}x{nr}x{np} grid",
                self.values.len()
            )));
        }
        if self.radial.weights.len() != nr || self.polar.weights.len() != np {
            return Err(Error::InvalidInput("quadrature weights do not match nodes".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance slice has non-finite values".into()));
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..nr {
            for j in 0..i {
                for p in 0..np {
                    if (self.get(i, j, p) - self.get(j, i, p)).abs() > 1e-8 * scale {
                        return Err(Error::InvalidInput(
                            "covariance slice is not symmetric in k1 <-> k2".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `Σ(k1, k2, ψ) = (1/4π) Σ_l C_l(k1, k2) P_l(cos ψ)` on the given grids.
pub fn covariance_from_autocorr(
    c: &AutocorrelationSet,
    radial: QuadratureRule,
    polar: QuadratureRule,
) -> CovarianceSlice {
    let lmax = c.basis.max_degree;
    let radial_vals: Vec<Vec<Vec<f64>>> = radial.nodes.iter().map(|&k| c.basis.radial_all(k)).collect();
    // C_l(k_i, k_j) for every l
    let nr = radial.len();
    let functions: Vec<Vec<f64>> = (0..=lmax)
        .into_par_iter()
        .map(|l| {
            let m = &c.blocks[l];
            let mut out = vec![0.0; nr * nr];
            for i in 0..nr {
                let ji = &radial_vals[i][l];
                let row: Vec<f64> = (0..m.ncols())
                    .map(|s2| (0..m.nrows()).map(|s1| ji[s1] * m[(s1, s2)]).sum())
                    .collect();
                for j in 0..nr {
                    out[i * nr + j] = row.iter().zip(&radial_vals[j][l]).map(|(a, b)| a * b).sum();
                }
            }
            out
        })
        .collect();
    let legendre: Vec<Vec<f64>> = polar.nodes.iter().map(|&psi| legendre_all(lmax, psi.cos())).collect();
    let np = polar.len();
    let mut values = vec![0.0; nr * nr * np];
    for i in 0..nr {
        for j in 0..nr {
            for p in 0..np {
                let s: f64 = (0..=lmax).map(|l| functions[l][i * nr + j] * legendre[p][l]).sum();
                values[(i * nr + j) * np + p] = s / (4.0 * PI);
            }
        }
    }
    CovarianceSlice { radial, polar, values }
}

/// Legendre projection in `ψ` followed by radial projection onto `j_ls`; each
/// block is symmetrised and its negative eigenvalues clamped.
pub fn autocorr_from_covariance(slice: &CovarianceSlice, basis: &BasisSpec) -> Result<AutocorrelationSet> {
    slice.validate()?;
    let lmax = basis.max_degree;
    let need = 2 * lmax + 2;
    if slice.polar.len() < need {
        return Err(Error::QuadratureUnderresolved {
            have: slice.polar.len(),
            need,
            max_degree: lmax,
        });
    }
    if slice.radial.nodes.iter().any(|&k| !(k > 0.0 && k < basis.c)) {
        return Err(Error::InvalidInput(format!(
            "radial nodes must lie in (0, {})",
            basis.c
        )));
    }
    let nr = slice.radial.len();
    let np = slice.polar.len();
    let legendre: Vec<Vec<f64>> = slice.polar.nodes.iter().map(|&psi| legendre_all(lmax, psi.cos())).collect();
    // w_i k_i^2 j_ls(k_i)
    let weighted: Vec<Vec<Vec<f64>>> = slice
        .radial
        .nodes
        .iter()
        .zip(&slice.radial.weights)
        .map(|(&k, &w)| {
            basis
                .radial_all(k)
                .into_iter()
                .map(|v| v.into_iter().map(|x| x * w * k * k).collect())
                .collect()
        })
        .collect();

    let blocks = (0..=lmax)
        .into_par_iter()
        .map(|l| {
            let pref = 2.0 * PI * (2 * l + 1) as f64;
            let cl = Mat::from_fn(nr, nr, |i, j| {
                pref * (0..np)
                    .map(|p| slice.polar.weights[p] * slice.get(i, j, p) * legendre[p][l])
                    .sum::<f64>()
            });
            let s = basis.s(l);
            let proj = Mat::from_fn(s, nr, |si, i| weighted[i][l][si]);
            let raw = &proj * cl * proj.transpose();
            let sym = symmetrize(&raw);
            if frobenius(&sym) == 0.0 {
                return Ok(sym);
            }
            let eig = eigh(&sym)?;
            Ok(clamp_rank(&eig, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let rank_caps = (0..=lmax).map(|l| rank_cap(basis, l, 1)).collect();
    Ok(AutocorrelationSet {
        basis: basis.clone(),
        rank_caps,
        blocks,
    })
}

/// Radial rule fine enough to integrate products of two basis functions.
pub fn default_radial_rule(basis: &BasisSpec) -> QuadratureRule {
    QuadratureRule::radial(basis.c, basis.radial_nodes_for_products())
}

/// Smallest polar rule accepted by [`autocorr_from_covariance`].
pub fn default_polar_rule(basis: &BasisSpec) -> QuadratureRule {
    QuadratureRule::polar(2 * basis.max_degree + 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{psd_factor, seeded_rng};
    use crate::sphbasis::truncation;
    use rand_distr::{Distribution, StandardNormal};

    fn random_coeffs(basis: &BasisSpec, seed: u64) -> CoefficientSet {
        let mut rng = seeded_rng(seed, 0);
        let mut set = CoefficientSet::zeros(basis.clone());
        for b in set.blocks.iter_mut() {
            for v in b.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        set
    }

    #[test]
    fn retained_orders() {
        assert_eq!(retained_columns(2, 1).len(), 5);
        assert_eq!(retained_columns(2, 4), vec![2]);
        assert_eq!(retained_columns(4, 4), vec![0, 4, 8]);
    }

    #[test]
    fn zero_coefficients_give_zero_autocorrelation() {
        let basis = truncation(0.5, 4.0).unwrap();
        let c = autocorr_from_coeffs(&CoefficientSet::zeros(basis));
        assert!(c.blocks.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        c.validate().unwrap();
    }

    #[test]
    fn rank_bounded_and_factor_roundtrip() {
        let basis = truncation(0.5, 6.0).unwrap();
        let a = random_coeffs(&basis, 3);
        let c = autocorr_from_coeffs(&a);
        for (l, m) in c.blocks.iter().enumerate() {
            let eig = eigh(m).unwrap();
            let scale = frobenius(m);
            for &lam in eig.lambda.iter().skip(2 * l + 1) {
                assert!(lam.abs() <= 1e-8 * scale);
            }
            let f = psd_factor(m, c.rank_caps[l]).unwrap();
            assert!(frobenius(&(&f * f.transpose() - m)) <= 1e-10 * scale);
        }
    }

    #[test]
    fn rank_truncate_cases() {
        let basis = truncation(0.5, 6.0).unwrap();
        let a = random_coeffs(&basis, 5);
        let c = autocorr_from_coeffs(&a);
        let t = rank_truncate(&c).unwrap();
        for (x, y) in c.blocks.iter().zip(&t.blocks) {
            assert!(frobenius(&(x - y)) <= 1e-12 * frobenius(x).max(1.0));
        }

        let l = 0;
        let s = basis.s(l);
        let eye = AutocorrelationSet {
            basis: basis.clone(),
            rank_caps: (0..=basis.max_degree).map(|l| rank_cap(&basis, l, 1)).collect(),
            blocks: (0..=basis.max_degree).map(|l| Mat::identity(basis.s(l), basis.s(l))).collect(),
        };
        let t = rank_truncate(&eye).unwrap();
        assert!(s > 1);
        let trace: f64 = t.blocks[l].trace();
        assert!((trace - 1.0).abs() < 1e-12);
        let sq = &t.blocks[l] * &t.blocks[l];
        assert!(frobenius(&(sq - &t.blocks[l])) < 1e-12);
    }

    #[test]
    fn mask_drops_orders() {
        let basis = truncation(0.5, 6.0).unwrap();
        let a = random_coeffs(&basis, 7);
        assert_eq!(symmetry_mask(&a, 1).unwrap().blocks, a.blocks);
        let m = symmetry_mask(&a, 4).unwrap();
        assert_eq!(m.sym_order, 4);
        let c = autocorr_from_coeffs(&m);
        assert_eq!(c.rank_caps[2], 1);
        for j in 0..5 {
            let norm = m.blocks[2].column(j).norm();
            assert_eq!(norm == 0.0, j != 2);
        }
    }

    #[test]
    fn covariance_roundtrip() {
        let basis = truncation(0.5, 4.0).unwrap();
        let a = random_coeffs(&basis, 11);
        let c = autocorr_from_coeffs(&a);
        let slice = covariance_from_autocorr(&c, default_radial_rule(&basis), default_polar_rule(&basis));
        let back = autocorr_from_covariance(&slice, &basis).unwrap();
        for (x, y) in c.blocks.iter().zip(&back.blocks) {
            assert!(frobenius(&(x - y)) <= 1e-8 * frobenius(x));
        }
    }

    #[test]
    fn underresolved_polar_grid_rejected() {
        let basis = truncation(0.5, 4.0).unwrap();
        let slice = CovarianceSlice::from_fn(
            default_radial_rule(&basis),
            QuadratureRule::polar(2 * basis.max_degree + 1),
            |_, _, _| 0.0,
        );
        assert!(matches!(
            autocorr_from_covariance(&slice, &basis),
            Err(Error::QuadratureUnderresolved { .. })
        ));
    }
}
