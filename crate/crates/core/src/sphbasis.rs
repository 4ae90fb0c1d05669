//! Spherical-Bessel radial basis, real spherical harmonics and the Legendre
//! and Gauss-Legendre machinery behind them.
//!
//! Radial functions on `[0, c]`:
//!
//! ```text
//! j_ls(k) = sqrt(2 / c^3) / |j_{l+1}(R_ls)| * j_l(R_ls k / c)
//! ```
//!
//! with `R_ls` the `s`-th positive root of `j_l`, normalised so that
//! `∫_0^c j_ls(k)^2 k^2 dk = 1`.
//!
//! Real spherical harmonics carry no Condon-Shortley phase:
//!
//! ```text
//! Y_l^m  = sqrt(2) N_lm P_l^m(cos θ) cos(m φ)      m > 0
//! Y_l^0  =         N_l0 P_l(cos θ)
//! Y_l^-m = sqrt(2) N_lm P_l^m(cos θ) sin(m φ)      m > 0
//! N_lm   = sqrt((2l+1)/(4π) (l-m)!/(l+m)!)
//! ```
//!
//! with `P_l^m(x) = (1-x^2)^{m/2} d^m/dx^m P_l(x)` (no `(-1)^m`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial Gauss-Legendre node count used when nothing larger is needed.
pub const DEFAULT_RADIAL_NODES: usize = 64;

/// `j_0(x), ..., j_lmax(x)`.
///
/// Upward recurrence when `|x| > lmax` (stable there), otherwise Miller's
/// downward recurrence normalised with `Σ (2l+1) j_l(x)^2 = 1`.
pub fn sph_bessel_all(lmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; lmax + 1];
    let ax = x.abs();
    if ax == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let (s, c) = ax.sin_cos();
    if ax > lmax as f64 {
        out[0] = s / ax;
        if lmax >= 1 {
            out[1] = s / (ax * ax) - c / ax;
        }
        for l in 1..lmax {
            out[l + 1] = (2 * l + 1) as f64 / ax * out[l] - out[l - 1];
        }
    } else {
        let start = lmax.max(ax.ceil() as usize) + 40 + (4.0 * ax.cbrt()) as usize;
        let mut upper = 0.0f64; // f_{l+1}
        let mut cur = 1.0f64; // f_l
        let mut norm = 0.0f64;
        for l in (0..=start).rev() {
            if l <= lmax {
                out[l] = cur;
            }
            norm += (2 * l + 1) as f64 * cur * cur;
            if l == 0 {
                break;
            }
            let lower = (2 * l + 1) as f64 / ax * cur - upper;
            upper = cur;
            cur = lower;
            if cur.abs() > 1e150 {
                let scale = 1e-150;
                cur *= scale;
                upper *= scale;
                norm *= scale * scale;
                for v in out.iter_mut() {
                    *v *= scale;
                }
            }
        }
        let j0 = s / ax;
        let j1 = s / (ax * ax) - c / ax;
        let mut factor = 1.0 / norm.sqrt();
        let sign_ref = if j0.abs() > j1.abs() {
            j0 * out[0]
        } else {
            // out[1] exists whenever lmax >= 1; for lmax == 0 j0 dominates the
            // comparison only away from its roots, so recompute f_1 directly.
            let f1 = if lmax >= 1 { out[1] } else { out[0] * (1.0 / ax - c / s) };
            j1 * f1
        };
        if sign_ref < 0.0 {
            factor = -factor;
        }
        for v in out.iter_mut() {
            *v *= factor;
        }
    }
    if x < 0.0 {
        for (l, v) in out.iter_mut().enumerate() {
            if l % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

pub fn sph_bessel(l: usize, x: f64) -> f64 {
    sph_bessel_all(l, x)[l]
}

fn bisect_root(l: usize, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = sph_bessel(l, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        let fmid = sph_bessel(l, mid);
        if fmid == 0.0 {
            return mid;
        }
        if (fmid > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots of `j_{l+1}` from consecutive roots of `j_l`, using
/// `R_{l,s} < R_{l+1,s} < R_{l,s+1}`.
fn next_level(roots: &[f64], l: usize) -> Vec<f64> {
    roots
        .windows(2)
        .map(|w| bisect_root(l + 1, w[0], w[1]))
        .collect()
}

/// `s`-th positive root of `j_l` (`s >= 1`).
pub fn bessel_root(l: usize, s: usize) -> Result<f64> {
    if s == 0 {
        return Err(Error::InvalidArgument("root index s starts at 1".into()));
    }
    let mut roots: Vec<f64> = (s..=s + l).map(|k| k as f64 * PI).collect();
    for level in 0..l {
        roots = next_level(&roots, level);
    }
    Ok(roots[0])
}

/// Normalised radial function `j_ls(k)` for `0 < k < c`.
pub fn radial_basis(l: usize, s: usize, c: f64, k: f64) -> Result<f64> {
    if !(k > 0.0 && k < c) {
        return Err(Error::InvalidArgument(format!(
            "radial frequency {k} outside (0, {c})"
        )));
    }
    let root = bessel_root(l, s)?;
    Ok(radial_value(l, root, c, k))
}

fn radial_norm(l: usize, root: f64, c: f64) -> f64 {
    (2.0 / (c * c * c)).sqrt() / sph_bessel(l + 1, root).abs()
}

fn radial_value(l: usize, root: f64, c: f64, k: f64) -> f64 {
    radial_norm(l, root, c) * sph_bessel(l, root * k / c)
}

/// Truncated spherical-Bessel basis for bandlimit `c` and support radius `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Bandlimit in cycles per voxel.
    pub c: f64,
    /// Support radius in voxels.
    pub support: f64,
    pub max_degree: usize,
    /// `S_l` for `l = 0..=L`.
    pub radial_counts: Vec<usize>,
    /// `R_{l,s}` for `s = 1..=S_l + 1`.
    pub roots: Vec<Vec<f64>>,
}

/// Largest `s` with `R_{l,s+1} <= 2πcR`, per `l`, stopping at the first `l`
/// with `S_l = 0`. The bound is inclusive.
pub fn truncation(c: f64, support: f64) -> Result<BasisSpec> {
    if !(c > 0.0 && c <= 0.5) {
        return Err(Error::InvalidArgument(format!("bandlimit c = {c} not in (0, 0.5]")));
    }
    if !(support >= 2.0) || !support.is_finite() {
        return Err(Error::InvalidArgument(format!("support R = {support} must be >= 2")));
    }
    let bound = 2.0 * PI * c * support;
    // inclusive comparison with slack for rounding in the product above
    let within = |r: f64| r <= bound * (1.0 + 1e-12);
    if !within(2.0 * PI) {
        return Err(Error::EmptyBasis { bound });
    }
    // first root of j_l exceeds l, so l never reaches the bound
    let level_cap = bound.ceil() as usize + 2;
    let count0 = (bound / PI).floor() as usize + level_cap + 3;
    let mut level: Vec<f64> = (1..=count0).map(|k| k as f64 * PI).collect();
    let mut radial_counts = Vec::new();
    let mut roots = Vec::new();
    for l in 0.. {
        let inside = level.iter().take_while(|&&r| within(r)).count();
        let s_l = inside.saturating_sub(1);
        if s_l == 0 {
            break;
        }
        radial_counts.push(s_l);
        roots.push(level[..=s_l].to_vec());
        level = next_level(&level, l);
    }
    let spec = BasisSpec {
        c,
        support,
        max_degree: radial_counts.len() - 1,
        radial_counts,
        roots,
    };
    debug_assert!(spec.radial_counts.windows(2).all(|w| w[0] >= w[1]));
    Ok(spec)
}

impl BasisSpec {
    pub fn bound(&self) -> f64 {
        2.0 * PI * self.c * self.support
    }

    pub fn s(&self, l: usize) -> usize {
        self.radial_counts[l]
    }

    pub fn root(&self, l: usize, s: usize) -> f64 {
        self.roots[l][s - 1]
    }

    /// Total number of coefficients `Σ_l S_l (2l + 1)`.
    pub fn coefficient_count(&self) -> usize {
        self.radial_counts
            .iter()
            .enumerate()
            .map(|(l, &s)| s * (2 * l + 1))
            .sum()
    }

    /// `j_ls(k)` for `k` in `[0, c]`; no domain check.
    pub fn radial(&self, l: usize, s: usize, k: f64) -> f64 {
        radial_value(l, self.root(l, s), self.c, k)
    }

    /// `values[l][s-1] = j_ls(k)` for every basis function.
    pub fn radial_all(&self, k: f64) -> Vec<Vec<f64>> {
        (0..=self.max_degree)
            .map(|l| (1..=self.s(l)).map(|s| self.radial(l, s, k)).collect())
            .collect()
    }

    /// Largest stored root, i.e. the fastest radial oscillation in the basis.
    pub fn top_root(&self) -> f64 {
        self.roots
            .iter()
            .filter_map(|r| r.last().copied())
            .fold(0.0, f64::max)
    }

    /// Gauss-Legendre node count on `[0, c]` that resolves `j_l(2π k r) j_ls(k)`
    /// for `r <= r_max`.
    pub fn radial_nodes_for(&self, r_max: f64) -> usize {
        radial_nodes_for_phase(2.0 * PI * self.c * r_max + self.top_root())
    }

    /// Node count for products of two basis functions.
    pub fn radial_nodes_for_products(&self) -> usize {
        radial_nodes_for_phase(2.0 * self.top_root())
    }

    /// Checks the stored roots against `j_l(R) = 0` and the ordering invariants.
    pub fn validate(&self) -> Result<()> {
        if self.radial_counts.len() != self.max_degree + 1 || self.roots.len() != self.max_degree + 1 {
            return Err(Error::InvalidInput("basis tables do not match L".into()));
        }
        if self.radial_counts.windows(2).any(|w| w[0] < w[1]) || self.radial_counts[self.max_degree] == 0 {
            return Err(Error::InvalidInput("S_l must be nonincreasing and S_L >= 1".into()));
        }
        for (l, rs) in self.roots.iter().enumerate() {
            if rs.len() != self.radial_counts[l] + 1 || rs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("root table for l = {l} is malformed")));
            }
            if let Some(&r) = rs.iter().find(|&&r| sph_bessel(l, r).abs() > 1e-10) {
                return Err(Error::InvalidInput(format!("R = {r} is not a root of j_{l}")));
            }
        }
        Ok(())
    }
}

/// Node count for an integrand on `[0, c]` whose total oscillation phase is
/// `phase` radians.
pub fn radial_nodes_for_phase(phase: f64) -> usize {
    DEFAULT_RADIAL_NODES.max((0.6 * phase).ceil() as usize + 32)
}

/// Gauss-Legendre rule on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureKind {
    /// `∫_0^c f(k) dk`, Gauss-Legendre; exact for polynomials of degree `2n - 1`.
    Radial,
    /// `∫_0^π f(ψ) sin ψ dψ`, Gauss-Legendre in `cos ψ`; same exactness in `cos ψ`.
    Polar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn radial(c: f64, n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self {
            kind: QuadratureKind::Radial,
            nodes: x.iter().map(|&t| 0.5 * c * (t + 1.0)).collect(),
            weights: w.iter().map(|&v| 0.5 * c * v).collect(),
        }
    }

    /// Nodes are angles in `[0, π]`, increasing.
    pub fn polar(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self {
            kind: QuadratureKind::Polar,
            nodes: x.iter().rev().map(|&t| t.acos()).collect(),
            weights: w.iter().rev().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos θ`, trapezoid in `φ`.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub polar: QuadratureRule,
    pub azimuths: usize,
}

impl SphereRule {
    /// Exact for spherical polynomials of degree `<= 2 n_polar - 1` and `< azimuths`.
    pub fn new(n_polar: usize, azimuths: usize) -> Self {
        Self {
            polar: QuadratureRule::polar(n_polar),
            azimuths,
        }
    }

    /// `(θ, φ, weight)` triples; weights sum to `4π`.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let dphi = 2.0 * PI / self.azimuths as f64;
        self.polar
            .nodes
            .iter()
            .zip(&self.polar.weights)
            .flat_map(move |(&theta, &w)| {
                (0..self.azimuths).map(move |j| (theta, j as f64 * dphi, w * dphi))
            })
    }
}

/// `P_l(x)` by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    legendre_all(l, x)[l]
}

/// `P_0(x), ..., P_lmax(x)`.
pub fn legendre_all(lmax: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax + 1];
    p[0] = 1.0;
    if lmax >= 1 {
        p[1] = x;
    }
    for k in 1..lmax {
        p[k + 1] = ((2 * k + 1) as f64 * x * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    p
}

/// Index of `Y_l^m` in the flat tables returned by [`real_sph_harm_all`].
#[inline]
pub fn sh_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (m + l as i64) as usize
}

/// Normalised associated Legendre values `N_lm P_l^m(cos θ)` for `0 <= m <= l <= lmax`,
/// stored at `l (l + 1) / 2 + m`.
fn normalized_assoc_legendre(lmax: usize, cos_t: f64, sin_t: f64) -> Vec<f64> {
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut p = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
    p[0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lmax {
        p[idx(m, m)] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * sin_t * p[idx(m - 1, m - 1)];
    }
    for m in 0..lmax {
        p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * cos_t * p[idx(m, m)];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[idx(l, m)] = a * (cos_t * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
        }
    }
    p
}

/// Every `Y_l^m(θ, φ)` with `l <= lmax`, indexed by [`sh_index`].
pub fn real_sph_harm_all(lmax: usize, theta: f64, phi: f64) -> Vec<f64> {
    let (sin_t, cos_t) = theta.sin_cos();
    real_sph_harm_all_from_cos(lmax, cos_t, sin_t, phi)
}

/// As [`real_sph_harm_all`], taking `cos θ` and `sin θ >= 0` directly.
pub fn real_sph_harm_all_from_cos(lmax: usize, cos_t: f64, sin_t: f64, phi: f64) -> Vec<f64> {
    let p = normalized_assoc_legendre(lmax, cos_t, sin_t);
    let mut out = vec![0.0; (lmax + 1) * (lmax + 1)];
    let trig: Vec<(f64, f64)> = (0..=lmax).map(|m| (m as f64 * phi).sin_cos()).collect();
    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..=lmax {
        let base = l * (l + 1) / 2;
        out[sh_index(l, 0)] = p[base];
        for m in 1..=l {
            let v = sqrt2 * p[base + m];
            let (s, c) = trig[m];
            out[sh_index(l, m as i64)] = v * c;
            out[sh_index(l, -(m as i64))] = v * s;
        }
    }
    out
}

/// Single real spherical harmonic `Y_l^m(θ, φ)`.
pub fn real_sph_harm(l: usize, m: i64, theta: f64, phi: f64) -> Result<f64> {
    if m.unsigned_abs() as usize > l {
        return Err(Error::InvalidArgument(format!("|m| = {} exceeds l = {l}", m.abs())));
    }
    Ok(real_sph_harm_all(l, theta, phi)[sh_index(l, m)])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed forms for small l, independent of the recurrences above.
    fn j_closed(l: usize, x: f64) -> f64 {
        let (s, c) = x.sin_cos();
        match l {
            0 => s / x,
            1 => s / (x * x) - c / x,
            2 => (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x),
            3 => (15.0 / x.powi(3) - 6.0 / x) * s / x - (15.0 / (x * x) - 1.0) * c / x,
            _ => unreachable!(),
        }
    }

    #[test]
    fn bessel_matches_closed_forms() {
        for &x in &[0.3, 1.0, 2.5, 7.9, 13.0, 40.0] {
            let all = sph_bessel_all(3, x);
            for l in 0..=3 {
                assert!((all[l] - j_closed(l, x)).abs() < 1e-13, "l={l} x={x}");
            }
        }
        // downward branch with large lmax must agree with the upward branch
        let down = sph_bessel_all(60, 30.0);
        let up = sph_bessel_all(20, 30.0);
        for l in 0..=20 {
            assert!((down[l] - up[l]).abs() < 1e-12, "l={l}");
        }
        assert_eq!(sph_bessel_all(4, 0.0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((sph_bessel(1, -2.0) + j_closed(1, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn bessel_small_argument_limit() {
        // j_l(x) ~ x^l / (2l+1)!!
        let x = 1e-3;
        let j = sph_bessel_all(3, x);
        assert!((j[0] - 1.0).abs() < 1e-6);
        assert!((j[1] / (x / 3.0) - 1.0).abs() < 1e-6);
        assert!((j[3] / (x.powi(3) / 105.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn roots_l0_and_l1() {
        assert!((bessel_root(0, 1).unwrap() - PI).abs() < 1e-12);
        assert!((bessel_root(0, 3).unwrap() - 3.0 * PI).abs() < 1e-12);
        // independent oracle: bisection of the closed form tan x = x on (π, 3π/2)
        let (mut lo, mut hi) = (PI + 1e-9, 1.5 * PI - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (j_closed(1, mid) > 0.0) == (j_closed(1, lo) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r11 = bessel_root(1, 1).unwrap();
        assert!((r11 - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((r11 - 4.493409457909064).abs() < 1e-12);
        assert!(sph_bessel(1, r11).abs() < 1e-10);
        assert!(bessel_root(0, 0).is_err());
    }

    #[test]
    fn roots_interlace() {
        for l in 0..6 {
            for s in 1..5 {
                let a = bessel_root(l, s).unwrap();
                let b = bessel_root(l + 1, s).unwrap();
                let c = bessel_root(l, s + 1).unwrap();
                assert!(a < b && b < c);
                assert!(sph_bessel(l + 1, b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn truncation_examples() {
        let b = truncation(0.5, 16.0).unwrap();
        assert_eq!(b.s(0), 15);
        assert!(b.radial_counts.windows(2).all(|w| w[0] >= w[1]));
        b.validate().unwrap();

        let b = truncation(0.5, 2.0).unwrap();
        assert_eq!(b.s(0), 1);
        assert!(matches!(truncation(0.4, 2.0), Err(Error::EmptyBasis { .. })));
        assert!(truncation(0.6, 8.0).is_err());
        assert!(truncation(0.5, 1.0).is_err());

        let again = truncation(0.5, 16.0).unwrap();
        assert_eq!(again, truncation(0.5, 16.0).unwrap());
    }

    #[test]
    fn radial_normalisation_and_orthogonality() {
        let c = 0.5;
        let rule = QuadratureRule::radial(c, DEFAULT_RADIAL_NODES);
        for l in 0..=4 {
            for s in 1..=3 {
                let norm = rule.integrate(|k| radial_basis(l, s, c, k).unwrap().powi(2) * k * k);
                assert!((norm - 1.0).abs() < 1e-8, "l={l} s={s} norm={norm}");
                for s2 in (s + 1)..=3 {
                    let ip = rule.integrate(|k| {
                        radial_basis(l, s, c, k).unwrap() * radial_basis(l, s2, c, k).unwrap() * k * k
                    });
                    assert!(ip.abs() < 1e-8);
                }
            }
        }
        assert!(radial_basis(0, 1, c, 0.0).is_err());
        assert!(radial_basis(0, 1, c, 0.5).is_err());
        let near_zero = radial_basis(0, 1, c, 1e-9).unwrap();
        assert!(near_zero.is_finite() && near_zero > 0.0);
    }

    #[test]
    fn gauss_legendre_rules() {
        for n in [1, 2, 5, 16, 64, 200] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
        let rule = QuadratureRule::radial(0.5, 64);
        assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-12);
        let polar = QuadratureRule::polar(10);
        assert!((polar.weights.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let sphere = SphereRule::new(10, 20);
        assert!((sphere.points().map(|p| p.2).sum::<f64>() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn legendre_values_and_orthogonality() {
        for l in 0..30 {
            assert!((legendre(l, 1.0) - 1.0).abs() < 1e-14);
        }
        assert!((legendre(2, 0.0) + 0.5).abs() < 1e-15);
        let (x, w) = gauss_legendre(40);
        for l in 0..12 {
            for k in 0..12 {
                let ip: f64 = x.iter().zip(&w).map(|(&t, &wt)| wt * legendre(l, t) * legendre(k, t)).sum();
                let expect = if l == k { 2.0 / (2 * l + 1) as f64 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn spherical_harmonic_values() {
        let y00 = real_sph_harm(0, 0, 0.7, 1.3).unwrap();
        assert!((y00 - (1.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        let y10 = real_sph_harm(1, 0, 0.0, 0.0).unwrap();
        assert!((y10 - (3.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        // Y_1^1 = sqrt(3/4π) sin θ cos φ without the Condon-Shortley sign
        let y11 = real_sph_harm(1, 1, 0.4, 0.9).unwrap();
        assert!((y11 - (3.0 / (4.0 * PI)).sqrt() * 0.4f64.sin() * 0.9f64.cos()).abs() < 1e-15);
        assert!(real_sph_harm(2, 3, 0.1, 0.1).is_err());
    }

    #[test]
    fn spherical_harmonics_orthonormal() {
        let lmax = 8;
        let rule = SphereRule::new(lmax + 2, 2 * lmax + 2);
        let n = (lmax + 1) * (lmax + 1);
        let mut gram = vec![0.0; n * n];
        for (t, p, w) in rule.points() {
            let y = real_sph_harm_all(lmax, t, p);
            for i in 0..n {
                for j in 0..n {
                    gram[i * n + j] += w * y[i] * y[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * n + j] - expect).abs() < 1e-8, "({i},{j})");
            }
        }
    }
}
