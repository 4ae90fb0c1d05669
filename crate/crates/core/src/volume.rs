//! Voxel volumes, ellipsoid phantoms, the volume <-> coefficient transforms and
//! reconstruction metrics.
//!
//! Voxel `(x, y, z)` sits at `r = (x, y, z) - (n - 1)/2` in voxel units, so the
//! grid is symmetric about the origin. Frequencies are in cycles per voxel and
//! the Fourier transform is `F(k) = Σ_r f(r) exp(-2πi k·r)`.
//!
//! [`expand`] uses the plane-wave expansion
//!
//! ```text
//! exp(-2πi k·r) = 4π Σ_lm (-i)^l j_l(2π|k||r|) Y_l^m(k̂) Y_l^m(r̂)
//! a_lms         = 4π (-i)^l Σ_r f(r) Y_l^m(r̂) ∫_0^c j_l(2πk|r|) j_ls(k) k^2 dk
//! ```
//!
//! which is real for even `l` and imaginary for odd `l` by construction.
//! [`expand_by_quadrature`] samples `F` on a spherical grid instead and keeps
//! the discarded wrong-parity part as a diagnostic.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autocorr::CoefficientSet;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::sphbasis::{real_sph_harm_all_from_cos, sh_index, sph_bessel_all, BasisSpec, QuadratureRule, SphereRule};

const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeGrid {
    pub n: usize,
    pub voxel_size: f64,
    /// `n^3` values, `x` fastest, `z` slowest.
    pub data: Vec<f64>,
}

impl VolumeGrid {
    pub fn zeros(n: usize, voxel_size: f64) -> Result<Self> {
        let v = Self {
            n,
            voxel_size,
            data: vec![0.0; n * n * n],
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 || self.n % 2 != 0 {
            return Err(Error::InvalidInput(format!("grid side {} must be even and >= 8", self.n)));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::InvalidInput(format!("voxel size {} must be positive", self.voxel_size)));
        }
        if self.data.len() != self.n.pow(3) {
            return Err(Error::InvalidInput(format!(
                "{} values for an {}^3 grid",
                self.data.len(),
                self.n
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("volume has non-finite values".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.n + y) * self.n + x
    }

    /// Voxel-unit position of a voxel center relative to the grid center.
    #[inline]
    pub fn position(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        let h = (self.n as f64 - 1.0) / 2.0;
        [x as f64 - h, y as f64 - h, z as f64 - h]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Incompatible(format!("grids of side {} and {}", self.n, other.n)));
        }
        Ok(())
    }

    pub fn map2(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            n: self.n,
            voxel_size: self.voxel_size,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Rotation by 90° about `z`: `(x, y) -> (-y, x)`. Exact on this grid.
    pub fn rotate_z90(&self) -> Self {
        let n = self.n;
        let mut data = vec![0.0; self.data.len()];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    // new(x', y') = old(x, y) with x' = -y, y' = x
                    let (xn, yn) = (n - 1 - y, x);
                    data[self.index(xn, yn, z)] = self.data[self.index(x, y, z)];
                }
            }
        }
        Self {
            n,
            voxel_size: self.voxel_size,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    /// Columns are the ellipsoid's axes in world coordinates.
    pub rotation: [[f64; 3]; 3],
    pub density: f64,
}

impl Ellipsoid {
    pub fn axis_aligned(center: [f64; 3], semi_axes: [f64; 3], density: f64) -> Self {
        Self {
            center,
            semi_axes,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            density,
        }
    }

    pub fn ball(center: [f64; 3], radius: f64, density: f64) -> Self {
        Self::axis_aligned(center, [radius; 3], density)
    }

    pub fn validate(&self) -> Result<()> {
        if self.semi_axes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidInput("ellipsoid semi-axes must be positive".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-10 {
                    return Err(Error::InvalidInput("ellipsoid rotation is not orthogonal".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let mut s = 0.0;
        for i in 0..3 {
            let q: f64 = (0..3).map(|k| self.rotation[k][i] * d[k]).sum();
            s += (q / self.semi_axes[i]).powi(2);
        }
        s <= 1.0
    }

    /// Same ellipsoid with every semi-axis grown by `margin`.
    pub fn dilated(&self, margin: f64) -> Self {
        let mut e = self.clone();
        for a in e.semi_axes.iter_mut() {
            *a += margin;
        }
        e
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut e = self.clone();
        for v in e.center.iter_mut().chain(e.semi_axes.iter_mut()) {
            *v *= factor;
        }
        e
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidPhantom {
    pub ellipsoids: Vec<Ellipsoid>,
}

impl EllipsoidPhantom {
    pub fn new(ellipsoids: Vec<Ellipsoid>) -> Result<Self> {
        for e in &ellipsoids {
            e.validate()?;
        }
        Ok(Self { ellipsoids })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ellipsoids: self.ellipsoids.iter().map(|e| e.scaled(factor)).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            ellipsoids: self.ellipsoids.iter().chain(&other.ellipsoids).cloned().collect(),
        }
    }
}

/// A homolog phantom plus the subunit that distinguishes the truth from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomPreset {
    pub name: String,
    pub homolog: EllipsoidPhantom,
    pub subunit: EllipsoidPhantom,
}

impl PhantomPreset {
    pub fn truth(&self) -> EllipsoidPhantom {
        self.homolog.union(&self.subunit)
    }

    /// Named preset in units where the support radius is `radius`.
    pub fn named(name: &str, radius: f64) -> Result<Self> {
        match name {
            "mickey" => Ok(Self::mickey().scaled(radius)),
            other => Err(Error::InvalidArgument(format!("unknown phantom preset {other:?}"))),
        }
    }

    /// Head, two ears and a nose, inside the unit ball. The ears differ slightly
    /// so the homolog has no mirror symmetry (which would make some `B_l` rank
    /// deficient).
    pub fn mickey() -> Self {
        let tilt = 0.35f64;
        let (s, c) = tilt.sin_cos();
        let mut nose = Ellipsoid::axis_aligned([0.12, -0.14, 0.41], [0.08, 0.052, 0.06], 1.0);
        nose.rotation = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        Self {
            name: "mickey".into(),
            homolog: EllipsoidPhantom {
                ellipsoids: vec![
                    Ellipsoid::axis_aligned([0.02, -0.1, 0.0], [0.46, 0.44, 0.42], 1.0),
                    Ellipsoid::axis_aligned([-0.47, 0.40, -0.06], [0.25, 0.27, 0.14], 1.0),
                    Ellipsoid::axis_aligned([0.44, 0.44, -0.02], [0.27, 0.25, 0.15], 1.0),
                ],
            },
            subunit: EllipsoidPhantom { ellipsoids: vec![nose] },
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            homolog: self.homolog.scaled(factor),
            subunit: self.subunit.scaled(factor),
        }
    }
}

/// Voxel value = sum of densities of the ellipsoids containing its center.
/// Phantom coordinates are physical: voxel units times `voxel_size`.
pub fn render_phantom(p: &EllipsoidPhantom, n: usize, voxel_size: f64) -> Result<VolumeGrid> {
    let mut v = VolumeGrid::zeros(n, voxel_size)?;
    for e in &p.ellipsoids {
        e.validate()?;
    }
    let plane = n * n;
    v.data.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        let h = (n as f64 - 1.0) / 2.0;
        for y in 0..n {
            for x in 0..n {
                let pos = [
                    (x as f64 - h) * voxel_size,
                    (y as f64 - h) * voxel_size,
                    (z as f64 - h) * voxel_size,
                ];
                slab[y * n + x] = p.ellipsoids.iter().filter(|e| e.contains(pos)).map(|e| e.density).sum();
            }
        }
    });
    Ok(v)
}

/// 0/1 mask of the voxels inside any ellipsoid of `p`.
pub fn render_mask(p: &EllipsoidPhantom, n: usize, voxel_size: f64) -> Result<VolumeGrid> {
    let mut v = render_phantom(p, n, voxel_size)?;
    for x in v.data.iter_mut() {
        *x = if *x != 0.0 { 1.0 } else { 0.0 };
    }
    Ok(v)
}

/// 0/1 mask of the voxels within `radius` voxels of the grid center.
pub fn ball_mask(n: usize, radius: f64) -> Result<VolumeGrid> {
    let mut v = VolumeGrid::zeros(n, 1.0)?;
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let p = v.position(x, y, z);
                let i = v.index(x, y, z);
                v.data[i] = if p.iter().map(|c| c * c).sum::<f64>() <= radius * radius { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(v)
}

fn check_basis_fits(v: &VolumeGrid, basis: &BasisSpec) -> Result<()> {
    v.validate()?;
    if basis.support > v.n as f64 / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "support radius {} does not fit in a grid of side {}",
            basis.support, v.n
        )));
    }
    Ok(())
}

/// `4π (-i)^l` restricted to the stored real part: `4π (-1)^ceil(l/2)`.
fn storage_sign(l: usize) -> f64 {
    if l.div_ceil(2) % 2 == 0 { 4.0 * PI } else { -4.0 * PI }
}

/// Offsets of each `A_l` in a flat buffer, row-major within a block.
fn block_offsets(basis: &BasisSpec) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(basis.max_degree + 1);
    let mut total = 0;
    for l in 0..=basis.max_degree {
        offsets.push(total);
        total += basis.s(l) * (2 * l + 1);
    }
    (offsets, total)
}

fn blocks_from_flat(basis: &BasisSpec, flat: &[f64], offsets: &[usize]) -> Vec<crate::linalg::Mat<f64>> {
    (0..=basis.max_degree)
        .map(|l| {
            let w = 2 * l + 1;
            crate::linalg::Mat::from_fn(basis.s(l), w, |s, col| flat[offsets[l] + s * w + col])
        })
        .collect()
}

fn direction(p: [f64; 3]) -> (f64, f64, f64, f64) {
    let rho2 = p[0] * p[0] + p[1] * p[1];
    let r = (rho2 + p[2] * p[2]).sqrt();
    if r == 0.0 {
        return (0.0, 1.0, 0.0, 0.0);
    }
    (r, p[2] / r, rho2.sqrt() / r, p[1].atan2(p[0]))
}

/// Spherical-Bessel / spherical-harmonic coefficients of a volume.
pub fn expand(v: &VolumeGrid, basis: &BasisSpec) -> Result<CoefficientSet> {
    check_basis_fits(v, basis)?;
    let lmax = basis.max_degree;
    let n = v.n;

    // nonzero voxels keyed by the exact squared radius (in quarter voxels)
    let mut voxels = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let f = v.data[v.index(x, y, z)];
                if f != 0.0 {
                    let p = v.position(x, y, z);
                    let key: i64 = p.iter().map(|c| ((2.0 * c) as i64).pow(2)).sum();
                    voxels.push((p, key, f));
                }
            }
        }
    }
    let mut keys: Vec<i64> = voxels.iter().map(|v| v.1).collect();
    keys.sort_unstable();
    keys.dedup();
    let r_max = keys.last().map_or(0.0, |&k| (k as f64).sqrt() / 2.0);

    // g_ls(r) = ∫_0^c j_l(2πkr) j_ls(k) k^2 dk
    let rule = QuadratureRule::radial(basis.c, basis.radial_nodes_for(r_max));
    let weighted: Vec<Vec<Vec<f64>>> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&k, &w)| {
            basis
                .radial_all(k)
                .into_iter()
                .map(|ls| ls.into_iter().map(|x| x * w * k * k).collect())
                .collect()
        })
        .collect();
    let radial: Vec<Vec<Vec<f64>>> = keys
        .par_iter()
        .map(|&key| {
            let r = (key as f64).sqrt() / 2.0;
            let mut g: Vec<Vec<f64>> = (0..=lmax).map(|l| vec![0.0; basis.s(l)]).collect();
            for (q, &k) in rule.nodes.iter().enumerate() {
                let j = sph_bessel_all(lmax, 2.0 * PI * k * r);
                for l in 0..=lmax {
                    for (s, gs) in g[l].iter_mut().enumerate() {
                        *gs += j[l] * weighted[q][l][s];
                    }
                }
            }
            g
        })
        .collect();
    let key_index: BTreeMap<i64, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    let (offsets, total) = block_offsets(basis);
    let partials: Vec<Vec<f64>> = voxels
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; total];
            for &(p, key, f) in chunk {
                let (_, cos_t, sin_t, phi) = direction(p);
                let y = real_sph_harm_all_from_cos(lmax, cos_t, sin_t, phi);
                let g = &radial[key_index[&key]];
                for l in 0..=lmax {
                    let w = 2 * l + 1;
                    let ys = &y[sh_index(l, -(l as i64))..sh_index(l, -(l as i64)) + w];
                    for (s, &gs) in g[l].iter().enumerate() {
                        let fg = f * gs;
                        let row = &mut acc[offsets[l] + s * w..offsets[l] + (s + 1) * w];
                        for (a, &yv) in row.iter_mut().zip(ys) {
                            *a += fg * yv;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut flat = vec![0.0; total];
    for p in &partials {
        for (a, b) in flat.iter_mut().zip(p) {
            *a += b;
        }
    }
    for l in 0..=lmax {
        let sign = storage_sign(l);
        let end = offsets[l] + basis.s(l) * (2 * l + 1);
        for a in &mut flat[offsets[l]..end] {
            *a *= sign;
        }
    }
    CoefficientSet::new(basis.clone(), 1, blocks_from_flat(basis, &flat, &offsets))
}

/// Coefficients from `F` sampled on a spherical product grid, with the
/// per-`l` relative size of the discarded wrong-parity part.
pub fn expand_by_quadrature(
    v: &VolumeGrid,
    basis: &BasisSpec,
    radial_nodes: usize,
    polar_nodes: usize,
    azimuths: usize,
) -> Result<(CoefficientSet, Vec<f64>)> {
    check_basis_fits(v, basis)?;
    let lmax = basis.max_degree;
    let n = v.n;
    let mut voxels = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let f = v.data[v.index(x, y, z)];
                if f != 0.0 {
                    voxels.push((v.position(x, y, z), f));
                }
            }
        }
    }
    let sphere = SphereRule::new(polar_nodes, azimuths);
    let directions: Vec<(f64, f64, f64)> = sphere.points().collect();
    let harmonics: Vec<Vec<f64>> = directions
        .iter()
        .map(|&(t, p, _)| real_sph_harm_all_from_cos(lmax, t.cos(), t.sin(), p))
        .collect();
    let rule = QuadratureRule::radial(basis.c, radial_nodes);
    let n_sh = (lmax + 1) * (lmax + 1);

    // A_lm(k_q) for every radial node
    let shells: Vec<Vec<C64>> = rule
        .nodes
        .par_iter()
        .map(|&k| {
            let mut a = vec![C64::new(0.0, 0.0); n_sh];
            for (d, &(t, p, w)) in directions.iter().enumerate() {
                let kv = [k * t.sin() * p.cos(), k * t.sin() * p.sin(), k * t.cos()];
                let mut f = C64::new(0.0, 0.0);
                for &(r, val) in &voxels {
                    let phase = -2.0 * PI * (kv[0] * r[0] + kv[1] * r[1] + kv[2] * r[2]);
                    let (s, c) = phase.sin_cos();
                    f += C64::new(val * c, val * s);
                }
                for (ai, &y) in a.iter_mut().zip(&harmonics[d]) {
                    *ai += f * (w * y);
                }
            }
            a
        })
        .collect();

    let mut blocks = Vec::with_capacity(lmax + 1);
    let mut residual = Vec::with_capacity(lmax + 1);
    for l in 0..=lmax {
        let w = 2 * l + 1;
        let mut kept = crate::linalg::Mat::zeros(basis.s(l), w);
        let mut dropped_sq = 0.0;
        for s in 0..basis.s(l) {
            for col in 0..w {
                let idx = l * l + col;
                let mut a = C64::new(0.0, 0.0);
                for (q, (&k, &wq)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                    a += shells[q][idx] * (wq * k * k * basis.radial(l, s + 1, k));
                }
                let (keep, drop) = if l % 2 == 0 { (a.re, a.im) } else { (a.im, a.re) };
                kept[(s, col)] = keep;
                dropped_sq += drop * drop;
            }
        }
        let kept_norm = kept.norm();
        residual.push(if kept_norm > 0.0 { dropped_sq.sqrt() / kept_norm } else { dropped_sq.sqrt() });
        blocks.push(kept);
    }
    Ok((CoefficientSet::new(basis.clone(), 1, blocks)?, residual))
}

/// DFT frequencies along one axis, `(j - n/2) / n`.
fn axis_frequencies(n: usize) -> Vec<f64> {
    (0..n).map(|j| (j as f64 - (n / 2) as f64) / n as f64).collect()
}

/// `M[a][b] = exp(sign · 2πi k_b r_a)` between voxel positions and frequencies.
fn dft_matrix(n: usize, sign: f64) -> Vec<C64> {
    let h = (n as f64 - 1.0) / 2.0;
    let k = axis_frequencies(n);
    let mut m = Vec::with_capacity(n * n);
    for a in 0..n {
        let r = a as f64 - h;
        for &kb in &k {
            let (s, c) = (sign * 2.0 * PI * kb * r).sin_cos();
            m.push(C64::new(c, s));
        }
    }
    m
}

/// Applies `out[.., a, ..] = Σ_b M[a][b] in[.., b, ..]` along one axis of an `n^3` array.
fn transform_axis(data: &[C64], n: usize, axis: usize, m: &[C64]) -> Vec<C64> {
    let stride = n.pow(axis as u32);
    let mut out = vec![C64::new(0.0, 0.0); data.len()];
    // lines indexed by the two other coordinates; each output line is independent
    let lines: Vec<usize> = (0..n * n)
        .map(|t| {
            let lo = t % stride;
            let hi = t / stride;
            hi * stride * n + lo
        })
        .collect();
    let results: Vec<Vec<C64>> = lines
        .par_iter()
        .map(|&base| {
            (0..n)
                .map(|a| {
                    let row = &m[a * n..(a + 1) * n];
                    row.iter()
                        .enumerate()
                        .map(|(b, &w)| w * data[base + b * stride])
                        .sum()
                })
                .collect()
        })
        .collect();
    for (&base, line) in lines.iter().zip(&results) {
        for (a, &v) in line.iter().enumerate() {
            out[base + a * stride] = v;
        }
    }
    out
}

fn transform3(data: Vec<C64>, n: usize, sign: f64) -> Vec<C64> {
    let m = dft_matrix(n, sign);
    let mut d = data;
    for axis in 0..3 {
        d = if sign < 0.0 {
            transform_axis(&d, n, axis, &transpose_square(&m, n))
        } else {
            transform_axis(&d, n, axis, &m)
        };
    }
    d
}

fn transpose_square(m: &[C64], n: usize) -> Vec<C64> {
    let mut t = vec![C64::new(0.0, 0.0); n * n];
    for a in 0..n {
        for b in 0..n {
            t[b * n + a] = m[a * n + b];
        }
    }
    t
}

/// `F(k)` on the DFT grid `k = (j - n/2)/n` per axis.
pub fn fourier_transform(v: &VolumeGrid) -> Vec<C64> {
    let data = v.data.iter().map(|&x| C64::new(x, 0.0)).collect();
    // forward: F[k] = Σ_r f[r] exp(-2πi k r), so the matrix is indexed [k][r]
    transform3(data, v.n, -1.0)
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub volume: VolumeGrid,
    /// `||Im f|| / ||Re f||` before the imaginary part was dropped.
    pub imaginary_residual: f64,
}

/// Evaluates the expansion on the Cartesian frequency grid (zero for
/// `|k| >= c`) and inverse-transforms to an `n^3` volume.
pub fn synthesize(a: &CoefficientSet, n: usize, voxel_size: f64) -> Result<Synthesis> {
    a.validate()?;
    let mut volume = VolumeGrid::zeros(n, voxel_size)?;
    let basis = &a.basis;
    let lmax = basis.max_degree;
    let half = (n / 2) as i64;
    let c2 = basis.c * basis.c;
    let nf = n as f64;

    let mut keys: Vec<i64> = Vec::new();
    for j in 0..n as i64 {
        for i in 0..n as i64 {
            for h in 0..n as i64 {
                let key = (h - half).pow(2) + (i - half).pow(2) + (j - half).pow(2);
                if (key as f64) / (nf * nf) < c2 {
                    keys.push(key);
                }
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    // A_lm(|k|) per distinct radius, indexed by sh_index
    let profiles: Vec<Vec<f64>> = keys
        .par_iter()
        .map(|&key| {
            let k = (key as f64).sqrt() / nf;
            let rad = basis.radial_all(k);
            let mut out = vec![0.0; (lmax + 1) * (lmax + 1)];
            for l in 0..=lmax {
                let x = &a.blocks[l];
                for col in 0..2 * l + 1 {
                    out[l * l + col] = (0..basis.s(l)).map(|s| x[(s, col)] * rad[l][s]).sum();
                }
            }
            out
        })
        .collect();
    let key_index: BTreeMap<i64, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    let freqs = axis_frequencies(n);
    let plane = n * n;
    let mut spectrum = vec![C64::new(0.0, 0.0); n * n * n];
    spectrum.par_chunks_mut(plane).enumerate().for_each(|(kz, slab)| {
        for ky in 0..n {
            for kx in 0..n {
                let key = (kx as i64 - half).pow(2) + (ky as i64 - half).pow(2) + (kz as i64 - half).pow(2);
                let Some(&idx) = key_index.get(&key) else { continue };
                let (_, cos_t, sin_t, phi) = direction([freqs[kx], freqs[ky], freqs[kz]]);
                let y = real_sph_harm_all_from_cos(lmax, cos_t, sin_t, phi);
                let prof = &profiles[idx];
                let (mut even, mut odd) = (0.0, 0.0);
                for l in 0..=lmax {
                    let range = l * l..(l + 1) * (l + 1);
                    let s: f64 = prof[range.clone()].iter().zip(&y[range]).map(|(p, q)| p * q).sum();
                    if l % 2 == 0 {
                        even += s;
                    } else {
                        odd += s;
                    }
                }
                slab[ky * n + kx] = C64::new(even, odd);
            }
        }
    });

    let spatial = transform3(spectrum, n, 1.0);
    let scale = 1.0 / (nf * nf * nf);
    let mut imag_sq = 0.0;
    for (out, z) in volume.data.iter_mut().zip(&spatial) {
        *out = z.re * scale;
        imag_sq += (z.im * scale).powi(2);
    }
    let re = volume.norm();
    let imaginary_residual = if re > 0.0 { imag_sq.sqrt() / re } else { imag_sq.sqrt() };
    Ok(Synthesis {
        volume,
        imaginary_residual,
    })
}

/// `||mask (recon - truth)|| / ||mask truth||`.
pub fn masked_relative_error(recon: &VolumeGrid, truth: &VolumeGrid, mask: &VolumeGrid) -> Result<f64> {
    recon.ensure_same_shape(truth)?;
    recon.ensure_same_shape(mask)?;
    if mask.data.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
        return Err(Error::InvalidInput("mask values must lie in [0, 1]".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((&r, &t), &m) in recon.data.iter().zip(&truth.data).zip(&mask.data) {
        num += (m * (r - t)).powi(2);
        den += (m * t).powi(2);
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("masked truth has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcrCurve {
    /// Shell centers, cycles per voxel.
    pub shells: Vec<f64>,
    pub values: Vec<f64>,
    /// Centers of shells that were empty or had a zero-norm side.
    pub skipped: Vec<f64>,
}

/// Fourier cross resolution: `Re<F1, F2> / (||F1|| ||F2||)` over each shell
/// `[i w, (i+1) w)` up to Nyquist.
pub fn fcr(v1: &VolumeGrid, v2: &VolumeGrid, shell_width: f64) -> Result<FcrCurve> {
    v1.ensure_same_shape(v2)?;
    if !(shell_width > 0.0 && shell_width <= 0.5) {
        return Err(Error::InvalidArgument(format!("shell width {shell_width} not in (0, 0.5]")));
    }
    let f1 = fourier_transform(v1);
    let f2 = fourier_transform(v2);
    let n = v1.n;
    let freqs = axis_frequencies(n);
    let count = (0.5 / shell_width + 1e-9).floor() as usize;
    let mut cross = vec![0.0; count];
    let mut n1 = vec![0.0; count];
    let mut n2 = vec![0.0; count];
    let mut members = vec![0usize; count];
    for kz in 0..n {
        for ky in 0..n {
            for kx in 0..n {
                let k = (freqs[kx].powi(2) + freqs[ky].powi(2) + freqs[kz].powi(2)).sqrt();
                let shell = (k / shell_width).floor() as usize;
                if shell >= count {
                    continue;
                }
                let i = (kz * n + ky) * n + kx;
                cross[shell] += (f1[i] * f2[i].conj()).re;
                n1[shell] += f1[i].norm_sqr();
                n2[shell] += f2[i].norm_sqr();
                members[shell] += 1;
            }
        }
    }
    let mut curve = FcrCurve {
        shells: Vec::new(),
        values: Vec::new(),
        skipped: Vec::new(),
    };
    for s in 0..count {
        let center = (s as f64 + 0.5) * shell_width;
        if members[s] == 0 || n1[s] == 0.0 || n2[s] == 0.0 {
            tracing::debug!(shell = center, voxels = members[s], "FCR shell skipped");
            curve.skipped.push(center);
            continue;
        }
        curve.shells.push(center);
        curve.values.push((cross[s] / (n1[s].sqrt() * n2[s].sqrt())).clamp(-1.0, 1.0));
    }
    Ok(curve)
}
