//! Monte Carlo bias/variance study and the phantom homology experiment.
//!
//! Monte Carlo trials are split into fixed-size chunks. Each chunk runs
//! sequentially with per-trial seeds, chunks run in parallel, and the chunk
//! statistics are merged in chunk order, so results do not depend on the
//! number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::autocorr::{autocorr_from_coeffs, rank_truncate, symmetry_mask, AutocorrelationSet, CoefficientSet};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Method};
use crate::extension::extend_many;
use crate::linalg::{conjugate_diag, frobenius, gaussian_matrix, haar, seeded_rng, Field, Mat, Scalar, C64};
use crate::sphbasis::truncation;
use crate::volume::{
    expand, fcr, masked_relative_error, render_mask, render_phantom, synthesize, EllipsoidPhantom, FcrCurve,
    PhantomPreset, VolumeGrid,
};

/// Trials per Monte Carlo work unit.
pub const CHUNK_TRIALS: usize = 256;

/// Streams reserved for the fixed matrices; trial `t` uses stream `t`.
const FACTOR_STREAM: u64 = u64::MAX;
const PERTURBATION_STREAM: u64 = u64::MAX - 1;

/// Running statistics of an error matrix `e = Â - A`.
#[derive(Clone, Debug)]
pub struct ErrorStats<T: Scalar> {
    pub trials: usize,
    pub mean: Mat<T>,
    /// `Σ ||e - mean||^2`.
    pub m2: f64,
    /// `Σ ||e||^2`.
    pub sum_sq: f64,
}

impl<T: Scalar> ErrorStats<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            trials: 0,
            mean: Mat::zeros(rows, cols),
            m2: 0.0,
            sum_sq: 0.0,
        }
    }

    pub fn push(&mut self, e: &Mat<T>) {
        self.trials += 1;
        let delta = e - &self.mean;
        self.mean += delta.unscale(self.trials as f64);
        let after = e - &self.mean;
        self.m2 += delta.iter().zip(after.iter()).map(|(a, b)| (a.conjugate() * *b).real()).sum::<f64>();
        self.sum_sq += e.norm_squared();
    }

    /// Pairwise combination of two disjoint sets of trials.
    pub fn merge(&mut self, other: &Self) {
        if other.trials == 0 {
            return;
        }
        let n = self.trials + other.trials;
        let delta = &other.mean - &self.mean;
        let weight = other.trials as f64 / n as f64;
        self.m2 += other.m2 + delta.norm_squared() * self.trials as f64 * weight;
        self.mean += delta.scale(weight);
        self.sum_sq += other.sum_sq;
        self.trials = n;
    }

    pub fn bias(&self) -> f64 {
        frobenius(&self.mean)
    }

    /// `E ||e - E e||^2`.
    pub fn variance(&self) -> f64 {
        self.m2 / self.trials as f64
    }

    pub fn rmse(&self) -> f64 {
        (self.sum_sq / self.trials as f64).sqrt()
    }

    /// Standard error of the mean error matrix, pooled over entries.
    pub fn stderr_bias(&self) -> f64 {
        (self.variance() / self.trials as f64).sqrt()
    }
}

/// `A = F V` with `V` Haar and `B = A - E`; returns statistics of `Â - A` per method.
pub fn monte_carlo<T: Scalar>(
    f: &Mat<T>,
    e: &Mat<T>,
    methods: &[Method],
    trials: usize,
    seed: u64,
) -> Result<Vec<ErrorStats<T>>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let (n, d) = (f.nrows(), f.ncols());
    if e.nrows() != n || e.ncols() != d {
        return Err(Error::InvalidInput("perturbation shape differs from F".into()));
    }
    let c = f * f.adjoint();
    let estimator = Estimator::new(&c, d)?;
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let partials: Vec<Vec<ErrorStats<T>>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stats: Vec<ErrorStats<T>> = methods.iter().map(|_| ErrorStats::new(n, d)).collect();
            let end = ((chunk + 1) * CHUNK_TRIALS).min(trials);
            for trial in chunk * CHUNK_TRIALS..end {
                let mut rng = seeded_rng(seed, trial as u64);
                let v: Mat<T> = haar(d, &mut rng);
                let a = f * v;
                let b = &a - e;
                for (s, est) in stats.iter_mut().zip(estimator.estimate_many(&b, methods)?) {
                    s.push(&(est - &a));
                }
            }
            Ok(stats)
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<ErrorStats<T>> = methods.iter().map(|_| ErrorStats::new(n, d)).collect();
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(total)
}

/// `F = U diag(sqrt(λ))` with a seeded Haar `U`.
pub fn fixed_factor<T: Scalar>(eigenvalues: &[f64], seed: u64) -> Result<Mat<T>> {
    if eigenvalues.is_empty() || eigenvalues.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("eigenvalues of C must be positive".into()));
    }
    let u: Mat<T> = haar(eigenvalues.len(), &mut seeded_rng(seed, FACTOR_STREAM));
    let roots: Vec<f64> = eigenvalues.iter().map(|x| x.sqrt()).collect();
    let mut f = u;
    for (j, r) in roots.iter().enumerate() {
        f.column_mut(j).scale_mut(*r);
    }
    Ok(f)
}

/// Seeded Gaussian direction scaled so that `||E|| = level ||F||`.
pub fn fixed_perturbation<T: Scalar>(f: &Mat<T>, level: f64, seed: u64) -> Mat<T> {
    let dir: Mat<T> = gaussian_matrix(f.nrows(), f.ncols(), &mut seeded_rng(seed, PERTURBATION_STREAM));
    let scale = level * frobenius(f) / frobenius(&dir);
    dir.scale(scale)
}

/// Log-spaced eigenvalues of `C` on `[1, 100]`, so `F` has condition number 10.
pub fn default_eigenvalues(dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    (0..dim)
        .map(|i| 100f64.powf(1.0 - i as f64 / (dim - 1) as f64))
        .collect()
}

/// Log-spaced perturbation levels on `[1e-3, 0.3]`.
pub fn default_levels() -> Vec<f64> {
    let count = 8;
    (0..count)
        .map(|i| 1e-3 * 300f64.powf(i as f64 / (count - 1) as f64))
        .collect()
}

pub fn default_methods() -> Vec<Method> {
    vec![
        Method::Ls,
        Method::Twicing,
        Method::At,
        Method::Family(1),
        Method::Family(5),
        Method::Family(10),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceConfig {
    pub dim: usize,
    pub trials: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub field: Field,
    pub methods: Vec<Method>,
    /// Eigenvalues of `C = F F*`; [`default_eigenvalues`] when absent.
    pub eigenvalues: Option<Vec<f64>>,
}

impl BiasVarianceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.trials == 0 {
            return Err(Error::InvalidArgument("dimension and trial count must be >= 1".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::InvalidArgument("perturbation levels must lie in (0, 1)".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no estimators selected".into()));
        }
        if let Some(e) = &self.eigenvalues {
            if e.len() != self.dim {
                return Err(Error::InvalidArgument(format!(
                    "{} eigenvalues for dimension {}",
                    e.len(),
                    self.dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceRow {
    pub method: Method,
    pub level: f64,
    pub bias: f64,
    pub rmse: f64,
    pub variance: f64,
    pub trials: usize,
    pub stderr_bias: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub rows: Vec<BiasVarianceRow>,
}

pub const CSV_HEADER: &str = "estimator,level,bias,rmse,variance,trials,stderr_bias";

impl BiasVarianceReport {
    pub fn row(&self, method: Method, level: f64) -> Option<&BiasVarianceRow> {
        self.rows.iter().find(|r| r.method == method && r.level == level)
    }

    /// 17 significant digits per real.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                r.method, r.level, r.bias, r.rmse, r.variance, r.trials, r.stderr_bias
            );
        }
        out
    }
}

pub fn bias_variance(cfg: &BiasVarianceConfig) -> Result<BiasVarianceReport> {
    cfg.validate()?;
    match cfg.field {
        Field::Real => bias_variance_in::<f64>(cfg),
        Field::Complex => bias_variance_in::<C64>(cfg),
    }
}

fn bias_variance_in<T: Scalar>(cfg: &BiasVarianceConfig) -> Result<BiasVarianceReport> {
    let eig = cfg.eigenvalues.clone().unwrap_or_else(|| default_eigenvalues(cfg.dim));
    let f: Mat<T> = fixed_factor(&eig, cfg.seed)?;
    let mut report = BiasVarianceReport::default();
    for &level in &cfg.levels {
        let e = fixed_perturbation(&f, level, cfg.seed);
        let stats = monte_carlo(&f, &e, &cfg.methods, cfg.trials, cfg.seed)?;
        for (&method, s) in cfg.methods.iter().zip(&stats) {
            report.rows.push(BiasVarianceRow {
                method,
                level,
                bias: s.bias(),
                rmse: s.rmse(),
                variance: s.variance(),
                trials: s.trials,
                stderr_bias: s.stderr_bias(),
            });
        }
    }
    Ok(report)
}

/// Bias of least squares predicted to first order: `U T U* (A - B)`.
pub fn predicted_ls_bias<T: Scalar>(
    f: &Mat<T>,
    e: &Mat<T>,
    t_of: impl Fn(&[f64], Field) -> Vec<f64>,
) -> Result<Mat<T>> {
    let c = f * f.adjoint();
    let eig = crate::linalg::eigh_psd(&c)?;
    let t = t_of(&eig.lambda, T::FIELD);
    Ok(conjugate_diag(&eig.u, &t) * e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub preset: String,
    pub n: usize,
    pub c: f64,
    pub support: f64,
    pub methods: Vec<Method>,
    pub sym_order: usize,
    /// Growth of the subunit's semi-axes for the error mask, in voxels.
    pub mask_margin: f64,
    /// FCR shell width in cycles per voxel; `1/n` when absent.
    pub shell_width: Option<f64>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            preset: "mickey".into(),
            n: 32,
            c: 0.5,
            support: 14.0,
            methods: vec![Method::Ls, Method::Twicing, Method::At],
            sym_order: 1,
            mask_margin: 1.0,
            shell_width: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub subunit_error: f64,
    pub coefficient_error: f64,
    pub fcr: FcrCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSummary {
    pub config: PhantomConfig,
    pub max_degree: usize,
    pub radial_counts: Vec<usize>,
    pub homolog_subunit_error: f64,
    pub homolog_coefficient_error: f64,
    pub homolog_fcr: FcrCurve,
    pub methods: Vec<MethodSummary>,
    /// Largest imaginary residual among the synthesized volumes.
    pub max_imaginary_residual: f64,
}

impl PhantomSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

pub struct PhantomRun {
    /// Truth as represented in the basis (synthesized from its coefficients).
    pub truth: VolumeGrid,
    pub homolog: VolumeGrid,
    pub rendered_truth: VolumeGrid,
    pub mask: VolumeGrid,
    pub truth_coeffs: CoefficientSet,
    pub homolog_coeffs: CoefficientSet,
    pub acorr: AutocorrelationSet,
    pub estimates: Vec<CoefficientSet>,
    pub volumes: Vec<VolumeGrid>,
    pub summary: PhantomSummary,
}

/// Clean-autocorrelation phantom experiment: `C_l` comes straight from the
/// truth's coefficients, the homolog lacks the subunit.
pub fn phantom_experiment(cfg: &PhantomConfig) -> Result<PhantomRun> {
    let preset = PhantomPreset::named(&cfg.preset, cfg.support)?;
    phantom_experiment_with(cfg, &preset.truth(), &preset.homolog, &preset.subunit)
}

pub fn phantom_experiment_with(
    cfg: &PhantomConfig,
    truth: &EllipsoidPhantom,
    homolog: &EllipsoidPhantom,
    subunit: &EllipsoidPhantom,
) -> Result<PhantomRun> {
    if cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("no estimators selected".into()));
    }
    if cfg.sym_order == 0 {
        return Err(Error::InvalidArgument("symmetry order must be >= 1".into()));
    }
    let basis = truncation(cfg.c, cfg.support)?;
    if basis.max_degree < 2 {
        return Err(Error::InvalidArgument(format!(
            "basis has L = {}; the experiment needs L >= 2",
            basis.max_degree
        )));
    }
    let rendered_truth = render_phantom(truth, cfg.n, 1.0)?;
    let rendered_homolog = render_phantom(homolog, cfg.n, 1.0)?;
    let dilated = EllipsoidPhantom {
        ellipsoids: subunit.ellipsoids.iter().map(|e| e.dilated(cfg.mask_margin)).collect(),
    };
    let mask = render_mask(&dilated, cfg.n, 1.0)?;

    let mut a = expand(&rendered_truth, &basis)?;
    let mut b = expand(&rendered_homolog, &basis)?;
    if cfg.sym_order > 1 {
        a = symmetry_mask(&a, cfg.sym_order)?;
        b = symmetry_mask(&b, cfg.sym_order)?;
    }
    let acorr = rank_truncate(&autocorr_from_coeffs(&a))?;
    let estimates = extend_many(&b, &acorr, &cfg.methods)?;

    let shell = cfg.shell_width.unwrap_or(1.0 / cfg.n as f64);
    let truth_syn = synthesize(&a, cfg.n, 1.0)?;
    let homolog_syn = synthesize(&b, cfg.n, 1.0)?;
    let mut max_imag = truth_syn.imaginary_residual.max(homolog_syn.imaginary_residual);
    let truth_vol = truth_syn.volume;
    let homolog_vol = homolog_syn.volume;

    let a_norm = a.norm();
    let mut volumes = Vec::with_capacity(estimates.len());
    let mut methods = Vec::with_capacity(estimates.len());
    for (&method, est) in cfg.methods.iter().zip(&estimates) {
        let syn = synthesize(est, cfg.n, 1.0)?;
        max_imag = max_imag.max(syn.imaginary_residual);
        methods.push(MethodSummary {
            method,
            subunit_error: masked_relative_error(&syn.volume, &truth_vol, &mask)?,
            coefficient_error: est.sub(&a)?.norm() / a_norm,
            fcr: fcr(&syn.volume, &truth_vol, shell)?,
        });
        volumes.push(syn.volume);
    }
    let summary = PhantomSummary {
        config: cfg.clone(),
        max_degree: basis.max_degree,
        radial_counts: basis.radial_counts.clone(),
        homolog_subunit_error: masked_relative_error(&homolog_vol, &truth_vol, &mask)?,
        homolog_coefficient_error: b.sub(&a)?.norm() / a_norm,
        homolog_fcr: fcr(&homolog_vol, &truth_vol, shell)?,
        methods,
        max_imaginary_residual: max_imag,
    };
    Ok(PhantomRun {
        truth: truth_vol,
        homolog: homolog_vol,
        rendered_truth,
        mask,
        truth_coeffs: a,
        homolog_coeffs: b,
        acorr,
        estimates,
        volumes,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::t_diagonal;

    #[test]
    fn merge_matches_sequential_push() {
        let mut rng = seeded_rng(9, 0);
        let samples: Vec<Mat<f64>> = (0..37).map(|_| gaussian_matrix(3, 2, &mut rng)).collect();
        let mut seq = ErrorStats::new(3, 2);
        samples.iter().for_each(|s| seq.push(s));
        let mut left = ErrorStats::new(3, 2);
        let mut right = ErrorStats::new(3, 2);
        samples[..20].iter().for_each(|s| left.push(s));
        samples[20..].iter().for_each(|s| right.push(s));
        left.merge(&right);
        assert_eq!(left.trials, 37);
        assert!((&left.mean - &seq.mean).norm() < 1e-14);
        assert!((left.m2 - seq.m2).abs() < 1e-12 * seq.m2);
        let identity = seq.rmse().powi(2) - seq.bias().powi(2) - seq.variance();
        assert!(identity.abs() < 1e-12);
    }

    #[test]
    fn report_rows_decompose_mse() {
        let cfg = BiasVarianceConfig {
            dim: 3,
            trials: 600,
            levels: vec![0.05, 0.2],
            seed: 4,
            field: Field::Complex,
            methods: default_methods(),
            eigenvalues: None,
        };
        let report = bias_variance(&cfg).unwrap();
        assert_eq!(report.rows.len(), 12);
        for r in &report.rows {
            assert!((r.rmse.powi(2) - r.bias.powi(2) - r.variance).abs() <= 1e-10);
        }
        let csv = report.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 13);
    }

    #[test]
    fn tiny_perturbation_gives_tiny_bias() {
        let cfg = BiasVarianceConfig {
            dim: 4,
            trials: 300,
            levels: vec![1e-9],
            seed: 1,
            field: Field::Real,
            methods: default_methods(),
            eigenvalues: None,
        };
        for r in bias_variance(&cfg).unwrap().rows {
            assert!(r.bias <= 1e-8, "{} bias {}", r.method, r.bias);
        }
        let mut bad = cfg.clone();
        bad.levels = vec![0.0];
        assert!(bias_variance(&bad).is_err());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let f: Mat<f64> = fixed_factor(&[4.0, 2.0, 1.0], 3).unwrap();
        let e = fixed_perturbation(&f, 0.05, 3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo(&f, &e, &[Method::Ls, Method::At], 2000, 7).unwrap())
        };
        let (one, many) = (run(1), run(4));
        for (x, y) in one.iter().zip(&many) {
            assert_eq!(x.mean, y.mean);
            assert_eq!(x.m2.to_bits(), y.m2.to_bits());
        }
    }

    #[test]
    fn predicted_bias_uses_eigenvalue_ratios() {
        let f: Mat<f64> = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        let e = Mat::identity(2, 2);
        let p = predicted_ls_bias(&f, &e, t_diagonal).unwrap();
        assert!((p[(0, 0)] - 0.4).abs() < 1e-14 && (p[(1, 1)] - 0.1).abs() < 1e-14);
    }
}
