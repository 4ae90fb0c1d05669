//! Orthogonal extension: per-degree estimation of `A_l` from a homolog `B_l`
//! and the autocorrelation `C_l`.
//!
//! Under `C_n` symmetry only the retained orders enter, so each degree solves
//! an `S_l x D_eff` problem and the result is re-embedded with zeros in the
//! dropped columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autocorr::{retained_columns, AutocorrelationSet, CoefficientSet};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Method};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `S_l = D_eff`.
    Square,
    /// `S_l > D_eff`.
    Tall,
    /// `S_l < D_eff`.
    Wide,
}

impl Branch {
    pub fn select(n: usize, d: usize) -> Self {
        match n.cmp(&d) {
            std::cmp::Ordering::Equal => Branch::Square,
            std::cmp::Ordering::Greater => Branch::Tall,
            std::cmp::Ordering::Less => Branch::Wide,
        }
    }
}

/// `(S_l, D_eff)` and the branch for every degree.
pub fn branches(homolog: &CoefficientSet) -> Vec<(usize, usize, Branch)> {
    (0..=homolog.max_degree())
        .map(|l| {
            let n = homolog.basis.s(l);
            let d = retained_columns(l, homolog.sym_order).len();
            (n, d, Branch::select(n, d))
        })
        .collect()
}

fn check_inputs(homolog: &CoefficientSet, acorr: &AutocorrelationSet) -> Result<()> {
    homolog.validate()?;
    if homolog.basis != acorr.basis {
        return Err(Error::Incompatible(
            "homolog and autocorrelation archives use different bases".into(),
        ));
    }
    Ok(())
}

/// Estimates every `A_l` with `method`.
pub fn extend(homolog: &CoefficientSet, acorr: &AutocorrelationSet, method: Method) -> Result<CoefficientSet> {
    Ok(extend_many(homolog, acorr, &[method])?.remove(0))
}

/// Several methods at once; the least-squares solve is shared per degree.
pub fn extend_many(
    homolog: &CoefficientSet,
    acorr: &AutocorrelationSet,
    methods: &[Method],
) -> Result<Vec<CoefficientSet>> {
    check_inputs(homolog, acorr)?;
    let per_l: Vec<Vec<Mat<f64>>> = (0..=homolog.max_degree())
        .into_par_iter()
        .map(|l| extend_degree(homolog, acorr, l, methods))
        .collect::<Result<_>>()?;
    Ok((0..methods.len())
        .map(|i| CoefficientSet {
            basis: homolog.basis.clone(),
            sym_order: homolog.sym_order,
            blocks: per_l.iter().map(|blocks| blocks[i].clone()).collect(),
        })
        .collect())
}

fn extend_degree(
    homolog: &CoefficientSet,
    acorr: &AutocorrelationSet,
    l: usize,
    methods: &[Method],
) -> Result<Vec<Mat<f64>>> {
    let cols = retained_columns(l, homolog.sym_order);
    let full = &homolog.blocks[l];
    let b = Mat::from_fn(full.nrows(), cols.len(), |i, j| full[(i, cols[j])]);
    let estimator = Estimator::new(&acorr.blocks[l], cols.len())?;
    let estimates = estimator.estimate_many(&b, methods).map_err(|e| match e {
        Error::RankDeficientHomolog { rank, needed } => Error::InvalidInput(format!(
            "degree {l}: homolog block has rank {rank}, the wide branch needs {needed}"
        )),
        other => other,
    })?;
    Ok(estimates
        .into_iter()
        .map(|est| {
            let mut out = Mat::zeros(full.nrows(), full.ncols());
            for (j, &c) in cols.iter().enumerate() {
                out.set_column(c, &est.column(j));
            }
            out
        })
        .collect())
}
