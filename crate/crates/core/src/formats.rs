//! On-disk formats.
//!
//! - `.coef` / `.acorr`: one JSON document carrying the basis and the
//!   per-degree matrices as row-major decimal arrays. Floats are written in
//!   shortest round-trip form, so write then read is exact.
//! - `.covslice`: JSON with the two quadrature grids followed by the values.
//! - `.vol`: raw little-endian `f32`, `x` fastest and `z` slowest, with a
//!   `.vol.meta` JSON sidecar holding `n` and `voxel_size`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autocorr::{AutocorrelationSet, CoefficientSet, CovarianceSlice};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::sphbasis::BasisSpec;
use crate::volume::VolumeGrid;

const COEF_TAG: &str = "orthext-coefficients";
const ACORR_TAG: &str = "orthext-autocorrelation";
const COVSLICE_TAG: &str = "orthext-covariance-slice";
const VOLUME_TAG: &str = "orthext-volume";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

impl MatrixDoc {
    fn from_mat(m: &Mat<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    fn into_mat(self, what: &str) -> Result<Mat<f64>> {
        if self.data.len() != self.rows || self.data.iter().any(|r| r.len() != self.cols) {
            return Err(Error::Format(format!("{what}: rows do not match the declared {}x{} shape", self.rows, self.cols)));
        }
        Ok(Mat::from_fn(self.rows, self.cols, |i, j| self.data[i][j]))
    }
}

#[derive(Serialize, Deserialize)]
struct CoefDoc {
    format: String,
    version: u32,
    basis: BasisSpec,
    sym_order: usize,
    blocks: Vec<MatrixDoc>,
}

#[derive(Serialize, Deserialize)]
struct AcorrDoc {
    format: String,
    version: u32,
    basis: BasisSpec,
    rank_caps: Vec<usize>,
    blocks: Vec<MatrixDoc>,
}

#[derive(Serialize, Deserialize)]
struct CovsliceDoc {
    format: String,
    version: u32,
    #[serde(flatten)]
    slice: CovarianceSlice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub voxel_size: f64,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Checks the document kind before the body is decoded, so a wrong file
/// type is reported as such rather than as a missing field.
fn parse<T: serde::de::DeserializeOwned>(s: &str, expected: &str) -> Result<T> {
    let h: Header = serde_json::from_str(s)?;
    if h.format != expected {
        return Err(Error::Format(format!("expected a '{expected}' document, found '{}'", h.format)));
    }
    if h.version != VERSION {
        return Err(Error::Format(format!("unsupported {expected} version {}", h.version)));
    }
    Ok(serde_json::from_str(s)?)
}

fn blocks_from_docs(docs: Vec<MatrixDoc>) -> Result<Vec<Mat<f64>>> {
    docs.into_iter()
        .enumerate()
        .map(|(l, d)| d.into_mat(&format!("block {l}")))
        .collect()
}

fn to_text<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn coefficients_to_string(set: &CoefficientSet) -> Result<String> {
    set.validate()?;
    to_text(&CoefDoc {
        format: COEF_TAG.into(),
        version: VERSION,
        basis: set.basis.clone(),
        sym_order: set.sym_order,
        blocks: set.blocks.iter().map(MatrixDoc::from_mat).collect(),
    })
}

pub fn coefficients_from_str(s: &str) -> Result<CoefficientSet> {
    let doc: CoefDoc = parse(s, COEF_TAG)?;
    doc.basis.validate()?;
    CoefficientSet::new(doc.basis, doc.sym_order, blocks_from_docs(doc.blocks)?)
}

pub fn autocorrelation_to_string(set: &AutocorrelationSet) -> Result<String> {
    set.validate()?;
    to_text(&AcorrDoc {
        format: ACORR_TAG.into(),
        version: VERSION,
        basis: set.basis.clone(),
        rank_caps: set.rank_caps.clone(),
        blocks: set.blocks.iter().map(MatrixDoc::from_mat).collect(),
    })
}

pub fn autocorrelation_from_str(s: &str) -> Result<AutocorrelationSet> {
    let doc: AcorrDoc = parse(s, ACORR_TAG)?;
    doc.basis.validate()?;
    AutocorrelationSet::new(doc.basis, doc.rank_caps, blocks_from_docs(doc.blocks)?)
}

pub fn covslice_to_string(slice: &CovarianceSlice) -> Result<String> {
    slice.validate()?;
    to_text(&CovsliceDoc {
        format: COVSLICE_TAG.into(),
        version: VERSION,
        slice: slice.clone(),
    })
}

pub fn covslice_from_str(s: &str) -> Result<CovarianceSlice> {
    let doc: CovsliceDoc = parse(s, COVSLICE_TAG)?;
    doc.slice.validate()?;
    Ok(doc.slice)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(fs::write(path, text)?)
}

pub fn write_coefficients(path: impl AsRef<Path>, set: &CoefficientSet) -> Result<()> {
    write_text(path.as_ref(), &coefficients_to_string(set)?)
}

pub fn read_coefficients(path: impl AsRef<Path>) -> Result<CoefficientSet> {
    coefficients_from_str(&fs::read_to_string(path)?)
}

pub fn write_autocorrelation(path: impl AsRef<Path>, set: &AutocorrelationSet) -> Result<()> {
    write_text(path.as_ref(), &autocorrelation_to_string(set)?)
}

pub fn read_autocorrelation(path: impl AsRef<Path>) -> Result<AutocorrelationSet> {
    autocorrelation_from_str(&fs::read_to_string(path)?)
}

pub fn write_covslice(path: impl AsRef<Path>, slice: &CovarianceSlice) -> Result<()> {
    write_text(path.as_ref(), &covslice_to_string(slice)?)
}

pub fn read_covslice(path: impl AsRef<Path>) -> Result<CovarianceSlice> {
    covslice_from_str(&fs::read_to_string(path)?)
}

/// `<path>.meta`, the sidecar of a `.vol` file.
pub fn volume_meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Values are stored as `f32`; reading back gives the `f32`-rounded grid.
pub fn write_volume(path: impl AsRef<Path>, v: &VolumeGrid) -> Result<()> {
    v.validate()?;
    let path = path.as_ref();
    let bytes: Vec<u8> = v.data.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
    fs::write(path, bytes)?;
    let meta = VolumeMeta {
        format: VOLUME_TAG.into(),
        version: VERSION,
        n: v.n,
        voxel_size: v.voxel_size,
    };
    write_text(&volume_meta_path(path), &to_text(&meta)?)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VolumeGrid> {
    let path = path.as_ref();
    let meta: VolumeMeta = parse(&fs::read_to_string(volume_meta_path(path))?, VOLUME_TAG)?;
    let bytes = fs::read(path)?;
    let expected = meta.n.checked_pow(3).and_then(|c| c.checked_mul(4));
    if expected != Some(bytes.len()) {
        return Err(Error::Format(format!(
            "{}: {} bytes, an {}^3 float32 grid needs {:?}",
            path.display(),
            bytes.len(),
            meta.n,
            expected
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let v = VolumeGrid {
        n: meta.n,
        voxel_size: meta.voxel_size,
        data,
    };
    v.validate()?;
    Ok(v)
}
