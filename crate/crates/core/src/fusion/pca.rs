//! PCA localization: coefficients of an observation on the leading left
//! singular vectors of the calibration DOA matrix.
//!
//! `D` is decomposed as-is, without mean-centering, so the first singular
//! vector largely encodes the mean DOA.

use nalgebra::{DMatrix, DVector};

use super::linalg::{numerical_rank, sorted_svd, PINV_RTOL};
use super::types::{CalibrationSet, ConcatenatedDoa};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `3M x J`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// All `min(3M, L)` singular values, descending.
    pub singular_values: Vec<f64>,
}

impl PcaModel {
    pub fn components(&self) -> usize {
        self.u.ncols()
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values, PINV_RTOL)
    }

    /// Share of `sum(sigma^2)` carried by the first `j` singular values.
    pub fn energy_share(&self, j: usize) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let top: f64 = self.singular_values.iter().take(j).map(|s| s * s).sum();
        if total == 0.0 {
            0.0
        } else {
            top / total
        }
    }
}

/// Fits a `j`-component PCA model on a fully active calibration matrix.
pub fn fit_pca(cal: &CalibrationSet, j: usize) -> Result<PcaModel> {
    if !cal.is_fully_active() {
        return Err(Error::invalid(
            "PCA calibration requires every array active in every column",
        ));
    }
    fit_pca_matrix(cal.doa_matrix(), j)
}

/// [`fit_pca`] on a raw `3M x L` matrix.
pub fn fit_pca_matrix(d: &DMatrix<f64>, j: usize) -> Result<PcaModel> {
    if j == 0 {
        return Err(Error::invalid("need at least one PCA component"));
    }
    if d.ncols() < j {
        return Err(Error::invalid(format!(
            "{} observations cannot support {j} components",
            d.ncols()
        )));
    }
    let svd = sorted_svd(d);
    let rank = numerical_rank(&svd.s, PINV_RTOL);
    if j > rank {
        return Err(Error::invalid(format!(
            "requested {j} components but the DOA matrix has rank {rank}"
        )));
    }
    let mut u = svd.u.columns(0, j).into_owned();
    for mut col in u.column_iter_mut() {
        let lead = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if lead < 0.0 {
            col.neg_mut();
        }
    }
    Ok(PcaModel {
        u,
        singular_values: svd.s,
    })
}

/// Coefficients of an observation on the retained singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub coeffs: DVector<f64>,
    /// Set when some arrays were inactive and their zero placeholders were
    /// projected as-is.
    pub partial: bool,
}

/// `a_j = d^T u_j`.
pub fn project_pca(model: &PcaModel, d: &ConcatenatedDoa) -> Result<PcaProjection> {
    if d.values().len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observation has {} components, model expects {}",
            d.values().len(),
            model.dim()
        )));
    }
    Ok(PcaProjection {
        coeffs: model.u.tr_mul(&d.as_dvector()),
        partial: d.mask().iter().any(|m| !m),
    })
}

/// Euclidean distances in PCA space from `a` to each labeled reference.
pub fn pca_proximity(a: &DVector<f64>, references: &[(u32, DVector<f64>)]) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = references
        .iter()
        .map(|(id, r)| (*id, (a - r).norm()))
        .collect();
    out.sort_by(|x, y| x.1.total_cmp(&y.1));
    out
}
