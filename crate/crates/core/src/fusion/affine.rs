//! Affine DOA-to-room mapping `r = r0 + B d`, its closed-form least-squares
//! calibration, the active-subset variant for missing arrays, and the
//! reference-point forms.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use super::linalg::{numerical_rank, pinv, sorted_svd, PINV_RTOL};
use super::pca::PcaModel;
use super::types::{ActiveSet, CalibrationSet, ConcatenatedDoa};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub r0: DVector<f64>,
    /// `N x 3|active|`: columns for the active arrays only, in array order.
    pub b: DMatrix<f64>,
    pub active: ActiveSet,
    pub array_count: usize,
}

impl AffineMap {
    pub fn room_dim(&self) -> usize {
        self.r0.len()
    }

    /// `B` widened to `N x 3M` with zero columns for arrays outside the
    /// active set.
    pub fn b_full(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.room_dim(), 3 * self.array_count);
        for (k, m) in self.active.indices().enumerate() {
            out.columns_mut(3 * m, 3)
                .copy_from(&self.b.columns(3 * k, 3));
        }
        out
    }

    fn check_covers(&self, d: &ConcatenatedDoa) -> Result<()> {
        if d.array_count() != self.array_count {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} arrays, map expects {}",
                d.array_count(),
                self.array_count
            )));
        }
        if !d.active_set().is_superset_of(self.active) {
            return Err(Error::ActiveSetMismatch {
                required: self.active,
                available: d.active_set(),
            });
        }
        Ok(())
    }
}

/// Diagnostics from [`fit_affine`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub active: ActiveSet,
    pub columns_used: usize,
    /// Columns lacking one of the requested arrays.
    pub columns_skipped: usize,
    pub distinct_points: usize,
    pub room_dim: usize,
    /// Affine dimension spanned by the distinct calibration locations.
    pub location_rank: usize,
    /// Retained rank of `(D - d_mean i^T) D^T` and its size.
    pub doa_rank: usize,
    pub doa_dim: usize,
    pub rms_residual: f64,
    /// `||E i_L|| / (||R||_F sqrt(L))`
    pub offset_gradient: f64,
    /// `||E D^T||_F / (||R||_F ||D||_F)`
    pub coefficient_gradient: f64,
}

impl FitReport {
    /// The calibration locations span fewer than `N` dimensions, so mapped
    /// outputs are confined to a line (or plane in 3-D).
    pub fn is_degenerate(&self) -> bool {
        self.location_rank < self.room_dim
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.doa_rank < self.doa_dim
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.location_rank == 1 {
            w.push(format!(
                "calibration points are collinear: all outputs map to a line (need {} points spanning the room)",
                self.room_dim + 1
            ));
        } else if self.is_degenerate() {
            w.push(format!(
                "calibration points span {} of {} room dimensions",
                self.location_rank, self.room_dim
            ));
        }
        if self.is_rank_deficient() {
            w.push(format!(
                "DOA scatter matrix rank {} < {}; pseudo-inverse used",
                self.doa_rank, self.doa_dim
            ));
        }
        if self.columns_skipped > 0 {
            w.push(format!(
                "{} calibration columns skipped (arrays inactive)",
                self.columns_skipped
            ));
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    pub map: AffineMap,
    pub report: FitReport,
}

/// Least-squares affine calibration restricted to the arrays in `active`.
///
/// `B = (R - r_mean i^T) D^T [(D - d_mean i^T) D^T]^+` and
/// `r0 = r_mean - B d_mean`, using only rows of the active arrays and
/// columns in which all of them are active.
pub fn fit_affine(cal: &CalibrationSet, active: ActiveSet) -> Result<AffineFit> {
    if active.is_empty() {
        return Err(Error::NoObservation);
    }
    let m = cal.array_count();
    if active.indices().any(|i| i >= m) {
        return Err(Error::invalid(format!(
            "active set {active} exceeds {m} arrays"
        )));
    }

    let cols: Vec<usize> = (0..cal.len())
        .filter(|&l| cal.masks()[l].is_superset_of(active))
        .collect();
    let rows: Vec<usize> = active.indices().flat_map(|a| 3 * a..3 * a + 3).collect();

    let mut locations: Vec<&DVector<f64>> = Vec::new();
    for seg in cal.segments() {
        if seg.columns().any(|l| cal.masks()[l].is_superset_of(active))
            && !locations.iter().any(|r| **r == seg.location)
        {
            locations.push(&seg.location);
        }
    }
    if locations.len() < 2 {
        return Err(Error::invalid(format!(
            "affine calibration needs at least 2 distinct calibration points, found {} (N+1 = {} spanning the room are sufficient)",
            locations.len(),
            cal.room_dim() + 1
        )));
    }

    let n = cal.room_dim();
    let l = cols.len();
    let d = DMatrix::from_fn(rows.len(), l, |i, j| cal.doa_matrix()[(rows[i], cols[j])]);
    let r = DMatrix::from_fn(n, l, |i, j| cal.location_matrix()[(i, cols[j])]);

    let d_mean = d.column_mean();
    let r_mean = r.column_mean();
    let mut d_c = d.clone();
    for mut c in d_c.column_iter_mut() {
        c -= &d_mean;
    }
    let mut r_c = r.clone();
    for mut c in r_c.column_iter_mut() {
        c -= &r_mean;
    }

    let d_t = d.transpose();
    let scatter = &d_c * &d_t;
    let (scatter_pinv, doa_rank) = pinv(&scatter, PINV_RTOL);
    let b = &r_c * &d_t * scatter_pinv;
    let r0 = &r_mean - &b * &d_mean;

    let mut e = r.clone() - &b * &d;
    for mut c in e.column_iter_mut() {
        c -= &r0;
    }
    let r_norm = r.norm().max(f64::MIN_POSITIVE);
    let d_norm = d.norm().max(f64::MIN_POSITIVE);
    let ones = DVector::from_element(l, 1.0);

    let mut loc_c = DMatrix::from_columns(&locations.iter().map(|r| (*r).clone()).collect::<Vec<_>>());
    let loc_mean = loc_c.column_mean();
    for mut c in loc_c.column_iter_mut() {
        c -= &loc_mean;
    }
    let loc_scale = locations.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let location_rank = if loc_c.norm() <= 1e-12 * loc_scale.max(1.0) {
        0
    } else {
        numerical_rank(&sorted_svd(&loc_c).s, 1e-9)
    };

    let report = FitReport {
        active,
        columns_used: l,
        columns_skipped: cal.len() - l,
        distinct_points: locations.len(),
        room_dim: n,
        location_rank,
        doa_rank,
        doa_dim: rows.len(),
        rms_residual: (e.norm_squared() / l as f64).sqrt(),
        offset_gradient: (&e * &ones).norm() / (r_norm * (l as f64).sqrt()),
        coefficient_gradient: (&e * &d_t).norm() / (r_norm * d_norm),
    };
    Ok(AffineFit {
        map: AffineMap {
            r0,
            b,
            active,
            array_count: m,
        },
        report,
    })
}

/// `r = r0 + B d` over the map's active arrays.
pub fn map_affine(map: &AffineMap, d: &ConcatenatedDoa) -> Result<DVector<f64>> {
    map.check_covers(d)?;
    Ok(&map.r0 + &map.b * d.restricted(map.active))
}

/// Offset used when applying a subset map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetPolicy {
    /// Use the `r0` fitted together with the subset `B`.
    #[default]
    Refit,
    /// Use the full-set `r0` with the subset `B`.
    ReuseFull,
}

/// Maps observations with missing arrays by fitting (and caching) an affine
/// map for each distinct active set.
///
/// The cache is safe for concurrent use. Two threads may fit the same key at
/// once; the fits are deterministic, and the first one stored is kept.
#[derive(Debug)]
pub struct MissingArrayMapper {
    cal: Arc<CalibrationSet>,
    policy: OffsetPolicy,
    cache: RwLock<HashMap<ActiveSet, Arc<AffineFit>>>,
}

impl MissingArrayMapper {
    pub fn new(cal: Arc<CalibrationSet>, policy: OffsetPolicy) -> Result<Self> {
        if !cal.is_fully_active() {
            return Err(Error::invalid(
                "missing-array mapping needs a fully active calibration set",
            ));
        }
        Ok(MissingArrayMapper {
            cal,
            policy,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn calibration(&self) -> &CalibrationSet {
        &self.cal
    }

    pub fn cached_sets(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// The fit for exactly `active`, from cache when present.
    pub fn fit_for(&self, active: ActiveSet) -> Result<Arc<AffineFit>> {
        if let Some(f) = self.cache.read().expect("cache lock").get(&active) {
            return Ok(Arc::clone(f));
        }
        let fit = Arc::new(fit_affine(&self.cal, active)?);
        let mut cache = self.cache.write().expect("cache lock");
        Ok(Arc::clone(cache.entry(active).or_insert(fit)))
    }

    /// `r = r0 + B(I_a) d_a` for the observation's own active set.
    pub fn map(&self, d: &ConcatenatedDoa) -> Result<DVector<f64>> {
        let active = d.active_set();
        if active.is_empty() {
            return Err(Error::NoObservation);
        }
        let fit = self.fit_for(active)?;
        let r = map_affine(&fit.map, d)?;
        match self.policy {
            OffsetPolicy::Refit => Ok(r),
            OffsetPolicy::ReuseFull => {
                let full = self.fit_for(ActiveSet::all(self.cal.array_count()))?;
                Ok(r - &fit.map.r0 + &full.map.r0)
            }
        }
    }
}

/// Stand-alone form of [`MissingArrayMapper::map`].
pub fn map_with_missing(mapper: &MissingArrayMapper, d: &ConcatenatedDoa) -> Result<DVector<f64>> {
    mapper.map(d)
}

/// A known DOA/location pair used as the origin of a local mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePair {
    pub d_ref: ConcatenatedDoa,
    pub r_ref: DVector<f64>,
    pub a_ref: Option<DVector<f64>>,
}

impl ReferencePair {
    pub fn new(d_ref: ConcatenatedDoa, r_ref: DVector<f64>) -> Self {
        ReferencePair {
            d_ref,
            r_ref,
            a_ref: None,
        }
    }

    /// Attaches PCA coefficients `a_ref = U_J^T d_ref`.
    pub fn with_pca(mut self, model: &PcaModel) -> Result<Self> {
        if model.dim() != self.d_ref.values().len() {
            return Err(Error::DimensionMismatch(
                "reference DOA length does not match PCA model".into(),
            ));
        }
        self.a_ref = Some(model.u.tr_mul(&self.d_ref.as_dvector()));
        Ok(self)
    }

    /// Reference at a calibration point: its mean DOA and location.
    pub fn from_calibration(cal: &CalibrationSet, point_id: u32) -> Result<Self> {
        let seg = cal
            .segment(point_id)
            .ok_or_else(|| Error::invalid(format!("no calibration point {point_id}")))?;
        Ok(ReferencePair::new(cal.mean_doa(point_id)?, seg.location.clone()))
    }
}

/// `r_n = r_ref + B (d_n - d_ref)`.
pub fn map_from_reference(
    map: &AffineMap,
    reference: &ReferencePair,
    d_n: &ConcatenatedDoa,
) -> Result<DVector<f64>> {
    map.check_covers(&reference.d_ref)?;
    map.check_covers(d_n)?;
    let delta = d_n.restricted(map.active) - reference.d_ref.restricted(map.active);
    Ok(&reference.r_ref + &map.b * delta)
}

/// `C = B U_J`, the PCA-to-room linear map.
pub fn pca_room_matrix(map: &AffineMap, model: &PcaModel) -> Result<DMatrix<f64>> {
    if model.dim() != 3 * map.array_count {
        return Err(Error::DimensionMismatch(format!(
            "PCA model has {} rows, map covers {} arrays",
            model.dim(),
            map.array_count
        )));
    }
    Ok(map.b_full() * &model.u)
}

/// `r_n = r_ref + C (a_n - a_ref)` with `C = B U_J`.
pub fn pca_to_room(
    map: &AffineMap,
    model: &PcaModel,
    reference: &ReferencePair,
    a_n: &DVector<f64>,
) -> Result<DVector<f64>> {
    let a_ref = reference
        .a_ref
        .as_ref()
        .ok_or_else(|| Error::invalid("reference has no PCA coefficients"))?;
    if a_n.len() != model.components() || a_ref.len() != model.components() {
        return Err(Error::DimensionMismatch(format!(
            "PCA coefficients have length {}, model keeps {}",
            a_n.len(),
            model.components()
        )));
    }
    let c = pca_room_matrix(map, model)?;
    Ok(&reference.r_ref + c * (a_n - a_ref))
}
