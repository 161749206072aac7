use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sphere_grid::DoaVector;

/// Unit-norm tolerance for active subvectors of a concatenated observation.
pub const SUBVECTOR_TOLERANCE: f64 = 1e-6;

/// Largest number of arrays an [`ActiveSet`] can describe.
pub const MAX_ARRAYS: usize = 32;

/// Bitmask of arrays that produced a DOA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ActiveSet(u32);

impl ActiveSet {
    pub const EMPTY: ActiveSet = ActiveSet(0);

    pub fn from_bits(bits: u32) -> Self {
        ActiveSet(bits)
    }

    pub fn all(count: usize) -> Self {
        assert!(count <= MAX_ARRAYS);
        if count == MAX_ARRAYS {
            ActiveSet(u32::MAX)
        } else {
            ActiveSet((1u32 << count) - 1)
        }
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        assert!(mask.len() <= MAX_ARRAYS);
        ActiveSet(
            mask.iter()
                .enumerate()
                .filter(|(_, &a)| a)
                .fold(0, |acc, (i, _)| acc | (1 << i)),
        )
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(idx: I) -> Self {
        ActiveSet(idx.into_iter().fold(0, |acc, i| {
            assert!(i < MAX_ARRAYS);
            acc | (1 << i)
        }))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, array: usize) -> bool {
        array < MAX_ARRAYS && self.0 & (1 << array) != 0
    }

    pub fn is_superset_of(self, other: ActiveSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn without(self, array: usize) -> Self {
        ActiveSet(self.0 & !(1 << array))
    }

    /// Active array indices in ascending order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..MAX_ARRAYS).filter(move |&i| self.contains(i))
    }
}

impl fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.indices().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// The 3M-element fused observation for one time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatenatedDoa {
    values: Vec<f64>,
    mask: Vec<bool>,
    pub timestamp_ms: i64,
}

impl ConcatenatedDoa {
    /// Builds an observation from raw components, checking the subvector
    /// invariants (unit norm and `dz >= 0` for active arrays, zero
    /// otherwise).
    pub fn new(values: Vec<f64>, mask: Vec<bool>, timestamp_ms: i64) -> Result<Self> {
        if mask.is_empty() || mask.len() > MAX_ARRAYS || values.len() != 3 * mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} arrays",
                values.len(),
                mask.len()
            )));
        }
        for (m, &active) in mask.iter().enumerate() {
            let s = &values[3 * m..3 * m + 3];
            if active {
                let n2: f64 = s.iter().map(|v| v * v).sum();
                if !s.iter().all(|v| v.is_finite())
                    || (n2.sqrt() - 1.0).abs() > SUBVECTOR_TOLERANCE
                    || s[2] < 0.0
                {
                    return Err(Error::invalid(format!(
                        "array {m} subvector {s:?} is not a half-sphere unit vector"
                    )));
                }
            } else if s.iter().any(|v| *v != 0.0) {
                return Err(Error::invalid(format!(
                    "inactive array {m} has a nonzero subvector"
                )));
            }
        }
        Ok(ConcatenatedDoa {
            values,
            mask,
            timestamp_ms,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn array_count(&self) -> usize {
        self.mask.len()
    }

    pub fn active_set(&self) -> ActiveSet {
        ActiveSet::from_mask(&self.mask)
    }

    /// The array's DOA, exact when stored as unit norm, renormalized
    /// otherwise.
    pub fn subvector(&self, array: usize) -> Option<DoaVector> {
        if self.mask.get(array).copied().unwrap_or(false) {
            let s = &self.values[3 * array..3 * array + 3];
            DoaVector::new(s[0], s[1], s[2])
                .ok()
                .or_else(|| DoaVector::from_clamped(nalgebra::Vector3::new(s[0], s[1], s[2])))
        } else {
            None
        }
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    /// Rows belonging to the arrays of `set`, in array order.
    pub fn restricted(&self, set: ActiveSet) -> DVector<f64> {
        DVector::from_iterator(
            3 * set.len(),
            set.indices()
                .flat_map(|m| self.values[3 * m..3 * m + 3].iter().copied()),
        )
    }

    /// Copy with `array` marked inactive and zero-filled.
    pub fn with_dropped(&self, array: usize) -> Self {
        let mut out = self.clone();
        if array < out.mask.len() {
            out.mask[array] = false;
            out.values[3 * array..3 * array + 3].fill(0.0);
        }
        out
    }
}

/// Stacks per-array DOAs in array order; absent arrays are zero-filled and
/// marked inactive.
pub fn concat_doas(per_array: &[Option<DoaVector>], timestamp_ms: i64) -> Result<ConcatenatedDoa> {
    if per_array.is_empty() || per_array.len() > MAX_ARRAYS {
        return Err(Error::invalid(format!(
            "array count must be in 1..={MAX_ARRAYS}"
        )));
    }
    let mut values = Vec::with_capacity(3 * per_array.len());
    let mut mask = Vec::with_capacity(per_array.len());
    for d in per_array {
        match d {
            Some(d) => {
                values.extend_from_slice(&d.to_array());
                mask.push(true);
            }
            None => {
                values.extend_from_slice(&[0.0; 3]);
                mask.push(false);
            }
        }
    }
    Ok(ConcatenatedDoa {
        values,
        mask,
        timestamp_ms,
    })
}

/// Observations recorded while the source sat at one calibration point.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub point_id: u32,
    pub location: DVector<f64>,
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Calibration DOAs `D` (3M x L) with matching source locations `R` (N x L).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    d: DMatrix<f64>,
    r: DMatrix<f64>,
    masks: Vec<ActiveSet>,
    timestamps: Vec<i64>,
    segments: Vec<Segment>,
    array_count: usize,
    room_dim: usize,
}

impl CalibrationSet {
    /// Assembles `D` and `R` from per-point observation groups. Every column
    /// of `R` inside a segment equals that segment's location.
    pub fn from_points<I>(array_count: usize, room_dim: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, DVector<f64>, Vec<ConcatenatedDoa>)>,
    {
        if !(2..=3).contains(&room_dim) {
            return Err(Error::invalid("room dimension must be 2 or 3"));
        }
        if array_count == 0 || array_count > MAX_ARRAYS {
            return Err(Error::invalid("array count out of range"));
        }
        let mut cols: Vec<f64> = Vec::new();
        let mut rcols: Vec<f64> = Vec::new();
        let mut masks = Vec::new();
        let mut timestamps = Vec::new();
        let mut segments = Vec::new();
        for (point_id, location, obs) in points {
            if location.len() != room_dim {
                return Err(Error::DimensionMismatch(format!(
                    "point {point_id} location has {} coordinates, expected {room_dim}",
                    location.len()
                )));
            }
            let start = masks.len();
            for o in &obs {
                if o.array_count() != array_count {
                    return Err(Error::DimensionMismatch(format!(
                        "observation has {} arrays, expected {array_count}",
                        o.array_count()
                    )));
                }
                cols.extend_from_slice(o.values());
                rcols.extend(location.iter());
                masks.push(o.active_set());
                timestamps.push(o.timestamp_ms);
            }
            segments.push(Segment {
                point_id,
                location,
                start,
                len: obs.len(),
            });
        }
        let l = masks.len();
        Ok(CalibrationSet {
            d: DMatrix::from_column_slice(3 * array_count, l, &cols),
            r: DMatrix::from_column_slice(room_dim, l, &rcols),
            masks,
            timestamps,
            segments,
            array_count,
            room_dim,
        })
    }

    /// One segment per column, for data whose location varies by column.
    pub fn from_columns(
        room_dim: usize,
        observations: &[ConcatenatedDoa],
        locations: &[DVector<f64>],
    ) -> Result<Self> {
        if observations.len() != locations.len() || observations.is_empty() {
            return Err(Error::DimensionMismatch(
                "need one location per observation".into(),
            ));
        }
        let m = observations[0].array_count();
        Self::from_points(
            m,
            room_dim,
            observations
                .iter()
                .zip(locations)
                .enumerate()
                .map(|(i, (o, r))| (i as u32, r.clone(), vec![o.clone()])),
        )
    }

    pub fn doa_matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn location_matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn masks(&self) -> &[ActiveSet] {
        &self.masks
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn array_count(&self) -> usize {
        self.array_count
    }

    pub fn room_dim(&self) -> usize {
        self.room_dim
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn is_fully_active(&self) -> bool {
        let all = ActiveSet::all(self.array_count);
        self.masks.iter().all(|m| *m == all)
    }

    pub fn column(&self, l: usize) -> ConcatenatedDoa {
        ConcatenatedDoa {
            values: self.d.column(l).iter().copied().collect(),
            mask: (0..self.array_count).map(|m| self.masks[l].contains(m)).collect(),
            timestamp_ms: self.timestamps[l],
        }
    }

    pub fn segment(&self, point_id: u32) -> Option<&Segment> {
        self.segments.iter().find(|s| s.point_id == point_id)
    }

    /// Keeps only the listed calibration points, in the listed order.
    pub fn subset(&self, point_ids: &[u32]) -> Result<Self> {
        let mut groups = Vec::with_capacity(point_ids.len());
        for id in point_ids {
            let seg = self
                .segment(*id)
                .ok_or_else(|| Error::invalid(format!("no calibration point {id}")))?;
            let obs = seg.columns().map(|l| self.column(l)).collect();
            groups.push((seg.point_id, seg.location.clone(), obs));
        }
        Self::from_points(self.array_count, self.room_dim, groups)
    }

    /// Per-array mean DOA over a segment, renormalized. Arrays never active
    /// in the segment stay inactive.
    pub fn mean_doa(&self, point_id: u32) -> Result<ConcatenatedDoa> {
        let seg = self
            .segment(point_id)
            .ok_or_else(|| Error::invalid(format!("no calibration point {point_id}")))?;
        let mut per_array = Vec::with_capacity(self.array_count);
        for m in 0..self.array_count {
            let mut sum = nalgebra::Vector3::zeros();
            for l in seg.columns() {
                if self.masks[l].contains(m) {
                    sum += self.d.fixed_view::<3, 1>(3 * m, l);
                }
            }
            per_array.push(DoaVector::from_clamped(sum));
        }
        let ts = seg.columns().next().map_or(0, |l| self.timestamps[l]);
        concat_doas(&per_array, ts)
    }
}
