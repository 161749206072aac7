//! Time alignment: per-array clock correction, fixed-width binning and the
//! cross-array join into concatenated observations.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector3;

use super::storage::Storage;
use super::wire::WireRecord;
use crate::error::{Error, Result};
use crate::frontend::bin_start;
use crate::fusion::{concat_doas, write_observations_csv, ConcatenatedDoa, LabeledObservation, MAX_ARRAYS};
use crate::sphere_grid::DoaVector;

#[derive(Debug, Clone, PartialEq)]
pub struct JoinConfig {
    pub bin_ms: i64,
    pub array_count: usize,
    /// Per-array clock offset; the corrected time is `timestamp - offset`.
    /// Missing entries are zero.
    pub offsets_ms: Vec<i64>,
}

impl JoinConfig {
    pub fn new(array_count: usize) -> Self {
        JoinConfig {
            bin_ms: 64,
            array_count,
            offsets_ms: Vec::new(),
        }
    }

    pub fn offset(&self, array: usize) -> i64 {
        self.offsets_ms.get(array).copied().unwrap_or(0)
    }

    pub fn corrected(&self, r: &WireRecord) -> i64 {
        r.timestamp_ms - self.offset(r.array_id as usize)
    }

    fn validate(&self) -> Result<()> {
        if self.bin_ms <= 0 {
            return Err(Error::invalid("bin size must be positive"));
        }
        if self.array_count == 0 || self.array_count > MAX_ARRAYS {
            return Err(Error::invalid("array count out of range"));
        }
        if self.offsets_ms.len() > self.array_count {
            return Err(Error::invalid("more clock offsets than arrays"));
        }
        Ok(())
    }
}

/// One bin of the chronological table.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRow {
    pub bin_start_ms: i64,
    pub doa: ConcatenatedDoa,
}

/// Joins records (in any order) into rows for bins whose start lies in
/// `[from, to)`.
///
/// Bin edges are multiples of `bin_ms`, which is the same as taking the
/// earliest corrected timestamp rounded down as the origin. Within a bin,
/// each array's DOAs are averaged and renormalized; arrays without records,
/// or whose mean cancels to zero, are inactive. Bins with no active array
/// are omitted. Records from arrays outside `array_count` are ignored.
pub fn join_bins(records: &[WireRecord], cfg: &JoinConfig, from: i64, to: i64) -> Result<Vec<JoinedRow>> {
    cfg.validate()?;
    if from > to {
        return Err(Error::invalid(format!("time range [{from}, {to}) is inverted")));
    }
    let mut sums: BTreeMap<i64, Vec<Vector3<f64>>> = BTreeMap::new();
    for r in records {
        let a = r.array_id as usize;
        if a >= cfg.array_count {
            continue;
        }
        let b = bin_start(cfg.corrected(r), cfg.bin_ms);
        if b < from || b >= to {
            continue;
        }
        sums.entry(b)
            .or_insert_with(|| vec![Vector3::zeros(); cfg.array_count])[a] += r.vector();
    }
    let mut rows = Vec::with_capacity(sums.len());
    for (b, per_array) in sums {
        let doas: Vec<Option<DoaVector>> = per_array
            .iter()
            .map(|s| if *s == Vector3::zeros() { None } else { DoaVector::from_clamped(*s) })
            .collect();
        if doas.iter().any(Option::is_some) {
            rows.push(JoinedRow {
                bin_start_ms: b,
                doa: concat_doas(&doas, b)?,
            });
        }
    }
    Ok(rows)
}

/// All rows whose bin starts in `[from, to)`, from the stored records.
pub fn query(storage: &Storage, cfg: &JoinConfig, from: i64, to: i64) -> Result<Vec<JoinedRow>> {
    if from > to {
        return Err(Error::invalid(format!("time range [{from}, {to}) is inverted")));
    }
    let max_off = cfg.offsets_ms.iter().map(|o| o.abs()).max().unwrap_or(0);
    let lo = from.saturating_sub(max_off);
    let hi = to.saturating_add(max_off).saturating_add(cfg.bin_ms.max(0));
    join_bins(&storage.records_in(lo, hi), cfg, from, to)
}

/// Rows for the whole store.
pub fn query_all(storage: &Storage, cfg: &JoinConfig) -> Result<Vec<JoinedRow>> {
    join_bins(&storage.records(), cfg, i64::MIN, i64::MAX)
}

/// Writes rows in the calibration column layout, unlabeled.
pub fn write_rows_csv<W: Write>(out: W, cfg: &JoinConfig, room_dim: usize, rows: &[JoinedRow]) -> Result<()> {
    let obs: Vec<LabeledObservation> = rows
        .iter()
        .map(|r| LabeledObservation {
            doa: r.doa.clone(),
            point_id: None,
            location: None,
        })
        .collect();
    write_observations_csv(out, cfg.array_count, room_dim, &obs)
}
