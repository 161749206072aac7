use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::tracker::TrackedDoa;
use crate::error::{Error, Result};
use crate::sphere_grid::DoaVector;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinnedDoas {
    pub records: Vec<TrackedDoa>,
    /// Bins whose mean direction had zero length.
    pub dropped_zero_norm: usize,
}

struct Accum {
    sum: Vector3<f64>,
    energy: f64,
    count: usize,
    coasted: bool,
    first: DoaVector,
}

/// Start of the bin containing `ts` (bins aligned to multiples of `bin_ms`).
pub fn bin_start(ts: i64, bin_ms: i64) -> i64 {
    ts.div_euclid(bin_ms) * bin_ms
}

/// Averages DOAs within fixed time bins.
///
/// Each nonempty bin yields one record stamped with the bin start, holding
/// the renormalized component-wise mean direction and the mean energy.
pub fn bin_to_records<'a, I>(records: I, bin_ms: i64) -> Result<BinnedDoas>
where
    I: IntoIterator<Item = &'a TrackedDoa>,
{
    if bin_ms <= 0 {
        return Err(Error::invalid("bin size must be positive"));
    }
    let mut bins: BTreeMap<i64, Accum> = BTreeMap::new();
    for r in records {
        let e = bins
            .entry(bin_start(r.timestamp_ms, bin_ms))
            .or_insert_with(|| Accum {
                sum: Vector3::zeros(),
                energy: 0.0,
                count: 0,
                coasted: true,
                first: r.doa,
            });
        e.sum += r.doa.as_vector();
        e.energy += r.energy;
        e.count += 1;
        e.coasted &= r.coasted;
    }

    let mut out = BinnedDoas::default();
    for (start, acc) in bins {
        let Accum {
            sum,
            energy,
            count,
            coasted,
            first,
        } = acc;
        let n = sum.norm();
        if n <= 1e-12 * count as f64 {
            out.dropped_zero_norm += 1;
            continue;
        }
        let doa = if count == 1 {
            first
        } else {
            DoaVector::from_clamped(sum / n).expect("mean of half-sphere vectors")
        };
        out.records.push(TrackedDoa {
            timestamp_ms: start,
            doa,
            energy: energy / count as f64,
            coasted,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts: i64, v: [f64; 3]) -> TrackedDoa {
        TrackedDoa {
            timestamp_ms: ts,
            doa: DoaVector::from_clamped(Vector3::from(v)).unwrap(),
            energy: 1.0,
            coasted: false,
        }
    }

    #[test]
    fn single_record_unchanged() {
        let r = rec(64, [0.6, 0.0, 0.8]);
        let b = bin_to_records([&r], 64).unwrap();
        assert_eq!(b.records, vec![r]);
    }

    #[test]
    fn eight_identical_hops_collapse() {
        let rs: Vec<_> = (0..8).map(|i| rec(128 + 8 * i, [0.0, 0.6, 0.8])).collect();
        let b = bin_to_records(&rs, 64).unwrap();
        assert_eq!(b.records.len(), 1);
        assert_eq!(b.records[0].timestamp_ms, 128);
        assert!((b.records[0].doa.as_vector() - Vector3::new(0.0, 0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn symmetric_pair_averages_to_zenith() {
        let s = 0.5f64.sqrt();
        let rs = [rec(0, [s, 0.0, s]), rec(8, [-s, 0.0, s])];
        let b = bin_to_records(&rs, 64).unwrap();
        assert!((b.records[0].doa.as_vector() - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn antipodal_bin_is_dropped_and_counted() {
        let rs = [rec(0, [1.0, 0.0, 0.0]), rec(8, [-1.0, 0.0, 0.0]), rec(70, [0.0, 0.0, 1.0])];
        let b = bin_to_records(&rs, 64).unwrap();
        assert_eq!(b.dropped_zero_norm, 1);
        assert_eq!(b.records.len(), 1);
        assert_eq!(b.records[0].timestamp_ms, 64);
    }

    #[test]
    fn rebinning_is_identity() {
        let rs: Vec<_> = (0..50)
            .map(|i| rec(i * 8 + 3, [0.01 * i as f64, 0.2, 0.9]))
            .collect();
        let once = bin_to_records(&rs, 64).unwrap();
        let twice = bin_to_records(&once.records, 64).unwrap();
        assert_eq!(once.records, twice.records);
    }

    #[test]
    fn zero_bin_rejected() {
        assert!(bin_to_records(&[], 0).is_err());
    }
}
