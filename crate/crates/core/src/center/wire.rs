//! Line-oriented DOA record format: `ts_ms,array_id,dx,dy,dz,energy,seq`.

use std::fmt;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::frontend::TrackedDoa;
use crate::fusion::MAX_ARRAYS;
use crate::sphere_grid::DoaVector;

/// Norm deviation tolerated on the wire (values are rounded in transit).
pub const WIRE_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireRecord {
    pub timestamp_ms: i64,
    pub array_id: u16,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub energy: f64,
    /// Per-array monotone counter.
    pub seq: u64,
}

impl WireRecord {
    pub fn from_tracked(array_id: u16, t: &TrackedDoa, seq: u64) -> Self {
        let [dx, dy, dz] = t.doa.to_array();
        WireRecord {
            timestamp_ms: t.timestamp_ms,
            array_id,
            dx,
            dy,
            dz,
            energy: t.energy,
            seq,
        }
    }

    /// Parses one line (without its terminator) and checks the record
    /// invariants. Values are not renormalized; see [`Self::normalized`].
    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(1, format!("expected 7 fields, found {}", fields.len())));
        }
        let bad = |name: &str| Error::parse(1, format!("bad {name}"));
        let f = |i: usize, name: &str| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(name))
        };
        let rec = WireRecord {
            timestamp_ms: fields[0].trim().parse().map_err(|_| bad("timestamp"))?,
            array_id: fields[1].trim().parse().map_err(|_| bad("array id"))?,
            dx: f(2, "dx")?,
            dy: f(3, "dy")?,
            dz: f(4, "dz")?,
            energy: f(5, "energy")?,
            seq: fields[6].trim().parse().map_err(|_| bad("seq"))?,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.array_id as usize >= MAX_ARRAYS {
            return Err(Error::invalid(format!("array id {} out of range", self.array_id)));
        }
        let n = self.vector().norm();
        if !n.is_finite() || (n - 1.0).abs() > WIRE_NORM_TOLERANCE {
            return Err(Error::invalid(format!("DOA norm {n} outside wire tolerance")));
        }
        if self.dz < -WIRE_NORM_TOLERANCE {
            return Err(Error::invalid(format!("dz = {} below the half-sphere", self.dz)));
        }
        if !self.energy.is_finite() {
            return Err(Error::invalid("energy must be finite"));
        }
        Ok(())
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.dx, self.dy, self.dz)
    }

    /// Copy with the direction clamped to `dz >= 0` and rescaled to unit
    /// norm.
    pub fn normalized(&self) -> Result<Self> {
        let d = self.doa()?;
        let [dx, dy, dz] = d.to_array();
        Ok(WireRecord { dx, dy, dz, ..*self })
    }

    pub fn doa(&self) -> Result<DoaVector> {
        DoaVector::from_clamped(self.vector()).ok_or_else(|| Error::invalid("zero DOA"))
    }
}

impl fmt::Display for WireRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{}",
            self.timestamp_ms, self.array_id, self.dx, self.dy, self.dz, self.energy, self.seq
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_exact() {
        let r = WireRecord {
            timestamp_ms: 1_700_000_000_064,
            array_id: 3,
            dx: 0.1,
            dy: -0.2,
            dz: (1.0f64 - 0.05).sqrt(),
            energy: 4.25,
            seq: 17,
        };
        assert_eq!(WireRecord::parse(&r.to_string()).unwrap(), r);
    }

    #[test]
    fn norm_outside_tolerance_rejected() {
        assert!(WireRecord::parse("0,0,0.9,0,0,1,0").is_err());
        assert!(WireRecord::parse("0,0,0,0,1.0005,1,0").is_ok());
        assert!(WireRecord::parse("0,0,1,0,-0.01,1,0").is_err());
    }

    #[test]
    fn malformed_lines_rejected() {
        for l in ["", "1,2,3", "a,0,0,0,1,1,0", "0,0,0,0,1,1,0,9", "0,99,0,0,1,1,0", "0,0,NaN,0,1,1,0"] {
            assert!(WireRecord::parse(l).is_err(), "{l}");
        }
    }

    #[test]
    fn normalization_clamps() {
        let r = WireRecord::parse("0,0,1,0,-0.0005,1,0").unwrap().normalized().unwrap();
        assert_eq!((r.dx, r.dy, r.dz), (1.0, 0.0, 0.0));
    }
}
