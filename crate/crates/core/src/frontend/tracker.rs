//! Single-source DOA tracker.
//!
//! Constant-position Kalman filter on the three Cartesian DOA components.
//! The components share one isotropic covariance, so the state covariance is
//! a scalar. After every update the state is clamped to the upper
//! half-sphere and renormalized.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::sphere_grid::{angle_between, DoaVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    /// Per-step process noise variance.
    pub process_var: f64,
    /// Measurement noise variance.
    pub measurement_var: f64,
    /// Covariance assigned when a track is seeded.
    pub initial_var: f64,
    /// Peaks further than this from the state are not associated, degrees.
    pub gate_deg: f64,
    /// Track is dropped after this long without an association, ms.
    pub lost_ms: i64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            process_var: 1e-4,
            measurement_var: 1e-3,
            initial_var: 1e-2,
            gate_deg: 20.0,
            lost_ms: 500,
        }
    }
}

/// A tracker output sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedDoa {
    pub timestamp_ms: i64,
    pub doa: DoaVector,
    /// Power of the associated peak; zero when coasting.
    pub energy: f64,
    pub coasted: bool,
}

/// Candidate direction and its steered power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakDoa {
    pub doa: DoaVector,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy)]
struct Track {
    state: Vector3<f64>,
    var: f64,
    last_assoc_ms: i64,
}

#[derive(Debug, Clone)]
pub struct DoaTracker {
    cfg: KalmanConfig,
    track: Option<Track>,
    last_ts: Option<i64>,
}

impl DoaTracker {
    pub fn new(cfg: KalmanConfig) -> Self {
        DoaTracker {
            cfg,
            track: None,
            last_ts: None,
        }
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.cfg
    }

    pub fn is_tracking(&self) -> bool {
        self.track.is_some()
    }

    /// Advances the filter to `timestamp_ms` with this step's candidate
    /// peaks. Returns the track state, or `None` when there is no track.
    pub fn step(&mut self, timestamp_ms: i64, peaks: &[PeakDoa]) -> Result<Option<TrackedDoa>> {
        if let Some(prev) = self.last_ts {
            if timestamp_ms <= prev {
                return Err(Error::invalid(format!(
                    "tracker timestamps must increase ({timestamp_ms} after {prev})"
                )));
            }
        }
        self.last_ts = Some(timestamp_ms);

        if let Some(t) = &self.track {
            if timestamp_ms - t.last_assoc_ms > self.cfg.lost_ms {
                self.track = None;
            }
        }

        let Some(track) = self.track.as_mut() else {
            return Ok(self.seed(timestamp_ms, peaks));
        };

        track.var += self.cfg.process_var;
        let cos_gate = self.cfg.gate_deg.to_radians().cos();
        let nearest = peaks
            .iter()
            .map(|p| (p, angle_between(&track.state, p.doa.as_vector())))
            .filter(|(p, _)| p.doa.as_vector().dot(&track.state) >= cos_gate)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, _)| *p);

        match nearest {
            Some(peak) => {
                let denom = track.var + self.cfg.measurement_var;
                let gain = if denom > 0.0 { track.var / denom } else { 1.0 };
                let updated = track.state + gain * (peak.doa.as_vector() - track.state);
                track.var *= 1.0 - gain;
                track.last_assoc_ms = timestamp_ms;
                // A zero-length update can only come from antipodal inputs,
                // which the gate excludes; fall back to the measurement.
                let doa = DoaVector::from_clamped(updated).unwrap_or(peak.doa);
                track.state = *doa.as_vector();
                Ok(Some(TrackedDoa {
                    timestamp_ms,
                    doa,
                    energy: peak.energy,
                    coasted: false,
                }))
            }
            None => {
                let doa = DoaVector::from_clamped(track.state).expect("track state is unit norm");
                Ok(Some(TrackedDoa {
                    timestamp_ms,
                    doa,
                    energy: 0.0,
                    coasted: true,
                }))
            }
        }
    }

    fn seed(&mut self, timestamp_ms: i64, peaks: &[PeakDoa]) -> Option<TrackedDoa> {
        let strongest = peaks.iter().max_by(|a, b| a.energy.total_cmp(&b.energy))?;
        self.track = Some(Track {
            state: *strongest.doa.as_vector(),
            var: self.cfg.initial_var,
            last_assoc_ms: timestamp_ms,
        });
        Some(TrackedDoa {
            timestamp_ms,
            doa: strongest.doa,
            energy: strongest.energy,
            coasted: false,
        })
    }
}

/// Runs a fresh tracker over a stream of `(timestamp, peaks)` steps and
/// collects every emitted sample.
pub fn kalman_track<I>(cfg: KalmanConfig, steps: I) -> Result<Vec<TrackedDoa>>
where
    I: IntoIterator<Item = (i64, Vec<PeakDoa>)>,
{
    let mut tracker = DoaTracker::new(cfg);
    let mut out = Vec::new();
    for (ts, peaks) in steps {
        if let Some(t) = tracker.step(ts, &peaks)? {
            out.push(t);
        }
    }
    Ok(out)
}
