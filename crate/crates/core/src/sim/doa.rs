//! Ground-truthed DOA synthesis: exact directions from array poses, angular
//! noise, grid quantization and array dropout.

use std::io::Write;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::{ArrayPose, DropoutPolicy, Scenario};
use crate::center::WireRecord;
use crate::error::{Error, Result};
use crate::fusion::{concat_doas, CalibrationSet, ConcatenatedDoa};
use crate::sphere_grid::{build_halfsphere_grid, DoaVector, HalfSphereGrid};

/// Grid level used for quantization.
pub const QUANTIZATION_LEVEL: u32 = 4;

const CALIBRATION_STREAM: u64 = 0;

/// Unit direction from the array to `source` in the array's local frame, or
/// `None` when the source is behind the array (`z < 0` locally). A source
/// exactly in the array plane is kept with `dz = 0`.
pub fn true_doa(pose: &ArrayPose, source: &Vector3<f64>) -> Result<Option<DoaVector>> {
    let rel = source - pose.position;
    let n = rel.norm();
    if n < 1e-12 {
        return Err(Error::invalid("source coincides with the array"));
    }
    let local = pose.orientation.transpose() * (rel / n);
    if local.z < 0.0 {
        return Ok(None);
    }
    Ok(DoaVector::from_clamped(local))
}

/// Rotates `d` by an angle drawn from `N(0, sigma)` about a uniformly random
/// axis perpendicular to `d`, then folds back onto the half-sphere.
pub fn perturb_doa<R: Rng + ?Sized>(d: &DoaVector, sigma_rad: f64, rng: &mut R) -> Option<DoaVector> {
    if sigma_rad == 0.0 {
        return Some(*d);
    }
    let v = *d.as_vector();
    let helper = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = v.cross(&helper).normalize();
    let e2 = v.cross(&e1);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let axis = e1 * phi.cos() + e2 * phi.sin();
    let theta: f64 = Normal::new(0.0, sigma_rad).expect("finite sigma").sample(rng);
    DoaVector::from_clamped(v * theta.cos() + axis.cross(&v) * theta.sin())
}

/// One emitted observation with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub timestamp_ms: i64,
    pub true_position: Vector3<f64>,
    /// Noise-free DOA per array; `None` when the source is not visible.
    pub true_doas: Vec<Option<DoaVector>>,
    pub emitted: ConcatenatedDoa,
}

struct Synth<'a> {
    scn: &'a Scenario,
    grid: Option<HalfSphereGrid>,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl<'a> Synth<'a> {
    fn new(scn: &'a Scenario, stream: u64) -> Result<Self> {
        scn.validate()?;
        let grid = if scn.quantize {
            Some(build_halfsphere_grid(QUANTIZATION_LEVEL)?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
        rng.set_stream(stream);
        Ok(Synth {
            scn,
            grid,
            sigma: scn.noise_deg.to_radians(),
            rng,
        })
    }

    fn observe(&mut self, source: &Vector3<f64>) -> Result<(Vec<Option<DoaVector>>, Vec<Option<DoaVector>>)> {
        let mut truth = Vec::with_capacity(self.scn.array_count());
        let mut emitted = Vec::with_capacity(self.scn.array_count());
        for pose in &self.scn.poses {
            let t = true_doa(pose, source)?;
            let e = t.and_then(|d| perturb_doa(&d, self.sigma, &mut self.rng)).map(|d| match &self.grid {
                Some(g) => g.points()[g.nearest(d.as_vector())],
                None => d,
            });
            truth.push(t);
            emitted.push(e);
        }
        Ok((truth, emitted))
    }

    /// Never removes the last active array.
    fn drop_arrays(&mut self, emitted: &mut [Option<DoaVector>]) {
        let active: Vec<usize> = (0..emitted.len()).filter(|&i| emitted[i].is_some()).collect();
        match self.scn.dropout {
            DropoutPolicy::None => {}
            DropoutPolicy::OneOf { probability } => {
                if self.rng.random_bool(probability) {
                    let victim = self.rng.random_range(0..emitted.len());
                    if active.len() > 1 || !active.contains(&victim) {
                        emitted[victim] = None;
                    }
                }
            }
            DropoutPolicy::Independent { probability } => {
                let drops: Vec<bool> = (0..emitted.len()).map(|_| self.rng.random_bool(probability)).collect();
                if active.iter().any(|&i| !drops[i]) {
                    for (e, d) in emitted.iter_mut().zip(drops) {
                        if d {
                            *e = None;
                        }
                    }
                }
            }
        }
    }
}

/// Samples the named trajectory every `period_ms` at the trajectory's speed,
/// from its start to its end inclusive.
pub fn synthesize_doa_stream(
    scn: &Scenario,
    trajectory: &str,
    period_ms: i64,
) -> Result<Vec<GroundTruthRecord>> {
    if period_ms <= 0 {
        return Err(Error::invalid("period must be positive"));
    }
    let idx = scn
        .trajectories
        .iter()
        .position(|t| t.name == trajectory)
        .ok_or_else(|| Error::invalid(format!("no trajectory named `{trajectory}`")))?;
    let traj = &scn.trajectories[idx];
    let mut synth = Synth::new(scn, idx as u64 + 1)?;
    let duration_ms = traj.length() / traj.speed * 1000.0;
    let count = (duration_ms / period_ms as f64).floor() as i64 + 1;
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..count {
        let ts = k * period_ms;
        let pos = traj.position_at(traj.speed * ts as f64 / 1000.0);
        let (truth, mut emitted) = synth.observe(&pos)?;
        synth.drop_arrays(&mut emitted);
        out.push(GroundTruthRecord {
            timestamp_ms: ts,
            true_position: pos,
            true_doas: truth,
            emitted: concat_doas(&emitted, ts)?,
        });
    }
    Ok(out)
}

/// Number of records a dwell produces.
pub fn records_per_point(dwell_s: f64, period_ms: i64) -> usize {
    (dwell_s * 1000.0 / period_ms as f64).floor() as usize
}

/// Calibration recordings: the source dwells `dwell_s` at every calibration
/// point in turn. Noise and quantization follow the scenario; dropout is not
/// applied. Locations are the first `room_dim` coordinates.
pub fn synthesize_calibration(
    scn: &Scenario,
    dwell_s: f64,
    period_ms: i64,
    room_dim: usize,
) -> Result<CalibrationSet> {
    if period_ms <= 0 || !(dwell_s > 0.0) {
        return Err(Error::invalid("dwell and period must be positive"));
    }
    let per_point = records_per_point(dwell_s, period_ms);
    let mut synth = Synth::new(scn, CALIBRATION_STREAM)?;
    let mut groups = Vec::with_capacity(scn.calibration_points.len());
    let mut ts = 0;
    for p in &scn.calibration_points {
        let mut obs = Vec::with_capacity(per_point);
        for _ in 0..per_point {
            let (_, emitted) = synth.observe(&p.position)?;
            obs.push(concat_doas(&emitted, ts)?);
            ts += period_ms;
        }
        let loc = DVector::from_iterator(room_dim, p.position.iter().copied().take(room_dim));
        groups.push((p.id, loc, obs));
    }
    CalibrationSet::from_points(scn.array_count(), room_dim, groups)
}

/// Wire records for a synthesized stream: one per active array per record,
/// in timestamp order, with unit energy.
pub fn wire_capture(records: &[GroundTruthRecord]) -> Vec<WireRecord> {
    let m = records.first().map_or(0, |r| r.emitted.array_count());
    let mut seq = vec![0u64; m];
    let mut out = Vec::new();
    for r in records {
        for (a, s) in seq.iter_mut().enumerate() {
            if let Some(d) = r.emitted.subvector(a) {
                out.push(WireRecord {
                    timestamp_ms: r.timestamp_ms,
                    array_id: a as u16,
                    dx: d.dx(),
                    dy: d.dy(),
                    dz: d.dz(),
                    energy: 1.0,
                    seq: *s,
                });
                *s += 1;
            }
        }
    }
    out
}

/// A ground-truth CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRow {
    pub timestamp_ms: i64,
    pub true_position: Vector3<f64>,
    pub emitted: ConcatenatedDoa,
}

fn gt_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["timestamp_ms", "true_x", "true_y", "true_z"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for a in 0..m {
        for c in ["x", "y", "z"] {
            h.push(format!("a{a}_{c}"));
        }
    }
    h.extend((0..m).map(|a| format!("m{a}")));
    h
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse(e.position().map_or(0, |p| p.line() as usize), e.to_string())
}

pub fn write_ground_truth_csv<W: Write>(out: W, records: &[GroundTruthRecord]) -> Result<()> {
    let m = records.first().map_or(0, |r| r.emitted.array_count());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(gt_header(m)).map_err(csv_err)?;
    for r in records {
        let mut rec = vec![r.timestamp_ms.to_string()];
        rec.extend(r.true_position.iter().map(|v| v.to_string()));
        rec.extend(r.emitted.values().iter().map(|v| v.to_string()));
        rec.extend(r.emitted.mask().iter().map(|&b| u8::from(b).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth_csv<R: std::io::Read>(input: R) -> Result<Vec<GroundTruthRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let rest = header.len().saturating_sub(4);
    if header.get(0) != Some("timestamp_ms") || header.get(1) != Some("true_x") || rest % 4 != 0 {
        return Err(Error::parse(1, "unrecognized ground-truth header"));
    }
    let m = rest / 4;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::parse(line, format!("bad number in column {}", j + 1)))
        };
        let ts = rec
            .get(0)
            .and_then(|s| s.parse::<i64>().ok())
            .ok_or_else(|| Error::parse(line, "bad timestamp"))?;
        let pos = Vector3::new(num(1)?, num(2)?, num(3)?);
        let values = (0..3 * m).map(|k| num(4 + k)).collect::<Result<Vec<_>>>()?;
        let mask = (0..m)
            .map(|k| match rec.get(4 + 3 * m + k) {
                Some("1") => Ok(true),
                Some("0") => Ok(false),
                _ => Err(Error::parse(line, "bad mask bit")),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(GroundTruthRow {
            timestamp_ms: ts,
            true_position: pos,
            emitted: ConcatenatedDoa::new(values, mask, ts).map_err(|e| Error::parse(line, e.to_string()))?,
        });
    }
    Ok(out)
}
