use std::sync::Arc;

use super::binning::bin_to_records;
use super::peaks::pick_peaks_with;
use super::srp::{SrpPhat, SteeredPowerMap};
use super::stft::{MultichannelFrame, Stft};
use super::tracker::{DoaTracker, KalmanConfig, PeakDoa, TrackedDoa};
use crate::center::WireRecord;
use crate::error::{Error, Result};
use crate::sphere_grid::{ArrayGeometry, HalfSphereGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    /// Samples per STFT frame (power of two).
    pub frame_len: usize,
    /// Samples between frame starts.
    pub hop: usize,
    pub max_peaks: usize,
    pub suppression_deg: f64,
    /// Frames whose strongest peak is below this are treated as silent.
    /// `None` means `0.15 * pair count`.
    pub min_energy: Option<f64>,
    pub bin_ms: i64,
    pub kalman: KalmanConfig,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            frame_len: 512,
            hop: 128,
            max_peaks: 4,
            suppression_deg: super::peaks::DEFAULT_SUPPRESSION_DEG,
            min_energy: None,
            bin_ms: 64,
            kalman: KalmanConfig::default(),
        }
    }
}

/// Splits `channels` into consecutive frames of `frame_len` samples every
/// `hop` samples. A trailing partial frame is dropped.
pub fn frames(
    channels: &[Vec<f64>],
    frame_len: usize,
    hop: usize,
    sample_rate: f64,
) -> Vec<MultichannelFrame> {
    let len = channels.iter().map(Vec::len).min().unwrap_or(0);
    if hop == 0 || len < frame_len {
        return Vec::new();
    }
    (0..=(len - frame_len) / hop)
        .map(|i| MultichannelFrame {
            samples: channels
                .iter()
                .map(|c| c[i * hop..i * hop + frame_len].to_vec())
                .collect(),
            frame_index: i as u64,
            sample_rate,
        })
        .collect()
}

/// Per-array DOA estimation: STFT, SRP-PHAT scan, peak picking, tracking,
/// and binning to wire records. One instance per array; instances share no
/// mutable state.
#[derive(Debug)]
pub struct ArrayPipeline {
    array_id: u16,
    cfg: FrontendConfig,
    stft: Stft,
    srp: SrpPhat,
    tracker: DoaTracker,
    min_energy: f64,
    seq: u64,
}

impl ArrayPipeline {
    pub fn new(
        array_id: u16,
        geom: ArrayGeometry,
        grid: Arc<HalfSphereGrid>,
        cfg: FrontendConfig,
    ) -> Result<Self> {
        if cfg.hop == 0 || cfg.bin_ms <= 0 {
            return Err(Error::invalid("hop and bin size must be positive"));
        }
        let stft = Stft::new(cfg.frame_len)?;
        let srp = SrpPhat::new(grid, geom);
        let min_energy = cfg.min_energy.unwrap_or(0.15 * srp.pair_count() as f64);
        Ok(ArrayPipeline {
            array_id,
            tracker: DoaTracker::new(cfg.kalman),
            cfg,
            stft,
            srp,
            min_energy,
            seq: 0,
        })
    }

    pub fn min_energy(&self) -> f64 {
        self.min_energy
    }

    pub fn steered_power(&self, frame: &MultichannelFrame) -> Result<SteeredPowerMap> {
        self.srp.power(&self.stft.process(frame)?)
    }

    /// Candidate peaks for one frame, empty when the frame is below the
    /// energy threshold.
    pub fn frame_peaks(&self, frame: &MultichannelFrame) -> Result<Vec<PeakDoa>> {
        let map = self.steered_power(frame)?;
        let peaks = pick_peaks_with(&map, self.cfg.max_peaks, self.cfg.suppression_deg);
        if peaks.first().is_none_or(|p| p.power < self.min_energy) {
            return Ok(Vec::new());
        }
        let grid = self.srp.grid();
        Ok(peaks
            .iter()
            .map(|p| PeakDoa {
                doa: grid.points()[p.index],
                energy: p.power,
            })
            .collect())
    }

    /// Processes one frame and returns the tracker output when it is backed
    /// by a detection (coasting samples are withheld).
    pub fn process_frame(
        &mut self,
        frame: &MultichannelFrame,
        timestamp_ms: i64,
    ) -> Result<Option<TrackedDoa>> {
        let peaks = self.frame_peaks(frame)?;
        Ok(self
            .tracker
            .step(timestamp_ms, &peaks)?
            .filter(|t| !t.coasted))
    }

    /// Runs a whole recording through the pipeline and emits one wire
    /// record per nonempty bin.
    pub fn run(&mut self, channels: &[Vec<f64>], sample_rate: f64, start_ms: i64) -> Result<Vec<WireRecord>> {
        let ms_per_hop = self.cfg.hop as f64 * 1000.0 / sample_rate;
        let mut tracked = Vec::new();
        for f in frames(channels, self.cfg.frame_len, self.cfg.hop, sample_rate) {
            let ts = start_ms + (f.frame_index as f64 * ms_per_hop).round() as i64;
            if let Some(t) = self.process_frame(&f, ts)? {
                tracked.push(t);
            }
        }
        let binned = bin_to_records(&tracked, self.cfg.bin_ms)?;
        Ok(binned
            .records
            .iter()
            .map(|t| {
                let r = WireRecord::from_tracked(self.array_id, t, self.seq);
                self.seq += 1;
                r
            })
            .collect())
    }
}
