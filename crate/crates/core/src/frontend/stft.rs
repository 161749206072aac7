use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// One STFT frame of synchronized multichannel audio.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelFrame {
    /// `samples[channel][n]`, every channel the same length.
    pub samples: Vec<Vec<f64>>,
    pub frame_index: u64,
    pub sample_rate: f64,
}

impl MultichannelFrame {
    pub fn frame_len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn channel_count(&self) -> usize {
        self.samples.len()
    }
}

/// Half spectra (bins `0..=N/2`) for every channel of one frame.
#[derive(Debug, Clone)]
pub struct Spectra {
    pub frame_len: usize,
    pub channels: Vec<Vec<Complex64>>,
}

/// Hann-windowed forward FFT with a cached plan.
pub struct Stft {
    frame_len: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("frame_len", &self.frame_len).finish()
    }
}

impl Stft {
    pub fn new(frame_len: usize) -> Result<Self> {
        if frame_len < 2 || !frame_len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "frame length {frame_len} is not a power of two"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(frame_len);
        Ok(Stft {
            frame_len,
            window: hann(frame_len),
            fft,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn process(&self, frame: &MultichannelFrame) -> Result<Spectra> {
        let n = self.frame_len;
        let mut channels = Vec::with_capacity(frame.channel_count());
        for (c, ch) in frame.samples.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::invalid(format!(
                    "channel {c} has {} samples, expected {n}",
                    ch.len()
                )));
            }
            let mut buf: Vec<Complex64> = ch
                .iter()
                .zip(&self.window)
                .map(|(x, w)| Complex64::new(x * w, 0.0))
                .collect();
            self.fft.process(&mut buf);
            buf.truncate(n / 2 + 1);
            channels.push(buf);
        }
        Ok(Spectra {
            frame_len: n,
            channels,
        })
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Windowed FFT of every channel; bins `0..=N/2` are kept.
pub fn stft(frame: &MultichannelFrame) -> Result<Spectra> {
    Stft::new(frame.frame_len())?.process(frame)
}
