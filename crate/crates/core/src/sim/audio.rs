//! Multichannel audio for a far-field point source: fractional plane-wave
//! delays by windowed-sinc interpolation plus white sensor noise.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::doa::true_doa;
use super::scenario::ArrayPose;
use crate::error::{Error, Result};
use crate::sphere_grid::{ArrayGeometry, DoaVector};

/// Interpolator half-length in samples.
pub const SINC_HALF_WIDTH: usize = 32;

fn blackman(x: f64, half: f64) -> f64 {
    // x in [-half, half]
    let t = (x + half) / (2.0 * half);
    0.42 - 0.5 * (std::f64::consts::TAU * t).cos() + 0.08 * (2.0 * std::f64::consts::TAU * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// `out[n] = s(n - delay)` for a real-valued `delay`, with `s` zero outside
/// its support.
pub fn fractional_delay(signal: &[f64], delay: f64) -> Vec<f64> {
    let half = SINC_HALF_WIDTH as f64;
    let len = signal.len() as i64;
    (0..len)
        .map(|n| {
            let t = n as f64 - delay;
            let center = t.floor() as i64;
            let mut acc = 0.0;
            for k in center - SINC_HALF_WIDTH as i64 + 1..=center + SINC_HALF_WIDTH as i64 {
                if k < 0 || k >= len {
                    continue;
                }
                let x = t - k as f64;
                if x.abs() < half {
                    acc += signal[k as usize] * sinc(x) * blackman(x, half);
                }
            }
            acc
        })
        .collect()
}

pub fn white_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Channels for a plane wave from local direction `doa`. Microphone `p`
/// leads the source signal by `fs * m_p . d / c` samples. `snr_db = None`
/// adds no noise; otherwise each channel gets white noise scaled to its own
/// signal power.
pub fn synthesize_audio_for_doa<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    doa: &DoaVector,
    source_signal: &[f64],
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if geom.mic_count() == 0 {
        return Err(Error::invalid("array has no microphones"));
    }
    let scale = geom.sample_rate / geom.speed_of_sound;
    let mut channels = Vec::with_capacity(geom.mic_count());
    for m in &geom.mic_positions {
        let lead = scale * m.dot(doa.as_vector());
        channels.push(fractional_delay(source_signal, -lead));
    }
    if let Some(snr) = snr_db {
        if !snr.is_finite() {
            return Err(Error::invalid("SNR must be finite or absent"));
        }
        for ch in &mut channels {
            let sd = (mean_power(ch) / 10f64.powf(snr / 10.0)).sqrt();
            if sd > 0.0 {
                let noise = Normal::new(0.0, sd).expect("finite sd");
                for v in ch.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
        }
    }
    Ok(channels)
}

/// [`synthesize_audio_for_doa`] for a source at a global position.
pub fn synthesize_audio<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    pose: &ArrayPose,
    source_signal: &[f64],
    source_pos: &Vector3<f64>,
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let doa = true_doa(pose, source_pos)?
        .ok_or_else(|| Error::invalid("source is behind the array"))?;
    synthesize_audio_for_doa(geom, &doa, source_signal, snr_db, rng)
}
