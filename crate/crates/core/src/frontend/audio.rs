//! Multichannel audio input: WAV files (16-bit integer or 32-bit float) and
//! raw interleaved PCM.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// `channels[c][n]`, samples scaled to `[-1, 1]` for integer input.
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcmFormat {
    I16Le,
    F32Le,
}

pub fn read_wav(path: &Path) -> Result<Recording> {
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::invalid(format!(
                "unsupported WAV sample format {fmt:?} with {bits} bits"
            )))
        }
    };
    Ok(Recording {
        channels: deinterleave(&interleaved, nch),
        sample_rate: spec.sample_rate as f64,
    })
}

pub fn write_wav_f32(path: &Path, rec: &Recording) -> Result<()> {
    let spec = hound::WavSpec {
        channels: rec.channels.len() as u16,
        sample_rate: rec.sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let len = rec.channels.iter().map(Vec::len).min().unwrap_or(0);
    for n in 0..len {
        for c in &rec.channels {
            w.write_sample(c[n] as f32).map_err(wav_err)?;
        }
    }
    w.finalize().map_err(wav_err)
}

/// Reads raw interleaved little-endian PCM.
pub fn read_raw_pcm<R: Read>(
    mut input: R,
    channels: usize,
    format: PcmFormat,
    sample_rate: f64,
) -> Result<Recording> {
    if channels == 0 {
        return Err(Error::invalid("channel count must be positive"));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let interleaved: Vec<f64> = match format {
        PcmFormat::I16Le => bytes
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        PcmFormat::F32Le => bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
    };
    Ok(Recording {
        channels: deinterleave(&interleaved, channels),
        sample_rate,
    })
}

fn deinterleave(data: &[f64], nch: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(data.len() / nch.max(1)); nch];
    for frame in data.chunks_exact(nch) {
        for (c, v) in frame.iter().enumerate() {
            out[c].push(*v);
        }
    }
    out
}

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::invalid(format!("WAV: {other}")),
    }
}
