//! Per-array DOA estimation front end.

mod audio;
mod binning;
mod peaks;
mod pipeline;
mod srp;
mod stft;
mod tracker;

pub use audio::{read_raw_pcm, read_wav, write_wav_f32, PcmFormat, Recording};
pub use binning::{bin_start, bin_to_records, BinnedDoas};
pub use peaks::{pick_peaks, pick_peaks_with, Peak, DEFAULT_SUPPRESSION_DEG};
pub use pipeline::{frames, ArrayPipeline, FrontendConfig};
pub use srp::{srp_phat_power, SrpPhat, SteeredPowerMap, PHAT_FLOOR};
pub use stft::{hann, stft, MultichannelFrame, Spectra, Stft};
pub use tracker::{kalman_track, DoaTracker, KalmanConfig, PeakDoa, TrackedDoa};
