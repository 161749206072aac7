//! Synthetic rooms with known geometry for end-to-end checks.

mod audio;
mod doa;
mod scenario;

pub use audio::{fractional_delay, synthesize_audio, synthesize_audio_for_doa, white_noise, SINC_HALF_WIDTH};
pub use doa::{
    perturb_doa, read_ground_truth_csv, records_per_point, synthesize_calibration,
    synthesize_doa_stream, true_doa, wire_capture, write_ground_truth_csv, GroundTruthRecord,
    GroundTruthRow, QUANTIZATION_LEVEL,
};
pub use scenario::{
    default_meeting_room, ArrayPose, CalibrationPoint, DropoutPolicy, Scenario, Trajectory,
    CHAIR_HEIGHT, CHAIR_POINTS, TABLE_HEIGHT, TABLE_LONG_SIDE, TABLE_POINTS, TABLE_SHORT_SIDE,
};
