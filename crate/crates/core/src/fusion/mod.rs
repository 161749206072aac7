//! Fusion of per-array DOAs into room locations.

mod affine;
mod io;
mod linalg;
mod pca;
mod types;

pub use affine::{
    fit_affine, map_affine, map_from_reference, map_with_missing, pca_room_matrix, pca_to_room,
    AffineFit, AffineMap, FitReport, MissingArrayMapper, OffsetPolicy, ReferencePair,
};
pub use io::{
    calibration_from_rows, observation_header, read_affine, read_calibration_csv,
    read_observations_csv, read_pca, write_affine, write_calibration_csv,
    write_observations_csv, write_pca, LabeledObservation,
};
pub use linalg::PINV_RTOL;
pub use pca::{fit_pca, fit_pca_matrix, pca_proximity, project_pca, PcaModel, PcaProjection};
pub use types::{
    concat_doas, ActiveSet, CalibrationSet, ConcatenatedDoa, Segment, MAX_ARRAYS,
    SUBVECTOR_TOLERANCE,
};
