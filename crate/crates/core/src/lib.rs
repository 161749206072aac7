//! Sound-source localization with microphone arrays at unknown positions.
//!
//! Each array estimates a direction of arrival (DOA) with SRP-PHAT over a
//! geodesic half-sphere grid. A fusion center aligns the per-array DOAs in
//! time and stacks them into one vector per time bin. Room locations follow
//! from an affine map fitted on calibration recordings, or from the leading
//! singular vectors of the calibration DOA matrix when no locations are
//! known.

pub mod center;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod fusion;
pub mod sim;
pub mod sphere_grid;

pub use error::{Error, Result};
pub use fusion::{
    fit_affine, fit_pca, map_affine, map_from_reference, map_with_missing, pca_to_room,
    project_pca, ActiveSet, AffineMap, CalibrationSet, ConcatenatedDoa, PcaModel, ReferencePair,
};
pub use sphere_grid::{build_halfsphere_grid, tdoa_for_doa, ArrayGeometry, DoaVector, HalfSphereGrid};
