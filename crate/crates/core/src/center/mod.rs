//! Fusion center: wire ingestion, storage, time alignment and queries.

mod join;
mod server;
mod storage;
mod wire;

pub use join::{join_bins, query, query_all, write_rows_csv, JoinConfig, JoinedRow};
pub use server::{replay_capture, serve_wire, ServerConfig, SharedStorage, WireServer};
pub use storage::{log_file_name, IngestStats, Storage};
pub use wire::{WireRecord, WIRE_NORM_TOLERANCE};
