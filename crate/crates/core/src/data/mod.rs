//! Dataset ingestion and the metered tree stores that provide amplitude
//! access to X, B and D.

mod matrix;
mod neighbors;
mod store;

pub use matrix::{emit_csv, ingest_csv, DataMatrix, Normalize, PadSpec};
pub use neighbors::NeighborSets;
pub use store::{Mapping, Payload, QueryCounts, StoreDump, StoreKind, TreeStore};
