//! Log ingestion, reductions, holdout splitting and the clustering baseline.

pub mod baseline;
pub mod export;
pub mod io;
pub mod reduce;
pub mod split;

pub use baseline::{baseline_hierarchical, baseline_with_distance, Baseline, RowDistance};
pub use io::{load_log, read_log, save_log, write_log, LogFormat};
pub use reduce::{
    ordered_adjacency, to_counts, to_socio, CountMatrix, OrderedAdjacency, SocioMatrix,
};
pub use split::{holdout_split, top_senders};
