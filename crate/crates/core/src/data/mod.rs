//! Action/episode data model, persistence, chunking and dataset statistics.

pub mod action;
pub mod chunk;
pub mod episode;
pub mod stats;
pub mod synth;

use thiserror::Error;

pub use action::{
    assemble_action, split_action, ActionParts, ActionVector, ProprioState, ACTION_DIM,
    ACTION_LAYOUT, PROPRIO_DIM, PROPRIO_LAYOUT,
};
pub use chunk::{chunk_episode, flatten_chunks, ActionChunk};
pub use episode::{read_episode, write_episode, Episode, EpisodeHeader, EpisodeWriter, Step};
pub use stats::{toggle_sparsity, ChunkStats, SparsityReport};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{what} has {found} dimensions, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("episode has no steps")]
    EmptyEpisode,
    #[error("chunk horizon and stride must be >= 1")]
    InvalidHorizon,
    #[error("invalid episode: {0}")]
    Invalid(String),
    #[error("episode file is version {found}, this reader understands version {expected}")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("corrupt record at step {index}: {reason}")]
    CorruptRecord { index: usize, reason: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}
