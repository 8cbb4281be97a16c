//! Corpora, vocabularies, checkpoints and the synthetic oracle.

pub mod checkpoint;
pub mod corpus;
pub mod oracle;
pub mod vocab;

pub use checkpoint::Checkpoint;
pub use corpus::{Corpus, Split};
pub use oracle::OracleModel;
pub use vocab::{Vocab, END, NUM_SPECIALS, PAD, START, UNK};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
}
