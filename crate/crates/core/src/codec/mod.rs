//! Quantization, entropy coding, and the semantic-structured bitstream.

mod bits;
mod bitstream;
mod huffman;
mod quant;
mod rle;

pub use bits::BitVec;
pub use bitstream::{
    ConceptSegment, RateReport, SemanticBitstream, StreamHeader, MAGIC, VERSION,
};
pub use huffman::{empirical_entropy, DecodeOutcome, HuffmanTable};
pub use quant::{centers_for_level, QuantizerSpec, NUM_LEVELS};
pub use rle::{
    decode_label_map, encode_label_map, entries_from_bits, entries_to_bits, label_map_bits,
    RleEntry,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("quantization level {0} outside 1..={NUM_LEVELS}")]
    InvalidLevel(u8),
    #[error("softness must be positive, got {0}")]
    InvalidSoftness(f64),
    #[error("symbol {0} not present in the Huffman table")]
    UnknownSymbol(u8),
    #[error("cannot build a Huffman table from zero symbols")]
    EmptyAlphabet,
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported bitstream version {found} (expected {VERSION})")]
    UnsupportedVersion { found: u8 },
    #[error("truncated stream at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("{0}")]
    Malformed(String),
}
