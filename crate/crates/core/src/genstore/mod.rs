//! Normalized genomic store: surrogate-keyed catalogs, a registry of raw
//! sequence files, sequence codecs and byte accounting across storage
//! representations.

use std::io;
use std::path::PathBuf;

use thiserror::Error;
use uuid::Uuid;

use crate::fastx::FastxError;
use crate::seqcore::SampleKey;

mod blob;
pub mod codec;
pub mod layout;
mod report;
mod store;

pub use blob::{BlobEntry, BlobRecord, BlobRecords, FormatTag};
pub use codec::{
    decode_blockdict, decode_packed2bit, encode_blockdict, encode_packed2bit, encode_sequence,
    BlockSize, Codec, EncodedSequence,
};
pub use report::{storage_report, CatalogBytes, StorageReport};
pub use store::{
    Catalog, FlatRead, NewAlignment, QueryKind, Run, Store, StoredAlignment, StoredRead, BLOB_DIR,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Parse(#[from] FastxError),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("record #{record} at byte {offset}: {reason}")]
    InvalidRead {
        offset: u64,
        record: u64,
        reason: String,
    },
    #[error("duplicate coordinates in sample {sample} for read {name:?} at byte {offset}")]
    DuplicateCoordinates {
        sample: SampleKey,
        name: String,
        offset: u64,
    },
    #[error("sample key {0} must have three positive components")]
    InvalidSample(SampleKey),
    #[error("lane {0} outside 1..=8")]
    LaneOutOfRange(u32),
    #[error("unknown format tag {0:?}")]
    UnknownFormat(String),
    #[error("no such file {0}")]
    MissingFile(PathBuf),
    #[error("blob {0} is already registered")]
    DuplicateBlob(Uuid),
    #[error("unknown blob {0}")]
    UnknownBlob(String),
    #[error("reference {0:?} already exists")]
    DuplicateReference(String),
    #[error("reference {0:?} is empty")]
    EmptyReference(String),
    #[error("unknown reference {0:?}")]
    UnknownReference(String),
    #[error("unknown {kind} id {id}")]
    Dangling { kind: &'static str, id: u64 },
    #[error("{kind} {id} does not belong to sample {sample}")]
    SampleMismatch {
        kind: &'static str,
        id: u64,
        sample: SampleKey,
    },
    #[error("alignment at {pos} of length {len} runs past {reference} (length {ref_len})")]
    OutOfBounds {
        pos: u64,
        len: u64,
        reference: String,
        ref_len: u64,
    },
    #[error("tags for sample {0} are already stored")]
    TagsExist(SampleKey),
    #[error("invalid tag: {0}")]
    InvalidTag(String),
    #[error("expression rows for sample {0} are already stored")]
    ExpressionExists(SampleKey),
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<StoreError>,
    },
}

impl StoreError {
    pub fn is_io(&self) -> bool {
        match self {
            StoreError::Io(_) | StoreError::MissingFile(_) => true,
            StoreError::Parse(e) => e.is_io(),
            StoreError::Row { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}
