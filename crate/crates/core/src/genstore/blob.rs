//! Registry of raw sequence files kept in their original format. Records are
//! streamed out through the chunked parsers on demand; file content never
//! enters the relational catalogs.

use std::fmt;
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use uuid::Uuid;

use super::layout::{RowReader, RowWriter};
use super::StoreError;
use crate::fastx::{FastaReader, FastaRecord, FastqReader, FastqRecord, FastxError};
use crate::seqcore::SampleKey;

const GUID_NAMESPACE: Uuid = Uuid::from_u128(0x6a1f_0c55_3f7e_4d1e_9b7a_51e0_2c3b_8d44);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormatTag {
    FastQ,
    Fasta,
}

impl FormatTag {
    fn code(self) -> u8 {
        match self {
            FormatTag::FastQ => 1,
            FormatTag::Fasta => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(FormatTag::FastQ),
            2 => Some(FormatTag::Fasta),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            FormatTag::FastQ => "fastq",
            FormatTag::Fasta => "fasta",
        }
    }

    /// Guesses from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "fastq" | "fq" => Some(FormatTag::FastQ),
            "fasta" | "fa" | "fna" => Some(FormatTag::Fasta),
            _ => None,
        }
    }
}

impl FromStr for FormatTag {
    type Err = StoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fastq" | "fq" => Ok(FormatTag::FastQ),
            "fasta" | "fa" => Ok(FormatTag::Fasta),
            _ => Err(StoreError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for FormatTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatTag::FastQ => "FastQ",
            FormatTag::Fasta => "Fasta",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlobEntry {
    pub guid: Uuid,
    pub sample: SampleKey,
    pub lane: u32,
    /// Absolute, or relative to the store directory.
    pub path: PathBuf,
    pub byte_length: u64,
    pub format: FormatTag,
}

impl BlobEntry {
    pub(crate) fn encode(&self, out: &mut Vec<u8>) {
        RowWriter::new()
            .raw(self.guid.as_bytes())
            .id(self.sample.experiment)
            .id(self.sample.group)
            .id(self.sample.sample)
            .count(self.lane)
            .flag(self.format.code())
            .id(self.byte_length)
            .bytes(self.path.to_string_lossy().as_bytes())
            .finish_into(out);
    }

    pub(crate) fn decode(body: &[u8]) -> io::Result<Self> {
        let mut r = RowReader::new(body);
        let guid = Uuid::from_slice(r.raw(16)?).expect("16 bytes");
        let sample = SampleKey::new(r.id()?, r.id()?, r.id()?);
        let lane = r.count()?;
        let format = FormatTag::from_code(r.flag()?)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "bad format code"))?;
        let byte_length = r.id()?;
        let path = PathBuf::from(r.string()?);
        r.finish()?;
        Ok(BlobEntry {
            guid,
            sample,
            lane,
            path,
            byte_length,
            format,
        })
    }
}

/// Streaming digest of a file plus its length.
pub(crate) fn hash_file(path: &Path) -> io::Result<([u8; 32], u64)> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut len = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        len += n as u64;
    }
    Ok((h.finalize().into(), len))
}

/// Deterministic guid over content, sample, lane and format.
pub(crate) fn blob_guid(digest: &[u8; 32], sample: SampleKey, lane: u32, format: FormatTag) -> Uuid {
    let mut name = digest.to_vec();
    for v in [sample.experiment, sample.group, sample.sample] {
        name.extend_from_slice(&v.to_le_bytes());
    }
    name.extend_from_slice(&lane.to_le_bytes());
    name.push(format.code());
    Uuid::new_v5(&GUID_NAMESPACE, &name)
}

#[derive(Debug, Clone)]
pub enum BlobRecord {
    Fastq(FastqRecord),
    Fasta(FastaRecord),
}

/// Record stream over a registered file.
pub enum BlobRecords {
    Fastq(FastqReader<File>),
    Fasta(FastaReader<File>),
}

impl BlobRecords {
    pub(crate) fn open(path: &Path, format: FormatTag, buffer_size: usize) -> Result<Self, StoreError> {
        let f = File::open(path).map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
        Ok(match format {
            FormatTag::FastQ => BlobRecords::Fastq(FastqReader::new(f, buffer_size)?),
            FormatTag::Fasta => BlobRecords::Fasta(FastaReader::new(f, buffer_size)?),
        })
    }

    pub fn count(self) -> Result<u64, FastxError> {
        match self {
            BlobRecords::Fastq(r) => r.count(),
            BlobRecords::Fasta(r) => r.count(),
        }
    }
}

impl Iterator for BlobRecords {
    type Item = Result<BlobRecord, FastxError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            BlobRecords::Fastq(r) => r.next().map(|x| x.map(BlobRecord::Fastq)),
            BlobRecords::Fasta(r) => r.next().map(|x| x.map(BlobRecord::Fasta)),
        }
    }
}
