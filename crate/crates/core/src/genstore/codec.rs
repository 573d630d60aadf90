//! Sequence codecs: 2-bit packing with an N exception list, plain text, and a
//! block-level prefix/dictionary codec modelled on page compression.

use thiserror::Error;

use crate::seqcore::{Base, Sequence};

/// Above this fraction of N symbols the exception list costs more than
/// packing saves, so [`encode_sequence`] keeps text.
pub const MAX_PACKED_N_FRACTION: f64 = 0.25;

/// Block budget used by the storage report, in text bytes per block.
pub const DEFAULT_BLOCK_BYTES: usize = 8 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("payload holds {actual} bytes, expected {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("exception position {0} outside the sequence")]
    ExceptionOutOfRange(u32),
    #[error("text payload is not a valid sequence")]
    BadText,
    #[error("block stream truncated at byte {0}")]
    Truncated(usize),
    #[error("dictionary index {index} out of range ({len} entries)")]
    BadIndex { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec {
    Text,
    Packed2Bit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    pub codec: Codec,
    pub payload: Vec<u8>,
    /// Positions holding N; only used by the packed codec.
    pub n_exceptions: Vec<u32>,
    pub original_length: u32,
}

impl EncodedSequence {
    /// Bytes this value takes in a catalog row: length (4), codec flag (1),
    /// payload, and for packed sequences an exception count (4) plus 4 bytes
    /// per exception.
    pub fn stored_len(&self) -> usize {
        let base = 4 + 1 + self.payload.len();
        match self.codec {
            Codec::Text => base,
            Codec::Packed2Bit => base + 4 + 4 * self.n_exceptions.len(),
        }
    }

    pub fn decode(&self) -> Result<Sequence, CodecError> {
        match self.codec {
            Codec::Text => Sequence::from_ascii(&self.payload).map_err(|_| CodecError::BadText),
            Codec::Packed2Bit => decode_packed2bit(self),
        }
    }
}

#[inline]
fn code(base: Base) -> u8 {
    match base {
        Base::A | Base::N => 0b00,
        Base::C => 0b01,
        Base::G => 0b10,
        Base::T => 0b11,
    }
}

const DECODE: [u8; 4] = *b"ACGT";

/// Four bases per byte, first base in the high bits, final byte zero-padded.
/// N positions go to the exception list and are packed as A.
pub fn encode_packed2bit(seq: &Sequence) -> EncodedSequence {
    let bytes = seq.as_bytes();
    let mut payload = vec![0u8; bytes.len().div_ceil(4)];
    let mut n_exceptions = Vec::new();
    for (i, base) in seq.bases().enumerate() {
        if base == Base::N {
            n_exceptions.push(i as u32);
        }
        payload[i / 4] |= code(base) << (6 - 2 * (i % 4));
    }
    EncodedSequence {
        codec: Codec::Packed2Bit,
        payload,
        n_exceptions,
        original_length: bytes.len() as u32,
    }
}

pub fn decode_packed2bit(e: &EncodedSequence) -> Result<Sequence, CodecError> {
    let len = e.original_length as usize;
    let expected = len.div_ceil(4);
    if e.payload.len() != expected {
        return Err(CodecError::PayloadLength {
            expected,
            actual: e.payload.len(),
        });
    }
    let mut out: Vec<u8> = (0..len)
        .map(|i| DECODE[((e.payload[i / 4] >> (6 - 2 * (i % 4))) & 0b11) as usize])
        .collect();
    for &p in &e.n_exceptions {
        *out.get_mut(p as usize).ok_or(CodecError::ExceptionOutOfRange(p))? = b'N';
    }
    Ok(Sequence::from_vec(out).expect("decoded alphabet"))
}

pub fn encode_text(seq: &Sequence) -> EncodedSequence {
    EncodedSequence {
        codec: Codec::Text,
        payload: seq.as_bytes().to_vec(),
        n_exceptions: Vec::new(),
        original_length: seq.len() as u32,
    }
}

/// Packs unless more than a quarter of the symbols are N.
pub fn encode_sequence(seq: &Sequence) -> EncodedSequence {
    let n = seq.as_bytes().iter().filter(|&&b| b == b'N').count();
    if !seq.is_empty() && n as f64 > MAX_PACKED_N_FRACTION * seq.len() as f64 {
        encode_text(seq)
    } else {
        encode_packed2bit(seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSize {
    Rows(usize),
    /// Close a block once its text reaches this many bytes.
    Bytes(usize),
}

impl Default for BlockSize {
    fn default() -> Self {
        BlockSize::Bytes(DEFAULT_BLOCK_BYTES)
    }
}

/// Splits row indices into blocks.
fn blocks<T: AsRef<[u8]>>(rows: &[T], size: BlockSize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut bytes = 0;
    for (i, r) in rows.iter().enumerate() {
        bytes += r.as_ref().len();
        let close = match size {
            BlockSize::Rows(n) => i + 1 - start >= n.max(1),
            BlockSize::Bytes(n) => bytes >= n.max(1),
        };
        if close {
            out.push(start..i + 1);
            start = i + 1;
            bytes = 0;
        }
    }
    if start < rows.len() {
        out.push(start..rows.len());
    }
    out
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(buf: &[u8], pos: &mut usize) -> Result<u64, CodecError> {
    let mut v = 0u64;
    let mut shift = 0;
    loop {
        let b = *buf.get(*pos).ok_or(CodecError::Truncated(*pos))?;
        *pos += 1;
        v |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
        if shift > 63 {
            return Err(CodecError::Truncated(*pos));
        }
    }
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], CodecError> {
    let end = pos.checked_add(n).filter(|&e| e <= buf.len()).ok_or(CodecError::Truncated(*pos))?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

fn index_bits(dict_len: usize) -> u32 {
    if dict_len <= 1 {
        0
    } else {
        usize::BITS - (dict_len - 1).leading_zeros()
    }
}

/// Block codec over byte strings.
///
/// Each block stores the rows' common prefix once, a dictionary of the
/// distinct suffixes in first-seen order, and one bit-packed dictionary index
/// per row (`ceil(log2(dict_len))` bits). Repeated rows cost only their index;
/// diverse rows pay for themselves plus the index.
///
/// Block layout: varint rows, varint prefix_len, prefix, varint dict_len,
/// dict entries (varint len + bytes), packed indices.
pub fn encode_blockdict<T: AsRef<[u8]>>(rows: &[T], size: BlockSize) -> Vec<u8> {
    let mut out = Vec::new();
    for block in blocks(rows, size) {
        let rows = &rows[block];
        let first = rows[0].as_ref();
        let prefix_len = rows.iter().skip(1).fold(first.len(), |acc, r| {
            let r = r.as_ref();
            acc.min(first.iter().zip(r).take_while(|(a, b)| a == b).count())
        });
        let mut dict: Vec<&[u8]> = Vec::new();
        let mut lookup: std::collections::HashMap<&[u8], usize> = Default::default();
        let indices: Vec<usize> = rows
            .iter()
            .map(|r| {
                let suffix = &r.as_ref()[prefix_len..];
                *lookup.entry(suffix).or_insert_with(|| {
                    dict.push(suffix);
                    dict.len() - 1
                })
            })
            .collect();
        put_varint(&mut out, rows.len() as u64);
        put_varint(&mut out, prefix_len as u64);
        out.extend_from_slice(&first[..prefix_len]);
        put_varint(&mut out, dict.len() as u64);
        for entry in &dict {
            put_varint(&mut out, entry.len() as u64);
            out.extend_from_slice(entry);
        }
        let bits = index_bits(dict.len());
        let mut acc = 0u64;
        let mut filled = 0u32;
        for idx in indices {
            if bits == 0 {
                break;
            }
            acc = (acc << bits) | idx as u64;
            filled += bits;
            while filled >= 8 {
                out.push((acc >> (filled - 8)) as u8);
                filled -= 8;
            }
            acc &= (1u64 << filled) - 1;
        }
        if filled > 0 {
            out.push((acc << (8 - filled)) as u8);
        }
    }
    out
}

pub fn decode_blockdict(buf: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let rows = get_varint(buf, &mut pos)? as usize;
        let prefix_len = get_varint(buf, &mut pos)? as usize;
        let prefix = take(buf, &mut pos, prefix_len)?;
        let dict_len = get_varint(buf, &mut pos)? as usize;
        let mut dict = Vec::with_capacity(dict_len.min(buf.len()));
        for _ in 0..dict_len {
            let n = get_varint(buf, &mut pos)? as usize;
            dict.push(take(buf, &mut pos, n)?);
        }
        let bits = index_bits(dict_len);
        let packed = take(buf, &mut pos, (rows * bits as usize).div_ceil(8))?;
        let mut bit = 0usize;
        for _ in 0..rows {
            let mut idx = 0usize;
            for _ in 0..bits {
                let b = (packed[bit / 8] >> (7 - bit % 8)) & 1;
                idx = (idx << 1) | b as usize;
                bit += 1;
            }
            let entry = dict.get(idx).ok_or(CodecError::BadIndex {
                index: idx,
                len: dict_len,
            })?;
            let mut row = Vec::with_capacity(prefix.len() + entry.len());
            row.extend_from_slice(prefix);
            row.extend_from_slice(entry);
            out.push(row);
        }
    }
    Ok(out)
}
