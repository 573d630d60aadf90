//! Domain types shared by every other module: the base alphabet, sequences,
//! Phred qualities, read coordinates and the sample/entity hierarchy.

use std::fmt;

use thiserror::Error;

/// Highest Phred score representable in Sanger FASTQ (`~` = 126 = 93 + 33).
pub const MAX_PHRED: u8 = 93;
/// ASCII offset of Sanger FASTQ quality characters.
pub const PHRED_OFFSET: u8 = 33;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeqError {
    #[error("illegal base symbol {symbol:?} at position {position}")]
    IllegalSymbol { symbol: char, position: usize },
    #[error("quality character {symbol:?} at position {position} is outside Phred+33 range")]
    IllegalQuality { symbol: char, position: usize },
    #[error("phred score {score} at position {position} exceeds {MAX_PHRED}")]
    ScoreOutOfRange { score: u8, position: usize },
    #[error("unparseable read name {0:?}")]
    BadReadName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Base {
    A = 0,
    C = 1,
    G = 2,
    T = 3,
    N = 4,
}

impl Base {
    pub const CALLABLE: [Base; 4] = [Base::A, Base::C, Base::G, Base::T];

    /// Case-insensitive decode of one ASCII symbol.
    #[inline]
    pub fn from_ascii(b: u8) -> Option<Base> {
        match b {
            b'A' | b'a' => Some(Base::A),
            b'C' | b'c' => Some(Base::C),
            b'G' | b'g' => Some(Base::G),
            b'T' | b't' => Some(Base::T),
            b'N' | b'n' => Some(Base::N),
            _ => None,
        }
    }

    #[inline]
    pub fn to_ascii(self) -> u8 {
        b"ACGTN"[self as usize]
    }

    #[inline]
    pub fn complement(self) -> Base {
        match self {
            Base::A => Base::T,
            Base::C => Base::G,
            Base::G => Base::C,
            Base::T => Base::A,
            Base::N => Base::N,
        }
    }

    /// Index into a four-slot score array; `None` for N.
    #[inline]
    pub fn callable_index(self) -> Option<usize> {
        match self {
            Base::N => None,
            b => Some(b as usize),
        }
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_ascii() as char)
    }
}

/// A validated base string. Stored as uppercase ASCII over `{A,C,G,T,N}` so it
/// can be hashed, compared and written without conversion.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sequence(Vec<u8>);

impl Sequence {
    pub fn new() -> Self {
        Sequence(Vec::new())
    }

    /// Validates and uppercases `bytes`.
    pub fn from_ascii(bytes: &[u8]) -> Result<Self, SeqError> {
        let mut out = Vec::with_capacity(bytes.len());
        for (i, &b) in bytes.iter().enumerate() {
            match Base::from_ascii(b) {
                Some(base) => out.push(base.to_ascii()),
                None => {
                    return Err(SeqError::IllegalSymbol {
                        symbol: b as char,
                        position: i,
                    })
                }
            }
        }
        Ok(Sequence(out))
    }

    /// Validates and uppercases in place, reusing the allocation.
    pub fn from_vec(mut bytes: Vec<u8>) -> Result<Self, SeqError> {
        for (i, b) in bytes.iter_mut().enumerate() {
            match Base::from_ascii(*b) {
                Some(base) => *b = base.to_ascii(),
                None => {
                    return Err(SeqError::IllegalSymbol {
                        symbol: *b as char,
                        position: i,
                    })
                }
            }
        }
        Ok(Sequence(bytes))
    }

    pub fn from_bases<I: IntoIterator<Item = Base>>(bases: I) -> Self {
        Sequence(bases.into_iter().map(Base::to_ascii).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn bases(&self) -> impl DoubleEndedIterator<Item = Base> + ExactSizeIterator + '_ {
        // invariant: bytes are always one of ACGTN
        self.0.iter().map(|&b| Base::from_ascii(b).unwrap())
    }

    pub fn base(&self, i: usize) -> Base {
        Base::from_ascii(self.0[i]).unwrap()
    }

    pub fn contains_n(&self) -> bool {
        contains_n(&self.0)
    }

    pub fn reverse_complement(&self) -> Sequence {
        Sequence::from_bases(self.bases().rev().map(Base::complement))
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // ASCII by construction
        f.write_str(std::str::from_utf8(&self.0).unwrap())
    }
}

impl std::str::FromStr for Sequence {
    type Err = SeqError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Sequence::from_ascii(s.as_bytes())
    }
}

/// True iff any symbol is `N` (either case).
#[inline]
pub fn contains_n(seq: &[u8]) -> bool {
    memchr::memchr2(b'N', b'n', seq).is_some()
}

/// Per-base Phred scores.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct QualityVector(Vec<u8>);

impl QualityVector {
    pub fn from_scores(scores: Vec<u8>) -> Result<Self, SeqError> {
        if let Some((position, &score)) = scores.iter().enumerate().find(|(_, &s)| s > MAX_PHRED) {
            return Err(SeqError::ScoreOutOfRange { score, position });
        }
        Ok(QualityVector(scores))
    }

    /// Decodes Sanger Phred+33 characters.
    pub fn from_phred33(ascii: &[u8]) -> Result<Self, SeqError> {
        let mut scores = Vec::with_capacity(ascii.len());
        for (i, &c) in ascii.iter().enumerate() {
            if !(PHRED_OFFSET..=PHRED_OFFSET + MAX_PHRED).contains(&c) {
                return Err(SeqError::IllegalQuality {
                    symbol: c as char,
                    position: i,
                });
            }
            scores.push(c - PHRED_OFFSET);
        }
        Ok(QualityVector(scores))
    }

    pub fn to_phred33(&self) -> Vec<u8> {
        self.0.iter().map(|s| s + PHRED_OFFSET).collect()
    }

    pub fn scores(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Where on the flowcell a read was imaged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReadCoordinates {
    pub instrument: String,
    pub flowcell: String,
    pub lane: u32,
    pub tile: u32,
    pub x: u32,
    pub y: u32,
}

impl ReadCoordinates {
    /// Decomposes a composite read name.
    ///
    /// Accepted shapes, after dropping anything past the first whitespace, a
    /// `/1`-style mate suffix and a `#index` suffix:
    ///
    /// * `INSTRUMENT_FLOWCELL:lane:tile:x:y` (the last `_` splits instrument
    ///   from flowcell; without one the flowcell is empty)
    /// * `INSTRUMENT:run:FLOWCELL:lane:tile:x:y` (the run number is dropped)
    pub fn parse_name(name: &str) -> Result<Self, SeqError> {
        let bad = || SeqError::BadReadName(name.to_string());
        let mut core = name.split_whitespace().next().ok_or_else(bad)?;
        if let Some(i) = core.rfind('/') {
            core = &core[..i];
        }
        if let Some(i) = core.find('#') {
            core = &core[..i];
        }
        let fields: Vec<&str> = core.split(':').collect();
        let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
        let (instrument, flowcell, rest) = match fields.len() {
            5 => {
                let head = fields[0];
                let (ins, fc) = match head.rfind('_') {
                    Some(i) => (&head[..i], &head[i + 1..]),
                    None => (head, ""),
                };
                (ins, fc, &fields[1..])
            }
            7 => {
                num(fields[1])?;
                (fields[0], fields[2], &fields[3..])
            }
            _ => return Err(bad()),
        };
        if instrument.is_empty() {
            return Err(bad());
        }
        Ok(ReadCoordinates {
            instrument: instrument.to_string(),
            flowcell: flowcell.to_string(),
            lane: num(rest[0])?,
            tile: num(rest[1])?,
            x: num(rest[2])?,
            y: num(rest[3])?,
        })
    }

    /// Canonical composite name, the inverse of the five-field form.
    pub fn to_name(&self) -> String {
        if self.flowcell.is_empty() {
            format!("{}:{}:{}:{}:{}", self.instrument, self.lane, self.tile, self.x, self.y)
        } else {
            format!(
                "{}_{}:{}:{}:{}:{}",
                self.instrument, self.flowcell, self.lane, self.tile, self.x, self.y
            )
        }
    }
}

/// (experiment, sample group, sample) triple identifying one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleKey {
    pub experiment: u64,
    pub group: u64,
    pub sample: u64,
}

impl SampleKey {
    pub fn new(experiment: u64, group: u64, sample: u64) -> Self {
        SampleKey {
            experiment,
            group,
            sample,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.experiment > 0 && self.group > 0 && self.sample > 0
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.experiment, self.group, self.sample)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortRead {
    pub read_id: u64,
    pub sample: SampleKey,
    pub coords: ReadCoordinates,
    pub seq: Sequence,
    pub qual: QualityVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag {
    pub tag_id: u64,
    pub sample: SampleKey,
    pub seq: Sequence,
    pub frequency: u64,
    pub rank: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSequence {
    pub ref_id: u64,
    pub name: String,
    pub seq: Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strand {
    Forward,
    Reverse,
}

impl Strand {
    pub fn symbol(self) -> char {
        match self {
            Strand::Forward => '+',
            Strand::Reverse => '-',
        }
    }

    pub fn from_symbol(s: &str) -> Option<Strand> {
        match s {
            "+" => Some(Strand::Forward),
            "-" => Some(Strand::Reverse),
            _ => None,
        }
    }
}

/// Placement of a tag or read on a reference. `gene_id` is the `ref_id` of
/// the matched reference; `query_id` is the tag or read surrogate id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alignment {
    pub alignment_id: u64,
    pub sample: SampleKey,
    pub query_id: u64,
    pub gene_id: u64,
    /// 1-based start on the reference.
    pub pos: u64,
    pub strand: Strand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeneExpression {
    pub gene_id: u64,
    pub sample: SampleKey,
    pub total_frequency: u64,
    pub tag_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusSequence {
    pub ref_id: u64,
    pub seq: Sequence,
}

/// A read as it arrives, before alphabet and geometry checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRead {
    pub read_id: u64,
    pub sample: SampleKey,
    pub coords: ReadCoordinates,
    pub seq: Vec<u8>,
    pub qual: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    IllegalSymbol { symbol: char, position: usize },
    ScoreOutOfRange { score: u8, position: usize },
    LengthMismatch { seq: usize, qual: usize },
    LaneOutOfRange(u32),
    InvalidSample(SampleKey),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IllegalSymbol { symbol, position } => {
                write!(f, "illegal symbol {symbol:?} at {position}")
            }
            Violation::ScoreOutOfRange { score, position } => {
                write!(f, "phred score {score} at {position} out of range")
            }
            Violation::LengthMismatch { seq, qual } => {
                write!(f, "length mismatch: sequence {seq}, quality {qual}")
            }
            Violation::LaneOutOfRange(l) => write!(f, "lane {l} outside 1..=8"),
            Violation::InvalidSample(k) => write!(f, "sample key {k} has a zero component"),
        }
    }
}

/// Collects every invariant violation; an empty list means the read is valid.
/// `qual` holds Phred scores (not ASCII).
pub fn validate_read(read: &RawRead) -> Vec<Violation> {
    let mut out = Vec::new();
    for (position, &b) in read.seq.iter().enumerate() {
        if Base::from_ascii(b).is_none() {
            out.push(Violation::IllegalSymbol {
                symbol: b as char,
                position,
            });
        }
    }
    for (position, &score) in read.qual.iter().enumerate() {
        if score > MAX_PHRED {
            out.push(Violation::ScoreOutOfRange { score, position });
        }
    }
    if read.seq.len() != read.qual.len() {
        out.push(Violation::LengthMismatch {
            seq: read.seq.len(),
            qual: read.qual.len(),
        });
    }
    if !(1..=8).contains(&read.coords.lane) {
        out.push(Violation::LaneOutOfRange(read.coords.lane));
    }
    if !read.sample.is_valid() {
        out.push(Violation::InvalidSample(read.sample));
    }
    out
}

impl RawRead {
    pub fn into_read(self) -> Result<ShortRead, Vec<Violation>> {
        let violations = validate_read(&self);
        if !violations.is_empty() {
            return Err(violations);
        }
        Ok(ShortRead {
            read_id: self.read_id,
            sample: self.sample,
            coords: self.coords,
            seq: Sequence::from_vec(self.seq).expect("validated"),
            qual: QualityVector(self.qual),
        })
    }
}

/// True when the tag ranks of one sample form the permutation `1..=n`.
pub fn ranks_dense(tags: &[Tag]) -> bool {
    let mut ranks: Vec<u64> = tags.iter().map(|t| t.rank).collect();
    ranks.sort_unstable();
    ranks.iter().enumerate().all(|(i, &r)| r == i as u64 + 1)
}
