//! Chunk-buffered FASTQ/FASTA readers and writers.
//!
//! Parsing is split from streaming. [`ChunkReader`] owns a fixed byte buffer
//! and pages the source through it; a framer looks at the unparsed tail of
//! the buffer and either cuts one entry off the front or reports that the
//! entry is incomplete. On an incomplete entry the remaining bytes are moved
//! to the start of the buffer and the next chunk is appended behind them.
//!
//! A FASTQ record has to fit in the buffer. FASTA is framed line by line and
//! sequence lines may be split at chunk boundaries, so a chromosome-sized
//! record only needs its header line to fit.

use std::borrow::Borrow;
use std::io::{self, Read, Write};
use std::ops::Range;

use thiserror::Error;

use crate::seqcore::{Base, QualityVector, SeqError, Sequence};

pub const DEFAULT_BUFFER_SIZE: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum FastxError {
    #[error("I/O error at byte {offset}: {source}")]
    Io { offset: u64, source: io::Error },
    #[error("malformed record #{record} at byte {offset}: {reason}")]
    Malformed {
        offset: u64,
        record: u64,
        reason: String,
    },
    #[error(
        "record #{record} at byte {offset} needs {required} bytes but the buffer holds {capacity}"
    )]
    Capacity {
        offset: u64,
        record: u64,
        required: u64,
        capacity: usize,
    },
    #[error("buffer size must be at least one byte")]
    ZeroBuffer,
}

impl FastxError {
    pub fn offset(&self) -> Option<u64> {
        match self {
            FastxError::Io { offset, .. }
            | FastxError::Malformed { offset, .. }
            | FastxError::Capacity { offset, .. } => Some(*offset),
            FastxError::ZeroBuffer => None,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, FastxError::Io { .. })
    }
}

pub type Result<T, E = FastxError> = std::result::Result<T, E>;

/// Outcome of framing the unparsed part of the buffer.
#[derive(Debug)]
pub(crate) enum Frame<S> {
    /// An entry of `n` bytes (terminator included) starts at the window head.
    Entry(usize, S),
    /// `n` bytes carry nothing (blank lines).
    Skip(usize),
    /// The window ends inside an entry.
    Incomplete,
}

/// Bytes-level grammar plugged into [`ChunkReader`]. Framing errors carry an
/// offset relative to the window start.
pub(crate) trait Framer {
    type Span;
    fn frame(&mut self, window: &[u8], eof: bool) -> Result<Frame<Self::Span>, (usize, String)>;
    /// Line terminators that close one entry, used to size an oversized entry.
    fn lines_per_entry(&self) -> usize;
}

/// An entry located in the reader's buffer.
#[derive(Debug, Clone)]
pub(crate) struct Located<S> {
    pub start: usize,
    pub offset: u64,
    pub span: S,
}

/// Pages a byte source through a fixed-capacity buffer.
///
/// Invariant at every step: `buffer_pos <= bytes_read <= buffer_size`, and
/// `file_pos` is the number of bytes consumed from the source.
#[derive(Debug)]
pub struct ChunkReader<R> {
    source: R,
    buffer: Vec<u8>,
    file_pos: u64,
    buffer_pos: usize,
    buffer_offset: usize,
    bytes_read: usize,
    eof: bool,
    entries: u64,
}

impl<R: Read> ChunkReader<R> {
    pub fn new(source: R, buffer_size: usize) -> Result<Self> {
        if buffer_size == 0 {
            return Err(FastxError::ZeroBuffer);
        }
        Ok(ChunkReader {
            source,
            buffer: vec![0; buffer_size],
            file_pos: 0,
            buffer_pos: 0,
            buffer_offset: 0,
            bytes_read: 0,
            eof: false,
            entries: 0,
        })
    }

    pub fn buffer_size(&self) -> usize {
        self.buffer.len()
    }
    pub fn file_pos(&self) -> u64 {
        self.file_pos
    }
    pub fn buffer_pos(&self) -> usize {
        self.buffer_pos
    }
    pub fn buffer_offset(&self) -> usize {
        self.buffer_offset
    }
    pub fn bytes_read(&self) -> usize {
        self.bytes_read
    }

    /// Fills the buffer behind any carried-over partial entry.
    ///
    /// Returns the number of valid bytes now in the buffer (carried plus new)
    /// when new bytes arrived, and 0 once the source is exhausted. The carried
    /// bytes stay in place on a 0 return.
    pub fn read_chunk(&mut self) -> Result<usize> {
        let len = self.buffer.len() - self.buffer_offset;
        let mut read = 0;
        while read < len {
            let dst = &mut self.buffer[self.buffer_offset + read..];
            match self.source.read(dst) {
                Ok(0) => break,
                Ok(n) => read += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(source) => {
                    return Err(FastxError::Io {
                        offset: self.file_pos + read as u64,
                        source,
                    })
                }
            }
        }
        self.file_pos += read as u64;
        self.buffer_pos = 0;
        if read > 0 && self.buffer_offset > 0 {
            read += self.buffer_offset;
            self.buffer_offset = 0;
        }
        Ok(read)
    }

    fn window_origin(&self) -> u64 {
        self.file_pos - self.bytes_read as u64
    }

    fn malformed(&self, rel: usize, reason: String) -> FastxError {
        FastxError::Malformed {
            offset: self.window_origin() + (self.buffer_pos + rel) as u64,
            record: self.entries + 1,
            reason,
        }
    }

    pub(crate) fn next_entry<F: Framer>(&mut self, framer: &mut F) -> Result<Option<Located<F::Span>>> {
        loop {
            if self.buffer_pos >= self.bytes_read {
                if self.eof {
                    return Ok(None);
                }
                let n = self.read_chunk()?;
                if n == 0 {
                    self.eof = true;
                    if self.buffer_offset == 0 {
                        self.bytes_read = 0;
                        return Ok(None);
                    }
                    // flush the carried tail as the last window
                    self.bytes_read = self.buffer_offset;
                    self.buffer_offset = 0;
                    self.buffer_pos = 0;
                } else {
                    self.bytes_read = n;
                }
            }
            let window = &self.buffer[self.buffer_pos..self.bytes_read];
            match framer.frame(window, self.eof) {
                Ok(Frame::Entry(n, span)) => {
                    let start = self.buffer_pos;
                    let offset = self.window_origin() + start as u64;
                    self.buffer_pos += n;
                    self.entries += 1;
                    return Ok(Some(Located {
                        start,
                        offset,
                        span,
                    }));
                }
                Ok(Frame::Skip(n)) => self.buffer_pos += n,
                Ok(Frame::Incomplete) => {
                    if self.eof {
                        let reason = "truncated record at end of input".to_string();
                        return Err(self.malformed(0, reason));
                    }
                    if self.buffer_pos == 0 && self.bytes_read == self.buffer.len() {
                        return Err(self.capacity_error(framer.lines_per_entry()));
                    }
                    // paging: move the incomplete entry to the buffer start
                    self.buffer.copy_within(self.buffer_pos..self.bytes_read, 0);
                    self.buffer_offset = self.bytes_read - self.buffer_pos;
                    self.buffer_pos = self.bytes_read;
                }
                Err((rel, reason)) => return Err(self.malformed(rel, reason)),
            }
        }
    }

    /// Scans ahead to report how large the oversized entry really is.
    fn capacity_error(&mut self, lines: usize) -> FastxError {
        let offset = self.window_origin() + self.buffer_pos as u64;
        let mut seen = 0usize;
        let mut required = 0u64;
        let mut done = false;
        for &b in &self.buffer[self.buffer_pos..self.bytes_read] {
            required += 1;
            if b == b'\n' {
                seen += 1;
                if seen == lines {
                    done = true;
                    break;
                }
            }
        }
        let mut scratch = [0u8; 8192];
        while !done {
            match self.source.read(&mut scratch) {
                Ok(0) => break,
                Ok(n) => {
                    for &b in &scratch[..n] {
                        required += 1;
                        if b == b'\n' {
                            seen += 1;
                            if seen == lines {
                                done = true;
                                break;
                            }
                        }
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(_) => break,
            }
        }
        self.eof = true;
        self.bytes_read = 0;
        self.buffer_pos = 0;
        FastxError::Capacity {
            offset,
            record: self.entries + 1,
            required,
            capacity: self.buffer.len(),
        }
    }

    pub(crate) fn slice(&self, start: usize, r: &Range<usize>) -> &[u8] {
        &self.buffer[start + r.start..start + r.end]
    }

    pub(crate) fn entries(&self) -> u64 {
        self.entries
    }
}

/// Position of the next `\n` in `buf`, or `None`.
#[inline]
fn find_nl(buf: &[u8]) -> Option<usize> {
    memchr::memchr(b'\n', buf)
}

#[inline]
fn trim_cr(buf: &[u8], r: Range<usize>) -> Range<usize> {
    if r.end > r.start && buf[r.end - 1] == b'\r' {
        r.start..r.end - 1
    } else {
        r
    }
}

/// Leading blank lines (LF or CRLF). `None` when more data is needed.
fn blank_prefix(window: &[u8], eof: bool) -> Option<usize> {
    match window {
        [b'\n', ..] => Some(1),
        [b'\r', b'\n', ..] => Some(2),
        [b'\r'] if eof => Some(1),
        [b'\r'] => None,
        _ => Some(0),
    }
}

/// Line ranges of one FASTQ record: header, sequence, separator, quality,
/// each without terminator and relative to the entry start.
#[derive(Debug, Clone)]
pub(crate) struct FastqSpan {
    pub lines: [Range<usize>; 4],
}

#[derive(Debug, Default)]
pub(crate) struct FastqFramer;

impl Framer for FastqFramer {
    type Span = FastqSpan;

    fn frame(&mut self, w: &[u8], eof: bool) -> Result<Frame<FastqSpan>, (usize, String)> {
        if w.is_empty() {
            return Ok(Frame::Incomplete);
        }
        match blank_prefix(w, eof) {
            None => return Ok(Frame::Incomplete),
            Some(0) => {}
            Some(n) => return Ok(Frame::Skip(n)),
        }
        if w[0] != b'@' {
            return Err((0, format!("expected '@' but found {:?}", w[0] as char)));
        }
        let mut lines: [Range<usize>; 4] = Default::default();
        let mut pos = 0;
        for (i, line) in lines.iter_mut().enumerate() {
            match find_nl(&w[pos..]) {
                Some(n) => {
                    *line = trim_cr(w, pos..pos + n);
                    pos += n + 1;
                }
                None if eof && i == 3 => {
                    *line = trim_cr(w, pos..w.len());
                    pos = w.len();
                }
                None => return Ok(Frame::Incomplete),
            }
        }
        let header = &lines[0];
        let sep = &lines[2];
        if sep.is_empty() || w[sep.start] != b'+' {
            return Err((sep.start, "expected '+' separator line".to_string()));
        }
        let (seq, qual) = (&lines[1], &lines[3]);
        if seq.len() != qual.len() {
            return Err((
                qual.start,
                format!("sequence length {} != quality length {}", seq.len(), qual.len()),
            ));
        }
        lines[0] = header.start + 1..header.end;
        Ok(Frame::Entry(pos, FastqSpan { lines }))
    }

    fn lines_per_entry(&self) -> usize {
        4
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastqRecord {
    pub name: String,
    pub seq: Sequence,
    pub qual: QualityVector,
}

/// Borrowed view of one FASTQ record straight out of the read buffer.
#[derive(Debug, Clone, Copy)]
pub struct RawFastq<'a> {
    pub offset: u64,
    pub name: &'a [u8],
    pub seq: &'a [u8],
    pub plus: &'a [u8],
    pub qual: &'a [u8],
}

/// Streaming FASTQ reader. Iterating yields owned records; after the first
/// error the iterator is exhausted.
pub struct FastqReader<R> {
    chunks: ChunkReader<R>,
    framer: FastqFramer,
    failed: bool,
}

pub fn open_fastq<R: Read>(source: R, buffer_size: usize) -> Result<FastqReader<R>> {
    FastqReader::new(source, buffer_size)
}

impl<R: Read> FastqReader<R> {
    pub fn new(source: R, buffer_size: usize) -> Result<Self> {
        Ok(FastqReader {
            chunks: ChunkReader::new(source, buffer_size)?,
            framer: FastqFramer,
            failed: false,
        })
    }

    pub fn chunks(&self) -> &ChunkReader<R> {
        &self.chunks
    }

    /// Records returned so far.
    pub fn records_read(&self) -> u64 {
        self.chunks.entries()
    }

    pub fn next_raw(&mut self) -> Result<Option<RawFastq<'_>>> {
        let Some(loc) = self.chunks.next_entry(&mut self.framer)? else {
            return Ok(None);
        };
        let [name, seq, plus, qual] = &loc.span.lines;
        Ok(Some(RawFastq {
            offset: loc.offset,
            name: self.chunks.slice(loc.start, name),
            seq: self.chunks.slice(loc.start, seq),
            plus: self.chunks.slice(loc.start, &(plus.start + 1..plus.end)),
            qual: self.chunks.slice(loc.start, qual),
        }))
    }

    pub fn next_record(&mut self) -> Result<Option<FastqRecord>> {
        let record = self.records_read() + 1;
        let Some(raw) = self.next_raw()? else {
            return Ok(None);
        };
        raw.to_record(record).map(Some)
    }

    /// Counts records by framing only; nothing is copied out of the buffer.
    pub fn count(mut self) -> Result<u64> {
        while self.chunks.next_entry(&mut self.framer)?.is_some() {}
        Ok(self.chunks.entries())
    }
}

impl RawFastq<'_> {
    /// Validates alphabet and qualities; `record` is the 1-based ordinal used
    /// in error reports.
    pub fn to_record(&self, record: u64) -> Result<FastqRecord> {
        let name_line = self.offset + 1;
        let seq_line = name_line + self.name.len() as u64 + 1;
        let name = String::from_utf8(self.name.to_vec()).map_err(|_| FastxError::Malformed {
            offset: self.offset,
            record,
            reason: "read name is not UTF-8".into(),
        })?;
        let seq = Sequence::from_ascii(self.seq).map_err(|e| seq_error(e, seq_line, record))?;
        // the quality line offset is approximate when CRLF is in use
        let qual_line = seq_line + 2 * (self.seq.len() as u64 + 1) + self.plus.len() as u64 + 1;
        let qual =
            QualityVector::from_phred33(self.qual).map_err(|e| seq_error(e, qual_line, record))?;
        Ok(FastqRecord { name, seq, qual })
    }
}

fn seq_error(e: SeqError, line_offset: u64, record: u64) -> FastxError {
    let position = match &e {
        SeqError::IllegalSymbol { position, .. }
        | SeqError::IllegalQuality { position, .. }
        | SeqError::ScoreOutOfRange { position, .. } => *position as u64,
        SeqError::BadReadName(_) => 0,
    };
    FastxError::Malformed {
        offset: line_offset + position,
        record,
        reason: e.to_string(),
    }
}

impl<R: Read> Iterator for FastqReader<R> {
    type Item = Result<FastqRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(r) => r.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum FastaPiece {
    Header(Range<usize>),
    /// Sequence bytes; `line_end` is false when the line continues in the
    /// next chunk.
    Bases(Range<usize>),
}

#[derive(Debug)]
pub(crate) struct FastaFramer {
    at_line_start: bool,
}

impl Default for FastaFramer {
    fn default() -> Self {
        FastaFramer {
            at_line_start: true,
        }
    }
}

impl Framer for FastaFramer {
    type Span = FastaPiece;

    fn frame(&mut self, w: &[u8], eof: bool) -> Result<Frame<FastaPiece>, (usize, String)> {
        if w.is_empty() {
            return Ok(Frame::Incomplete);
        }
        if self.at_line_start {
            match blank_prefix(w, eof) {
                None => return Ok(Frame::Incomplete),
                Some(0) => {}
                Some(n) => return Ok(Frame::Skip(n)),
            }
            if w[0] == b'>' {
                return Ok(match find_nl(w) {
                    Some(n) => Frame::Entry(n + 1, FastaPiece::Header(trim_cr(w, 1..n))),
                    None if eof => Frame::Entry(w.len(), FastaPiece::Header(trim_cr(w, 1..w.len()))),
                    None => Frame::Incomplete,
                });
            }
        }
        match find_nl(w) {
            Some(n) => {
                self.at_line_start = true;
                Ok(Frame::Entry(n + 1, FastaPiece::Bases(trim_cr(w, 0..n))))
            }
            None if eof => {
                self.at_line_start = true;
                Ok(Frame::Entry(w.len(), FastaPiece::Bases(trim_cr(w, 0..w.len()))))
            }
            None => {
                // hold back a trailing CR so a split CRLF is seen whole
                let take = if w[w.len() - 1] == b'\r' { w.len() - 1 } else { w.len() };
                if take == 0 {
                    return Ok(Frame::Incomplete);
                }
                self.at_line_start = false;
                Ok(Frame::Entry(take, FastaPiece::Bases(0..take)))
            }
        }
    }

    fn lines_per_entry(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastaRecord {
    pub name: String,
    pub seq: Sequence,
}

pub struct FastaReader<R> {
    chunks: ChunkReader<R>,
    framer: FastaFramer,
    pending: Option<(u64, String)>,
    records: u64,
    failed: bool,
}

pub fn open_fasta<R: Read>(source: R, buffer_size: usize) -> Result<FastaReader<R>> {
    FastaReader::new(source, buffer_size)
}

impl<R: Read> FastaReader<R> {
    pub fn new(source: R, buffer_size: usize) -> Result<Self> {
        Ok(FastaReader {
            chunks: ChunkReader::new(source, buffer_size)?,
            framer: FastaFramer::default(),
            pending: None,
            records: 0,
            failed: false,
        })
    }

    pub fn chunks(&self) -> &ChunkReader<R> {
        &self.chunks
    }

    fn header(&self, start: usize, r: &Range<usize>, offset: u64) -> Result<String> {
        String::from_utf8(self.chunks.slice(start, r).to_vec()).map_err(|_| FastxError::Malformed {
            offset,
            record: self.records + 1,
            reason: "header is not UTF-8".into(),
        })
    }

    pub fn next_record(&mut self) -> Result<Option<FastaRecord>> {
        let mut current = self.pending.take();
        let mut bases: Vec<u8> = Vec::new();
        while let Some(loc) = self.chunks.next_entry(&mut self.framer)? {
            match &loc.span {
                FastaPiece::Header(r) => {
                    let name = self.header(loc.start, r, loc.offset)?;
                    if current.is_some() {
                        self.pending = Some((loc.offset, name));
                        break;
                    }
                    current = Some((loc.offset, name));
                }
                FastaPiece::Bases(r) => {
                    let line = self.chunks.slice(loc.start, r);
                    if current.is_none() {
                        if line.is_empty() {
                            continue;
                        }
                        return Err(FastxError::Malformed {
                            offset: loc.offset,
                            record: self.records + 1,
                            reason: "sequence data before the first '>' header".into(),
                        });
                    }
                    bases.reserve(line.len());
                    for (i, &b) in line.iter().enumerate() {
                        match Base::from_ascii(b) {
                            Some(base) => bases.push(base.to_ascii()),
                            None => {
                                return Err(FastxError::Malformed {
                                    offset: loc.offset + i as u64,
                                    record: self.records + 1,
                                    reason: format!("illegal base symbol {:?}", b as char),
                                })
                            }
                        }
                    }
                }
            }
        }
        Ok(current.map(|(_, name)| {
            self.records += 1;
            FastaRecord {
                name,
                seq: Sequence::from_vec(bases).expect("validated while reading"),
            }
        }))
    }

    /// Counts header lines without accumulating sequences.
    pub fn count(mut self) -> Result<u64> {
        let mut n = self.pending.is_some() as u64;
        while let Some(loc) = self.chunks.next_entry(&mut self.framer)? {
            if let FastaPiece::Header(_) = loc.span {
                n += 1;
            } else if n == 0 && !self.chunks.slice(loc.start, &bases_range(&loc.span)).is_empty() {
                return Err(FastxError::Malformed {
                    offset: loc.offset,
                    record: 1,
                    reason: "sequence data before the first '>' header".into(),
                });
            }
        }
        Ok(n)
    }
}

fn bases_range(p: &FastaPiece) -> Range<usize> {
    match p {
        FastaPiece::Header(r) | FastaPiece::Bases(r) => r.clone(),
    }
}

impl<R: Read> Iterator for FastaReader<R> {
    type Item = Result<FastaRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(r) => r.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes canonical FASTQ (`+` separator left bare). Returns bytes written.
pub fn write_fastq<I, W>(records: I, sink: &mut W) -> io::Result<u64>
where
    I: IntoIterator,
    I::Item: Borrow<FastqRecord>,
    W: Write,
{
    let mut bytes = 0u64;
    let mut qual = Vec::new();
    for r in records {
        let r = r.borrow();
        qual.clear();
        qual.extend(r.qual.scores().iter().map(|s| s + crate::seqcore::PHRED_OFFSET));
        sink.write_all(b"@")?;
        sink.write_all(r.name.as_bytes())?;
        sink.write_all(b"\n")?;
        sink.write_all(r.seq.as_bytes())?;
        sink.write_all(b"\n+\n")?;
        sink.write_all(&qual)?;
        sink.write_all(b"\n")?;
        bytes += (r.name.len() + 2 * r.seq.len() + 6) as u64;
    }
    Ok(bytes)
}

/// Writes FASTA wrapping sequence lines at `line_width` (0 = no wrapping).
pub fn write_fasta<I, W>(records: I, sink: &mut W, line_width: usize) -> io::Result<u64>
where
    I: IntoIterator,
    I::Item: Borrow<FastaRecord>,
    W: Write,
{
    let mut w = FastaStreamWriter::new(sink, line_width);
    for r in records {
        let r = r.borrow();
        w.begin(&r.name)?;
        w.push(r.seq.as_bytes())?;
    }
    w.finish()
}

/// Incremental FASTA writer: a record's sequence may be pushed in pieces so
/// a chromosome-sized sequence never has to exist as one buffer.
pub struct FastaStreamWriter<'w, W: Write> {
    sink: &'w mut W,
    line_width: usize,
    column: usize,
    in_record: bool,
    bytes: u64,
}

impl<'w, W: Write> FastaStreamWriter<'w, W> {
    pub fn new(sink: &'w mut W, line_width: usize) -> Self {
        FastaStreamWriter {
            sink,
            line_width,
            column: 0,
            in_record: false,
            bytes: 0,
        }
    }

    fn end_line(&mut self) -> io::Result<()> {
        if self.in_record && self.column > 0 {
            self.sink.write_all(b"\n")?;
            self.bytes += 1;
        }
        self.column = 0;
        Ok(())
    }

    pub fn begin(&mut self, name: &str) -> io::Result<()> {
        self.end_line()?;
        self.sink.write_all(b">")?;
        self.sink.write_all(name.as_bytes())?;
        self.sink.write_all(b"\n")?;
        self.bytes += name.len() as u64 + 2;
        self.in_record = true;
        Ok(())
    }

    pub fn push(&mut self, mut bases: &[u8]) -> io::Result<()> {
        while !bases.is_empty() {
            let room = if self.line_width == 0 {
                bases.len()
            } else {
                if self.column == self.line_width {
                    self.sink.write_all(b"\n")?;
                    self.bytes += 1;
                    self.column = 0;
                }
                (self.line_width - self.column).min(bases.len())
            };
            self.sink.write_all(&bases[..room])?;
            self.bytes += room as u64;
            self.column += room;
            bases = &bases[room..];
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<u64> {
        self.end_line()?;
        Ok(self.bytes)
    }
}
