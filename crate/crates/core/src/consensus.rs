//! Consensus calling over stacked, gapless alignments.
//!
//! [`consensus_pivot`] is the direct route: pivot every read into
//! per-position bases, group them into pileup columns, call each column and
//! assemble. [`consensus_sliding`] scans alignments in (reference, position)
//! order and keeps only the columns a read can still touch, finalizing a
//! column once the scan passes it. [`consensus_partitioned`] cuts the
//! concatenated reference coordinates into `k` ranges and runs the sliding
//! caller on each range independently.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{self, Write};

use thiserror::Error;

use crate::fastx::FastaStreamWriter;
use crate::parexec::run_parallel_ordered;
use crate::seqcore::{
    Alignment, Base, ConsensusSequence, QualityVector, ReferenceSequence, Sequence, Strand,
    PHRED_OFFSET,
};

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("alignment {alignment_id}: {len} bases at {pos} run past reference end {ref_len}")]
    OutOfBounds {
        alignment_id: u64,
        pos: u64,
        len: usize,
        ref_len: usize,
    },
    #[error("alignment {alignment_id} refers to unknown reference {ref_id}")]
    UnknownReference { alignment_id: u64, ref_id: u64 },
    #[error("alignment {alignment_id}: sequence and quality lengths differ")]
    LengthMismatch { alignment_id: u64 },
    #[error("alignment {alignment_id} is out of (reference, position) order")]
    Unsorted { alignment_id: u64 },
    #[error("called position {pos} after {prev}")]
    NonMonotone { pos: u64, prev: u64 },
    #[error("called position {pos} outside 1..={ref_len}")]
    PositionOutOfRange { pos: u64, ref_len: usize },
    #[error("partition count must be at least 1")]
    ZeroPartitions,
    #[error(transparent)]
    Io(#[from] io::Error),
}

type Result<T> = std::result::Result<T, ConsensusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PivotedBase {
    pub ref_id: u64,
    /// 1-based.
    pub pos: u64,
    pub base: Base,
    pub qual: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PileupColumn {
    pub ref_id: u64,
    pub pos: u64,
    pub entries: Vec<(Base, u8)>,
}

/// An alignment joined with the read (or tag) it places.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedRead {
    pub alignment: Alignment,
    pub seq: Sequence,
    pub qual: QualityVector,
}

impl AlignedRead {
    fn end(&self) -> u64 {
        self.alignment.pos + self.seq.len() as u64 - 1
    }

    fn check(&self, ref_len: usize) -> Result<()> {
        let a = &self.alignment;
        if self.seq.len() != self.qual.len() {
            return Err(ConsensusError::LengthMismatch {
                alignment_id: a.alignment_id,
            });
        }
        let len = self.seq.len();
        if a.pos < 1 || a.pos - 1 + len as u64 > ref_len as u64 {
            return Err(ConsensusError::OutOfBounds {
                alignment_id: a.alignment_id,
                pos: a.pos,
                len,
                ref_len,
            });
        }
        Ok(())
    }

    /// Base and quality covering `pos`, in reference orientation.
    #[inline]
    fn at(&self, i: usize) -> (Base, u8) {
        match self.alignment.strand {
            Strand::Forward => (self.seq.base(i), self.qual.scores()[i]),
            Strand::Reverse => {
                let j = self.seq.len() - 1 - i;
                (self.seq.base(j).complement(), self.qual.scores()[j])
            }
        }
    }
}

/// The read as one tuple per covered reference position. Reverse-strand
/// reads come out complemented, in ascending position, qualities reversed.
pub fn pivot_alignment(ar: &AlignedRead, ref_len: usize) -> Result<impl Iterator<Item = PivotedBase> + '_> {
    ar.check(ref_len)?;
    let a = &ar.alignment;
    Ok((0..ar.seq.len()).map(move |i| {
        let (base, qual) = ar.at(i);
        PivotedBase {
            ref_id: a.gene_id,
            pos: a.pos + i as u64,
            base,
            qual,
        }
    }))
}

/// Score per callable base: sum of `qual + 1`.
pub type Scores = [u64; 4];

#[inline]
fn add(scores: &mut Scores, base: Base, qual: u8) {
    if let Some(i) = base.callable_index() {
        scores[i] += qual as u64 + 1;
    }
}

/// Highest score wins, ties go to the alphabetically first base, an empty
/// tally is N.
#[inline]
pub fn call_scores(scores: &Scores) -> Base {
    let mut best = 0;
    for i in 1..4 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    if scores[best] == 0 {
        Base::N
    } else {
        Base::CALLABLE[best]
    }
}

pub fn call_base(column: &PileupColumn) -> Base {
    let mut s = [0; 4];
    for &(b, q) in &column.entries {
        add(&mut s, b, q);
    }
    call_scores(&s)
}

/// Writes a `ref_len` sequence into `out`: called bases at their positions,
/// N everywhere else. Positions must be strictly increasing.
pub fn assemble_into<I, W>(called: I, ref_len: usize, out: &mut W) -> Result<()>
where
    I: IntoIterator<Item = (u64, Base)>,
    W: Write,
{
    const NS: [u8; 512] = [b'N'; 512];
    let fill = |out: &mut W, mut n: u64| -> io::Result<()> {
        while n > 0 {
            let k = n.min(NS.len() as u64) as usize;
            out.write_all(&NS[..k])?;
            n -= k as u64;
        }
        Ok(())
    };
    let mut next = 1u64;
    for (pos, base) in called {
        if pos < next {
            return Err(ConsensusError::NonMonotone { pos, prev: next - 1 });
        }
        if pos > ref_len as u64 {
            return Err(ConsensusError::PositionOutOfRange { pos, ref_len });
        }
        fill(out, pos - next)?;
        out.write_all(&[base.to_ascii()])?;
        next = pos + 1;
    }
    fill(out, ref_len as u64 + 1 - next)?;
    Ok(())
}

pub fn assemble_sequence<I>(called: I, ref_len: usize) -> Result<Sequence>
where
    I: IntoIterator<Item = (u64, Base)>,
{
    let mut out = Vec::with_capacity(ref_len);
    assemble_into(called, ref_len, &mut out)?;
    Ok(Sequence::from_vec(out).expect("assembled from bases"))
}

fn ref_index(refs: &[ReferenceSequence]) -> HashMap<u64, usize> {
    refs.iter().enumerate().map(|(i, r)| (r.ref_id, i)).collect()
}

fn resolve(index: &HashMap<u64, usize>, a: &Alignment) -> Result<usize> {
    index.get(&a.gene_id).copied().ok_or(ConsensusError::UnknownReference {
        alignment_id: a.alignment_id,
        ref_id: a.gene_id,
    })
}

/// Pileup columns of every covered position, grouped by (reference, position).
pub fn pileup_columns(alignments: &[AlignedRead], refs: &[ReferenceSequence]) -> Result<Vec<PileupColumn>> {
    let index = ref_index(refs);
    let mut groups: BTreeMap<(u64, u64), Vec<(Base, u8)>> = BTreeMap::new();
    for ar in alignments {
        let r = &refs[resolve(&index, &ar.alignment)?];
        for p in pivot_alignment(ar, r.seq.len())? {
            groups.entry((p.ref_id, p.pos)).or_default().push((p.base, p.qual));
        }
    }
    Ok(groups
        .into_iter()
        .map(|((ref_id, pos), entries)| PileupColumn { ref_id, pos, entries })
        .collect())
}

/// Pivot, group, call, assemble. One result per reference, in `refs` order.
pub fn consensus_pivot(alignments: &[AlignedRead], refs: &[ReferenceSequence]) -> Result<Vec<ConsensusSequence>> {
    let mut by_ref: HashMap<u64, Vec<(u64, Base)>> = HashMap::new();
    for col in pileup_columns(alignments, refs)? {
        by_ref.entry(col.ref_id).or_default().push((col.pos, call_base(&col)));
    }
    refs.iter()
        .map(|r| {
            let called = by_ref.remove(&r.ref_id).unwrap_or_default();
            Ok(ConsensusSequence {
                ref_id: r.ref_id,
                seq: assemble_sequence(called, r.seq.len())?,
            })
        })
        .collect()
}

/// Sliding-window caller for positions `lo..=hi` of one reference. Reads
/// must arrive in ascending start position; bases outside the range are
/// ignored. Emits exactly `hi - lo + 1` bytes.
struct Window<'w, W: Write> {
    lo: u64,
    hi: u64,
    next: u64,
    last_start: u64,
    columns: VecDeque<Scores>,
    out: &'w mut W,
}

impl<'w, W: Write> Window<'w, W> {
    fn new(lo: u64, hi: u64, out: &'w mut W) -> Self {
        Window {
            lo,
            hi,
            next: lo,
            last_start: 0,
            columns: VecDeque::new(),
            out,
        }
    }

    /// Emits every column before `upto` (exclusive).
    fn flush(&mut self, upto: u64) -> io::Result<()> {
        let upto = upto.min(self.hi + 1);
        while self.next < upto {
            let b = match self.columns.pop_front() {
                Some(s) => call_scores(&s),
                None => Base::N,
            };
            self.out.write_all(&[b.to_ascii()])?;
            self.next += 1;
        }
        Ok(())
    }

    fn push(&mut self, ar: &AlignedRead) -> Result<()> {
        let start = ar.alignment.pos;
        if start < self.last_start {
            return Err(ConsensusError::Unsorted {
                alignment_id: ar.alignment.alignment_id,
            });
        }
        self.last_start = start;
        self.flush(start)?;
        if ar.seq.is_empty() {
            return Ok(());
        }
        let first = start.max(self.lo);
        let last = ar.end().min(self.hi);
        for pos in first..=last {
            let idx = (pos - self.next) as usize;
            if idx >= self.columns.len() {
                self.columns.resize(idx + 1, [0; 4]);
            }
            let (b, q) = ar.at((pos - start) as usize);
            add(&mut self.columns[idx], b, q);
        }
        Ok(())
    }

    fn finish(mut self) -> io::Result<()> {
        self.flush(self.hi + 1)
    }
}

/// Checks (reference, position) order and bounds, and returns, for each
/// reference in `refs`, the sub-slice of alignments on it.
fn split_by_ref<'a>(
    alignments: &'a [AlignedRead],
    refs: &[ReferenceSequence],
) -> Result<Vec<&'a [AlignedRead]>> {
    let index = ref_index(refs);
    let mut prev: Option<(usize, u64)> = None;
    let mut bounds = vec![(0usize, 0usize); refs.len()];
    let order = |a: &AlignedRead| (a.alignment.gene_id, a.alignment.pos);
    for (i, ar) in alignments.iter().enumerate() {
        let r = resolve(&index, &ar.alignment)?;
        ar.check(refs[r].seq.len())?;
        if let Some((pr, _)) = prev {
            if order(&alignments[i - 1]) > order(ar) {
                return Err(ConsensusError::Unsorted {
                    alignment_id: ar.alignment.alignment_id,
                });
            }
            if pr != r {
                bounds[r].0 = i;
            }
        } else {
            bounds[r].0 = i;
        }
        bounds[r].1 = i + 1;
        prev = Some((r, ar.alignment.pos));
    }
    Ok(bounds
        .into_iter()
        .map(|(s, e)| if e > s { &alignments[s..e] } else { &alignments[0..0] })
        .collect())
}

/// Streams the consensus of every reference, in `refs` order, to `sink`
/// as `(reference, bytes)` pieces. Input must be sorted by (ref_id, pos).
pub fn consensus_sliding_with<F>(
    alignments: &[AlignedRead],
    refs: &[ReferenceSequence],
    mut sink: F,
) -> Result<()>
where
    F: FnMut(&ReferenceSequence, &[u8]) -> io::Result<()>,
{
    let per_ref = split_by_ref(alignments, refs)?;
    let mut buf = Vec::with_capacity(1 << 16);
    for (r, reads) in refs.iter().zip(per_ref) {
        let mut chunk = ChunkSink {
            buf: &mut buf,
            emit: |b: &[u8]| sink(r, b),
        };
        let mut w = Window::new(1, r.seq.len() as u64, &mut chunk);
        for ar in reads {
            w.push(ar)?;
        }
        w.finish()?;
        chunk.flush()?;
    }
    Ok(())
}

/// Buffers window output and hands it on in 64 KiB pieces.
struct ChunkSink<'b, F: FnMut(&[u8]) -> io::Result<()>> {
    buf: &'b mut Vec<u8>,
    emit: F,
}

impl<F: FnMut(&[u8]) -> io::Result<()>> Write for ChunkSink<'_, F> {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        if self.buf.len() >= 1 << 16 {
            self.flush()?;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        if !self.buf.is_empty() {
            (self.emit)(self.buf)?;
            self.buf.clear();
        }
        Ok(())
    }
}

/// Sorted-scan consensus. Input must be sorted by (ref_id, pos).
pub fn consensus_sliding(alignments: &[AlignedRead], refs: &[ReferenceSequence]) -> Result<Vec<ConsensusSequence>> {
    let mut seqs: Vec<Vec<u8>> = refs.iter().map(|r| Vec::with_capacity(r.seq.len())).collect();
    let pos: HashMap<u64, usize> = ref_index(refs);
    consensus_sliding_with(alignments, refs, |r, bytes| {
        seqs[pos[&r.ref_id]].extend_from_slice(bytes);
        Ok(())
    })?;
    Ok(refs
        .iter()
        .zip(seqs)
        .map(|(r, s)| ConsensusSequence {
            ref_id: r.ref_id,
            seq: Sequence::from_vec(s).expect("called bases"),
        })
        .collect())
}

/// Streams the sorted-scan consensus as FASTA, one record per reference
/// named after it.
pub fn write_consensus_fasta<W: Write>(
    alignments: &[AlignedRead],
    refs: &[ReferenceSequence],
    out: &mut W,
    line_width: usize,
) -> Result<u64> {
    let mut w = FastaStreamWriter::new(out, line_width);
    let mut current: Option<u64> = None;
    consensus_sliding_with(alignments, refs, |r, bytes| {
        if current != Some(r.ref_id) {
            w.begin(&r.name)?;
            current = Some(r.ref_id);
        }
        w.push(bytes)
    })?;
    Ok(w.finish()?)
}

/// One contiguous piece of a partition's coordinate range.
#[derive(Debug, Clone)]
pub struct Segment<'a> {
    /// Index into `refs`.
    pub reference: usize,
    pub lo: u64,
    pub hi: u64,
    /// Every alignment overlapping `lo..=hi`, in input order.
    pub reads: Vec<&'a AlignedRead>,
}

#[derive(Debug, Clone, Default)]
pub struct Partition<'a> {
    pub segments: Vec<Segment<'a>>,
}

/// Cuts the concatenated coordinates of `refs` into `k` contiguous ranges of
/// near-equal size. An alignment overlapping a range boundary goes to every
/// range it touches.
pub fn partition_alignments<'a>(
    alignments: &'a [AlignedRead],
    refs: &[ReferenceSequence],
    k: usize,
) -> Result<Vec<Partition<'a>>> {
    if k == 0 {
        return Err(ConsensusError::ZeroPartitions);
    }
    let per_ref = split_by_ref(alignments, refs)?;
    let max_len: Vec<u64> = per_ref
        .iter()
        .map(|s| s.iter().map(|a| a.seq.len() as u64).max().unwrap_or(0))
        .collect();
    let total: u64 = refs.iter().map(|r| r.seq.len() as u64).sum();
    let cut = |i: usize| total * i as u64 / k as u64;
    let mut parts = Vec::with_capacity(k);
    for p in 0..k {
        let (g_lo, g_hi) = (cut(p), cut(p + 1));
        let mut segments = Vec::new();
        let mut offset = 0u64;
        for (ri, r) in refs.iter().enumerate() {
            let len = r.seq.len() as u64;
            let (s, e) = (g_lo.max(offset), g_hi.min(offset + len));
            if s < e {
                let (lo, hi) = (s - offset + 1, e - offset);
                let reads = per_ref[ri];
                let from = reads.partition_point(|a| a.alignment.pos + max_len[ri] <= lo);
                let to = reads.partition_point(|a| a.alignment.pos <= hi);
                let reads = reads[from..to.max(from)]
                    .iter()
                    .filter(|a| !a.seq.is_empty() && a.end() >= lo)
                    .collect();
                segments.push(Segment {
                    reference: ri,
                    lo,
                    hi,
                    reads,
                });
            }
            offset += len;
        }
        parts.push(Partition { segments });
    }
    Ok(parts)
}

/// Runs the sliding caller on each of `k` partitions and concatenates their
/// output per reference in range order.
pub fn consensus_partitioned(
    alignments: &[AlignedRead],
    refs: &[ReferenceSequence],
    k: usize,
) -> Result<Vec<ConsensusSequence>> {
    let parts = partition_alignments(alignments, refs, k)?;
    run_parallel_ordered(
        parts,
        |part| -> Result<Vec<(usize, Vec<u8>)>> {
            let mut out = Vec::with_capacity(part.segments.len());
            for seg in part.segments {
                let mut buf = Vec::with_capacity((seg.hi - seg.lo + 1) as usize);
                let mut w = Window::new(seg.lo, seg.hi, &mut buf);
                for ar in seg.reads {
                    w.push(ar)?;
                }
                w.finish()?;
                out.push((seg.reference, buf));
            }
            Ok(out)
        },
        |results| {
            let mut seqs: Vec<Vec<u8>> = refs.iter().map(|r| Vec::with_capacity(r.seq.len())).collect();
            for (ri, bytes) in results.into_iter().flatten() {
                seqs[ri].extend_from_slice(&bytes);
            }
            refs.iter()
                .zip(seqs)
                .map(|(r, s)| ConsensusSequence {
                    ref_id: r.ref_id,
                    seq: Sequence::from_vec(s).expect("called bases"),
                })
                .collect()
        },
    )
}

/// `ref\tpos\tbases\tquals` with a header row; qualities in Phred+33.
pub fn write_pileup_tsv<W: Write>(
    columns: &[PileupColumn],
    refs: &[ReferenceSequence],
    out: &mut W,
) -> io::Result<()> {
    let names: HashMap<u64, &str> = refs.iter().map(|r| (r.ref_id, r.name.as_str())).collect();
    writeln!(out, "ref\tpos\tbases\tquals")?;
    for c in columns {
        let bases: Vec<u8> = c.entries.iter().map(|e| e.0.to_ascii()).collect();
        let quals: Vec<u8> = c.entries.iter().map(|e| e.1 + PHRED_OFFSET).collect();
        write!(out, "{}\t{}\t", names.get(&c.ref_id).copied().unwrap_or("?"), c.pos)?;
        out.write_all(&bases)?;
        out.write_all(b"\t")?;
        out.write_all(&quals)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Sorts by (ref_id, pos, alignment_id), the order the sliding caller needs.
pub fn sort_for_scan(alignments: &mut [AlignedRead]) {
    alignments.sort_by_key(|a| (a.alignment.gene_id, a.alignment.pos, a.alignment.alignment_id));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::SampleKey;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(entries: &[(Base, u8)]) -> PileupColumn {
        PileupColumn {
            ref_id: 1,
            pos: 1,
            entries: entries.to_vec(),
        }
    }

    fn reference(id: u64, seq: &str) -> ReferenceSequence {
        ReferenceSequence {
            ref_id: id,
            name: format!("chr{id}"),
            seq: seq.parse().unwrap(),
        }
    }

    fn aligned(id: u64, ref_id: u64, pos: u64, strand: Strand, seq: &str, qual: &[u8]) -> AlignedRead {
        AlignedRead {
            alignment: Alignment {
                alignment_id: id,
                sample: SampleKey::new(1, 1, 1),
                query_id: id,
                gene_id: ref_id,
                pos,
                strand,
            },
            seq: seq.parse().unwrap(),
            qual: QualityVector::from_scores(qual.to_vec()).unwrap(),
        }
    }

    #[test]
    fn call_base_rules() {
        use Base::*;
        assert_eq!(call_base(&col(&[(A, 30), (A, 30), (C, 40)])), A);
        assert_eq!(call_base(&col(&[(C, 10), (A, 10)])), A);
        assert_eq!(call_base(&col(&[(N, 40)])), N);
        assert_eq!(call_base(&col(&[])), N);
        assert_eq!(call_base(&col(&[(T, 0)])), T);
    }

    #[test]
    fn pivot_forward_and_reverse() {
        let f = aligned(1, 1, 10, Strand::Forward, "ACG", &[1, 2, 3]);
        let got: Vec<_> = pivot_alignment(&f, 20).unwrap().map(|p| (p.pos, p.base, p.qual)).collect();
        assert_eq!(got, vec![(10, Base::A, 1), (11, Base::C, 2), (12, Base::G, 3)]);
        let r = aligned(1, 1, 10, Strand::Reverse, "ACG", &[1, 2, 3]);
        let got: Vec<_> = pivot_alignment(&r, 20).unwrap().map(|p| (p.pos, p.base, p.qual)).collect();
        assert_eq!(got, vec![(10, Base::C, 3), (11, Base::G, 2), (12, Base::T, 1)]);
        let e = aligned(1, 1, 10, Strand::Forward, "", &[]);
        assert_eq!(pivot_alignment(&e, 20).unwrap().count(), 0);
        assert!(pivot_alignment(&f, 11).is_err());
    }

    #[test]
    fn assemble_gap_fill() {
        let s = assemble_sequence([(2, Base::A), (3, Base::C)], 5).unwrap();
        assert_eq!(s.as_bytes(), b"NACNN");
        assert_eq!(assemble_sequence([], 3).unwrap().as_bytes(), b"NNN");
        assert!(assemble_sequence([(3, Base::A), (3, Base::C)], 5).is_err());
        assert!(assemble_sequence([(3, Base::A), (2, Base::C)], 5).is_err());
        assert!(assemble_sequence([(6, Base::A)], 5).is_err());
        let big = assemble_sequence([(1000, Base::G)], 1500).unwrap();
        assert_eq!(big.len(), 1500);
        assert_eq!(big.base(999), Base::G);
    }

    #[test]
    fn single_read_and_disagreement() {
        let refs = [reference(1, "AAAAAAAA")];
        let reads = [aligned(1, 1, 1, Strand::Forward, "ACGT", &[9; 4])];
        let c = consensus_pivot(&reads, &refs).unwrap();
        assert_eq!(c[0].seq.as_bytes(), b"ACGTNNNN");
        let reads = [
            aligned(1, 1, 2, Strand::Forward, "AAA", &[10, 10, 40]),
            aligned(2, 1, 3, Strand::Forward, "CCC", &[20, 5, 5]),
        ];
        let c = consensus_pivot(&reads, &refs).unwrap();
        assert_eq!(c[0].seq.as_bytes(), b"NACACNNN");
        assert_eq!(consensus_sliding(&reads, &refs).unwrap(), c);
    }

    #[test]
    fn empty_alignments_give_all_n() {
        let refs = [reference(1, "ACGT"), reference(2, "AC")];
        for c in [consensus_pivot(&[], &refs).unwrap(), consensus_sliding(&[], &refs).unwrap()] {
            assert_eq!(c[0].seq.as_bytes(), b"NNNN");
            assert_eq!(c[1].seq.as_bytes(), b"NN");
        }
    }

    #[test]
    fn unsorted_rejected() {
        let refs = [reference(1, "AAAAAAAA")];
        let reads = [
            aligned(1, 1, 3, Strand::Forward, "A", &[1]),
            aligned(2, 1, 2, Strand::Forward, "A", &[1]),
        ];
        assert!(matches!(consensus_sliding(&reads, &refs), Err(ConsensusError::Unsorted { alignment_id: 2 })));
        let reads = [
            aligned(1, 2, 1, Strand::Forward, "A", &[1]),
            aligned(2, 1, 2, Strand::Forward, "A", &[1]),
        ];
        let refs = [reference(1, "AAAA"), reference(2, "AAAA")];
        assert!(consensus_sliding(&reads, &refs).is_err());
        assert!(matches!(partition_alignments(&[], &refs, 0), Err(ConsensusError::ZeroPartitions)));
    }

    #[test]
    fn straddler_reaches_both_partitions() {
        let refs = [reference(1, "AAAAAAAAAA")];
        let reads = [aligned(1, 1, 4, Strand::Forward, "GGGG", &[20; 4])];
        let parts = partition_alignments(&reads, &refs, 2).unwrap();
        assert_eq!((parts[0].segments[0].lo, parts[0].segments[0].hi), (1, 5));
        assert_eq!((parts[1].segments[0].lo, parts[1].segments[0].hi), (6, 10));
        assert_eq!(parts[0].segments[0].reads.len(), 1);
        assert_eq!(parts[1].segments[0].reads.len(), 1);
        let c = consensus_partitioned(&reads, &refs, 2).unwrap();
        assert_eq!(c[0].seq.as_bytes(), b"NNNGGGGNNN");
    }

    #[test]
    fn partitions_across_references() {
        let refs = [reference(1, "AAA"), reference(2, "AAAAA")];
        let reads = [
            aligned(1, 1, 2, Strand::Forward, "CC", &[1, 1]),
            aligned(2, 2, 1, Strand::Reverse, "AAAAA", &[1; 5]),
        ];
        let want = consensus_sliding(&reads, &refs).unwrap();
        assert_eq!(want[0].seq.as_bytes(), b"NCC");
        assert_eq!(want[1].seq.as_bytes(), b"TTTTT");
        for k in 1..=10 {
            assert_eq!(consensus_partitioned(&reads, &refs, k).unwrap(), want, "k={k}");
        }
    }

    #[test]
    fn fasta_and_pileup_output() {
        let refs = [reference(1, "AAAAAA"), reference(2, "AA")];
        let reads = [aligned(1, 1, 2, Strand::Forward, "ACG", &[30, 31, 32])];
        let mut out = Vec::new();
        write_consensus_fasta(&reads, &refs, &mut out, 4).unwrap();
        assert_eq!(out, b">chr1\nNACG\nNN\n>chr2\nNN\n");
        let cols = pileup_columns(&reads, &refs).unwrap();
        let mut out = Vec::new();
        write_pileup_tsv(&cols, &refs, &mut out).unwrap();
        assert_eq!(out, b"ref\tpos\tbases\tquals\nchr1\t2\tA\t?\nchr1\t3\tC\t@\nchr1\t4\tG\tA\n");
    }

    /// Independent per-position tally over the raw reads.
    fn brute_force(reads: &[AlignedRead], refs: &[ReferenceSequence]) -> Vec<Vec<u8>> {
        refs.iter()
            .map(|r| {
                let mut tally = vec![[0u64; 4]; r.seq.len()];
                for ar in reads.iter().filter(|a| a.alignment.gene_id == r.ref_id) {
                    let n = ar.seq.len();
                    for i in 0..n {
                        let (c, q) = match ar.alignment.strand {
                            Strand::Forward => (ar.seq.as_bytes()[i], ar.qual.scores()[i]),
                            Strand::Reverse => {
                                let c = match ar.seq.as_bytes()[n - 1 - i] {
                                    b'A' => b'T',
                                    b'C' => b'G',
                                    b'G' => b'C',
                                    b'T' => b'A',
                                    o => o,
                                };
                                (c, ar.qual.scores()[n - 1 - i])
                            }
                        };
                        if let Some(j) = b"ACGT".iter().position(|&x| x == c) {
                            tally[ar.alignment.pos as usize - 1 + i][j] += q as u64 + 1;
                        }
                    }
                }
                tally
                    .iter()
                    .map(|t| {
                        let m = *t.iter().max().unwrap();
                        if m == 0 {
                            b'N'
                        } else {
                            b"ACGT"[t.iter().position(|&x| x == m).unwrap()]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn random_instance(seed: u64) -> (Vec<AlignedRead>, Vec<ReferenceSequence>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nrefs = rng.gen_range(1..4);
        let mut refs = Vec::new();
        let mut reads = Vec::new();
        for ri in 1..=nrefs {
            let len = rng.gen_range(1..400);
            let seq: String = (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)] as char).collect();
            refs.push(reference(ri, &seq));
            for _ in 0..rng.gen_range(0..30) {
                let rl = rng.gen_range(0..=len.min(40));
                let pos = rng.gen_range(1..=len - rl + 1) as u64;
                let s: String = (0..rl).map(|_| b"ACGTN"[rng.gen_range(0..5)] as char).collect();
                let q: Vec<u8> = (0..rl).map(|_| rng.gen_range(0..=40)).collect();
                let strand = if rng.gen() { Strand::Forward } else { Strand::Reverse };
                let id = reads.len() as u64 + 1;
                reads.push(aligned(id, ri, pos, strand, &s, &q));
            }
        }
        sort_for_scan(&mut reads);
        (reads, refs)
    }

    #[test]
    fn random_instances_agree() {
        for seed in 0..200 {
            let (reads, refs) = random_instance(seed);
            let want = brute_force(&reads, &refs);
            let pivot = consensus_pivot(&reads, &refs).unwrap();
            let slide = consensus_sliding(&reads, &refs).unwrap();
            assert_eq!(pivot, slide, "seed {seed}");
            for (c, w) in pivot.iter().zip(&want) {
                assert_eq!(c.seq.as_bytes(), &w[..], "seed {seed}");
            }
            for k in [2, 3, 8] {
                assert_eq!(consensus_partitioned(&reads, &refs, k).unwrap(), slide, "seed {seed} k {k}");
            }
        }
    }

    proptest! {
        #[test]
        fn call_base_order_invariant(mut entries in proptest::collection::vec((0usize..5, 0u8..94), 0..30)) {
            let to = |v: &[(usize, u8)]| col(&v.iter().map(|&(b, q)| ([Base::A, Base::C, Base::G, Base::T, Base::N][b], q)).collect::<Vec<_>>());
            let a = call_base(&to(&entries));
            entries.reverse();
            prop_assert_eq!(a, call_base(&to(&entries)));
        }

        #[test]
        fn raising_quality_keeps_call(entries in proptest::collection::vec((0usize..4, 0u8..80), 1..30), bump in 1u8..14) {
            let bases = [Base::A, Base::C, Base::G, Base::T];
            let c = col(&entries.iter().map(|&(b, q)| (bases[b], q)).collect::<Vec<_>>());
            let called = call_base(&c);
            let raised = PileupColumn {
                entries: c.entries.iter().map(|&(b, q)| (b, if b == called { q + bump } else { q })).collect(),
                ..c.clone()
            };
            prop_assert_eq!(call_base(&raised), called);
        }

        #[test]
        fn output_length_matches_reference(seed in any::<u64>()) {
            let (reads, refs) = random_instance(seed);
            for (c, r) in consensus_sliding(&reads, &refs).unwrap().iter().zip(&refs) {
                prop_assert_eq!(c.seq.len(), r.seq.len());
            }
        }
    }
}
