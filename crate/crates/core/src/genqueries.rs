//! Unique-read binning and digital gene expression.
//!
//! Both operators are pure over their inputs and come in a sequential form
//! and a partitioned form built on [`crate::parexec`]. The two forms produce
//! identical output for every worker count.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};
use std::marker::PhantomData;

use thiserror::Error;

use crate::parexec::{run_parallel, stable_hash, Aggregate, PartitionPlan};
use crate::seqcore::{Alignment, GeneExpression, SampleKey, Sequence, Tag};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("alignment {alignment_id} refers to missing tag {tag_id}")]
    DanglingTag { alignment_id: u64, tag_id: u64 },
    #[error("line {line}: {reason}")]
    Tsv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinnedTagRow {
    pub rank: u64,
    pub frequency: u64,
    pub seq: Sequence,
}

pub type ExpressionRow = GeneExpression;

/// Dense ranks under (frequency desc, sequence asc).
pub fn rank_rows<I>(counts: I) -> Vec<BinnedTagRow>
where
    I: IntoIterator<Item = (Sequence, u64)>,
{
    let mut rows: Vec<(Sequence, u64)> = counts.into_iter().collect();
    rows.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (seq, frequency))| BinnedTagRow {
            rank: i as u64 + 1,
            frequency,
            seq,
        })
        .collect()
}

fn rank_map(counts: HashMap<&Sequence, u64>) -> Vec<BinnedTagRow> {
    rank_rows(counts.into_iter().map(|(s, n)| (s.clone(), n)))
}

/// Groups the reads of `sample` by exact sequence, dropping any read that
/// contains N, and ranks the groups.
pub fn bin_unique_reads<'a, I>(reads: I, sample: SampleKey) -> Vec<BinnedTagRow>
where
    I: IntoIterator<Item = (SampleKey, &'a Sequence)>,
{
    let mut counts: HashMap<&Sequence, u64> = HashMap::new();
    for (s, seq) in reads {
        if s == sample && !seq.contains_n() {
            *counts.entry(seq).or_insert(0) += 1;
        }
    }
    rank_map(counts)
}

/// Binning as a mergeable aggregate over borrowed sequences.
pub struct BinningAggregate<'a> {
    sample: SampleKey,
    rows: PhantomData<&'a Sequence>,
}

impl BinningAggregate<'_> {
    pub fn new(sample: SampleKey) -> Self {
        BinningAggregate {
            sample,
            rows: PhantomData,
        }
    }
}

impl<'a> Aggregate for BinningAggregate<'a> {
    type Row = (SampleKey, &'a Sequence);
    type State = HashMap<&'a Sequence, u64>;
    type Output = Vec<BinnedTagRow>;
    type Error = std::convert::Infallible;

    fn init(&self) -> Self::State {
        HashMap::new()
    }

    fn accumulate(&self, state: &mut Self::State, (s, seq): Self::Row) -> Result<(), Self::Error> {
        if s == self.sample && !seq.contains_n() {
            *state.entry(seq).or_insert(0) += 1;
        }
        Ok(())
    }

    fn merge(&self, mut left: Self::State, right: Self::State) -> Self::State {
        if left.len() < right.len() {
            return self.merge(right, left);
        }
        for (k, v) in right {
            *left.entry(k).or_insert(0) += v;
        }
        left
    }

    fn terminate(&self, state: Self::State) -> Self::Output {
        rank_map(state)
    }
}

/// [`bin_unique_reads`] over `workers` hash partitions keyed on sequence.
pub fn bin_unique_reads_parallel<'a, I>(reads: I, sample: SampleKey, workers: usize) -> Vec<BinnedTagRow>
where
    I: IntoIterator<Item = (SampleKey, &'a Sequence)>,
{
    let plan = PartitionPlan::hashed(workers, |r: &(SampleKey, &Sequence)| stable_hash(r.1.as_bytes()));
    match run_parallel(reads, &BinningAggregate::new(sample), &plan) {
        Ok(rows) => rows,
        Err(e) => match e {},
    }
}

/// Per-gene totals over the tag alignments of `sample`. Every alignment row
/// counts, so a tag aligned twice to one gene contributes twice.
pub fn gene_expression<'t>(
    alignments: &'t [Alignment],
    tags: &'t [Tag],
    sample: SampleKey,
) -> Result<Vec<ExpressionRow>, QueryError> {
    let contract = ExpressionAggregate::new(tags, sample);
    let mut state = contract.init();
    for a in alignments {
        contract.accumulate(&mut state, a)?;
    }
    Ok(contract.terminate(state))
}

/// [`gene_expression`] over `workers` contiguous partitions of the alignments.
pub fn gene_expression_parallel<'t>(
    alignments: &'t [Alignment],
    tags: &'t [Tag],
    sample: SampleKey,
    workers: usize,
) -> Result<Vec<ExpressionRow>, QueryError> {
    let contract = ExpressionAggregate::new(tags, sample);
    run_parallel(alignments.iter(), &contract, &PartitionPlan::range(workers))
}

/// Join of alignments with tags grouped by gene.
pub struct ExpressionAggregate<'t> {
    tags: HashMap<u64, &'t Tag>,
    sample: SampleKey,
}

impl<'t> ExpressionAggregate<'t> {
    pub fn new(tags: &'t [Tag], sample: SampleKey) -> Self {
        ExpressionAggregate {
            tags: tags.iter().map(|t| (t.tag_id, t)).collect(),
            sample,
        }
    }
}

impl<'t> Aggregate for ExpressionAggregate<'t> {
    type Row = &'t Alignment;
    type State = BTreeMap<u64, (u64, u64)>;
    type Output = Vec<ExpressionRow>;
    type Error = QueryError;

    fn init(&self) -> Self::State {
        BTreeMap::new()
    }

    fn accumulate(&self, state: &mut Self::State, a: &'t Alignment) -> Result<(), QueryError> {
        if a.sample != self.sample {
            return Ok(());
        }
        let tag = self.tags.get(&a.query_id).ok_or(QueryError::DanglingTag {
            alignment_id: a.alignment_id,
            tag_id: a.query_id,
        })?;
        if tag.sample != self.sample {
            return Ok(());
        }
        let e = state.entry(a.gene_id).or_insert((0, 0));
        e.0 += tag.frequency;
        e.1 += 1;
        Ok(())
    }

    fn merge(&self, mut left: Self::State, right: Self::State) -> Self::State {
        for (g, (f, n)) in right {
            let e = left.entry(g).or_insert((0, 0));
            e.0 += f;
            e.1 += n;
        }
        left
    }

    fn terminate(&self, state: Self::State) -> Self::Output {
        state
            .into_iter()
            .map(|(gene_id, (total_frequency, tag_count))| GeneExpression {
                gene_id,
                sample: self.sample,
                total_frequency,
                tag_count,
            })
            .collect()
    }
}

pub const BINNED_HEADER: &str = "rank\tfrequency\tsequence";
pub const EXPRESSION_HEADER: &str = "gene_id\ttotal_frequency\ttag_count";

pub fn write_binned_tsv<W: Write>(rows: &[BinnedTagRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "{BINNED_HEADER}")?;
    for r in rows {
        writeln!(out, "{}\t{}\t{}", r.rank, r.frequency, r.seq)?;
    }
    Ok(())
}

pub fn write_expression_tsv<W: Write>(rows: &[ExpressionRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "{EXPRESSION_HEADER}")?;
    for r in rows {
        writeln!(out, "{}\t{}\t{}", r.gene_id, r.total_frequency, r.tag_count)?;
    }
    Ok(())
}

fn tsv_lines<R: BufRead>(input: R, header: &str) -> Result<Vec<(usize, Vec<String>)>, QueryError> {
    let mut rows = Vec::new();
    let mut lines = input.lines().enumerate();
    let first = lines.next().map(|(_, l)| l).transpose()?;
    if first.as_deref() != Some(header) {
        return Err(QueryError::Tsv {
            line: 1,
            reason: format!("expected header {header:?}"),
        });
    }
    let width = header.split('\t').count();
    for (i, l) in lines {
        let l = l?;
        let fields: Vec<String> = l.split('\t').map(str::to_string).collect();
        if fields.len() != width {
            return Err(QueryError::Tsv {
                line: i + 1,
                reason: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn number(line: usize, field: &str) -> Result<u64, QueryError> {
    field.parse().map_err(|_| QueryError::Tsv {
        line,
        reason: format!("not a number: {field:?}"),
    })
}

pub fn read_binned_tsv<R: BufRead>(input: R) -> Result<Vec<BinnedTagRow>, QueryError> {
    tsv_lines(input, BINNED_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            Ok(BinnedTagRow {
                rank: number(line, &f[0])?,
                frequency: number(line, &f[1])?,
                seq: f[2].parse().map_err(|e| QueryError::Tsv {
                    line,
                    reason: format!("{e}"),
                })?,
            })
        })
        .collect()
}

pub fn read_expression_tsv<R: BufRead>(input: R, sample: SampleKey) -> Result<Vec<ExpressionRow>, QueryError> {
    tsv_lines(input, EXPRESSION_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            Ok(GeneExpression {
                gene_id: number(line, &f[0])?,
                sample,
                total_frequency: number(line, &f[1])?,
                tag_count: number(line, &f[2])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::Strand;
    use proptest::prelude::*;

    fn seq(s: &str) -> Sequence {
        s.parse().unwrap()
    }

    const S: SampleKey = SampleKey {
        experiment: 1,
        group: 1,
        sample: 1,
    };

    fn row(rank: u64, frequency: u64, s: &str) -> BinnedTagRow {
        BinnedTagRow {
            rank,
            frequency,
            seq: seq(s),
        }
    }

    #[test]
    fn bin_toy_reads() {
        let reads: Vec<Sequence> = ["ACGT", "ACGT", "TTTT", "ACNT"].iter().map(|s| seq(s)).collect();
        let out = bin_unique_reads(reads.iter().map(|r| (S, r)), S);
        assert_eq!(out, vec![row(1, 2, "ACGT"), row(2, 1, "TTTT")]);
        for k in [1, 2, 8] {
            assert_eq!(bin_unique_reads_parallel(reads.iter().map(|r| (S, r)), S, k), out);
        }
    }

    #[test]
    fn bin_all_n_and_other_samples() {
        let reads = [seq("NNNN"), seq("ANAA")];
        assert!(bin_unique_reads(reads.iter().map(|r| (S, r)), S).is_empty());
        let other = SampleKey::new(1, 1, 2);
        let reads = [seq("ACGT")];
        assert!(bin_unique_reads(reads.iter().map(|r| (other, r)), S).is_empty());
    }

    #[test]
    fn rank_ties_break_on_sequence() {
        let out = rank_rows([(seq("G"), 1), (seq("C"), 2), (seq("A"), 2)]);
        assert_eq!(out, vec![row(1, 2, "A"), row(2, 2, "C"), row(3, 1, "G")]);
        assert_eq!(rank_rows([(seq("T"), 4)]), vec![row(1, 4, "T")]);
    }

    fn tag(id: u64, freq: u64) -> Tag {
        Tag {
            tag_id: id,
            sample: S,
            seq: seq("ACGT"),
            frequency: freq,
            rank: id,
        }
    }

    fn align(id: u64, tag: u64, gene: u64) -> Alignment {
        Alignment {
            alignment_id: id,
            sample: S,
            query_id: tag,
            gene_id: gene,
            pos: 1,
            strand: Strand::Forward,
        }
    }

    #[test]
    fn expression_hand_sum() {
        let tags = [tag(1, 5), tag(2, 3)];
        let al = [align(1, 1, 1), align(2, 2, 1)];
        let want = vec![GeneExpression {
            gene_id: 1,
            sample: S,
            total_frequency: 8,
            tag_count: 2,
        }];
        assert_eq!(gene_expression(&al, &tags, S).unwrap(), want);
        assert_eq!(gene_expression_parallel(&al, &tags, S, 2).unwrap(), want);
        assert!(gene_expression(&[], &tags, S).unwrap().is_empty());
    }

    #[test]
    fn expression_multi_hit_counts_each_alignment() {
        let tags = [tag(1, 5)];
        let al = [align(1, 1, 1), align(2, 1, 1)];
        let out = gene_expression(&al, &tags, S).unwrap();
        assert_eq!((out[0].total_frequency, out[0].tag_count), (10, 2));
    }

    #[test]
    fn expression_dangling_names_alignment() {
        let tags = [tag(1, 5)];
        let al = [align(1, 1, 1), align(7, 9, 1)];
        match gene_expression(&al, &tags, S) {
            Err(QueryError::DanglingTag { alignment_id: 7, tag_id: 9 }) => {}
            other => panic!("{other:?}"),
        }
        assert!(gene_expression_parallel(&al, &tags, S, 2).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let rows = vec![row(1, 2, "ACGT"), row(2, 1, "TTTT")];
        let mut out = Vec::new();
        write_binned_tsv(&rows, &mut out).unwrap();
        assert_eq!(out, b"rank\tfrequency\tsequence\n1\t2\tACGT\n2\t1\tTTTT\n");
        assert_eq!(read_binned_tsv(&out[..]).unwrap(), rows);

        let mut out = Vec::new();
        write_expression_tsv(&[], &mut out).unwrap();
        assert_eq!(out, b"gene_id\ttotal_frequency\ttag_count\n");
        let ex = gene_expression(&[align(1, 1, 3)], &[tag(1, 4)], S).unwrap();
        let mut out = Vec::new();
        write_expression_tsv(&ex, &mut out).unwrap();
        assert_eq!(read_expression_tsv(&out[..], S).unwrap(), ex);
        assert!(read_binned_tsv(&b"rank\tfrequency\n"[..]).is_err());
        assert!(read_binned_tsv(&b"rank\tfrequency\tsequence\nx\t1\tA\n"[..]).is_err());
    }

    fn oracle(reads: &[Sequence]) -> Vec<(u64, Vec<u8>)> {
        let mut m: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for r in reads {
            if !r.as_bytes().contains(&b'N') {
                *m.entry(r.as_bytes().to_vec()).or_default() += 1;
            }
        }
        let mut v: Vec<(u64, Vec<u8>)> = m.into_iter().map(|(s, n)| (n, s)).collect();
        v.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        v
    }

    fn arb_reads() -> impl Strategy<Value = Vec<Sequence>> {
        proptest::collection::vec("[ACGN]{1,3}", 0..200)
            .prop_map(|v| v.into_iter().map(|s| s.parse().unwrap()).collect())
    }

    fn binning_state<'a>(agg: &BinningAggregate<'a>, v: &'a [Sequence]) -> HashMap<&'a Sequence, u64> {
        let mut s = agg.init();
        for r in v {
            agg.accumulate(&mut s, (S, r)).unwrap();
        }
        s
    }

    proptest! {
        #[test]
        fn binning_matches_oracle(reads in arb_reads(), k in 1usize..9) {
            let out = bin_unique_reads_parallel(reads.iter().map(|r| (S, r)), S, k);
            let got: Vec<(u64, Vec<u8>)> = out.iter().map(|r| (r.frequency, r.seq.as_bytes().to_vec())).collect();
            prop_assert_eq!(got, oracle(&reads));
            prop_assert!(out.iter().enumerate().all(|(i, r)| r.rank == i as u64 + 1));
            let total: u64 = out.iter().map(|r| r.frequency).sum();
            prop_assert_eq!(total, reads.iter().filter(|r| !r.contains_n()).count() as u64);
            let mut rev = reads.clone();
            rev.reverse();
            prop_assert_eq!(bin_unique_reads(rev.iter().map(|r| (S, r)), S), out);
        }

        #[test]
        fn binning_merge_laws(a in arb_reads(), b in arb_reads(), c in arb_reads()) {
            let agg = BinningAggregate::new(S);
            let st = |v| binning_state(&agg, v);
            let x = agg.terminate(agg.merge(st(&a), agg.merge(st(&b), st(&c))));
            let y = agg.terminate(agg.merge(agg.merge(st(&a), st(&b)), st(&c)));
            prop_assert_eq!(&x, &y);
            let p = agg.terminate(agg.merge(st(&a), st(&b)));
            let q = agg.terminate(agg.merge(st(&b), st(&a)));
            prop_assert_eq!(p, q);
        }

        #[test]
        fn expression_merge_laws(
            rows in proptest::collection::vec((1u64..5, 1u64..4), 0..60),
            cut1 in 0usize..60, cut2 in 0usize..60,
        ) {
            let tags: Vec<Tag> = (1..5).map(|i| tag(i, i * 3)).collect();
            let al: Vec<Alignment> = rows.iter().enumerate().map(|(i, &(t, g))| align(i as u64 + 1, t, g)).collect();
            let (c1, c2) = (cut1.min(al.len()), cut2.min(al.len()));
            let (lo, hi) = (c1.min(c2), c1.max(c2));
            let agg = ExpressionAggregate::new(&tags, S);
            let st = |v: &[Alignment]| {
                let mut s = agg.init();
                for a in v { agg.accumulate(&mut s, a).unwrap(); }
                s
            };
            let (a, b, c) = (&al[..lo], &al[lo..hi], &al[hi..]);
            let x = agg.terminate(agg.merge(st(a), agg.merge(st(b), st(c))));
            let y = agg.terminate(agg.merge(agg.merge(st(a), st(b)), st(c)));
            prop_assert_eq!(&x, &y);
            prop_assert_eq!(agg.terminate(agg.merge(st(a), st(b))), agg.terminate(agg.merge(st(b), st(a))));
            prop_assert_eq!(x, gene_expression(&al, &tags, S).unwrap());
        }
    }
}
