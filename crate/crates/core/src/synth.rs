//! Seeded synthetic corpora.
//!
//! Three profiles, each scaled by a factor in `(0, 1]`:
//!
//! * `dge`: one lane of tag reads for a digital gene expression study,
//!   5,028,052 reads over 565,526 distinct N-free tags at full scale, plus a
//!   gene set and tag-to-gene alignments.
//! * `reseq`: one lane of 36 bp reads sampled from 25 reference sequences,
//!   6.2 million reads at full scale, with their alignments.
//! * `scan`: a FASTA file of 5,028,052 short reads at full scale.
//!
//! Read names follow the composite `INSTRUMENT_RUN_FLOWCELL:lane:tile:x:y`
//! form and are repeated on the FASTQ `+` line. Output depends only on the
//! profile, seed and scale.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fastx::FastaStreamWriter;
use crate::seqcore::{Sequence, PHRED_OFFSET};

pub const DGE_READS: u64 = 5_028_052;
pub const DGE_TAGS: u64 = 565_526;
pub const RESEQ_READS: u64 = 6_200_000;
pub const RESEQ_REFERENCES: usize = 25;
pub const SCAN_RECORDS: u64 = 5_028_052;

pub const INSTRUMENT: &str = "HWI-EAS285";
pub const RUN: &str = "0001";
pub const FLOWCELL: &str = "FC30F1UAAXX";
const TILES: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Dge,
    Reseq,
    Scan,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dge" => Ok(Profile::Dge),
            "reseq" => Ok(Profile::Reseq),
            "scan" => Ok(Profile::Scan),
            _ => Err(format!("unknown profile {s:?} (expected dge, reseq or scan)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Dge => "dge",
            Profile::Reseq => "reseq",
            Profile::Scan => "scan",
        })
    }
}

/// What a generator wrote.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    pub reads: u64,
    /// Distinct N-free read sequences.
    pub unique: u64,
    pub references: u64,
    pub alignments: u64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reads\t{}", self.reads)?;
        writeln!(f, "unique\t{}", self.unique)?;
        writeln!(f, "references\t{}", self.references)?;
        writeln!(f, "alignments\t{}", self.alignments)?;
        for p in &self.files {
            writeln!(f, "file\t{}", p.display())?;
        }
        Ok(())
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn scaled(n: u64, scale: f64) -> u64 {
    ((n as f64 * scale).round() as u64).max(1)
}

/// Read name for the `ordinal`-th read (0-based) of a lane holding `total`
/// reads. Tiles fill in order; (x, y) is a bijection of the in-tile ordinal,
/// so names never repeat within a lane.
pub fn composite_name(lane: u32, ordinal: u64, total: u64) -> String {
    let per_tile = total.div_ceil(TILES).max(1);
    let tile = ordinal / per_tile + 1;
    let o = ordinal % per_tile;
    let x = (o * 7919) % 4096;
    let y = o / 4096;
    format!("{INSTRUMENT}_{RUN}_{FLOWCELL}:{lane}:{tile}:{x}:{y}")
}

/// Uniform random sequence; each position is N with probability `n_rate`.
pub fn random_sequence<R: Rng>(rng: &mut R, len: usize, n_rate: f64) -> Sequence {
    let bytes: Vec<u8> = (0..len)
        .map(|_| {
            if n_rate > 0.0 && rng.gen_bool(n_rate.min(1.0)) {
                b'N'
            } else {
                b"ACGT"[rng.gen_range(0..4)]
            }
        })
        .collect();
    Sequence::from_vec(bytes).expect("generated from the alphabet")
}

pub fn random_quals<R: Rng>(rng: &mut R, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen_range(2..=40)).collect()
}

/// Writes one FASTQ record with the name repeated on the `+` line.
pub fn write_fastq_record<W: Write>(out: &mut W, name: &str, seq: &[u8], quals: &[u8]) -> io::Result<()> {
    out.write_all(b"@")?;
    out.write_all(name.as_bytes())?;
    out.write_all(b"\n")?;
    out.write_all(seq)?;
    out.write_all(b"\n+")?;
    out.write_all(name.as_bytes())?;
    out.write_all(b"\n")?;
    for q in quals {
        out.write_all(&[q + PHRED_OFFSET])?;
    }
    out.write_all(b"\n")
}

/// In-memory FASTQ of `n` random reads of length 20..=100 with composite
/// names, about 1% of bases N.
pub fn fastq_bytes(seed: u64, n: u64) -> Vec<u8> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for i in 0..n {
        let len = rng.gen_range(20..=100);
        let seq = random_sequence(&mut rng, len, 0.01);
        let q = random_quals(&mut rng, len);
        write_fastq_record(&mut out, &composite_name(1, i, n), seq.as_bytes(), &q).unwrap();
    }
    out
}

fn create(dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> io::Result<BufWriter<File>> {
    let p = dir.join(name);
    let f = File::create(&p)?;
    files.push(p);
    Ok(BufWriter::with_capacity(1 << 20, f))
}

pub fn generate(profile: Profile, dir: &Path, seed: u64, scale: f64) -> io::Result<Summary> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "scale must be in (0, 1]"));
    }
    std::fs::create_dir_all(dir)?;
    match profile {
        Profile::Dge => dge(dir, seed, scale),
        Profile::Reseq => reseq(dir, seed, scale),
        Profile::Scan => scan(dir, seed, scale),
    }
}

const TAG_LEN: usize = 21;
const READ_LEN: usize = 36;

/// Files: `dge_reads.fastq`, `dge_genes.fasta`, `dge_alignments.tsv`. The
/// alignment file names tags by sequence.
fn dge(dir: &Path, seed: u64, scale: f64) -> io::Result<Summary> {
    let mut rng = rng(seed);
    let total = scaled(DGE_READS, scale);
    let unique = scaled(DGE_TAGS, scale).min(total);
    let n_reads = total / 50;
    let clean = total - n_reads;
    let unique = unique.min(clean);

    let mut seen = HashSet::with_capacity(unique as usize);
    let mut tags: Vec<Sequence> = Vec::with_capacity(unique as usize);
    while (tags.len() as u64) < unique {
        let s = random_sequence(&mut rng, TAG_LEN, 0.0);
        if seen.insert(s.clone()) {
            tags.push(s);
        }
    }
    drop(seen);

    // every tag once, the rest skewed toward low indices
    let mut order: Vec<u32> = (0..unique as u32).collect();
    for _ in unique..clean {
        let u: f64 = rng.gen();
        order.push(((u * u * u) * unique as f64) as u32);
    }
    for _ in 0..n_reads {
        order.push(u32::MAX);
    }
    order.shuffle(&mut rng);

    let mut summary = Summary {
        reads: total,
        unique,
        ..Default::default()
    };
    let mut out = create(dir, "dge_reads.fastq", &mut summary.files)?;
    let lane = 1 + (seed % 8) as u32;
    for (i, &t) in order.iter().enumerate() {
        let seq = if t == u32::MAX {
            let mut s = random_sequence(&mut rng, TAG_LEN, 0.0).into_bytes();
            let p = rng.gen_range(0..TAG_LEN);
            s[p] = b'N';
            s
        } else {
            tags[t as usize].as_bytes().to_vec()
        };
        let q = random_quals(&mut rng, TAG_LEN);
        write_fastq_record(&mut out, &composite_name(lane, i as u64, total), &seq, &q)?;
    }
    out.flush()?;
    drop(order);

    let genes = scaled(20_000, scale).max(10);
    let gene_len = 1_500usize;
    let mut out = create(dir, "dge_genes.fasta", &mut summary.files)?;
    let mut w = FastaStreamWriter::new(&mut out, 70);
    for g in 1..=genes {
        w.begin(&format!("gene{g:05}"))?;
        w.push(random_sequence(&mut rng, gene_len, 0.0).as_bytes())?;
    }
    w.finish()?;
    out.flush()?;
    summary.references = genes;

    // about 60% of tags align, a tenth of those to a second gene as well
    let mut out = create(dir, "dge_alignments.tsv", &mut summary.files)?;
    for t in &tags {
        if !rng.gen_bool(0.6) {
            continue;
        }
        let hits = if rng.gen_bool(0.1) { 2 } else { 1 };
        for _ in 0..hits {
            let g = rng.gen_range(1..=genes);
            let pos = rng.gen_range(1..=gene_len - TAG_LEN + 1);
            let strand = if rng.gen() { '+' } else { '-' };
            writeln!(out, "{t}\tgene{g:05}\t{pos}\t{strand}")?;
            summary.alignments += 1;
        }
    }
    out.flush()?;
    Ok(summary)
}

/// Relative sizes of the 25 reference sequences (Mb, rounded).
const CHROMOSOMES: [(&str, u32); RESEQ_REFERENCES] = [
    ("chr1", 247),
    ("chr2", 243),
    ("chr3", 199),
    ("chr4", 191),
    ("chr5", 181),
    ("chr6", 171),
    ("chr7", 159),
    ("chr8", 146),
    ("chr9", 140),
    ("chr10", 135),
    ("chr11", 134),
    ("chr12", 132),
    ("chr13", 114),
    ("chr14", 106),
    ("chr15", 100),
    ("chr16", 89),
    ("chr17", 79),
    ("chr18", 76),
    ("chr19", 64),
    ("chr20", 62),
    ("chr21", 47),
    ("chr22", 50),
    ("chrX", 155),
    ("chrY", 58),
    ("chrM", 1),
];

/// Files: `reseq_reads.fastq`, `reseq_refs.fasta`, `reseq_alignments.tsv`.
/// Reads are numbered from 1 in file order in the alignment file; reverse
/// strand reads are stored reverse-complemented, as sequencers report them.
fn reseq(dir: &Path, seed: u64, scale: f64) -> io::Result<Summary> {
    let mut rng = rng(seed);
    let total = scaled(RESEQ_READS, scale);
    // about 8x mean coverage
    let genome = (total * READ_LEN as u64 / 8).max(RESEQ_REFERENCES as u64 * 200);
    let weight: u64 = CHROMOSOMES.iter().map(|c| c.1 as u64).sum();
    let mut refs: Vec<(&str, Sequence)> = Vec::with_capacity(RESEQ_REFERENCES);
    let mut summary = Summary {
        reads: total,
        references: RESEQ_REFERENCES as u64,
        ..Default::default()
    };
    let mut out = create(dir, "reseq_refs.fasta", &mut summary.files)?;
    let mut w = FastaStreamWriter::new(&mut out, 60);
    for (name, mb) in CHROMOSOMES {
        let len = (genome * mb as u64 / weight).max(200) as usize;
        let s = random_sequence(&mut rng, len, 0.0);
        w.begin(name)?;
        w.push(s.as_bytes())?;
        refs.push((name, s));
    }
    w.finish()?;
    out.flush()?;

    let cumulative: Vec<u64> = refs
        .iter()
        .scan(0u64, |acc, r| {
            *acc += r.1.len() as u64;
            Some(*acc)
        })
        .collect();
    let span = *cumulative.last().unwrap();
    let lane = 1 + (seed % 8) as u32;
    let mut reads = create(dir, "reseq_reads.fastq", &mut summary.files)?;
    let mut aligns = create(dir, "reseq_alignments.tsv", &mut summary.files)?;
    let mut seq = Vec::with_capacity(READ_LEN);
    for i in 0..total {
        let g = rng.gen_range(0..span);
        let ri = cumulative.partition_point(|&c| c <= g);
        let (name, r) = &refs[ri];
        let pos = rng.gen_range(1..=r.len() - READ_LEN + 1);
        seq.clear();
        seq.extend_from_slice(&r.as_bytes()[pos - 1..pos - 1 + READ_LEN]);
        for b in seq.iter_mut() {
            let roll: f64 = rng.gen();
            if roll < 0.005 {
                *b = b'N';
            } else if roll < 0.015 {
                *b = b"ACGT"[rng.gen_range(0..4)];
            }
        }
        let reverse: bool = rng.gen();
        if reverse {
            seq.reverse();
            for b in seq.iter_mut() {
                *b = match *b {
                    b'A' => b'T',
                    b'C' => b'G',
                    b'G' => b'C',
                    b'T' => b'A',
                    o => o,
                };
            }
        }
        let q = random_quals(&mut rng, READ_LEN);
        write_fastq_record(&mut reads, &composite_name(lane, i, total), &seq, &q)?;
        writeln!(aligns, "{}\t{name}\t{pos}\t{}", i + 1, if reverse { '-' } else { '+' })?;
    }
    reads.flush()?;
    aligns.flush()?;
    summary.alignments = total;
    Ok(summary)
}

/// File: `scan_reads.fasta`.
fn scan(dir: &Path, seed: u64, scale: f64) -> io::Result<Summary> {
    let mut rng = rng(seed);
    let total = scaled(SCAN_RECORDS, scale);
    let mut summary = Summary {
        reads: total,
        ..Default::default()
    };
    let mut out = create(dir, "scan_reads.fasta", &mut summary.files)?;
    let lane = 1 + (seed % 8) as u32;
    for i in 0..total {
        let s = random_sequence(&mut rng, READ_LEN, 0.002);
        out.write_all(b">")?;
        out.write_all(composite_name(lane, i, total).as_bytes())?;
        out.write_all(b"\n")?;
        out.write_all(s.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(summary)
}
