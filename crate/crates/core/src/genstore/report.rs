use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::codec::{encode_blockdict, encode_sequence, BlockSize, Codec};
use super::layout::{bytes_len, RowWriter, ROW_HEADER};
use super::store::{
    alignment_row, encode_sample, expression_row, flat_read_row, read_row, reference_row, run_row,
    tag_row, QueryKind, Store,
};
use super::StoreError;
use crate::seqcore::Sequence;

/// Bytes one catalog takes under each representation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CatalogBytes {
    pub name: &'static str,
    pub rows: u64,
    pub import_1to1: u64,
    pub normalized_plain: u64,
    pub normalized_blockdict: u64,
    pub normalized_packed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorageReport {
    /// Sum of the original file sizes.
    pub raw_files: u64,
    /// File content held by the blob registry.
    pub blob_registry: u64,
    /// Original size of the registered files, as measured at registration.
    pub registered_raw: u64,
    /// Registry rows describing those files.
    pub blob_metadata: u64,
    pub import_1to1: u64,
    pub normalized_plain: u64,
    pub normalized_blockdict: u64,
    pub normalized_packed: u64,
    /// Read sequence text, without length prefixes.
    pub sequence_text_bytes: u64,
    /// Packed payload of the same sequences (text payload where the codec
    /// fell back to text).
    pub packed_payload_bytes: u64,
    pub catalogs: Vec<CatalogBytes>,
}

impl StorageReport {
    pub fn catalog(&self, name: &str) -> Option<&CatalogBytes> {
        self.catalogs.iter().find(|c| c.name == name)
    }

    fn ratio(a: u64, b: u64) -> f64 {
        if b == 0 {
            f64::NAN
        } else {
            a as f64 / b as f64
        }
    }

    pub fn blob_ratio(&self) -> f64 {
        Self::ratio(self.blob_registry, self.registered_raw)
    }

    pub fn normalized_to_1to1(&self) -> f64 {
        Self::ratio(self.normalized_plain, self.import_1to1)
    }

    pub fn packed_to_text(&self) -> f64 {
        Self::ratio(self.packed_payload_bytes, self.sequence_text_bytes)
    }

    /// Fixed-layout text table: one row per catalog plus totals, and the
    /// representation totals against the raw files.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "catalog\trows\t1to1\tnormalized\tblockdict\tpacked"
        );
        for c in &self.catalogs {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                c.name, c.rows, c.import_1to1, c.normalized_plain, c.normalized_blockdict, c.normalized_packed
            );
        }
        let _ = writeln!(
            s,
            "total\t{}\t{}\t{}\t{}\t{}",
            self.catalogs.iter().map(|c| c.rows).sum::<u64>(),
            self.import_1to1,
            self.normalized_plain,
            self.normalized_blockdict,
            self.normalized_packed
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "representation\tbytes\tratio_to_raw");
        let raw = self.raw_files;
        for (name, v) in [
            ("raw_files", self.raw_files),
            ("registered_raw", self.registered_raw),
            ("blob_registry", self.blob_registry),
            ("import_1to1", self.import_1to1),
            ("normalized_plain", self.normalized_plain),
            ("normalized_blockdict", self.normalized_blockdict),
            ("normalized_packed", self.normalized_packed),
        ] {
            let _ = writeln!(s, "{name}\t{v}\t{:.3}", Self::ratio(v, raw));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "normalized/1to1\t{:.3}", self.normalized_to_1to1());
        let _ = writeln!(s, "packed/text_sequence\t{:.3}", self.packed_to_text());
        let _ = writeln!(s, "blob_registry/registered_raw\t{:.3}", self.blob_ratio());
        s
    }
}

fn framed(w: RowWriter) -> u64 {
    w.framed_len() as u64
}

/// Plain row bytes, and the same row with its sequence field swapped for the
/// packed encoding.
fn seq_variants(row: RowWriter, seq: &Sequence) -> (u64, u64) {
    let plain = row.framed_len() as u64;
    let packed = plain - bytes_len(seq.len()) as u64 + encode_sequence(seq).stored_len() as u64;
    (plain, packed)
}

/// Size of a sequence column stored with the block codec.
fn blockdict_column<'a>(seqs: impl Iterator<Item = &'a Sequence>) -> (u64, u64) {
    let rows: Vec<&[u8]> = seqs.map(Sequence::as_bytes).collect();
    let text: u64 = rows.iter().map(|r| bytes_len(r.len()) as u64).sum();
    (text, encode_blockdict(&rows, BlockSize::default()).len() as u64)
}

/// Byte accounting for every catalog of `store` under each representation.
/// `raw_files` are the original corpus files the store was loaded from.
pub fn storage_report<P: AsRef<Path>>(store: &Store, raw_files: &[P]) -> Result<StorageReport, StoreError> {
    let mut report = StorageReport::default();
    for p in raw_files {
        report.raw_files += fs::metadata(p.as_ref())?.len();
    }
    for b in store.blobs() {
        report.blob_registry += fs::metadata(store.blob_path(b))?.len();
        report.registered_raw += b.byte_length;
        let mut row = Vec::new();
        b.encode(&mut row);
        report.blob_metadata += row.len() as u64;
    }

    let mut samples = CatalogBytes {
        name: "samples",
        ..Default::default()
    };
    for k in store.samples() {
        samples.rows += 1;
        samples.normalized_plain += framed(encode_sample(&mut RowWriter::new(), *k).clone());
    }
    // experiment and group rows are 8 and 16 bytes plus framing
    let mut experiments: Vec<u64> = store.samples().map(|k| k.experiment).collect();
    experiments.dedup();
    let mut groups: Vec<(u64, u64)> = store.samples().map(|k| (k.experiment, k.group)).collect();
    groups.dedup();
    samples.normalized_plain += experiments.len() as u64 * (ROW_HEADER as u64 + 8);
    samples.normalized_plain += groups.len() as u64 * (ROW_HEADER as u64 + 16);
    samples.normalized_blockdict = samples.normalized_plain;
    samples.normalized_packed = samples.normalized_plain;

    let mut runs = CatalogBytes {
        name: "runs",
        ..Default::default()
    };
    for r in store.runs() {
        runs.rows += 1;
        runs.normalized_plain += framed(run_row(r));
    }
    runs.normalized_blockdict = runs.normalized_plain;
    runs.normalized_packed = runs.normalized_plain;

    let mut reads = CatalogBytes {
        name: "reads",
        ..Default::default()
    };
    for r in store.reads() {
        reads.rows += 1;
        let (plain, packed) = seq_variants(read_row(r), &r.seq);
        reads.normalized_plain += plain;
        reads.normalized_packed += packed;
        report.sequence_text_bytes += r.seq.len() as u64;
        let e = encode_sequence(&r.seq);
        report.packed_payload_bytes += match e.codec {
            Codec::Packed2Bit => e.payload.len() as u64,
            Codec::Text => r.seq.len() as u64,
        };
    }
    let (text, blocks) = blockdict_column(store.reads().iter().map(|r| &r.seq));
    reads.normalized_blockdict = reads.normalized_plain - text + blocks;
    for f in store.flat_reads() {
        reads.import_1to1 += framed(flat_read_row(f));
    }
    if reads.rows == 0 {
        reads.rows = store.flat_reads().len() as u64;
    }

    let mut tags = CatalogBytes {
        name: "tags",
        ..Default::default()
    };
    for t in store.tags() {
        tags.rows += 1;
        let (plain, packed) = seq_variants(tag_row(t), &t.seq);
        tags.normalized_plain += plain;
        tags.normalized_packed += packed;
        let mut flat = RowWriter::new();
        flat.count(t.rank as u32).count(t.frequency as u32).bytes(t.seq.as_bytes());
        tags.import_1to1 += framed(flat);
    }
    let (text, blocks) = blockdict_column(store.tags().iter().map(|t| &t.seq));
    tags.normalized_blockdict = tags.normalized_plain - text + blocks;

    let mut refs = CatalogBytes {
        name: "references",
        ..Default::default()
    };
    for r in store.references() {
        refs.rows += 1;
        let (plain, packed) = seq_variants(reference_row(r), &r.seq);
        refs.normalized_plain += plain;
        refs.normalized_packed += packed;
        let mut flat = RowWriter::new();
        flat.bytes(r.name.as_bytes()).bytes(r.seq.as_bytes());
        refs.import_1to1 += framed(flat);
    }
    let (text, blocks) = blockdict_column(store.references().iter().map(|r| &r.seq));
    refs.normalized_blockdict = refs.normalized_plain - text + blocks;

    // The 1:1 alignment row repeats the textual identifiers: the read name as
    // it appeared in the FASTQ (or the tag sequence) and the reference name.
    let mut aligns = CatalogBytes {
        name: "alignments",
        ..Default::default()
    };
    for a in store.alignments() {
        aligns.rows += 1;
        aligns.normalized_plain += framed(alignment_row(a));
        let al = &a.alignment;
        let name: Vec<u8> = match a.kind {
            QueryKind::Read => match store.flat_reads().get(al.query_id as usize - 1) {
                Some(f) => f.name.clone(),
                None => {
                    let r = store.read(al.query_id).expect("integrity");
                    store.short_read(r).coords.to_name().into_bytes()
                }
            },
            QueryKind::Tag => store.tag(al.query_id).expect("integrity").seq.as_bytes().to_vec(),
        };
        let ref_name = &store.reference(al.gene_id).expect("integrity").name;
        let mut flat = RowWriter::new();
        flat.bytes(&name).bytes(ref_name.as_bytes()).count(al.pos as u32).flag(0);
        aligns.import_1to1 += framed(flat);
    }
    aligns.normalized_blockdict = aligns.normalized_plain;
    aligns.normalized_packed = aligns.normalized_plain;

    let mut exprs = CatalogBytes {
        name: "expressions",
        ..Default::default()
    };
    for e in store.expressions() {
        exprs.rows += 1;
        exprs.normalized_plain += framed(expression_row(e));
        let gene = &store.reference(e.gene_id).expect("integrity").name;
        let mut flat = RowWriter::new();
        flat.bytes(gene.as_bytes())
            .count(e.total_frequency as u32)
            .count(e.tag_count as u32);
        exprs.import_1to1 += framed(flat);
    }
    exprs.normalized_blockdict = exprs.normalized_plain;
    exprs.normalized_packed = exprs.normalized_plain;

    report.catalogs = vec![samples, runs, reads, tags, refs, aligns, exprs];
    for c in &report.catalogs {
        report.import_1to1 += c.import_1to1;
        report.normalized_plain += c.normalized_plain;
        report.normalized_blockdict += c.normalized_blockdict;
        report.normalized_packed += c.normalized_packed;
    }
    Ok(report)
}
