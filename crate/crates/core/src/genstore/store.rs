use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use uuid::Uuid;

use super::blob::{blob_guid, hash_file, BlobEntry, BlobRecords, FormatTag};
use super::layout::{read_rows, RowReader, RowWriter};
use super::StoreError;
use crate::fastx::FastqReader;
use crate::seqcore::{
    Alignment, GeneExpression, QualityVector, ReadCoordinates, ReferenceSequence, SampleKey,
    Sequence, ShortRead, Strand, Tag,
};

/// One file per catalog inside a store directory, plus `blobs/`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Catalog {
    Experiments,
    SampleGroups,
    Samples,
    Runs,
    Reads,
    Reads1to1,
    Tags,
    References,
    Alignments,
    Expressions,
    Blobs,
}

impl Catalog {
    pub const ALL: [Catalog; 11] = [
        Catalog::Experiments,
        Catalog::SampleGroups,
        Catalog::Samples,
        Catalog::Runs,
        Catalog::Reads,
        Catalog::Reads1to1,
        Catalog::Tags,
        Catalog::References,
        Catalog::Alignments,
        Catalog::Expressions,
        Catalog::Blobs,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Catalog::Experiments => "experiments.cat",
            Catalog::SampleGroups => "sample_groups.cat",
            Catalog::Samples => "samples.cat",
            Catalog::Runs => "runs.cat",
            Catalog::Reads => "reads.cat",
            Catalog::Reads1to1 => "reads_1to1.cat",
            Catalog::Tags => "tags.cat",
            Catalog::References => "references.cat",
            Catalog::Alignments => "alignments.cat",
            Catalog::Expressions => "expressions.cat",
            Catalog::Blobs => "blobs.cat",
        }
    }
}

pub const BLOB_DIR: &str = "blobs";

/// A flowcell lane of one sample: the shared part of every read name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub run_id: u64,
    pub sample: SampleKey,
    pub instrument: String,
    pub flowcell: String,
    pub lane: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRead {
    pub read_id: u64,
    pub run_id: u64,
    pub tile: u32,
    pub x: u32,
    pub y: u32,
    pub seq: Sequence,
    pub qual: QualityVector,
}

/// A FASTQ record kept exactly as its lines appear in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatRead {
    pub name: Vec<u8>,
    pub seq: Vec<u8>,
    pub plus: Vec<u8>,
    pub qual: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryKind {
    Read,
    Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoredAlignment {
    pub alignment: Alignment,
    pub kind: QueryKind,
}

/// An alignment as it arrives from an aligner, before id resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewAlignment {
    pub sample: SampleKey,
    pub kind: QueryKind,
    pub query_id: u64,
    pub ref_name: String,
    pub pos: u64,
    pub strand: Strand,
}

/// Normalized, surrogate-keyed catalogs held in memory and, for an on-disk
/// store, mirrored into append-only catalog files.
///
/// Writers take `&mut self`; any number of readers may share `&Store`.
#[derive(Debug, Default)]
pub struct Store {
    dir: Option<PathBuf>,
    experiments: BTreeSet<u64>,
    groups: BTreeSet<(u64, u64)>,
    samples: BTreeSet<SampleKey>,
    runs: Vec<Run>,
    run_index: HashMap<(SampleKey, String, String, u32), u64>,
    reads: Vec<StoredRead>,
    coord_index: HashSet<(u64, u32, u32, u32)>,
    flat_reads: Vec<FlatRead>,
    tags: Vec<Tag>,
    references: Vec<ReferenceSequence>,
    ref_index: HashMap<String, u64>,
    alignments: Vec<StoredAlignment>,
    expressions: Vec<GeneExpression>,
    blobs: Vec<BlobEntry>,
}

type Pending = Vec<(Catalog, Vec<u8>)>;

fn push(pending: &mut Pending, cat: Catalog, row: &mut RowWriter) {
    match pending.iter_mut().find(|(c, _)| *c == cat) {
        Some((_, buf)) => row.finish_into(buf),
        None => {
            let mut buf = Vec::new();
            row.finish_into(&mut buf);
            pending.push((cat, buf));
        }
    }
}

pub(crate) fn encode_sample(w: &mut RowWriter, k: SampleKey) -> &mut RowWriter {
    w.id(k.experiment).id(k.group).id(k.sample)
}

fn decode_sample(r: &mut RowReader<'_>) -> io::Result<SampleKey> {
    Ok(SampleKey::new(r.id()?, r.id()?, r.id()?))
}

pub(crate) fn run_row(run: &Run) -> RowWriter {
    let mut w = RowWriter::new();
    w.id(run.run_id);
    encode_sample(&mut w, run.sample)
        .count(run.lane)
        .bytes(run.instrument.as_bytes())
        .bytes(run.flowcell.as_bytes());
    w
}

/// Normalized read row: id, run, tile, x, y, sequence text, Phred scores.
pub(crate) fn read_row(read: &StoredRead) -> RowWriter {
    let mut w = RowWriter::new();
    w.id(read.read_id)
        .id(read.run_id)
        .count(read.tile)
        .count(read.x)
        .count(read.y)
        .bytes(read.seq.as_bytes())
        .bytes(read.qual.scores());
    w
}

pub(crate) fn flat_read_row(r: &FlatRead) -> RowWriter {
    let mut w = RowWriter::new();
    w.bytes(&r.name).bytes(&r.seq).bytes(&r.plus).bytes(&r.qual);
    w
}

pub(crate) fn tag_row(t: &Tag) -> RowWriter {
    let mut w = RowWriter::new();
    w.id(t.tag_id);
    encode_sample(&mut w, t.sample)
        .count(t.frequency as u32)
        .count(t.rank as u32)
        .bytes(t.seq.as_bytes());
    w
}

pub(crate) fn reference_row(r: &ReferenceSequence) -> RowWriter {
    let mut w = RowWriter::new();
    w.id(r.ref_id).bytes(r.name.as_bytes()).bytes(r.seq.as_bytes());
    w
}

/// The sample is not repeated: it follows from the aligned read or tag.
pub(crate) fn alignment_row(a: &StoredAlignment) -> RowWriter {
    let mut w = RowWriter::new();
    w.id(a.alignment.alignment_id)
        .flag(match a.kind {
            QueryKind::Read => 0,
            QueryKind::Tag => 1,
        })
        .id(a.alignment.query_id)
        .id(a.alignment.gene_id)
        .count(a.alignment.pos as u32)
        .flag(match a.alignment.strand {
            Strand::Forward => 0,
            Strand::Reverse => 1,
        });
    w
}

pub(crate) fn expression_row(e: &GeneExpression) -> RowWriter {
    let mut w = RowWriter::new();
    w.id(e.gene_id);
    encode_sample(&mut w, e.sample)
        .count(e.total_frequency as u32)
        .count(e.tag_count as u32);
    w
}

fn invalid(msg: impl Into<String>) -> StoreError {
    StoreError::Io(msg.into())
}

impl Store {
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens (creating if needed) a store directory and loads every catalog.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(BLOB_DIR))?;
        let mut store = Store {
            dir: Some(dir.clone()),
            ..Store::default()
        };
        for cat in Catalog::ALL {
            let path = dir.join(cat.file_name());
            if !path.exists() {
                continue;
            }
            let rows = read_rows(File::open(&path)?)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            for body in rows {
                store
                    .load_row(cat, &body)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(store)
    }

    fn load_row(&mut self, cat: Catalog, body: &[u8]) -> io::Result<()> {
        let mut r = RowReader::new(body);
        match cat {
            Catalog::Experiments => {
                self.experiments.insert(r.id()?);
            }
            Catalog::SampleGroups => {
                self.groups.insert((r.id()?, r.id()?));
            }
            Catalog::Samples => {
                self.samples.insert(decode_sample(&mut r)?);
            }
            Catalog::Runs => {
                let run = Run {
                    run_id: r.id()?,
                    sample: decode_sample(&mut r)?,
                    lane: r.count()?,
                    instrument: r.string()?,
                    flowcell: r.string()?,
                };
                self.run_index.insert(
                    (run.sample, run.instrument.clone(), run.flowcell.clone(), run.lane),
                    run.run_id,
                );
                self.runs.push(run);
            }
            Catalog::Reads => {
                let read = StoredRead {
                    read_id: r.id()?,
                    run_id: r.id()?,
                    tile: r.count()?,
                    x: r.count()?,
                    y: r.count()?,
                    seq: Sequence::from_ascii(r.bytes()?).map_err(io_data)?,
                    qual: QualityVector::from_scores(r.bytes()?.to_vec()).map_err(io_data)?,
                };
                self.coord_index.insert((read.run_id, read.tile, read.x, read.y));
                self.reads.push(read);
            }
            Catalog::Reads1to1 => {
                self.flat_reads.push(FlatRead {
                    name: r.bytes()?.to_vec(),
                    seq: r.bytes()?.to_vec(),
                    plus: r.bytes()?.to_vec(),
                    qual: r.bytes()?.to_vec(),
                });
            }
            Catalog::Tags => {
                let tag_id = r.id()?;
                let sample = decode_sample(&mut r)?;
                let frequency = r.count()? as u64;
                let rank = r.count()? as u64;
                let seq = Sequence::from_ascii(r.bytes()?).map_err(io_data)?;
                self.tags.push(Tag {
                    tag_id,
                    sample,
                    seq,
                    frequency,
                    rank,
                });
            }
            Catalog::References => {
                let ref_id = r.id()?;
                let name = r.string()?;
                let seq = Sequence::from_ascii(r.bytes()?).map_err(io_data)?;
                self.ref_index.insert(name.clone(), ref_id);
                self.references.push(ReferenceSequence { ref_id, name, seq });
            }
            Catalog::Alignments => {
                let alignment_id = r.id()?;
                let kind = if r.flag()? == 0 { QueryKind::Read } else { QueryKind::Tag };
                let query_id = r.id()?;
                let gene_id = r.id()?;
                let pos = r.count()? as u64;
                let strand = if r.flag()? == 0 { Strand::Forward } else { Strand::Reverse };
                let sample = self
                    .query_sample(kind, query_id)
                    .ok_or_else(|| io_data(format!("alignment {alignment_id}: dangling query")))?;
                self.alignments.push(StoredAlignment {
                    alignment: Alignment {
                        alignment_id,
                        sample,
                        query_id,
                        gene_id,
                        pos,
                        strand,
                    },
                    kind,
                });
            }
            Catalog::Expressions => {
                self.expressions.push(GeneExpression {
                    gene_id: r.id()?,
                    sample: decode_sample(&mut r)?,
                    total_frequency: r.count()? as u64,
                    tag_count: r.count()? as u64,
                });
            }
            Catalog::Blobs => {
                self.blobs.push(BlobEntry::decode(body)?);
                return Ok(());
            }
        }
        r.finish()
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn commit(&mut self, pending: Pending) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        for (cat, bytes) in pending {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(cat.file_name()))?;
            f.write_all(&bytes)?;
        }
        Ok(())
    }

    /// Registers the experiment/group/sample chain for `key` if new.
    fn stage_sample(&mut self, key: SampleKey, pending: &mut Pending) -> Result<(), StoreError> {
        if !key.is_valid() {
            return Err(StoreError::InvalidSample(key));
        }
        if self.experiments.insert(key.experiment) {
            push(pending, Catalog::Experiments, RowWriter::new().id(key.experiment));
        }
        if self.groups.insert((key.experiment, key.group)) {
            push(
                pending,
                Catalog::SampleGroups,
                RowWriter::new().id(key.experiment).id(key.group),
            );
        }
        if self.samples.insert(key) {
            push(pending, Catalog::Samples, encode_sample(&mut RowWriter::new(), key));
        }
        Ok(())
    }

    /// Imports a FASTQ stream as normalized reads. Read names are decomposed
    /// into a per-lane run row plus tile/x/y; nothing is committed unless the
    /// whole stream imports cleanly.
    pub fn import_fastq_normalized<R: Read>(
        &mut self,
        source: R,
        buffer_size: usize,
        sample: SampleKey,
        lane: u32,
    ) -> Result<u64, StoreError> {
        if !sample.is_valid() {
            return Err(StoreError::InvalidSample(sample));
        }
        if !(1..=8).contains(&lane) {
            return Err(StoreError::LaneOutOfRange(lane));
        }
        let mut reader = FastqReader::new(source, buffer_size)?;
        let mut new_runs: Vec<Run> = Vec::new();
        let mut new_reads: Vec<StoredRead> = Vec::new();
        let mut seen: HashSet<(u64, u32, u32, u32)> = HashSet::new();
        let mut run_lookup: HashMap<(String, String), u64> = HashMap::new();
        loop {
            let record = reader.records_read() + 1;
            let Some(raw) = reader.next_raw()? else { break };
            let offset = raw.offset;
            let rec = raw.to_record(record)?;
            let coords = ReadCoordinates::parse_name(&rec.name).map_err(|e| {
                StoreError::InvalidRead {
                    offset,
                    record,
                    reason: e.to_string(),
                }
            })?;
            if coords.lane != lane {
                return Err(StoreError::InvalidRead {
                    offset,
                    record,
                    reason: format!("read name lane {} differs from import lane {lane}", coords.lane),
                });
            }
            let key = (coords.instrument, coords.flowcell);
            let run_id = match run_lookup.get(&key) {
                Some(&id) => id,
                None => {
                    let existing = self
                        .run_index
                        .get(&(sample, key.0.clone(), key.1.clone(), lane))
                        .copied();
                    let id = existing.unwrap_or_else(|| {
                        let id = (self.runs.len() + new_runs.len() + 1) as u64;
                        new_runs.push(Run {
                            run_id: id,
                            sample,
                            instrument: key.0.clone(),
                            flowcell: key.1.clone(),
                            lane,
                        });
                        id
                    });
                    run_lookup.insert(key, id);
                    id
                }
            };
            let ckey = (run_id, coords.tile, coords.x, coords.y);
            if self.coord_index.contains(&ckey) || !seen.insert(ckey) {
                return Err(StoreError::DuplicateCoordinates {
                    sample,
                    name: rec.name,
                    offset,
                });
            }
            new_reads.push(StoredRead {
                read_id: (self.reads.len() + new_reads.len() + 1) as u64,
                run_id,
                tile: coords.tile,
                x: coords.x,
                y: coords.y,
                seq: rec.seq,
                qual: rec.qual,
            });
        }

        let mut pending = Pending::new();
        self.stage_sample(sample, &mut pending)?;
        for run in &new_runs {
            push(&mut pending, Catalog::Runs, &mut run_row(run));
        }
        for read in &new_reads {
            push(&mut pending, Catalog::Reads, &mut read_row(read));
        }
        self.commit(pending)?;
        for run in new_runs {
            self.run_index.insert(
                (run.sample, run.instrument.clone(), run.flowcell.clone(), run.lane),
                run.run_id,
            );
            self.runs.push(run);
        }
        let n = new_reads.len() as u64;
        for read in new_reads {
            self.coord_index.insert((read.run_id, read.tile, read.x, read.y));
            self.reads.push(read);
        }
        Ok(n)
    }

    /// Imports a FASTQ stream the file-centric way: one row per record holding
    /// its lines verbatim, textual name included.
    pub fn import_fastq_1to1<R: Read>(
        &mut self,
        source: R,
        buffer_size: usize,
        sample: SampleKey,
        lane: u32,
    ) -> Result<u64, StoreError> {
        if !sample.is_valid() {
            return Err(StoreError::InvalidSample(sample));
        }
        if !(1..=8).contains(&lane) {
            return Err(StoreError::LaneOutOfRange(lane));
        }
        let mut reader = FastqReader::new(source, buffer_size)?;
        let mut rows = Vec::new();
        loop {
            let record = reader.records_read() + 1;
            let Some(raw) = reader.next_raw()? else { break };
            raw.to_record(record)?;
            rows.push(FlatRead {
                name: raw.name.to_vec(),
                seq: raw.seq.to_vec(),
                plus: raw.plus.to_vec(),
                qual: raw.qual.to_vec(),
            });
        }
        let mut pending = Pending::new();
        for r in &rows {
            push(&mut pending, Catalog::Reads1to1, &mut flat_read_row(r));
        }
        self.commit(pending)?;
        let n = rows.len() as u64;
        self.flat_reads.extend(rows);
        Ok(n)
    }

    /// Stores the ranked tags of one sample. `rows` are (sequence, frequency,
    /// rank); tag ids are assigned in the given order.
    pub fn insert_tags<I>(&mut self, sample: SampleKey, rows: I) -> Result<Vec<u64>, StoreError>
    where
        I: IntoIterator<Item = (Sequence, u64, u64)>,
    {
        if self.tags.iter().any(|t| t.sample == sample) {
            return Err(StoreError::TagsExist(sample));
        }
        let mut new: Vec<Tag> = Vec::new();
        for (seq, frequency, rank) in rows {
            if seq.contains_n() || frequency == 0 {
                return Err(StoreError::InvalidTag(format!(
                    "tag {seq} with frequency {frequency} violates tag invariants"
                )));
            }
            new.push(Tag {
                tag_id: (self.tags.len() + new.len() + 1) as u64,
                sample,
                seq,
                frequency,
                rank,
            });
        }
        if !crate::seqcore::ranks_dense(&new) {
            return Err(StoreError::InvalidTag("tag ranks are not dense from 1".into()));
        }
        let mut pending = Pending::new();
        self.stage_sample(sample, &mut pending)?;
        for t in &new {
            push(&mut pending, Catalog::Tags, &mut tag_row(t));
        }
        self.commit(pending)?;
        let ids = new.iter().map(|t| t.tag_id).collect();
        self.tags.extend(new);
        Ok(ids)
    }

    pub fn add_reference(&mut self, name: &str, seq: Sequence) -> Result<u64, StoreError> {
        if self.ref_index.contains_key(name) {
            return Err(StoreError::DuplicateReference(name.to_string()));
        }
        if seq.is_empty() {
            return Err(StoreError::EmptyReference(name.to_string()));
        }
        let r = ReferenceSequence {
            ref_id: self.references.len() as u64 + 1,
            name: name.to_string(),
            seq,
        };
        let mut pending = Pending::new();
        push(&mut pending, Catalog::References, &mut reference_row(&r));
        self.commit(pending)?;
        self.ref_index.insert(r.name.clone(), r.ref_id);
        let id = r.ref_id;
        self.references.push(r);
        Ok(id)
    }

    fn query_sample(&self, kind: QueryKind, id: u64) -> Option<SampleKey> {
        match kind {
            QueryKind::Read => self.read(id).map(|r| self.runs[r.run_id as usize - 1].sample),
            QueryKind::Tag => self.tag(id).map(|t| t.sample),
        }
    }

    fn query_len(&self, kind: QueryKind, id: u64) -> Option<usize> {
        match kind {
            QueryKind::Read => self.read(id).map(|r| r.seq.len()),
            QueryKind::Tag => self.tag(id).map(|t| t.seq.len()),
        }
    }

    /// Resolves ids and checks bounds without storing anything.
    pub fn check_alignment(&self, a: &NewAlignment) -> Result<(u64, SampleKey), StoreError> {
        let kind_name = match a.kind {
            QueryKind::Read => "read",
            QueryKind::Tag => "tag",
        };
        let dangling = || StoreError::Dangling {
            kind: kind_name,
            id: a.query_id,
        };
        let sample = self.query_sample(a.kind, a.query_id).ok_or_else(dangling)?;
        if sample != a.sample {
            return Err(StoreError::SampleMismatch {
                kind: kind_name,
                id: a.query_id,
                sample: a.sample,
            });
        }
        let ref_id = *self
            .ref_index
            .get(&a.ref_name)
            .ok_or_else(|| StoreError::UnknownReference(a.ref_name.clone()))?;
        let ref_len = self.references[ref_id as usize - 1].seq.len() as u64;
        let len = self.query_len(a.kind, a.query_id).unwrap() as u64;
        if a.pos < 1 || a.pos + len - 1 > ref_len || (len == 0 && a.pos > ref_len) {
            return Err(StoreError::OutOfBounds {
                pos: a.pos,
                len,
                reference: a.ref_name.clone(),
                ref_len,
            });
        }
        Ok((ref_id, sample))
    }

    /// Adds a batch atomically; the error names the 0-based row that failed.
    pub fn add_alignments(&mut self, rows: &[NewAlignment]) -> Result<Vec<u64>, StoreError> {
        let mut new = Vec::with_capacity(rows.len());
        for (i, a) in rows.iter().enumerate() {
            let (gene_id, sample) = self.check_alignment(a).map_err(|e| StoreError::Row {
                row: i,
                source: Box::new(e),
            })?;
            new.push(StoredAlignment {
                alignment: Alignment {
                    alignment_id: (self.alignments.len() + new.len() + 1) as u64,
                    sample,
                    query_id: a.query_id,
                    gene_id,
                    pos: a.pos,
                    strand: a.strand,
                },
                kind: a.kind,
            });
        }
        let mut pending = Pending::new();
        for a in &new {
            push(&mut pending, Catalog::Alignments, &mut alignment_row(a));
        }
        self.commit(pending)?;
        let ids = new.iter().map(|a| a.alignment.alignment_id).collect();
        self.alignments.extend(new);
        Ok(ids)
    }

    pub fn insert_expressions(&mut self, rows: &[GeneExpression]) -> Result<(), StoreError> {
        for e in rows {
            if self.reference(e.gene_id).is_none() {
                return Err(StoreError::Dangling {
                    kind: "gene",
                    id: e.gene_id,
                });
            }
            if self.expressions.iter().any(|x| x.sample == e.sample && x.gene_id == e.gene_id) {
                return Err(StoreError::ExpressionExists(e.sample));
            }
        }
        let mut pending = Pending::new();
        for e in rows {
            self.stage_sample(e.sample, &mut pending)?;
            push(&mut pending, Catalog::Expressions, &mut expression_row(e));
        }
        self.commit(pending)?;
        self.expressions.extend_from_slice(rows);
        Ok(())
    }

    /// Registers an existing file. On-disk stores take a copy under `blobs/`;
    /// in-memory stores reference the file where it is.
    pub fn register_blob(
        &mut self,
        path: impl AsRef<Path>,
        sample: SampleKey,
        lane: u32,
        format: FormatTag,
    ) -> Result<Uuid, StoreError> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(StoreError::MissingFile(path.to_path_buf()));
        }
        if !sample.is_valid() {
            return Err(StoreError::InvalidSample(sample));
        }
        let (digest, byte_length) = hash_file(path)?;
        let guid = blob_guid(&digest, sample, lane, format);
        if self.blobs.iter().any(|b| b.guid == guid) {
            return Err(StoreError::DuplicateBlob(guid));
        }
        let stored_path = match &self.dir {
            Some(dir) => {
                let rel = PathBuf::from(BLOB_DIR).join(format!("{guid}.{}", format.extension()));
                fs::copy(path, dir.join(&rel))?;
                rel
            }
            None => fs::canonicalize(path)?,
        };
        let entry = BlobEntry {
            guid,
            sample,
            lane,
            path: stored_path,
            byte_length,
            format,
        };
        let mut pending = Pending::new();
        self.stage_sample(sample, &mut pending)?;
        let mut row = Vec::new();
        entry.encode(&mut row);
        pending.push((Catalog::Blobs, row));
        self.commit(pending)?;
        self.blobs.push(entry);
        Ok(guid)
    }

    pub fn blob(&self, guid: &Uuid) -> Option<&BlobEntry> {
        self.blobs.iter().find(|b| &b.guid == guid)
    }

    pub fn blob_path(&self, entry: &BlobEntry) -> PathBuf {
        match &self.dir {
            Some(dir) if entry.path.is_relative() => dir.join(&entry.path),
            _ => entry.path.clone(),
        }
    }

    /// Streams the records of a registered file.
    pub fn list_blob_records(&self, guid: &Uuid, buffer_size: usize) -> Result<BlobRecords, StoreError> {
        let entry = self.blob(guid).ok_or_else(|| StoreError::UnknownBlob(guid.to_string()))?;
        BlobRecords::open(&self.blob_path(entry), entry.format, buffer_size)
    }

    pub fn blobs(&self) -> &[BlobEntry] {
        &self.blobs
    }
    pub fn runs(&self) -> &[Run] {
        &self.runs
    }
    pub fn reads(&self) -> &[StoredRead] {
        &self.reads
    }
    pub fn flat_reads(&self) -> &[FlatRead] {
        &self.flat_reads
    }
    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }
    pub fn references(&self) -> &[ReferenceSequence] {
        &self.references
    }
    pub fn alignments(&self) -> &[StoredAlignment] {
        &self.alignments
    }
    pub fn expressions(&self) -> &[GeneExpression] {
        &self.expressions
    }
    pub fn samples(&self) -> impl Iterator<Item = &SampleKey> {
        self.samples.iter()
    }

    pub fn read(&self, id: u64) -> Option<&StoredRead> {
        self.reads.get((id as usize).checked_sub(1)?)
    }
    pub fn tag(&self, id: u64) -> Option<&Tag> {
        self.tags.get((id as usize).checked_sub(1)?)
    }
    pub fn reference(&self, id: u64) -> Option<&ReferenceSequence> {
        self.references.get((id as usize).checked_sub(1)?)
    }
    pub fn reference_by_name(&self, name: &str) -> Option<&ReferenceSequence> {
        self.ref_index.get(name).and_then(|&id| self.reference(id))
    }
    pub fn run(&self, id: u64) -> Option<&Run> {
        self.runs.get((id as usize).checked_sub(1)?)
    }

    pub fn read_sample(&self, read: &StoredRead) -> SampleKey {
        self.runs[read.run_id as usize - 1].sample
    }

    /// Reads of one sample in import order.
    pub fn reads_of(&self, sample: SampleKey) -> impl Iterator<Item = &StoredRead> + '_ {
        let runs: HashSet<u64> =
            self.runs.iter().filter(|r| r.sample == sample).map(|r| r.run_id).collect();
        self.reads.iter().filter(move |r| runs.contains(&r.run_id))
    }

    pub fn tags_of(&self, sample: SampleKey) -> impl Iterator<Item = &Tag> + '_ {
        self.tags.iter().filter(move |t| t.sample == sample)
    }

    /// Rebuilds the full entity for a stored read.
    pub fn short_read(&self, read: &StoredRead) -> ShortRead {
        let run = &self.runs[read.run_id as usize - 1];
        ShortRead {
            read_id: read.read_id,
            sample: run.sample,
            coords: ReadCoordinates {
                instrument: run.instrument.clone(),
                flowcell: run.flowcell.clone(),
                lane: run.lane,
                tile: read.tile,
                x: read.x,
                y: read.y,
            },
            seq: read.seq.clone(),
            qual: read.qual.clone(),
        }
    }

    /// Full scan of every foreign reference and id sequence. Returns one
    /// message per violation.
    pub fn check_integrity(&self) -> Vec<String> {
        let mut out = Vec::new();
        let dense = |name: &str, ids: &mut dyn Iterator<Item = u64>, out: &mut Vec<String>| {
            for (i, id) in ids.enumerate() {
                if id != i as u64 + 1 {
                    out.push(format!("{name} id {id} at row {} is not dense", i + 1));
                    break;
                }
            }
        };
        dense("run", &mut self.runs.iter().map(|r| r.run_id), &mut out);
        dense("read", &mut self.reads.iter().map(|r| r.read_id), &mut out);
        dense("tag", &mut self.tags.iter().map(|t| t.tag_id), &mut out);
        dense("reference", &mut self.references.iter().map(|r| r.ref_id), &mut out);
        dense(
            "alignment",
            &mut self.alignments.iter().map(|a| a.alignment.alignment_id),
            &mut out,
        );
        for k in &self.samples {
            if !self.groups.contains(&(k.experiment, k.group)) {
                out.push(format!("sample {k} has no sample group"));
            }
        }
        for (e, _) in &self.groups {
            if !self.experiments.contains(e) {
                out.push(format!("sample group of experiment {e} has no experiment"));
            }
        }
        for run in &self.runs {
            if !self.samples.contains(&run.sample) {
                out.push(format!("run {} references unknown sample {}", run.run_id, run.sample));
            }
        }
        for r in &self.reads {
            if self.run(r.run_id).is_none() {
                out.push(format!("read {} references unknown run {}", r.read_id, r.run_id));
            }
        }
        for t in &self.tags {
            if !self.samples.contains(&t.sample) {
                out.push(format!("tag {} references unknown sample {}", t.tag_id, t.sample));
            }
        }
        for a in &self.alignments {
            let al = &a.alignment;
            match (self.query_len(a.kind, al.query_id), self.reference(al.gene_id)) {
                (Some(len), Some(r)) => {
                    if al.pos < 1 || al.pos + len as u64 - 1 > r.seq.len() as u64 {
                        out.push(format!("alignment {} out of bounds", al.alignment_id));
                    }
                }
                _ => out.push(format!("alignment {} has a dangling reference", al.alignment_id)),
            }
        }
        for e in &self.expressions {
            if self.reference(e.gene_id).is_none() || !self.samples.contains(&e.sample) {
                out.push(format!("expression row for gene {} is dangling", e.gene_id));
            }
        }
        for b in &self.blobs {
            let path = self.blob_path(b);
            match fs::metadata(&path) {
                Ok(m) if m.len() == b.byte_length => {}
                _ => out.push(format!("blob {} missing or resized at {}", b.guid, path.display())),
            }
        }
        out
    }
}

fn io_data(e: impl ToString) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}
