use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use seqhouse::consensus::{
    consensus_partitioned, pileup_columns, sort_for_scan, write_consensus_fasta, write_pileup_tsv,
    AlignedRead,
};
use seqhouse::fastx::{open_fasta, open_fastq, write_fasta, FastaRecord};
use seqhouse::genqueries::{
    bin_unique_reads_parallel, gene_expression_parallel, write_binned_tsv, write_expression_tsv,
    BinnedTagRow,
};
use seqhouse::genstore::{storage_report, FormatTag, NewAlignment, QueryKind, Store, StoreError};
use seqhouse::parexec::{default_workers, TimingReport};
use seqhouse::seqcore::{Alignment, QualityVector, SampleKey, Sequence, Strand};
use seqhouse::synth;

use crate::args::{Cli, Command, FileFormat, ImportMode, SampleArgs, Target, MIN_BUFFER};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

struct Ctx {
    store: Option<PathBuf>,
    buffer: usize,
    workers: usize,
    timings: TimingReport,
}

impl Ctx {
    fn open_store(&self) -> Result<Store> {
        let dir = self
            .store
            .as_ref()
            .ok_or_else(|| CliError::usage("this command needs --store DIR"))?;
        Ok(Store::open(dir)?)
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::from(e).context(p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.buffer_size < MIN_BUFFER {
        return Err(CliError::usage(format!("--buffer-size must be at least {MIN_BUFFER}")));
    }
    let workers = cli.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let mut ctx = Ctx {
        store: cli.store,
        buffer: cli.buffer_size,
        workers,
        timings: TimingReport::default(),
    };
    match cli.command {
        Command::Import {
            path,
            sample,
            lane,
            mode,
            format,
        } => import(&mut ctx, &path, sample, lane, mode, format),
        Command::Count { source, format } => count(&mut ctx, &source, format),
        Command::Bin { sample, save, output } => bin(&mut ctx, sample, save, &output),
        Command::Expr { sample, save, output } => expr(&mut ctx, sample, save, &output),
        Command::LoadReference { path } => {
            let mut store = ctx.open_store()?;
            let n = load_references(&mut store, &path, ctx.buffer, false)?;
            println!("{n} references loaded");
            Ok(())
        }
        Command::LoadAlignments { path, sample, target } => {
            let mut store = ctx.open_store()?;
            let n = load_alignments(&mut store, &path, sample.key(), target)?;
            println!("{n} alignments loaded");
            Ok(())
        }
        Command::Consensus {
            sample,
            reference,
            k,
            line_width,
            pileup,
            output,
        } => consensus(&mut ctx, sample, reference, k, line_width, pileup, &output),
        Command::StorageReport {
            reads,
            lane,
            tags,
            references,
            alignments,
            target,
        } => report(&mut ctx, &reads, lane, tags, references, alignments, target),
        Command::GenSynthetic {
            profile,
            seed,
            scale,
            out,
        } => {
            let s = ctx
                .timings
                .time("gen-synthetic", 1, || synth::generate(profile, &out, seed, scale))
                .map_err(|e| match e.kind() {
                    io::ErrorKind::InvalidInput => CliError::usage(e.to_string()),
                    _ => e.into(),
                })?;
            print!("{s}");
            Ok(())
        }
    }?;
    if let Some(path) = &cli.timings {
        write_timings(path, &ctx.timings)?;
    }
    Ok(())
}

fn write_timings(path: &Path, t: &TimingReport) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let tsv = t.to_tsv();
    let body = if fresh { &tsv[..] } else { tsv.split_once('\n').map_or("", |x| x.1) };
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn format_of(path: &Path, flag: Option<FileFormat>) -> Result<FormatTag> {
    match flag {
        Some(FileFormat::Fastq) => Ok(FormatTag::FastQ),
        Some(FileFormat::Fasta) => Ok(FormatTag::Fasta),
        None => FormatTag::from_path(path).ok_or_else(|| {
            CliError::usage(format!("cannot tell the format of {}; pass --format", path.display()))
        }),
    }
}

fn import(
    ctx: &mut Ctx,
    path: &Path,
    sample: SampleArgs,
    lane: u32,
    mode: ImportMode,
    format: Option<FileFormat>,
) -> Result<()> {
    let mut store = ctx.open_store()?;
    let key = sample.key();
    let buffer = ctx.buffer;
    match mode {
        ImportMode::Normalized | ImportMode::OneToOne => {
            let f = open(path)?;
            let bytes = f.metadata()?.len();
            let n = ctx.timings.time("import", 1, || match mode {
                ImportMode::Normalized => store.import_fastq_normalized(f, buffer, key, lane),
                _ => store.import_fastq_1to1(f, buffer, key, lane),
            });
            let n = n.map_err(|e| CliError::from(e).context(path.display()))?;
            println!("{n} reads imported ({bytes} bytes)");
        }
        ImportMode::Register => {
            let fmt = format_of(path, format)?;
            let guid = store.register_blob(path, key, lane, fmt)?;
            let entry = store.blob(&guid).expect("just registered");
            println!("{guid}\t{fmt}\t{} bytes", entry.byte_length);
        }
    }
    Ok(())
}

fn count(ctx: &mut Ctx, source: &str, format: Option<FileFormat>) -> Result<()> {
    let buffer = ctx.buffer;
    let start = Instant::now();
    let n = if Path::new(source).is_file() {
        let path = Path::new(source);
        let f = open(path)?;
        match format_of(path, format).unwrap_or(FormatTag::FastQ) {
            FormatTag::FastQ => open_fastq(f, buffer)?.count(),
            FormatTag::Fasta => open_fasta(f, buffer)?.count(),
        }
        .map_err(|e| CliError::from(e).context(source))?
    } else if ctx.store.is_some() {
        let store = ctx.open_store()?;
        let guid = store
            .blobs()
            .iter()
            .find(|b| b.guid.to_string() == source)
            .map(|b| b.guid)
            .ok_or_else(|| CliError::Io(format!("{source}: no such file or registered blob")))?;
        store.list_blob_records(&guid, buffer)?.count()?
    } else {
        return Err(CliError::Io(format!("{source}: no such file")));
    };
    let elapsed = start.elapsed();
    ctx.timings.rows.push(seqhouse::parexec::Timing {
        phase: "count".into(),
        k: 1,
        millis: elapsed.as_secs_f64() * 1e3,
    });
    println!("{n} records");
    let secs = elapsed.as_secs_f64();
    let rate = if secs > 0.0 { n as f64 / secs } else { f64::INFINITY };
    eprintln!("elapsed {:.3} s ({:.0} records/s)", secs, rate);
    Ok(())
}

fn binned(ctx: &mut Ctx, store: &Store, key: SampleKey) -> Vec<BinnedTagRow> {
    let k = ctx.workers;
    ctx.timings.time("bin", k, || {
        bin_unique_reads_parallel(store.reads().iter().map(|r| (store.read_sample(r), &r.seq)), key, k)
    })
}

fn bin(ctx: &mut Ctx, sample: SampleArgs, save: bool, out: &Option<PathBuf>) -> Result<()> {
    let mut store = ctx.open_store()?;
    let key = sample.key();
    let rows = binned(ctx, &store, key);
    if save {
        store.insert_tags(key, rows.iter().map(|r| (r.seq.clone(), r.frequency, r.rank)))?;
    }
    let mut w = output(out)?;
    write_binned_tsv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn tag_alignments(store: &Store, key: SampleKey) -> Vec<Alignment> {
    store
        .alignments()
        .iter()
        .filter(|a| a.kind == QueryKind::Tag && a.alignment.sample == key)
        .map(|a| a.alignment)
        .collect()
}

fn expr(ctx: &mut Ctx, sample: SampleArgs, save: bool, out: &Option<PathBuf>) -> Result<()> {
    let mut store = ctx.open_store()?;
    let key = sample.key();
    let aligns = tag_alignments(&store, key);
    let k = ctx.workers;
    let rows = ctx
        .timings
        .time("expr", k, || gene_expression_parallel(&aligns, store.tags(), key, k))?;
    if save {
        store.insert_expressions(&rows)?;
    }
    let mut w = output(out)?;
    write_expression_tsv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Adds the records of a FASTA file as references. With `skip_existing`,
/// records already present under the same name and sequence are skipped.
fn load_references(store: &mut Store, path: &Path, buffer: usize, skip_existing: bool) -> Result<u64> {
    let mut n = 0;
    for rec in open_fasta(open(path)?, buffer)? {
        let rec = rec.map_err(|e| CliError::from(e).context(path.display()))?;
        let name = rec.name.split_whitespace().next().unwrap_or("").to_string();
        if skip_existing {
            if let Some(r) = store.reference_by_name(&name) {
                if r.seq != rec.seq {
                    return Err(CliError::data(format!(
                        "{}: reference {name:?} differs from the stored one",
                        path.display()
                    )));
                }
                continue;
            }
        }
        store.add_reference(&name, rec.seq)?;
        n += 1;
    }
    Ok(n)
}

fn line_error(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}:{line}: {msg}", path.display()))
}

fn load_alignments(store: &mut Store, path: &Path, key: SampleKey, target: Target) -> Result<u64> {
    let kind = match target {
        Target::Read => QueryKind::Read,
        Target::Tag => QueryKind::Tag,
    };
    let by_seq: HashMap<&[u8], u64> = match kind {
        QueryKind::Tag => store.tags_of(key).map(|t| (t.seq.as_bytes(), t.tag_id)).collect(),
        QueryKind::Read => HashMap::new(),
    };
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(line_error(path, n, format!("expected 4 tab-separated fields, found {}", f.len())));
        }
        let query_id = match f[0].parse::<u64>() {
            Ok(id) => id,
            Err(_) if kind == QueryKind::Tag => {
                let s: Sequence = f[0].parse().map_err(|e| line_error(path, n, e))?;
                *by_seq
                    .get(s.as_bytes())
                    .ok_or_else(|| line_error(path, n, format!("no tag {s} in sample {key}")))?
            }
            Err(_) => return Err(line_error(path, n, format!("bad read id {:?}", f[0]))),
        };
        let pos = f[2].parse::<u64>().map_err(|_| line_error(path, n, format!("bad position {:?}", f[2])))?;
        let strand = Strand::from_symbol(f[3]).ok_or_else(|| line_error(path, n, format!("bad strand {:?}", f[3])))?;
        rows.push(NewAlignment {
            sample: key,
            kind,
            query_id,
            ref_name: f[1].to_string(),
            pos,
            strand,
        });
        lines.push(n);
    }
    drop(by_seq);
    match store.add_alignments(&rows) {
        Ok(ids) => Ok(ids.len() as u64),
        Err(StoreError::Row { row, source }) => {
            let e = CliError::from(*source);
            Err(match e {
                CliError::Data(m) => line_error(path, lines[row], m),
                e => e,
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn aligned_reads(store: &Store, key: SampleKey) -> Vec<AlignedRead> {
    let mut out: Vec<AlignedRead> = store
        .alignments()
        .iter()
        .filter(|a| a.alignment.sample == key)
        .map(|a| match a.kind {
            QueryKind::Read => {
                let r = store.read(a.alignment.query_id).expect("checked on load");
                AlignedRead {
                    alignment: a.alignment,
                    seq: r.seq.clone(),
                    qual: r.qual.clone(),
                }
            }
            QueryKind::Tag => {
                let t = store.tag(a.alignment.query_id).expect("checked on load");
                AlignedRead {
                    alignment: a.alignment,
                    seq: t.seq.clone(),
                    qual: QualityVector::from_scores(vec![0; t.seq.len()]).expect("zero scores"),
                }
            }
        })
        .collect();
    sort_for_scan(&mut out);
    out
}

fn consensus(
    ctx: &mut Ctx,
    sample: SampleArgs,
    reference: Option<PathBuf>,
    k: Option<usize>,
    line_width: usize,
    pileup: Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<()> {
    let mut store = ctx.open_store()?;
    if let Some(path) = &reference {
        load_references(&mut store, path, ctx.buffer, true)?;
    }
    let key = sample.key();
    let k = k.unwrap_or(ctx.workers);
    if k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let reads = aligned_reads(&store, key);
    if reads.is_empty() && store.references().is_empty() {
        return Err(CliError::data("no references or alignments loaded"));
    }
    let refs = store.references();
    let mut w = output(out)?;
    if k == 1 {
        ctx.timings
            .time("consensus", 1, || write_consensus_fasta(&reads, refs, &mut w, line_width))?;
    } else {
        let seqs = ctx.timings.time("consensus", k, || consensus_partitioned(&reads, refs, k))?;
        let records = refs.iter().zip(seqs).map(|(r, c)| FastaRecord {
            name: r.name.clone(),
            seq: c.seq,
        });
        write_fasta(records, &mut w, line_width)?;
    }
    w.flush()?;
    if let Some(p) = &pileup {
        let cols = pileup_columns(&reads, refs)?;
        let mut f = BufWriter::new(File::create(p)?);
        write_pileup_tsv(&cols, refs, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn report(
    ctx: &mut Ctx,
    reads: &Path,
    lane: u32,
    tags: bool,
    references: Option<PathBuf>,
    alignments: Option<PathBuf>,
    target: Target,
) -> Result<()> {
    let key = SampleKey::new(1, 1, 1);
    let mut store = Store::in_memory();
    let buffer = ctx.buffer;
    let ctx_err = |e: StoreError| CliError::from(e).context(reads.display());
    store.import_fastq_normalized(open(reads)?, buffer, key, lane).map_err(ctx_err)?;
    store.import_fastq_1to1(open(reads)?, buffer, key, lane).map_err(ctx_err)?;
    store.register_blob(reads, key, lane, FormatTag::FastQ)?;
    let mut raw = vec![reads.to_path_buf()];
    if tags {
        let rows = binned(ctx, &store, key);
        store.insert_tags(key, rows.into_iter().map(|r| (r.seq, r.frequency, r.rank)))?;
    }
    if let Some(path) = &references {
        load_references(&mut store, path, buffer, false)?;
        store.register_blob(path, key, lane, FormatTag::Fasta)?;
        raw.push(path.clone());
    }
    if let Some(path) = &alignments {
        load_alignments(&mut store, path, key, target)?;
        raw.push(path.clone());
        if target == Target::Tag {
            let aligns = tag_alignments(&store, key);
            let rows = gene_expression_parallel(&aligns, store.tags(), key, ctx.workers)?;
            store.insert_expressions(&rows)?;
        }
    }
    let r = storage_report(&store, &raw)?;
    print!("{}", r.to_table());
    Ok(())
}
