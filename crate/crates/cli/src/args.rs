use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seqhouse::seqcore::SampleKey;
use seqhouse::synth::Profile;

pub const MIN_BUFFER: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "seqhouse", version, about = "Short-read sequencing store and analyses")]
pub struct Cli {
    /// Store directory (created on first use).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,

    /// Parser buffer size in bytes, at least 1024.
    #[arg(long, global = true, default_value_t = 64 * 1024)]
    pub buffer_size: usize,

    /// Worker count; defaults to the available hardware parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Append `phase\tk\tmillis` timing rows to this file.
    #[arg(long, global = true)]
    pub timings: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 1)]
    pub experiment: u64,
    #[arg(long, default_value_t = 1)]
    pub group: u64,
    #[arg(long, default_value_t = 1)]
    pub sample: u64,
}

impl SampleArgs {
    pub fn key(&self) -> SampleKey {
        SampleKey::new(self.experiment, self.group, self.sample)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImportMode {
    Normalized,
    #[value(name = "1to1")]
    OneToOne,
    Register,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Read,
    Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Fastq,
    Fasta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import a FASTQ file, or register a FASTQ/FASTA file as-is.
    Import {
        path: PathBuf,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        lane: u32,
        #[arg(long, value_enum, default_value = "normalized")]
        mode: ImportMode,
        /// Format of a registered file; guessed from the extension if omitted.
        #[arg(long, value_enum)]
        format: Option<FileFormat>,
    },
    /// Count records of a file or of a registered blob (by guid).
    Count {
        source: String,
        #[arg(long, value_enum)]
        format: Option<FileFormat>,
    },
    /// Rank the distinct N-free read sequences of a sample.
    Bin {
        #[command(flatten)]
        sample: SampleArgs,
        /// Store the ranked rows as the sample's tags.
        #[arg(long)]
        save: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Per-gene expression over the tag alignments of a sample.
    Expr {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        save: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Load reference sequences from FASTA.
    LoadReference { path: PathBuf },
    /// Load alignments from TSV: query, reference name, 1-based position, strand.
    LoadAlignments {
        path: PathBuf,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, value_enum, default_value = "read")]
        target: Target,
    },
    /// Consensus sequence per reference as FASTA.
    Consensus {
        #[command(flatten)]
        sample: SampleArgs,
        /// Load these references first if the store lacks them.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Partition count; defaults to the worker count.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 60)]
        line_width: usize,
        /// Also write pileup columns as TSV.
        #[arg(long)]
        pileup: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Import a corpus under every representation and report sizes.
    StorageReport {
        reads: PathBuf,
        #[arg(long, default_value_t = 1)]
        lane: u32,
        /// Bin the reads and store the tags.
        #[arg(long)]
        tags: bool,
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long)]
        alignments: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "read")]
        target: Target,
    },
    /// Write a seeded synthetic corpus.
    GenSynthetic {
        #[arg(long, value_parser = parse_profile)]
        profile: Profile,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        scale: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse()
}
