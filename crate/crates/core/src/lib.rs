//! Storage, streaming access and declarative analyses for short-read
//! sequencing data.
//!
//! * [`seqcore`]: base alphabet, sequences, qualities and entity types.
//! * [`fastx`]: chunk-buffered FASTQ/FASTA readers and writers.
//! * [`genstore`]: normalized store, blob registry, codecs, storage report.
//! * [`genqueries`]: unique-read binning and gene-expression aggregation.
//! * [`consensus`]: consensus calling, pivot and sliding-window paths.
//! * [`parexec`]: partitioned aggregation executor.
//! * [`synth`]: seeded synthetic corpora.

pub mod consensus;
pub mod fastx;
pub mod genqueries;
pub mod genstore;
pub mod parexec;
pub mod seqcore;
pub mod synth;
