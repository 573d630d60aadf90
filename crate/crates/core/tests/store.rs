use std::fs;

use seqhouse::genqueries::{bin_unique_reads, gene_expression};
use seqhouse::genstore::{storage_report, FormatTag, NewAlignment, QueryKind, Store, StoreError};
use seqhouse::seqcore::{GeneExpression, SampleKey, Sequence, Strand};
use seqhouse::synth;

const TOY: &str = "@HWI-EAS285_FC30F1UAAXX:1:1:10:20\nACGTACGT\n+\nIIIIIIII\n\
@HWI-EAS285_FC30F1UAAXX:1:1:11:20\nACGTNCGT\n+\nIIII#III\n\
@HWI-EAS285_FC30F1UAAXX:1:2:10:20\nTTTT\n+\n!!!!\n";

fn s1() -> SampleKey {
    SampleKey::new(1, 1, 1)
}

fn seq(s: &str) -> Sequence {
    Sequence::from_ascii(s.as_bytes()).unwrap()
}

fn read_alignment(query_id: u64, ref_name: &str, pos: u64) -> NewAlignment {
    NewAlignment {
        sample: s1(),
        kind: QueryKind::Read,
        query_id,
        ref_name: ref_name.to_string(),
        pos,
        strand: Strand::Forward,
    }
}

#[test]
fn normalized_import_decomposes_names() {
    let mut st = Store::in_memory();
    assert_eq!(st.import_fastq_normalized(TOY.as_bytes(), 1024, s1(), 1).unwrap(), 3);
    assert_eq!(st.runs().len(), 1);
    assert_eq!(st.reads().len(), 3);
    let r = &st.reads()[1];
    assert_eq!((r.read_id, r.tile, r.x, r.y), (2, 1, 11, 20));
    let sr = st.short_read(r);
    assert_eq!(sr.coords.to_name(), "HWI-EAS285_FC30F1UAAXX:1:1:11:20");
    assert_eq!(sr.qual.scores()[4], 2);
    assert!(st.check_integrity().is_empty());
}

#[test]
fn failed_import_commits_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut st = Store::open(dir.path()).unwrap();
    let bad = format!("{TOY}@HWI-EAS285_FC30F1UAAXX:1:2:10:21\nACGT\n+\nII\n");
    assert!(matches!(
        st.import_fastq_normalized(bad.as_bytes(), 1024, s1(), 1),
        Err(StoreError::Parse(_))
    ));
    let dup = format!("{TOY}@HWI-EAS285_FC30F1UAAXX:1:1:10:20\nA\n+\nI\n");
    match st.import_fastq_normalized(dup.as_bytes(), 1024, s1(), 1) {
        Err(StoreError::DuplicateCoordinates { offset, .. }) => assert_eq!(offset, TOY.len() as u64),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        st.import_fastq_normalized(TOY.as_bytes(), 1024, s1(), 2),
        Err(StoreError::InvalidRead { record: 1, .. })
    ));
    assert!(matches!(
        st.import_fastq_normalized(TOY.as_bytes(), 1024, s1(), 9),
        Err(StoreError::LaneOutOfRange(9))
    ));
    assert!(st.reads().is_empty() && st.runs().is_empty());
    let reopened = Store::open(dir.path()).unwrap();
    assert!(reopened.reads().is_empty() && reopened.samples().next().is_none());

    // the same coordinates in a second import of the same sample collide
    st.import_fastq_normalized(TOY.as_bytes(), 1024, s1(), 1).unwrap();
    assert!(matches!(
        st.import_fastq_normalized(TOY.as_bytes(), 1024, s1(), 1),
        Err(StoreError::DuplicateCoordinates { .. })
    ));
    // another sample may reuse them
    st.import_fastq_normalized(TOY.as_bytes(), 1024, SampleKey::new(1, 1, 2), 1).unwrap();
    assert_eq!(st.reads().len(), 6);
}

#[test]
fn one_to_one_keeps_lines_verbatim() {
    let mut st = Store::in_memory();
    assert_eq!(st.import_fastq_1to1(TOY.as_bytes(), 1024, s1(), 1).unwrap(), 3);
    let f = &st.flat_reads()[2];
    assert_eq!(f.name, b"HWI-EAS285_FC30F1UAAXX:1:2:10:20");
    assert_eq!((f.seq.as_slice(), f.qual.as_slice()), (&b"TTTT"[..], &b"!!!!"[..]));
}

#[test]
fn on_disk_store_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let fq = dir.path().join("toy.fastq");
    fs::write(&fq, TOY).unwrap();
    let store_dir = dir.path().join("store");
    let guid = {
        let mut st = Store::open(&store_dir).unwrap();
        st.import_fastq_normalized(TOY.as_bytes(), 1024, s1(), 1).unwrap();
        st.import_fastq_1to1(TOY.as_bytes(), 1024, s1(), 1).unwrap();
        st.add_reference("g1", seq("ACGTACGTACGTACGT")).unwrap();
        st.add_alignments(&[read_alignment(1, "g1", 1), read_alignment(3, "g1", 13)]).unwrap();
        let rows = bin_unique_reads(st.reads().iter().map(|r| (st.read_sample(r), &r.seq)), s1());
        st.insert_tags(s1(), rows.into_iter().map(|r| (r.seq, r.frequency, r.rank))).unwrap();
        st.insert_expressions(&[GeneExpression {
            gene_id: 1,
            sample: s1(),
            total_frequency: 2,
            tag_count: 1,
        }])
        .unwrap();
        st.register_blob(&fq, s1(), 1, FormatTag::FastQ).unwrap()
    };
    let st = Store::open(&store_dir).unwrap();
    assert_eq!(st.reads().len(), 3);
    assert_eq!(st.flat_reads().len(), 3);
    assert_eq!(st.tags().len(), 2);
    assert_eq!(st.alignments().len(), 2);
    assert_eq!(st.expressions().len(), 1);
    assert_eq!(st.reference_by_name("g1").unwrap().seq.len(), 16);
    assert_eq!(st.blob(&guid).unwrap().byte_length, TOY.len() as u64);
    assert!(st.check_integrity().is_empty(), "{:?}", st.check_integrity());
    // the store keeps its own copy
    fs::remove_file(&fq).unwrap();
    assert_eq!(st.list_blob_records(&guid, 1024).unwrap().count().unwrap(), 3);
}

#[test]
fn blob_registration() {
    let dir = tempfile::tempdir().unwrap();
    let fq = dir.path().join("reads.fastq");
    fs::write(&fq, TOY).unwrap();
    let fa = dir.path().join("refs.fa");
    fs::write(&fa, ">a\nACGT\nAC\n>b\n\n").unwrap();
    let mut st = Store::in_memory();
    let g = st.register_blob(&fq, s1(), 1, FormatTag::FastQ).unwrap();
    assert!(matches!(
        st.register_blob(&fq, s1(), 1, FormatTag::FastQ),
        Err(StoreError::DuplicateBlob(d)) if d == g
    ));
    // another lane is another blob with another guid
    let g2 = st.register_blob(&fq, s1(), 2, FormatTag::FastQ).unwrap();
    assert_ne!(g, g2);
    let gf = st.register_blob(&fa, s1(), 1, FormatTag::Fasta).unwrap();
    assert_eq!(st.list_blob_records(&gf, 64).unwrap().count().unwrap(), 2);
    assert_eq!(st.list_blob_records(&g, 1024).unwrap().count().unwrap(), 3);
    assert!(matches!(
        st.register_blob(dir.path().join("nope.fastq"), s1(), 1, FormatTag::FastQ),
        Err(StoreError::MissingFile(_))
    ));
    assert!(matches!("bam".parse::<FormatTag>(), Err(StoreError::UnknownFormat(_))));

    // guids depend only on content and metadata
    let mut other = Store::in_memory();
    assert_eq!(other.register_blob(&fq, s1(), 1, FormatTag::FastQ).unwrap(), g);
}

#[test]
fn alignment_checks() {
    let mut st = Store::in_memory();
    st.import_fastq_normalized(TOY.as_bytes(), 1024, s1(), 1).unwrap();
    st.add_reference("g1", seq("ACGTACGTAC")).unwrap();
    assert!(matches!(st.add_reference("g1", seq("A")), Err(StoreError::DuplicateReference(_))));
    assert!(matches!(st.add_reference("g2", seq("")), Err(StoreError::EmptyReference(_))));

    let cases = [
        (read_alignment(9, "g1", 1), "dangling"),
        (read_alignment(1, "chrX", 1), "reference"),
        (read_alignment(1, "g1", 4), "bounds"),
        (read_alignment(1, "g1", 0), "bounds"),
    ];
    for (bad, what) in cases {
        let batch = [read_alignment(1, "g1", 1), read_alignment(3, "g1", 7), bad];
        match st.add_alignments(&batch) {
            Err(StoreError::Row { row: 2, source }) => match (*source, what) {
                (StoreError::Dangling { kind: "read", id: 9 }, "dangling") => {}
                (StoreError::UnknownReference(_), "reference") => {}
                (StoreError::OutOfBounds { .. }, "bounds") => {}
                (e, _) => panic!("{what}: {e:?}"),
            },
            other => panic!("{what}: {other:?}"),
        }
        assert!(st.alignments().is_empty());
    }
    let mut other_sample = read_alignment(1, "g1", 1);
    other_sample.sample = SampleKey::new(1, 1, 2);
    assert!(matches!(
        st.add_alignments(&[other_sample]),
        Err(StoreError::Row { row: 0, source }) if matches!(*source, StoreError::SampleMismatch { .. })
    ));
    // last base exactly at the reference end is fine
    assert_eq!(st.add_alignments(&[read_alignment(3, "g1", 7)]).unwrap(), vec![1]);
}

#[test]
fn tag_invariants_enforced() {
    let mut st = Store::in_memory();
    assert!(matches!(
        st.insert_tags(s1(), [(seq("ACGN"), 1, 1)]),
        Err(StoreError::InvalidTag(_))
    ));
    assert!(matches!(
        st.insert_tags(s1(), [(seq("ACG"), 2, 1), (seq("ACC"), 1, 3)]),
        Err(StoreError::InvalidTag(_))
    ));
    st.insert_tags(s1(), [(seq("ACG"), 2, 1), (seq("ACC"), 1, 2)]).unwrap();
    assert!(matches!(st.insert_tags(s1(), [(seq("A"), 1, 1)]), Err(StoreError::TagsExist(_))));
}

#[test]
fn expression_through_store() {
    let mut st = Store::in_memory();
    st.add_reference("g1", seq(&"A".repeat(50))).unwrap();
    st.add_reference("g2", seq(&"C".repeat(50))).unwrap();
    st.insert_tags(s1(), [(seq("AAAA"), 5, 1), (seq("CCCC"), 2, 2)]).unwrap();
    let tag = |id, g: &str, pos| NewAlignment {
        sample: s1(),
        kind: QueryKind::Tag,
        query_id: id,
        ref_name: g.to_string(),
        pos,
        strand: Strand::Forward,
    };
    st.add_alignments(&[tag(1, "g1", 1), tag(1, "g1", 9), tag(2, "g2", 1), tag(1, "g2", 3)]).unwrap();
    let al: Vec<_> = st.alignments().iter().map(|a| a.alignment).collect();
    let rows = gene_expression(&al, st.tags(), s1()).unwrap();
    let got: Vec<(u64, u64, u64)> = rows.iter().map(|r| (r.gene_id, r.total_frequency, r.tag_count)).collect();
    assert_eq!(got, vec![(1, 10, 2), (2, 7, 2)]);
    st.insert_expressions(&rows).unwrap();
    assert!(matches!(st.insert_expressions(&rows), Err(StoreError::ExpressionExists(_))));
}

#[test]
fn storage_report_on_synthetic_reads() {
    let dir = tempfile::tempdir().unwrap();
    let fq = dir.path().join("reads.fastq");
    let data = synth::fastq_bytes(3, 5000);
    fs::write(&fq, &data).unwrap();
    let mut st = Store::in_memory();
    st.import_fastq_normalized(&data[..], 4096, s1(), 1).unwrap();
    st.import_fastq_1to1(&data[..], 4096, s1(), 1).unwrap();
    st.register_blob(&fq, s1(), 1, FormatTag::FastQ).unwrap();
    let r = storage_report(&st, &[&fq]).unwrap();
    assert_eq!(r.raw_files, data.len() as u64);
    assert_eq!(r.blob_ratio(), 1.0);
    let reads = r.catalog("reads").unwrap();
    assert_eq!(reads.rows, 5000);
    // frame 4; ids 8+8; tile/x/y 4 each; two length-prefixed fields
    // against frame 4 and four length-prefixed lines
    let recs: Vec<(usize, usize)> = std::str::from_utf8(&data)
        .unwrap()
        .lines()
        .collect::<Vec<_>>()
        .chunks(4)
        .map(|c| (c[0].len() - 1, c[1].len()))
        .collect();
    let norm: usize = recs.iter().map(|&(_, l)| 40 + 2 * l).sum();
    let flat: usize = recs.iter().map(|&(n, l)| 20 + 2 * n + 2 * l).sum();
    assert_eq!((reads.normalized_plain, reads.import_1to1), (norm as u64, flat as u64));
    assert!(r.normalized_to_1to1() < 0.8, "{}", r.normalized_to_1to1());
    // about 1% N keeps nearly every read packed
    assert!(r.packed_to_text() < 0.27, "{}", r.packed_to_text());
    assert!(r.normalized_blockdict < r.normalized_plain);
    assert!(r.to_table().contains("blob_registry/registered_raw\t1.000"));
}

/// Normalized rows spend 20 fixed bytes on ids and coordinates; 1to1 rows
/// spend the name twice. The break-even name length is 10 bytes.
#[test]
fn name_length_crossover() {
    let ratio = |instrument: &str| {
        let mut fq = String::new();
        for i in 0..90 {
            let name = format!("{instrument}:1:{}:5:{}", i / 10 + 1, i % 10);
            fq.push_str(&format!("@{name}\nACGTACGTACGTACGTACGTACGTACGTACGTACGT\n+{name}\n{}\n", "I".repeat(36)));
        }
        let mut st = Store::in_memory();
        st.import_fastq_normalized(fq.as_bytes(), 4096, s1(), 1).unwrap();
        st.import_fastq_1to1(fq.as_bytes(), 4096, s1(), 1).unwrap();
        let r = storage_report(&st, &[] as &[&str]).unwrap();
        let c = r.catalog("reads").unwrap();
        c.normalized_plain as f64 / c.import_1to1 as f64
    };
    assert!(ratio("M") > 1.0);
    assert_eq!(ratio("MM"), 1.0);
    assert!(ratio("MMM") < 1.0);
    assert!(ratio("HWI-EAS285_FC30F1UAAXX") < 0.8);
}
