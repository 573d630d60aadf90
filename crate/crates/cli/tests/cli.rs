use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TOY: &str = "@M_FC:1:1:10:20\nACGTACGT\n+\nIIIIIIII\n\
@M_FC:1:1:11:20\nACGTACGT\n+\nIIIIIIII\n\
@M_FC:1:1:12:20\nTTTTGGGG\n+\nIIIIIIII\n\
@M_FC:1:1:13:20\nACGTNCGT\n+\nIIII#III\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqhouse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn seqhouse")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

fn toy_store(dir: &Path) {
    fs::write(dir.join("toy.fastq"), TOY).unwrap();
    let out = ok(dir, &["--store", "st", "import", "toy.fastq", "--lane", "1"]);
    assert!(out.starts_with("4 reads imported"), "{out}");
}

#[test]
fn import_and_bin() {
    let d = tempfile::tempdir().unwrap();
    toy_store(d.path());
    let table = ok(d.path(), &["--store", "st", "bin"]);
    assert_eq!(table, "rank\tfrequency\tsequence\n1\t2\tACGTACGT\n2\t1\tTTTTGGGG\n");
    ok(d.path(), &["--store", "st", "bin", "--save"]);
    let again = run(d.path(), &["--store", "st", "bin", "--save"]);
    assert_eq!(again.status.code(), Some(2), "{}", stderr(&again));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("bad.fastq"), "@M_FC:1:1:1:1\nACGT\n+\nIII\n").unwrap();
    let o = run(p, &["--store", "st", "import", "bad.fastq", "--lane", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("record #1"), "{}", stderr(&o));

    assert_eq!(run(p, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(p, &["--store", "st", "--buffer-size", "10", "bin"]).status.code(), Some(1));
    assert_eq!(run(p, &["bin"]).status.code(), Some(1));
    assert_eq!(run(p, &["--help"]).status.code(), Some(0));
    let missing = run(p, &["--store", "st", "import", "nope.fastq", "--lane", "1"]);
    assert_eq!(missing.status.code(), Some(3), "{}", stderr(&missing));
    assert_eq!(run(p, &["count", "nope.fastq"]).status.code(), Some(3));
}

#[test]
fn expr_on_empty_store_is_header_only() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &["--store", "st", "expr"]);
    assert_eq!(out, "gene_id\ttotal_frequency\ttag_count\n");
}

#[test]
fn load_alignments_and_consensus() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    toy_store(p);
    fs::write(p.join("ref.fa"), ">g1 first gene\nAAAAAAAAAAAAAAAAAAAA\n").unwrap();
    assert_eq!(ok(p, &["--store", "st", "load-reference", "ref.fa"]), "1 references loaded\n");
    fs::write(p.join("al.tsv"), "1\tg1\t1\t+\n3\tg1\t5\t-\n").unwrap();
    assert_eq!(ok(p, &["--store", "st", "load-alignments", "al.tsv"]), "2 alignments loaded\n");

    fs::write(p.join("bad.tsv"), "2\tg1\t1\t+\n2\tg1\t14\t+\n").unwrap();
    let o = run(p, &["--store", "st", "load-alignments", "bad.tsv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.tsv:2:"), "{}", stderr(&o));

    let k1 = ok(p, &["--store", "st", "consensus", "--k", "1"]);
    let k4 = ok(p, &["--store", "st", "consensus", "--k", "4"]);
    assert_eq!(k1, k4);
    // read 1 at 1..8; read 3 reverse-complemented (CCCCAAAA) at 5..12;
    // equal scores at 5, 7 and 8 go to the alphabetically first base
    assert_eq!(k1, ">g1\nACGTACCCAAAANNNNNNNN\n");
}

#[test]
fn count_is_buffer_independent() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("empty.fastq"), "").unwrap();
    assert_eq!(ok(p, &["count", "empty.fastq"]), "0 records\n");
    let big = seqhouse_fixture(3000);
    fs::write(p.join("big.fastq"), big).unwrap();
    for buf in ["1024", "4096", "1048576"] {
        assert_eq!(ok(p, &["--buffer-size", buf, "count", "big.fastq"]), "3000 records\n");
    }
}

fn seqhouse_fixture(n: usize) -> String {
    (0..n)
        .map(|i| format!("@M_FC:1:1:{i}:0\n{}\n+\n{}\n", "ACGT".repeat(i % 20 + 1), "I".repeat(4 * (i % 20 + 1))))
        .collect()
}

#[test]
fn registered_blob_counts() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("toy.fastq"), TOY).unwrap();
    let out = ok(p, &["--store", "st", "import", "toy.fastq", "--lane", "1", "--mode", "register"]);
    let guid = out.split('\t').next().unwrap().to_string();
    assert_eq!(ok(p, &["--store", "st", "count", &guid]), "4 records\n");
}

#[test]
fn synthetic_runs_are_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let gen = |out: &str| ok(p, &["gen-synthetic", "--profile", "dge", "--seed", "7", "--scale", "0.001", "-o", out]);
    assert_eq!(gen("a").replace("a/", ""), gen("b").replace("b/", ""));
    for f in ["dge_reads.fastq", "dge_genes.fasta", "dge_alignments.tsv"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
    let bin = |workers: &str| {
        let store = format!("st{workers}");
        ok(p, &["--store", &store, "import", "a/dge_reads.fastq", "--lane", "8"]);
        ok(p, &["--store", &store, "--workers", workers, "bin"])
    };
    assert_eq!(bin("1"), bin("4"));
}
