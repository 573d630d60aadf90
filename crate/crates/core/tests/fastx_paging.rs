use std::io::{self, Read};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqhouse::fastx::{open_fasta, open_fastq, write_fastq, FastqRecord, FastxError};

/// Whole-buffer FASTQ oracle: split on newlines, four lines per record.
fn oracle(data: &[u8]) -> Vec<(String, Vec<u8>, Vec<u8>)> {
    let text = std::str::from_utf8(data).unwrap();
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    lines
        .chunks(4)
        .map(|c| {
            (
                c[0][1..].to_string(),
                c[1].as_bytes().to_vec(),
                c[3].bytes().map(|b| b - 33).collect(),
            )
        })
        .collect()
}

fn flatten(recs: &[FastqRecord]) -> Vec<(String, Vec<u8>, Vec<u8>)> {
    recs.iter()
        .map(|r| (r.name.clone(), r.seq.as_bytes().to_vec(), r.qual.scores().to_vec()))
        .collect()
}

/// Hands out at most `step` bytes per read call.
struct Trickle<'a> {
    data: &'a [u8],
    step: usize,
}

impl Read for Trickle<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.step.min(buf.len()).min(self.data.len());
        buf[..n].copy_from_slice(&self.data[..n]);
        self.data = &self.data[n..];
        Ok(n)
    }
}

fn record(rng: &mut ChaCha8Rng, name_len: usize, seq_len: usize, crlf: bool) -> Vec<u8> {
    let eol: &[u8] = if crlf { b"\r\n" } else { b"\n" };
    let mut r = b"@".to_vec();
    r.extend((0..name_len).map(|_| b"abcdefgh0123:_"[rng.gen_range(0..14)]));
    r.extend_from_slice(eol);
    r.extend((0..seq_len).map(|_| b"ACGTN"[rng.gen_range(0..5)]));
    r.extend_from_slice(eol);
    r.push(b'+');
    r.extend_from_slice(eol);
    r.extend((0..seq_len).map(|_| rng.gen_range(33u8..=126)));
    r.extend_from_slice(eol);
    r
}

#[test]
fn record_stream_independent_of_buffer_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut data = Vec::new();
    for _ in 0..3000 {
        let (n, s) = (rng.gen_range(1..30), rng.gen_range(0..110));
        data.extend(record(&mut rng, n, s, false));
    }
    let want = oracle(&data);
    for buf in [256, 300, 1024, 4096, 65536, 1 << 20] {
        let got: Vec<FastqRecord> = open_fastq(&data[..], buf).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(flatten(&got), want, "buffer {buf}");
    }
    let trickled: Vec<FastqRecord> = open_fastq(Trickle { data: &data, step: 7 }, 512)
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(flatten(&trickled), want);
}

/// For several buffer sizes, a leading record of every possible length moves
/// the first chunk boundary through every byte offset of the next record.
#[test]
fn boundary_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for buf in [96usize, 128, 200] {
        let body: Vec<Vec<u8>> = (0..20).map(|_| record(&mut rng, 12, 20, false)).collect();
        let rec_len = body[0].len();
        for shift in 0..=rec_len {
            // the first chunk boundary lands rec_len - shift bytes into the second record
            let first_len = buf - rec_len + shift;
            let overhead = 1 + 1 + 2 + 1 + 1;
            let seq = (first_len - overhead - 4) / 2;
            let name = first_len - overhead - 2 * seq;
            let mut data = record(&mut rng, name, seq, false);
            assert!(data.len() <= buf);
            for r in &body {
                data.extend_from_slice(r);
            }
            let want = oracle(&data);
            let got: Vec<FastqRecord> = open_fastq(&data[..], buf).unwrap().collect::<Result<_, _>>().unwrap();
            assert_eq!(flatten(&got), want, "buffer {buf} shift {shift}");
        }
    }
}

#[test]
fn crlf_matches_lf() {
    let mut a = ChaCha8Rng::seed_from_u64(2);
    let mut b = ChaCha8Rng::seed_from_u64(2);
    let mut lf = Vec::new();
    let mut crlf = Vec::new();
    for _ in 0..300 {
        lf.extend(record(&mut a, 10, 30, false));
        crlf.extend(record(&mut b, 10, 30, true));
    }
    for buf in [128, 1024] {
        let x: Vec<FastqRecord> = open_fastq(&lf[..], buf).unwrap().collect::<Result<_, _>>().unwrap();
        let y: Vec<FastqRecord> = open_fastq(&crlf[..], buf).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn oversize_record_reports_capacity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut data = record(&mut rng, 5, 10, false);
    let big_at = data.len() as u64;
    data.extend(record(&mut rng, 5, 400, false));
    let mut r = open_fastq(&data[..], 256).unwrap();
    assert!(r.next_record().unwrap().is_some());
    match r.next_record() {
        Err(FastxError::Capacity { offset, record, required, capacity }) => {
            assert_eq!((offset, record, capacity), (big_at, 2, 256));
            assert!(required > 256);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn writer_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut data = Vec::new();
    for _ in 0..200 {
        data.extend(record(&mut rng, 8, 50, false));
    }
    let recs: Vec<FastqRecord> = open_fastq(&data[..], 4096).unwrap().collect::<Result<_, _>>().unwrap();
    let mut out = Vec::new();
    write_fastq(&recs, &mut out).unwrap();
    let again: Vec<FastqRecord> = open_fastq(&out[..], 300).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(recs, again);
}

#[test]
fn fasta_long_lines_any_buffer() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut data = Vec::new();
    let mut want = Vec::new();
    for i in 0..30 {
        let len = rng.gen_range(0..3000);
        let s: Vec<u8> = (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect();
        data.extend(format!(">r{i} desc\n").bytes());
        for line in s.chunks(rng.gen_range(1..200)) {
            data.extend_from_slice(line);
            data.push(b'\n');
        }
        want.push((format!("r{i} desc"), s));
    }
    for buf in [16, 64, 1000] {
        let got: Vec<(String, Vec<u8>)> = open_fasta(&data[..], buf)
            .unwrap()
            .map(|r| r.map(|r| (r.name, r.seq.into_bytes())))
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(got, want, "buffer {buf}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_buffer_matches_oracle(seed in any::<u64>(), n in 0usize..60, buf in 64usize..512) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for _ in 0..n {
            let (a, b, crlf) = (rng.gen_range(1..10), rng.gen_range(0..20), rng.gen_bool(0.3));
            data.extend(record(&mut rng, a, b, crlf));
        }
        let got: Vec<FastqRecord> = open_fastq(&data[..], buf).unwrap().collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(flatten(&got), oracle(&data));
        prop_assert_eq!(open_fastq(&data[..], buf).unwrap().count().unwrap(), n as u64);
    }
}
