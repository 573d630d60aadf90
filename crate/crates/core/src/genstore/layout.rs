//! Catalog row serialization.
//!
//! Every row is framed by a 4-byte little-endian body length. Inside a body,
//! surrogate ids are 8 bytes, counts and coordinates 4 bytes, flags 1 byte and
//! byte strings carry a 4-byte length prefix. A catalog file is the plain
//! concatenation of its framed rows, so its size is the byte total the storage
//! report accounts for.

use std::io::{self, Read};

pub const ROW_HEADER: usize = 4;

#[derive(Debug, Default, Clone)]
pub struct RowWriter {
    body: Vec<u8>,
}

impl RowWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn id(&mut self, v: u64) -> &mut Self {
        self.body.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn count(&mut self, v: u32) -> &mut Self {
        self.body.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn flag(&mut self, v: u8) -> &mut Self {
        self.body.push(v);
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.count(v.len() as u32);
        self.body.extend_from_slice(v);
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.body.extend_from_slice(v);
        self
    }

    /// Appends the framed row to `out` and resets the writer.
    pub fn finish_into(&mut self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        out.append(&mut self.body);
    }

    pub fn framed_len(&self) -> usize {
        ROW_HEADER + self.body.len()
    }
}

/// Framed length of a byte-string field.
pub const fn bytes_len(n: usize) -> usize {
    4 + n
}

#[derive(Debug)]
pub struct RowReader<'a> {
    body: &'a [u8],
    pos: usize,
}

fn corrupt(what: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("corrupt catalog row: {what}"))
}

impl<'a> RowReader<'a> {
    pub fn new(body: &'a [u8]) -> Self {
        RowReader { body, pos: 0 }
    }

    fn take(&mut self, n: usize) -> io::Result<&'a [u8]> {
        if self.pos + n > self.body.len() {
            return Err(corrupt("field runs past row end"));
        }
        let s = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn id(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn count(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn flag(&mut self) -> io::Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bytes(&mut self) -> io::Result<&'a [u8]> {
        let n = self.count()? as usize;
        self.take(n)
    }

    pub fn raw(&mut self, n: usize) -> io::Result<&'a [u8]> {
        self.take(n)
    }

    pub fn string(&mut self) -> io::Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| corrupt("non-UTF-8 text"))
    }

    pub fn finish(self) -> io::Result<()> {
        if self.pos != self.body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(())
    }
}

/// Reads every framed row body of a catalog file.
pub fn read_rows<R: Read>(mut r: R) -> io::Result<Vec<Vec<u8>>> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut rows = Vec::new();
    let mut pos = 0;
    while pos < data.len() {
        if pos + ROW_HEADER > data.len() {
            return Err(corrupt("truncated row header"));
        }
        let n = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
        pos += ROW_HEADER;
        if pos + n > data.len() {
            return Err(corrupt("truncated row body"));
        }
        rows.push(data[pos..pos + n].to_vec());
        pos += n;
    }
    Ok(rows)
}
