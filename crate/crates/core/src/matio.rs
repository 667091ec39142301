//! Reading and writing symmetric matrices.
//!
//! Two on-disk forms are supported: a little-endian binary layout
//! (magic `GRNK`, format version, size, then row-major entries) and a
//! plain-text layout (first line is n, then n whitespace-separated rows).
//! Reading sniffs the magic bytes to pick the decoder.

use crate::error::{Error, Result};
use crate::spectral::SymMatrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GRNK";
const VERSION: u16 = 1;

/// Writes the binary layout: magic, u16 version, u64 n, then n² f64
/// entries row-major, all little-endian.
pub fn write_matrix_binary(path: &Path, a: &SymMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(a.n() as u64).to_le_bytes())?;
    for &x in a.entries() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the text layout: first line n, then one line per row with
/// entries printed in shortest round-trip form.
pub fn write_matrix_text(path: &Path, a: &SymMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = a.n();
    writeln!(w, "{n}")?;
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{}", a.entry(i, j))).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads either layout, detected by the magic bytes.
pub fn read_matrix(path: &Path) -> Result<SymMatrix> {
    let mut f = File::open(path)?;
    let mut head = [0u8; 4];
    let got = f.read(&mut head)?;
    drop(f);
    if got == 4 && &head == MAGIC {
        read_matrix_binary(path)
    } else {
        read_matrix_text(path)
    }
}

pub fn read_matrix_binary(path: &Path) -> Result<SymMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 4];
    r.read_exact(&mut head).map_err(truncated)?;
    if &head != MAGIC {
        return Err(Error::BadMatrixFile("missing GRNK magic".into()));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v).map_err(truncated)?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::BadMatrixFile(format!("unsupported format version {version}")));
    }
    let mut nb = [0u8; 8];
    r.read_exact(&mut nb).map_err(truncated)?;
    let n64 = u64::from_le_bytes(nb);
    if n64 == 0 || n64 > 1_000_000 {
        return Err(Error::BadMatrixFile(format!("implausible matrix size {n64}")));
    }
    let n = n64 as usize;
    let mut data = Vec::with_capacity(n * n);
    let mut buf = [0u8; 8];
    for _ in 0..n * n {
        r.read_exact(&mut buf).map_err(truncated)?;
        data.push(f64::from_le_bytes(buf));
    }
    SymMatrix::new(n, data)
}

pub fn read_matrix_text(path: &Path) -> Result<SymMatrix> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::BadMatrixFile("empty file".into()))??;
    let n: usize = first
        .trim()
        .parse()
        .map_err(|_| Error::BadMatrixFile(format!("bad size line {first:?}")))?;
    if n == 0 {
        return Err(Error::BadMatrixFile("matrix size must be positive".into()));
    }
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::BadMatrixFile(format!("missing row {i}")))??;
        let mut count = 0usize;
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::BadMatrixFile(format!("bad entry {tok:?} in row {i}")))?;
            data.push(x);
            count += 1;
        }
        if count != n {
            return Err(Error::BadMatrixFile(format!(
                "row {i} has {count} entries, expected {n}"
            )));
        }
    }
    SymMatrix::new(n, data)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::BadMatrixFile("truncated binary matrix".into())
    } else {
        Error::Io(e)
    }
}
