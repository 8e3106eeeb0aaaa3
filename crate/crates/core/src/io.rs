//! Matrix file formats.
//!
//! Text: one row per line, whitespace-separated decimals; blank lines and
//! lines starting with `#` are skipped.
//! Binary: magic `GSTRM1`, then `n` and `d` as little-endian u64, then `n*d`
//! little-endian f64 values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::source::ReplayableRowSource;

pub const MAGIC: &[u8; 6] = b"GSTRM1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Text,
    Binary,
}

pub fn detect_format(path: &Path) -> Result<Format> {
    let mut f = File::open(path)?;
    let mut head = [0u8; 6];
    let mut got = 0;
    while got < 6 {
        let k = f.read(&mut head[got..])?;
        if k == 0 {
            break;
        }
        got += k;
    }
    Ok(if got == 6 && &head == MAGIC { Format::Binary } else { Format::Text })
}

pub fn read_matrix(path: &Path, format: Option<Format>) -> Result<DenseMatrix> {
    let format = match format {
        Some(f) => f,
        None => detect_format(path)?,
    };
    let f = File::open(path)?;
    match format {
        Format::Text => read_text(BufReader::new(f)),
        Format::Binary => read_binary(BufReader::new(f)),
    }
}

pub fn write_matrix(path: &Path, m: &DenseMatrix, format: Format) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Text => write_text(&mut w, m)?,
        Format::Binary => write_binary(&mut w, m)?,
    }
    w.flush()?;
    Ok(())
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<Vec<f64>>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return Ok(None);
    }
    let row: std::result::Result<Vec<f64>, _> = t.split_whitespace().map(str::parse).collect();
    let row = row.map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(Some(row))
}

pub fn read_text<R: BufRead>(r: R) -> Result<DenseMatrix> {
    let mut m = DenseMatrix::zeros(0, 0);
    for (i, line) in r.lines().enumerate() {
        if let Some(row) = parse_line(&line?, i + 1)? {
            m.push_row(&row).map_err(|e| match e {
                Error::ShapeMismatch(_) => Error::Format(format!("line {}: ragged row", i + 1)),
                other => other,
            })?;
        }
    }
    Ok(m)
}

pub fn write_text<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    for r in m.rows() {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<(usize, usize)> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
    let n = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
    let d = u64::from_le_bytes(b) as usize;
    Ok((n, d))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated body".into()))?;
    let v = f64::from_le_bytes(b);
    if !v.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(v)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let (n, d) = read_header(&mut r)?;
    let total = n.checked_mul(d).ok_or_else(|| Error::Format("size overflow".into()))?;
    let mut data = Vec::with_capacity(total.min(1 << 24));
    for _ in 0..total {
        data.push(read_f64(&mut r)?);
    }
    DenseMatrix::new(n, d, data)
}

pub fn write_binary<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Streams rows from disk on every pass, so only O(d) memory is held.
pub struct FileRowSource {
    path: PathBuf,
    format: Format,
    d: usize,
    passes: usize,
    cap: Option<usize>,
}

impl FileRowSource {
    pub fn open(path: &Path, format: Option<Format>) -> Result<Self> {
        let format = match format {
            Some(f) => f,
            None => detect_format(path)?,
        };
        let mut s = Self { path: path.to_path_buf(), format, d: 0, passes: 0, cap: None };
        s.d = match format {
            Format::Binary => read_header(&mut BufReader::new(File::open(path)?))?.1,
            Format::Text => {
                let r = BufReader::new(File::open(path)?);
                let mut d = 0;
                for (i, line) in r.lines().enumerate() {
                    if let Some(row) = parse_line(&line?, i + 1)? {
                        d = row.len();
                        break;
                    }
                }
                d
            }
        };
        Ok(s)
    }

    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.cap = cap;
        self
    }
}

impl ReplayableRowSource for FileRowSource {
    fn dim(&self) -> usize {
        self.d
    }

    fn passes(&self) -> usize {
        self.passes
    }

    fn pass(&mut self, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<usize> {
        if let Some(cap) = self.cap {
            if self.passes >= cap {
                return Err(Error::PassBudgetExceeded(cap));
            }
        }
        self.passes += 1;
        let file = BufReader::new(File::open(&self.path)?);
        let mut count = 0;
        match self.format {
            Format::Text => {
                for (i, line) in file.lines().enumerate() {
                    if let Some(row) = parse_line(&line?, i + 1)? {
                        if row.len() != self.d {
                            return Err(Error::Format(format!("line {}: ragged row", i + 1)));
                        }
                        f(count, &row)?;
                        count += 1;
                    }
                }
            }
            Format::Binary => {
                let mut r = file;
                let (n, d) = read_header(&mut r)?;
                let mut row = vec![0.0; d];
                for i in 0..n {
                    for v in row.iter_mut() {
                        *v = read_f64(&mut r)?;
                    }
                    f(i, &row)?;
                }
                count = n;
            }
        }
        Ok(count)
    }
}
