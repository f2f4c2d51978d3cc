//! Matrix files: headerless row-major CSV, or the `SSVD` binary layout
//! (magic, `u32` version, `u64` rows, `u64` cols, row-major little-endian `f64`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"SSVD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    #[default]
    Csv,
    Bin,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Bin => "bin",
        }
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, format: MatrixFormat) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let result = match format {
        MatrixFormat::Csv => write_csv(&mut out, m),
        MatrixFormat::Bin => write_bin(&mut out, m),
    };
    result.and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

fn write_csv(out: &mut impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for row in m.row_iter() {
        let mut first = true;
        for x in row.iter() {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            // `Display` for f64 is the shortest representation that reads back exactly.
            write!(out, "{x}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn write_bin(out: &mut impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for row in m.row_iter() {
        for x in row.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads either format, recognizing the binary one by its magic bytes.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let head = reader.fill_buf().map_err(|e| CliError::io(path, e))?;
    if head.starts_with(MAGIC) {
        read_bin(&mut reader, path)
    } else {
        read_csv(reader, path)
    }
}

fn read_bin(reader: &mut impl Read, path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut header = [0u8; 24];
    reader
        .read_exact(&mut header)
        .map_err(|_| CliError::format(path, "truncated binary header"))?;
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CliError::format(path, format!("unsupported binary version {version}")));
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let len = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| CliError::format(path, format!("{rows}x{cols} is too large")))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    if bytes.len() != len * 8 {
        return Err(CliError::format(
            path,
            format!("{rows}x{cols} needs {} data bytes, found {}", len * 8, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    Ok(DMatrix::from_row_iterator(rows as usize, cols as usize, values))
}

fn read_csv(reader: impl BufRead, path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let x: f64 = field.trim().parse().map_err(|_| {
                CliError::format(path, format!("line {}: cannot parse {:?} as a number", lineno + 1, field))
            })?;
            values.push(x);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(CliError::format(
                    path,
                    format!("line {} has {width} fields, expected {c}", lineno + 1),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::format(path, "no data"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Count matrix: every entry must be a nonnegative integer.
pub fn read_counts(path: &Path) -> Result<DMatrix<i64>, CliError> {
    let m = read_matrix(path)?;
    if let Some((k, x)) = m.iter().enumerate().find(|(_, x)| x.fract() != 0.0 || !x.is_finite()) {
        let (row, col) = (k % m.nrows(), k / m.nrows());
        return Err(CliError::format(path, format!("entry ({row}, {col}) = {x} is not an integer")));
    }
    Ok(m.map(|x| x as i64))
}
