//! HFM1 binary matrices and the CSV fallback.
//!
//! Layout: ASCII `HFM1`, then `rows` and `cols` as little-endian `u32`,
//! then `rows·cols` little-endian `f32` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Matrix;

pub const MAGIC: &[u8; 4] = b"HFM1";
pub const HEADER_LEN: usize = 12;

pub fn encode(m: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::range("row count exceeds u32"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::range("column count exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for (i, v) in m.values().iter().enumerate() {
        let f = *v as f32;
        if !f.is_finite() {
            return Err(Error::range(format!(
                "value {v} at index {i} does not fit in f32"
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "missing HFM1 magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(4, "shape overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            (HEADER_LEN + payload.len().min(expected)) as u64,
            format!(
                "header declares {rows}x{cols} ({expected} bytes) but payload has {} bytes",
                payload.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                (HEADER_LEN + 4 * i) as u64,
                format!("non-finite value {v}"),
            ));
        }
        values.push(f64::from(v));
    }
    Matrix::new(rows, cols, values)
}

pub fn store_matrix(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_csv(path) {
        to_csv(m).into_bytes()
    } else {
        encode(m)?
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Loads HFM1, or CSV when the extension is `.csv` or the magic is absent
/// and the content is text.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) && !is_csv(path) {
        return decode(&bytes);
    }
    if is_csv(path) {
        return parse_csv(&bytes);
    }
    decode(&bytes)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn to_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Comma-separated numbers; an optional non-numeric header row and `#`
/// comment lines are skipped.
pub fn parse_csv(bytes: &[u8]) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(Error::format(offset, format!("non-finite value in column {bad}")));
                }
                if let Some(first) = rows.first() {
                    if first.len() != vals.len() {
                        return Err(Error::format(
                            offset,
                            format!("row has {} fields, expected {}", vals.len(), first.len()),
                        ));
                    }
                }
                rows.push(vals);
            }
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::format(offset, format!("unparseable number: {e}"))),
        }
    }
    Matrix::from_rows(&rows)
}
