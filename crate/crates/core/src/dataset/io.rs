//! On-disk feature and label formats.
//!
//! * CSV: one sample per line, comma-separated decimal floats, no header.
//! * Labels: one integer per line, aligned with feature rows.
//! * Binary: `b"CMMS"`, `u32` version (= 1), `u64` n, `u64` m, then `n·m`
//!   little-endian `f64` values in row-major order. All integers little-endian.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CmmsError, Result};

pub const BIN_MAGIC: &[u8; 4] = b"CMMS";
pub const BIN_VERSION: u32 = 1;
pub const BIN_HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Bin,
}

impl Format {
    /// Binary files are recognised by their magic bytes; anything else is CSV.
    pub fn sniff(bytes: &[u8]) -> Format {
        if bytes.starts_with(BIN_MAGIC) {
            Format::Bin
        } else {
            Format::Csv
        }
    }

    /// Conventional file extension.
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Bin => "bin",
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CmmsError::io(path, e))
}

/// Read a feature matrix (rows = samples).
pub fn load_features(path: impl AsRef<Path>, format: Format) -> Result<DMatrix<f64>> {
    let bytes = read_bytes(path.as_ref())?;
    match format {
        Format::Bin => parse_bin_features(&bytes),
        Format::Csv => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| CmmsError::parse(None, None, format!("not valid UTF-8: {e}")))?;
            parse_csv_features(text)
        }
    }
}

/// Like [`load_features`], choosing the format from the file contents.
pub fn load_features_auto(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let bytes = read_bytes(path.as_ref())?;
    match Format::sniff(&bytes) {
        Format::Bin => parse_bin_features(&bytes),
        Format::Csv => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| CmmsError::parse(None, None, format!("not valid UTF-8: {e}")))?;
            parse_csv_features(text)
        }
    }
}

pub fn parse_csv_features(text: &str) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = lineno + 1;
        let mut count = 0usize;
        for (c, field) in line.split(',').enumerate() {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| {
                CmmsError::parse(Some(row), Some(c + 1), format!("cannot parse {field:?} as a number"))
            })?;
            if !v.is_finite() {
                return Err(CmmsError::parse(Some(row), Some(c + 1), "non-finite value"));
            }
            values.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(expected) if expected != count => {
                return Err(CmmsError::parse(
                    Some(row),
                    None,
                    format!("expected {expected} columns, found {count}"),
                ));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CmmsError::parse(None, None, "no rows"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn parse_bin_features(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < BIN_HEADER_LEN {
        return Err(CmmsError::parse(None, None, "truncated header"));
    }
    if &bytes[0..4] != BIN_MAGIC {
        return Err(CmmsError::parse(None, None, "bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BIN_VERSION {
        return Err(CmmsError::parse(None, None, format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let m = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if n == 0 {
        return Err(CmmsError::parse(None, None, "no rows"));
    }
    if m == 0 {
        return Err(CmmsError::parse(None, None, "no columns"));
    }
    let payload = &bytes[BIN_HEADER_LEN..];
    let expected = n
        .checked_mul(m)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| CmmsError::parse(None, None, format!("header size {n}x{m} overflows")))?;
    if payload.len() as u64 != expected {
        return Err(CmmsError::parse(
            None,
            None,
            format!("header declares {n}x{m} values ({expected} bytes), payload has {} bytes", payload.len()),
        ));
    }
    let (n, m) = (n as usize, m as usize);
    let mut values = Vec::with_capacity(n * m);
    for (idx, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(CmmsError::parse(Some(idx / m + 1), Some(idx % m + 1), "non-finite value"));
        }
        values.push(v);
    }
    Ok(DMatrix::from_row_slice(n, m, &values))
}

pub fn encode_bin_features(x: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(BIN_HEADER_LEN + 8 * x.len());
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    out.extend_from_slice(&(x.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.ncols() as u64).to_le_bytes());
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            out.extend_from_slice(&x[(r, c)].to_le_bytes());
        }
    }
    out
}

/// CSV text for a feature matrix. Values use the shortest representation
/// that parses back to the identical `f64`.
pub fn encode_csv_features(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..x.nrows() {
        let line: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_features(path: impl AsRef<Path>, x: &DMatrix<f64>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        Format::Bin => encode_bin_features(x),
        Format::Csv => encode_csv_features(x).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| CmmsError::io(path, e))
}

pub fn parse_labels(text: &str) -> Result<Vec<i64>> {
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v = line.parse::<i64>().or_else(|_| {
            // Integral floats such as "3.0" show up in exported label files.
            match line.parse::<f64>() {
                Ok(f) if f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(f as i64),
                _ => Err(CmmsError::parse(
                    Some(lineno + 1),
                    None,
                    format!("cannot parse {line:?} as an integer label"),
                )),
            }
        })?;
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(CmmsError::parse(None, None, "no rows"));
    }
    Ok(labels)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CmmsError::io(path, e))?;
    parse_labels(&text)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CmmsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_two_by_two() {
        let x = parse_csv_features("1.0,2.0\n3.0,4.0").unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn csv_tolerates_crlf_and_spaces() {
        let x = parse_csv_features("1, 2\r\n 3 ,4\r\n\r\n").unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn csv_empty_is_no_rows() {
        let err = parse_csv_features("").unwrap_err();
        assert!(err.to_string().contains("no rows"), "{err}");
    }

    #[test]
    fn csv_errors_name_location() {
        let err = parse_csv_features("1,2\n3,x\n").unwrap_err();
        assert!(err.to_string().contains("row 2, col 2"), "{err}");
        let err = parse_csv_features("1,2\n3\n").unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = parse_csv_features("1,NaN\n").unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
        let err = parse_csv_features("1,inf\n").unwrap_err();
        assert!(err.to_string().contains("row 1, col 2"), "{err}");
    }

    #[test]
    fn bin_round_trip_three_by_two() {
        let vals: [f64; 6] = [0.5, -1.25, 3.0e-7, 42.0, -0.0, 1.0e300];
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"CMMS");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        for v in vals {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let x = parse_bin_features(&bytes).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (3, 2));
        for r in 0..3 {
            for c in 0..2 {
                assert_eq!(x[(r, c)].to_bits(), vals[r * 2 + c].to_bits());
            }
        }
        assert_eq!(encode_bin_features(&x), bytes);
    }

    #[test]
    fn bin_rejects_bad_input() {
        assert!(parse_bin_features(b"CMM").is_err());
        let mut bytes = encode_bin_features(&DMatrix::from_element(2, 2, 1.0));
        bytes.pop();
        assert!(parse_bin_features(&bytes).is_err());
        let mut bytes = encode_bin_features(&DMatrix::from_element(1, 1, 1.0));
        bytes[4] = 2;
        assert!(parse_bin_features(&bytes).unwrap_err().to_string().contains("version"));
        let mut huge = Vec::new();
        huge.extend_from_slice(b"CMMS");
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(parse_bin_features(&huge).is_err());
        let nan = encode_bin_features(&DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]));
        assert!(parse_bin_features(&nan).unwrap_err().to_string().contains("row 1, col 2"));
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("1\n2\n 3.0 \n\n").unwrap(), vec![1, 2, 3]);
        assert!(parse_labels("").is_err());
        assert!(parse_labels("1\n2.5\n").unwrap_err().to_string().contains("row 2"));
    }

    #[test]
    fn sniff_format() {
        assert_eq!(Format::sniff(b"CMMS\x01"), Format::Bin);
        assert_eq!(Format::sniff(b"1.0,2.0"), Format::Csv);
    }
}
