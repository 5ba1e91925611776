//! PDW stream files.
//!
//! CSV: header `toa_us,rf_mhz,pw_us,pa_dbm,doa_deg,label`, one pulse per row,
//! `.` decimal separator. Values are written in shortest round-trip form, so
//! reading back yields identical doubles.
//!
//! Binary: ASCII magic `PDW1`, little-endian `u32` record count, then per
//! record five `f64` (toa, rf, pw, pa, doa) followed by a `u16` label.
//!
//! A zero-length file of either kind is an empty stream.

use std::fs;
use std::path::Path;

use super::record::PdwRecord;
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 6] = ["toa_us", "rf_mhz", "pw_us", "pa_dbm", "doa_deg", "label"];
pub const BINARY_MAGIC: &[u8; 4] = b"PDW1";
const RECORD_BYTES: usize = 5 * 8 + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

pub fn encode_binary(stream: &[PdwRecord]) -> Result<Vec<u8>> {
    let count = u32::try_from(stream.len())
        .map_err(|_| Error::Precondition(format!("{} records exceed the u32 count field", stream.len())))?;
    let mut out = Vec::with_capacity(8 + stream.len() * RECORD_BYTES);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for r in stream {
        for v in r.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&r.label.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8], path: &str) -> Result<Vec<PdwRecord>> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let bad = |reason: String| Error::Parse {
        path: path.to_string(),
        line: 0,
        reason,
    };
    if bytes.len() < 8 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("missing PDW1 magic".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != count * RECORD_BYTES {
        return Err(bad(format!(
            "header declares {count} records ({} bytes) but body has {} bytes",
            count * RECORD_BYTES,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(RECORD_BYTES)
        .map(|rec| {
            let f = |i: usize| f64::from_le_bytes(rec[i * 8..i * 8 + 8].try_into().unwrap());
            let label = u16::from_le_bytes(rec[40..42].try_into().unwrap());
            PdwRecord::from_values([f(0), f(1), f(2), f(3), f(4)], label)
        })
        .collect())
}

pub fn encode_csv(stream: &[PdwRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in stream {
        let v = r.values();
        out.push_str(&format!("{},{},{},{},{},{}\n", v[0], v[1], v[2], v[3], v[4], r.label));
    }
    out
}

pub fn decode_csv(text: &str, path: &str) -> Result<Vec<PdwRecord>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let expected = CSV_COLUMNS.join(",");
    let header_err = |reason: String| Error::Header {
        path: path.to_string(),
        reason,
        expected: expected.clone(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if let Some(unknown) = names.iter().find(|n| !CSV_COLUMNS.contains(n)) {
        return Err(header_err(format!("unknown column `{unknown}`")));
    }
    let mut index = [0usize; 6];
    for (slot, col) in index.iter_mut().zip(CSV_COLUMNS) {
        *slot = names
            .iter()
            .position(|n| *n == col)
            .ok_or_else(|| header_err(format!("missing column `{col}`")))?;
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| -> Result<&str> {
            row.get(index[k]).ok_or_else(|| Error::Parse {
                path: path.to_string(),
                line,
                reason: format!("missing value for `{}`", CSV_COLUMNS[k]),
            })
        };
        let mut values = [0.0; 5];
        for (k, v) in values.iter_mut().enumerate() {
            let raw = field(k)?;
            *v = raw.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_string(),
                line,
                reason: format!("`{}` is not a number: `{raw}`", CSV_COLUMNS[k]),
            })?;
        }
        let raw = field(5)?;
        let label = raw.parse::<u16>().map_err(|_| Error::Parse {
            path: path.to_string(),
            line,
            reason: format!("`label` is not a class id: `{raw}`"),
        })?;
        out.push(PdwRecord::from_values(values, label));
    }
    Ok(out)
}

pub fn write_pdw(path: &Path, stream: &[PdwRecord]) -> Result<()> {
    let bytes = match Format::from_path(path) {
        Format::Csv => encode_csv(stream).into_bytes(),
        Format::Binary => encode_binary(stream)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pdw(path: &Path) -> Result<Vec<PdwRecord>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match Format::from_path(path) {
        Format::Csv => {
            let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
                path: name.clone(),
                line: 0,
                reason: format!("not UTF-8: {e}"),
            })?;
            decode_csv(&text, &name)
        }
        Format::Binary => decode_binary(&bytes, &name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record() -> impl Strategy<Value = PdwRecord> {
        (
            0.0..1e7f64,
            -1e5..1e5f64,
            1e-3..1e3f64,
            -200.0..0.0f64,
            0.0..360.0f64,
            any::<u16>(),
        )
            .prop_map(|(toa, rf, pw, pa, doa, label)| PdwRecord {
                toa,
                rf,
                pw,
                pa,
                doa,
                label,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(stream in prop::collection::vec(record(), 0..50)) {
            let text = encode_csv(&stream);
            prop_assert_eq!(decode_csv(&text, "t.csv").unwrap(), stream);
        }

        #[test]
        fn binary_round_trip_is_exact(stream in prop::collection::vec(record(), 0..50)) {
            let bytes = encode_binary(&stream).unwrap();
            let back = decode_binary(&bytes, "t.bin").unwrap();
            prop_assert_eq!(encode_binary(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn missing_column_is_named() {
        let text = "toa_us,rf_mhz,pw_us,pa_dbm,label\n0,1,2,3,0\n";
        let err = decode_csv(text, "x.csv").unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
        assert!(err.to_string().contains("`doa_deg`"), "{err}");
    }

    #[test]
    fn unknown_column_lists_expected_header() {
        let text = "toa_us,rf_mhz,pw_us,pa_dbm,doa_deg,label,pri\n";
        let err = decode_csv(text, "x.csv").unwrap_err().to_string();
        assert!(err.contains("pri") && err.contains("toa_us,rf_mhz,pw_us,pa_dbm,doa_deg,label"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "toa_us,rf_mhz,pw_us,pa_dbm,doa_deg,label\n0,1,2,3,4,0\n1,x,2,3,4,0\n";
        match decode_csv(text, "x.csv").unwrap_err() {
            Error::Parse { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("rf_mhz"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_files_are_empty_streams() {
        assert!(decode_csv("", "e.csv").unwrap().is_empty());
        assert!(decode_binary(&[], "e.bin").unwrap().is_empty());
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let mut bytes = encode_binary(&[PdwRecord::from_values([1.0; 5], 0)]).unwrap();
        bytes.pop();
        assert!(decode_binary(&bytes, "t.bin").is_err());
    }
}
