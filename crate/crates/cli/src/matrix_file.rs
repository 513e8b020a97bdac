//! Dense matrix files.
//!
//! Binary: `rows: u64`, `cols: u64`, then `rows * cols` row-major `f64`,
//! all little-endian. CSV (chosen by a `.csv` extension): a `rows,cols`
//! header line followed by the values, one matrix row per line.

use std::fs;
use std::path::Path;

use mpo_core::Tensor;

use crate::failure::{CmdResult, Failure};

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn read_matrix(path: &Path) -> CmdResult<Tensor> {
    let bytes = fs::read(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if is_csv(path) { parse_csv(&bytes) } else { parse_binary(&bytes) };
    parsed.map_err(|m| Failure::io(format!("{}: {m}", path.display())))
}

fn build(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor, String> {
    if rows == 0 || cols == 0 {
        return Err(format!("matrix dims must be positive, got {rows}x{cols}"));
    }
    let expected = rows.checked_mul(cols).ok_or("matrix dims overflow")?;
    if data.len() != expected {
        return Err(format!("header says {rows}x{cols} but {} values follow", data.len()));
    }
    Tensor::new(vec![rows, cols], data).map_err(|e| e.to_string())
}

fn parse_binary(bytes: &[u8]) -> Result<Tensor, String> {
    if bytes.len() < 16 {
        return Err("file too short for the 16-byte header".into());
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let payload = &bytes[16..];
    if payload.len() % 8 != 0 {
        return Err(format!("payload of {} bytes is not a whole number of f64 values", payload.len()));
    }
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let rows = usize::try_from(rows).map_err(|_| "row count overflows")?;
    let cols = usize::try_from(cols).map_err(|_| "column count overflows")?;
    build(rows, cols, data)
}

fn parse_csv(bytes: &[u8]) -> Result<Tensor, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("not UTF-8: {e}"))?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or("empty CSV file")?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|f| f.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad header {header:?}: {e}"))?;
    let [rows, cols] = dims[..] else {
        return Err(format!("header {header:?} must be rows,cols"));
    };
    let mut data = Vec::with_capacity(rows.saturating_mul(cols));
    for (r, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("row {r}: {e}"))?;
        if row.len() != cols {
            return Err(format!("row {r} has {} values, expected {cols}", row.len()));
        }
        data.extend(row);
    }
    build(rows, cols, data)
}
