//! Conductance-map interchange format.
//!
//! One CSV row per device, `layer,row,col,g_ref_microsiemens`, with values
//! printed to 9 significant digits. Re-importing and re-exporting a map
//! reproduces the file byte for byte.

use thiserror::Error;

use super::{ConductanceGrid, DeviceAddr};

pub const CSV_HEADER: &str = "layer,row,col,g_ref_microsiemens";

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("missing header `{CSV_HEADER}`")]
    MissingHeader,
    #[error("device at layer {0} row {1} col {2} listed twice")]
    Duplicate(usize, usize, usize),
    #[error("map is not a complete {0}x{1}x{2} grid")]
    Incomplete(usize, usize, usize),
}

fn format_microsiemens(g_siemens: f64) -> String {
    // 9 significant digits in scientific notation.
    format!("{:.8e}", g_siemens * 1e6)
}

/// Serialize a grid to the CSV interchange format.
pub fn write_conductance_csv(grid: &ConductanceGrid) -> String {
    let mut out = String::with_capacity(32 * grid.values().len() + 40);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for addr in grid.addrs() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            addr.layer,
            addr.row,
            addr.col,
            format_microsiemens(grid.get(addr))
        ));
    }
    out
}

/// Parse the CSV interchange format back into a grid.
///
/// The map must cover a complete `layers x rows x cols` grid with every
/// device listed exactly once.
pub fn read_conductance_csv(text: &str) -> Result<ConductanceGrid, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        _ => return Err(CsvError::MissingHeader),
    }

    let mut entries: Vec<(DeviceAddr, f64)> = Vec::new();
    let (mut layers, mut rows, mut cols) = (0usize, 0usize, 0usize);
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| CsvError::Malformed { line: idx + 1, msg: format!("missing {name}") })
        };
        let layer: usize = parse(next_field("layer")?, idx, "layer")?;
        let row: usize = parse(next_field("row")?, idx, "row")?;
        let col: usize = parse(next_field("col")?, idx, "col")?;
        let g_us: f64 = parse(next_field("g_ref_microsiemens")?, idx, "g_ref_microsiemens")?;
        if fields.next().is_some() {
            return Err(CsvError::Malformed { line: idx + 1, msg: "too many fields".into() });
        }
        if !g_us.is_finite() || g_us <= 0.0 {
            return Err(CsvError::Malformed {
                line: idx + 1,
                msg: format!("non-positive conductance {g_us}"),
            });
        }
        layers = layers.max(layer + 1);
        rows = rows.max(row + 1);
        cols = cols.max(col + 1);
        entries.push((DeviceAddr::new(layer, row, col), g_us * 1e-6));
    }
    if entries.is_empty() {
        return Err(CsvError::Incomplete(0, 0, 0));
    }
    if entries.len() != layers * rows * cols {
        return Err(CsvError::Incomplete(layers, rows, cols));
    }
    let mut grid = ConductanceGrid::filled(layers, rows, cols, f64::NAN);
    for (addr, g) in entries {
        if !grid.get(addr).is_nan() {
            return Err(CsvError::Duplicate(addr.layer, addr.row, addr.col));
        }
        grid.set(addr, g);
    }
    if grid.values().iter().any(|v| v.is_nan()) {
        return Err(CsvError::Incomplete(layers, rows, cols));
    }
    Ok(grid)
}

fn parse<T: std::str::FromStr>(s: &str, idx: usize, name: &str) -> Result<T, CsvError> {
    s.trim()
        .parse()
        .map_err(|_| CsvError::Malformed { line: idx + 1, msg: format!("bad {name}: `{s}`") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn round_trip_is_byte_exact() {
        let mut rng = substream(31, "csv", 0);
        let mut grid = ConductanceGrid::filled(2, 3, 4, 0.0);
        let addrs: Vec<DeviceAddr> = grid.addrs().collect();
        for addr in addrs {
            grid.set(addr, 1e-6 + 199e-6 * rng.random::<f64>());
        }
        let text = write_conductance_csv(&grid);
        let parsed = read_conductance_csv(&text).unwrap();
        assert_eq!(write_conductance_csv(&parsed), text);
        assert_eq!(parsed.layers, 2);
        assert_eq!(parsed.rows, 3);
        assert_eq!(parsed.cols, 4);
    }

    #[test]
    fn nine_significant_digits() {
        let grid = ConductanceGrid::filled(1, 1, 1, 12.3456789e-6);
        let text = write_conductance_csv(&grid);
        assert!(text.contains("1.23456789e1"), "{text}");
    }

    #[test]
    fn rejects_incomplete_and_duplicate_maps() {
        let grid = ConductanceGrid::filled(1, 2, 2, 10e-6);
        let text = write_conductance_csv(&grid);
        let truncated: String =
            text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_conductance_csv(&truncated), Err(CsvError::Incomplete(..))));

        // Same entry count, but one device listed twice and another missing.
        let doubled = text.replace("0,1,1,", "0,0,0,");
        assert!(matches!(read_conductance_csv(&doubled), Err(CsvError::Duplicate(..))));

        assert!(matches!(read_conductance_csv("nope"), Err(CsvError::MissingHeader)));
        let bad = format!("{CSV_HEADER}\n0,0,zero,1.0\n");
        assert!(matches!(read_conductance_csv(&bad), Err(CsvError::Malformed { .. })));
    }
}
