//! Parsing, validation and cross-linking of the input datasets: zones,
//! origin-destination trips, road network and points of interest.

mod od;
mod pois;
mod roads;
mod zones;

use std::fs::File;
use std::io::Write;
use std::path::Path;

pub use od::{load_od, write_od_csv, OdEntry, OdLoadStats, OdMatrix};
pub use pois::{load_pois, write_pois_csv, PoiRecord, PoiTable};
pub use roads::{load_roadnet, write_roadnet, RoadEdge, RoadGraphSpec};
pub use zones::{load_zones, parse_zones_geojson, zones_to_geojson, Located, Zone, ZoneSet};

use crate::error::{Error, Result};

/// Opens a headed CSV reader and checks that every `required` column is
/// present. Returns the reader and the column positions in `required` order.
pub(crate) fn open_csv(path: &Path, required: &[&str]) -> Result<(csv::Reader<File>, Vec<usize>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, format!("cannot read header: {e}")))?
        .clone();
    let positions = column_positions(&headers, required).map_err(|m| Error::parse(path, m))?;
    Ok((rdr, positions))
}

pub(crate) fn column_positions(headers: &csv::StringRecord, required: &[&str]) -> std::result::Result<Vec<usize>, String> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| format!("missing column `{name}` (header: {})", headers.iter().collect::<Vec<_>>().join(",")))
        })
        .collect()
}

/// 1-based line number of a record, for diagnostics.
pub(crate) fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub(crate) fn parse_f64(field: &str, what: &str, line: u64) -> std::result::Result<f64, String> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("line {line}: malformed {what} {field:?}")),
    }
}

/// Shortest representation that parses back to the same `f64`; exponent
/// form for very small or very large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(f))
}

pub(crate) fn finish_csv(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}
