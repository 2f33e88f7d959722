use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::{csv_writer, finish_csv, fmt_f64, line_of, open_csv, parse_f64, ZoneSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdEntry {
    pub origin: usize,
    pub dest: usize,
    pub trips: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdLoadStats {
    pub rows: usize,
    pub zero_rows_dropped: usize,
    pub duplicates_merged: usize,
}

/// Sparse zone-to-zone trip counts for one time window, stored column-major
/// (grouped by destination, origins ascending within a destination).
#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrix {
    window: String,
    n_zones: usize,
    entries: Vec<OdEntry>,
    dest_offsets: Vec<usize>,
}

impl OdMatrix {
    /// Builds a matrix over zone indices `0..n_zones`. Zero-trip entries are
    /// dropped and duplicate (origin, dest) pairs are summed.
    pub fn from_entries(
        n_zones: usize,
        window: impl Into<String>,
        raw: impl IntoIterator<Item = OdEntry>,
    ) -> Result<(Self, OdLoadStats)> {
        let mut stats = OdLoadStats::default();
        let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
        let mut merged: Vec<OdEntry> = Vec::new();
        for e in raw {
            stats.rows += 1;
            if e.origin >= n_zones || e.dest >= n_zones {
                return Err(Error::Validation(format!(
                    "OD entry ({}, {}) references a zone outside 0..{n_zones}",
                    e.origin, e.dest
                )));
            }
            if !e.trips.is_finite() || e.trips < 0.0 {
                return Err(Error::Validation(format!("OD entry ({}, {}) has invalid trips {}", e.origin, e.dest, e.trips)));
            }
            if e.trips == 0.0 {
                stats.zero_rows_dropped += 1;
                continue;
            }
            match slot.get(&(e.origin, e.dest)) {
                Some(&i) => {
                    merged[i].trips += e.trips;
                    stats.duplicates_merged += 1;
                }
                None => {
                    slot.insert((e.origin, e.dest), merged.len());
                    merged.push(e);
                }
            }
        }
        merged.sort_by_key(|e| (e.dest, e.origin));
        let mut dest_offsets = vec![0; n_zones + 1];
        for e in &merged {
            dest_offsets[e.dest + 1] += 1;
        }
        for i in 0..n_zones {
            dest_offsets[i + 1] += dest_offsets[i];
        }
        Ok((
            OdMatrix {
                window: window.into(),
                n_zones,
                entries: merged,
                dest_offsets,
            },
            stats,
        ))
    }

    pub fn window(&self) -> &str {
        &self.window
    }

    pub fn set_window(&mut self, window: impl Into<String>) {
        self.window = window.into();
    }

    pub fn n_zones(&self) -> usize {
        self.n_zones
    }

    /// Number of non-zero (origin, dest) entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[OdEntry] {
        &self.entries
    }

    /// All entries arriving at `dest`, origins ascending.
    pub fn column(&self, dest: usize) -> &[OdEntry] {
        &self.entries[self.dest_offsets[dest]..self.dest_offsets[dest + 1]]
    }

    pub fn get(&self, origin: usize, dest: usize) -> f64 {
        let col = self.column(dest);
        col.binary_search_by_key(&origin, |e| e.origin).map(|i| col[i].trips).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.trips).sum()
    }
}

/// Loads `origin_id,dest_id,trips`. Unknown zone ids and negative trips are
/// hard errors.
pub fn load_od(path: impl AsRef<Path>, zones: &ZoneSet) -> Result<(OdMatrix, OdLoadStats)> {
    let path = path.as_ref();
    let (mut rdr, cols) = open_csv(path, &["origin_id", "dest_id", "trips"])?;
    let mut raw = Vec::new();
    let mut unknown = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = line_of(&rec);
        let o = rec.get(cols[0]).unwrap_or("");
        let d = rec.get(cols[1]).unwrap_or("");
        let trips = parse_f64(rec.get(cols[2]).unwrap_or(""), "trips", line).map_err(|m| Error::parse(path, m))?;
        if trips < 0.0 {
            return Err(Error::parse(path, format!("line {line}: negative trips {trips}")));
        }
        match (zones.index_of(o), zones.index_of(d)) {
            (Some(origin), Some(dest)) => raw.push(OdEntry { origin, dest, trips }),
            (oi, di) => {
                if oi.is_none() {
                    unknown.insert(o.to_string());
                }
                if di.is_none() {
                    unknown.insert(d.to_string());
                }
            }
        }
    }
    if !unknown.is_empty() {
        let list: Vec<String> = unknown.into_iter().collect();
        return Err(Error::parse(path, format!("unknown zone ids: {}", list.join(", "))));
    }
    let (od, stats) = OdMatrix::from_entries(zones.len(), "", raw)?;
    if stats.duplicates_merged > 0 {
        log::warn!("{}: merged {} duplicate (origin, dest) rows", path.display(), stats.duplicates_merged);
    }
    log::info!("loaded {} OD entries (total {} trips) from {}", od.len(), od.total(), path.display());
    Ok((od, stats))
}

/// Writes the matrix as `origin_id,dest_id,trips`, ordered by destination
/// then origin index.
pub fn write_od_csv(od: &OdMatrix, zones: &ZoneSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["origin_id", "dest_id", "trips"])?;
    for e in od.entries() {
        w.write_record([zones.get(e.origin).id.as_str(), zones.get(e.dest).id.as_str(), &fmt_f64(e.trips)])?;
    }
    finish_csv(w, path)
}
