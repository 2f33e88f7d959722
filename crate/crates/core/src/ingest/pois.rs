use std::collections::BTreeSet;
use std::path::Path;

use super::{csv_writer, finish_csv, fmt_f64, line_of, open_csv, parse_f64, ZoneSet};
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord {
    pub id: String,
    pub poi_type: String,
    pub location: Point,
    /// Containing zone, `None` when the POI falls outside every polygon.
    pub zone: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PoiTable {
    records: Vec<PoiRecord>,
    vocabulary: Vec<String>,
    unassigned: usize,
    overlaps: usize,
}

impl PoiTable {
    /// Resolves each `(id, type, location)` to its containing zone.
    pub fn from_points(points: Vec<(String, String, Point)>, zones: &ZoneSet) -> Result<Self> {
        let mut records = Vec::with_capacity(points.len());
        let mut vocab = BTreeSet::new();
        let (mut unassigned, mut overlaps) = (0, 0);
        for (id, poi_type, location) in points {
            if poi_type.is_empty() {
                return Err(Error::Validation(format!("POI {id:?} has an empty type")));
            }
            let hit = zones.locate(location);
            if hit.zone.is_none() {
                unassigned += 1;
            }
            if hit.overlapped {
                overlaps += 1;
            }
            vocab.insert(poi_type.clone());
            records.push(PoiRecord {
                id,
                poi_type,
                location,
                zone: hit.zone,
            });
        }
        if overlaps > 0 {
            log::warn!("{overlaps} POIs fall inside overlapping zones; first zone in file order was used");
        }
        if unassigned > 0 {
            log::warn!("{unassigned} POIs lie outside every zone and are excluded");
        }
        Ok(PoiTable {
            records,
            vocabulary: vocab.into_iter().collect(),
            unassigned,
            overlaps,
        })
    }

    pub fn records(&self) -> &[PoiRecord] {
        &self.records
    }

    /// POIs that resolved to a zone, with that zone's index.
    pub fn assigned(&self) -> impl Iterator<Item = (&PoiRecord, usize)> {
        self.records.iter().filter_map(|r| r.zone.map(|z| (r, z)))
    }

    /// Sorted distinct POI types.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn unassigned_count(&self) -> usize {
        self.unassigned
    }

    pub fn overlap_count(&self) -> usize {
        self.overlaps
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Loads `poi_id,poi_type,x,y` and assigns each POI to a zone.
pub fn load_pois(path: impl AsRef<Path>, zones: &ZoneSet) -> Result<PoiTable> {
    let path = path.as_ref();
    let (mut rdr, cols) = open_csv(path, &["poi_id", "poi_type", "x", "y"])?;
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = line_of(&rec);
        let field = |i: usize| rec.get(cols[i]).unwrap_or("");
        let x = parse_f64(field(2), "x coordinate", line).map_err(|m| Error::parse(path, m))?;
        let y = parse_f64(field(3), "y coordinate", line).map_err(|m| Error::parse(path, m))?;
        if field(1).is_empty() {
            return Err(Error::parse(path, format!("line {line}: empty poi_type")));
        }
        points.push((field(0).to_string(), field(1).to_string(), Point::new(x, y)));
    }
    let table = PoiTable::from_points(points, zones)?;
    log::info!(
        "loaded {} POIs of {} types ({} unassigned) from {}",
        table.len(),
        table.vocabulary().len(),
        table.unassigned_count(),
        path.display()
    );
    Ok(table)
}

pub fn write_pois_csv(pois: &PoiTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["poi_id", "poi_type", "x", "y"])?;
    for r in pois.records() {
        w.write_record([r.id.as_str(), r.poi_type.as_str(), &fmt_f64(r.location.x), &fmt_f64(r.location.y)])?;
    }
    finish_csv(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Footprint, Polygon};
    use crate::ingest::Zone;
    use std::io::Write;

    fn unit_square_zone() -> ZoneSet {
        let sq = vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(2.0, 2.0), Point::new(0.0, 2.0)];
        ZoneSet::new(vec![Zone::new("sq", Footprint::new(vec![Polygon::new(sq, vec![])]))]).unwrap()
    }

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "poi_id,poi_type,x,y\n{body}").unwrap();
        f
    }

    #[test]
    fn inside_and_outside() {
        let zs = unit_square_zone();
        let f = csv_file("p1,school,1,1\np2,school,100,100\n");
        let t = load_pois(f.path(), &zs).unwrap();
        assert_eq!(t.records()[0].zone, Some(0));
        assert_eq!(t.records()[1].zone, None);
        assert_eq!(t.unassigned_count(), 1);
        assert_eq!(t.assigned().count(), 1);
    }

    #[test]
    fn vocabulary_counts_distinct_types() {
        let zs = unit_square_zone();
        let body: String = (0..46).map(|i| format!("p{i},type{:02},1,1\n", i % 23)).collect();
        let f = csv_file(&body);
        let t = load_pois(f.path(), &zs).unwrap();
        assert_eq!(t.vocabulary().len(), 23);
    }

    #[test]
    fn malformed_coordinate_reports_line() {
        let zs = unit_square_zone();
        let f = csv_file("p1,school,1,1\np2,school,abc,1\n");
        let err = load_pois(f.path(), &zs).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
