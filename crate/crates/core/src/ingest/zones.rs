use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Footprint, Point, Polygon, Ring};

/// One traffic analysis zone.
#[derive(Debug, Clone)]
pub struct Zone {
    pub id: String,
    pub footprint: Footprint,
    pub centroid: Point,
    pub area_m2: f64,
    bbox: BBox,
}

impl Zone {
    /// Builds a zone with a computed area-weighted centroid.
    pub fn new(id: impl Into<String>, footprint: Footprint) -> Self {
        let centroid = footprint.centroid();
        Self::with_centroid(id, footprint, centroid)
    }

    pub fn with_centroid(id: impl Into<String>, footprint: Footprint, centroid: Point) -> Self {
        let area_m2 = footprint.area();
        let bbox = footprint.bbox();
        Zone {
            id: id.into(),
            footprint,
            centroid,
            area_m2,
            bbox,
        }
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bbox.contains(p) && self.footprint.contains(p)
    }
}

/// Result of locating a point among the zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Located {
    pub zone: Option<usize>,
    /// More than one polygon contained the point; the first in file order won.
    pub overlapped: bool,
}

/// Zones in file order with a by-id index.
#[derive(Debug, Clone)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    index: HashMap<String, usize>,
}

impl ZoneSet {
    pub fn new(zones: Vec<Zone>) -> Result<Self> {
        let mut index = HashMap::with_capacity(zones.len());
        for (i, z) in zones.iter().enumerate() {
            if z.id.is_empty() {
                return Err(Error::Validation(format!("zone #{i} has an empty id")));
            }
            if index.insert(z.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate zone id {:?}", z.id)));
            }
            if z.footprint.polygons.is_empty() {
                return Err(Error::Validation(format!("zone {:?} has no polygon", z.id)));
            }
            for ring in z.footprint.polygons.iter().flat_map(|p| p.rings()) {
                if ring.len() < 3 {
                    return Err(Error::Validation(format!(
                        "zone {:?} has a ring with fewer than 3 vertices",
                        z.id
                    )));
                }
                if ring.iter().any(|p| !p.is_finite()) {
                    return Err(Error::Validation(format!("zone {:?} has non-finite coordinates", z.id)));
                }
            }
            if !z.bbox.contains(z.centroid) {
                return Err(Error::Validation(format!(
                    "zone {:?} centroid ({}, {}) lies outside its bounding box",
                    z.id, z.centroid.x, z.centroid.y
                )));
            }
        }
        Ok(ZoneSet { zones, index })
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn get(&self, i: usize) -> &Zone {
        &self.zones[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&Zone> {
        self.index_of(id).map(|i| &self.zones[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Zone> {
        self.zones.iter()
    }

    /// Zone indices ordered by ascending zone id.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.zones.len()).collect();
        idx.sort_by(|&a, &b| self.zones[a].id.cmp(&self.zones[b].id));
        idx
    }

    /// First zone in file order whose footprint contains `p`.
    pub fn locate(&self, p: Point) -> Located {
        let mut hits = self.zones.iter().enumerate().filter(|(_, z)| z.contains(p));
        let zone = hits.next().map(|(i, _)| i);
        let overlapped = zone.is_some() && hits.next().is_some();
        Located { zone, overlapped }
    }
}

pub fn load_zones(path: impl AsRef<Path>) -> Result<ZoneSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let zones = parse_zones_geojson(&text).map_err(|m| Error::parse(path, m))?;
    log::info!("loaded {} zones from {}", zones.len(), path.display());
    Ok(zones)
}

/// Parses a GeoJSON FeatureCollection of Polygon/MultiPolygon features that
/// carry an `id` property (string or integer). Optional numeric properties
/// `centroid_x` / `centroid_y` override the computed centroid.
pub fn parse_zones_geojson(text: &str) -> std::result::Result<ZoneSet, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err("expected a GeoJSON FeatureCollection".into());
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or("FeatureCollection has no `features` array")?;

    let mut zones = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = feature.get("properties").and_then(Value::as_object);
        let id = match props.and_then(|p| p.get("id")) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) if n.is_i64() || n.is_u64() => n.to_string(),
            Some(_) => return Err(format!("feature {i}: `id` property must be a string")),
            None => return Err(format!("feature {i}: missing `id` property")),
        };
        let geometry = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| format!("feature {i} ({id}): missing geometry"))?;
        let polygons = parse_geometry(geometry).map_err(|m| format!("feature {i} ({id}): {m}"))?;
        let footprint = Footprint::new(polygons);

        let supplied = props.and_then(|p| {
            let x = p.get("centroid_x").and_then(Value::as_f64)?;
            let y = p.get("centroid_y").and_then(Value::as_f64)?;
            Some(Point::new(x, y))
        });
        let zone = match supplied {
            Some(c) => Zone::with_centroid(id, footprint, c),
            None => Zone::new(id, footprint),
        };
        zones.push(zone);
    }
    ZoneSet::new(zones).map_err(|e| e.to_string())
}

fn parse_geometry(g: &Value) -> std::result::Result<Vec<Polygon>, String> {
    let kind = g.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = g.get("coordinates").ok_or("geometry has no coordinates")?;
    match kind {
        "Polygon" => Ok(vec![parse_polygon(coords)?]),
        "MultiPolygon" => coords
            .as_array()
            .ok_or("MultiPolygon coordinates must be an array")?
            .iter()
            .map(parse_polygon)
            .collect(),
        other => Err(format!("unsupported geometry type {other:?}; expected Polygon or MultiPolygon")),
    }
}

fn parse_polygon(v: &Value) -> std::result::Result<Polygon, String> {
    let rings = v.as_array().ok_or("polygon must be an array of rings")?;
    let mut rings = rings.iter().map(parse_ring);
    let exterior = rings.next().ok_or("polygon has no rings")??;
    let holes = rings.collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Polygon::new(exterior, holes))
}

fn parse_ring(v: &Value) -> std::result::Result<Ring, String> {
    let pts = v.as_array().ok_or("ring must be an array of positions")?;
    let mut ring = Vec::with_capacity(pts.len());
    for p in pts {
        let xy = p.as_array().ok_or("position must be an array")?;
        let x = xy.first().and_then(Value::as_f64);
        let y = xy.get(1).and_then(Value::as_f64);
        match (x, y) {
            (Some(x), Some(y)) => ring.push(Point::new(x, y)),
            _ => return Err("position must hold two numbers".into()),
        }
    }
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(format!("ring has {} distinct vertices, need at least 3", ring.len()));
    }
    Ok(ring)
}

fn ring_json(ring: &Ring) -> Value {
    let mut pts: Vec<Value> = ring.iter().map(|p| json!([p.x, p.y])).collect();
    if let Some(first) = ring.first() {
        pts.push(json!([first.x, first.y]));
    }
    Value::Array(pts)
}

fn footprint_json(f: &Footprint) -> Value {
    let polys: Vec<Value> = f
        .polygons
        .iter()
        .map(|p| Value::Array(p.rings().map(ring_json).collect()))
        .collect();
    if polys.len() == 1 {
        json!({ "type": "Polygon", "coordinates": polys[0] })
    } else {
        json!({ "type": "MultiPolygon", "coordinates": polys })
    }
}

/// Serializes the given zones as a FeatureCollection. `props` supplies extra
/// properties per zone; `id` is always set.
pub fn zones_to_geojson<'a, I, F>(zones: I, mut props: F) -> String
where
    I: IntoIterator<Item = &'a Zone>,
    F: FnMut(&Zone) -> Map<String, Value>,
{
    let features: Vec<Value> = zones
        .into_iter()
        .map(|z| {
            let mut p = Map::new();
            p.insert("id".into(), Value::String(z.id.clone()));
            p.extend(props(z));
            json!({ "type": "Feature", "properties": p, "geometry": footprint_json(&z.footprint) })
        })
        .collect();
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let mut s = serde_json::to_string(&doc).expect("geojson serialization");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_feature(id: &str, x0: f64, y0: f64, side: f64) -> String {
        format!(
            r#"{{"type":"Feature","properties":{{"id":"{id}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#,
            x1 = x0 + side,
            y1 = y0 + side
        )
    }

    fn collection(features: &[String]) -> String {
        format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
    }

    #[test]
    fn three_polygons_three_centroids() {
        let text = collection(&[
            square_feature("A", 0.0, 0.0, 2.0),
            square_feature("B", 2.0, 0.0, 2.0),
            square_feature("C", 4.0, 0.0, 2.0),
        ]);
        let zs = parse_zones_geojson(&text).unwrap();
        assert_eq!(zs.len(), 3);
        let c: Vec<Point> = zs.iter().map(|z| z.centroid).collect();
        assert_eq!(c, vec![Point::new(1.0, 1.0), Point::new(3.0, 1.0), Point::new(5.0, 1.0)]);
        assert_eq!(zs.by_id("B").unwrap().area_m2, 4.0);
    }

    #[test]
    fn missing_id_names_feature_index() {
        let text = collection(&[
            square_feature("A", 0.0, 0.0, 2.0),
            r#"{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}"#.into(),
        ]);
        let err = parse_zones_geojson(&text).unwrap_err();
        assert!(err.contains("feature 1"), "{err}");
        assert!(err.contains("id"), "{err}");
    }

    #[test]
    fn non_polygon_geometry_rejected() {
        let text = collection(&[
            r#"{"type":"Feature","properties":{"id":"P"},"geometry":{"type":"Point","coordinates":[0,0]}}"#.into(),
        ]);
        let err = parse_zones_geojson(&text).unwrap_err();
        assert!(err.contains("Point"), "{err}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = collection(&[square_feature("A", 0.0, 0.0, 2.0), square_feature("A", 2.0, 0.0, 2.0)]);
        let err = parse_zones_geojson(&text).unwrap_err();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn degenerate_ring_rejected() {
        let text = collection(&[
            r#"{"type":"Feature","properties":{"id":"A"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[0,0]]]}}"#.into(),
        ]);
        assert!(parse_zones_geojson(&text).is_err());
    }

    #[test]
    fn geojson_round_trip() {
        let text = collection(&[square_feature("A", 0.0, 0.0, 2.0), square_feature("B", 2.0, 0.0, 2.0)]);
        let zs = parse_zones_geojson(&text).unwrap();
        let out = zones_to_geojson(zs.iter(), |_| Map::new());
        let again = parse_zones_geojson(&out).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(again.get(1).footprint, zs.get(1).footprint);
    }

    #[test]
    fn overlapping_polygons_first_match_wins() {
        let text = collection(&[square_feature("A", 0.0, 0.0, 2.0), square_feature("B", 1.0, 0.0, 2.0)]);
        let zs = parse_zones_geojson(&text).unwrap();
        let hit = zs.locate(Point::new(1.5, 1.0));
        assert_eq!(hit, Located { zone: Some(0), overlapped: true });
        let hit = zs.locate(Point::new(2.5, 1.0));
        assert_eq!(hit, Located { zone: Some(1), overlapped: false });
    }
}
