use std::collections::HashSet;
use std::path::Path;

use super::{csv_writer, finish_csv, fmt_f64, line_of, open_csv, parse_f64};
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct RoadEdge {
    pub u: String,
    pub v: String,
    pub length_m: f64,
    /// `false` emits both directions.
    pub oneway: bool,
}

/// Road network as read from disk, before indexing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadGraphSpec {
    pub nodes: Vec<(String, Point)>,
    pub edges: Vec<RoadEdge>,
}

impl RoadGraphSpec {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.nodes.len());
        for (id, p) in &self.nodes {
            if !ids.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate road node id {id:?}")));
            }
            if !p.is_finite() {
                return Err(Error::Validation(format!("road node {id:?} has non-finite coordinates")));
            }
        }
        for e in &self.edges {
            if !(e.length_m > 0.0 && e.length_m.is_finite()) {
                return Err(Error::Validation(format!("edge {}->{} has non-positive length {}", e.u, e.v, e.length_m)));
            }
            if e.u == e.v {
                return Err(Error::Validation(format!("edge {}->{} is a self-loop", e.u, e.v)));
            }
            for end in [&e.u, &e.v] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::Validation(format!("edge {}->{} references unknown node {end:?}", e.u, e.v)));
                }
            }
        }
        Ok(())
    }
}

/// Loads nodes (`node_id,x,y`) and edges (`u,v,length_m,oneway`).
pub fn load_roadnet(nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<RoadGraphSpec> {
    let nodes_path = nodes_path.as_ref();
    let edges_path = edges_path.as_ref();
    let mut spec = RoadGraphSpec::default();

    let (mut rdr, cols) = open_csv(nodes_path, &["node_id", "x", "y"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(nodes_path, e.to_string()))?;
        let line = line_of(&rec);
        let x = parse_f64(rec.get(cols[1]).unwrap_or(""), "x", line).map_err(|m| Error::parse(nodes_path, m))?;
        let y = parse_f64(rec.get(cols[2]).unwrap_or(""), "y", line).map_err(|m| Error::parse(nodes_path, m))?;
        spec.nodes.push((rec.get(cols[0]).unwrap_or("").to_string(), Point::new(x, y)));
    }

    let (mut rdr, cols) = open_csv(edges_path, &["u", "v", "length_m", "oneway"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(edges_path, e.to_string()))?;
        let line = line_of(&rec);
        let length_m =
            parse_f64(rec.get(cols[2]).unwrap_or(""), "length_m", line).map_err(|m| Error::parse(edges_path, m))?;
        let oneway = match rec.get(cols[3]).unwrap_or("") {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(edges_path, format!("line {line}: oneway must be 0 or 1, got {other:?}"))),
        };
        spec.edges.push(RoadEdge {
            u: rec.get(cols[0]).unwrap_or("").to_string(),
            v: rec.get(cols[1]).unwrap_or("").to_string(),
            length_m,
            oneway,
        });
    }
    spec.validate()?;
    log::info!("loaded road network: {} nodes, {} edges", spec.nodes.len(), spec.edges.len());
    Ok(spec)
}

pub fn write_roadnet(spec: &RoadGraphSpec, nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<()> {
    let nodes_path = nodes_path.as_ref();
    let mut w = csv_writer(nodes_path)?;
    w.write_record(["node_id", "x", "y"])?;
    for (id, p) in &spec.nodes {
        w.write_record([id.as_str(), &fmt_f64(p.x), &fmt_f64(p.y)])?;
    }
    finish_csv(w, nodes_path)?;

    let edges_path = edges_path.as_ref();
    let mut w = csv_writer(edges_path)?;
    w.write_record(["u", "v", "length_m", "oneway"])?;
    for e in &spec.edges {
        w.write_record([e.u.as_str(), e.v.as_str(), &fmt_f64(e.length_m), if e.oneway { "1" } else { "0" }])?;
    }
    finish_csv(w, edges_path)
}
