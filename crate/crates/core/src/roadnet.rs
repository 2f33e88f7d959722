//! Road graph construction, zone snapping and shortest road distances from
//! every trip origin to a destination zone.
//!
//! Distances for one destination come from a single Dijkstra run over the
//! edge-reversed graph rooted at the destination's anchor node: the distance
//! label of node `v` in that run is the forward distance `v -> dest`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ingest::{fmt_f64, OdMatrix, RoadGraphSpec, ZoneSet};

pub const DEFAULT_MAX_SNAP_M: f64 = 5000.0;

/// Compressed adjacency: arcs of node `u` live in `offsets[u]..offsets[u+1]`.
#[derive(Debug, Clone, PartialEq)]
struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    fn from_arcs(n: usize, arcs: &[(usize, usize, f64)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(u, _, _) in arcs {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0; arcs.len()];
        let mut weights = vec![0.0; arcs.len()];
        for &(u, v, w) in arcs {
            targets[fill[u]] = v;
            weights[fill[u]] = w;
            fill[u] += 1;
        }
        Adjacency { offsets, targets, weights }
    }

    fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.targets[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }
}

/// Immutable weighted digraph with its exact transpose.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    ids: Vec<String>,
    coords: Vec<Point>,
    index: HashMap<String, usize>,
    arcs: Vec<(usize, usize, f64)>,
    forward: Adjacency,
    reverse: Adjacency,
}

impl RoadGraph {
    /// Indexes a validated spec. Two-way edges become two arcs.
    pub fn build(spec: &RoadGraphSpec) -> Result<Self> {
        spec.validate()?;
        let ids: Vec<String> = spec.nodes.iter().map(|(id, _)| id.clone()).collect();
        let coords: Vec<Point> = spec.nodes.iter().map(|(_, p)| *p).collect();
        let index: HashMap<String, usize> = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut arcs = Vec::with_capacity(spec.edges.len() * 2);
        for e in &spec.edges {
            let (u, v) = (index[&e.u], index[&e.v]);
            arcs.push((u, v, e.length_m));
            if !e.oneway {
                arcs.push((v, u, e.length_m));
            }
        }
        Self::from_parts(ids, coords, arcs)
    }

    /// Builds from raw arcs over node indices `0..ids.len()`.
    pub fn from_parts(ids: Vec<String>, coords: Vec<Point>, arcs: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = ids.len();
        if coords.len() != n {
            return Err(Error::Internal("node ids and coordinates differ in length".into()));
        }
        for &(u, v, w) in &arcs {
            if u >= n || v >= n {
                return Err(Error::Validation(format!("arc {u}->{v} references a node outside 0..{n}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Validation(format!("arc {u}->{v} has non-positive weight {w}")));
            }
        }
        let forward = Adjacency::from_arcs(n, &arcs);
        let flipped: Vec<(usize, usize, f64)> = arcs.iter().map(|&(u, v, w)| (v, u, w)).collect();
        let reverse = Adjacency::from_arcs(n, &flipped);
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(RoadGraph {
            ids,
            coords,
            index,
            arcs,
            forward,
            reverse,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn coord(&self, i: usize) -> Point {
        self.coords[i]
    }

    pub fn out_arcs(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.forward.neighbors(u)
    }

    pub fn in_arcs(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.reverse.neighbors(v)
    }

    /// Arcs as `(u, v, weight)` in build order.
    pub fn arcs(&self) -> &[(usize, usize, f64)] {
        &self.arcs
    }

    /// Shortest distances from `source` to every node (`INFINITY` when
    /// unreachable).
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        dijkstra(&self.forward, source)
    }

    /// Shortest distances from every node to `target`.
    pub fn reverse_dijkstra(&self, target: usize) -> Vec<f64> {
        dijkstra(&self.reverse, target)
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update((self.ids.len() as u64).to_le_bytes());
        for (id, p) in self.ids.iter().zip(&self.coords) {
            h.update(id.as_bytes());
            h.update([0]);
            h.update(p.x.to_bits().to_le_bytes());
            h.update(p.y.to_bits().to_le_bytes());
        }
        for &(u, v, w) in &self.arcs {
            h.update((u as u64).to_le_bytes());
            h.update((v as u64).to_le_bytes());
            h.update(w.to_bits().to_le_bytes());
        }
    }
}

#[derive(Copy, Clone)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &Adjacency, source: usize) -> Vec<f64> {
    let n = adj.offsets.len() - 1;
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem { dist: 0.0, node: source });
    while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for (v, w) in adj.neighbors(u) {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem { dist: nd, node: v });
            }
        }
    }
    dist
}

/// Where a zone's centroid meets the road graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneAnchor {
    pub zone: usize,
    pub zone_id: String,
    pub node: usize,
    pub snap_distance_m: f64,
}

/// Maps every zone centroid to its Euclidean-nearest graph node, breaking
/// ties by the smallest node id.
pub fn snap_zones(zones: &ZoneSet, graph: &RoadGraph, max_snap_m: f64) -> Result<Vec<ZoneAnchor>> {
    if graph.node_count() == 0 {
        return Err(Error::Validation("road graph has no nodes".into()));
    }
    zones
        .iter()
        .enumerate()
        .map(|(zi, zone)| {
            let c = zone.centroid;
            let mut best = 0;
            let mut best_d2 = c.distance_sq(&graph.coord(0));
            for i in 1..graph.node_count() {
                let d2 = c.distance_sq(&graph.coord(i));
                if d2 < best_d2 || (d2 == best_d2 && graph.node_id(i) < graph.node_id(best)) {
                    best = i;
                    best_d2 = d2;
                }
            }
            let snap = best_d2.sqrt();
            if snap > max_snap_m {
                return Err(Error::Validation(format!(
                    "zone {:?}: nearest road node {:?} is {snap:.1} m away (max_snap_m = {max_snap_m})",
                    zone.id,
                    graph.node_id(best)
                )));
            }
            Ok(ZoneAnchor {
                zone: zi,
                zone_id: zone.id.clone(),
                node: best,
                snap_distance_m: snap,
            })
        })
        .collect()
}

/// Shortest road distances from origin zones to one destination zone.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceColumn {
    pub dest: usize,
    /// origin zone index -> meters; unreachable origins are absent.
    pub dist_m: BTreeMap<usize, f64>,
    /// Origins that were requested but cannot reach the destination.
    pub unreachable: Vec<usize>,
}

impl DistanceColumn {
    fn collect(dest: usize, origins: impl Iterator<Item = usize>, mut lookup: impl FnMut(usize) -> Option<f64>) -> Self {
        let mut dist_m = BTreeMap::new();
        let mut unreachable = Vec::new();
        for o in origins {
            match lookup(o) {
                Some(d) => {
                    dist_m.insert(o, d);
                }
                None => unreachable.push(o),
            }
        }
        DistanceColumn {
            dest,
            dist_m,
            unreachable,
        }
    }

    pub fn get(&self, origin: usize) -> Option<f64> {
        self.dist_m.get(&origin).copied()
    }
}

fn check_anchors(anchors: &[ZoneAnchor], dest: usize) -> Result<()> {
    match anchors.get(dest) {
        Some(a) if a.zone == dest => Ok(()),
        _ => Err(Error::Internal(format!("zone #{dest} has no anchor"))),
    }
}

/// Distances to `dest` from every origin that sends trips to it.
pub fn distances_to(dest: usize, anchors: &[ZoneAnchor], graph: &RoadGraph, od: &OdMatrix) -> Result<DistanceColumn> {
    check_anchors(anchors, dest)?;
    let labels = graph.reverse_dijkstra(anchors[dest].node);
    let origins = od.column(dest).iter().map(|e| e.origin);
    Ok(DistanceColumn::collect(dest, origins, |o| finite(labels[anchors[o].node])))
}

/// Distances to `dest` from every anchored zone.
pub fn distances_to_all(dest: usize, anchors: &[ZoneAnchor], graph: &RoadGraph) -> Result<DistanceColumn> {
    check_anchors(anchors, dest)?;
    let labels = graph.reverse_dijkstra(anchors[dest].node);
    Ok(DistanceColumn::collect(dest, 0..anchors.len(), |o| finite(labels[anchors[o].node])))
}

/// One column per destination, computed in parallel on the current rayon
/// pool. Output order follows `dests`.
pub fn distance_columns(dests: &[usize], anchors: &[ZoneAnchor], graph: &RoadGraph, od: &OdMatrix) -> Result<Vec<DistanceColumn>> {
    dests.par_iter().map(|&d| distances_to(d, anchors, graph, od)).collect()
}

fn finite(d: f64) -> Option<f64> {
    d.is_finite().then_some(d)
}

/// Content hash of the graph plus the zone anchoring; keys the distance cache.
pub fn cache_key(graph: &RoadGraph, anchors: &[ZoneAnchor]) -> String {
    let mut h = Sha256::new();
    graph.hash_into(&mut h);
    for a in anchors {
        h.update(a.zone_id.as_bytes());
        h.update([0]);
        h.update(graph.node_id(a.node).as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

const CACHE_PREFIX: &str = "# graph_hash=";

/// Writes `dest_id,origin_id,dist_m` under a `# graph_hash=` header line.
pub fn write_distance_cache(path: impl AsRef<Path>, key: &str, columns: &[DistanceColumn], zones: &ZoneSet) -> Result<()> {
    let path = path.as_ref();
    crate::ingest::write_text(path, &format!("{CACHE_PREFIX}{key}\n"))?;
    let file = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(["dest_id", "origin_id", "dist_m"])?;
    for col in columns {
        for (&o, &d) in &col.dist_m {
            w.write_record([zones.get(col.dest).id.as_str(), zones.get(o).id.as_str(), &fmt_f64(d)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a cache written by [`write_distance_cache`]. Returns `None` when the
/// file is missing, stale (hash mismatch) or lacks one of `dests`.
pub fn read_distance_cache(
    path: impl AsRef<Path>,
    key: &str,
    dests: &[usize],
    zones: &ZoneSet,
    od: &OdMatrix,
) -> Result<Option<Vec<DistanceColumn>>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim_end().strip_prefix(CACHE_PREFIX) != Some(key) {
        log::info!("distance cache {} is stale; recomputing", path.display());
        return Ok(None);
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let cols = crate::ingest::column_positions(&rdr.headers()?.clone(), &["dest_id", "origin_id", "dist_m"])
        .map_err(|m| Error::parse(path, m))?;
    let mut table: HashMap<usize, HashMap<usize, f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let (Some(d), Some(o)) = (zones.index_of(&rec[cols[0]]), zones.index_of(&rec[cols[1]])) else {
            return Ok(None);
        };
        let dist = crate::ingest::parse_f64(&rec[cols[2]], "dist_m", crate::ingest::line_of(&rec))
            .map_err(|m| Error::parse(path, m))?;
        table.entry(d).or_default().insert(o, dist);
    }
    let mut out = Vec::with_capacity(dests.len());
    for &d in dests {
        let Some(known) = table.get(&d) else {
            return Ok(None);
        };
        let origins = od.column(d).iter().map(|e| e.origin);
        out.push(DistanceColumn::collect(d, origins, |o| known.get(&o).copied()));
    }
    Ok(Some(out))
}
