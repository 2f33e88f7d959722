//! Seeded synthetic cities with planted Global, Downtown and Residential
//! attractors, written in the same file formats the loaders read.

use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::Archetype;
use crate::error::{Error, Result};
use crate::geometry::{Footprint, Point, Polygon};
use crate::ingest::{
    csv_writer, finish_csv, write_od_csv, write_pois_csv, write_roadnet, write_text, zones_to_geojson, OdEntry, OdMatrix,
    PoiTable, RoadEdge, RoadGraphSpec, Zone, ZoneSet,
};
use crate::pipeline::PipelineConfig;

/// The default 23-type POI vocabulary.
pub const DEFAULT_POI_TYPES: [&str; 23] = [
    "airport",
    "bank",
    "cafe",
    "clinic",
    "embassy",
    "factory",
    "fuel_station",
    "furnished_apartment",
    "government_office",
    "grocery",
    "hospital",
    "hotel",
    "mosque",
    "museum",
    "office",
    "park",
    "pharmacy",
    "private_school",
    "public_school",
    "restaurant",
    "shopping_mall",
    "sports_club",
    "university",
];

/// POI types drawn more often inside zones of one archetype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiPlant {
    pub archetype: Archetype,
    pub poi_types: Vec<String>,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_zones: usize,
    /// Side of the square city.
    pub grid_extent_m: f64,
    pub n_global: usize,
    pub downtown_radius_m: f64,
    pub flow_scale: f64,
    /// Length scale of the exponential origin decay for Downtown zones.
    pub downtown_decay_m: f64,
    pub residential_decay_m: f64,
    /// Origin weights are multiplied by U(1 − noise, 1 + noise).
    pub flow_noise: f64,
    /// Road lattice spacing; defaults to the zone pitch.
    pub road_spacing_m: Option<f64>,
    pub pois_per_zone: usize,
    pub poi_types: Vec<String>,
    pub poi_plant: Vec<PoiPlant>,
    pub window: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let plant = |a: Archetype, types: &[&str]| PoiPlant {
            archetype: a,
            poi_types: types.iter().map(|s| s.to_string()).collect(),
            multiplier: 5.0,
        };
        SynthConfig {
            seed: 0,
            n_zones: 400,
            grid_extent_m: 40_000.0,
            n_global: 12,
            downtown_radius_m: 7_000.0,
            flow_scale: 100.0,
            downtown_decay_m: 1_000.0,
            residential_decay_m: 4_000.0,
            flow_noise: 0.5,
            road_spacing_m: None,
            pois_per_zone: 30,
            poi_types: DEFAULT_POI_TYPES.iter().map(|s| s.to_string()).collect(),
            poi_plant: vec![
                plant(Archetype::Global, &["factory", "embassy", "university", "hospital"]),
                plant(Archetype::Downtown, &["office", "bank", "shopping_mall"]),
                plant(Archetype::Residential, &["furnished_apartment", "mosque", "public_school"]),
            ],
            window: "synthetic_weekday_0700_1000".into(),
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        SynthConfig { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_zones < 2 {
            return bad(format!("n_zones must be at least 2, got {}", self.n_zones));
        }
        if self.n_global < 1 || self.n_global > self.n_zones {
            return bad(format!("n_global = {} must lie in 1..={}", self.n_global, self.n_zones));
        }
        if !(self.grid_extent_m > 0.0 && self.grid_extent_m.is_finite()) {
            return bad(format!("grid_extent_m must be positive, got {}", self.grid_extent_m));
        }
        if !(self.downtown_radius_m >= 0.0 && self.downtown_radius_m < self.grid_extent_m) {
            return bad(format!("downtown_radius_m must lie in [0, grid_extent_m), got {}", self.downtown_radius_m));
        }
        if !(self.flow_scale > 0.0 && self.flow_scale.is_finite()) {
            return bad(format!("flow_scale must be positive, got {}", self.flow_scale));
        }
        if !(self.downtown_decay_m > 0.0 && self.residential_decay_m > 0.0) {
            return bad("decay lengths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.flow_noise) {
            return bad(format!("flow_noise must lie in [0, 1), got {}", self.flow_noise));
        }
        if let Some(s) = self.road_spacing_m {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("road_spacing_m must be positive, got {s}"));
            }
        }
        if self.poi_types.is_empty() || self.poi_types.iter().any(String::is_empty) {
            return bad("poi_types must be non-empty strings".into());
        }
        for p in &self.poi_plant {
            if !(p.multiplier > 0.0 && p.multiplier.is_finite()) {
                return bad(format!("plant multiplier must be positive, got {}", p.multiplier));
            }
            if let Some(t) = p.poi_types.iter().find(|t| !self.poi_types.contains(t)) {
                return bad(format!("planted type {t:?} is not in poi_types"));
            }
        }
        Ok(())
    }
}

/// A generated city. `truth` is indexed like the zone set.
#[derive(Debug, Clone)]
pub struct SynthCity {
    pub zones: ZoneSet,
    pub od: OdMatrix,
    pub roads: RoadGraphSpec,
    pub pois: PoiTable,
    pub truth: Vec<Archetype>,
}

struct Grid {
    cols: usize,
    rows: usize,
    pitch: f64,
}

impl Grid {
    fn new(n: usize, extent: f64) -> Self {
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        Grid {
            cols,
            rows,
            pitch: extent / cols as f64,
        }
    }

    fn cell(&self, i: usize) -> (usize, usize) {
        (i % self.cols, i / self.cols)
    }

    fn centroid(&self, i: usize) -> Point {
        let (c, r) = self.cell(i);
        Point::new((c as f64 + 0.5) * self.pitch, (r as f64 + 0.5) * self.pitch)
    }

    fn square(&self, i: usize) -> Footprint {
        let (c, r) = self.cell(i);
        let (x0, y0) = (c as f64 * self.pitch, r as f64 * self.pitch);
        let (x1, y1) = ((c + 1) as f64 * self.pitch, (r + 1) as f64 * self.pitch);
        let ring = vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)];
        Footprint::new(vec![Polygon::new(ring, vec![])])
    }
}

fn width(n: usize, min: usize) -> usize {
    (n.max(1) - 1).to_string().len().max(min)
}

/// Decay below this is treated as no flow.
const MIN_DECAY: f64 = 1e-6;

pub fn generate(config: &SynthConfig) -> Result<SynthCity> {
    config.validate()?;
    let n = config.n_zones;
    let grid = Grid::new(n, config.grid_extent_m);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let zw = width(n, 4);
    let zones = ZoneSet::new((0..n).map(|i| Zone::new(format!("z{i:0zw$}"), grid.square(i))).collect())?;
    let centroids: Vec<Point> = (0..n).map(|i| grid.centroid(i)).collect();

    let center = Point::new(config.grid_extent_m / 2.0, config.grid_extent_m / 2.0);
    let mut truth: Vec<Archetype> = centroids
        .iter()
        .map(|c| {
            if c.distance(&center) < config.downtown_radius_m {
                Archetype::Downtown
            } else {
                Archetype::Residential
            }
        })
        .collect();
    let candidates: Vec<usize> = (0..n).filter(|&i| truth[i] != Archetype::Downtown).collect();
    if config.n_global > candidates.len() {
        return Err(Error::Config(format!(
            "n_global = {} exceeds the {} zones outside downtown",
            config.n_global,
            candidates.len()
        )));
    }
    for &g in candidates.choose_multiple(&mut rng, config.n_global) {
        truth[g] = Archetype::Global;
    }

    let fs = config.flow_scale;
    let (lo, hi) = (1.0 - config.flow_noise, 1.0 + config.flow_noise);
    let mut entries = Vec::new();
    let mut weights = vec![0.0; n];
    for d in 0..n {
        let (inflow, decay) = match truth[d] {
            Archetype::Global => (rng.gen_range(100.0..200.0) * fs, None),
            Archetype::Downtown => (rng.gen_range(50.0..100.0) * fs, Some(config.downtown_decay_m)),
            _ => (rng.gen_range(1.0..10.0) * fs, Some(config.residential_decay_m)),
        };
        for (o, w) in weights.iter_mut().enumerate() {
            let u = if lo < hi { rng.gen_range(lo..hi) } else { 1.0 };
            let shape = match decay {
                None => 1.0,
                Some(l) => {
                    let (a, b) = (centroids[o], centroids[d]);
                    let manhattan = (a.x - b.x).abs() + (a.y - b.y).abs();
                    let e = (-manhattan / l).exp();
                    if e < MIN_DECAY {
                        0.0
                    } else {
                        e
                    }
                }
            };
            *w = if o == d { 0.0 } else { shape * u };
        }
        let total: f64 = weights.iter().sum();
        for (o, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                let trips = (inflow * w / total * 1000.0).round() / 1000.0;
                if trips > 0.0 {
                    entries.push(OdEntry { origin: o, dest: d, trips });
                }
            }
        }
    }
    let (od, _) = OdMatrix::from_entries(n, config.window.clone(), entries)?;

    let roads = lattice(&grid, config.road_spacing_m.unwrap_or(grid.pitch));

    let n_types = config.poi_types.len();
    let samplers: Vec<WeightedIndex<f64>> = config
        .poi_types
        .iter()
        .map(|t| {
            let w: Vec<f64> = truth
                .iter()
                .map(|a| {
                    config
                        .poi_plant
                        .iter()
                        .filter(|p| p.archetype == *a && p.poi_types.contains(t))
                        .map(|p| p.multiplier)
                        .product()
                })
                .collect();
            WeightedIndex::new(w).map_err(|e| Error::Internal(format!("poi weights: {e}")))
        })
        .collect::<Result<_>>()?;
    let n_pois = n * config.pois_per_zone;
    let pw = width(n_pois, 6);
    let mut points = Vec::with_capacity(n_pois);
    for i in 0..n_pois {
        let t = rng.gen_range(0..n_types);
        let z = samplers[t].sample(&mut rng);
        let (c, r) = grid.cell(z);
        let x = (c as f64 + rng.gen_range(0.01..0.99)) * grid.pitch;
        let y = (r as f64 + rng.gen_range(0.01..0.99)) * grid.pitch;
        points.push((format!("p{i:0pw$}"), config.poi_types[t].clone(), Point::new(x, y)));
    }
    let pois = PoiTable::from_points(points, &zones)?;

    Ok(SynthCity {
        zones,
        od,
        roads,
        pois,
        truth,
    })
}

/// Bidirectional 4-connected lattice spanning the zone centroids.
fn lattice(grid: &Grid, spacing: f64) -> RoadGraphSpec {
    let span = |cells: usize| ((cells - 1) as f64 * grid.pitch / spacing + 1e-9).floor() as usize + 1;
    let (nx, ny) = (span(grid.cols), span(grid.rows));
    let origin = 0.5 * grid.pitch;
    let nw = width(nx * ny, 5);
    let id = |i: usize, j: usize| format!("n{:0nw$}", j * nx + i);
    let mut spec = RoadGraphSpec::default();
    for j in 0..ny {
        for i in 0..nx {
            spec.nodes.push((id(i, j), Point::new(origin + i as f64 * spacing, origin + j as f64 * spacing)));
        }
    }
    let edge = |u: String, v: String| RoadEdge {
        u,
        v,
        length_m: spacing,
        oneway: false,
    };
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                spec.edges.push(edge(id(i, j), id(i + 1, j)));
            }
            if j + 1 < ny {
                spec.edges.push(edge(id(i, j), id(i, j + 1)));
            }
        }
    }
    spec
}

pub const ZONES_FILE: &str = "zones.geojson";
pub const OD_FILE: &str = "od.csv";
pub const ROAD_NODES_FILE: &str = "road_nodes.csv";
pub const ROAD_EDGES_FILE: &str = "road_edges.csv";
pub const POIS_FILE: &str = "pois.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const CONFIG_FILE: &str = "config.toml";

impl SynthCity {
    /// Writes every input file plus `truth.csv` and a `config.toml` that runs
    /// the pipeline on them. Returns the config path.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join(ZONES_FILE), &zones_to_geojson(self.zones.iter(), |_| Default::default()))?;
        write_od_csv(&self.od, &self.zones, dir.join(OD_FILE))?;
        write_roadnet(&self.roads, dir.join(ROAD_NODES_FILE), dir.join(ROAD_EDGES_FILE))?;
        write_pois_csv(&self.pois, dir.join(POIS_FILE))?;

        let truth_path = dir.join(TRUTH_FILE);
        let mut w = csv_writer(&truth_path)?;
        w.write_record(["zone_id", "archetype"])?;
        for (z, a) in self.zones.iter().zip(&self.truth) {
            w.write_record([z.id.as_str(), a.as_str()])?;
        }
        finish_csv(w, &truth_path)?;

        let mut cfg = PipelineConfig::new(ZONES_FILE, OD_FILE, ROAD_NODES_FILE, ROAD_EDGES_FILE, Some(POIS_FILE.into()));
        cfg.window = self.od.window().to_string();
        cfg.output_dir = "out".into();
        let path = dir.join(CONFIG_FILE);
        write_text(&path, &cfg.to_toml()?)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_zones: 9,
            n_global: 1,
            pois_per_zone: 4,
            ..Default::default()
        }
    }

    #[test]
    fn nine_zone_city_has_one_global() {
        let city = generate(&small()).unwrap();
        assert_eq!(city.zones.len(), 9);
        assert_eq!(city.truth.iter().filter(|&&a| a == Archetype::Global).count(), 1);
        assert_eq!(city.truth[4], Archetype::Downtown);
        assert_eq!(city.pois.len(), 36);
        assert_eq!(city.pois.unassigned_count(), 0);
        assert_eq!(city.roads.nodes.len(), 9);
        assert_eq!(city.roads.edges.len(), 12);
        city.roads.validate().unwrap();
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let too_many = SynthConfig {
            n_global: 10,
            ..small()
        };
        assert_eq!(generate(&too_many).unwrap_err().exit_code(), 1);
        let wide = SynthConfig {
            downtown_radius_m: 50_000.0,
            ..small()
        };
        assert!(generate(&wide).is_err());
        let zero_flow = SynthConfig {
            flow_scale: 0.0,
            ..small()
        };
        assert!(generate(&zero_flow).is_err());
    }

    #[test]
    fn no_self_loops_and_positive_trips() {
        let city = generate(&small()).unwrap();
        assert!(city.od.entries().iter().all(|e| e.origin != e.dest && e.trips > 0.0));
    }

    #[test]
    fn lattice_spacing_override() {
        let grid = Grid::new(1492, 40_000.0);
        assert_eq!((grid.cols, grid.rows), (39, 39));
        let spec = lattice(&grid, 38.0 * grid.pitch / 66.0);
        assert_eq!(spec.nodes.len(), 67 * 67);
        spec.validate().unwrap();
    }
}
