//! End-to-end orchestration: config, stages, and artifact writing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::clustering::{
    self, write_clusters_csv, write_clusters_geojson, write_merges_csv, write_variance_curve_csv, ClusterConfig, ClusterModel,
    VarianceScaling, DEFAULT_ELBOW_TAU, DEFAULT_K_MAX,
};
use crate::error::{Error, Result};
use crate::features::{
    build_feature_vectors, candidate_destinations, write_features_csv, FeatureConfig, FeatureTable, SdFormula,
    UnclassifiedReason, DEFAULT_MIN_INFLOW,
};
use crate::ingest::{load_od, load_pois, load_roadnet, load_zones, OdLoadStats, OdMatrix, PoiTable, RoadGraphSpec, ZoneSet};
use crate::poisig::{self, ClassAssignment, SignificanceRanking};
use crate::roadnet::{self, RoadGraph, DEFAULT_MAX_SNAP_M};

pub const FEATURES_FILE: &str = "features.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const CLUSTERS_GEOJSON_FILE: &str = "clusters.geojson";
pub const VARIANCE_FILE: &str = "variance_curve.csv";
pub const MERGES_FILE: &str = "merges.csv";
pub const SIGNIFICANCE_FILE: &str = "poi_significance.csv";
pub const MANIFEST_FILE: &str = "run_manifest.json";

fn default_window() -> String {
    "unspecified".into()
}
fn default_max_snap() -> f64 {
    DEFAULT_MAX_SNAP_M
}
fn default_min_inflow() -> f64 {
    DEFAULT_MIN_INFLOW
}
fn default_tau() -> f64 {
    DEFAULT_ELBOW_TAU
}
fn default_k_max() -> usize {
    DEFAULT_K_MAX
}
fn default_output() -> PathBuf {
    "out".into()
}

/// Run configuration, read from TOML. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub zones: PathBuf,
    pub od: PathBuf,
    pub road_nodes: PathBuf,
    pub road_edges: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pois: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub window: String,
    #[serde(default = "default_max_snap")]
    pub max_snap_m: f64,
    #[serde(default = "default_min_inflow")]
    pub min_inflow: f64,
    #[serde(default = "default_tau")]
    pub elbow_tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_override: Option<usize>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub sd_formula: SdFormula,
    #[serde(default)]
    pub variance_scaling: VarianceScaling,
    #[serde(default)]
    pub standardize_features: bool,
    #[serde(default)]
    pub skip_poi: bool,
    /// Optional CSV cache of road distances, reused while the graph is unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_cache: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl PipelineConfig {
    pub fn new(
        zones: impl Into<PathBuf>,
        od: impl Into<PathBuf>,
        road_nodes: impl Into<PathBuf>,
        road_edges: impl Into<PathBuf>,
        pois: Option<PathBuf>,
    ) -> Self {
        PipelineConfig {
            zones: zones.into(),
            od: od.into(),
            road_nodes: road_nodes.into(),
            road_edges: road_edges.into(),
            pois,
            window: default_window(),
            max_snap_m: DEFAULT_MAX_SNAP_M,
            min_inflow: DEFAULT_MIN_INFLOW,
            elbow_tau: DEFAULT_ELBOW_TAU,
            k_override: None,
            k_max: DEFAULT_K_MAX,
            sd_formula: SdFormula::default(),
            variance_scaling: VarianceScaling::default(),
            standardize_features: false,
            skip_poi: false,
            distance_cache: None,
            output_dir: default_output(),
            threads: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.zones);
        fix(&mut self.od);
        fix(&mut self.road_nodes);
        fix(&mut self.road_edges);
        fix(&mut self.output_dir);
        if let Some(p) = self.pois.as_mut() {
            fix(p);
        }
        if let Some(p) = self.distance_cache.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut required = vec![&self.zones, &self.od, &self.road_nodes, &self.road_edges];
        if !self.skip_poi {
            match &self.pois {
                Some(p) => required.push(p),
                None => return Err(Error::Config("no pois path given (use skip_poi to run without POIs)".into())),
            }
        }
        for p in required {
            if !p.is_file() {
                return Err(Error::MissingInput(p.clone()));
            }
        }
        let bad = |m: String| Err(Error::Config(m));
        if !(self.max_snap_m >= 0.0 && self.max_snap_m.is_finite()) {
            return bad(format!("max_snap_m must be non-negative, got {}", self.max_snap_m));
        }
        if !(self.min_inflow >= 0.0 && self.min_inflow.is_finite()) {
            return bad(format!("min_inflow must be non-negative, got {}", self.min_inflow));
        }
        if !(self.elbow_tau > 0.0 && self.elbow_tau < 1.0) {
            return bad(format!("elbow_tau must lie in (0, 1), got {}", self.elbow_tau));
        }
        if self.k_max < 1 {
            return bad("k_max must be at least 1".into());
        }
        if self.k_override == Some(0) {
            return bad("k_override must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            min_inflow: self.min_inflow,
            sd_formula: self.sd_formula,
        }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            k_override: self.k_override,
            k_max: self.k_max,
            elbow_tau: self.elbow_tau,
            variance_scaling: self.variance_scaling,
            standardize_features: self.standardize_features,
        }
    }

    /// Runs `f` on a pool capped at `threads`, or the global pool.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Loaded inputs and features.
#[derive(Debug, Clone)]
pub struct FeatureStage {
    pub zones: ZoneSet,
    pub od: OdMatrix,
    pub od_stats: OdLoadStats,
    pub road_nodes: usize,
    pub road_arcs: usize,
    pub max_snap_distance_m: f64,
    pub table: FeatureTable,
    /// (origin, destination) pairs with trips but no road path.
    pub unreachable_pairs: usize,
}

/// Road-distance features for already loaded inputs.
#[derive(Debug, Clone)]
pub struct ComputedFeatures {
    pub table: FeatureTable,
    pub road_nodes: usize,
    pub road_arcs: usize,
    pub max_snap_distance_m: f64,
    pub unreachable_pairs: usize,
}

/// Builds the road graph, snaps zones, computes distance columns for every
/// candidate destination (through the cache when configured) and the
/// feature table. Runs on the current rayon pool.
pub fn compute_features(zones: &ZoneSet, od: &OdMatrix, roads: &RoadGraphSpec, cfg: &PipelineConfig) -> Result<ComputedFeatures> {
    let graph = RoadGraph::build(roads)?;
    let anchors = roadnet::snap_zones(zones, &graph, cfg.max_snap_m)?;
    let dests = candidate_destinations(od, zones, cfg.min_inflow);

    let key = cfg.distance_cache.as_ref().map(|_| roadnet::cache_key(&graph, &anchors));
    let cached = match (&cfg.distance_cache, &key) {
        (Some(path), Some(key)) => roadnet::read_distance_cache(path, key, &dests, zones, od)?,
        _ => None,
    };
    let columns = match cached {
        Some(columns) => {
            log::info!("reusing cached road distances");
            columns
        }
        None => {
            let columns = roadnet::distance_columns(&dests, &anchors, &graph, od)?;
            if let (Some(path), Some(key)) = (&cfg.distance_cache, &key) {
                roadnet::write_distance_cache(path, key, &columns, zones)?;
            }
            columns
        }
    };
    let unreachable_pairs = columns.iter().map(|c| c.unreachable.len()).sum();
    let table = build_feature_vectors(od, zones, &columns, &cfg.feature_config());
    log::info!(
        "features: {} zones classified, {} unclassified, {} unreachable pairs",
        table.features.len(),
        table.unclassified.len(),
        unreachable_pairs
    );
    Ok(ComputedFeatures {
        table,
        road_nodes: graph.node_count(),
        road_arcs: graph.arc_count(),
        max_snap_distance_m: anchors.iter().map(|a| a.snap_distance_m).fold(0.0, f64::max),
        unreachable_pairs,
    })
}

pub fn feature_stage(cfg: &PipelineConfig) -> Result<FeatureStage> {
    let zones = load_zones(&cfg.zones)?;
    let (mut od, od_stats) = load_od(&cfg.od, &zones)?;
    od.set_window(cfg.window.clone());
    let roads = load_roadnet(&cfg.road_nodes, &cfg.road_edges)?;
    let c = compute_features(&zones, &od, &roads, cfg)?;
    Ok(FeatureStage {
        zones,
        od,
        od_stats,
        road_nodes: c.road_nodes,
        road_arcs: c.road_arcs,
        max_snap_distance_m: c.max_snap_distance_m,
        table: c.table,
        unreachable_pairs: c.unreachable_pairs,
    })
}

/// Everything the pipeline computes, before anything is written.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub features: FeatureStage,
    pub model: ClusterModel,
    pub pois: Option<PoiTable>,
    pub significance: Option<Vec<SignificanceRanking>>,
}

pub fn analyze(cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.validate()?;
    cfg.with_pool(|| {
        let features = feature_stage(cfg)?;
        let model = clustering::fit(&features.table.features, &cfg.cluster_config())?;
        let (pois, significance) = if cfg.skip_poi {
            (None, None)
        } else {
            let path = cfg.pois.as_ref().expect("validated");
            let pois = load_pois(path, &features.zones)?;
            let classes = ClassAssignment::from_model(&model, &features.zones)?;
            let ranking = poisig::rank_all(&pois, &classes)?;
            (Some(pois), Some(ranking))
        };
        Ok(Analysis {
            features,
            model,
            pois,
            significance,
        })
    })?
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Outputs written by a run, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub k: usize,
}

/// Writes every artifact into a staging directory, then moves them into
/// `output_dir`. On failure nothing partial is left behind.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    let analysis = analyze(cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let staging = out.join(format!(".staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;
    let result = write_artifacts(cfg, &analysis, &staging).and_then(|files| {
        for f in &files {
            let to = out.join(f);
            fs::rename(staging.join(f), &to).map_err(|e| Error::io(&to, e))?;
        }
        if cfg.skip_poi {
            let stale = out.join(SIGNIFICANCE_FILE);
            if stale.is_file() {
                fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
            }
        }
        Ok(files)
    });
    let _ = fs::remove_dir_all(&staging);
    let files = result?;
    Ok(RunSummary {
        output_dir: out.clone(),
        files,
        k: analysis.model.k,
    })
}

fn write_artifacts(cfg: &PipelineConfig, a: &Analysis, dir: &Path) -> Result<Vec<String>> {
    let mut files = vec![
        FEATURES_FILE.to_string(),
        CLUSTERS_FILE.to_string(),
        CLUSTERS_GEOJSON_FILE.to_string(),
        VARIANCE_FILE.to_string(),
        MERGES_FILE.to_string(),
    ];
    write_features_csv(&a.features.table.features, dir.join(FEATURES_FILE))?;
    write_clusters_csv(&a.model, dir.join(CLUSTERS_FILE))?;
    write_clusters_geojson(&a.model, &a.features.zones, dir.join(CLUSTERS_GEOJSON_FILE))?;
    write_variance_curve_csv(&a.model.variance_curve, dir.join(VARIANCE_FILE))?;
    write_merges_csv(&a.model.tree, dir.join(MERGES_FILE))?;
    if let Some(r) = &a.significance {
        poisig::write_significance_csv(r, dir.join(SIGNIFICANCE_FILE))?;
        files.push(SIGNIFICANCE_FILE.to_string());
    }

    let mut outputs = BTreeMap::new();
    for f in &files {
        outputs.insert(f.clone(), sha256_file(&dir.join(f))?);
    }
    let manifest = manifest(cfg, a, outputs)?;
    crate::ingest::write_text(&dir.join(MANIFEST_FILE), &manifest)?;
    files.push(MANIFEST_FILE.to_string());
    Ok(files)
}

fn manifest(cfg: &PipelineConfig, a: &Analysis, outputs: BTreeMap<String, String>) -> Result<String> {
    let mut inputs = BTreeMap::new();
    let mut add = |name: &str, p: &Path| -> Result<()> {
        inputs.insert(name.to_string(), json!({ "file": file_name(p), "sha256": sha256_file(p)? }));
        Ok(())
    };
    add("zones", &cfg.zones)?;
    add("od", &cfg.od)?;
    add("road_nodes", &cfg.road_nodes)?;
    add("road_edges", &cfg.road_edges)?;
    if let (false, Some(p)) = (cfg.skip_poi, &cfg.pois) {
        add("pois", p)?;
    }

    let t = &a.features.table;
    let count = |r: UnclassifiedReason| t.unclassified.iter().filter(|u| u.reason == r).count();
    let excluded: f64 = t.features.iter().map(|f| f.excluded_trips).sum();
    let m = &a.model;
    let doc = json!({
        "tool": "urban-attractors",
        "version": env!("CARGO_PKG_VERSION"),
        "config": {
            "window": cfg.window,
            "max_snap_m": cfg.max_snap_m,
            "min_inflow": cfg.min_inflow,
            "elbow_tau": cfg.elbow_tau,
            "k_override": cfg.k_override,
            "k_max": cfg.k_max,
            "sd_formula": cfg.sd_formula,
            "variance_scaling": cfg.variance_scaling,
            "standardize_features": cfg.standardize_features,
            "skip_poi": cfg.skip_poi,
        },
        "inputs": inputs,
        "outputs": outputs,
        "counts": {
            "zones": a.features.zones.len(),
            "od_rows": a.features.od_stats.rows,
            "od_entries": a.features.od.len(),
            "od_zero_rows_dropped": a.features.od_stats.zero_rows_dropped,
            "od_duplicates_merged": a.features.od_stats.duplicates_merged,
            "road_nodes": a.features.road_nodes,
            "road_arcs": a.features.road_arcs,
            "max_snap_distance_m": a.features.max_snap_distance_m,
            "classified_zones": t.features.len(),
            "unclassified_below_min_inflow": count(UnclassifiedReason::BelowMinInflow),
            "unclassified_unreachable": count(UnclassifiedReason::AllOriginsUnreachable),
            "unreachable_pairs": a.features.unreachable_pairs,
            "unreachable_trips": excluded,
            "pois": a.pois.as_ref().map(|p| p.len()),
            "pois_unassigned": a.pois.as_ref().map(|p| p.unassigned_count()),
            "pois_overlapping": a.pois.as_ref().map(|p| p.overlap_count()),
            "significance_tests": a.significance.as_ref().map(|r| poisig::test_count(r)),
        },
        "clustering": {
            "k": m.k,
            "k_source": m.k_source,
            "labels": m.labels.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
            "label_warning": m.label_warning,
            "between_over_total": m.variance_curve.iter().map(|p| json!({ "k": p.k, "value": p.between_over_total() })).collect::<Vec<_>>(),
        },
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
