//! Complete-linkage hierarchical clustering of zone feature vectors under
//! correlation distance, variance-ratio choice of `k`, and archetype names.

mod distance;
mod hac;
mod labels;
mod selection;

use std::path::Path;

use serde_json::{Map, Value};

pub use distance::{correlation_distance, pairwise_correlation, CondensedMatrix};
pub use hac::{complete_linkage, cut, hac_complete, Merge, MergeTree};
pub use labels::{adjusted_rand_index, label_archetypes, Archetype, Labeling};
pub use selection::{
    select_k, standardize, variance_curve, KSelection, VariancePoint, VarianceScaling, DEFAULT_ELBOW_TAU, DEFAULT_K_MAX,
};

use crate::error::{Error, Result};
use crate::features::AttractionFeatures;
use crate::ingest::{csv_writer, finish_csv, fmt_f64, open_csv, parse_f64, write_text, zones_to_geojson, ZoneSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub k_override: Option<usize>,
    pub k_max: usize,
    pub elbow_tau: f64,
    pub variance_scaling: VarianceScaling,
    /// Z-score each feature before computing correlation distances.
    pub standardize_features: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k_override: None,
            k_max: DEFAULT_K_MAX,
            elbow_tau: DEFAULT_ELBOW_TAU,
            variance_scaling: VarianceScaling::Standardized,
            standardize_features: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KSource {
    Override,
    Elbow,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub tree: MergeTree,
    pub variance_curve: Vec<VariancePoint>,
    pub k: usize,
    pub k_source: KSource,
    /// Cluster of each leaf, in leaf order.
    pub assignment: Vec<usize>,
    /// Archetype of each cluster.
    pub labels: Vec<Archetype>,
    pub label_warning: Option<String>,
}

impl ClusterModel {
    pub fn leaves(&self) -> &[String] {
        &self.tree.leaves
    }

    pub fn archetype_of_leaf(&self, leaf: usize) -> Archetype {
        self.labels[self.assignment[leaf]]
    }

    /// Reporting name per cluster: the archetype when one was assigned,
    /// otherwise `cluster_<index>`.
    pub fn class_names(&self) -> Vec<String> {
        self.labels
            .iter()
            .enumerate()
            .map(|(c, a)| match a {
                Archetype::Other => format!("cluster_{c}"),
                named => named.to_string(),
            })
            .collect()
    }
}

/// Clusters feature rows (ascending by zone id) end to end.
pub fn fit(features: &[AttractionFeatures], config: &ClusterConfig) -> Result<ClusterModel> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Validation(format!("clustering needs at least 2 classified zones, got {n}")));
    }
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.vector().to_vec()).collect();
    let input = if config.standardize_features { standardize(&raw) } else { raw.clone() };
    let tree = MergeTree {
        leaves: features.iter().map(|f| f.zone_id.clone()).collect(),
        merges: hac_complete(&input)?,
    };
    let k_max = config.k_max.min(n);
    let curve = variance_curve(&raw, &tree, k_max, config.variance_scaling)?;
    let (k, k_source) = match config.k_override {
        Some(k) => {
            if k < 1 || k > n {
                return Err(Error::Config(format!("k = {k} is outside 1..={n}")));
            }
            (k, KSource::Override)
        }
        None => {
            let sel = select_k(&curve, config.elbow_tau)?;
            (sel.k, if sel.fallback { KSource::Fallback } else { KSource::Elbow })
        }
    };
    let assignment = cut(&tree, k)?;
    let labeling = label_archetypes(&assignment, k, features);
    Ok(ClusterModel {
        tree,
        variance_curve: curve,
        k,
        k_source,
        assignment,
        labels: labeling.labels,
        label_warning: labeling.warning,
    })
}

pub fn write_clusters_csv(model: &ClusterModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["zone_id", "cluster", "archetype"])?;
    for (leaf, id) in model.leaves().iter().enumerate() {
        let c = model.assignment[leaf];
        w.write_record([id.as_str(), &c.to_string(), model.labels[c].as_str()])?;
    }
    finish_csv(w, path)
}

/// Zone → (cluster, archetype) from a `clusters.csv`.
pub fn read_clusters_csv(path: impl AsRef<Path>) -> Result<Vec<(String, usize, Archetype)>> {
    let path = path.as_ref();
    let (mut rdr, cols) = open_csv(path, &["zone_id", "cluster", "archetype"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = crate::ingest::line_of(&rec);
        let cluster = rec[cols[1]]
            .parse::<usize>()
            .map_err(|_| Error::parse(path, format!("line {line}: malformed cluster {:?}", &rec[cols[1]])))?;
        let arch = Archetype::parse(&rec[cols[2]])
            .ok_or_else(|| Error::parse(path, format!("line {line}: unknown archetype {:?}", &rec[cols[2]])))?;
        out.push((rec[cols[0]].to_string(), cluster, arch));
    }
    Ok(out)
}

pub fn write_variance_curve_csv(curve: &[VariancePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["k", "within_over_total"])?;
    for p in curve {
        w.write_record([p.k.to_string(), fmt_f64(p.within_over_total)])?;
    }
    finish_csv(w, path)
}

/// Reads a `variance_curve.csv`, used by tests and external checks.
pub fn read_variance_curve_csv(path: impl AsRef<Path>) -> Result<Vec<VariancePoint>> {
    let path = path.as_ref();
    let (mut rdr, cols) = open_csv(path, &["k", "within_over_total"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = crate::ingest::line_of(&rec);
        let k = parse_f64(&rec[cols[0]], "k", line).map_err(|m| Error::parse(path, m))? as usize;
        let r = parse_f64(&rec[cols[1]], "within_over_total", line).map_err(|m| Error::parse(path, m))?;
        out.push(VariancePoint { k, within_over_total: r });
    }
    Ok(out)
}

/// `merges.csv`: leaf clusters `0..n` follow `clusters.csv` row order.
pub fn write_merges_csv(tree: &MergeTree, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["step", "cluster_a", "cluster_b", "distance", "new_cluster", "size"])?;
    for (step, m) in tree.merges.iter().enumerate() {
        w.write_record([
            step.to_string(),
            m.a.to_string(),
            m.b.to_string(),
            fmt_f64(m.distance),
            m.id.to_string(),
            m.size.to_string(),
        ])?;
    }
    finish_csv(w, path)
}

/// Every zone with `cluster` and `archetype` properties; zones left out of
/// clustering get a null cluster and archetype `Unclassified`.
pub fn write_clusters_geojson(model: &ClusterModel, zones: &ZoneSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut by_zone = std::collections::HashMap::new();
    for (leaf, id) in model.leaves().iter().enumerate() {
        by_zone.insert(id.as_str(), model.assignment[leaf]);
    }
    let ordered = zones.sorted_indices().into_iter().map(|i| zones.get(i));
    let text = zones_to_geojson(ordered, |z| {
        let mut p = Map::new();
        match by_zone.get(z.id.as_str()) {
            Some(&c) => {
                p.insert("cluster".into(), Value::from(c));
                p.insert("archetype".into(), Value::from(model.labels[c].as_str()));
            }
            None => {
                p.insert("cluster".into(), Value::Null);
                p.insert("archetype".into(), Value::from("Unclassified"));
            }
        }
        p
    });
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn feat(id: &str, v: [f64; 4]) -> AttractionFeatures {
        AttractionFeatures {
            zone_id: id.into(),
            inflow: v[0],
            inflow_per_m2: v[0] / 1e6,
            sd: v[1],
            mu: v[2],
            sigma: v[3],
            center_of_mass: Point::new(0.0, 0.0),
            excluded_trips: 0.0,
        }
    }

    fn fixture() -> Vec<AttractionFeatures> {
        vec![
            feat("a", [100.0, 9000.0, 12000.0, 5000.0]),
            feat("b", [110.0, 9100.0, 12500.0, 5100.0]),
            feat("c", [5000.0, 1500.0, 1800.0, 700.0]),
            feat("d", [5200.0, 1400.0, 1700.0, 650.0]),
            feat("e", [300.0, 800.0, 900.0, 400.0]),
            feat("f", [320.0, 820.0, 950.0, 420.0]),
        ]
    }

    #[test]
    fn override_k_gives_other_labels() {
        let cfg = ClusterConfig {
            k_override: Some(4),
            k_max: 6,
            ..Default::default()
        };
        let m = fit(&fixture(), &cfg).unwrap();
        assert_eq!(m.k, 4);
        assert_eq!(m.k_source, KSource::Override);
        let mut distinct = m.assignment.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct, vec![0, 1, 2, 3]);
        assert!(m.labels.iter().all(|&a| a == Archetype::Other));
        assert_eq!(m.class_names()[2], "cluster_2");
    }

    #[test]
    fn bad_override_is_config_error() {
        let cfg = ClusterConfig {
            k_override: Some(7),
            ..Default::default()
        };
        assert_eq!(fit(&fixture(), &cfg).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn csv_round_trips() {
        let cfg = ClusterConfig {
            k_override: Some(3),
            k_max: 6,
            ..Default::default()
        };
        let m = fit(&fixture(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_clusters_csv(&m, dir.path().join("c.csv")).unwrap();
        let rows = read_clusters_csv(dir.path().join("c.csv")).unwrap();
        assert_eq!(rows.len(), 6);
        for (leaf, (id, c, a)) in rows.iter().enumerate() {
            assert_eq!(id, &m.leaves()[leaf]);
            assert_eq!(*c, m.assignment[leaf]);
            assert_eq!(*a, m.archetype_of_leaf(leaf));
        }
        write_variance_curve_csv(&m.variance_curve, dir.path().join("v.csv")).unwrap();
        assert_eq!(read_variance_curve_csv(dir.path().join("v.csv")).unwrap(), m.variance_curve);
        write_merges_csv(&m.tree, dir.path().join("m.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert_eq!(text.lines().count(), 6);
    }
}
