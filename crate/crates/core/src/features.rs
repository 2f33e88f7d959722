//! Attraction features per destination zone: inflow, trip-weighted spatial
//! dispersion of origins around their center of mass, and the mean and
//! standard deviation of road distances traveled.
//!
//! Intra-zonal (origin == destination) trips are excluded from every
//! feature.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ingest::{csv_writer, finish_csv, fmt_f64, OdMatrix, ZoneSet};
use crate::roadnet::DistanceColumn;

pub const DEFAULT_MIN_INFLOW: f64 = 1.0;

/// How the weight total enters the standard-distance formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdFormula {
    /// `sqrt(Σ w·r² / Σ w)`, meters.
    #[default]
    Standard,
    /// `sqrt(Σ w·r²) / Σ w`, as typeset in the source formula.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOrigin {
    pub zone: usize,
    pub trips: f64,
    pub point: Point,
    pub road_dist_m: Option<f64>,
}

/// Origins of the trips arriving at one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOriginSet {
    pub dest: usize,
    pub origins: Vec<FlowOrigin>,
}

impl FlowOriginSet {
    /// Gathers the non-self-loop origins of `dest`, attaching road distances
    /// from `column` when given.
    pub fn gather(od: &OdMatrix, zones: &ZoneSet, dest: usize, column: Option<&DistanceColumn>) -> Self {
        let origins = od
            .column(dest)
            .iter()
            .filter(|e| e.origin != dest && e.trips > 0.0)
            .map(|e| FlowOrigin {
                zone: e.origin,
                trips: e.trips,
                point: zones.get(e.origin).centroid,
                road_dist_m: column.and_then(|c| c.get(e.origin)),
            })
            .collect();
        FlowOriginSet { dest, origins }
    }

    pub fn total_trips(&self) -> f64 {
        self.origins.iter().map(|o| o.trips).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub sd: f64,
    pub center: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub mu: f64,
    pub sigma: f64,
    /// Trips whose origin cannot reach the destination on the road network.
    pub excluded_trips: f64,
}

/// Inflow of `dest`: column sum of the OD matrix without the self-loop.
pub fn inflow(od: &OdMatrix, dest: usize) -> f64 {
    od.column(dest).iter().filter(|e| e.origin != dest).map(|e| e.trips).sum()
}

/// Weighted standard distance of origins around their weighted center of
/// mass. `None` for an empty (or zero-weight) origin set.
pub fn spatial_dispersion(origins: &FlowOriginSet, formula: SdFormula) -> Option<Dispersion> {
    let total: f64 = origins.total_trips();
    if origins.origins.is_empty() || total <= 0.0 {
        return None;
    }
    let cx = origins.origins.iter().map(|o| o.trips * o.point.x).sum::<f64>() / total;
    let cy = origins.origins.iter().map(|o| o.trips * o.point.y).sum::<f64>() / total;
    let center = Point::new(cx, cy);
    let moment: f64 = origins.origins.iter().map(|o| o.trips * o.point.distance_sq(&center)).sum();
    let sd = match formula {
        SdFormula::Standard => (moment / total).sqrt(),
        SdFormula::AsPrinted => moment.sqrt() / total,
    };
    Some(Dispersion { sd, center })
}

/// Trip-weighted mean and population standard deviation of road distances
/// over reachable origins. `None` when no origin has a distance.
pub fn distance_stats(origins: &FlowOriginSet) -> Option<DistanceStats> {
    let excluded_trips: f64 = origins.origins.iter().filter(|o| o.road_dist_m.is_none()).map(|o| o.trips).sum();
    let reached: Vec<(f64, f64)> = origins.origins.iter().filter_map(|o| o.road_dist_m.map(|d| (o.trips, d))).collect();
    let total: f64 = reached.iter().map(|(w, _)| w).sum();
    if reached.is_empty() || total <= 0.0 {
        return None;
    }
    let mu = reached.iter().map(|(w, d)| w * d).sum::<f64>() / total;
    let var = reached.iter().map(|(w, d)| w * (d - mu) * (d - mu)).sum::<f64>() / total;
    Some(DistanceStats {
        mu,
        sigma: var.sqrt(),
        excluded_trips,
    })
}

/// One row of the feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractionFeatures {
    pub zone_id: String,
    pub inflow: f64,
    pub inflow_per_m2: f64,
    pub sd: f64,
    pub mu: f64,
    pub sigma: f64,
    pub center_of_mass: Point,
    pub excluded_trips: f64,
}

impl AttractionFeatures {
    /// The clustering vector `[inflow, sd, mu, sigma]`.
    pub fn vector(&self) -> [f64; 4] {
        [self.inflow, self.sd, self.mu, self.sigma]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnclassifiedReason {
    BelowMinInflow,
    AllOriginsUnreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnclassifiedZone {
    pub zone_id: String,
    pub inflow: f64,
    pub reason: UnclassifiedReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub min_inflow: f64,
    pub sd_formula: SdFormula,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            min_inflow: DEFAULT_MIN_INFLOW,
            sd_formula: SdFormula::Standard,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    /// Ascending by zone id.
    pub features: Vec<AttractionFeatures>,
    /// Ascending by zone id.
    pub unclassified: Vec<UnclassifiedZone>,
}

/// Zones whose inflow reaches `min_inflow`, ascending by zone id. These are
/// the destinations that need distance columns.
pub fn candidate_destinations(od: &OdMatrix, zones: &ZoneSet, min_inflow: f64) -> Vec<usize> {
    zones
        .sorted_indices()
        .into_iter()
        .filter(|&z| {
            let v = inflow(od, z);
            v > 0.0 && v >= min_inflow
        })
        .collect()
}

/// Builds feature rows for every zone meeting the inflow threshold.
/// `columns` holds the distance column of each candidate destination;
/// destinations without a column are treated as fully unreachable.
pub fn build_feature_vectors(od: &OdMatrix, zones: &ZoneSet, columns: &[DistanceColumn], config: &FeatureConfig) -> FeatureTable {
    let mut by_dest: Vec<Option<&DistanceColumn>> = vec![None; zones.len()];
    for c in columns {
        by_dest[c.dest] = Some(c);
    }
    let mut table = FeatureTable::default();
    for z in zones.sorted_indices() {
        let zone = zones.get(z);
        let total = inflow(od, z);
        if !(total > 0.0 && total >= config.min_inflow) {
            table.unclassified.push(UnclassifiedZone {
                zone_id: zone.id.clone(),
                inflow: total,
                reason: UnclassifiedReason::BelowMinInflow,
            });
            continue;
        }
        let origins = FlowOriginSet::gather(od, zones, z, by_dest[z]);
        let disp = spatial_dispersion(&origins, config.sd_formula).expect("positive inflow implies origins");
        let Some(stats) = distance_stats(&origins) else {
            table.unclassified.push(UnclassifiedZone {
                zone_id: zone.id.clone(),
                inflow: total,
                reason: UnclassifiedReason::AllOriginsUnreachable,
            });
            continue;
        };
        let inflow_per_m2 = if zone.area_m2 > 0.0 { total / zone.area_m2 } else { 0.0 };
        table.features.push(AttractionFeatures {
            zone_id: zone.id.clone(),
            inflow: total,
            inflow_per_m2,
            sd: disp.sd,
            mu: stats.mu,
            sigma: stats.sigma,
            center_of_mass: disp.center,
            excluded_trips: stats.excluded_trips,
        });
    }
    table
}

const FEATURE_COLUMNS: [&str; 9] = ["zone_id", "inflow", "inflow_per_m2", "sd_m", "mu_m", "sigma_m", "xc", "yc", "excluded_trips"];

pub fn write_features_csv(features: &[AttractionFeatures], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(FEATURE_COLUMNS)?;
    for f in features {
        w.write_record([
            f.zone_id.clone(),
            fmt_f64(f.inflow),
            fmt_f64(f.inflow_per_m2),
            fmt_f64(f.sd),
            fmt_f64(f.mu),
            fmt_f64(f.sigma),
            fmt_f64(f.center_of_mass.x),
            fmt_f64(f.center_of_mass.y),
            fmt_f64(f.excluded_trips),
        ])?;
    }
    finish_csv(w, path)
}

/// Reads a `features.csv`; a missing column is a hard error naming it.
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<AttractionFeatures>> {
    let path = path.as_ref();
    let (mut rdr, cols) = crate::ingest::open_csv(path, &FEATURE_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = crate::ingest::line_of(&rec);
        let num = |i: usize| crate::ingest::parse_f64(&rec[cols[i]], FEATURE_COLUMNS[i], line).map_err(|m| Error::parse(path, m));
        out.push(AttractionFeatures {
            zone_id: rec[cols[0]].to_string(),
            inflow: num(1)?,
            inflow_per_m2: num(2)?,
            sd: num(3)?,
            mu: num(4)?,
            sigma: num(5)?,
            center_of_mass: Point::new(num(6)?, num(7)?),
            excluded_trips: num(8)?,
        });
    }
    Ok(out)
}
