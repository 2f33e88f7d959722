//! Association between POI types and attractor classes via one-sided
//! Fisher's exact test.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{Archetype, ClusterModel};
use crate::error::{Error, Result};
use crate::ingest::{csv_writer, finish_csv, fmt_f64, PoiTable, ZoneSet};

/// 2×2 counts for one (type, class) pair.
///
/// |            | in class | elsewhere |
/// |------------|----------|-----------|
/// | type t     | a        | b         |
/// | other type | c        | d         |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    fn has_zero_margin(&self) -> bool {
        self.a + self.b == 0 || self.c + self.d == 0 || self.a + self.c == 0 || self.b + self.d == 0
    }
}

/// `ln k!` for `k ≤ n`, kept as unevaluated sums `hi + lo` so that the
/// large terms cancel without losing the low-order bits.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<(f64, f64)>,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dd_add((ah, al): (f64, f64), (bh, bl): (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(ah, bh);
    let (t, f) = two_sum(al, bl);
    let (s, e) = two_sum(s, e + t);
    two_sum(s, e + f)
}

impl LnFactorial {
    pub fn new(n: u64) -> Self {
        let mut table = Vec::with_capacity(n as usize + 1);
        let mut acc = (0.0, 0.0);
        table.push(acc);
        for i in 1..=n {
            acc = dd_add(acc, ((i as f64).ln(), 0.0));
            table.push(acc);
        }
        LnFactorial { table }
    }

    pub fn max(&self) -> u64 {
        self.table.len() as u64 - 1
    }

    #[inline]
    pub fn get(&self, k: u64) -> f64 {
        let (hi, lo) = self.table[k as usize];
        hi + lo
    }

    fn ln_point(&self, a: u64, b: u64, c: u64, d: u64) -> f64 {
        let n = a + b + c + d;
        let t = |k: u64| self.table[k as usize];
        let neg = |k: u64| {
            let (h, l) = t(k);
            (-h, -l)
        };
        let mut acc = t(a + b);
        for x in [t(c + d), t(a + c), t(b + d), neg(a), neg(b), neg(c), neg(d), neg(n)] {
            acc = dd_add(acc, x);
        }
        acc.0 + acc.1
    }

    /// Hypergeometric probability of exactly this table given its margins.
    pub fn point_probability(&self, t: &ContingencyTable) -> f64 {
        if t.has_zero_margin() {
            return 1.0;
        }
        self.ln_point(t.a, t.b, t.c, t.d).exp().min(1.0)
    }

    /// Probability of `a` or more under fixed margins.
    pub fn one_sided(&self, t: &ContingencyTable) -> f64 {
        if t.has_zero_margin() {
            return 1.0;
        }
        let row = t.a + t.b;
        let col = t.a + t.c;
        let n = t.n();
        let hi = row.min(col);
        // Smallest terms first.
        let mut p = 0.0;
        for a in (t.a..=hi).rev() {
            let (b, c) = (row - a, col - a);
            let d = n + a - row - col;
            p += self.ln_point(a, b, c, d).exp();
        }
        p.min(1.0)
    }
}

pub fn fet_point_probability(t: &ContingencyTable) -> f64 {
    LnFactorial::new(t.n()).point_probability(t)
}

pub fn fet_one_sided(t: &ContingencyTable) -> f64 {
    LnFactorial::new(t.n()).one_sided(t)
}

/// Zone → attractor class, with class names.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAssignment {
    pub names: Vec<String>,
    /// Class index per zone (ZoneSet order); `None` for unclustered zones.
    pub zone_class: Vec<Option<usize>>,
}

fn class_name(cluster: usize, archetype: Archetype) -> String {
    match archetype {
        Archetype::Other => format!("cluster_{cluster}"),
        named => named.to_string(),
    }
}

impl ClassAssignment {
    pub fn from_model(model: &ClusterModel, zones: &ZoneSet) -> Result<Self> {
        let rows: Vec<(String, usize, Archetype)> = model
            .leaves()
            .iter()
            .enumerate()
            .map(|(leaf, id)| (id.clone(), model.assignment[leaf], model.archetype_of_leaf(leaf)))
            .collect();
        Self::from_rows(&rows, zones)
    }

    /// From `(zone_id, cluster, archetype)` rows as in `clusters.csv`.
    pub fn from_rows(rows: &[(String, usize, Archetype)], zones: &ZoneSet) -> Result<Self> {
        let k = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut arch: Vec<Option<Archetype>> = vec![None; k];
        let mut zone_class = vec![None; zones.len()];
        for (id, c, a) in rows {
            let z = zones
                .index_of(id)
                .ok_or_else(|| Error::Validation(format!("cluster assignment names unknown zone {id:?}")))?;
            if zone_class[z].is_some() {
                return Err(Error::Validation(format!("zone {id:?} is assigned twice")));
            }
            match arch[*c] {
                Some(prev) if prev != *a => {
                    return Err(Error::Validation(format!("cluster {c} carries both {prev} and {a}")));
                }
                _ => arch[*c] = Some(*a),
            }
            zone_class[z] = Some(*c);
        }
        let names = arch
            .iter()
            .enumerate()
            .map(|(c, a)| class_name(c, a.unwrap_or(Archetype::Other)))
            .collect();
        Ok(ClassAssignment { names, zone_class })
    }

    fn class_index(&self, class: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == class)
            .ok_or_else(|| Error::Validation(format!("unknown attractor class {class:?}")))
    }
}

/// Per-(class, type) POI counts over assigned POIs.
struct Counts {
    /// counts[class][type]; the extra last class collects POIs outside every class.
    counts: Vec<Vec<u64>>,
    type_totals: Vec<u64>,
    class_totals: Vec<u64>,
    n: u64,
}

impl Counts {
    fn new(pois: &PoiTable, classes: &ClassAssignment) -> Self {
        let vocab = pois.vocabulary();
        let type_index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let k = classes.names.len();
        let mut counts = vec![vec![0u64; vocab.len()]; k + 1];
        for (rec, zone) in pois.assigned() {
            let class = classes.zone_class.get(zone).copied().flatten().unwrap_or(k);
            counts[class][type_index[rec.poi_type.as_str()]] += 1;
        }
        let type_totals = (0..vocab.len()).map(|t| counts.iter().map(|row| row[t]).sum()).collect();
        let class_totals: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
        let n = class_totals.iter().sum();
        Counts {
            counts,
            type_totals,
            class_totals,
            n,
        }
    }

    fn table(&self, class: usize, t: usize) -> ContingencyTable {
        let a = self.counts[class][t];
        let b = self.type_totals[t] - a;
        let c = self.class_totals[class] - a;
        let d = self.n - a - b - c;
        ContingencyTable { a, b, c, d }
    }
}

/// Counts for `poi_type` against the union of zones in `class`. Zones left
/// out of clustering count as outside every class.
pub fn build_table(pois: &PoiTable, classes: &ClassAssignment, class: &str, poi_type: &str) -> Result<ContingencyTable> {
    let ci = classes.class_index(class)?;
    let ti = pois
        .vocabulary()
        .iter()
        .position(|t| t == poi_type)
        .ok_or_else(|| Error::Validation(format!("unknown POI type {poi_type:?}")))?;
    Ok(Counts::new(pois, classes).table(ci, ti))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub poi_type: String,
    pub a: u64,
    pub expected_a: f64,
    pub p_value: f64,
    pub table: ContingencyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceRanking {
    pub attractor_class: String,
    /// Ascending by p-value, ties by type.
    pub rows: Vec<RankRow>,
}

fn rank_with(counts: &Counts, lnf: &LnFactorial, vocab: &[String], class: usize, name: &str) -> SignificanceRanking {
    let mut rows: Vec<RankRow> = (0..vocab.len())
        .into_par_iter()
        .filter_map(|t| {
            let table = counts.table(class, t);
            if table.a == 0 {
                return None;
            }
            let n = table.n() as f64;
            Some(RankRow {
                poi_type: vocab[t].clone(),
                a: table.a,
                expected_a: (table.a + table.b) as f64 * (table.a + table.c) as f64 / n,
                p_value: lnf.one_sided(&table),
                table,
            })
        })
        .collect();
    rows.sort_by(|x, y| x.p_value.total_cmp(&y.p_value).then_with(|| x.poi_type.cmp(&y.poi_type)));
    SignificanceRanking {
        attractor_class: name.to_string(),
        rows,
    }
}

/// POI types with at least one POI in `class`, most significant first.
pub fn rank_types(pois: &PoiTable, classes: &ClassAssignment, class: &str) -> Result<SignificanceRanking> {
    let ci = classes.class_index(class)?;
    let counts = Counts::new(pois, classes);
    if counts.n == 0 {
        return Err(Error::Validation("no POI falls inside any zone".into()));
    }
    let lnf = LnFactorial::new(counts.n);
    Ok(rank_with(&counts, &lnf, pois.vocabulary(), ci, class))
}

/// Rankings for every class, in class-name order.
pub fn rank_all(pois: &PoiTable, classes: &ClassAssignment) -> Result<Vec<SignificanceRanking>> {
    let counts = Counts::new(pois, classes);
    if counts.n == 0 {
        return Err(Error::Validation("no POI falls inside any zone".into()));
    }
    let lnf = LnFactorial::new(counts.n);
    let mut order: Vec<usize> = (0..classes.names.len()).collect();
    order.sort_by(|&x, &y| classes.names[x].cmp(&classes.names[y]));
    Ok(order
        .into_iter()
        .map(|c| rank_with(&counts, &lnf, pois.vocabulary(), c, &classes.names[c]))
        .collect())
}

/// Number of tests across all rankings, the Bonferroni multiplier.
pub fn test_count(rankings: &[SignificanceRanking]) -> usize {
    rankings.iter().map(|r| r.rows.len()).sum()
}

/// `poi_significance.csv`, with `p_bonferroni = min(1, p · m)` where `m`
/// counts every row in the file.
pub fn write_significance_csv(rankings: &[SignificanceRanking], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = test_count(rankings) as f64;
    let mut w = csv_writer(path)?;
    w.write_record(["attractor_class", "poi_type", "a", "expected_a", "p_value", "p_bonferroni"])?;
    for r in rankings {
        for row in &r.rows {
            w.write_record([
                r.attractor_class.clone(),
                row.poi_type.clone(),
                row.a.to_string(),
                fmt_f64(row.expected_a),
                fmt_f64(row.p_value),
                fmt_f64((row.p_value * m).min(1.0)),
            ])?;
        }
    }
    finish_csv(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Footprint, Point, Polygon};
    use crate::ingest::Zone;

    fn t(a: u64, b: u64, c: u64, d: u64) -> ContingencyTable {
        ContingencyTable::new(a, b, c, d)
    }

    fn close(x: f64, y: f64) -> bool {
        (x - y).abs() <= 1e-13 * y.abs()
    }

    #[test]
    fn margins_exceeding_n() {
        // row + col > n, so the lower end of the support is above zero.
        assert!(close(fet_one_sided(&t(2, 1, 1, 0)), 1.0));
        assert!(close(fet_one_sided(&t(3, 0, 0, 1)), 0.25));
        assert!(close(fet_point_probability(&t(2, 1, 1, 0)), 0.75));
    }

    #[test]
    fn point_examples() {
        assert!(close(fet_point_probability(&t(1, 1, 1, 1)), 2.0 / 3.0));
        assert!(close(fet_point_probability(&t(2, 0, 0, 2)), 1.0 / 6.0));
        assert_eq!(fet_point_probability(&t(0, 0, 3, 4)), 1.0);
        assert_eq!(fet_point_probability(&t(2, 3, 0, 0)), 1.0);
    }

    #[test]
    fn tail_examples() {
        assert!(close(fet_one_sided(&t(3, 1, 1, 3)), 17.0 / 70.0));
        assert!(close(fet_one_sided(&t(1, 1, 1, 1)), 5.0 / 6.0));
        let maximal = t(4, 0, 2, 5);
        assert_eq!(fet_one_sided(&maximal), fet_point_probability(&maximal));
    }

    #[test]
    fn ln_factorial_small_values() {
        let l = LnFactorial::new(10);
        assert_eq!(l.get(0), 0.0);
        assert_eq!(l.get(1), 0.0);
        assert!((l.get(10) - 3628800f64.ln()).abs() < 1e-13);
        assert_eq!(l.max(), 10);
    }

    fn two_zones() -> ZoneSet {
        let sq = |x0: f64| {
            Footprint::new(vec![Polygon::new(
                vec![Point::new(x0, 0.0), Point::new(x0 + 10.0, 0.0), Point::new(x0 + 10.0, 10.0), Point::new(x0, 10.0)],
                vec![],
            )])
        };
        ZoneSet::new(vec![Zone::new("dt", sq(0.0)), Zone::new("res", sq(10.0)), Zone::new("far", sq(20.0))]).unwrap()
    }

    fn four_pois(zones: &ZoneSet) -> PoiTable {
        let p = |id: &str, ty: &str, x: f64| (id.to_string(), ty.to_string(), Point::new(x, 5.0));
        PoiTable::from_points(
            vec![p("1", "restaurant", 5.0), p("2", "restaurant", 15.0), p("3", "school", 5.0), p("4", "school", 15.0)],
            zones,
        )
        .unwrap()
    }

    fn classes(zones: &ZoneSet) -> ClassAssignment {
        let rows = vec![
            ("dt".to_string(), 0, Archetype::Downtown),
            ("res".to_string(), 1, Archetype::Residential),
            ("far".to_string(), 2, Archetype::Global),
        ];
        ClassAssignment::from_rows(&rows, zones).unwrap()
    }

    #[test]
    fn four_poi_table() {
        let zones = two_zones();
        let pois = four_pois(&zones);
        let cls = classes(&zones);
        assert_eq!(build_table(&pois, &cls, "Downtown", "restaurant").unwrap(), t(1, 1, 1, 1));
        assert!(build_table(&pois, &cls, "Nowhere", "restaurant").is_err());
        assert!(build_table(&pois, &cls, "Downtown", "mosque").is_err());
        let r = rank_types(&pois, &cls, "Downtown").unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].poi_type, "restaurant");
        assert!(close(r.rows[0].p_value, 5.0 / 6.0));
        assert_eq!(r.rows[0].expected_a, 1.0);
        // Nothing in the Global zone.
        assert!(rank_types(&pois, &cls, "Global").unwrap().rows.is_empty());
    }

    #[test]
    fn single_type_is_uninformative() {
        let zones = two_zones();
        let p = |id: &str, x: f64| (id.to_string(), "bank".to_string(), Point::new(x, 5.0));
        let pois = PoiTable::from_points(vec![p("1", 5.0), p("2", 5.0), p("3", 15.0)], &zones).unwrap();
        let cls = classes(&zones);
        for class in ["Downtown", "Residential"] {
            let r = rank_types(&pois, &cls, class).unwrap();
            assert_eq!(r.rows[0].p_value, 1.0);
        }
    }

    #[test]
    fn other_clusters_get_numbered_names() {
        let zones = two_zones();
        let rows = vec![("dt".to_string(), 0, Archetype::Other), ("res".to_string(), 1, Archetype::Other)];
        let cls = ClassAssignment::from_rows(&rows, &zones).unwrap();
        assert_eq!(cls.names, vec!["cluster_0", "cluster_1"]);
        assert_eq!(cls.zone_class, vec![Some(0), Some(1), None]);
    }

    #[test]
    fn csv_has_bonferroni_column() {
        let zones = two_zones();
        let pois = four_pois(&zones);
        let cls = classes(&zones);
        let rankings = rank_all(&pois, &cls).unwrap();
        assert_eq!(test_count(&rankings), 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        write_significance_csv(&rankings, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "attractor_class,poi_type,a,expected_a,p_value,p_bonferroni");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("Downtown,restaurant,1,1.0,"));
        assert!(lines[1].ends_with(",1.0"));
    }
}
