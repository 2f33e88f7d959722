use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::AttractionFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Archetype {
    Global,
    Downtown,
    Residential,
    Other,
}

impl Archetype {
    pub fn as_str(&self) -> &'static str {
        match self {
            Archetype::Global => "Global",
            Archetype::Downtown => "Downtown",
            Archetype::Residential => "Residential",
            Archetype::Other => "Other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Global" => Some(Archetype::Global),
            "Downtown" => Some(Archetype::Downtown),
            "Residential" => Some(Archetype::Residential),
            "Other" => Some(Archetype::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    /// Indexed by cluster.
    pub labels: Vec<Archetype>,
    pub warning: Option<String>,
}

/// Names the clusters of a 3-way cut. Any other `k` gives all `Other`.
///
/// The cluster with the highest mean `sd` is Global. Of the other two, the
/// one with both higher mean inflow density and lower mean `mu` is Downtown.
/// If those two tests disagree, or the Global pick is tied, every cluster is
/// `Other` and a warning is returned.
pub fn label_archetypes(assignment: &[usize], k: usize, features: &[AttractionFeatures]) -> Labeling {
    if k != 3 {
        return Labeling {
            labels: vec![Archetype::Other; k],
            warning: None,
        };
    }
    let mut sums = [[0.0f64; 3]; 3];
    let mut counts = [0usize; 3];
    for (&c, f) in assignment.iter().zip(features) {
        sums[c][0] += f.sd;
        sums[c][1] += f.inflow_per_m2;
        sums[c][2] += f.mu;
        counts[c] += 1;
    }
    let mean = |c: usize, j: usize| sums[c][j] / counts[c] as f64;
    let degenerate = |why: String| {
        log::warn!("archetype labeling: {why}; all clusters labeled Other");
        Labeling {
            labels: vec![Archetype::Other; 3],
            warning: Some(why),
        }
    };

    let top_sd = (0..3).map(|c| mean(c, 0)).fold(f64::NEG_INFINITY, f64::max);
    let global: Vec<usize> = (0..3).filter(|&c| mean(c, 0) == top_sd).collect();
    if global.len() != 1 {
        return degenerate("several clusters share the highest mean sd".into());
    }
    let g = global[0];
    let rest: Vec<usize> = (0..3).filter(|&c| c != g).collect();
    let (p, q) = (rest[0], rest[1]);
    let by_density = match mean(p, 1).partial_cmp(&mean(q, 1)) {
        Some(std::cmp::Ordering::Greater) => Some(p),
        Some(std::cmp::Ordering::Less) => Some(q),
        _ => None,
    };
    let by_distance = match mean(p, 2).partial_cmp(&mean(q, 2)) {
        Some(std::cmp::Ordering::Less) => Some(p),
        Some(std::cmp::Ordering::Greater) => Some(q),
        _ => None,
    };
    match (by_density, by_distance) {
        (Some(a), Some(b)) if a == b => {
            let mut labels = vec![Archetype::Residential; 3];
            labels[g] = Archetype::Global;
            labels[a] = Archetype::Downtown;
            Labeling { labels, warning: None }
        }
        _ => degenerate("inflow density and mean distance disagree on the Downtown cluster".into()),
    }
}

/// Chance-corrected agreement between two partitions of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same items");
    let n = a.len() as f64;
    let pairs = |x: f64| x * (x - 1.0) / 2.0;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let sum_joint: f64 = joint.values().map(|&v| pairs(v)).sum();
    let sum_a: f64 = ra.values().map(|&v| pairs(v)).sum();
    let sum_b: f64 = rb.values().map(|&v| pairs(v)).sum();
    let expected = sum_a * sum_b / pairs(n).max(1.0);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return if sum_joint == max { 1.0 } else { 0.0 };
    }
    (sum_joint - expected) / (max - expected)
}
