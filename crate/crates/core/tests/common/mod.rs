//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use urban_attractors::clustering::{self, Archetype, ClusterModel, CondensedMatrix};
use urban_attractors::features::FeatureTable;
use urban_attractors::pipeline::{self, PipelineConfig};
use urban_attractors::poisig::{self, ClassAssignment, SignificanceRanking};
use urban_attractors::synth::SynthCity;

/// All-pairs shortest paths with integer weights; `None` is unreachable.
pub fn floyd_warshall(n: usize, arcs: &[(usize, usize, u64)]) -> Vec<Vec<Option<u64>>> {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(u, v, w) in arcs {
        if d[u][v].is_none_or(|x| w < x) {
            d[u][v] = Some(w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k] else { continue };
            for j in 0..n {
                if let Some(kj) = d[k][j] {
                    if d[i][j].is_none_or(|x| ik + kj < x) {
                        d[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    d
}

/// Pascal's triangle in u128, exact for n ≤ 120.
pub fn binomials(n: usize) -> Vec<Vec<u128>> {
    let mut c = vec![vec![0u128; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
        }
    }
    c
}

/// Exact upper-tail hypergeometric probability as `(numerator, denominator)`.
pub fn exact_tail(c: &[Vec<u128>], a: u64, b: u64, cc: u64, d: u64) -> (u128, u128) {
    let (row, col, n) = ((a + b) as usize, (a + cc) as usize, (a + b + cc + d) as usize);
    let mut num = 0u128;
    for x in a as usize..=row.min(col) {
        num += c[row][x] * c[n - row][col - x];
    }
    (num, c[n][col])
}

/// `1 − Pearson` by the textbook sums formula.
pub fn pearson_distance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    1.0 - num / den
}

/// One merge as (a, b, distance, new id, size).
pub type MergeRow = (usize, usize, f64, usize, usize);

/// Complete linkage by exhaustive scan of all active pairs at every step.
pub fn naive_complete_linkage(dist: &CondensedMatrix) -> Vec<MergeRow> {
    let n = dist.len();
    let total = 2 * n - 1;
    let mut d = vec![vec![0.0f64; total]; total];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = dist.get(i, j);
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; total];
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let (lo, hi) = (i.min(j), i.max(j));
                let cand = (d[lo][hi], lo, hi);
                let better = match best {
                    None => true,
                    Some(b) => cand.0 < b.0 || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2)),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (h, a, b) = best.unwrap();
        let id = n + step;
        active.retain(|&x| x != a && x != b);
        for &u in &active {
            let v = d[u][a].max(d[u][b]);
            d[u][id] = v;
            d[id][u] = v;
        }
        active.push(id);
        size[id] = size[a] + size[b];
        out.push((a, b, h, id, size[id]));
    }
    out
}

/// Weighted standard distance by two passes: center, then spread.
pub fn two_pass_sd(points: &[(f64, f64)], w: &[f64]) -> (f64, (f64, f64)) {
    let total: f64 = w.iter().sum();
    let cx = points.iter().zip(w).map(|(p, w)| p.0 * w).sum::<f64>() / total;
    let cy = points.iter().zip(w).map(|(p, w)| p.1 * w).sum::<f64>() / total;
    let ss: f64 = points.iter().zip(w).map(|(p, w)| w * ((p.0 - cx).powi(2) + (p.1 - cy).powi(2))).sum();
    ((ss / total).sqrt(), (cx, cy))
}

/// Unweighted population statistics of a multiset, each value repeated by
/// its integer weight.
pub fn expanded_mean_sd(values: &[f64], w: &[u32]) -> (f64, f64) {
    let expanded: Vec<f64> = values.iter().zip(w).flat_map(|(&v, &k)| std::iter::repeat_n(v, k as usize)).collect();
    let n = expanded.len() as f64;
    let mean = expanded.iter().sum::<f64>() / n;
    let var = expanded.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Unweighted standard distance of points repeated by integer weights.
pub fn expanded_sd(points: &[(f64, f64)], w: &[u32]) -> f64 {
    let expanded: Vec<(f64, f64)> = points.iter().zip(w).flat_map(|(&p, &k)| std::iter::repeat_n(p, k as usize)).collect();
    let n = expanded.len() as f64;
    let cx = expanded.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = expanded.iter().map(|p| p.1).sum::<f64>() / n;
    (expanded.iter().map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Result of running the in-memory pipeline on a synthetic city.
pub struct CityRun {
    pub table: FeatureTable,
    pub model: ClusterModel,
    pub classes: ClassAssignment,
    pub rankings: Vec<SignificanceRanking>,
    /// Planted archetype per clustered leaf.
    pub truth: Vec<Archetype>,
}

pub fn run_city(city: &SynthCity, cfg: &PipelineConfig) -> CityRun {
    let computed = pipeline::compute_features(&city.zones, &city.od, &city.roads, cfg).unwrap();
    let model = clustering::fit(&computed.table.features, &cfg.cluster_config()).unwrap();
    let classes = ClassAssignment::from_model(&model, &city.zones).unwrap();
    let rankings = poisig::rank_all(&city.pois, &classes).unwrap();
    let truth = model
        .leaves()
        .iter()
        .map(|id| city.truth[city.zones.index_of(id).unwrap()])
        .collect();
    CityRun {
        table: computed.table,
        model,
        classes,
        rankings,
        truth,
    }
}

/// Config for in-memory runs; input paths are unused.
pub fn memory_config() -> PipelineConfig {
    PipelineConfig::new("", "", "", "", None)
}

pub fn archetype_index(a: Archetype) -> usize {
    match a {
        Archetype::Global => 0,
        Archetype::Downtown => 1,
        Archetype::Residential => 2,
        Archetype::Other => 3,
    }
}

/// True when every cluster's label equals the planted label held by most
/// of its members.
pub fn labels_match_majority(run: &CityRun) -> bool {
    let k = run.model.k;
    (0..k).all(|c| {
        let mut votes = [0usize; 4];
        for (leaf, &a) in run.model.assignment.iter().enumerate() {
            if a == c {
                votes[archetype_index(run.truth[leaf])] += 1;
            }
        }
        let majority = (0..4).max_by_key(|&i| votes[i]).unwrap();
        archetype_index(run.model.labels[c]) == majority
    })
}
