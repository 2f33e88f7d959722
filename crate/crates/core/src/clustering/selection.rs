use serde::{Deserialize, Serialize};

use super::hac::MergeTree;
use crate::error::{Error, Result};

pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_ELBOW_TAU: f64 = 0.05;

/// Feature scaling applied before measuring cluster variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceScaling {
    /// Per-feature z-scores.
    #[default]
    Standardized,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub k: usize,
    pub within_over_total: f64,
}

impl VariancePoint {
    pub fn between_over_total(&self) -> f64 {
        1.0 - self.within_over_total
    }
}

/// Per-feature z-scores with population standard deviation. Constant
/// features become all zeros.
pub fn standardize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let dim = vectors.first().map_or(0, Vec::len);
    let mut out = vectors.to_vec();
    for j in 0..dim {
        let mean = vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64;
        let var = vectors.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for row in out.iter_mut() {
            row[j] = if sd > 0.0 { (row[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Within-cluster sum of squares divided by the total sum of squares, for
/// each `k` in `1..=k_max`, following the merge order of `tree`.
///
/// The within sum at `k` is accumulated from the Ward increase of every
/// merge applied so far, `|A||B|/(|A|+|B|) · ‖mean_A − mean_B‖²`. Because
/// every increase is non-negative the curve is non-increasing, exactly 1 at
/// `k = 1` and exactly 0 at `k = n`.
pub fn variance_curve(vectors: &[Vec<f64>], tree: &MergeTree, k_max: usize, scaling: VarianceScaling) -> Result<Vec<VariancePoint>> {
    let n = vectors.len();
    if n != tree.n_leaves() || tree.merges.len() + 1 != n {
        return Err(Error::Internal("merge tree does not match the vectors".into()));
    }
    if k_max < 1 || k_max > n {
        return Err(Error::Config(format!("k_max = {k_max} is outside 1..={n}")));
    }
    let data = match scaling {
        VarianceScaling::Standardized => standardize(vectors),
        VarianceScaling::Raw => vectors.to_vec(),
    };
    let dim = data.first().map_or(0, Vec::len);

    let mut means: Vec<Vec<f64>> = data;
    let mut sizes: Vec<f64> = vec![1.0; n];
    means.reserve(n - 1);
    sizes.reserve(n - 1);
    // within[m] = sum of costs of the first m merges
    let mut within = Vec::with_capacity(n);
    within.push(0.0);
    let mut acc = 0.0f64;
    for m in &tree.merges {
        let (na, nb) = (sizes[m.a], sizes[m.b]);
        let (ma, mb) = (&means[m.a], &means[m.b]);
        let gap: f64 = ma.iter().zip(mb).map(|(x, y)| (x - y).powi(2)).sum();
        acc += (na * nb / (na + nb) * gap).max(0.0);
        within.push(acc);
        let merged: Vec<f64> = (0..dim).map(|j| (na * ma[j] + nb * mb[j]) / (na + nb)).collect();
        means.push(merged);
        sizes.push(na + nb);
    }
    let total = acc;
    Ok((1..=k_max)
        .map(|k| {
            let w = within[n - k];
            let ratio = if total > 0.0 {
                w / total
            } else if k == 1 {
                1.0
            } else {
                0.0
            };
            VariancePoint { k, within_over_total: ratio }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KSelection {
    pub k: usize,
    /// No elbow was found and `k_max − 1` was used.
    pub fallback: bool,
}

/// Smallest `k` whose next drop is below `tau` times the full range of the
/// curve.
pub fn select_k(curve: &[VariancePoint], tau: f64) -> Result<KSelection> {
    if curve.len() < 3 {
        return Err(Error::Config(format!("k selection needs at least 3 curve points, got {}", curve.len())));
    }
    let r: Vec<f64> = curve.iter().map(|p| p.within_over_total).collect();
    let span = r[0] - r[r.len() - 1];
    for i in 0..r.len() - 1 {
        if r[i] - r[i + 1] < tau * span {
            return Ok(KSelection { k: curve[i].k, fallback: false });
        }
    }
    let k = curve[curve.len() - 1].k - 1;
    log::warn!("variance curve has no elbow at tau = {tau}; falling back to k = {k}");
    Ok(KSelection { k, fallback: true })
}
