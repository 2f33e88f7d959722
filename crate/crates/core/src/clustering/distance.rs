use rayon::prelude::*;

use crate::error::{Error, Result};

/// `1 − Pearson(x, y)`, in `[0, 2]`. When exactly one vector is constant the
/// distance is 1; when both are, 0.
pub fn correlation_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!("vector lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Validation("correlation distance needs vectors of length >= 2".into()));
    }
    Ok(Centered::new(x).distance(&Centered::new(y)))
}

/// A vector minus its own mean, with the centered norm.
#[derive(Debug, Clone)]
pub(crate) struct Centered {
    values: Vec<f64>,
    norm: f64,
}

impl Centered {
    pub(crate) fn new(x: &[f64]) -> Self {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let values: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Centered { values, norm }
    }

    pub(crate) fn distance(&self, other: &Centered) -> f64 {
        match (self.norm == 0.0, other.norm == 0.0) {
            (true, true) => return 0.0,
            (true, false) | (false, true) => return 1.0,
            _ => {}
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        (1.0 - dot / (self.norm * other.norm)).clamp(0.0, 2.0)
    }
}

/// Symmetric distance matrix stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CondensedMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let data = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let f = &f;
                (i + 1..n).map(move |j| f(i, j))
            })
            .collect();
        CondensedMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    /// Distance between `i` and `j`; zero on the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.data[o] = v;
    }
}

/// Pairwise correlation distances, computed in parallel.
pub fn pairwise_correlation(vectors: &[Vec<f64>]) -> Result<CondensedMatrix> {
    let dim = vectors.first().map_or(0, Vec::len);
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Validation("feature vectors differ in length".into()));
    }
    if dim < 2 {
        return Err(Error::Validation("correlation distance needs vectors of length >= 2".into()));
    }
    let centered: Vec<Centered> = vectors.iter().map(|v| Centered::new(v)).collect();
    Ok(CondensedMatrix::from_fn(vectors.len(), |i, j| centered[i].distance(&centered[j])))
}
