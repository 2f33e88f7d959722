use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::distance::{pairwise_correlation, CondensedMatrix};
use crate::error::{Error, Result};

/// One agglomeration step. Leaves are clusters `0..n`; the merge at step `m`
/// creates cluster `n + m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller of the two merged cluster ids.
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub id: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeTree {
    /// Leaf labels in leaf-id order.
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

impl MergeTree {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }
}

/// Complete-linkage HAC under correlation distance.
pub fn hac_complete(vectors: &[Vec<f64>]) -> Result<Vec<Merge>> {
    if vectors.len() < 2 {
        return Err(Error::Validation(format!("clustering needs at least 2 vectors, got {}", vectors.len())));
    }
    complete_linkage(&pairwise_correlation(vectors)?)
}

/// Candidate pair ordering: distance, then smaller cluster id, then larger.
fn better(d: f64, a: usize, b: usize, best: Option<(f64, usize, usize)>) -> bool {
    match best {
        None => true,
        Some((bd, ba, bb)) => match d.total_cmp(&bd) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => (a, b) < (ba, bb),
        },
    }
}

/// Complete linkage over a precomputed distance matrix.
///
/// Each active slot caches its nearest partner among slots holding a larger
/// cluster id, so every unordered pair is considered exactly once under the
/// `(distance, min id, max id)` order. A merge reuses the lower-id slot for
/// the new cluster, whose id exceeds every existing one.
pub fn complete_linkage(dist: &CondensedMatrix) -> Result<Vec<Merge>> {
    let n = dist.len();
    if n < 2 {
        return Err(Error::Validation(format!("clustering needs at least 2 items, got {n}")));
    }
    let mut d = dist.clone();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active = vec![true; n];
    // nn[s] = (distance, partner slot)
    let mut nn: Vec<Option<(f64, usize)>> = vec![None; n];

    let scan = |d: &CondensedMatrix, ids: &[usize], active: &[bool], s: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for t in 0..n {
            if t == s || !active[t] || ids[t] < ids[s] {
                continue;
            }
            let dt = d.get(s, t);
            let take = match best {
                None => true,
                Some((bd, bt)) => match dt.total_cmp(&bd) {
                    Ordering::Less => true,
                    Ordering::Equal => ids[t] < ids[bt],
                    Ordering::Greater => false,
                },
            };
            if take {
                best = Some((dt, t));
            }
        }
        best
    };

    for s in 0..n {
        nn[s] = scan(&d, &ids, &active, s);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        let mut pick = (0, 0);
        for s in 0..n {
            if !active[s] {
                continue;
            }
            if let Some((ds, t)) = nn[s] {
                if better(ds, ids[s], ids[t], best) {
                    best = Some((ds, ids[s], ids[t]));
                    pick = (s, t);
                }
            }
        }
        let (s, t) = pick;
        let (height, a, b) = best.ok_or_else(|| Error::Internal("no mergeable pair".into()))?;
        let new_id = n + step;
        sizes[s] += sizes[t];
        merges.push(Merge {
            a,
            b,
            distance: height,
            id: new_id,
            size: sizes[s],
        });

        active[t] = false;
        ids[s] = new_id;
        nn[s] = None;
        for u in 0..n {
            if !active[u] || u == s {
                continue;
            }
            let merged = d.get(u, s).max(d.get(u, t));
            d.set(u, s, merged);
        }
        for u in 0..n {
            if !active[u] || u == s {
                continue;
            }
            match nn[u] {
                Some((_, p)) if p == s || p == t => nn[u] = scan(&d, &ids, &active, u),
                Some((du, _)) => {
                    if d.get(u, s) < du {
                        nn[u] = Some((d.get(u, s), s));
                    }
                }
                None => nn[u] = Some((d.get(u, s), s)),
            }
        }
    }
    Ok(merges)
}

/// Flat clustering after applying the first `n − k` merges. Clusters are
/// numbered by descending size, ties by smallest member label.
pub fn cut(tree: &MergeTree, k: usize) -> Result<Vec<usize>> {
    let n = tree.n_leaves();
    if k < 1 || k > n {
        return Err(Error::Config(format!("k = {k} is outside 1..={n}")));
    }
    // Union-find over cluster ids 0..2n-1.
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in &tree.merges[..n - k] {
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = m.id;
        parent[rb] = m.id;
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut root_slot = std::collections::HashMap::new();
    for (leaf, &r) in roots.iter().enumerate() {
        let slot = *root_slot.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(leaf);
    }
    let min_label = |g: &Vec<usize>| g.iter().map(|&i| tree.leaves[i].as_str()).min().unwrap_or("");
    groups.sort_by(|(_, x), (_, y)| y.len().cmp(&x.len()).then_with(|| min_label(x).cmp(min_label(y))));

    let mut assignment = vec![0; n];
    for (c, (_, members)) in groups.iter().enumerate() {
        for &leaf in members {
            assignment[leaf] = c;
        }
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_from(n: usize, pairs: &[(usize, usize, f64)]) -> (CondensedMatrix, Vec<String>) {
        let m = CondensedMatrix::from_fn(n, |i, j| pairs.iter().find(|p| (p.0, p.1) == (i, j)).map(|p| p.2).unwrap());
        let leaves = (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
        (m, leaves)
    }

    #[test]
    fn two_points_single_merge() {
        let (m, _) = tree_from(2, &[(0, 1, 0.7)]);
        let merges = complete_linkage(&m).unwrap();
        assert_eq!(merges, vec![Merge { a: 0, b: 1, distance: 0.7, id: 2, size: 2 }]);
    }

    #[test]
    fn three_points_complete_rule() {
        let (m, leaves) = tree_from(3, &[(0, 1, 0.1), (0, 2, 0.9), (1, 2, 0.9)]);
        let merges = complete_linkage(&m).unwrap();
        assert_eq!((merges[0].a, merges[0].b, merges[0].distance), (0, 1, 0.1));
        assert_eq!((merges[1].a, merges[1].b, merges[1].distance), (2, 3, 0.9));
        let tree = MergeTree { leaves, merges };
        assert_eq!(cut(&tree, 2).unwrap(), vec![0, 0, 1]);
        assert_eq!(cut(&tree, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(cut(&tree, 1).unwrap(), vec![0, 0, 0]);
        assert!(cut(&tree, 0).is_err());
        assert!(cut(&tree, 4).is_err());
    }

    #[test]
    fn complete_uses_max_not_min() {
        // Single linkage would join C to {A,B} at 0.2; complete joins C–D first.
        let (m, _) = tree_from(
            4,
            &[(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.8), (0, 3, 0.9), (1, 3, 0.9), (2, 3, 0.3)],
        );
        let merges = complete_linkage(&m).unwrap();
        assert_eq!((merges[0].a, merges[0].b), (0, 1));
        assert_eq!((merges[1].a, merges[1].b, merges[1].distance), (2, 3, 0.3));
        assert_eq!(merges[2].distance, 0.9);
    }

    #[test]
    fn ties_break_on_smallest_ids() {
        let m = CondensedMatrix::from_fn(4, |_, _| 0.5);
        let merges = complete_linkage(&m).unwrap();
        let pairs: Vec<(usize, usize)> = merges.iter().map(|m| (m.a, m.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5)]);
    }

    #[test]
    fn too_few_vectors() {
        assert!(hac_complete(&[vec![1.0, 2.0]]).is_err());
    }
}
