//! Structural similarity of two nodes: `S_k(u, v) = exp(-w_k(u, v))` where
//! `w_k` is the DTW distance between the sorted degree sequences of the
//! exact distance-`k` neighborhoods of `u` and `v`.

use thiserror::Error;

use crate::graph::{GraphError, GyralNet, HopAdjacency};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("DTW cost is undefined for degree 0 (got {a}, {b})")]
    ZeroDegree { a: usize, b: usize },
    #[error("DTW distance needs two non-empty sequences")]
    EmptySequence,
    #[error("support matrix is for hop {support} but similarity was requested for hop {k}")]
    HopMismatch { k: usize, support: usize },
    #[error("support matrix has {support} rows but the graph has {n} nodes")]
    SizeMismatch { n: usize, support: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Ratio cost between two positive degrees: `max/min - 1`.
pub fn dtw_cost(a: usize, b: usize) -> Result<f64, SimError> {
    if a == 0 || b == 0 {
        return Err(SimError::ZeroDegree { a, b });
    }
    Ok(ratio_cost(a, b))
}

#[inline]
fn ratio_cost(a: usize, b: usize) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    hi as f64 / lo as f64 - 1.0
}

/// Full (unbanded) DTW with the ratio cost. Returns the cumulative cost of
/// the cheapest monotone alignment of `m` against `n`.
pub fn dtw_distance(m: &[usize], n: &[usize]) -> Result<f64, SimError> {
    if m.is_empty() || n.is_empty() {
        return Err(SimError::EmptySequence);
    }
    if let Some(&z) = m.iter().chain(n).find(|&&x| x == 0) {
        return Err(SimError::ZeroDegree { a: z, b: z });
    }
    // Row-by-row over m, keeping one row of n.
    let cols = n.len();
    let mut prev = vec![f64::INFINITY; cols];
    let mut cur = vec![0.0; cols];
    for (i, &a) in m.iter().enumerate() {
        for (j, &b) in n.iter().enumerate() {
            let d = ratio_cost(a, b);
            cur[j] = if i == 0 && j == 0 {
                d
            } else {
                let up = prev[j];
                let diag = if j > 0 { prev[j - 1] } else { f64::INFINITY };
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                d + up.min(diag).min(left)
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[cols - 1])
}

/// Similarity of two sorted degree sequences with the empty-set convention:
/// both empty gives 1, exactly one empty gives 0.
///
/// A 0 can only appear at hop 0 of an isolated node (`g_0(u) = {u}`). Equal
/// sequences still give 1; otherwise a degree-0 sequence is treated like an
/// empty one and gives 0.
pub fn sequence_similarity(m: &[usize], n: &[usize]) -> Result<f64, SimError> {
    match (m.is_empty(), n.is_empty()) {
        (true, true) => Ok(1.0),
        (true, false) | (false, true) => Ok(0.0),
        (false, false) if m == n => Ok(1.0),
        (false, false) if m.contains(&0) || n.contains(&0) => Ok(0.0),
        (false, false) => Ok((-dtw_distance(m, n)?).exp()),
    }
}

/// `S_k(u, v)` computed from scratch.
pub fn structural_similarity(g: &GyralNet, u: usize, v: usize, k: usize) -> Result<f64, SimError> {
    let seq_u = g.degree_sequence(&g.khop_neighborhood(u, k)?)?;
    let seq_v = g.degree_sequence(&g.khop_neighborhood(v, k)?)?;
    sequence_similarity(&seq_u, &seq_v)
}

/// Per-subject cache of BFS rings and their sorted degree sequences for
/// hops `0..=max_hop`.
#[derive(Debug, Clone)]
pub struct HopCache {
    max_hop: usize,
    /// `rings[u][k]` = g_k(u).
    rings: Vec<Vec<Vec<usize>>>,
    /// `degree_seqs[u][k]` = p(g_k(u)).
    degree_seqs: Vec<Vec<Vec<usize>>>,
}

impl HopCache {
    pub fn build(g: &GyralNet, max_hop: usize) -> Self {
        let rings: Vec<Vec<Vec<usize>>> = (0..g.n())
            .map(|u| g.rings(u, max_hop).expect("node id in range"))
            .collect();
        let degree_seqs = rings
            .iter()
            .map(|per_hop| {
                per_hop
                    .iter()
                    .map(|ring| g.degree_sequence(ring).expect("ring nodes are valid"))
                    .collect()
            })
            .collect();
        Self {
            max_hop,
            rings,
            degree_seqs,
        }
    }

    pub fn max_hop(&self) -> usize {
        self.max_hop
    }

    pub fn ring(&self, u: usize, k: usize) -> &[usize] {
        &self.rings[u][k]
    }

    pub fn degree_sequence(&self, u: usize, k: usize) -> &[usize] {
        &self.degree_seqs[u][k]
    }

    pub fn adjacency(&self, k: usize) -> HopAdjacency {
        assert!(k <= self.max_hop, "hop {k} beyond cached depth {}", self.max_hop);
        HopAdjacency::from_rows(k, self.rings.iter().map(|r| r[k].clone()).collect())
    }

    pub fn similarity(&self, u: usize, v: usize, k: usize) -> f64 {
        sequence_similarity(self.degree_sequence(u, k), self.degree_sequence(v, k))
            .expect("cached degree sequences never contain 0")
    }

    /// `S_k` restricted to the support of `A_k`.
    pub fn similarity_matrix(&self, k: usize) -> SimilarityMatrix {
        let adj = self.adjacency(k);
        let entries = adj
            .upper_pairs()
            .map(|(u, v)| ((u, v), self.similarity(u, v, k)))
            .collect();
        SimilarityMatrix {
            k,
            n: adj.n(),
            entries,
        }
    }
}

/// Sparse symmetric `S_k`, stored once per unordered pair `(u <= v)` and
/// only on the support of `A_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    k: usize,
    n: usize,
    /// Sorted by pair.
    entries: Vec<((usize, usize), f64)>,
}

impl SimilarityMatrix {
    pub fn new(k: usize, n: usize, mut entries: Vec<((usize, usize), f64)>) -> Self {
        for e in &mut entries {
            let (u, v) = e.0;
            e.0 = (u.min(v), u.max(v));
        }
        entries.sort_by_key(|e| e.0);
        entries.dedup_by(|a, b| a.0 == b.0);
        Self { k, n, entries }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Symmetric lookup; pairs outside the support return `None`.
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let key = (u.min(v), u.max(v));
        self.entries
            .binary_search_by(|e| e.0.cmp(&key))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[((usize, usize), f64)] {
        &self.entries
    }

    /// `w_k = -ln S_k` for a stored pair.
    pub fn dtw_weight(&self, u: usize, v: usize) -> Option<f64> {
        self.get(u, v).map(|s| -s.ln())
    }
}

/// `S_k` evaluated only where `support` (which must be `A_k` of `g`) is set.
pub fn similarity_matrix(
    g: &GyralNet,
    k: usize,
    support: &HopAdjacency,
) -> Result<SimilarityMatrix, SimError> {
    if support.k() != k {
        return Err(SimError::HopMismatch {
            k,
            support: support.k(),
        });
    }
    if support.n() != g.n() {
        return Err(SimError::SizeMismatch {
            n: g.n(),
            support: support.n(),
        });
    }
    let seqs = (0..g.n())
        .map(|u| g.degree_sequence(support.row(u)))
        .collect::<Result<Vec<_>, _>>()?;
    let entries = support
        .upper_pairs()
        .map(|(u, v)| Ok(((u, v), sequence_similarity(&seqs[u], &seqs[v])?)))
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(SimilarityMatrix {
        k,
        n: g.n(),
        entries,
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Cheapest alignment found by enumerating every monotone path from
    /// (0, 0) to (|m|-1, |n|-1). Costs accumulate from the start of the path.
    pub fn dtw_enumerate(m: &[usize], n: &[usize]) -> f64 {
        fn cost(a: usize, b: usize) -> f64 {
            a.max(b) as f64 / a.min(b) as f64 - 1.0
        }
        fn walk(m: &[usize], n: &[usize], i: usize, j: usize, acc: f64, best: &mut f64) {
            if i == m.len() - 1 && j == n.len() - 1 {
                *best = best.min(acc);
                return;
            }
            for (di, dj) in [(1, 0), (1, 1), (0, 1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < m.len() && nj < n.len() {
                    walk(m, n, ni, nj, acc + cost(m[ni], n[nj]), best);
                }
            }
        }
        let mut best = f64::INFINITY;
        walk(m, n, 0, 0, cost(m[0], n[0]), &mut best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::dtw_enumerate;
    use super::*;
    use crate::graph::test_graphs::*;
    use proptest::prelude::*;

    #[test]
    fn cost_examples() {
        assert_eq!(dtw_cost(2, 2).unwrap(), 0.0);
        assert_eq!(dtw_cost(6, 2).unwrap(), 2.0);
        assert_eq!(dtw_cost(2, 6).unwrap(), 2.0);
        assert!(matches!(dtw_cost(0, 3), Err(SimError::ZeroDegree { .. })));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dtw_distance(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[1], &[2]).unwrap(), 1.0);
        assert_eq!(dtw_enumerate(&[1, 3], &[3]), 2.0);
        assert_eq!(dtw_distance(&[1, 3], &[3]).unwrap(), 2.0);
        assert_eq!(dtw_distance(&[], &[1]), Err(SimError::EmptySequence));
        assert!(dtw_distance(&[0], &[1]).is_err());
    }

    #[test]
    fn similarity_conventions() {
        // 0 and 3 isolated, 1-2 an edge.
        let g = from_edges(4, 2, &[(1, 2)]);
        assert_eq!(structural_similarity(&g, 0, 3, 0).unwrap(), 1.0);
        assert_eq!(structural_similarity(&g, 0, 1, 0).unwrap(), 0.0);
        assert_eq!(structural_similarity(&g, 1, 2, 0).unwrap(), 1.0);
        assert_eq!(structural_similarity(&g, 0, 3, 1).unwrap(), 1.0);
        assert_eq!(structural_similarity(&g, 0, 1, 1).unwrap(), 0.0);
        assert_eq!(structural_similarity(&g, 1, 1, 1).unwrap(), 1.0);
        assert_eq!(structural_similarity(&g, 1, 2, 1).unwrap(), 1.0);
    }

    #[test]
    fn regular_graph_is_fully_similar() {
        // 6-cycle: 2-regular.
        let edges: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let g = from_edges(6, 3, &edges);
        let s1 = similarity_matrix(&g, 1, &g.khop_adjacency(1)).unwrap();
        assert_eq!(s1.len(), 6);
        assert!(s1.entries().iter().all(|e| e.1 == 1.0));
    }

    #[test]
    fn random_graph_matches_enumeration_oracle() {
        let g = random(8, 0.35, 3, 11);
        for k in 0..4 {
            for u in 0..8 {
                for v in 0..8 {
                    let a = g.degree_sequence(&g.khop_neighborhood(u, k).unwrap()).unwrap();
                    let b = g.degree_sequence(&g.khop_neighborhood(v, k).unwrap()).unwrap();
                    let expected = match (a.is_empty(), b.is_empty()) {
                        (true, true) => 1.0,
                        _ if a == b => 1.0,
                        _ if a.contains(&0) || b.contains(&0) => 0.0,
                        (false, false) => (-dtw_enumerate(&a, &b)).exp(),
                        _ => 0.0,
                    };
                    let got = structural_similarity(&g, u, v, k).unwrap();
                    assert!((got - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn support_restricted_matrix_matches_dense_recomputation() {
        for seed in 0..5 {
            let g = random(18, 0.15, 4, seed);
            let cache = HopCache::build(&g, 3);
            for k in 0..=3 {
                let adj = g.khop_adjacency(k);
                assert_eq!(cache.adjacency(k), adj);
                let sparse = similarity_matrix(&g, k, &adj).unwrap();
                assert_eq!(cache.similarity_matrix(k), sparse);
                for u in 0..g.n() {
                    for v in 0..g.n() {
                        let dense = structural_similarity(&g, u, v, k).unwrap();
                        match sparse.get(u, v) {
                            Some(s) => {
                                assert!(adj.get(u, v));
                                assert_eq!(s, dense);
                                assert!(s > 0.0 && s <= 1.0);
                            }
                            None => assert!(!adj.get(u, v)),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn support_mismatch_is_rejected() {
        let g = path(4);
        let a1 = g.khop_adjacency(1);
        assert_eq!(
            similarity_matrix(&g, 2, &a1),
            Err(SimError::HopMismatch { k: 2, support: 1 })
        );
        assert!(similarity_matrix(&g, 2, &g.khop_adjacency(3))
            .unwrap_err()
            .to_string()
            .contains("hop 3"));
        let empty = similarity_matrix(&g, 5, &g.khop_adjacency(5)).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn weight_recovers_dtw_distance() {
        let g = random(12, 0.3, 3, 5);
        let s = similarity_matrix(&g, 1, &g.khop_adjacency(1)).unwrap();
        for &((u, v), _) in s.entries() {
            let a = g.degree_sequence(g.neighbors(u).unwrap()).unwrap();
            let b = g.degree_sequence(g.neighbors(v).unwrap()).unwrap();
            let w = dtw_distance(&a, &b).unwrap();
            assert!((s.dtw_weight(u, v).unwrap() - w).abs() < 1e-12 * (1.0 + w));
        }
    }

    fn seq() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..10, 1..7)
    }

    proptest! {
        #[test]
        fn dtw_symmetric_and_bounded(m in seq(), n in seq()) {
            let d = dtw_distance(&m, &n).unwrap();
            prop_assert_eq!(d, dtw_distance(&n, &m).unwrap());
            prop_assert_eq!(dtw_distance(&m, &m).unwrap(), 0.0);
            prop_assert!(d >= 0.0);
            // each of at most |m|+|n|-1 aligned pairs costs at most max-1
            let max = *m.iter().chain(&n).max().unwrap() as f64;
            prop_assert!(d <= (m.len() + n.len() - 1) as f64 * (max - 1.0));
            prop_assert_eq!(d, dtw_enumerate(&m, &n));
        }
    }
}
