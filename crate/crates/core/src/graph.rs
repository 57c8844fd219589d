//! Immutable undirected graph of cortical folding junctions with exact
//! k-hop adjacency, ring neighborhoods, degree sequences and one-hot ROI
//! matrices.
//!
//! "k-hop" always means *exactly* shortest-path distance `k`, so the hop
//! adjacencies `A_0 = I, A_1, A_2, ...` have pairwise disjoint supports.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of ROI labels per graph.
pub const DEFAULT_N_ROIS: usize = 75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("n_rois must be positive")]
    ZeroRois,
    #[error("node ids must be dense 0..{n}: id {id} is missing or duplicated")]
    NonDenseIds { id: usize, n: usize },
    #[error("node {node} has roi {roi} outside [0, {n_rois})")]
    RoiOutOfRange { node: usize, roi: usize, n_rois: usize },
    #[error("edge ({u}, {v}) is a self-loop")]
    SelfLoop { u: usize, v: usize },
    #[error("edge ({u}, {v}) appears more than once")]
    DuplicateEdge { u: usize, v: usize },
    #[error("edge ({u}, {v}) references a node outside 0..{n}")]
    DanglingEdge { u: usize, v: usize, n: usize },
    #[error("node id {id} is not in a graph of {n} nodes")]
    InvalidNode { id: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Left,
    Right,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub roi: usize,
    #[serde(default)]
    pub hemisphere: Hemisphere,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<[f64; 3]>,
}

impl NodeRecord {
    pub fn new(id: usize, roi: usize) -> Self {
        Self {
            id,
            roi,
            hemisphere: Hemisphere::Unspecified,
            pos: None,
        }
    }
}

/// One subject's graph. Construction validates every invariant; afterwards
/// the value is immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct GyralNet {
    subject_id: String,
    n_rois: usize,
    nodes: Vec<NodeRecord>,
    /// Canonical edge list: `u < v`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists.
    adj: Vec<Vec<usize>>,
}

impl GyralNet {
    pub fn new(
        subject_id: impl Into<String>,
        n_rois: usize,
        mut nodes: Vec<NodeRecord>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        if n_rois == 0 {
            return Err(GraphError::ZeroRois);
        }
        let n = nodes.len();
        nodes.sort_by_key(|r| r.id);
        for (expected, rec) in nodes.iter().enumerate() {
            if rec.id != expected {
                return Err(GraphError::NonDenseIds { id: expected, n });
            }
            if rec.roi >= n_rois {
                return Err(GraphError::RoiOutOfRange {
                    node: rec.id,
                    roi: rec.roi,
                    n_rois,
                });
            }
        }

        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::DanglingEdge { u, v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop { u, v });
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            let (u, v) = w[0];
            return Err(GraphError::DuplicateEdge { u, v });
        }

        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &canon {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }

        Ok(Self {
            subject_id: subject_id.into(),
            n_rois,
            nodes,
            edges: canon,
            adj,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn n_rois(&self) -> usize {
        self.n_rois
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, u: usize) -> Result<&NodeRecord, GraphError> {
        self.nodes.get(u).ok_or(GraphError::InvalidNode { id: u, n: self.n() })
    }

    pub fn roi(&self, u: usize) -> Result<usize, GraphError> {
        self.node(u).map(|r| r.roi)
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> Result<&[usize], GraphError> {
        self.check(u)?;
        Ok(&self.adj[u])
    }

    pub fn degree(&self, u: usize) -> Result<usize, GraphError> {
        self.neighbors(u).map(<[usize]>::len)
    }

    /// Returns a copy of this graph under a different subject id.
    pub fn with_subject_id(&self, subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            ..self.clone()
        }
    }

    fn check(&self, u: usize) -> Result<(), GraphError> {
        if u < self.n() {
            Ok(())
        } else {
            Err(GraphError::InvalidNode { id: u, n: self.n() })
        }
    }

    /// BFS from `u`, visiting at most `max_depth` levels. Returns rings
    /// `[g_0(u), g_1(u), ..., g_max_depth(u)]`, each sorted ascending.
    pub fn rings(&self, u: usize, max_depth: usize) -> Result<Vec<Vec<usize>>, GraphError> {
        self.check(u)?;
        let mut dist = vec![usize::MAX; self.n()];
        let mut rings = vec![Vec::new(); max_depth + 1];
        let mut queue = VecDeque::new();
        dist[u] = 0;
        queue.push_back(u);
        while let Some(x) = queue.pop_front() {
            let d = dist[x];
            rings[d].push(x);
            if d == max_depth {
                continue;
            }
            for &y in &self.adj[x] {
                if dist[y] == usize::MAX {
                    dist[y] = d + 1;
                    queue.push_back(y);
                }
            }
        }
        for ring in &mut rings {
            ring.sort_unstable();
        }
        Ok(rings)
    }

    /// Exact distance-`k` neighborhood `g_k(u)`; `g_0(u) = {u}`.
    pub fn khop_neighborhood(&self, u: usize, k: usize) -> Result<Vec<usize>, GraphError> {
        let mut rings = self.rings(u, k)?;
        Ok(rings.swap_remove(k))
    }

    /// Exact distance-`k` adjacency `A_k`.
    pub fn khop_adjacency(&self, k: usize) -> HopAdjacency {
        let rows = (0..self.n())
            .map(|u| self.khop_neighborhood(u, k).expect("node id in range"))
            .collect();
        HopAdjacency { k, rows }
    }

    /// Degrees of `nodes`, sorted ascending.
    pub fn degree_sequence(&self, nodes: &[usize]) -> Result<Vec<usize>, GraphError> {
        let mut seq = nodes
            .iter()
            .map(|&u| self.degree(u))
            .collect::<Result<Vec<_>, _>>()?;
        seq.sort_unstable();
        Ok(seq)
    }

    pub fn roi_onehot(&self) -> RoiMatrix {
        RoiMatrix {
            n_rois: self.n_rois,
            labels: self.nodes.iter().map(|r| r.roi).collect(),
        }
    }
}

/// Sparse binary distance-`k` adjacency. Row `u` lists the `v` with
/// `dist(u, v) = k`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopAdjacency {
    k: usize,
    rows: Vec<Vec<usize>>,
}

impl HopAdjacency {
    pub(crate) fn from_rows(k: usize, rows: Vec<Vec<usize>>) -> Self {
        Self { k, rows }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, u: usize) -> &[usize] {
        &self.rows[u]
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.rows
            .get(u)
            .is_some_and(|row| row.binary_search(&v).is_ok())
    }

    /// Number of stored (ordered) non-zero entries.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.nnz() == 0
    }

    /// Unordered support pairs `(u, v)` with `u <= v`, sorted.
    pub fn upper_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().filter(move |&&v| v >= u).map(move |&v| (u, v)))
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0u8; n];
                for &v in row {
                    dense[v] = 1;
                }
                dense
            })
            .collect()
    }
}

/// One-hot ROI matrix `F` (n x R), stored as one label per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMatrix {
    n_rois: usize,
    labels: Vec<usize>,
}

impl RoiMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn n_rois(&self) -> usize {
        self.n_rois
    }

    pub fn label(&self, u: usize) -> usize {
        self.labels[u]
    }

    pub fn get(&self, u: usize, r: usize) -> f64 {
        if self.labels[u] == r {
            1.0
        } else {
            0.0
        }
    }

    pub fn row(&self, u: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_rois];
        row[self.labels[u]] = 1.0;
        row
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|u| self.row(u)).collect()
    }

    /// Per-ROI node counts.
    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_rois];
        for &r in &self.labels {
            counts[r] += 1;
        }
        counts
    }
}

#[cfg(test)]
pub(crate) mod test_graphs {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn from_edges(n: usize, n_rois: usize, edges: &[(usize, usize)]) -> GyralNet {
        let nodes = (0..n).map(|i| NodeRecord::new(i, i % n_rois)).collect();
        GyralNet::new("t", n_rois, nodes, edges.to_vec()).unwrap()
    }

    pub fn path(n: usize) -> GyralNet {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        from_edges(n, 3, &edges)
    }

    /// Erdos-Renyi style graph with random ROI labels.
    pub fn random(n: usize, p: f64, n_rois: usize, seed: u64) -> GyralNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let nodes = (0..n)
            .map(|i| NodeRecord::new(i, rng.gen_range(0..n_rois)))
            .collect();
        GyralNet::new(format!("rand{seed}"), n_rois, nodes, edges).unwrap()
    }

    /// All-pairs BFS distances, independent of `rings`.
    pub fn all_pairs_distances(g: &GyralNet) -> Vec<Vec<Option<usize>>> {
        let n = g.n();
        let mut out = vec![vec![None; n]; n];
        for (s, row) in out.iter_mut().enumerate() {
            row[s] = Some(0);
            let mut frontier = vec![s];
            let mut d = 0;
            while !frontier.is_empty() {
                d += 1;
                let mut next = Vec::new();
                for &x in &frontier {
                    for &(a, b) in g.edges() {
                        let y = if a == x {
                            b
                        } else if b == x {
                            a
                        } else {
                            continue;
                        };
                        if row[y].is_none() {
                            row[y] = Some(d);
                            next.push(y);
                        }
                    }
                }
                frontier = next;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::test_graphs::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_valid_graph() {
        let g = from_edges(2, 75, &[(0, 1)]);
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn rejects_invalid_graphs() {
        let nodes = || vec![NodeRecord::new(0, 0), NodeRecord::new(1, 0)];
        assert_eq!(
            GyralNet::new("s", 75, nodes(), vec![(0, 0)]),
            Err(GraphError::SelfLoop { u: 0, v: 0 })
        );
        assert_eq!(
            GyralNet::new("s", 75, nodes(), vec![(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge { u: 0, v: 1 })
        );
        assert_eq!(
            GyralNet::new("s", 75, nodes(), vec![(0, 2)]),
            Err(GraphError::DanglingEdge { u: 0, v: 2, n: 2 })
        );
        assert!(matches!(
            GyralNet::new("s", 75, vec![NodeRecord::new(0, 75)], vec![]),
            Err(GraphError::RoiOutOfRange { roi: 75, .. })
        ));
        assert!(matches!(
            GyralNet::new("s", 3, vec![NodeRecord::new(0, 0), NodeRecord::new(2, 0)], vec![]),
            Err(GraphError::NonDenseIds { id: 1, .. })
        ));
    }

    #[test]
    fn path_hop_adjacency() {
        let g = path(3);
        let a2 = g.khop_adjacency(2);
        assert_eq!(a2.upper_pairs().collect::<Vec<_>>(), vec![(0, 2)]);
        assert!(a2.get(2, 0));
        let a0 = g.khop_adjacency(0);
        for u in 0..3 {
            assert_eq!(a0.row(u), &[u]);
        }
        assert_eq!(g.khop_neighborhood(0, 1).unwrap(), vec![1]);
    }

    #[test]
    fn triangle_has_no_two_hop_pairs() {
        let g = from_edges(3, 3, &[(0, 1), (1, 2), (0, 2)]);
        let dist = all_pairs_distances(&g);
        assert!(dist.iter().flatten().all(|d| d.unwrap() <= 1));
        assert!(g.khop_adjacency(2).is_zero());
    }

    #[test]
    fn isolated_node_has_empty_rings() {
        let g = from_edges(3, 3, &[(0, 1)]);
        assert!(g.khop_neighborhood(2, 1).unwrap().is_empty());
        assert!(g.khop_neighborhood(2, 3).unwrap().is_empty());
        assert_eq!(g.khop_neighborhood(2, 0).unwrap(), vec![2]);
        assert!(matches!(
            g.khop_neighborhood(3, 1),
            Err(GraphError::InvalidNode { id: 3, n: 3 })
        ));
    }

    #[test]
    fn neighborhoods_match_bfs_oracle() {
        for seed in 0..10 {
            let g = random(10, 0.25, 4, seed);
            let dist = all_pairs_distances(&g);
            for u in 0..g.n() {
                for k in 0..6 {
                    let expected: Vec<usize> =
                        (0..g.n()).filter(|&v| dist[u][v] == Some(k)).collect();
                    assert_eq!(g.khop_neighborhood(u, k).unwrap(), expected);
                    let a = g.khop_adjacency(k);
                    assert_eq!(a.row(u), expected.as_slice());
                }
            }
        }
    }

    #[test]
    fn degree_sequences() {
        let g = from_edges(4, 3, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(g.degree_sequence(&[1, 2, 3]).unwrap(), vec![1, 1, 1]);
        assert_eq!(g.degree_sequence(&[3, 0, 1]).unwrap(), vec![1, 1, 3]);
        assert!(g.degree_sequence(&[]).unwrap().is_empty());
        assert!(g.degree_sequence(&[4]).is_err());

        let g = random(20, 0.2, 5, 7);
        let mut counts = vec![0usize; g.n()];
        for &(u, v) in g.edges() {
            counts[u] += 1;
            counts[v] += 1;
        }
        counts.sort_unstable();
        let all: Vec<usize> = (0..g.n()).collect();
        assert_eq!(g.degree_sequence(&all).unwrap(), counts);
    }

    #[test]
    fn roi_onehot_rows_and_columns() {
        let g = GyralNet::new("s", 3, vec![NodeRecord::new(0, 0)], vec![]).unwrap();
        assert_eq!(g.roi_onehot().to_dense(), vec![vec![1.0, 0.0, 0.0]]);

        let g = random(25, 0.1, 6, 3);
        let f = g.roi_onehot();
        let dense = f.to_dense();
        for row in &dense {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        let mut hist = vec![0usize; 6];
        for rec in g.nodes() {
            hist[rec.roi] += 1;
        }
        for r in 0..6 {
            let col: f64 = dense.iter().map(|row| row[r]).sum();
            assert_eq!(col as usize, hist[r]);
        }
        assert_eq!(f.histogram(), hist);
    }

    proptest! {
        #[test]
        fn hop_supports_partition_reachable_pairs(seed in 0u64..500, n in 2usize..16) {
            let g = random(n, 0.2, 3, seed);
            let dist = all_pairs_distances(&g);
            let mut cover = vec![vec![0u32; n]; n];
            for k in 0..n {
                let a = g.khop_adjacency(k);
                for u in 0..n {
                    for &v in a.row(u) {
                        cover[u][v] += 1;
                        prop_assert!(a.get(v, u));
                    }
                }
            }
            for u in 0..n {
                for v in 0..n {
                    let expected = u32::from(dist[u][v].is_some());
                    prop_assert_eq!(cover[u][v], expected);
                }
            }
            let all: Vec<usize> = (0..n).collect();
            let seq = g.degree_sequence(&all).unwrap();
            prop_assert!(seq.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
