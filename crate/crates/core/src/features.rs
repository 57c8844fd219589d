//! Structural-similarity-enhanced hierarchical multi-hop features.
//!
//! For node `i` and max hop `l` the feature is an `(l+1) x R` matrix whose
//! row `k` is row `i` of `(S_k ⊙ A_k) F`: every distance-`k` neighbor `v`
//! contributes `S_k(i, v)` to the column of its ROI. Row 0 uses `A_0 = I`
//! and `S_0(i, i) = 1`, so it is the node's own one-hot ROI vector.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::graph::{GyralNet, HopAdjacency, RoiMatrix};
use crate::struct_sim::{HopCache, SimilarityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("max hop must be at least 1")]
    NoHops,
    #[error("expected {expected} per-hop matrices for hops 1..={expected}, got {got}")]
    HopCount { expected: usize, got: usize },
    #[error("matrix at position {index} is for hop {found}, expected hop {expected}")]
    HopOrder {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("subject {subject} has {found} ROIs, expected {expected}")]
    InconsistentRois {
        subject: String,
        expected: usize,
        found: usize,
    },
    #[error("subject id {0} appears more than once")]
    DuplicateSubject(String),
    #[error("node {node} is not in subject {subject}")]
    InvalidNode { subject: String, node: usize },
    #[error("samples disagree on hops/ROI count")]
    MixedShapes,
}

/// `χ_i`: an `(hops+1) x n_rois` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHopFeature {
    pub subject_id: String,
    pub node: usize,
    pub hops: usize,
    pub n_rois: usize,
    pub data: Vec<f64>,
}

impl MultiHopFeature {
    pub fn zeros(subject_id: impl Into<String>, node: usize, hops: usize, n_rois: usize) -> Self {
        Self {
            subject_id: subject_id.into(),
            node,
            hops,
            n_rois,
            data: vec![0.0; (hops + 1) * n_rois],
        }
    }

    pub fn rows(&self) -> usize {
        self.hops + 1
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_rois..(k + 1) * self.n_rois]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_rois..(k + 1) * self.n_rois]
    }

    pub fn get(&self, k: usize, r: usize) -> f64 {
        self.data[k * self.n_rois + r]
    }

    /// Keeps only rows `0..=hops`.
    pub fn truncated(&self, hops: usize) -> Self {
        let hops = hops.min(self.hops);
        Self {
            subject_id: self.subject_id.clone(),
            node: self.node,
            hops,
            n_rois: self.n_rois,
            data: self.data[..(hops + 1) * self.n_rois].to_vec(),
        }
    }
}

fn check_inputs(
    g: &GyralNet,
    hops: usize,
    sims: &[SimilarityMatrix],
    adjs: &[HopAdjacency],
    roi: &RoiMatrix,
) -> Result<(), FeatureError> {
    if hops < 1 {
        return Err(FeatureError::NoHops);
    }
    for got in [sims.len(), adjs.len()] {
        if got != hops {
            return Err(FeatureError::HopCount {
                expected: hops,
                got,
            });
        }
    }
    for (index, (s, a)) in sims.iter().zip(adjs).enumerate() {
        for found in [s.k(), a.k()] {
            if found != index + 1 {
                return Err(FeatureError::HopOrder {
                    index,
                    expected: index + 1,
                    found,
                });
            }
        }
        if s.n() != g.n() || a.n() != g.n() {
            return Err(FeatureError::Dimension(format!(
                "hop {} matrices have {} / {} rows, graph has {} nodes",
                index + 1,
                s.n(),
                a.n(),
                g.n()
            )));
        }
    }
    if roi.n() != g.n() || roi.n_rois() != g.n_rois() {
        return Err(FeatureError::Dimension(format!(
            "ROI matrix is {}x{}, graph needs {}x{}",
            roi.n(),
            roi.n_rois(),
            g.n(),
            g.n_rois()
        )));
    }
    Ok(())
}

/// Feature of node `i` from precomputed `S_k` / `A_k` for `k = 1..=hops`
/// (element `k-1` of each slice is hop `k`).
pub fn multihop_feature(
    g: &GyralNet,
    i: usize,
    hops: usize,
    sims: &[SimilarityMatrix],
    adjs: &[HopAdjacency],
    roi: &RoiMatrix,
) -> Result<MultiHopFeature, FeatureError> {
    check_inputs(g, hops, sims, adjs, roi)?;
    if i >= g.n() {
        return Err(FeatureError::InvalidNode {
            subject: g.subject_id().to_owned(),
            node: i,
        });
    }
    Ok(feature_unchecked(g.subject_id(), i, hops, sims, adjs, roi))
}

fn feature_unchecked(
    subject_id: &str,
    i: usize,
    hops: usize,
    sims: &[SimilarityMatrix],
    adjs: &[HopAdjacency],
    roi: &RoiMatrix,
) -> MultiHopFeature {
    let mut chi = MultiHopFeature::zeros(subject_id, i, hops, roi.n_rois());
    chi.row_mut(0)[roi.label(i)] = 1.0;
    for k in 1..=hops {
        let (s, a) = (&sims[k - 1], &adjs[k - 1]);
        let row = chi.row_mut(k);
        for &v in a.row(i) {
            row[roi.label(v)] += s.get(i, v).expect("similarity stored on the whole support");
        }
    }
    chi
}

/// Per-subject hop structure: `A_k` and `S_k` for `k = 1..=hops`, built once.
#[derive(Debug, Clone)]
pub struct SubjectHops {
    pub hops: usize,
    pub adjs: Vec<HopAdjacency>,
    pub sims: Vec<SimilarityMatrix>,
}

impl SubjectHops {
    pub fn build(g: &GyralNet, hops: usize) -> Result<Self, FeatureError> {
        if hops < 1 {
            return Err(FeatureError::NoHops);
        }
        let cache = HopCache::build(g, hops);
        Ok(Self {
            hops,
            adjs: (1..=hops).map(|k| cache.adjacency(k)).collect(),
            sims: (1..=hops).map(|k| cache.similarity_matrix(k)).collect(),
        })
    }
}

/// One feature per node of `g`, in node-id order.
pub fn encode_subject(g: &GyralNet, hops: usize) -> Result<Vec<MultiHopFeature>, FeatureError> {
    let cached = SubjectHops::build(g, hops)?;
    encode_subject_with(g, &cached)
}

pub fn encode_subject_with(
    g: &GyralNet,
    cached: &SubjectHops,
) -> Result<Vec<MultiHopFeature>, FeatureError> {
    let roi = g.roi_onehot();
    check_inputs(g, cached.hops, &cached.sims, &cached.adjs, &roi)?;
    Ok((0..g.n())
        .map(|i| feature_unchecked(g.subject_id(), i, cached.hops, &cached.sims, &cached.adjs, &roi))
        .collect())
}

/// Features for a population of subjects, ordered by subject id then node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    hops: usize,
    n_rois: usize,
    samples: Vec<MultiHopFeature>,
    index: HashMap<(String, usize), usize>,
}

impl FeatureDataset {
    pub fn new(hops: usize, n_rois: usize, samples: Vec<MultiHopFeature>) -> Result<Self, FeatureError> {
        let mut index = HashMap::with_capacity(samples.len());
        for (pos, s) in samples.iter().enumerate() {
            if s.hops != hops || s.n_rois != n_rois || s.data.len() != (hops + 1) * n_rois {
                return Err(FeatureError::MixedShapes);
            }
            if index.insert((s.subject_id.clone(), s.node), pos).is_some() {
                return Err(FeatureError::DuplicateSubject(s.subject_id.clone()));
            }
        }
        Ok(Self {
            hops,
            n_rois,
            samples,
            index,
        })
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn n_rois(&self) -> usize {
        self.n_rois
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[MultiHopFeature] {
        &self.samples
    }

    pub fn get(&self, subject_id: &str, node: usize) -> Option<&MultiHopFeature> {
        self.index
            .get(&(subject_id.to_owned(), node))
            .map(|&i| &self.samples[i])
    }

    /// Distinct subject ids in sample order.
    pub fn subjects(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.subject_id.as_str()))
            .map(|s| s.subject_id.as_str())
            .collect()
    }

    /// Dataset restricted to the given subjects.
    pub fn filter_subjects(&self, keep: &BTreeSet<String>) -> Self {
        let samples = self
            .samples
            .iter()
            .filter(|s| keep.contains(&s.subject_id))
            .cloned()
            .collect();
        Self::new(self.hops, self.n_rois, samples).expect("subset of a valid dataset")
    }
}

pub fn encode_population(graphs: &[GyralNet], hops: usize) -> Result<FeatureDataset, FeatureError> {
    if hops < 1 {
        return Err(FeatureError::NoHops);
    }
    let n_rois = graphs.first().map_or(0, GyralNet::n_rois);
    let mut order: Vec<&GyralNet> = graphs.iter().collect();
    order.sort_by(|a, b| a.subject_id().cmp(b.subject_id()));
    for w in order.windows(2) {
        if w[0].subject_id() == w[1].subject_id() {
            return Err(FeatureError::DuplicateSubject(w[0].subject_id().to_owned()));
        }
    }
    let mut samples = Vec::new();
    for g in order {
        if g.n_rois() != n_rois {
            return Err(FeatureError::InconsistentRois {
                subject: g.subject_id().to_owned(),
                expected: n_rois,
                found: g.n_rois(),
            });
        }
        samples.extend(encode_subject(g, hops)?);
    }
    FeatureDataset::new(hops, n_rois, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::*;
    use crate::graph::NodeRecord;
    use crate::struct_sim::{dtw_distance, similarity_matrix, structural_similarity};

    /// Dense `(S_k ⊙ A_k) F` with full n x n matrices.
    fn dense_oracle(g: &GyralNet, hops: usize) -> Vec<Vec<Vec<f64>>> {
        let n = g.n();
        let f = g.roi_onehot().to_dense();
        let mut out = vec![vec![vec![0.0; g.n_rois()]; hops + 1]; n];
        for k in 0..=hops {
            let a = g.khop_adjacency(k).to_dense();
            let mut s = vec![vec![0.0; n]; n];
            for u in 0..n {
                for v in 0..n {
                    s[u][v] = structural_similarity(g, u, v, k).unwrap();
                }
            }
            for i in 0..n {
                for r in 0..g.n_rois() {
                    let mut acc = 0.0;
                    for v in 0..n {
                        acc += s[i][v] * f64::from(a[i][v]) * f[v][r];
                    }
                    out[i][k][r] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn two_node_graph() {
        let nodes = vec![NodeRecord::new(0, 1), NodeRecord::new(1, 2)];
        let g = GyralNet::new("s", 3, nodes, vec![(0, 1)]).unwrap();
        let feats = encode_subject(&g, 1).unwrap();
        let s01 = structural_similarity(&g, 0, 1, 1).unwrap();
        assert_eq!(feats[0].row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(feats[0].row(1), &[0.0, 0.0, s01]);
        assert_eq!(feats[1].row(1), &[0.0, s01, 0.0]);
    }

    #[test]
    fn hand_built_six_node_graph() {
        // 0 hub to 1,2,3; 3-4, 4-5. ROIs: 0:0 1:1 2:1 3:2 4:0 5:2
        let rois = [0, 1, 1, 2, 0, 2];
        let nodes = rois.iter().enumerate().map(|(i, &r)| NodeRecord::new(i, r)).collect();
        let g = GyralNet::new("h", 3, nodes, vec![(0, 1), (0, 2), (0, 3), (3, 4), (4, 5)]).unwrap();
        let chi = encode_subject(&g, 1).unwrap();
        // node 0: neighbors 1 (deg1), 2 (deg1), 3 (deg2). g_1(0) degrees [1,1,2].
        let seq0 = [1, 1, 2];
        let s = |nb: &[usize]| (-dtw_distance(&seq0, nb).unwrap()).exp();
        let s01 = s(&[3]);
        let s03 = s(&[2, 3]);
        assert_eq!(chi[0].row(1), &[0.0, 2.0 * s01, s03]);
        assert_eq!(chi[0].row(0), &[1.0, 0.0, 0.0]);
        // node 4: neighbors 3 (deg 2) and 5 (deg 1); g_1(4) = [1, 2],
        // g_1(3) = {0, 4} -> [2, 3], g_1(5) = {4} -> [2].
        let s43 = (-dtw_distance(&[1, 2], &[2, 3]).unwrap()).exp();
        let s45 = (-dtw_distance(&[1, 2], &[2]).unwrap()).exp();
        assert_eq!(chi[4].row(1), &[0.0, 0.0, s43 + s45]);
    }

    #[test]
    fn matches_dense_oracle() {
        for seed in 0..6 {
            let g = random(30, 0.08, 5, seed);
            let feats = encode_subject(&g, 3).unwrap();
            let oracle = dense_oracle(&g, 3);
            for (i, chi) in feats.iter().enumerate() {
                for k in 0..=3 {
                    for r in 0..5 {
                        assert!((chi.get(k, r) - oracle[i][k][r]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn explicit_inputs_agree_with_subject_encoding() {
        let g = random(15, 0.2, 4, 9);
        let adjs: Vec<_> = (1..=2).map(|k| g.khop_adjacency(k)).collect();
        let sims: Vec<_> = adjs.iter().map(|a| similarity_matrix(&g, a.k(), a).unwrap()).collect();
        let f = g.roi_onehot();
        let all = encode_subject(&g, 2).unwrap();
        for i in 0..g.n() {
            assert_eq!(multihop_feature(&g, i, 2, &sims, &adjs, &f).unwrap(), all[i]);
        }
        assert_eq!(
            multihop_feature(&g, 0, 2, &sims[..1], &adjs[..1], &f),
            Err(FeatureError::HopCount { expected: 2, got: 1 })
        );
        let swapped = vec![sims[1].clone(), sims[0].clone()];
        assert!(matches!(
            multihop_feature(&g, 0, 2, &swapped, &adjs, &f),
            Err(FeatureError::HopOrder { .. })
        ));
        assert_eq!(multihop_feature(&g, 0, 0, &[], &[], &f), Err(FeatureError::NoHops));
        let other = random(16, 0.2, 4, 9).roi_onehot();
        assert!(matches!(
            multihop_feature(&g, 0, 2, &sims, &adjs, &other),
            Err(FeatureError::Dimension(_))
        ));
    }

    #[test]
    fn feature_invariants() {
        let g = random(40, 0.06, 6, 21);
        let feats = encode_subject(&g, 3).unwrap();
        let short = encode_subject(&g, 1).unwrap();
        for (i, chi) in feats.iter().enumerate() {
            assert_eq!(chi.row(0), g.roi_onehot().row(i).as_slice());
            assert_eq!(chi.truncated(1), short[i]);
            for k in 1..=3 {
                let ring = g.khop_neighborhood(i, k).unwrap();
                let mut counts = vec![0.0; 6];
                for &v in &ring {
                    counts[g.roi(v).unwrap()] += 1.0;
                }
                let distinct = counts.iter().filter(|&&c| c > 0.0).count();
                let nonzero = chi.row(k).iter().filter(|&&x| x != 0.0).count();
                assert!(nonzero <= distinct);
                assert_eq!(ring.is_empty(), chi.row(k).iter().all(|&x| x == 0.0));
                for r in 0..6 {
                    assert!(chi.get(k, r) >= 0.0 && chi.get(k, r) <= counts[r]);
                }
            }
        }
    }

    #[test]
    fn population_is_order_independent() {
        let a = random(12, 0.2, 4, 1).with_subject_id("a");
        let b = random(14, 0.2, 4, 2).with_subject_id("b");
        let c = random(10, 0.2, 4, 3).with_subject_id("c");
        let d1 = encode_population(&[a.clone(), b.clone(), c.clone()], 2).unwrap();
        let d2 = encode_population(&[c.clone(), a.clone(), b.clone()], 2).unwrap();
        assert_eq!(d1.len(), 36);
        assert_eq!(d1.samples(), d2.samples());
        assert_eq!(d1.subjects(), vec!["a", "b", "c"]);
        for s in d2.samples() {
            assert_eq!(d1.get(&s.subject_id, s.node), Some(s));
        }

        let copies: Vec<_> = (0..3).map(|i| a.with_subject_id(format!("copy{i}"))).collect();
        let d = encode_population(&copies, 1).unwrap();
        assert_eq!(d.len(), 36);
        for node in 0..12 {
            let x = &d.get("copy0", node).unwrap().data;
            assert_eq!(x, &d.get("copy2", node).unwrap().data);
        }

        assert!(matches!(
            encode_population(&[a.clone(), a.clone()], 1),
            Err(FeatureError::DuplicateSubject(_))
        ));
        let mismatched = random(10, 0.2, 5, 4).with_subject_id("z");
        assert!(matches!(
            encode_population(&[a, mismatched], 1),
            Err(FeatureError::InconsistentRois { .. })
        ));
    }
}
