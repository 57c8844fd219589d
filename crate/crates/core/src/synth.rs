//! Synthetic populations with known correspondences.
//!
//! A template graph is built on points scattered over the unit sphere: a
//! Euclidean minimum spanning tree keeps it connected, then the shortest
//! remaining chords are added until the mean degree reaches the target.
//! ROI labels are spherical k-means patches. Subjects are perturbed copies
//! of the template (node drop, edge rewiring, id permutation) and the
//! ground truth records where every surviving template node went.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspond::CorrespondenceTruth;
use crate::derive_seed;
use crate::graph::{GraphError, GyralNet, Hemisphere, NodeRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("infeasible population spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn default_nodes() -> usize {
    200
}
fn default_rois() -> usize {
    crate::graph::DEFAULT_N_ROIS
}
fn default_subjects() -> usize {
    10
}
fn default_frac() -> f64 {
    0.05
}
fn default_degree() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(default = "default_nodes")]
    pub n_nodes: usize,
    #[serde(default = "default_rois")]
    pub n_rois: usize,
    #[serde(default = "default_subjects")]
    pub n_subjects: usize,
    #[serde(default = "default_frac")]
    pub edge_rewire_frac: f64,
    #[serde(default = "default_frac")]
    pub node_drop_frac: f64,
    #[serde(default = "default_degree")]
    pub degree_target: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            n_nodes: default_nodes(),
            n_rois: default_rois(),
            n_subjects: default_subjects(),
            edge_rewire_frac: default_frac(),
            node_drop_frac: default_frac(),
            degree_target: default_degree(),
            seed: 0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        if self.n_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.n_nodes));
        }
        if self.n_rois == 0 || self.n_rois > self.n_nodes {
            return bad(format!(
                "n_rois must be in 1..={} (n_nodes), got {}",
                self.n_nodes, self.n_rois
            ));
        }
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        for (name, f) in [
            ("edge_rewire_frac", self.edge_rewire_frac),
            ("node_drop_frac", self.node_drop_frac),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must lie in [0, 1], got {f}"));
            }
        }
        if !(self.degree_target >= 0.0 && self.degree_target <= (self.n_nodes - 1) as f64) {
            return bad(format!(
                "degree_target must lie in [0, {}], got {}",
                self.n_nodes - 1,
                self.degree_target
            ));
        }
        Ok(())
    }
}

/// Per subject: template node → subject node, for surviving nodes only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth(pub BTreeMap<String, BTreeMap<usize, usize>>);

impl GroundTruth {
    /// Truth table for matching `anchor` against every other subject.
    pub fn correspondence_truth(&self, anchor: &str) -> Option<CorrespondenceTruth> {
        let anchor_map = self.0.get(anchor)?;
        let mut out = BTreeMap::new();
        for (subject, map) in &self.0 {
            if subject == anchor {
                continue;
            }
            for (template_node, &anchor_node) in anchor_map {
                out.insert(
                    (subject.clone(), anchor_node),
                    map.get(template_node).copied(),
                );
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub template: GyralNet,
    pub subjects: Vec<GyralNet>,
    pub truth: GroundTruth,
}

fn sphere_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| a[i] * b[i]).sum()
}

/// Prim's algorithm on the complete Euclidean graph.
fn spanning_tree(points: &[[f64; 3]]) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![(f64::INFINITY, 0usize); n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    in_tree[0] = true;
    for v in 1..n {
        best[v] = (dist2(&points[0], &points[v]), 0);
    }
    for _ in 1..n {
        let (next, _) = (0..n)
            .filter(|&v| !in_tree[v])
            .map(|v| (v, best[v].0))
            .fold((usize::MAX, f64::INFINITY), |acc, (v, d)| if d < acc.1 { (v, d) } else { acc });
        in_tree[next] = true;
        let parent = best[next].1;
        edges.push((parent.min(next), parent.max(next)));
        for v in 0..n {
            if !in_tree[v] {
                let d = dist2(&points[next], &points[v]);
                if d < best[v].0 {
                    best[v] = (d, next);
                }
            }
        }
    }
    edges
}

/// Spherical k-means labels; centres start at random points.
fn spherical_patches(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<[f64; 3]>) {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.shuffle(rng);
    let mut centers: Vec<[f64; 3]> = idx[..k].iter().map(|&i| points[i]).collect();
    let assign = |centers: &[[f64; 3]]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = (0, f64::NEG_INFINITY);
                for (c, center) in centers.iter().enumerate() {
                    let s = dot3(p, center);
                    if s > best.1 {
                        best = (c, s);
                    }
                }
                best.0
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..30 {
        let mut sums = vec![[0.0; 3]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for i in 0..3 {
                sums[l][i] += p[i];
            }
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            let n = dot3(s, s).sqrt();
            if n > 0.0 {
                *c = [s[0] / n, s[1] / n, s[2] / n];
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    (labels, centers)
}

pub fn generate_template(spec: &PopulationSpec) -> Result<GyralNet, SynthError> {
    spec.validate()?;
    let n = spec.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x7e3f));
    let points: Vec<[f64; 3]> = (0..n).map(|_| sphere_point(&mut rng)).collect();

    let tree = spanning_tree(&points);
    let target_edges = ((spec.degree_target * n as f64) / 2.0).round() as usize;
    let mut edges: BTreeSet<(usize, usize)> = tree.into_iter().collect();
    if target_edges > edges.len() {
        let mut chords: Vec<(f64, usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|e| !edges.contains(e))
            .map(|(u, v)| (dist2(&points[u], &points[v]), u, v))
            .collect();
        chords.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let missing = target_edges - edges.len();
        edges.extend(chords.into_iter().take(missing).map(|(_, u, v)| (u, v)));
    }

    let (labels, centers) = spherical_patches(&points, spec.n_rois, &mut rng);
    let nodes = points
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(id, (p, &roi))| NodeRecord {
            id,
            roi,
            hemisphere: if centers[roi][0] < 0.0 {
                Hemisphere::Left
            } else {
                Hemisphere::Right
            },
            pos: Some(*p),
        })
        .collect();
    Ok(GyralNet::new("template", spec.n_rois, nodes, edges.into_iter().collect())?)
}

/// Perturbed copy of `template`. Returns the subject graph and the map from
/// template node to subject node for nodes that survived.
pub fn derive_subject(
    template: &GyralNet,
    spec: &PopulationSpec,
    subject_id: &str,
    subject_seed: u64,
) -> Result<(GyralNet, BTreeMap<usize, usize>), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(subject_seed);
    let n = template.n();
    let n_drop = (spec.node_drop_frac * n as f64).round() as usize;
    if n_drop >= n {
        return Err(SynthError::Infeasible(format!(
            "dropping {n_drop} of {n} nodes leaves an empty graph"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let dropped: BTreeSet<usize> = order[..n_drop].iter().copied().collect();
    let survivors: Vec<usize> = (0..n).filter(|u| !dropped.contains(u)).collect();

    let kept: Vec<(usize, usize)> = template
        .edges()
        .iter()
        .copied()
        .filter(|(u, v)| !dropped.contains(u) && !dropped.contains(v))
        .collect();
    let mut edges: BTreeSet<(usize, usize)> = kept.iter().copied().collect();
    let n_rewire = (spec.edge_rewire_frac * kept.len() as f64).round() as usize;
    let mut pick: Vec<usize> = (0..kept.len()).collect();
    pick.shuffle(&mut rng);
    for &e in &pick[..n_rewire] {
        let (u, v) = kept[e];
        if !edges.remove(&(u, v)) {
            continue;
        }
        let anchor = if rng.gen_bool(0.5) { u } else { v };
        let mut placed = false;
        for _ in 0..100 {
            let w = survivors[rng.gen_range(0..survivors.len())];
            let cand = (anchor.min(w), anchor.max(w));
            if w != anchor && cand != (u, v) && !edges.contains(&cand) {
                edges.insert(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            edges.insert((u, v));
        }
    }

    let mut perm = survivors.clone();
    perm.shuffle(&mut rng);
    let to_subject: BTreeMap<usize, usize> =
        perm.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let nodes = perm
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let rec = &template.nodes()[old];
            NodeRecord { id: new, ..rec.clone() }
        })
        .collect();
    let edges = edges
        .into_iter()
        .map(|(u, v)| (to_subject[&u], to_subject[&v]))
        .collect();
    let g = GyralNet::new(subject_id, template.n_rois(), nodes, edges)?;
    Ok((g, to_subject))
}

pub fn subject_name(i: usize) -> String {
    format!("subj{i:03}")
}

/// Template plus `n_subjects` derived subjects named `subj000`, `subj001`, ...
pub fn generate_population(spec: &PopulationSpec) -> Result<Population, SynthError> {
    let template = generate_template(spec)?;
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    let mut truth = BTreeMap::new();
    for i in 0..spec.n_subjects {
        let name = subject_name(i);
        let seed = derive_seed(spec.seed, 0x1_0000 + i as u64);
        let (g, map) = derive_subject(&template, spec, &name, seed)?;
        subjects.push(g);
        truth.insert(name, map);
    }
    Ok(Population {
        template,
        subjects,
        truth: GroundTruth(truth),
    })
}
