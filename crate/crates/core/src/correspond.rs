//! Cross-subject node correspondence by cosine similarity of embeddings.
//!
//! For each anchor node and each target subject, the target node with the
//! highest cosine score is the match, kept only when the score reaches the
//! threshold. Other target nodes scoring within `epsilon` of the best are
//! competing points. Matches are not required to be one-to-one.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoencoder::LatentEmbedding;
use crate::graph::{GyralNet, Hemisphere};

pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("embedding widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("target subject {0} has no embeddings")]
    EmptyTarget(String),
    #[error("anchor set is empty")]
    EmptyAnchor,
    #[error("anchor embeddings come from several subjects ({0}, {1})")]
    MixedAnchor(String, String),
    #[error("node {node} of subject {subject} cannot be resolved")]
    Unresolvable { subject: String, node: usize },
    #[error("no ground-truth entry for anchor node {node} in subject {subject}")]
    MissingTruth { subject: String, node: usize },
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MatchError> {
    if a.len() != b.len() {
        return Err(MatchError::WidthMismatch(a.len(), b.len()));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(MatchError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub anchor_node: usize,
    pub target_subject: String,
    pub target_node: usize,
    pub score: f64,
    /// Other target nodes of the same subject with `score > best - epsilon`,
    /// sorted by node id.
    pub competing: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub anchor_subject: String,
    pub threshold: f64,
    pub epsilon: f64,
    /// Anchor nodes that were considered, whether or not they matched.
    pub anchor_nodes: Vec<usize>,
    /// Sorted by (anchor node, target subject).
    pub matches: Vec<Match>,
}

impl CorrespondenceSet {
    /// Matched target node for `(anchor node, target subject)`.
    pub fn get(&self, anchor_node: usize, target_subject: &str) -> Option<&Match> {
        self.matches
            .iter()
            .find(|m| m.anchor_node == anchor_node && m.target_subject == target_subject)
    }

    /// Anchor nodes with at least one match.
    pub fn matched_anchors(&self) -> BTreeSet<usize> {
        self.matches.iter().map(|m| m.anchor_node).collect()
    }
}

/// Exhaustive matching of every anchor node against every target subject.
pub fn match_population(
    anchor: &[LatentEmbedding],
    targets: &BTreeMap<String, Vec<LatentEmbedding>>,
    threshold: f64,
    epsilon: f64,
) -> Result<CorrespondenceSet, MatchError> {
    let first = anchor.first().ok_or(MatchError::EmptyAnchor)?;
    let width = first.delta.len();
    if let Some(other) = anchor.iter().find(|e| e.subject_id != first.subject_id) {
        return Err(MatchError::MixedAnchor(
            first.subject_id.clone(),
            other.subject_id.clone(),
        ));
    }

    let normalize = |e: &LatentEmbedding| -> Result<(usize, f64), MatchError> {
        if e.delta.len() != width {
            return Err(MatchError::WidthMismatch(width, e.delta.len()));
        }
        let n = norm(&e.delta);
        if n == 0.0 {
            return Err(MatchError::ZeroVector);
        }
        Ok((e.node, n))
    };
    let anchor_norms = anchor.iter().map(normalize).collect::<Result<Vec<_>, _>>()?;
    let mut target_norms = BTreeMap::new();
    for (subject, embs) in targets {
        if embs.is_empty() {
            return Err(MatchError::EmptyTarget(subject.clone()));
        }
        target_norms.insert(subject, embs.iter().map(normalize).collect::<Result<Vec<_>, _>>()?);
    }

    let mut matches = Vec::new();
    for (a, &(anchor_node, na)) in anchor.iter().zip(&anchor_norms) {
        for (subject, embs) in targets {
            let norms = &target_norms[subject];
            let scores: Vec<(usize, f64)> = embs
                .iter()
                .zip(norms)
                .map(|(t, &(node, nt))| (node, (dot(&a.delta, &t.delta) / (na * nt)).clamp(-1.0, 1.0)))
                .collect();
            let &(best_node, best) = scores
                .iter()
                .reduce(|acc, s| {
                    if s.1 > acc.1 || (s.1 == acc.1 && s.0 < acc.0) {
                        s
                    } else {
                        acc
                    }
                })
                .expect("target subject is non-empty");
            if best < threshold {
                continue;
            }
            let mut competing: Vec<usize> = scores
                .iter()
                .filter(|&&(node, s)| node != best_node && s > best - epsilon)
                .map(|&(node, _)| node)
                .collect();
            competing.sort_unstable();
            matches.push(Match {
                anchor_node,
                target_subject: subject.clone(),
                target_node: best_node,
                score: best,
                competing,
            });
        }
    }
    matches.sort_by(|x, y| {
        (x.anchor_node, &x.target_subject).cmp(&(y.anchor_node, &y.target_subject))
    });
    let mut anchor_nodes: Vec<usize> = anchor.iter().map(|e| e.node).collect();
    anchor_nodes.sort_unstable();
    Ok(CorrespondenceSet {
        anchor_subject: first.subject_id.clone(),
        threshold,
        epsilon,
        anchor_nodes,
        matches,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HemisphereSplit {
    Total,
    LeftOnly,
    RightOnly,
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

/// Percentage of matches whose anchor and target nodes share an ROI label.
/// The hemisphere split filters on the anchor node. Returns 0 when no match
/// falls in the split.
pub fn roi_hit_rate(
    corr: &CorrespondenceSet,
    graphs: &BTreeMap<String, GyralNet>,
    split: HemisphereSplit,
) -> Result<f64, MatchError> {
    let resolve = |subject: &str, node: usize| {
        graphs
            .get(subject)
            .and_then(|g| g.node(node).ok())
            .ok_or_else(|| MatchError::Unresolvable {
                subject: subject.to_owned(),
                node,
            })
    };
    let (mut hits, mut total) = (0, 0);
    for m in &corr.matches {
        let a = resolve(&corr.anchor_subject, m.anchor_node)?;
        let t = resolve(&m.target_subject, m.target_node)?;
        let keep = match split {
            HemisphereSplit::Total => true,
            HemisphereSplit::LeftOnly => a.hemisphere == Hemisphere::Left,
            HemisphereSplit::RightOnly => a.hemisphere == Hemisphere::Right,
        };
        if keep {
            total += 1;
            hits += usize::from(a.roi == t.roi);
        }
    }
    Ok(percent(hits, total))
}

/// Percentage of matched anchor nodes none of whose matches has a competing
/// point.
pub fn uniqueness_rate(corr: &CorrespondenceSet) -> f64 {
    let mut ambiguous: BTreeMap<usize, bool> = BTreeMap::new();
    for m in &corr.matches {
        *ambiguous.entry(m.anchor_node).or_default() |= !m.competing.is_empty();
    }
    let unique = ambiguous.values().filter(|&&a| !a).count();
    percent(unique, ambiguous.len())
}

/// Ground truth for correspondence: `(target subject, anchor node)` maps to
/// the true target node, or `None` when the anchor node has no counterpart
/// in that subject.
pub type CorrespondenceTruth = BTreeMap<(String, usize), Option<usize>>;

/// Percentage of matches that hit the true corresponding node. Matches whose
/// anchor has no counterpart count as misses.
pub fn ground_truth_accuracy(
    corr: &CorrespondenceSet,
    truth: &CorrespondenceTruth,
) -> Result<f64, MatchError> {
    let mut hits = 0;
    for m in &corr.matches {
        let expected = truth
            .get(&(m.target_subject.clone(), m.anchor_node))
            .ok_or_else(|| MatchError::MissingTruth {
                subject: m.target_subject.clone(),
                node: m.anchor_node,
            })?;
        hits += usize::from(*expected == Some(m.target_node));
    }
    Ok(percent(hits, corr.matches.len()))
}
