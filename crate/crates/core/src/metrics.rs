//! Reconstruction metrics and ROI-embedding connectivity.
//!
//! Matrices are passed flattened; only the element count has to agree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoencoder::{Autoencoder, ModelError};
use crate::features::FeatureDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0} vs {1} elements")]
    Shape(usize, usize),
    #[error("need at least 2 elements, got {0}")]
    TooShort(usize),
    #[error("correlation is undefined for constant input")]
    Constant,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::Shape(x.len(), y.len()));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn mse(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    if x.is_empty() {
        return Err(MetricError::TooShort(0));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Squared error and count over the entries where `target` is non-zero.
pub fn nonzero_sq_error(target: &[f64], recon: &[f64]) -> Result<(f64, usize), MetricError> {
    check(target, recon)?;
    Ok(target
        .iter()
        .zip(recon)
        .filter(|(t, _)| **t != 0.0)
        .fold((0.0, 0), |(s, n), (t, r)| (s + (t - r).powi(2), n + 1)))
}

/// MSE restricted to non-zero target entries; `None` if there are none.
pub fn nonzero_mse(target: &[f64], recon: &[f64]) -> Result<Option<f64>, MetricError> {
    let (s, n) = nonzero_sq_error(target, recon)?;
    Ok((n > 0).then(|| s / n as f64))
}

/// Pearson correlation of two flattened matrices.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Single-window SSIM. The dynamic range `L` comes from `x` (the ground
/// truth) and is floored at `1e-8`.
pub fn ssim(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l = (hi - lo).max(1e-8);
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let (mx, my) = (mean(x), mean(y));
    let n = x.len() as f64;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
        cov += (a - mx) * (b - my);
    }
    let (vx, vy, cov) = (vx / n, vy / n, cov / n);
    Ok(((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecon {
    pub subject_id: String,
    pub node: usize,
    pub mse: f64,
    pub nonzero_mse: Option<f64>,
    /// `None` when the reconstruction is constant.
    pub pcc: Option<f64>,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub n_samples: usize,
    pub mse: f64,
    /// Pooled over every non-zero target entry of the dataset.
    pub nonzero_mse: f64,
    /// Mean over samples with a defined correlation.
    pub pcc: Option<f64>,
    pub pcc_undefined: usize,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub aggregate: ReconSummary,
    pub samples: Vec<SampleRecon>,
}

pub fn recon_report(ae: &Autoencoder, data: &FeatureDataset) -> Result<ReconReport, MetricError> {
    let mut samples = Vec::with_capacity(data.len());
    let (mut nz_sum, mut nz_count, mut sq_sum, mut elems) = (0.0, 0usize, 0.0, 0usize);
    for chi in data.samples() {
        let (_, dec) = ae.reconstruct(chi)?;
        let m = mse(&chi.data, &dec.chi_hat)?;
        let (s, n) = nonzero_sq_error(&chi.data, &dec.chi_hat)?;
        nz_sum += s;
        nz_count += n;
        sq_sum += m * chi.data.len() as f64;
        elems += chi.data.len();
        let pcc = match pcc(&chi.data, &dec.chi_hat) {
            Ok(v) => Some(v),
            Err(MetricError::Constant) => None,
            Err(e) => return Err(e),
        };
        samples.push(SampleRecon {
            subject_id: chi.subject_id.clone(),
            node: chi.node,
            mse: m,
            nonzero_mse: (n > 0).then(|| s / n as f64),
            pcc,
            ssim: ssim(&chi.data, &dec.chi_hat)?,
        });
    }
    let defined: Vec<f64> = samples.iter().filter_map(|s| s.pcc).collect();
    let aggregate = ReconSummary {
        n_samples: samples.len(),
        mse: if elems > 0 { sq_sum / elems as f64 } else { 0.0 },
        nonzero_mse: if nz_count > 0 { nz_sum / nz_count as f64 } else { 0.0 },
        pcc: (!defined.is_empty()).then(|| mean(&defined)),
        pcc_undefined: samples.len() - defined.len(),
        ssim: if samples.is_empty() {
            0.0
        } else {
            samples.iter().map(|s| s.ssim).sum::<f64>() / samples.len() as f64
        },
    };
    Ok(ReconReport { aggregate, samples })
}

/// Pooled non-zero-entry MSE of a model over a dataset.
pub fn dataset_nonzero_mse(ae: &Autoencoder, data: &FeatureDataset) -> Result<f64, MetricError> {
    let (mut s, mut n) = (0.0, 0usize);
    for chi in data.samples() {
        let (_, dec) = ae.reconstruct(chi)?;
        let (ds, dn) = nonzero_sq_error(&chi.data, &dec.chi_hat)?;
        s += ds;
        n += dn;
    }
    Ok(if n > 0 { s / n as f64 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiPair {
    pub roi_a: usize,
    pub roi_b: usize,
    pub pcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiConnectivity {
    pub top_k: usize,
    /// Highest correlation first; ties broken by `(roi_a, roi_b)`.
    pub pairs: Vec<RoiPair>,
    pub warnings: Vec<String>,
}

/// The ROI encoder's response to each one-hot probe.
pub fn roi_embeddings(ae: &Autoencoder) -> Result<Vec<Vec<f64>>, MetricError> {
    let r = ae.config().n_rois;
    (0..r)
        .map(|i| {
            let mut probe = vec![0.0; r];
            probe[i] = 1.0;
            ae.phi_roi.forward(&probe).map_err(|e| MetricError::Model(e.into()))
        })
        .collect()
}

/// Top `top_k` ROI pairs by correlation of their probe embeddings. ROIs with
/// a constant embedding are skipped and reported in `warnings`.
pub fn roi_connectivity(ae: &Autoencoder, top_k: usize) -> Result<RoiConnectivity, MetricError> {
    let emb = roi_embeddings(ae)?;
    let mut warnings = Vec::new();
    let usable: Vec<bool> = emb
        .iter()
        .enumerate()
        .map(|(r, e)| {
            let ok = e.len() >= 2 && e.iter().any(|&v| v != e[0]);
            if !ok {
                warnings.push(format!("roi {r}: constant embedding, pairs skipped"));
            }
            ok
        })
        .collect();
    let mut pairs = Vec::new();
    for a in 0..emb.len() {
        for b in a + 1..emb.len() {
            if !(usable[a] && usable[b]) {
                continue;
            }
            match pcc(&emb[a], &emb[b]) {
                Ok(p) => pairs.push(RoiPair { roi_a: a, roi_b: b, pcc: p }),
                Err(MetricError::Constant) => {
                    warnings.push(format!("rois {a}, {b}: correlation undefined, skipped"))
                }
                Err(e) => return Err(e),
            }
        }
    }
    pairs.sort_by(|x, y| y.pcc.total_cmp(&x.pcc).then((x.roi_a, x.roi_b).cmp(&(y.roi_a, y.roi_b))));
    pairs.truncate(top_k);
    Ok(RoiConnectivity { top_k, pairs, warnings })
}
