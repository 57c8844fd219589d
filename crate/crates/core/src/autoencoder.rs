//! Two-stage KAN autoencoder.
//!
//! Encoding: each hop row of `χ` (length `R`) goes through the shared
//! `phi_roi` layer to a `d_θ` row of `θ`; the flattened `θ` goes through
//! `phi_mh` to the latent `δ`. Decoding mirrors it: `phi_mh_hat` maps `δ`
//! back to a flattened `θ̂`, and `phi_roi_hat` maps each `θ̂` row to a `χ̂`
//! row.
//!
//! The training objective is the selective reconstruction loss
//!
//! ```text
//! L = ‖(χ̂ - χ) ⊙ (1 + λχ)‖² + ‖(θ̂ - θ) ⊙ (1 + λθ)‖²
//! ```
//!
//! with squared Frobenius norms. The `θ` target (and its mask) is the
//! encoder's current output with gradients stopped.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::features::{FeatureDataset, MultiHopFeature};
use crate::kan::{xavier_init, GridSpec, KanError, KanLayer, ParameterGradients, SplineGrid};
use crate::optim::{adam_step, AdamConfig, AdamState, ReduceOnPlateau};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch} on sample ({subject}, {node})")]
    NonFiniteLoss {
        epoch: usize,
        subject: String,
        node: usize,
    },
    #[error(transparent)]
    Kan(#[from] KanError),
}

fn default_width() -> usize {
    128
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hops: usize,
    pub n_rois: usize,
    #[serde(default = "default_width")]
    pub theta_width: usize,
    #[serde(default = "default_width")]
    pub latent_width: usize,
    #[serde(default)]
    pub grid: GridSpec,
}

impl ModelConfig {
    pub fn new(hops: usize, n_rois: usize) -> Self {
        Self {
            hops,
            n_rois,
            theta_width: default_width(),
            latent_width: default_width(),
            grid: GridSpec::default(),
        }
    }

    pub fn rows(&self) -> usize {
        self.hops + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    config: ModelConfig,
    pub phi_roi: KanLayer,
    pub phi_mh: KanLayer,
    pub phi_mh_hat: KanLayer,
    pub phi_roi_hat: KanLayer,
}

/// `δ` plus the intermediate per-hop ROI embedding `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEmbedding {
    pub subject_id: String,
    pub node: usize,
    pub delta: Vec<f64>,
    /// `(hops+1) x theta_width`, row-major.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// `(hops+1) x theta_width`
    pub theta_hat: Vec<f64>,
    /// `(hops+1) x n_rois`
    pub chi_hat: Vec<f64>,
}

/// Gradients for the four layers, in encoder-to-decoder order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub layers: [ParameterGradients; 4],
}

impl ModelGradients {
    pub fn zeros_like(ae: &Autoencoder) -> Self {
        Self {
            layers: ae.layers().map(ParameterGradients::zeros_like),
        }
    }

    fn fill_zero(&mut self) {
        self.layers.iter_mut().for_each(ParameterGradients::fill_zero);
    }

    fn scale(&mut self, factor: f64) {
        self.layers.iter_mut().for_each(|g| g.scale(factor));
    }
}

impl Autoencoder {
    /// Xavier-initialised model; each layer draws from its own seed stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let grid = SplineGrid::new(config.grid)?;
        let (r, t, z, rows) = (
            config.n_rois,
            config.theta_width,
            config.latent_width,
            config.rows(),
        );
        Ok(Self {
            config,
            phi_roi: xavier_init(r, t, grid.clone(), derive_seed(seed, 1))?,
            phi_mh: xavier_init(rows * t, z, grid.clone(), derive_seed(seed, 2))?,
            phi_mh_hat: xavier_init(z, rows * t, grid.clone(), derive_seed(seed, 3))?,
            phi_roi_hat: xavier_init(t, r, grid, derive_seed(seed, 4))?,
        })
    }

    /// Assembles a model from explicit layers, checking that dimensions chain.
    pub fn from_layers(config: ModelConfig, layers: [KanLayer; 4]) -> Result<Self, ModelError> {
        let [phi_roi, phi_mh, phi_mh_hat, phi_roi_hat] = layers;
        let (r, t, z, rows) = (
            config.n_rois,
            config.theta_width,
            config.latent_width,
            config.rows(),
        );
        let expect = [
            ("phi_roi", &phi_roi, r, t),
            ("phi_mh", &phi_mh, rows * t, z),
            ("phi_mh_hat", &phi_mh_hat, z, rows * t),
            ("phi_roi_hat", &phi_roi_hat, t, r),
        ];
        for (name, layer, d_in, d_out) in expect {
            if layer.d_in() != d_in || layer.d_out() != d_out {
                return Err(ModelError::Shape(format!(
                    "{name} is {}->{}, expected {d_in}->{d_out}",
                    layer.d_in(),
                    layer.d_out()
                )));
            }
        }
        Ok(Self {
            config,
            phi_roi,
            phi_mh,
            phi_mh_hat,
            phi_roi_hat,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> [&KanLayer; 4] {
        [&self.phi_roi, &self.phi_mh, &self.phi_mh_hat, &self.phi_roi_hat]
    }

    pub fn layers_mut(&mut self) -> [&mut KanLayer; 4] {
        [
            &mut self.phi_roi,
            &mut self.phi_mh,
            &mut self.phi_mh_hat,
            &mut self.phi_roi_hat,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    fn check_chi(&self, chi: &[f64]) -> Result<(), ModelError> {
        let expected = self.config.rows() * self.config.n_rois;
        if chi.len() == expected {
            Ok(())
        } else {
            Err(ModelError::Shape(format!(
                "feature has {} entries, model expects {} x {}",
                chi.len(),
                self.config.rows(),
                self.config.n_rois
            )))
        }
    }

    fn check_feature(&self, chi: &MultiHopFeature) -> Result<(), ModelError> {
        if chi.hops != self.config.hops || chi.n_rois != self.config.n_rois {
            return Err(ModelError::Shape(format!(
                "feature is {} x {}, model expects {} x {}",
                chi.rows(),
                chi.n_rois,
                self.config.rows(),
                self.config.n_rois
            )));
        }
        self.check_chi(&chi.data)
    }

    /// `θ` and `δ` for a raw row-major feature matrix.
    pub fn encode_raw(&self, chi: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        self.check_chi(chi)?;
        let mut theta = Vec::with_capacity(self.config.rows() * self.config.theta_width);
        for row in chi.chunks(self.config.n_rois) {
            theta.extend(self.phi_roi.forward(row)?);
        }
        let delta = self.phi_mh.forward(&theta)?;
        Ok((theta, delta))
    }

    pub fn encode(&self, chi: &MultiHopFeature) -> Result<LatentEmbedding, ModelError> {
        self.check_feature(chi)?;
        let (theta, delta) = self.encode_raw(&chi.data)?;
        Ok(LatentEmbedding {
            subject_id: chi.subject_id.clone(),
            node: chi.node,
            delta,
            theta,
        })
    }

    pub fn decode_delta(&self, delta: &[f64]) -> Result<Decoded, ModelError> {
        if delta.len() != self.config.latent_width {
            return Err(ModelError::Shape(format!(
                "latent has {} entries, model expects {}",
                delta.len(),
                self.config.latent_width
            )));
        }
        let theta_hat = self.phi_mh_hat.forward(delta)?;
        let mut chi_hat = Vec::with_capacity(self.config.rows() * self.config.n_rois);
        for row in theta_hat.chunks(self.config.theta_width) {
            chi_hat.extend(self.phi_roi_hat.forward(row)?);
        }
        Ok(Decoded { theta_hat, chi_hat })
    }

    pub fn decode(&self, emb: &LatentEmbedding) -> Result<Decoded, ModelError> {
        self.decode_delta(&emb.delta)
    }

    /// Encoder output and full reconstruction of one feature.
    pub fn reconstruct(&self, chi: &MultiHopFeature) -> Result<(LatentEmbedding, Decoded), ModelError> {
        let emb = self.encode(chi)?;
        let dec = self.decode(&emb)?;
        Ok((emb, dec))
    }

    /// Loss of one sample against an explicit (constant) `θ` target.
    pub fn loss_with_target(
        &self,
        chi: &[f64],
        theta_target: &[f64],
        lambda: f64,
    ) -> Result<f64, ModelError> {
        let (_, delta) = self.encode_raw(chi)?;
        let dec = self.decode_delta(&delta)?;
        selective_loss(&dec.chi_hat, chi, &dec.theta_hat, theta_target, lambda)
    }

    /// Loss of one sample and its gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        chi: &[f64],
        lambda: f64,
    ) -> Result<(f64, ModelGradients), ModelError> {
        let mut grads = ModelGradients::zeros_like(self);
        let loss = self.accumulate_sample(chi, lambda, &mut grads)?;
        Ok((loss, grads))
    }

    /// Forward + backward for one sample; adds its gradients to `grads`.
    fn accumulate_sample(
        &self,
        chi: &[f64],
        lambda: f64,
        grads: &mut ModelGradients,
    ) -> Result<f64, ModelError> {
        self.check_chi(chi)?;
        let (r, t) = (self.config.n_rois, self.config.theta_width);

        let mut theta = Vec::with_capacity(self.config.rows() * t);
        let mut roi_caches = Vec::with_capacity(self.config.rows());
        for row in chi.chunks(r) {
            let (y, c) = self.phi_roi.forward_cached(row)?;
            theta.extend(y);
            roi_caches.push(c);
        }
        let (delta, mh_cache) = self.phi_mh.forward_cached(&theta)?;
        let (theta_hat, mh_hat_cache) = self.phi_mh_hat.forward_cached(&delta)?;
        let mut chi_hat = Vec::with_capacity(chi.len());
        let mut roi_hat_caches = Vec::with_capacity(self.config.rows());
        for row in theta_hat.chunks(t) {
            let (y, c) = self.phi_roi_hat.forward_cached(row)?;
            chi_hat.extend(y);
            roi_hat_caches.push(c);
        }

        let mut loss = 0.0;
        let mut d_chi_hat = vec![0.0; chi.len()];
        for ((d, &xh), &x) in d_chi_hat.iter_mut().zip(&chi_hat).zip(chi) {
            let w = 1.0 + lambda * x;
            let e = (xh - x) * w;
            loss += e * e;
            *d = 2.0 * e * w;
        }
        let mut d_theta_hat = vec![0.0; theta.len()];
        for ((d, &th), &tt) in d_theta_hat.iter_mut().zip(&theta_hat).zip(&theta) {
            let w = 1.0 + lambda * tt;
            let e = (th - tt) * w;
            loss += e * e;
            *d = 2.0 * e * w;
        }

        let [g_roi, g_mh, g_mh_hat, g_roi_hat] = &mut grads.layers;
        for (k, cache) in roi_hat_caches.iter().enumerate() {
            self.phi_roi_hat
                .backward_accumulate(cache, &d_chi_hat[k * r..(k + 1) * r], g_roi_hat)?;
            for (d, gi) in d_theta_hat[k * t..(k + 1) * t].iter_mut().zip(&g_roi_hat.input) {
                *d += gi;
            }
        }
        self.phi_mh_hat
            .backward_accumulate(&mh_hat_cache, &d_theta_hat, g_mh_hat)?;
        self.phi_mh
            .backward_accumulate(&mh_cache, &g_mh_hat.input, g_mh)?;
        let d_theta = g_mh.input.clone();
        for (k, cache) in roi_caches.iter().enumerate() {
            self.phi_roi
                .backward_accumulate(cache, &d_theta[k * t..(k + 1) * t], g_roi)?;
        }
        Ok(loss)
    }

    fn apply_adam(&mut self, grads: &ModelGradients, states: &mut [AdamState], cfg: &AdamConfig) {
        let mut idx = 0;
        for (layer, g) in self.layers_mut().into_iter().zip(&grads.layers) {
            for (param, grad) in layer.params_mut().into_iter().zip(g.params()) {
                adam_step(param, grad, &mut states[idx], cfg);
                idx += 1;
            }
        }
    }
}

/// Selective reconstruction loss with squared Frobenius norms. With
/// `lambda = 0` this is the plain sum of squared errors.
pub fn selective_loss(
    chi_hat: &[f64],
    chi: &[f64],
    theta_hat: &[f64],
    theta: &[f64],
    lambda: f64,
) -> Result<f64, ModelError> {
    if lambda < 0.0 || lambda.is_nan() {
        return Err(ModelError::NegativeLambda(lambda));
    }
    if chi_hat.len() != chi.len() || theta_hat.len() != theta.len() {
        return Err(ModelError::Shape(format!(
            "loss inputs differ in size: chi {} vs {}, theta {} vs {}",
            chi_hat.len(),
            chi.len(),
            theta_hat.len(),
            theta.len()
        )));
    }
    let term = |pred: &[f64], target: &[f64]| -> f64 {
        pred.iter()
            .zip(target)
            .map(|(&p, &t)| {
                let e = (p - t) * (1.0 + lambda * t);
                e * e
            })
            .sum()
    };
    Ok(term(chi_hat, chi) + term(theta_hat, theta))
}

fn default_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_lambda() -> f64 {
    2.0
}
fn default_batch() -> usize {
    128
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_factor() -> f64 {
    0.5
}
fn default_min_lr() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub plateau_patience: usize,
    #[serde(default = "default_factor")]
    pub plateau_factor: f64,
    #[serde(default = "default_min_lr")]
    pub min_lr: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            lambda: default_lambda(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            plateau_patience: default_patience(),
            plateau_factor: default_factor(),
            min_lr: default_min_lr(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_owned()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return err("lr must be finite and non-negative");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0)
            || !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0)
        {
            return err("Adam betas must lie in (0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return err("adam_eps must be positive");
        }
        if self.lambda < 0.0 || self.lambda.is_nan() {
            return Err(ModelError::NegativeLambda(self.lambda));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return err("batch_size and max_epochs must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return err("plateau_factor must lie in (0, 1)");
        }
        if self.min_lr.is_nan() || self.min_lr < 0.0 {
            return err("min_lr must be non-negative");
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample loss over the epoch, summed in dataset order.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

/// Mean per-sample loss over a dataset, in dataset order.
pub fn dataset_loss(ae: &Autoencoder, data: &FeatureDataset, lambda: f64) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data.samples() {
        let (theta, _) = ae.encode_raw(&s.data)?;
        total += ae.loss_with_target(&s.data, &theta, lambda)?;
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch Adam training with a reduce-on-plateau schedule. The schedule
/// monitors the validation loss when `validation` is given, else the
/// training loss. Deterministic for a fixed `cfg.seed`.
pub fn train(
    mut ae: Autoencoder,
    data: &FeatureDataset,
    cfg: &TrainConfig,
    validation: Option<&FeatureDataset>,
) -> Result<(Autoencoder, Vec<EpochRecord>), ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mc = ae.config;
    for d in std::iter::once(data).chain(validation) {
        if d.hops() != mc.hops || d.n_rois() != mc.n_rois {
            return Err(ModelError::Shape(format!(
                "dataset is {} hops x {} ROIs, model is {} hops x {} ROIs",
                d.hops(),
                d.n_rois(),
                mc.hops,
                mc.n_rois
            )));
        }
    }
    if validation.is_some_and(FeatureDataset::is_empty) {
        return Err(ModelError::EmptyDataset);
    }

    let mut states: Vec<AdamState> = ae
        .layers()
        .iter()
        .flat_map(|l| [l.spline_coef.len(), l.base_weight.len(), l.spline_weight.len()])
        .map(AdamState::new)
        .collect();
    let mut schedule = ReduceOnPlateau::new(cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x7261_696e));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = ModelGradients::zeros_like(&ae);
    let mut per_sample = vec![0.0; data.len()];
    let mut lr = cfg.lr;
    let mut history = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let adam = cfg.adam(lr);
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            for &idx in batch {
                let s = &data.samples()[idx];
                let loss = ae.accumulate_sample(&s.data, cfg.lambda, &mut grads)?;
                if !loss.is_finite() {
                    return Err(ModelError::NonFiniteLoss {
                        epoch,
                        subject: s.subject_id.clone(),
                        node: s.node,
                    });
                }
                per_sample[idx] = loss;
            }
            grads.scale(1.0 / batch.len() as f64);
            ae.apply_adam(&grads, &mut states, &adam);
        }
        let train_loss = per_sample.iter().sum::<f64>() / data.len() as f64;
        let val_loss = validation
            .map(|v| dataset_loss(&ae, v, cfg.lambda))
            .transpose()?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        lr = schedule.step(val_loss.unwrap_or(train_loss), lr);
    }
    Ok((ae, history))
}
