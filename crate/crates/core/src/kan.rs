//! Kolmogorov–Arnold layer: every input/output edge carries its own
//! univariate function
//!
//! ```text
//! phi_ji(x) = base_weight[j][i] * silu(x) + spline_weight[j][i] * Σ_m coef[j][i][m] * B_m(x)
//! ```
//!
//! and `y_j = Σ_i phi_ji(x_i)`. `B_m` are order-`p` B-splines on a uniform
//! knot vector extended by `p` knots on each side of `[lo, hi]`, giving
//! `G + p` basis functions. Inputs outside the extended knot span get a
//! zero spline term and only the base activation.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ORDER: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KanError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("expected input of length {expected}, got {got}")]
    InputLen { expected: usize, got: usize },
    #[error("expected output gradient of length {expected}, got {got}")]
    OutputLen { expected: usize, got: usize },
    #[error("layer dimensions must be positive (got {d_in} -> {d_out})")]
    ZeroDim { d_in: usize, d_out: usize },
    #[error("parameter tensor {name} has length {got}, expected {expected}")]
    ParamLen {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter tensor {0} contains a non-finite value")]
    NonFinite(&'static str),
}

/// Grid hyperparameters as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub intervals: usize,
    pub order: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: -1.0,
            hi: 1.0,
            intervals: 5,
            order: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    spec: GridSpec,
    step: f64,
    knots: Vec<f64>,
}

/// The at most `p + 1` non-zero basis functions at one point.
#[derive(Debug, Clone, Copy)]
pub struct BasisWindow {
    /// Index of the first basis function with a stored value.
    pub first: usize,
    /// Offset into `values` that corresponds to `first`.
    pub offset: usize,
    pub len: usize,
    pub values: [f64; MAX_ORDER + 1],
    pub derivs: [f64; MAX_ORDER + 1],
}

impl BasisWindow {
    const EMPTY: Self = Self {
        first: 0,
        offset: 0,
        len: 0,
        values: [0.0; MAX_ORDER + 1],
        derivs: [0.0; MAX_ORDER + 1],
    };

    pub fn value(&self, r: usize) -> f64 {
        self.values[self.offset + r]
    }

    pub fn deriv(&self, r: usize) -> f64 {
        self.derivs[self.offset + r]
    }
}

impl SplineGrid {
    pub fn new(spec: GridSpec) -> Result<Self, KanError> {
        let GridSpec {
            lo,
            hi,
            intervals,
            order,
        } = spec;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(KanError::Grid(format!("range [{lo}, {hi}] is empty or not finite")));
        }
        if intervals == 0 {
            return Err(KanError::Grid("need at least one interval".into()));
        }
        if order == 0 || order > MAX_ORDER {
            return Err(KanError::Grid(format!("order must be in 1..={MAX_ORDER}, got {order}")));
        }
        let step = (hi - lo) / intervals as f64;
        let knots = (0..intervals + 2 * order + 1)
            .map(|i| lo + (i as f64 - order as f64) * step)
            .collect();
        Ok(Self { spec, step, knots })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn order(&self) -> usize {
        self.spec.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.spec.intervals + self.spec.order
    }

    /// Non-zero basis values and first derivatives at `x`.
    pub fn window(&self, x: f64) -> BasisWindow {
        let p = self.spec.order;
        let nb = self.num_basis();
        let spans = self.knots.len() - 1;
        let u = (x - self.knots[0]) / self.step;
        if !(u >= 0.0 && u < spans as f64) {
            return BasisWindow::EMPTY;
        }
        let s = (u.floor() as usize).min(spans - 1) as isize;
        // Position inside the knot span in units of the knot step; the
        // recurrence only uses ratios of knot differences, so it runs on the
        // uniform integer grid and stays non-negative.
        let t = (u - s as f64).clamp(0.0, 1.0);

        // Triangular Cox–de Boor; after degree d the
        // array holds B_{s-d+r, d} for r = 0..=d.
        let mut n = [0.0; MAX_ORDER + 1];
        let mut left = [0.0; MAX_ORDER + 1];
        let mut right = [0.0; MAX_ORDER + 1];
        let mut lower = [0.0; MAX_ORDER + 1];
        n[0] = 1.0;
        for j in 1..=p {
            if j == p {
                lower[..p].copy_from_slice(&n[..p]);
            }
            left[j] = t + (j - 1) as f64;
            right[j] = j as f64 - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }

        // d/dx B_{i,p} = (B_{i,p-1} - B_{i+1,p-1}) / h on a uniform grid.
        let mut derivs = [0.0; MAX_ORDER + 1];
        for (r, d) in derivs.iter_mut().enumerate().take(p + 1) {
            let a = if r >= 1 { lower[r - 1] } else { 0.0 };
            let b = if r < p { lower[r] } else { 0.0 };
            *d = (a - b) / self.step;
        }

        // Clip the window to valid basis indices 0..nb.
        let start = s - p as isize;
        let offset = (-start).max(0) as usize;
        let first = start.max(0) as usize;
        let last = (s as usize).min(nb - 1);
        let len = (last + 1).saturating_sub(first);
        BasisWindow {
            first,
            offset,
            len,
            values: n,
            derivs,
        }
    }
}

/// All `G + p` basis values at `x`.
pub fn bspline_basis(x: f64, grid: &SplineGrid) -> Vec<f64> {
    let w = grid.window(x);
    let mut out = vec![0.0; grid.num_basis()];
    for r in 0..w.len {
        out[w.first + r] = w.value(r);
    }
    out
}

/// All `G + p` basis derivatives at `x`.
pub fn bspline_basis_deriv(x: f64, grid: &SplineGrid) -> Vec<f64> {
    let w = grid.window(x);
    let mut out = vec![0.0; grid.num_basis()];
    for r in 0..w.len {
        out[w.first + r] = w.deriv(r);
    }
    out
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[inline]
pub fn silu(t: f64) -> f64 {
    t * sigmoid(t)
}

#[inline]
pub fn silu_deriv(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 + t * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    d_in: usize,
    d_out: usize,
    grid: SplineGrid,
    /// `[d_out][d_in][G+p]`, row-major.
    pub spline_coef: Vec<f64>,
    /// `[d_out][d_in]`
    pub base_weight: Vec<f64>,
    /// `[d_out][d_in]`
    pub spline_weight: Vec<f64>,
}

/// Per-input quantities from a forward pass that the backward pass reuses.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    silu: Vec<f64>,
    silu_deriv: Vec<f64>,
    windows: Vec<BasisWindow>,
}

/// Gradients shaped like the layer's parameters, plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradients {
    pub spline_coef: Vec<f64>,
    pub base_weight: Vec<f64>,
    pub spline_weight: Vec<f64>,
    pub input: Vec<f64>,
}

impl ParameterGradients {
    pub fn zeros_like(layer: &KanLayer) -> Self {
        Self {
            spline_coef: vec![0.0; layer.spline_coef.len()],
            base_weight: vec![0.0; layer.base_weight.len()],
            spline_weight: vec![0.0; layer.spline_weight.len()],
            input: vec![0.0; layer.d_in],
        }
    }

    pub fn fill_zero(&mut self) {
        for t in [
            &mut self.spline_coef,
            &mut self.base_weight,
            &mut self.spline_weight,
            &mut self.input,
        ] {
            t.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in [&mut self.spline_coef, &mut self.base_weight, &mut self.spline_weight] {
            t.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Parameter gradients in the same order as [`KanLayer::params_mut`].
    pub fn params(&self) -> [&[f64]; 3] {
        [&self.spline_coef, &self.base_weight, &self.spline_weight]
    }
}

impl KanLayer {
    pub fn zeros(d_in: usize, d_out: usize, grid: SplineGrid) -> Result<Self, KanError> {
        if d_in == 0 || d_out == 0 {
            return Err(KanError::ZeroDim { d_in, d_out });
        }
        let edges = d_in * d_out;
        Ok(Self {
            d_in,
            d_out,
            spline_coef: vec![0.0; edges * grid.num_basis()],
            base_weight: vec![0.0; edges],
            spline_weight: vec![0.0; edges],
            grid,
        })
    }

    pub fn from_parts(
        d_in: usize,
        d_out: usize,
        grid: SplineGrid,
        spline_coef: Vec<f64>,
        base_weight: Vec<f64>,
        spline_weight: Vec<f64>,
    ) -> Result<Self, KanError> {
        let mut layer = Self::zeros(d_in, d_out, grid)?;
        for (name, src, dst) in [
            ("spline_coef", spline_coef, &mut layer.spline_coef),
            ("base_weight", base_weight, &mut layer.base_weight),
            ("spline_weight", spline_weight, &mut layer.spline_weight),
        ] {
            if src.len() != dst.len() {
                return Err(KanError::ParamLen {
                    name,
                    expected: dst.len(),
                    got: src.len(),
                });
            }
            if src.iter().any(|v| !v.is_finite()) {
                return Err(KanError::NonFinite(name));
            }
            *dst = src;
        }
        Ok(layer)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    pub fn num_params(&self) -> usize {
        self.spline_coef.len() + self.base_weight.len() + self.spline_weight.len()
    }

    /// `[spline_coef, base_weight, spline_weight]`
    pub fn param_tensors(&self) -> [&[f64]; 3] {
        [&self.spline_coef, &self.base_weight, &self.spline_weight]
    }

    pub fn params_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.spline_coef, &mut self.base_weight, &mut self.spline_weight]
    }

    fn check_input(&self, x: &[f64]) -> Result<(), KanError> {
        if x.len() == self.d_in {
            Ok(())
        } else {
            Err(KanError::InputLen {
                expected: self.d_in,
                got: x.len(),
            })
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, KanError> {
        self.forward_cached(x).map(|(y, _)| y)
    }

    pub fn forward_batch<R: AsRef<[f64]>>(&self, xs: &[R]) -> Result<Vec<Vec<f64>>, KanError> {
        xs.iter().map(|x| self.forward(x.as_ref())).collect()
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache), KanError> {
        self.check_input(x)?;
        let cache = ForwardCache {
            silu: x.iter().map(|&t| silu(t)).collect(),
            silu_deriv: x.iter().map(|&t| silu_deriv(t)).collect(),
            windows: x.iter().map(|&t| self.grid.window(t)).collect(),
        };
        let nb = self.grid.num_basis();
        let mut y = vec![0.0; self.d_out];
        for (j, yj) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..self.d_in {
                let e = j * self.d_in + i;
                let w = &cache.windows[i];
                let coef = &self.spline_coef[e * nb + w.first..e * nb + w.first + w.len];
                let mut spline = 0.0;
                for (r, c) in coef.iter().enumerate() {
                    spline += c * w.value(r);
                }
                acc += self.base_weight[e] * cache.silu[i] + self.spline_weight[e] * spline;
            }
            *yj = acc;
        }
        Ok((y, cache))
    }

    /// Adds this sample's parameter gradients into `grads` and writes the
    /// input gradient into `grads.input` (overwritten, not accumulated).
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
        grads: &mut ParameterGradients,
    ) -> Result<(), KanError> {
        if grad_out.len() != self.d_out {
            return Err(KanError::OutputLen {
                expected: self.d_out,
                got: grad_out.len(),
            });
        }
        let nb = self.grid.num_basis();
        grads.input.iter_mut().for_each(|g| *g = 0.0);
        for (j, &g) in grad_out.iter().enumerate() {
            for i in 0..self.d_in {
                let e = j * self.d_in + i;
                let w = &cache.windows[i];
                let range = e * nb + w.first..e * nb + w.first + w.len;
                let coef = &self.spline_coef[range.clone()];
                let mut spline = 0.0;
                let mut dspline = 0.0;
                for (r, c) in coef.iter().enumerate() {
                    spline += c * w.value(r);
                    dspline += c * w.deriv(r);
                }
                let sw = self.spline_weight[e];
                grads.base_weight[e] += g * cache.silu[i];
                grads.spline_weight[e] += g * spline;
                let scaled = g * sw;
                for (r, gc) in grads.spline_coef[range].iter_mut().enumerate() {
                    *gc += scaled * w.value(r);
                }
                grads.input[i] +=
                    g * (self.base_weight[e] * cache.silu_deriv[i] + sw * dspline);
            }
        }
        Ok(())
    }
}

pub fn kan_forward(layer: &KanLayer, x: &[f64]) -> Result<Vec<f64>, KanError> {
    layer.forward(x)
}

/// Exact gradients of `grad_out · layer(x)` for a single sample.
pub fn kan_backward(
    layer: &KanLayer,
    x: &[f64],
    grad_out: &[f64],
) -> Result<ParameterGradients, KanError> {
    let (_, cache) = layer.forward_cached(x)?;
    let mut grads = ParameterGradients::zeros_like(layer);
    layer.backward_accumulate(&cache, grad_out, &mut grads)?;
    Ok(grads)
}

/// Uniform Xavier init: base and spline weights in `±sqrt(6/(d_in+d_out))`,
/// spline coefficients in a tenth of that range.
pub fn xavier_init(d_in: usize, d_out: usize, grid: SplineGrid, seed: u64) -> Result<KanLayer, KanError> {
    let mut layer = KanLayer::zeros(d_in, d_out, grid)?;
    let bound = (6.0 / (d_in + d_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = Uniform::new_inclusive(-bound, bound);
    let coefs = Uniform::new_inclusive(-0.1 * bound, 0.1 * bound);
    for w in layer.base_weight.iter_mut() {
        *w = weights.sample(&mut rng);
    }
    for w in layer.spline_weight.iter_mut() {
        *w = weights.sample(&mut rng);
    }
    for c in layer.spline_coef.iter_mut() {
        *c = coefs.sample(&mut rng);
    }
    Ok(layer)
}
