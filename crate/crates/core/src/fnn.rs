//! Random-orthogonal-additive feedforward network:
//! `x_{l+1} = α φ(W_l x_l + b_l) + (1 − α) O_l x_l`.
//!
//! All passes are batched: a batch is a matrix whose columns are samples.
//! With `α = 1` the filter term is skipped entirely and the model is a
//! plain multilayer perceptron.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{expect_len, ModelError, Result};
use crate::filters::{build_filters, FilterKind, FilterPlan};
use crate::linalg::{gemm, DenseMatrix, DenseVector};
use crate::params::ParamSet;
use crate::rng::{seeded, WeightInit};

/// How the mixing weight α is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    Alpha(f64),
    /// α = ρ / (L − 1), with L the number of layer transitions.
    Rho(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnConfig {
    pub dims: Vec<usize>,
    pub activation: ActivationKind,
    pub mixing: Mixing,
    pub filter_kind: FilterKind,
    pub recycle_filters: bool,
    pub init: WeightInit,
}

impl FnnConfig {
    pub fn new(dims: Vec<usize>, activation: ActivationKind, mixing: Mixing) -> Self {
        Self {
            dims,
            activation,
            mixing,
            filter_kind: FilterKind::RandomOrthogonal,
            recycle_filters: false,
            init: WeightInit::default(),
        }
    }

    /// Same architecture with α = 1.
    pub fn vanilla(dims: Vec<usize>, activation: ActivationKind) -> Self {
        Self::new(dims, activation, Mixing::Alpha(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaFnnModel {
    layer_dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<DenseVector>,
    filters: Vec<Arc<DenseMatrix>>,
    alpha: f64,
    rho: f64,
    activation: ActivationKind,
}

/// Cached per-layer quantities of a batched forward pass; column `j` of
/// every matrix belongs to sample `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `x_0 .. x_L`
    pub activations: Vec<DenseMatrix>,
    /// `y_0 .. y_{L-1}`
    pub preactivations: Vec<DenseMatrix>,
    /// `d_l = φ'(y_l)`
    pub derivatives: Vec<DenseMatrix>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.activations[0].cols()
    }

    pub fn output(&self) -> &DenseMatrix {
        self.activations.last().expect("trace has an output layer")
    }

    pub fn derivative(&self, layer: usize, sample: usize) -> DenseVector {
        self.derivatives[layer].column(sample)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnGradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<DenseVector>,
}

impl FnnGradients {
    pub fn zeros_like(model: &RoaFnnModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| DenseMatrix::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.iter().map(|b| DenseVector::zeros(b.len())).collect(),
        }
    }
}

impl ParamSet for FnnGradients {
    fn slices(&self) -> Vec<&[f64]> {
        interleave(&self.weights, &self.biases)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        interleave_mut(&mut self.weights, &mut self.biases)
    }
}

impl ParamSet for RoaFnnModel {
    fn slices(&self) -> Vec<&[f64]> {
        interleave(&self.weights, &self.biases)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        interleave_mut(&mut self.weights, &mut self.biases)
    }
}

fn interleave<'a>(w: &'a [DenseMatrix], b: &'a [DenseVector]) -> Vec<&'a [f64]> {
    w.iter().zip(b).flat_map(|(w, b)| [w.as_slice(), b.as_slice()]).collect()
}

fn interleave_mut<'a>(w: &'a mut [DenseMatrix], b: &'a mut [DenseVector]) -> Vec<&'a mut [f64]> {
    w.iter_mut().zip(b.iter_mut()).flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()]).collect()
}

pub(crate) fn rho_to_alpha(rho: f64, horizon: usize) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(ModelError::InvalidRho(rho));
    }
    let alpha = rho / horizon.max(1) as f64;
    if alpha > 1.0 {
        return Err(ModelError::InvalidAlpha(alpha));
    }
    Ok(alpha)
}

impl RoaFnnModel {
    /// Random model per `cfg`: weights and biases from `cfg.init`, filters
    /// from an independent sub-stream of `seed`.
    pub fn init(cfg: &FnnConfig, seed: u64) -> Result<Self> {
        if cfg.dims.len() < 2 {
            return Err(ModelError::Config("need at least input and output dims".into()));
        }
        let depth = cfg.dims.len() - 1;
        let alpha = match cfg.mixing {
            Mixing::Alpha(a) if a > 0.0 && a <= 1.0 => a,
            Mixing::Alpha(a) => return Err(ModelError::InvalidAlpha(a)),
            Mixing::Rho(rho) => rho_to_alpha(rho, depth.saturating_sub(1))?,
        };
        let mut rng = seeded(seed);
        let mut weights = Vec::with_capacity(depth);
        let mut biases = Vec::with_capacity(depth);
        for w in cfg.dims.windows(2) {
            weights.push(cfg.init.matrix(w[1], w[0], &mut rng));
            biases.push(cfg.init.vector(w[1], &mut rng));
        }
        let plan = FilterPlan {
            dims: cfg.dims.clone(),
            kind: cfg.filter_kind,
            recycle: cfg.recycle_filters,
            seed: filter_seed(seed),
        };
        let filters = build_filters(&plan)?;
        Self::from_parts(weights, biases, filters, alpha, cfg.activation)
    }

    /// Assembles a model from explicit tensors. `alpha` may be 0 (the
    /// isometric limit) for analysis; training configs require α > 0.
    pub fn from_parts(
        weights: Vec<DenseMatrix>,
        biases: Vec<DenseVector>,
        filters: Vec<Arc<DenseMatrix>>,
        alpha: f64,
        activation: ActivationKind,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        let depth = weights.len();
        if depth == 0 {
            return Err(ModelError::Config("model needs at least one layer".into()));
        }
        expect_len("bias count", depth, biases.len())?;
        expect_len("filter count", depth, filters.len())?;
        let mut layer_dims = vec![weights[0].cols()];
        for (l, w) in weights.iter().enumerate() {
            expect_len("weight input dim", layer_dims[l], w.cols())?;
            expect_len("bias length", w.rows(), biases[l].len())?;
            expect_len("filter rows", w.rows(), filters[l].rows())?;
            expect_len("filter cols", w.cols(), filters[l].cols())?;
            layer_dims.push(w.rows());
        }
        let rho = alpha * depth.saturating_sub(1).max(1) as f64;
        Ok(Self { layer_dims, weights, biases, filters, alpha, rho, activation })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Number of layer transitions `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[DenseVector] {
        &self.biases
    }

    pub fn filters(&self) -> &[Arc<DenseMatrix>] {
        &self.filters
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [DenseVector] {
        &mut self.biases
    }

    /// Replaces α (e.g. to probe the α → 0 limit); ρ follows.
    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        self.alpha = alpha;
        self.rho = alpha * self.depth().saturating_sub(1).max(1) as f64;
        Ok(())
    }

    /// `max_l ‖W_l‖` over the current weights.
    pub fn sigma_max(&self) -> f64 {
        self.weights.iter().map(|w| w.spectral_norm().expect("finite weights")).fold(0.0, f64::max)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("dims")
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x0: &DenseVector) -> Result<(DenseVector, ForwardTrace)> {
        let trace = self.forward_batch(&x0.to_column())?;
        Ok((trace.output().column(0), trace))
    }

    pub fn forward_batch(&self, x0: &DenseMatrix) -> Result<ForwardTrace> {
        expect_len("input dim", self.input_dim(), x0.rows())?;
        let batch = x0.cols();
        let depth = self.depth();
        let mut activations = Vec::with_capacity(depth + 1);
        let mut preactivations = Vec::with_capacity(depth);
        let mut derivatives = Vec::with_capacity(depth);
        activations.push(x0.clone());
        for l in 0..depth {
            let x = &activations[l];
            let n_out = self.layer_dims[l + 1];
            let mut y = DenseMatrix::zeros(n_out, batch);
            for i in 0..n_out {
                y.row_mut(i).fill(self.biases[l][i]);
            }
            gemm(1.0, &self.weights[l], false, x, false, 1.0, &mut y);
            let mut phi = DenseMatrix::zeros(n_out, batch);
            let mut d = DenseMatrix::zeros(n_out, batch);
            self.activation.eval_into(y.as_slice(), phi.as_mut_slice(), d.as_mut_slice());
            let next = if self.alpha == 1.0 {
                phi
            } else {
                let mut next = DenseMatrix::zeros(n_out, batch);
                gemm(1.0 - self.alpha, &self.filters[l], false, x, false, 0.0, &mut next);
                next.axpy(self.alpha, &phi)?;
                next
            };
            preactivations.push(y);
            derivatives.push(d);
            activations.push(next);
        }
        Ok(ForwardTrace { activations, preactivations, derivatives })
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        if trace.activations.len() != self.depth() + 1
            || trace.derivatives.len() != self.depth()
            || trace.activations.iter().zip(&self.layer_dims).any(|(x, n)| x.rows() != *n)
        {
            return Err(ModelError::TraceMismatch("layer structure differs"));
        }
        Ok(())
    }

    /// Gradients of the loss summed over the batch, given the error
    /// `E = ∂loss/∂x_L` per sample (one column each).
    pub fn backward(&self, trace: &ForwardTrace, error: &DenseMatrix) -> Result<FnnGradients> {
        Ok(self.backward_impl(trace, error, false)?.0)
    }

    /// Like [`Self::backward`], also returning the backpropagated errors
    /// `B_s(E) = (∂x_L/∂x_{s+1})ᵀ E` for `s = 0 .. L-1`.
    pub fn backward_with_errors(
        &self,
        trace: &ForwardTrace,
        error: &DenseMatrix,
    ) -> Result<(FnnGradients, Vec<DenseMatrix>)> {
        self.backward_impl(trace, error, true)
    }

    fn backward_impl(
        &self,
        trace: &ForwardTrace,
        error: &DenseMatrix,
        keep_errors: bool,
    ) -> Result<(FnnGradients, Vec<DenseMatrix>)> {
        self.check_trace(trace)?;
        expect_len("error dim", self.output_dim(), error.rows())?;
        expect_len("error batch", trace.batch_size(), error.cols())?;
        let depth = self.depth();
        let alpha = self.alpha;
        let mut grads = FnnGradients::zeros_like(self);
        let mut kept = if keep_errors { vec![DenseMatrix::zeros(0, 0); depth] } else { Vec::new() };
        let mut back = error.clone();
        for s in (0..depth).rev() {
            let d = &trace.derivatives[s];
            let mut g = back.clone();
            for (gi, di) in g.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *gi *= di;
            }
            gemm(alpha, &g, false, &trace.activations[s], true, 0.0, &mut grads.weights[s]);
            for i in 0..g.rows() {
                grads.biases[s][i] = alpha * g.row(i).iter().sum::<f64>();
            }
            let n_in = self.layer_dims[s];
            let mut prev = DenseMatrix::zeros(n_in, g.cols());
            gemm(alpha, &self.weights[s], true, &g, false, 0.0, &mut prev);
            if alpha != 1.0 {
                gemm(1.0 - alpha, &self.filters[s], true, &back, false, 1.0, &mut prev);
            }
            if keep_errors {
                kept[s] = std::mem::replace(&mut back, prev);
            } else {
                back = prev;
            }
        }
        Ok((grads, kept))
    }

    /// Jacobian `∂x_{l+1}/∂x_l = α diag(d_l) W_l + (1 − α) O_l` for one sample.
    pub fn step_jacobian(&self, trace: &ForwardTrace, layer: usize, sample: usize) -> Result<DenseMatrix> {
        let d = trace.derivative(layer, sample);
        let mut j = self.weights[layer].scale_rows(d.as_slice())?;
        j.scale_in_place(self.alpha);
        if self.alpha != 1.0 {
            j.axpy(1.0 - self.alpha, &self.filters[layer])?;
        }
        Ok(j)
    }

    /// Input–output Jacobian `∂x_L/∂x_1 = ∏_{l=L-1..1} J_l` for one sample.
    /// Depth 1 gives the identity on `x_1`.
    pub fn ioj(&self, trace: &ForwardTrace, sample: usize) -> Result<DenseMatrix> {
        self.check_trace(trace)?;
        let mut p = DenseMatrix::identity(self.output_dim());
        for l in (1..self.depth()).rev() {
            p = p.matmul(&self.step_jacobian(trace, l, sample)?)?;
        }
        Ok(p)
    }
}

pub(crate) fn filter_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_F117_E125_0001
}
