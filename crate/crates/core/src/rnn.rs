//! Random-orthogonal-additive recurrent network:
//! `x_{k+1} = α φ(W_h x_k + b_h + W_i u_{k+1}) + (1 − α) O x_k`,
//! read out as `ψ(W_o x_k + b_o)`.
//!
//! With `O = I` this is the eyeRNN variant, with `α = 1` a vanilla RNN.
//! Sequences are batched: each step holds a matrix with one column per
//! sample.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{expect_len, ModelError, Result};
use crate::filters::{gen_semi_orthogonal, gen_semi_permutation, semi_orthogonal_from, FilterKind};
use crate::fnn::{filter_seed, rho_to_alpha, Mixing};
use crate::linalg::{gemm, DenseMatrix, DenseVector};
use crate::params::ParamSet;
use crate::rng::{seeded, WeightInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Linear output layer.
    Identity,
    /// Logits for a softmax; ψ is fused into the cross-entropy loss.
    Softmax,
}

/// Steps `k ∈ 1..=T` at which the readout is evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutSteps {
    All,
    Final,
    Set(Vec<usize>),
}

impl ReadoutSteps {
    fn resolve(&self, len: usize) -> Result<Vec<usize>> {
        match self {
            ReadoutSteps::All => Ok((1..=len).collect()),
            ReadoutSteps::Final => Ok(if len == 0 { Vec::new() } else { vec![len] }),
            ReadoutSteps::Set(steps) => {
                let mut s = steps.clone();
                s.sort_unstable();
                s.dedup();
                if s.first() == Some(&0) || s.last().is_some_and(|&k| k > len) {
                    return Err(ModelError::Config(format!("readout steps {steps:?} outside 1..={len}")));
                }
                Ok(s)
            }
        }
    }
}

/// Parameter initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RnnInit {
    /// Every trainable tensor i.i.d. from the given distribution.
    Iid { dist: WeightInit },
    /// Orthogonal `W_h`, everything else uniform in `(−1/√N_h, 1/√N_h)`.
    OrthogonalUniform,
}

impl Default for RnnInit {
    fn default() -> Self {
        RnnInit::Iid { dist: WeightInit::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub hidden: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: ActivationKind,
    pub mixing: Mixing,
    /// Horizon used to turn ρ into α (and α back into ρ).
    pub horizon: usize,
    pub filter_kind: FilterKind,
    pub readout: Readout,
    pub init: RnnInit,
}

impl RnnConfig {
    pub fn new(hidden: usize, input_dim: usize, output_dim: usize, mixing: Mixing, horizon: usize) -> Self {
        Self {
            hidden,
            input_dim,
            output_dim,
            activation: ActivationKind::Relu,
            mixing,
            horizon,
            filter_kind: FilterKind::RandomOrthogonal,
            readout: Readout::Identity,
            init: RnnInit::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaRnnModel {
    w_h: DenseMatrix,
    b_h: DenseVector,
    w_i: DenseMatrix,
    w_o: DenseMatrix,
    b_o: DenseVector,
    filter: Arc<DenseMatrix>,
    alpha: f64,
    rho: f64,
    activation: ActivationKind,
    readout: Readout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnTrace {
    /// `x_0 .. x_T`
    pub states: Vec<DenseMatrix>,
    /// `y_0 .. y_{T-1}`; `y_k` produces `x_{k+1}`.
    pub preactivations: Vec<DenseMatrix>,
    pub derivatives: Vec<DenseMatrix>,
    /// `u_1 .. u_T`
    pub inputs: Vec<DenseMatrix>,
    pub readout_steps: Vec<usize>,
    /// `W_o x_k + b_o` at each readout step.
    pub outputs: Vec<DenseMatrix>,
}

impl RnnTrace {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.states[0].cols()
    }

    pub fn final_state(&self) -> &DenseMatrix {
        self.states.last().expect("trace holds x_0")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnGradients {
    pub w_h: DenseMatrix,
    pub b_h: DenseVector,
    pub w_i: DenseMatrix,
    pub w_o: DenseMatrix,
    pub b_o: DenseVector,
}

impl RnnGradients {
    pub fn zeros_like(m: &RoaRnnModel) -> Self {
        Self {
            w_h: DenseMatrix::zeros(m.hidden_dim(), m.hidden_dim()),
            b_h: DenseVector::zeros(m.hidden_dim()),
            w_i: DenseMatrix::zeros(m.hidden_dim(), m.input_dim()),
            w_o: DenseMatrix::zeros(m.output_dim(), m.hidden_dim()),
            b_o: DenseVector::zeros(m.output_dim()),
        }
    }
}

impl ParamSet for RnnGradients {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.w_h.as_slice(), self.b_h.as_slice(), self.w_i.as_slice(), self.w_o.as_slice(), self.b_o.as_slice()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_h.as_mut_slice(),
            self.b_h.as_mut_slice(),
            self.w_i.as_mut_slice(),
            self.w_o.as_mut_slice(),
            self.b_o.as_mut_slice(),
        ]
    }
}

impl ParamSet for RoaRnnModel {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.w_h.as_slice(), self.b_h.as_slice(), self.w_i.as_slice(), self.w_o.as_slice(), self.b_o.as_slice()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_h.as_mut_slice(),
            self.b_h.as_mut_slice(),
            self.w_i.as_mut_slice(),
            self.w_o.as_mut_slice(),
            self.b_o.as_mut_slice(),
        ]
    }
}

/// The five trainable tensors of a recurrent model.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub w_h: DenseMatrix,
    pub b_h: DenseVector,
    pub w_i: DenseMatrix,
    pub w_o: DenseMatrix,
    pub b_o: DenseVector,
}

impl RnnParams {
    /// Draws parameters from `seed`. The filter is never drawn here, so
    /// models that differ only in their filter share these exactly.
    pub fn init(hidden: usize, input_dim: usize, output_dim: usize, init: RnnInit, seed: u64) -> Self {
        let mut rng = seeded(seed);
        match init {
            RnnInit::Iid { dist } => Self {
                w_h: dist.matrix(hidden, hidden, &mut rng),
                b_h: dist.vector(hidden, &mut rng),
                w_i: dist.matrix(hidden, input_dim, &mut rng),
                w_o: dist.matrix(output_dim, hidden, &mut rng),
                b_o: dist.vector(output_dim, &mut rng),
            },
            RnnInit::OrthogonalUniform => {
                let w_h = semi_orthogonal_from(hidden, hidden, &mut rng);
                let dist = WeightInit::Uniform { bound: (1.0 / hidden as f64).sqrt() };
                Self {
                    w_h,
                    b_h: dist.vector(hidden, &mut rng),
                    w_i: dist.matrix(hidden, input_dim, &mut rng),
                    w_o: dist.matrix(output_dim, hidden, &mut rng),
                    b_o: dist.vector(output_dim, &mut rng),
                }
            }
        }
    }
}

/// Square recurrent filter of the given kind.
pub fn recurrent_filter(kind: FilterKind, n: usize, seed: u64) -> Result<DenseMatrix> {
    Ok(match kind {
        FilterKind::RandomOrthogonal => gen_semi_orthogonal(n, n, seed)?,
        FilterKind::SemiPermutation => gen_semi_permutation(n, n, seed)?,
        FilterKind::Identity => DenseMatrix::identity(n),
    })
}

impl RoaRnnModel {
    pub fn init(cfg: &RnnConfig, seed: u64) -> Result<Self> {
        if cfg.hidden == 0 || cfg.input_dim == 0 || cfg.output_dim == 0 {
            return Err(ModelError::Config("recurrent dims must be positive".into()));
        }
        let alpha = match cfg.mixing {
            Mixing::Alpha(a) if a > 0.0 && a <= 1.0 => a,
            Mixing::Alpha(a) => return Err(ModelError::InvalidAlpha(a)),
            Mixing::Rho(rho) => rho_to_alpha(rho, cfg.horizon)?,
        };
        let p = RnnParams::init(cfg.hidden, cfg.input_dim, cfg.output_dim, cfg.init, seed);
        let filter = recurrent_filter(cfg.filter_kind, cfg.hidden, filter_seed(seed))?;
        let mut m = Self::from_parts(p, Arc::new(filter), alpha, cfg.activation, cfg.readout)?;
        m.rho = alpha * cfg.horizon.max(1) as f64;
        Ok(m)
    }

    /// `alpha = 0` is accepted for analysis of the isometric limit.
    pub fn from_parts(
        p: RnnParams,
        filter: Arc<DenseMatrix>,
        alpha: f64,
        activation: ActivationKind,
        readout: Readout,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        let n = p.w_h.rows();
        expect_len("W_h cols", n, p.w_h.cols())?;
        expect_len("b_h length", n, p.b_h.len())?;
        expect_len("W_i rows", n, p.w_i.rows())?;
        expect_len("W_o cols", n, p.w_o.cols())?;
        expect_len("b_o length", p.w_o.rows(), p.b_o.len())?;
        expect_len("filter rows", n, filter.rows())?;
        expect_len("filter cols", n, filter.cols())?;
        Ok(Self {
            w_h: p.w_h,
            b_h: p.b_h,
            w_i: p.w_i,
            w_o: p.w_o,
            b_o: p.b_o,
            filter,
            alpha,
            rho: alpha,
            activation,
            readout,
        })
    }

    pub fn params(&self) -> RnnParams {
        RnnParams {
            w_h: self.w_h.clone(),
            b_h: self.b_h.clone(),
            w_i: self.w_i.clone(),
            w_o: self.w_o.clone(),
            b_o: self.b_o.clone(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_o.rows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Sets α and records ρ = α·horizon.
    pub fn set_alpha(&mut self, alpha: f64, horizon: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        self.alpha = alpha;
        self.rho = alpha * horizon.max(1) as f64;
        Ok(())
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    pub fn filter(&self) -> &Arc<DenseMatrix> {
        &self.filter
    }

    pub fn w_h(&self) -> &DenseMatrix {
        &self.w_h
    }

    pub fn b_h(&self) -> &DenseVector {
        &self.b_h
    }

    pub fn w_i(&self) -> &DenseMatrix {
        &self.w_i
    }

    pub fn w_o(&self) -> &DenseMatrix {
        &self.w_o
    }

    pub fn b_o(&self) -> &DenseVector {
        &self.b_o
    }

    /// `‖W_h‖` on the current weights.
    pub fn sigma(&self) -> f64 {
        self.w_h.spectral_norm().expect("finite recurrent weights")
    }

    /// Single-sequence forward pass; `x0` defaults to zero.
    pub fn forward(
        &self,
        x0: Option<&DenseVector>,
        inputs: &[DenseVector],
        steps: &ReadoutSteps,
    ) -> Result<(Vec<DenseVector>, RnnTrace)> {
        let x0 = x0.map(DenseVector::to_column);
        let u: Vec<DenseMatrix> = inputs.iter().map(DenseVector::to_column).collect();
        let trace = self.forward_batch(x0.as_ref(), &u, steps)?;
        let outs = trace.outputs.iter().map(|o| o.column(0)).collect();
        Ok((outs, trace))
    }

    /// Batched forward pass. `inputs[k]` is `u_{k+1}` for every sample
    /// (`input_dim × B`); `x0` defaults to zeros.
    pub fn forward_batch(
        &self,
        x0: Option<&DenseMatrix>,
        inputs: &[DenseMatrix],
        steps: &ReadoutSteps,
    ) -> Result<RnnTrace> {
        let n = self.hidden_dim();
        let batch = match (x0, inputs.first()) {
            (Some(x), _) => x.cols(),
            (None, Some(u)) => u.cols(),
            (None, None) => 1,
        };
        let x0 = match x0 {
            Some(x) => {
                expect_len("initial state dim", n, x.rows())?;
                x.clone()
            }
            None => DenseMatrix::zeros(n, batch),
        };
        for u in inputs {
            expect_len("input dim", self.input_dim(), u.rows())?;
            expect_len("input batch", batch, u.cols())?;
        }
        let readout_steps = steps.resolve(inputs.len())?;
        let t_len = inputs.len();
        let mut states = Vec::with_capacity(t_len + 1);
        let mut preactivations = Vec::with_capacity(t_len);
        let mut derivatives = Vec::with_capacity(t_len);
        states.push(x0);
        let mut bias_block = DenseMatrix::zeros(n, batch);
        for i in 0..n {
            bias_block.row_mut(i).fill(self.b_h[i]);
        }
        for u in inputs {
            let x = states.last().expect("x_0 present");
            let mut y = bias_block.clone();
            gemm(1.0, &self.w_h, false, x, false, 1.0, &mut y);
            gemm(1.0, &self.w_i, false, u, false, 1.0, &mut y);
            let mut phi = DenseMatrix::zeros(n, batch);
            let mut d = DenseMatrix::zeros(n, batch);
            self.activation.eval_into(y.as_slice(), phi.as_mut_slice(), d.as_mut_slice());
            let next = if self.alpha == 1.0 {
                phi
            } else {
                let mut next = DenseMatrix::zeros(n, batch);
                gemm(1.0 - self.alpha, &self.filter, false, x, false, 0.0, &mut next);
                next.axpy(self.alpha, &phi)?;
                next
            };
            preactivations.push(y);
            derivatives.push(d);
            states.push(next);
        }
        let outputs = readout_steps.iter().map(|&k| self.readout_batch(&states[k])).collect();
        Ok(RnnTrace { states, preactivations, derivatives, inputs: inputs.to_vec(), readout_steps, outputs })
    }

    /// `W_o X + b_o` for a block of states.
    pub fn readout_batch(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut o = DenseMatrix::zeros(self.output_dim(), x.cols());
        for i in 0..o.rows() {
            o.row_mut(i).fill(self.b_o[i]);
        }
        gemm(1.0, &self.w_o, false, x, false, 1.0, &mut o);
        o
    }

    fn check_trace(&self, trace: &RnnTrace) -> Result<()> {
        let t = trace.inputs.len();
        if trace.states.len() != t + 1
            || trace.derivatives.len() != t
            || trace.outputs.len() != trace.readout_steps.len()
            || trace.states[0].rows() != self.hidden_dim()
        {
            return Err(ModelError::TraceMismatch("sequence structure differs"));
        }
        Ok(())
    }

    /// Gradients of the loss summed over the batch. `errors[j]` is the
    /// derivative of the loss with respect to the readout preactivation at
    /// `trace.readout_steps[j]` (`output_dim × B`).
    pub fn backward(&self, trace: &RnnTrace, errors: &[DenseMatrix]) -> Result<RnnGradients> {
        self.check_trace(trace)?;
        expect_len("error count", trace.readout_steps.len(), errors.len())?;
        let n = self.hidden_dim();
        let batch = trace.batch_size();
        for e in errors {
            expect_len("error dim", self.output_dim(), e.rows())?;
            expect_len("error batch", batch, e.cols())?;
        }
        let alpha = self.alpha;
        let mut grads = RnnGradients::zeros_like(self);
        let mut adj = DenseMatrix::zeros(n, batch);
        let mut next_err = errors.len();
        let mut g = DenseMatrix::zeros(n, batch);
        for k in (1..=trace.len()).rev() {
            if next_err > 0 && trace.readout_steps[next_err - 1] == k {
                next_err -= 1;
                let e = &errors[next_err];
                gemm(1.0, e, false, &trace.states[k], true, 1.0, &mut grads.w_o);
                for i in 0..e.rows() {
                    grads.b_o[i] += e.row(i).iter().sum::<f64>();
                }
                gemm(1.0, &self.w_o, true, e, false, 1.0, &mut adj);
            }
            let d = &trace.derivatives[k - 1];
            for ((gi, ai), di) in g.as_mut_slice().iter_mut().zip(adj.as_slice()).zip(d.as_slice()) {
                *gi = alpha * ai * di;
            }
            gemm(1.0, &g, false, &trace.states[k - 1], true, 1.0, &mut grads.w_h);
            gemm(1.0, &g, false, &trace.inputs[k - 1], true, 1.0, &mut grads.w_i);
            for i in 0..n {
                grads.b_h[i] += g.row(i).iter().sum::<f64>();
            }
            if k > 1 {
                let mut prev = DenseMatrix::zeros(n, batch);
                gemm(1.0, &self.w_h, true, &g, false, 0.0, &mut prev);
                if alpha != 1.0 {
                    gemm(1.0 - alpha, &self.filter, true, &adj, false, 1.0, &mut prev);
                }
                adj = prev;
            }
        }
        Ok(grads)
    }

    /// `∂x_{l+1}/∂x_l = α diag(φ'(y_l)) W_h + (1 − α) O` for one sample.
    pub fn step_jacobian(&self, trace: &RnnTrace, l: usize, sample: usize) -> Result<DenseMatrix> {
        let d = trace.derivatives[l].column(sample);
        let mut j = self.w_h.scale_rows(d.as_slice())?;
        j.scale_in_place(self.alpha);
        if self.alpha != 1.0 {
            j.axpy(1.0 - self.alpha, &self.filter)?;
        }
        Ok(j)
    }

    /// IOJ `∂x_T/∂x_1 = ∏_{l=T-1..1} J_l` for one sample; the identity
    /// when `T ≤ 1`.
    pub fn ioj(&self, trace: &RnnTrace, sample: usize) -> Result<DenseMatrix> {
        self.check_trace(trace)?;
        let mut p = DenseMatrix::identity(self.hidden_dim());
        for l in (1..trace.len()).rev() {
            p = p.matmul(&self.step_jacobian(trace, l, sample)?)?;
        }
        Ok(p)
    }
}

/// Continuous-time reading of the recurrence,
/// `τ ẋ = A x + φ(W_h x + b_h + W_i u)` with `A = α⁻¹[(1 − α)O − I]`,
/// integrated by explicit Euler with step `dt = 1/(L − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousTimeRnn {
    pub a: DenseMatrix,
    pub tau: f64,
    pub dt: f64,
    pub w_h: DenseMatrix,
    pub b_h: DenseVector,
    pub w_i: DenseMatrix,
    pub activation: ActivationKind,
}

impl ContinuousTimeRnn {
    /// Builds the system over a window of `horizon_len = L` steps, so that
    /// `ρ = α(L − 1)` and `τ = 1/ρ`.
    pub fn from_model(model: &RoaRnnModel, horizon_len: usize) -> Result<Self> {
        let alpha = model.alpha();
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        if horizon_len < 2 {
            return Err(ModelError::Config("continuous-time window needs L ≥ 2".into()));
        }
        let n = model.hidden_dim();
        let mut a = model.filter().scale(1.0 - alpha);
        for i in 0..n {
            a.as_mut_slice()[i * n + i] -= 1.0;
        }
        a.scale_in_place(1.0 / alpha);
        let steps = (horizon_len - 1) as f64;
        let rho = alpha * steps;
        Ok(Self {
            a,
            tau: 1.0 / rho,
            dt: 1.0 / steps,
            w_h: model.w_h().clone(),
            b_h: model.b_h().clone(),
            w_i: model.w_i().clone(),
            activation: model.activation(),
        })
    }

    /// One explicit Euler step `x + (dt/τ)[φ(W_h x + b_h + W_i u) + A x]`.
    pub fn ct_step(&self, x: &DenseVector, u_next: &DenseVector) -> Result<DenseVector> {
        let wx = self.w_h.matvec(x)?;
        let wu = self.w_i.matvec(u_next)?;
        let ax = self.a.matvec(x)?;
        let h = self.dt / self.tau;
        Ok(DenseVector(
            (0..x.len()).map(|i| x[i] + h * (self.activation.apply(wx[i] + self.b_h[i] + wu[i]) + ax[i])).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isometry::finite_diff_oracle;
    use crate::linalg::outer;
    use crate::loss::{cross_entropy_batch, mse_loss, mse_loss_batch};
    use rand::Rng;

    fn model(n: usize, i: usize, o: usize, act: ActivationKind, alpha: f64, seed: u64) -> RoaRnnModel {
        let mut cfg = RnnConfig::new(n, i, o, Mixing::Alpha(alpha), 10);
        cfg.activation = act;
        cfg.init = RnnInit::Iid { dist: WeightInit::Normal { std: 0.5 } };
        RoaRnnModel::init(&cfg, seed).unwrap()
    }

    fn random_inputs(dim: usize, batch: usize, len: usize, seed: u64) -> Vec<DenseMatrix> {
        let mut rng = seeded(seed);
        (0..len).map(|_| DenseMatrix::from_fn(dim, batch, |_, _| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn hand_evaluated_relu_step() {
        let p = RnnParams {
            w_h: DenseMatrix::from_rows(&[&[1.0]]),
            b_h: DenseVector(vec![0.0]),
            w_i: DenseMatrix::from_rows(&[&[1.0]]),
            w_o: DenseMatrix::from_rows(&[&[1.0]]),
            b_o: DenseVector(vec![0.0]),
        };
        let m = RoaRnnModel::from_parts(
            p,
            Arc::new(DenseMatrix::identity(1)),
            0.5,
            ActivationKind::Relu,
            Readout::Identity,
        )
        .unwrap();
        let (_, trace) =
            m.forward(Some(&DenseVector(vec![0.0])), &[DenseVector(vec![1.0])], &ReadoutSteps::All).unwrap();
        assert_eq!(trace.states[1][(0, 0)], 0.5);
    }

    #[test]
    fn alpha_one_is_vanilla_recurrence() {
        let m = model(5, 3, 2, ActivationKind::Tanh, 1.0, 4);
        let inputs = random_inputs(3, 1, 7, 1);
        let trace = m.forward_batch(None, &inputs, &ReadoutSteps::All).unwrap();
        let mut x = DenseVector::zeros(5);
        for (k, u) in inputs.iter().enumerate() {
            let wx = m.w_h().matvec(&x).unwrap();
            let wu = m.w_i().matvec(&u.column(0)).unwrap();
            x = DenseVector((0..5).map(|i| (wx[i] + m.b_h()[i] + wu[i]).tanh()).collect());
            let got = trace.states[k + 1].column(0);
            assert!((0..5).all(|i| (got[i] - x[i]).abs() <= 1e-15));
        }
    }

    #[test]
    fn alpha_zero_preserves_norm_for_long_horizon() {
        let mut m = model(8, 2, 1, ActivationKind::Relu, 0.5, 3);
        m.set_alpha(0.0, 1).unwrap();
        let mut p = m.params();
        p.b_h = DenseVector::zeros(8);
        let mut m = RoaRnnModel::from_parts(p, m.filter().clone(), 0.0, m.activation(), m.readout()).unwrap();
        m.set_alpha(0.0, 1).unwrap();
        let x0 = DenseVector(vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0, 0.25, 2.0]);
        let zeros = vec![DenseMatrix::zeros(2, 1); 1000];
        let trace = m.forward_batch(Some(&x0.to_column()), &zeros, &ReadoutSteps::Final).unwrap();
        let mut ox = x0.clone();
        for k in 1..=1000 {
            ox = m.filter().matvec(&ox).unwrap();
            let xk = trace.states[k].column(0);
            assert!((xk.norm() - x0.norm()).abs() <= 1e-10);
            if k % 250 == 0 {
                assert!(xk.0.iter().zip(&ox.0).all(|(a, b)| (a - b).abs() <= 1e-10));
            }
        }
    }

    fn fd_check(m: &RoaRnnModel, loss: impl Fn(&RoaRnnModel) -> f64, analytic: &RnnGradients) {
        let numeric = finite_diff_oracle(
            |p| {
                let mut mm = m.clone();
                mm.set_flat(p);
                loss(&mm)
            },
            &m.flatten(),
            1e-5,
        );
        let mut offset = 0;
        for (block, a) in analytic.slices().iter().enumerate() {
            let n = &numeric[offset..offset + a.len()];
            offset += a.len();
            let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = n.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
            assert!(diff / scale <= 1e-6, "block {block}: rel err {}", diff / scale);
        }
    }

    #[test]
    fn mse_gradients_match_finite_differences() {
        let m = model(6, 3, 2, ActivationKind::Tanh, 0.3, 9);
        let inputs = random_inputs(3, 2, 12, 2);
        let target = random_inputs(2, 2, 1, 3).remove(0);
        let loss = |mm: &RoaRnnModel| {
            let t = mm.forward_batch(None, &inputs, &ReadoutSteps::Final).unwrap();
            mse_loss_batch(&t.outputs[0], &target).unwrap().0
        };
        let trace = m.forward_batch(None, &inputs, &ReadoutSteps::Final).unwrap();
        let (_, e) = mse_loss_batch(&trace.outputs[0], &target).unwrap();
        let g = m.backward(&trace, &[e]).unwrap();
        fd_check(&m, loss, &g);
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let mut cfg = RnnConfig::new(5, 4, 3, Mixing::Alpha(0.4), 10);
        cfg.activation = ActivationKind::Tanh;
        cfg.readout = Readout::Softmax;
        cfg.init = RnnInit::Iid { dist: WeightInit::Normal { std: 0.6 } };
        let m = RoaRnnModel::init(&cfg, 21).unwrap();
        let inputs = random_inputs(4, 3, 9, 5);
        let classes: Vec<Vec<usize>> = (0..9).map(|k| vec![k % 3, (k + 1) % 3, (2 * k) % 3]).collect();
        let steps = ReadoutSteps::All;
        let loss = |mm: &RoaRnnModel| {
            let t = mm.forward_batch(None, &inputs, &steps).unwrap();
            t.outputs.iter().zip(&classes).map(|(o, c)| cross_entropy_batch(o, c, 1.0).unwrap().0).sum::<f64>()
        };
        let trace = m.forward_batch(None, &inputs, &steps).unwrap();
        let errs: Vec<DenseMatrix> =
            trace.outputs.iter().zip(&classes).map(|(o, c)| cross_entropy_batch(o, c, 1.0).unwrap().1).collect();
        let g = m.backward(&trace, &errs).unwrap();
        fd_check(&m, loss, &g);
    }

    /// Sum over `s` of `α [d_s ⊙ R_s(E)] ⊗ x_s`, with `R_s` built from
    /// explicit Jacobian products, for a loss read at the final step.
    fn per_s_recurrent_gradient(m: &RoaRnnModel, trace: &RnnTrace, e: &DenseVector) -> DenseMatrix {
        let t = trace.len();
        let top = m.w_o().t_matvec(e).unwrap();
        let mut total = DenseMatrix::zeros(m.hidden_dim(), m.hidden_dim());
        for s in 0..t {
            let mut jac = DenseMatrix::identity(m.hidden_dim());
            for l in (s + 1..t).rev() {
                jac = jac.matmul(&m.step_jacobian(trace, l, 0).unwrap()).unwrap();
            }
            let r = jac.t_matvec(&top).unwrap();
            let d = trace.derivatives[s].column(0);
            let g = DenseVector((0..r.len()).map(|i| m.alpha() * d[i] * r[i]).collect());
            total = total.add(&outer(&g, &trace.states[s].column(0))).unwrap();
        }
        total
    }

    #[test]
    fn reverse_sweep_equals_per_s_sum() {
        for (t, seed) in [(1, 1), (2, 2), (8, 3)] {
            let m = model(4, 2, 3, ActivationKind::Tanh, 0.35, seed);
            let inputs = random_inputs(2, 1, t, seed + 10);
            let trace = m.forward_batch(None, &inputs, &ReadoutSteps::Final).unwrap();
            let e = DenseVector(vec![0.3, -1.1, 0.6]);
            let g = m.backward(&trace, &[e.to_column()]).unwrap();
            let expected = per_s_recurrent_gradient(&m, &trace, &e);
            assert!(g.w_h.sub(&expected).unwrap().max_abs() <= 1e-10, "T={t}");
            if t == 1 {
                let d = trace.derivatives[0].column(0);
                let r = m.w_o().t_matvec(&e).unwrap();
                let only =
                    outer(&DenseVector((0..4).map(|i| m.alpha() * d[i] * r[i]).collect()), &trace.states[0].column(0));
                assert!(g.w_h.sub(&only).unwrap().max_abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn alpha_one_matches_vanilla_bptt() {
        let m = model(5, 2, 2, ActivationKind::Tanh, 1.0, 17);
        let inputs: Vec<DenseVector> = random_inputs(2, 1, 6, 4).iter().map(|u| u.column(0)).collect();
        let target = DenseVector(vec![0.2, -0.4]);
        let (outs, trace) = m.forward(None, &inputs, &ReadoutSteps::Final).unwrap();
        let (_, e) = mse_loss(&outs[0], &target).unwrap();
        let g = m.backward(&trace, &[e.to_column()]).unwrap();

        // textbook BPTT on h_k = tanh(W h_{k-1} + b + U u_k)
        let n = 5;
        let mut hs = vec![DenseVector::zeros(n)];
        for u in &inputs {
            let h = hs.last().unwrap();
            let z: Vec<f64> = (0..n)
                .map(|i| {
                    m.b_h()[i]
                        + (0..n).map(|j| m.w_h()[(i, j)] * h[j]).sum::<f64>()
                        + (0..2).map(|j| m.w_i()[(i, j)] * u[j]).sum::<f64>()
                })
                .collect();
            hs.push(DenseVector(z.iter().map(|v| v.tanh()).collect()));
        }
        let mut dw = DenseMatrix::zeros(n, n);
        let mut du = DenseMatrix::zeros(n, 2);
        let mut db = DenseVector::zeros(n);
        let mut dh = m.w_o().t_matvec(&e).unwrap();
        for k in (1..hs.len()).rev() {
            let dz = DenseVector((0..n).map(|i| dh[i] * (1.0 - hs[k][i] * hs[k][i])).collect());
            dw = dw.add(&outer(&dz, &hs[k - 1])).unwrap();
            du = du.add(&outer(&dz, &inputs[k - 1])).unwrap();
            for i in 0..n {
                db[i] += dz[i];
            }
            dh = m.w_h().t_matvec(&dz).unwrap();
        }
        assert!(g.w_h.sub(&dw).unwrap().max_abs() <= 1e-12);
        assert!(g.w_i.sub(&du).unwrap().max_abs() <= 1e-12);
        assert!((0..n).all(|i| (g.b_h[i] - db[i]).abs() <= 1e-12));
        assert!(g.w_o.sub(&outer(&e, &hs[6])).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn ioj_degenerate_lengths_and_alpha_zero() {
        let m = model(4, 2, 1, ActivationKind::Tanh, 0.5, 1);
        let t1 = m.forward_batch(None, &random_inputs(2, 1, 1, 1), &ReadoutSteps::Final).unwrap();
        assert_eq!(m.ioj(&t1, 0).unwrap(), DenseMatrix::identity(4));
        let t2 = m.forward_batch(None, &random_inputs(2, 1, 2, 1), &ReadoutSteps::Final).unwrap();
        assert_eq!(m.ioj(&t2, 0).unwrap(), m.step_jacobian(&t2, 1, 0).unwrap());

        let mut m0 = m.clone();
        m0.set_alpha(0.0, 1).unwrap();
        let t = m0.forward_batch(None, &random_inputs(2, 1, 30, 2), &ReadoutSteps::Final).unwrap();
        let j = m0.ioj(&t, 0).unwrap();
        let mut o_pow = DenseMatrix::identity(4);
        for _ in 0..29 {
            o_pow = o_pow.matmul(m0.filter()).unwrap();
        }
        assert!(j.sub(&o_pow).unwrap().max_abs() <= 1e-12);
        let sv = j.singular_values().unwrap();
        assert!(sv.singular_values.iter().all(|s| (s - 1.0).abs() <= 1e-10));
    }

    #[test]
    fn ioj_matches_directional_differences() {
        let m = model(5, 2, 1, ActivationKind::Tanh, 0.2, 6);
        let inputs = random_inputs(2, 1, 10, 7);
        let trace = m.forward_batch(None, &inputs, &ReadoutSteps::Final).unwrap();
        let j = m.ioj(&trace, 0).unwrap();
        let x1 = trace.states[1].clone();
        let v = DenseVector(vec![0.4, -0.2, 0.9, 0.1, -0.6]);
        let jv = j.matvec(&v).unwrap();
        let base = trace.final_state().column(0);
        let residual = |eps: f64| {
            let xp = x1.add(&v.scale(eps).to_column()).unwrap();
            let tp = m.forward_batch(Some(&xp), &inputs[1..], &ReadoutSteps::Final).unwrap();
            let out = tp.final_state().column(0);
            (0..5).map(|i| (out[i] - base[i] - eps * jv[i]).powi(2)).sum::<f64>().sqrt()
        };
        let (r1, r2) = (residual(1e-3), residual(5e-4));
        assert!(r1 < 1e-5);
        assert!((r1 / r2 - 4.0).abs() < 0.2, "ratio {}", r1 / r2);
    }

    #[test]
    fn continuous_time_matches_discrete_update() {
        let m = model(6, 3, 1, ActivationKind::Tanh, 0.05, 8);
        let ct = ContinuousTimeRnn::from_model(&m, 101).unwrap();
        let inputs = random_inputs(3, 1, 100, 9);
        let trace = m.forward_batch(None, &inputs, &ReadoutSteps::Final).unwrap();
        let mut x = DenseVector::zeros(6);
        let mut worst: f64 = 0.0;
        for (k, u) in inputs.iter().enumerate() {
            x = ct.ct_step(&x, &u.column(0)).unwrap();
            let s = trace.states[k + 1].column(0);
            worst = worst.max((0..6).map(|i| (x[i] - s[i]).abs()).fold(0.0, f64::max));
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn a_matrix_hand_value() {
        let p = RnnParams::init(3, 1, 1, RnnInit::default(), 0);
        let m = RoaRnnModel::from_parts(
            p,
            Arc::new(DenseMatrix::identity(3)),
            0.5,
            ActivationKind::Tanh,
            Readout::Identity,
        )
        .unwrap();
        let ct = ContinuousTimeRnn::from_model(&m, 5).unwrap();
        assert!(ct.a.add(&DenseMatrix::identity(3)).unwrap().max_abs() <= 1e-14);
        assert!((ct.dt / ct.tau - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn tanh_states_stay_bounded() {
        let m = model(16, 3, 1, ActivationKind::Tanh, 0.3, 12);
        let mut rng = seeded(99);
        let mut x = DenseMatrix::zeros(16, 1);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let inputs: Vec<DenseMatrix> =
                (0..100).map(|_| DenseMatrix::from_fn(3, 1, |_, _| rng.random_range(-1.0..1.0))).collect();
            let t = m.forward_batch(Some(&x), &inputs, &ReadoutSteps::Final).unwrap();
            worst = t.states.iter().map(DenseMatrix::max_abs).fold(worst, f64::max);
            x = t.final_state().clone();
        }
        assert!(worst <= 10.0);
    }

    #[test]
    fn shared_parameters_across_filter_kinds() {
        let mut cfg = RnnConfig::new(7, 2, 1, Mixing::Rho(1.0), 50);
        let roa = RoaRnnModel::init(&cfg, 5).unwrap();
        cfg.filter_kind = FilterKind::Identity;
        let eye = RoaRnnModel::init(&cfg, 5).unwrap();
        assert_eq!(roa.flatten(), eye.flatten());
        assert_ne!(roa.filter(), eye.filter());
        assert!((roa.alpha() - 0.02).abs() < 1e-15);
        assert!((roa.rho() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_uniform_init() {
        let p = RnnParams::init(9, 2, 3, RnnInit::OrthogonalUniform, 1);
        let wtw = p.w_h.t_matmul(&p.w_h).unwrap();
        assert!(wtw.sub(&DenseMatrix::identity(9)).unwrap().max_abs() < 1e-12);
        let bound = 1.0 / 3.0;
        assert!(p.w_i.max_abs() < bound && p.w_o.max_abs() < bound && p.b_h.max_abs() < bound);
    }

    #[test]
    fn readout_step_validation() {
        let m = model(3, 1, 1, ActivationKind::Relu, 0.5, 0);
        let inputs = random_inputs(1, 1, 4, 0);
        assert!(m.forward_batch(None, &inputs, &ReadoutSteps::Set(vec![0])).is_err());
        assert!(m.forward_batch(None, &inputs, &ReadoutSteps::Set(vec![5])).is_err());
        let t = m.forward_batch(None, &inputs, &ReadoutSteps::Set(vec![4, 2])).unwrap();
        assert_eq!(t.readout_steps, vec![2, 4]);
        assert!(m.forward_batch(None, &random_inputs(2, 1, 3, 0), &ReadoutSteps::All).is_err());
    }
}
