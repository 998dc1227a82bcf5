//! Browser bindings: IOJ spectra of a recurrent model against the closed-form
//! interval, the `‖P_l‖` depth profile of deep feedforward models, and an
//! in-page double-moon trainer.

use rand::seq::SliceRandom;
use roa_core::isometry::{thm_bounds, BoundSpec, PartialJacobianProduct};
use roa_core::loss::mse_loss_batch;
use roa_core::rng::{seeded, Rng64, WeightInit};
use roa_core::tasks::{gen_double_moon, DoubleMoon, DoubleMoonConfig};
use roa_core::{
    ActivationKind, DenseMatrix, FnnConfig, Mixing, Optimizer, OptimizerConfig, ReadoutSteps, RnnConfig, RoaFnnModel,
    RoaRnnModel,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub alpha: f64,
    pub sigma: f64,
    pub singular_values: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub lower_applicable: bool,
}

/// Singular values of `∂x_L/∂x_1` for a tanh model with `α = ρ/(L − 1)`
/// driven by Gaussian inputs; `rho = None` gives the vanilla recurrence.
pub fn rnn_spectrum_native(hidden: usize, rho: Option<f64>, length: usize, seed: u64) -> roa_core::Result<Spectrum> {
    let length = length.max(2);
    let alpha = rho.map_or(1.0, |r| (r / (length - 1) as f64).min(1.0));
    let mut cfg = RnnConfig::new(hidden, 1, 1, Mixing::Alpha(alpha), length - 1);
    cfg.activation = ActivationKind::Tanh;
    let model = RoaRnnModel::init(&cfg, seed)?;
    let mut rng = seeded(seed ^ 0x1);
    let inputs: Vec<_> = (0..length).map(|_| WeightInit::Normal { std: 1.0 }.vector(1, &mut rng)).collect();
    let (_, trace) = model.forward(None, &inputs, &ReadoutSteps::Final)?;
    let sv = model.ioj(&trace, 0)?.singular_values()?.singular_values;
    let sigma = model.sigma();
    let b = thm_bounds(&BoundSpec { rho: alpha * (length - 1) as f64, r: 1.0, sigma, layers: length });
    Ok(Spectrum {
        alpha,
        sigma,
        singular_values: sv,
        lower: b.lower,
        upper: b.upper,
        lower_applicable: b.lower_applicable,
    })
}

#[wasm_bindgen]
pub fn rnn_spectrum(hidden: usize, rho: f64, length: usize, seed: u32, vanilla: bool) -> Result<String, JsValue> {
    let s = rnn_spectrum_native(hidden, (!vanilla).then_some(rho), length, u64::from(seed)).map_err(js_err)?;
    serde_json::to_string(&s).map_err(js_err)
}

#[derive(Debug, Serialize)]
pub struct DepthProfile {
    /// `‖P_l‖` for `l = L .. 1`, roaFNN.
    pub roa: Vec<f64>,
    /// The same architecture and weights with `α = 1`.
    pub vanilla: Vec<f64>,
}

/// Norms of the partial Jacobian products along a width-2 tanh network.
pub fn depth_profile_native(layers: usize, rho: f64, seed: u64) -> roa_core::Result<DepthProfile> {
    let mut dims = vec![2; layers.max(3)];
    dims.push(1);
    let roa = RoaFnnModel::init(&FnnConfig::new(dims.clone(), ActivationKind::Tanh, Mixing::Rho(rho)), seed)?;
    let mut vanilla = roa.clone();
    vanilla.set_alpha(1.0)?;
    let x = WeightInit::Normal { std: 1.0 }.vector(2, &mut seeded(seed ^ 0x2));
    let profile = |m: &RoaFnnModel| -> roa_core::Result<Vec<f64>> {
        let (_, tr) = m.forward(&x)?;
        PartialJacobianProduct::for_fnn(m, &tr, 0)?.norm_trajectory()
    };
    Ok(DepthProfile { roa: profile(&roa)?, vanilla: profile(&vanilla)? })
}

#[wasm_bindgen]
pub fn depth_profile(layers: usize, rho: f64, seed: u32) -> Result<String, JsValue> {
    serde_json::to_string(&depth_profile_native(layers, rho, u64::from(seed)).map_err(js_err)?).map_err(js_err)
}

/// Trains a deep width-2 network on the double moon one epoch at a time.
#[wasm_bindgen]
pub struct DoubleMoonTrainer {
    model: RoaFnnModel,
    opt: Optimizer,
    data: DoubleMoon,
    order: Vec<usize>,
    rng: Rng64,
    epoch: usize,
}

#[wasm_bindgen]
impl DoubleMoonTrainer {
    /// `rho = 0` trains the vanilla network (α = 1).
    #[wasm_bindgen(constructor)]
    pub fn new(layers: usize, rho: f64, lr: f64, seed: u32) -> Result<DoubleMoonTrainer, JsValue> {
        let seed = u64::from(seed);
        let mut dims = vec![2; layers.max(3)];
        dims.push(1);
        let mixing = if rho > 0.0 { Mixing::Rho(rho) } else { Mixing::Alpha(1.0) };
        let model = RoaFnnModel::init(&FnnConfig::new(dims, ActivationKind::Tanh, mixing), seed).map_err(js_err)?;
        let data = gen_double_moon(&DoubleMoonConfig { seed, ..Default::default() }).map_err(js_err)?;
        let opt = Optimizer::new(OptimizerConfig::sgd(lr)).map_err(js_err)?;
        let order = (0..data.len()).collect();
        Ok(Self { model, opt, data, order, rng: seeded(seed ^ 0x3), epoch: 0 })
    }

    /// One epoch with batches of 100; returns the MSE on the full set.
    pub fn step_epoch(&mut self) -> Result<f64, JsValue> {
        self.order.shuffle(&mut self.rng);
        for idx in self.order.chunks(100) {
            let (x, y) = self.data.batch(idx);
            let tr = self.model.forward_batch(&x).map_err(js_err)?;
            let (_, err) = mse_loss_batch(tr.output(), &y).map_err(js_err)?;
            let g = self.model.backward(&tr, &err).map_err(js_err)?;
            self.opt.step(&mut self.model, &g).map_err(js_err)?;
        }
        self.epoch += 1;
        self.mse()
    }

    pub fn mse(&self) -> Result<f64, JsValue> {
        let (x, y) = self.data.all();
        let tr = self.model.forward_batch(&x).map_err(js_err)?;
        Ok(mse_loss_batch(tr.output(), &y).map_err(js_err)?.0)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn alpha(&self) -> f64 {
        self.model.alpha()
    }

    /// Interleaved `x1, x2, label` triples.
    pub fn points(&self) -> Vec<f64> {
        self.data.points.iter().zip(&self.data.labels).flat_map(|(p, &l)| [p[0], p[1], l]).collect()
    }

    /// Model output on an `nx × ny` grid over `[x0, x1] × [y0, y1]`, row-major
    /// from the top row.
    #[allow(clippy::too_many_arguments)]
    pub fn predict_grid(&self, nx: usize, ny: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Vec<f64>, JsValue> {
        let (nx, ny) = (nx.max(2), ny.max(2));
        let pts = DenseMatrix::from_fn(2, nx * ny, |i, k| {
            let (c, r) = (k % nx, k / nx);
            if i == 0 {
                x0 + (x1 - x0) * c as f64 / (nx - 1) as f64
            } else {
                y1 - (y1 - y0) * r as f64 / (ny - 1) as f64
            }
        });
        let tr = self.model.forward_batch(&pts).map_err(js_err)?;
        Ok(tr.output().as_slice().to_vec())
    }
}
