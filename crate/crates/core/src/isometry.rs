//! Numerical certification of the depth-independent singular value
//! bounds, the per-step norm recursions behind them, and a central
//! finite-difference gradient oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::filters::orthogonality_defect;
use crate::fnn::RoaFnnModel;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::rnn::{ReadoutSteps, RnnTrace, RoaRnnModel};

/// Multiplicative slack applied to every bound assertion.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub rho: f64,
    /// Upper end of the activation derivative range.
    pub r: f64,
    pub sigma: f64,
    /// Number of layers `L`; the IOJ has `L − 1` factors.
    pub layers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThmBounds {
    /// `exp(−ρ(1 + rσ))`
    pub lower: f64,
    /// `exp(ρ(rσ − 1))`
    pub upper: f64,
    /// Whether `ρ < (L − 1)/(1 + rσ)`, the hypothesis of the lower bound.
    pub lower_applicable: bool,
    /// `[1 − α(1 + rσ)]^{L−1}` with `α = ρ/(L − 1)`; the finite-depth
    /// product the closed-form lower bound approximates from above.
    pub lower_product: f64,
    /// `[1 + α(rσ − 1)]^{L−1}`, never above `upper`.
    pub upper_product: f64,
}

impl BoundSpec {
    pub fn alpha(&self) -> f64 {
        self.rho / self.layers.saturating_sub(1).max(1) as f64
    }

    pub fn lower_applicable(&self) -> bool {
        self.rho > 0.0 && self.rho < self.layers.saturating_sub(1) as f64 / (1.0 + self.r * self.sigma)
    }
}

pub fn thm_bounds(spec: &BoundSpec) -> ThmBounds {
    let rs = spec.r * spec.sigma;
    let n = spec.layers.saturating_sub(1) as i32;
    let a = spec.alpha();
    ThmBounds {
        lower: (-spec.rho * (1.0 + rs)).exp(),
        upper: (spec.rho * (rs - 1.0)).exp(),
        lower_applicable: spec.lower_applicable(),
        lower_product: (1.0 - a * (1.0 + rs)).max(0.0).powi(n),
        upper_product: (1.0 + a * (rs - 1.0)).powi(n),
    }
}

/// Suffix products `P_L = I`, `P_l = P_{l+1} J_l` for `l = L−1 .. 1`,
/// together with the data entering each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialJacobianProduct {
    /// `p[l − 1] = P_l` for `l = 1 ..= L`.
    pub p: Vec<DenseMatrix>,
    pub alpha: f64,
    /// `sigma[l − 1] = ‖W_l‖` for `l = 1 .. L−1`.
    pub sigma: Vec<f64>,
    /// Whether `O_l` is square or wide (`n_{l+1} ≤ n_l`), for each step.
    pub contracting: Vec<bool>,
}

impl PartialJacobianProduct {
    fn build(
        out_dim: usize,
        layers: usize,
        alpha: f64,
        mut step: impl FnMut(usize) -> Result<(DenseMatrix, f64, bool)>,
    ) -> Result<Self> {
        let n = layers.max(1);
        let mut p = vec![DenseMatrix::zeros(0, 0); n];
        let mut sigma = vec![0.0; n - 1];
        let mut contracting = vec![true; n - 1];
        p[n - 1] = DenseMatrix::identity(out_dim);
        for l in (1..n).rev() {
            let (j, s, c) = step(l)?;
            p[l - 1] = p[l].matmul(&j)?;
            sigma[l - 1] = s;
            contracting[l - 1] = c;
        }
        Ok(Self { p, alpha, sigma, contracting })
    }

    pub fn for_fnn(model: &RoaFnnModel, trace: &crate::fnn::ForwardTrace, sample: usize) -> Result<Self> {
        let dims = model.layer_dims();
        Self::build(model.output_dim(), model.depth(), model.alpha(), |l| {
            let j = model.step_jacobian(trace, l, sample)?;
            let s = model.weights()[l].spectral_norm()?;
            Ok((j, s, dims[l + 1] <= dims[l]))
        })
    }

    pub fn for_rnn(model: &RoaRnnModel, trace: &RnnTrace, sample: usize) -> Result<Self> {
        let sigma = model.w_h().spectral_norm()?;
        Self::build(model.hidden_dim(), trace.len(), model.alpha(), |l| {
            Ok((model.step_jacobian(trace, l, sample)?, sigma, true))
        })
    }

    pub fn layers(&self) -> usize {
        self.p.len()
    }

    /// `P_1`, the input–output Jacobian.
    pub fn ioj(&self) -> &DenseMatrix {
        &self.p[0]
    }

    /// `‖P_l‖` for `l = L, L−1, .., 1`.
    pub fn norm_trajectory(&self) -> Result<Vec<f64>> {
        self.p.iter().rev().map(|m| Ok(m.spectral_norm()?)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    /// `‖P_l‖ / ‖P_{l+1}‖` for `l = 1 .. L−1`.
    pub ratios: Vec<f64>,
    pub upper_ok: Vec<bool>,
    /// `None` where the lower recursion's hypothesis does not hold.
    pub lower_ok: Vec<Option<bool>>,
}

impl RecursionReport {
    pub fn pass(&self) -> bool {
        self.upper_ok.iter().all(|&b| b) && self.lower_ok.iter().all(|b| b.unwrap_or(true))
    }
}

/// Checks `‖P_l‖ ≤ [1 + α(rσ_l − 1)]‖P_{l+1}‖` at every step and
/// `‖P_l‖ ≥ [1 − α(1 + rσ_l)]‖P_{l+1}‖` where the filter is square or wide.
pub fn check_recursions(pjp: &PartialJacobianProduct, r: f64) -> Result<RecursionReport> {
    let norms: Vec<f64> = pjp.p.iter().map(|m| m.spectral_norm()).collect::<std::result::Result<_, _>>()?;
    let a = pjp.alpha;
    let n = pjp.layers();
    let mut rep = RecursionReport { ratios: Vec::new(), upper_ok: Vec::new(), lower_ok: Vec::new() };
    for l in 1..n {
        let (pl, pnext) = (norms[l - 1], norms[l]);
        let s = pjp.sigma[l - 1];
        let up = (1.0 + a * (r * s - 1.0)) * pnext;
        let lo = (1.0 - a * (1.0 + r * s)) * pnext;
        rep.ratios.push(if pnext > 0.0 { pl / pnext } else { f64::NAN });
        rep.upper_ok.push(pl <= up * (1.0 + SLACK) + f64::MIN_POSITIVE);
        rep.lower_ok.push(pjp.contracting[l - 1].then_some(pl >= lo - SLACK * pnext));
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LemmaError {
    #[error("O is {rows}×{cols}; the lemma needs rows ≤ cols")]
    Tall { rows: usize, cols: usize },
    #[error("O is not semi-orthogonal (defect {0:e})")]
    NotSemiOrthogonal(f64),
    #[error("P has {p_cols} columns but O has {o_rows} rows")]
    Shape { p_cols: usize, o_rows: usize },
}

/// `‖PO‖ = ‖P‖` for semi-orthogonal `O` with at most as many rows as
/// columns. Violated preconditions are reported, not asserted.
pub fn check_lemma_same_norm(p: &DenseMatrix, o: &DenseMatrix) -> std::result::Result<bool, LemmaError> {
    if o.rows() > o.cols() {
        return Err(LemmaError::Tall { rows: o.rows(), cols: o.cols() });
    }
    if p.cols() != o.rows() {
        return Err(LemmaError::Shape { p_cols: p.cols(), o_rows: o.rows() });
    }
    let defect = orthogonality_defect(o);
    if defect > 1e-10 {
        return Err(LemmaError::NotSemiOrthogonal(defect));
    }
    let np = p.spectral_norm().expect("finite P");
    let npo = p.matmul(o).expect("shapes checked").spectral_norm().expect("finite PO");
    Ok((npo - np).abs() <= 1e-10 * np.max(f64::MIN_POSITIVE))
}

/// Upper bound `1/(1 − α(1 + rσ))` on the inverse norm of one step
/// Jacobian; infinite when the hypothesis fails.
pub fn inverse_norm_bound(alpha: f64, r: f64, sigma: f64) -> f64 {
    let d = 1.0 - alpha * (1.0 + r * sigma);
    if d > 0.0 {
        1.0 / d
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Singular values of the IOJ, descending.
    pub spectrum: Vec<f64>,
    pub upper_ok: bool,
    /// `None` when the lower bound is not asserted.
    pub lower_ok: Option<bool>,
    /// `‖P_l‖` for `l = L .. 1`.
    pub norm_trajectory: Vec<f64>,
    pub recursions_ok: bool,
    /// Worst `‖J_l^{-1}‖ · (1 − α(1 + rσ))` over steps (recurrent only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_ratio: Option<f64>,
    /// `|1/‖J^{-1}‖ − σ_min| / σ_min` for the IOJ (recurrent only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_sv_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub model: String,
    pub layers: usize,
    pub alpha: f64,
    pub rho: f64,
    pub r: f64,
    /// σ measured on the weights at certification time.
    pub sigma: f64,
    pub bounds: ThmBounds,
    pub lower_asserted: bool,
    /// Whether the whole spectrum (not only its maximum) is checked.
    pub full_spectrum: bool,
    pub probes: Vec<ProbeReport>,
    pub pass: bool,
}

impl IsometryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn max_singular_value(&self) -> f64 {
        self.probes.iter().filter_map(|p| p.spectrum.first().copied()).fold(0.0, f64::max)
    }

    pub fn min_singular_value(&self) -> f64 {
        self.probes.iter().filter_map(|p| p.spectrum.last().copied()).fold(f64::INFINITY, f64::min)
    }
}

fn within(v: f64, lo: f64, hi: f64) -> (bool, bool) {
    (v <= hi * (1.0 + SLACK), v >= lo * (1.0 - SLACK))
}

/// Certifies the spectral norm of the IOJ at each probe input.
pub fn certify_fnn(model: &RoaFnnModel, probes: &[DenseVector]) -> Result<IsometryReport> {
    let r = model.activation().derivative_bound();
    let sigma = model.sigma_max();
    let layers = model.depth();
    let spec = BoundSpec { rho: model.alpha() * layers.saturating_sub(1) as f64, r, sigma, layers };
    let bounds = thm_bounds(&spec);
    let nonincreasing = model.layer_dims()[1..].windows(2).all(|w| w[1] <= w[0]);
    let lower_asserted = bounds.lower_applicable && nonincreasing;
    let mut reports = Vec::with_capacity(probes.len());
    for x in probes {
        let (_, trace) = model.forward(x)?;
        let pjp = PartialJacobianProduct::for_fnn(model, &trace, 0)?;
        let spectrum = pjp.ioj().singular_values()?.singular_values;
        let top = spectrum.first().copied().unwrap_or(0.0);
        let (upper_ok, lower_ok) = within(top, bounds.lower, bounds.upper);
        reports.push(ProbeReport {
            spectrum,
            upper_ok,
            lower_ok: lower_asserted.then_some(lower_ok),
            norm_trajectory: pjp.norm_trajectory()?,
            recursions_ok: check_recursions(&pjp, r)?.pass(),
            inverse_ratio: None,
            min_sv_mismatch: None,
        });
    }
    Ok(finish("roafnn", layers, model.alpha(), spec, bounds, lower_asserted, false, reports))
}

/// Certifies the whole IOJ spectrum `∂x_L/∂x_1` along each probe input
/// sequence (`L` = sequence length), starting from `x0` (zero if absent).
pub fn certify_rnn(
    model: &RoaRnnModel,
    probes: &[Vec<DenseVector>],
    x0: Option<&DenseVector>,
) -> Result<IsometryReport> {
    let r = model.activation().derivative_bound();
    let sigma = model.sigma();
    let layers = probes.first().map_or(0, Vec::len);
    let alpha = model.alpha();
    let spec = BoundSpec { rho: alpha * layers.saturating_sub(1) as f64, r, sigma, layers };
    let bounds = thm_bounds(&spec);
    let lower_asserted = bounds.lower_applicable;
    let inv_bound = inverse_norm_bound(alpha, r, sigma);
    let mut reports = Vec::with_capacity(probes.len());
    for seq in probes {
        crate::error::expect_len("probe length", layers, seq.len())?;
        let (_, trace) = model.forward(x0, seq, &ReadoutSteps::Final)?;
        let pjp = PartialJacobianProduct::for_rnn(model, &trace, 0)?;
        let spectrum = pjp.ioj().singular_values()?.singular_values;
        let hi = spectrum.first().copied().unwrap_or(0.0);
        let lo = spectrum.last().copied().unwrap_or(0.0);
        let upper_ok = within(hi, bounds.lower, bounds.upper).0;
        let lower_ok = within(lo, bounds.lower, bounds.upper).1;
        let (inverse_ratio, min_sv_mismatch) = if lower_asserted {
            let mut worst: f64 = 0.0;
            for l in 1..trace.len() {
                let inv = model.step_jacobian(&trace, l, 0)?.inverse()?;
                worst = worst.max(inv.spectral_norm()? / inv_bound);
            }
            let inv_ioj = pjp.ioj().inverse()?;
            let via_inverse = 1.0 / inv_ioj.spectral_norm()?;
            (Some(worst), Some((via_inverse - lo).abs() / lo))
        } else {
            (None, None)
        };
        reports.push(ProbeReport {
            spectrum,
            upper_ok,
            lower_ok: lower_asserted.then_some(lower_ok),
            norm_trajectory: pjp.norm_trajectory()?,
            recursions_ok: check_recursions(&pjp, r)?.pass(),
            inverse_ratio,
            min_sv_mismatch,
        });
    }
    Ok(finish("roarnn", layers, alpha, spec, bounds, lower_asserted, true, reports))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &str,
    layers: usize,
    alpha: f64,
    spec: BoundSpec,
    bounds: ThmBounds,
    lower_asserted: bool,
    full_spectrum: bool,
    probes: Vec<ProbeReport>,
) -> IsometryReport {
    let pass = probes
        .iter()
        .all(|p| p.upper_ok && p.lower_ok.unwrap_or(true) && p.inverse_ratio.is_none_or(|w| w <= 1.0 + SLACK));
    IsometryReport {
        model: model.to_string(),
        layers,
        alpha,
        rho: spec.rho,
        r: spec.r,
        sigma: spec.sigma,
        bounds,
        lower_asserted,
        full_spectrum,
        probes,
        pass,
    }
}

/// Central differences `(f(p + h e_i) − f(p − h e_i)) / 2h`.
pub fn finite_diff_oracle(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::filters::gen_semi_orthogonal;
    use crate::fnn::{FnnConfig, Mixing};
    use crate::rng::{seeded, uniform_matrix};
    use crate::rnn::{RnnConfig, RnnInit};
    use rand::Rng;
    use std::sync::Arc;

    #[test]
    fn closed_form_values() {
        let b = thm_bounds(&BoundSpec { rho: 1.0, r: 1.0, sigma: 1.0, layers: 100 });
        assert!((b.lower - 0.135_335_283_236_612_7).abs() < 1e-15 && b.upper == 1.0);
        let b = thm_bounds(&BoundSpec { rho: 3.0, r: 1.0, sigma: 2.0, layers: 100 });
        assert!((b.lower - 1.234_098_040_866_795_5e-4).abs() < 1e-18);
        assert!((b.upper - 20.085_536_923_187_668).abs() < 1e-12);
        let b = thm_bounds(&BoundSpec { rho: 1e-12, r: 1.0, sigma: 3.0, layers: 10 });
        assert!((b.lower - 1.0).abs() < 1e-10 && (b.upper - 1.0).abs() < 1e-10);
        assert!(!thm_bounds(&BoundSpec { rho: 50.0, r: 1.0, sigma: 1.0, layers: 100 }).lower_applicable);
    }

    #[test]
    fn products_bracket_inside_closed_forms() {
        for &(rho, sigma, layers) in &[(0.5, 1.3, 10), (1.0, 3.0, 50), (3.0, 0.7, 500)] {
            let b = thm_bounds(&BoundSpec { rho, r: 1.0, sigma, layers });
            assert!(b.upper_product <= b.upper * (1.0 + 1e-12));
            assert!(b.lower_product <= b.lower);
        }
    }

    #[test]
    fn bound_monotonicity_grid() {
        let rhos = [0.1, 0.5, 1.0, 2.0, 5.0];
        let sigmas = [1.1, 1.5, 2.0, 4.0];
        for w in rhos.windows(2) {
            for &s in &sigmas {
                let a = thm_bounds(&BoundSpec { rho: w[0], r: 1.0, sigma: s, layers: 100 });
                let b = thm_bounds(&BoundSpec { rho: w[1], r: 1.0, sigma: s, layers: 100 });
                assert!(b.upper >= a.upper && b.lower <= a.lower);
            }
        }
        for w in sigmas.windows(2) {
            for &rho in &rhos {
                let a = thm_bounds(&BoundSpec { rho, r: 1.0, sigma: w[0], layers: 100 });
                let b = thm_bounds(&BoundSpec { rho, r: 1.0, sigma: w[1], layers: 100 });
                assert!(b.upper >= a.upper && b.lower <= a.lower);
            }
        }
    }

    #[test]
    fn fd_oracle_on_quadratic() {
        let g = finite_diff_oracle(|p| 0.5 * p[0] * p[0], &[3.0], 1e-5);
        assert!((g[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn same_norm_lemma_cases() {
        let mut rng = seeded(4);
        let p = uniform_matrix(4, 6, &mut rng);
        let o = gen_semi_orthogonal(6, 9, 1).unwrap();
        assert_eq!(check_lemma_same_norm(&p, &o), Ok(true));
        let sq = gen_semi_orthogonal(6, 6, 2).unwrap();
        assert_eq!(check_lemma_same_norm(&p, &sq), Ok(true));
        let tall = gen_semi_orthogonal(6, 3, 3).unwrap();
        assert!(matches!(check_lemma_same_norm(&p, &tall), Err(LemmaError::Tall { .. })));
        assert!(matches!(
            check_lemma_same_norm(&p, &DenseMatrix::from_fn(6, 9, |i, j| (i + j) as f64)),
            Err(LemmaError::NotSemiOrthogonal(_))
        ));
    }

    #[test]
    fn certify_fnn_passes_at_depth_fifty() {
        let cfg = FnnConfig::new(vec![2; 51], ActivationKind::Tanh, Mixing::Rho(5.0));
        let model = RoaFnnModel::init(&cfg, 7).unwrap();
        let mut rng = seeded(1);
        let probes: Vec<DenseVector> =
            (0..20).map(|_| DenseVector(vec![rng.random_range(-20.0..30.0), rng.random_range(-15.0..20.0)])).collect();
        let rep = certify_fnn(&model, &probes).unwrap();
        assert!(rep.pass, "{}", rep.to_json());
        assert!(rep.probes.iter().all(|p| p.recursions_ok));
        assert_eq!(rep.probes[0].norm_trajectory.len(), 50);
        assert_eq!(rep.probes[0].norm_trajectory[0], 1.0);
    }

    #[test]
    fn increasing_dims_leave_lower_bound_unasserted() {
        let cfg = FnnConfig::new(vec![2, 3, 4, 5, 6], ActivationKind::Tanh, Mixing::Rho(0.5));
        let model = RoaFnnModel::init(&cfg, 1).unwrap();
        let rep = certify_fnn(&model, &[DenseVector(vec![0.1, 0.2])]).unwrap();
        assert!(!rep.lower_asserted);
        assert!(rep.probes[0].lower_ok.is_none());
    }

    #[test]
    fn vanilla_depth_spreads_spectrum() {
        let cfg = FnnConfig::vanilla(vec![4; 41], ActivationKind::Tanh);
        let model = RoaFnnModel::init(&cfg, 2).unwrap();
        let rep = certify_fnn(&model, &[DenseVector(vec![0.3, -0.1, 0.5, 0.2])]).unwrap();
        assert_eq!(rep.rho, 39.0);
        let s = &rep.probes[0].spectrum;
        assert!(s[0] / s[s.len() - 1] > 1e6 || s[0] < 1e-6 || s[0] > 1e6);
    }

    #[test]
    fn certify_rnn_full_spectrum() {
        let mut cfg = RnnConfig::new(32, 3, 1, Mixing::Rho(1.0), 99);
        cfg.activation = ActivationKind::Tanh;
        let model = RoaRnnModel::init(&cfg, 3).unwrap();
        let mut rng = seeded(2);
        let probes: Vec<Vec<DenseVector>> = (0..5)
            .map(|_| (0..100).map(|_| DenseVector((0..3).map(|_| rng.random_range(-1.0..1.0)).collect())).collect())
            .collect();
        let rep = certify_rnn(&model, &probes, None).unwrap();
        assert!((rep.rho - 1.0).abs() < 1e-12);
        assert!(rep.lower_asserted && rep.pass, "{}", rep.to_json());
        for p in &rep.probes {
            assert!(p.min_sv_mismatch.unwrap() < 1e-8);
            assert!(p.inverse_ratio.unwrap() <= 1.0 + SLACK);
        }
    }

    #[test]
    fn rnn_alpha_zero_is_exact_isometry() {
        let mut cfg = RnnConfig::new(6, 2, 1, Mixing::Alpha(0.5), 10);
        cfg.init = RnnInit::default();
        let mut model = RoaRnnModel::init(&cfg, 0).unwrap();
        model.set_alpha(0.0, 1).unwrap();
        let probe: Vec<DenseVector> = (0..40).map(|k| DenseVector(vec![k as f64 * 0.1, 1.0])).collect();
        let rep = certify_rnn(&model, &[probe], None).unwrap();
        assert!(rep.probes[0].spectrum.iter().all(|s| (s - 1.0).abs() <= 1e-10));
    }

    #[test]
    fn dead_relu_layer_upper_recursion() {
        // all preactivations negative: d_l = 0 and J_l = (1 − α) O_l
        let n = 3;
        let w = vec![DenseMatrix::identity(n); 4];
        let b = vec![DenseVector(vec![-100.0; n]); 4];
        let o: Vec<_> = (0..4).map(|s| Arc::new(gen_semi_orthogonal(n, n, s).unwrap())).collect();
        let model = RoaFnnModel::from_parts(w, b, o, 0.3, ActivationKind::Relu).unwrap();
        let (_, trace) = model.forward(&DenseVector(vec![0.5, 0.1, -0.2])).unwrap();
        let pjp = PartialJacobianProduct::for_fnn(&model, &trace, 0).unwrap();
        let rep = check_recursions(&pjp, 1.0).unwrap();
        assert!(rep.pass());
        assert!(rep.ratios.iter().all(|q| (q - 0.7).abs() < 1e-12));
    }

    #[test]
    fn alpha_zero_recursions_collapse() {
        let cfg = FnnConfig::new(vec![4; 8], ActivationKind::Tanh, Mixing::Rho(1.0));
        let mut model = RoaFnnModel::init(&cfg, 9).unwrap();
        model.set_alpha(0.0).unwrap();
        let (_, trace) = model.forward(&DenseVector(vec![0.1, 0.2, 0.3, 0.4])).unwrap();
        let pjp = PartialJacobianProduct::for_fnn(&model, &trace, 0).unwrap();
        let rep = check_recursions(&pjp, 1.0).unwrap();
        assert!(rep.ratios.iter().all(|q| (q - 1.0).abs() < 1e-12));
    }
}
