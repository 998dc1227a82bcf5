//! Fixed filter matrices mixed into every layer transition.
//!
//! A filter of shape `(n_out, n_in)` is semi-orthogonal: `OᵀO = I` when
//! `n_in <= n_out`, otherwise `OOᵀ = I`. Random filters come from the QR
//! factor of a matrix with i.i.d. U(-1, 1) entries. No Haar correction is
//! applied beyond the positive-diagonal convention of [`crate::linalg::qr`].

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{qr, DenseMatrix, DenseVector};
use crate::rng::{seeded, uniform_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    RandomOrthogonal,
    SemiPermutation,
    Identity,
}

impl std::str::FromStr for FilterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "random-orthogonal" | "orthogonal" | "random" => Ok(FilterKind::RandomOrthogonal),
            "semi-permutation" | "permutation" => Ok(FilterKind::SemiPermutation),
            "identity" | "eye" => Ok(FilterKind::Identity),
            other => Err(format!("unknown filter kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("filter dimensions must be positive, got ({n_out}, {n_in})")]
    EmptyShape { n_out: usize, n_in: usize },
    #[error("identity filter requires square transitions, got ({n_out}, {n_in}) at transition {index}")]
    NonSquareIdentity { index: usize, n_out: usize, n_in: usize },
    #[error("filter recycling needs uniform layer dims, got {dims:?}")]
    NonUniformRecycle { dims: Vec<usize> },
    #[error("a filter plan needs at least two layer dims")]
    TooFewLayers,
}

/// How to build the filters of a layered model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPlan {
    pub dims: Vec<usize>,
    pub kind: FilterKind,
    /// Reuse a single filter for every transition.
    pub recycle: bool,
    pub seed: u64,
}

impl FilterPlan {
    pub fn new(dims: Vec<usize>, kind: FilterKind, seed: u64) -> Self {
        Self { dims, kind, recycle: false, seed }
    }

    pub fn recycled(mut self) -> Self {
        self.recycle = true;
        self
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.dims.len() < 2 {
            return Err(FilterError::TooFewLayers);
        }
        for (index, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            if n_in == 0 || n_out == 0 {
                return Err(FilterError::EmptyShape { n_out, n_in });
            }
            if self.kind == FilterKind::Identity && n_in != n_out {
                return Err(FilterError::NonSquareIdentity { index, n_out, n_in });
            }
        }
        if self.recycle && self.dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(FilterError::NonUniformRecycle { dims: self.dims.clone() });
        }
        Ok(())
    }
}

/// Semi-orthogonal filter drawn from a caller-supplied stream.
pub fn semi_orthogonal_from<R: Rng + ?Sized>(n_out: usize, n_in: usize, rng: &mut R) -> DenseMatrix {
    let d = uniform_matrix(n_out, n_in, rng);
    if n_in <= n_out {
        qr(&d).expect("tall QR").0
    } else {
        qr(&d.transpose()).expect("tall QR of transpose").0.transpose()
    }
}

pub fn gen_semi_orthogonal(n_out: usize, n_in: usize, seed: u64) -> Result<DenseMatrix, FilterError> {
    if n_out == 0 || n_in == 0 {
        return Err(FilterError::EmptyShape { n_out, n_in });
    }
    Ok(semi_orthogonal_from(n_out, n_in, &mut seeded(seed)))
}

/// Index form of a semi-permutation matrix.
///
/// Tall `(n_out > n_in)`: column `j` is the identity column `sigma[j]`, so
/// `y[sigma[j]] = x[j]`. Wide or square: row `i` is the identity row
/// `sigma[i]`, so `y[i] = x[sigma[i]]`. `sigma` permutes `min(n_out, n_in)`
/// indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemiPermutation {
    pub n_out: usize,
    pub n_in: usize,
    pub sigma: Vec<usize>,
}

impl SemiPermutation {
    pub fn random<R: Rng + ?Sized>(n_out: usize, n_in: usize, rng: &mut R) -> Self {
        let mut sigma: Vec<usize> = (0..n_out.min(n_in)).collect();
        sigma.shuffle(rng);
        Self { n_out, n_in, sigma }
    }

    fn is_tall(&self) -> bool {
        self.n_out > self.n_in
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_in, "semi-permutation input length");
        let mut y = vec![0.0; self.n_out];
        if self.is_tall() {
            for (j, &s) in self.sigma.iter().enumerate() {
                y[s] = x[j];
            }
        } else {
            for (i, &s) in self.sigma.iter().enumerate() {
                y[i] = x[s];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_out, self.n_in);
        if self.is_tall() {
            for (j, &s) in self.sigma.iter().enumerate() {
                m[(s, j)] = 1.0;
            }
        } else {
            for (i, &s) in self.sigma.iter().enumerate() {
                m[(i, s)] = 1.0;
            }
        }
        m
    }
}

pub fn gen_semi_permutation(n_out: usize, n_in: usize, seed: u64) -> Result<DenseMatrix, FilterError> {
    if n_out == 0 || n_in == 0 {
        return Err(FilterError::EmptyShape { n_out, n_in });
    }
    Ok(SemiPermutation::random(n_out, n_in, &mut seeded(seed)).to_dense())
}

fn make_filter<R: Rng + ?Sized>(kind: FilterKind, n_out: usize, n_in: usize, rng: &mut R) -> DenseMatrix {
    match kind {
        FilterKind::RandomOrthogonal => semi_orthogonal_from(n_out, n_in, rng),
        FilterKind::SemiPermutation => SemiPermutation::random(n_out, n_in, rng).to_dense(),
        FilterKind::Identity => DenseMatrix::identity(n_out),
    }
}

/// One filter per transition `dims[l] -> dims[l+1]`, shaped `(dims[l+1], dims[l])`.
/// With `recycle`, every entry shares the same allocation.
pub fn build_filters(plan: &FilterPlan) -> Result<Vec<Arc<DenseMatrix>>, FilterError> {
    plan.validate()?;
    let mut rng = seeded(plan.seed);
    let transitions = plan.dims.len() - 1;
    if plan.recycle {
        let n = plan.dims[0];
        let shared = Arc::new(make_filter(plan.kind, n, n, &mut rng));
        return Ok(vec![shared; transitions]);
    }
    Ok(plan.dims.windows(2).map(|w| Arc::new(make_filter(plan.kind, w[1], w[0], &mut rng))).collect())
}

/// Max-abs deviation of the semi-orthogonality identity appropriate to the shape.
pub fn orthogonality_defect(o: &DenseMatrix) -> f64 {
    let (n_out, n_in) = o.shape();
    let gram = if n_in <= n_out { o.t_matmul(o).expect("gram") } else { o.matmul_t(o).expect("gram") };
    let n = gram.rows();
    gram.sub(&DenseMatrix::identity(n)).expect("square").max_abs()
}

/// `‖Ox‖ / ‖x‖ - 1` for a tall or square filter.
pub fn isometry_defect(o: &DenseMatrix, x: &DenseVector) -> f64 {
    let y = o.matvec(x).expect("filter shape");
    y.norm() / x.norm() - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use proptest::prelude::*;

    #[test]
    fn square_orthogonal() {
        let o = gen_semi_orthogonal(3, 3, 7).unwrap();
        assert!(o.t_matmul(&o).unwrap().sub(&DenseMatrix::identity(3)).unwrap().max_abs() <= 1e-12);
        assert!(o.matmul_t(&o).unwrap().sub(&DenseMatrix::identity(3)).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn tall_and_wide_contracts() {
        let tall = gen_semi_orthogonal(5, 2, 1).unwrap();
        assert_eq!(tall.shape(), (5, 2));
        assert!(orthogonality_defect(&tall) <= 1e-12);
        assert!((spectral_norm(&tall).unwrap() - 1.0).abs() <= 1e-12);

        let wide = gen_semi_orthogonal(2, 5, 1).unwrap();
        assert_eq!(wide.shape(), (2, 5));
        let g = wide.matmul_t(&wide).unwrap();
        assert!(g.sub(&DenseMatrix::identity(2)).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn permutation_square_has_single_one_per_row_and_column() {
        let p = gen_semi_permutation(3, 3, 4).unwrap();
        for i in 0..3 {
            assert_eq!(p.row(i).iter().sum::<f64>(), 1.0);
            assert_eq!(p.column(i).0.iter().sum::<f64>(), 1.0);
        }
        assert!(p.as_slice().iter().all(|x| *x == 0.0 || *x == 1.0));
    }

    #[test]
    fn permutation_tall_gram_is_exact_identity() {
        let p = gen_semi_permutation(4, 2, 9).unwrap();
        assert_eq!(p.t_matmul(&p).unwrap(), DenseMatrix::identity(2));
    }

    #[test]
    fn permutation_fast_path_matches_dense() {
        let mut rng = seeded(3);
        for &(n_out, n_in) in &[(4, 4), (6, 3), (3, 6), (1, 5), (5, 1)] {
            let p = SemiPermutation::random(n_out, n_in, &mut rng);
            let x: Vec<f64> = (0..n_in).map(|i| (i as f64 + 0.5).sin()).collect();
            let dense = p.to_dense().matvec(&DenseVector(x.clone())).unwrap();
            assert_eq!(p.apply(&x), dense.0);
        }
    }

    #[test]
    fn build_filters_shapes_for_fig1_style_net() {
        let plan = FilterPlan::new(vec![2, 2, 2, 1], FilterKind::RandomOrthogonal, 5);
        let f = build_filters(&plan).unwrap();
        let shapes: Vec<_> = f.iter().map(|m| m.shape()).collect();
        assert_eq!(shapes, vec![(2, 2), (2, 2), (1, 2)]);
    }

    #[test]
    fn build_filters_identity_and_recycle() {
        let f = build_filters(&FilterPlan::new(vec![8, 8, 8], FilterKind::Identity, 0)).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|m| **m == DenseMatrix::identity(8)));

        let plan = FilterPlan::new(vec![8, 8, 8], FilterKind::RandomOrthogonal, 0).recycled();
        let f = build_filters(&plan).unwrap();
        assert!(Arc::ptr_eq(&f[0], &f[1]));
    }

    #[test]
    fn plan_errors() {
        let plan = FilterPlan::new(vec![8, 4, 4], FilterKind::RandomOrthogonal, 0).recycled();
        assert!(matches!(build_filters(&plan), Err(FilterError::NonUniformRecycle { .. })));
        let plan = FilterPlan::new(vec![3, 2], FilterKind::Identity, 0);
        assert!(matches!(build_filters(&plan), Err(FilterError::NonSquareIdentity { .. })));
        assert_eq!(gen_semi_orthogonal(0, 2, 0), Err(FilterError::EmptyShape { n_out: 0, n_in: 2 }));
    }

    #[test]
    fn deterministic_given_seed() {
        let plan = FilterPlan::new(vec![5, 4, 6, 3], FilterKind::RandomOrthogonal, 42);
        let a = build_filters(&plan).unwrap();
        let b = build_filters(&plan).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn filters_are_isometries(n_out in 1usize..24, n_in in 1usize..24, seed in any::<u64>(), perm in any::<bool>()) {
            let o = if perm {
                gen_semi_permutation(n_out, n_in, seed).unwrap()
            } else {
                gen_semi_orthogonal(n_out, n_in, seed).unwrap()
            };
            prop_assert!(orthogonality_defect(&o) <= 1e-12);
            prop_assert!((spectral_norm(&o).unwrap() - 1.0).abs() <= 1e-12);
            if n_in <= n_out {
                let x = DenseVector((0..n_in).map(|i| ((seed as f64) * 1e-19 + i as f64).cos() + 0.1).collect());
                prop_assert!(isometry_defect(&o, &x).abs() <= 1e-12);
            }
        }
    }
}
