//! Dense row-major f64 linear algebra: products, Householder QR,
//! one-sided Jacobi singular values, and a QR-based inverse.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    DimensionMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("{op}: unsupported shape {shape:?} ({reason})")]
    Shape { op: &'static str, shape: (usize, usize), reason: &'static str },
    #[error("{op}: non-finite entry in input")]
    NonFinite { op: &'static str },
    #[error("matrix is numerically singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Column vector.
#[derive(Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DenseVector(pub Vec<f64>);

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self(v.to_vec())
    }

    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[i] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| c * x).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Column matrix view of this vector.
    pub fn to_column(&self) -> DenseMatrix {
        DenseMatrix { rows: self.len(), cols: 1, data: self.0.clone() }
    }
}

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape {
                op: "from_vec",
                shape: (rows, cols),
                reason: "data length differs from rows*cols",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; panics on ragged input (test and literal use).
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Matrix whose columns are the given equal-length vectors.
    pub fn from_columns(columns: &[DenseVector]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(LinalgError::Shape {
                    op: "from_columns",
                    shape: (c.len(), 1),
                    reason: "columns must share a length",
                });
            }
            for i in 0..rows {
                m[(i, j)] = c[i];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (i, x) in v.iter().enumerate() {
            self[(i, j)] = *x;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn scale_in_place(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch { op, left: self.shape(), right: other.shape() });
        }
        Ok(())
    }

    /// `diag(d) · self`
    pub fn scale_rows(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "scale_rows",
                left: (d.len(), d.len()),
                right: self.shape(),
            });
        }
        let mut out = self.clone();
        for (i, di) in d.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|x| *x *= di);
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch { op: "matmul", left: self.shape(), right: other.shape() });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "t_matmul",
                left: (self.cols, self.rows),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.cols, other.cols);
        gemm(1.0, self, true, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: (other.cols, other.rows),
            });
        }
        let mut out = Self::zeros(self.rows, other.rows);
        gemm(1.0, self, false, other, true, 0.0, &mut out);
        Ok(out)
    }

    pub fn matvec(&self, x: &DenseVector) -> Result<DenseVector> {
        if self.cols != x.len() {
            return Err(LinalgError::DimensionMismatch { op: "matvec", left: self.shape(), right: (x.len(), 1) });
        }
        Ok(DenseVector((0..self.rows).map(|i| dot(self.row(i), x.as_slice())).collect()))
    }

    /// `selfᵀ · x`
    pub fn t_matvec(&self, x: &DenseVector) -> Result<DenseVector> {
        if self.rows != x.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "t_matvec",
                left: (self.cols, self.rows),
                right: (x.len(), 1),
            });
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += a * xi;
                }
            }
        }
        Ok(DenseVector(out))
    }

    pub fn qr(&self) -> Result<(DenseMatrix, DenseMatrix)> {
        qr(self)
    }

    pub fn singular_values(&self) -> Result<SvdResult> {
        singular_values(self)
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        spectral_norm(self)
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        inverse(self)
    }
}

/// `c ← alpha · op(a) · op(b) + beta · c`, where `op` optionally transposes.
pub fn gemm(alpha: f64, a: &DenseMatrix, a_t: bool, b: &DenseMatrix, b_t: bool, beta: f64, c: &mut DenseMatrix) {
    let (m, k) = if a_t { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if b_t { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if b_t { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: strides and extents describe the owned buffers exactly.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

/// Rank-one matrix with entries `a_i · b_j`.
pub fn outer(a: &DenseVector, b: &DenseVector) -> DenseMatrix {
    DenseMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

/// Thin Householder QR of a tall (or square) matrix.
///
/// Returns `q` (rows × cols) with orthonormal columns and upper-triangular
/// `r` (cols × cols) with a non-negative diagonal.
pub fn qr(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(LinalgError::Shape {
            op: "qr",
            shape: (m, n),
            reason: "requires rows >= cols; decompose the transpose instead",
        });
    }
    // Work column-major: each Householder step touches columns.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).0).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = DenseMatrix::zeros(n, n);

    for k in 0..n {
        let x = &cols[k][k..];
        let norm_x = dot(x, x).sqrt();
        let mut v = x.to_vec();
        if norm_x == 0.0 {
            // Zero column: identity reflector keeps Q orthonormal.
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm_x } else { norm_x };
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for col in cols.iter_mut().skip(k) {
            let tail = &mut col[k..];
            let f = 2.0 * dot(&v, tail) / vnorm2;
            for (t, vi) in tail.iter_mut().zip(&v) {
                *t -= f * vi;
            }
        }
        reflectors.push(v);
    }
    for j in 0..n {
        for i in 0..=j {
            r[(i, j)] = cols[j][i];
        }
    }

    // Accumulate thin Q by applying reflectors in reverse to [I_n; 0].
    let mut q_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        let vnorm2 = dot(v, v);
        for col in q_cols.iter_mut() {
            let tail = &mut col[k..];
            let f = 2.0 * dot(v, tail) / vnorm2;
            if f != 0.0 {
                for (t, vi) in tail.iter_mut().zip(v) {
                    *t -= f * vi;
                }
            }
        }
    }

    // Positive-diagonal convention.
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            for j in k..n {
                r[(k, j)] = -r[(k, j)];
            }
            q_cols[k].iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut q = DenseMatrix::zeros(m, n);
    for (j, c) in q_cols.iter().enumerate() {
        q.set_column(j, c);
    }
    Ok((q, r))
}

/// Singular values sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
}

impl SvdResult {
    pub fn max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

/// One-sided (Hestenes) Jacobi on the columns of the taller orientation.
pub fn singular_values(a: &DenseMatrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite { op: "singular_values" });
    }
    // Orthogonalize the columns of an m×n matrix with m >= n. Stored as
    // column vectors for contiguous access.
    let work = if a.rows >= a.cols { a.clone() } else { a.transpose() };
    let (m, n) = work.shape();
    if n == 0 {
        return Ok(SvdResult { singular_values: Vec::new() });
    }
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| work.column(j).0).collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let tol = f64::EPSILON * m as f64;

    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for i in 0..m {
                    let xp = cp[i];
                    let xq = cq[i];
                    cp[i] = c * xp - s * xq;
                    cq[i] = s * xp + c * xq;
                }
                norms[p] = dot(cp, cp);
                norms[q] = dot(cq, cq);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).expect("finite singular values"));
    Ok(SvdResult { singular_values: sv })
}

pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.max())
}

/// Inverse of a square matrix via Householder QR: `A⁻¹ = R⁻¹ Qᵀ`.
pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(LinalgError::Shape { op: "inverse", shape: a.shape(), reason: "matrix must be square" });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite { op: "inverse" });
    }
    let n = a.rows;
    let (q, r) = qr(a)?;
    let scale = r.max_abs();
    for i in 0..n {
        if r[(i, i)] <= scale * f64::EPSILON * n as f64 {
            return Err(LinalgError::Singular);
        }
    }
    // Solve R X = Qᵀ by back substitution, column by column.
    let qt = q.transpose();
    let mut x = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in (0..n).rev() {
            let mut s = qt[(i, j)];
            for k in i + 1..n {
                s -= r[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / r[(i, i)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    // Power iteration on AᵀA, used as an independent check of spectral_norm.
    fn power_iteration_norm(a: &DenseMatrix) -> f64 {
        let ata = a.t_matmul(a).unwrap();
        let mut v = DenseVector(vec![1.0; a.cols()]);
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = ata.matvec(&v).unwrap();
            let n = w.norm();
            v = w.scale(1.0 / n);
            if (n - lambda).abs() <= 1e-15 * n {
                lambda = n;
                break;
            }
            lambda = n;
        }
        lambda.sqrt()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(DenseMatrix::identity(2).matmul(&a).unwrap(), a);
        let ones = DenseMatrix::from_rows(&[&[1.0], &[1.0]]);
        assert_eq!(a.matmul(&ones).unwrap(), DenseMatrix::from_rows(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn matmul_mismatch_names_shapes() {
        let err = random(2, 3, 1).matmul(&random(4, 2, 2)).unwrap_err();
        assert_eq!(err, LinalgError::DimensionMismatch { op: "matmul", left: (2, 3), right: (4, 2) });
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn transposed_products_agree() {
        let a = random(5, 3, 3);
        let b = random(5, 4, 4);
        let c = random(6, 3, 5);
        assert!(max_abs_diff(&a.t_matmul(&b).unwrap(), &a.transpose().matmul(&b).unwrap()) < 1e-14);
        assert!(max_abs_diff(&a.matmul_t(&c).unwrap(), &a.matmul(&c.transpose()).unwrap()) < 1e-14);
        let x = DenseVector(vec![0.3, -1.0, 2.0, 0.5, 0.1]);
        let lhs = a.t_matvec(&x).unwrap();
        let rhs = a.transpose().matvec(&x).unwrap();
        assert!(lhs.0.iter().zip(&rhs.0).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn outer_products() {
        let m = outer(&DenseVector(vec![1.0, 2.0]), &DenseVector(vec![3.0, 4.0, 5.0]));
        assert_eq!(m, DenseMatrix::from_rows(&[&[3.0, 4.0, 5.0], &[6.0, 8.0, 10.0]]));
        let z = outer(&DenseVector::zeros(3), &DenseVector(vec![1.0, 2.0]));
        assert_eq!(z, DenseMatrix::zeros(3, 2));
        let e = outer(&DenseVector::basis(3, 0), &DenseVector::basis(3, 1));
        let mut expect = DenseMatrix::zeros(3, 3);
        expect[(0, 1)] = 1.0;
        assert_eq!(e, expect);
    }

    #[test]
    fn qr_identity() {
        let (q, r) = qr(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(q, DenseMatrix::identity(3));
        assert_eq!(r, DenseMatrix::identity(3));
    }

    #[test]
    fn qr_tall_contract() {
        let d = random(5, 3, 11);
        let (q, r) = qr(&d).unwrap();
        assert!(max_abs_diff(&q.t_matmul(&q).unwrap(), &DenseMatrix::identity(3)) <= 1e-12);
        assert!(max_abs_diff(&q.matmul(&r).unwrap(), &d) <= 1e-12);
        for i in 0..3 {
            assert!(r[(i, i)] >= 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_rejects_wide() {
        assert!(matches!(qr(&random(3, 5, 1)), Err(LinalgError::Shape { op: "qr", shape: (3, 5), .. })));
    }

    #[test]
    fn qr_rank_deficient_keeps_orthonormal_q() {
        let mut d = random(4, 3, 2);
        for i in 0..4 {
            d[(i, 1)] = 0.0;
        }
        let (q, r) = qr(&d).unwrap();
        assert!(max_abs_diff(&q.t_matmul(&q).unwrap(), &DenseMatrix::identity(3)) <= 1e-12);
        assert!(max_abs_diff(&q.matmul(&r).unwrap(), &d) <= 1e-12);
    }

    #[test]
    fn singular_values_basic_cases() {
        let s = singular_values(&DenseMatrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 2.0, 1.0]);

        let (q, _) = qr(&random(6, 6, 5)).unwrap();
        for sv in singular_values(&q).unwrap().singular_values {
            assert!((sv - 1.0).abs() <= 1e-12);
        }
        for sv in singular_values(&q.scale(-2.5)).unwrap().singular_values {
            assert!((sv - 2.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn singular_values_count_and_order() {
        for &(r, c) in &[(4, 7), (7, 4), (1, 5), (5, 1)] {
            let s = singular_values(&random(r, c, (r * 10 + c) as u64)).unwrap();
            assert_eq!(s.singular_values.len(), r.min(c));
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.singular_values.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn singular_values_rejects_nan() {
        let mut a = DenseMatrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert_eq!(singular_values(&a), Err(LinalgError::NonFinite { op: "singular_values" }));
    }

    #[test]
    fn spectral_norm_cases() {
        assert!((spectral_norm(&DenseMatrix::identity(4)).unwrap() - 1.0).abs() < 1e-15);
        assert!((spectral_norm(&DenseMatrix::identity(4).scale(2.0)).unwrap() - 2.0).abs() < 1e-15);
        for seed in 0..5 {
            let a = random(4, 4, 100 + seed);
            let s = spectral_norm(&a).unwrap();
            let p = power_iteration_norm(&a);
            assert!((s - p).abs() <= 1e-8 * p, "svd {s} vs power {p}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let a = random(6, 6, 9).add(&DenseMatrix::identity(6).scale(3.0)).unwrap();
        let inv = inverse(&a).unwrap();
        assert!(max_abs_diff(&a.matmul(&inv).unwrap(), &DenseMatrix::identity(6)) < 1e-12);
        assert_eq!(inverse(&DenseMatrix::zeros(3, 3)), Err(LinalgError::Singular));
    }

    #[test]
    fn scale_rows_is_diag_product() {
        let a = random(3, 4, 21);
        let d = [2.0, -1.0, 0.5];
        let lhs = a.scale_rows(&d).unwrap();
        let rhs = DenseMatrix::diag(&d).matmul(&a).unwrap();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-15);
    }
}
