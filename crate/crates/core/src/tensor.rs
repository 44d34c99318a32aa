//! Dense complex tensors, pairwise contraction and the two factorizations the
//! rest of the stack is built on.
//!
//! Element order is row-major over the shape list: the last axis varies
//! fastest. This order is also the on-disk order of checkpoint files.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::svd::{self, ComputeSvdVectors};
use faer::{Accum, Mat, MatRef, Par};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {got} were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("zero-sized dimension in shape {0:?}")]
    EmptyDimension(Vec<usize>),
    #[error("contraction pair ({left}, {right}) joins dimensions {left_dim} and {right_dim}")]
    DimensionMismatch {
        left: usize,
        right: usize,
        left_dim: usize,
        right_dim: usize,
    },
    #[error("axis {axis} out of range for a rank-{rank} tensor")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("axis list {0:?} is not a permutation")]
    InvalidPermutation(Vec<usize>),
    #[error("left index set must be a nonempty proper subset of the axes")]
    InvalidSplit,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("expected a square matrix, got shape {0:?}")]
    NotSquare(Vec<usize>),
    #[error("matrix deviates from its adjoint by {0:e}")]
    NotHermitian(f64),
    #[error("factorization did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Truncation applied after every factorization that feeds an MPS bond.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncationPolicy {
    /// Maximum number of singular values kept.
    pub chi_max: usize,
    /// Trailing singular values whose squared sum stays at or below this are dropped.
    pub cutoff: f64,
    /// Rescale kept singular values to unit squared norm.
    pub renormalize: bool,
}

impl TruncationPolicy {
    pub fn new(chi_max: usize) -> Self {
        Self {
            chi_max: chi_max.max(1),
            ..Self::default()
        }
    }

    /// Keeps everything that is numerically nonzero.
    pub fn exact() -> Self {
        Self {
            chi_max: usize::MAX,
            cutoff: 0.0,
            renormalize: false,
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_renormalize(mut self, renormalize: bool) -> Self {
        self.renormalize = renormalize;
        self
    }

    /// Number of leading values of a descending spectrum to keep.
    pub fn keep_count(&self, s: &[f64]) -> usize {
        let mut keep = s.len().min(self.chi_max).max(1);
        let mut tail = s[keep..].iter().map(|x| x * x).sum::<f64>();
        while keep > 1 {
            let w = s[keep - 1] * s[keep - 1];
            if tail + w <= self.cutoff {
                tail += w;
                keep -= 1;
            } else {
                break;
            }
        }
        keep
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            chi_max: 256,
            cutoff: 1e-12,
            renormalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::EmptyDimension(shape));
        }
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![ZERO; n],
        }
    }

    pub fn scalar(value: C64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let n = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self { shape, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(vec![n, n], |i| if i[0] == i[1] { ONE } else { ZERO })
    }

    /// Copies a matrix into a rank-2 tensor.
    pub fn from_mat(m: MatRef<'_, C64>) -> Self {
        let (r, c) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        Self {
            shape: vec![r, c],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(mut self, alpha: C64) -> Self {
        self.data.iter_mut().for_each(|z| *z *= alpha);
        self
    }

    /// Frobenius distance to a tensor of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Reorders axes so that axis `k` of the result is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r {
            return Err(TensorError::InvalidPermutation(perm.to_vec()));
        }
        for &p in perm {
            if p >= r || seen[p] {
                return Err(TensorError::InvalidPermutation(perm.to_vec()));
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let mut strides = vec![1usize; r];
        for ax in (0..r.saturating_sub(1)).rev() {
            strides[ax] = strides[ax + 1] * self.shape[ax + 1];
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                off += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                off -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    /// Row-major view with the first `row_axes` axes fused into rows.
    pub fn as_mat(&self, row_axes: usize) -> MatRef<'_, C64> {
        let rows: usize = self.shape[..row_axes].iter().product();
        let cols: usize = self.shape[row_axes..].iter().product();
        MatRef::from_row_major_slice(&self.data, rows, cols)
    }
}

/// Contracts `a` and `b` over the listed `(axis of a, axis of b)` pairs.
///
/// The result carries the free axes of `a` followed by the free axes of `b`,
/// each in their original order.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    for &(i, j) in pairs {
        if i >= a.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis: i,
                rank: a.rank(),
            });
        }
        if j >= b.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis: j,
                rank: b.rank(),
            });
        }
        if a.shape[i] != b.shape[j] {
            return Err(TensorError::DimensionMismatch {
                left: i,
                right: j,
                left_dim: a.shape[i],
                right_dim: b.shape[j],
            });
        }
    }
    let a_pair: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let b_pair: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let a_free: Vec<usize> = (0..a.rank()).filter(|k| !a_pair.contains(k)).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|k| !b_pair.contains(k)).collect();
    if a_free.len() + a_pair.len() != a.rank() || b_free.len() + b_pair.len() != b.rank() {
        return Err(TensorError::InvalidPermutation(a_pair));
    }

    let a_perm: Vec<usize> = a_free.iter().chain(&a_pair).copied().collect();
    let b_perm: Vec<usize> = b_pair.iter().chain(&b_free).copied().collect();
    let ap = a.permute(&a_perm)?;
    let bp = b.permute(&b_perm)?;
    let m = ap.as_mat(a_free.len());
    let n = bp.as_mat(b_pair.len());
    let mut out = Mat::<C64>::zeros(m.nrows(), n.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, m, n, ONE, Par::Seq);

    let shape: Vec<usize> = a_free
        .iter()
        .map(|&k| a.shape[k])
        .chain(b_free.iter().map(|&k| b.shape[k]))
        .collect();
    let rows = m.nrows();
    let cols = n.ncols();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(out[(i, j)]);
        }
    }
    DenseTensor::new(shape, data)
}

/// Row-major matrix view over a slice.
pub(crate) fn rm(data: &[C64], rows: usize, cols: usize) -> MatRef<'_, C64> {
    MatRef::from_row_major_slice(data, rows, cols)
}

pub(crate) fn rm_mut(data: &mut [C64], rows: usize, cols: usize) -> faer::MatMut<'_, C64> {
    faer::MatMut::from_row_major_slice_mut(data, rows, cols)
}

/// `dst = a · b` (or `dst += a · b`), sequential.
pub(crate) fn gemm<A, B>(dst: faer::MatMut<'_, C64>, a: MatRef<'_, A>, b: MatRef<'_, B>, accumulate: bool)
where
    A: faer::traits::Conjugate<Canonical = C64>,
    B: faer::traits::Conjugate<Canonical = C64>,
{
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    faer::linalg::matmul::matmul(dst, accum, a, b, ONE, Par::Seq);
}

/// Copies any matrix view into a row-major vector.
pub(crate) fn to_row_major(m: MatRef<'_, C64>) -> Vec<C64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = vec![ZERO; r * c];
    rm_mut(&mut out, r, c).copy_from(m);
    out
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left isometry; the left axes of the input followed by the new bond.
    pub u: DenseTensor,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// Right isometry; the new bond followed by the remaining axes of the input.
    pub v: DenseTensor,
    /// Sum of squared singular values that were dropped.
    pub discarded_weight: f64,
}

/// Thin SVD of a matrix, singular values in descending order.
pub(crate) fn thin_svd(m: MatRef<'_, C64>) -> Result<(Mat<C64>, Vec<f64>, Mat<C64>)> {
    let (r, c) = (m.nrows(), m.ncols());
    let k = r.min(c);
    if m.col_iter().any(|col| col.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(TensorError::NonFinite);
    }
    let mut u = Mat::<C64>::zeros(r, k);
    let mut v = Mat::<C64>::zeros(c, k);
    let mut s = faer::diag::Diag::<C64>::zeros(k);
    let mut buf = MemBuffer::new(svd::svd_scratch::<C64>(
        r,
        c,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        Par::Seq,
        Default::default(),
    ));
    svd::svd(
        m,
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| TensorError::NoConvergence)?;
    let sv: Vec<f64> = (0..k).map(|i| s[i].re.max(0.0)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    if sv.windows(2).any(|w| w[0] < w[1]) {
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        let u2 = Mat::from_fn(r, k, |i, j| u[(i, order[j])]);
        let v2 = Mat::from_fn(c, k, |i, j| v[(i, order[j])]);
        let s2 = order.iter().map(|&j| sv[j]).collect();
        return Ok((u2, s2, v2));
    }
    Ok((u, sv, v))
}

/// Truncated SVD of a matrix. Returns `U` (rows × k), `s`, `V†` (k × cols) and
/// the discarded weight.
pub(crate) fn truncated_svd(
    m: MatRef<'_, C64>,
    policy: &TruncationPolicy,
) -> Result<(Mat<C64>, Vec<f64>, Mat<C64>, f64)> {
    let (u, mut s, v) = thin_svd(m)?;
    let keep = policy.keep_count(&s);
    let discarded = s[keep..].iter().map(|x| x * x).sum::<f64>();
    s.truncate(keep);
    if policy.renormalize {
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            s.iter_mut().for_each(|x| *x /= norm);
        }
    }
    let u = u.subcols(0, keep).to_owned();
    let vh = v.subcols(0, keep).adjoint().to_owned();
    Ok((u, s, vh, discarded))
}

/// Splits `t` into `U · diag(s) · V` with `left_indices` on the `U` side.
pub fn svd_split(t: &DenseTensor, left_indices: &[usize], policy: &TruncationPolicy) -> Result<SvdResult> {
    let r = t.rank();
    if left_indices.is_empty() || left_indices.len() >= r {
        return Err(TensorError::InvalidSplit);
    }
    let mut seen = vec![false; r];
    for &i in left_indices {
        if i >= r {
            return Err(TensorError::AxisOutOfRange { axis: i, rank: r });
        }
        if seen[i] {
            return Err(TensorError::InvalidSplit);
        }
        seen[i] = true;
    }
    if !t.is_finite() {
        return Err(TensorError::NonFinite);
    }
    let right: Vec<usize> = (0..r).filter(|k| !seen[*k]).collect();
    let perm: Vec<usize> = left_indices.iter().chain(&right).copied().collect();
    let p = t.permute(&perm)?;
    let (u, s, vh, discarded) = truncated_svd(p.as_mat(left_indices.len()), policy)?;
    let k = s.len();

    let mut u_shape: Vec<usize> = left_indices.iter().map(|&i| t.shape[i]).collect();
    u_shape.push(k);
    let mut v_shape = vec![k];
    v_shape.extend(right.iter().map(|&i| t.shape[i]));
    Ok(SvdResult {
        u: DenseTensor::new(u_shape, DenseTensor::from_mat(u.as_ref()).into_data())?,
        s,
        v: DenseTensor::new(v_shape, DenseTensor::from_mat(vh.as_ref()).into_data())?,
        discarded_weight: discarded,
    })
}

/// Eigendecomposition of a Hermitian matrix given as a faer matrix, eigenvalues
/// descending. Columns of the returned matrix are the eigenvectors.
pub(crate) fn eigh_mat(m: MatRef<'_, C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let n = m.nrows();
    let mut u = Mat::<C64>::zeros(n, n);
    let mut s = faer::diag::Diag::<C64>::zeros(n);
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<C64>(
        n,
        ComputeEigenvectors::Yes,
        Par::Seq,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        m,
        s.as_mut(),
        Some(u.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| TensorError::NoConvergence)?;
    let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let sorted = order.iter().map(|&j| vals[j]).collect();
    let vecs = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok((sorted, vecs))
}

/// Maximum elementwise deviation of a square matrix from its adjoint.
pub(crate) fn hermitian_defect(m: MatRef<'_, C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues (descending) and eigenvectors (as columns of a rank-2 tensor)
/// of a Hermitian matrix.
pub fn hermitian_eigendecomposition(m: &DenseTensor) -> Result<(Vec<f64>, DenseTensor)> {
    if m.rank() != 2 || m.shape[0] != m.shape[1] {
        return Err(TensorError::NotSquare(m.shape.clone()));
    }
    if !m.is_finite() {
        return Err(TensorError::NonFinite);
    }
    let view = m.as_mat(1);
    let defect = hermitian_defect(view);
    if defect > 1e-10 {
        return Err(TensorError::NotHermitian(defect));
    }
    let (vals, vecs) = eigh_mat(view)?;
    Ok((vals, DenseTensor::from_mat(vecs.as_ref())))
}

/// `-Σ p log p` over the given probabilities, skipping non-positive entries.
pub fn von_neumann(probabilities: impl IntoIterator<Item = f64>) -> f64 {
    probabilities
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}
