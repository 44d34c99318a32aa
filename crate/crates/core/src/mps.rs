//! Open-boundary matrix product states of three-level sites.
//!
//! Site tensors are stored as `[left, physical, right]` row-major. When the
//! orthogonality center is known, every expectation value and measurement only
//! touches the tensors between the center and the operator window.

use faer::Mat;
use rand::Rng;
use thiserror::Error;

use crate::lattice::{Op3, LOCAL_DIM};
use crate::tensor::{
    gemm, rm, rm_mut, to_row_major, truncated_svd, DenseTensor, TensorError, TruncationPolicy, C64, ONE, ZERO,
};

const D: usize = LOCAL_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpsError {
    #[error("an MPS needs at least one site")]
    Empty,
    #[error("site {site} out of range for a {len}-site chain")]
    SiteOutOfRange { site: usize, len: usize },
    #[error("bond {bond} out of range for a {len}-site chain")]
    BondOutOfRange { bond: usize, len: usize },
    #[error("site tensor {site} has shape {shape:?}; expected [left, 3, right] matching its neighbours")]
    BadTensor { site: usize, shape: Vec<usize> },
    #[error("operator sites must be strictly increasing and 1 to 3 long, got {0:?}")]
    BadSites(Vec<usize>),
    #[error("operator on {width} sites needs a {dim}x{dim} matrix, got {got} entries")]
    BadMatrix { width: usize, dim: usize, got: usize },
    #[error("projector {index} is not a Hermitian idempotent (defect {defect:e})")]
    NotProjector { index: usize, defect: f64 },
    #[error("projectors act on different sites")]
    MixedWindows,
    #[error("projectors do not resolve the identity (defect {0:e})")]
    IncompleteSet(f64),
    #[error("Born probabilities sum to {0}")]
    ProbabilityDeficit(f64),
    #[error("outcome {outcome} has probability {probability:e}")]
    ZeroProbability { outcome: usize, probability: f64 },
    #[error("state has zero norm after operator application")]
    ZeroNorm,
    #[error("dense vector of length {got} does not match {sites} sites")]
    DenseLength { sites: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, MpsError>;

/// A dense operator on up to three (not necessarily adjacent) sites.
///
/// The matrix is row-major over `3^w × 3^w`, with the first listed site as the
/// most significant digit of both row and column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    sites: Vec<usize>,
    matrix: Vec<C64>,
}

impl LocalOperator {
    pub fn new(sites: Vec<usize>, matrix: Vec<C64>) -> Result<Self> {
        if sites.is_empty() || sites.len() > 3 || sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MpsError::BadSites(sites));
        }
        let dim = D.pow(sites.len() as u32);
        if matrix.len() != dim * dim {
            return Err(MpsError::BadMatrix {
                width: sites.len(),
                dim,
                got: matrix.len(),
            });
        }
        Ok(Self { sites, matrix })
    }

    pub fn single(site: usize, op: &Op3) -> Self {
        Self {
            sites: vec![site],
            matrix: op.iter().flatten().copied().collect(),
        }
    }

    /// Tensor product of single-site operators at strictly increasing sites.
    pub fn product(factors: &[(usize, Op3)]) -> Result<Self> {
        let sites: Vec<usize> = factors.iter().map(|f| f.0).collect();
        let mut m = vec![ONE];
        let mut dim = 1;
        for (_, op) in factors {
            let nd = dim * D;
            let mut next = vec![ZERO; nd * nd];
            for i in 0..dim {
                for j in 0..dim {
                    let x = m[i * dim + j];
                    if x == ZERO {
                        continue;
                    }
                    for a in 0..D {
                        for b in 0..D {
                            next[(i * D + a) * nd + j * D + b] = x * op[a][b];
                        }
                    }
                }
            }
            m = next;
            dim = nd;
        }
        Self::new(sites, m)
    }

    /// Exchange of the full local states of two sites.
    pub fn swap(i: usize, j: usize) -> Result<Self> {
        Self::new(vec![i.min(j), i.max(j)], crate::lattice::swap_matrix())
    }

    pub fn identity(sites: Vec<usize>) -> Result<Self> {
        let dim = D.pow(sites.len() as u32);
        let m = (0..dim * dim)
            .map(|k| if k / dim == k % dim { ONE } else { ZERO })
            .collect();
        Self::new(sites, m)
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn width(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        D.pow(self.sites.len() as u32)
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn is_contiguous(&self) -> bool {
        self.sites.windows(2).all(|w| w[1] == w[0] + 1)
    }

    fn first(&self) -> usize {
        self.sites[0]
    }

    fn last(&self) -> usize {
        *self.sites.last().expect("nonempty")
    }

    /// Largest deviation from being a Hermitian idempotent.
    pub fn projector_defect(&self) -> f64 {
        let n = self.dim();
        let m = rm(&self.matrix, n, n);
        let sq = m * m;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst
                    .max((m[(i, j)] - m[(j, i)].conj()).norm())
                    .max((sq[(i, j)] - m[(i, j)]).norm());
            }
        }
        worst
    }
}

/// Outcome of one projective measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub outcome: usize,
    /// Born probability of the realized outcome before the projection.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProductState {
    tensors: Vec<DenseTensor>,
    center: Option<usize>,
    policy: TruncationPolicy,
}

impl MatrixProductState {
    /// Wraps site tensors after checking their shapes. The orthogonality
    /// center is marked unknown.
    pub fn from_tensors(tensors: Vec<DenseTensor>, policy: TruncationPolicy) -> Result<Self> {
        if tensors.is_empty() {
            return Err(MpsError::Empty);
        }
        let n = tensors.len();
        for (site, t) in tensors.iter().enumerate() {
            let s = t.shape();
            let ok = s.len() == 3
                && s[1] == D
                && (site > 0 || s[0] == 1)
                && (site + 1 < n || s[2] == 1)
                && (site == 0 || tensors[site - 1].shape().get(2) == Some(&s[0]));
            if !ok {
                return Err(MpsError::BadTensor {
                    site,
                    shape: s.to_vec(),
                });
            }
        }
        Ok(Self {
            tensors,
            center: None,
            policy,
        })
    }

    /// Normalized product state from one (unnormalized) local vector per site.
    pub fn product_state(locals: &[[C64; 3]], policy: TruncationPolicy) -> Result<Self> {
        let tensors = locals
            .iter()
            .map(|v| {
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(MpsError::ZeroNorm);
                }
                Ok(DenseTensor::new(vec![1, D, 1], v.iter().map(|z| z / norm).collect())?)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut psi = Self::from_tensors(tensors, policy)?;
        psi.center = Some(0);
        Ok(psi)
    }

    /// Product state of computational basis states.
    pub fn basis_state(digits: &[usize], policy: TruncationPolicy) -> Result<Self> {
        let locals: Vec<[C64; 3]> = digits
            .iter()
            .map(|&d| {
                let mut v = [ZERO; 3];
                v[d] = ONE;
                v
            })
            .collect();
        Self::product_state(&locals, policy)
    }

    /// Compresses a dense `3^n` vector (site 0 most significant) into an MPS.
    pub fn from_dense(v: &[C64], n: usize, policy: TruncationPolicy) -> Result<Self> {
        if n == 0 {
            return Err(MpsError::Empty);
        }
        if v.len() != D.pow(n as u32) {
            return Err(MpsError::DenseLength { sites: n, got: v.len() });
        }
        let mut tensors = Vec::with_capacity(n);
        let mut rem = v.to_vec();
        let mut left = 1usize;
        for k in 0..n - 1 {
            let cols = rem.len() / (left * D);
            let (u, s, vh, _) = truncated_svd(rm(&rem, left * D, cols), &policy)?;
            let chi = s.len();
            tensors.push(DenseTensor::new(vec![left, D, chi], to_row_major(u.as_ref()))?);
            let mut next = to_row_major(vh.as_ref());
            for (i, row) in next.chunks_mut(cols).enumerate() {
                row.iter_mut().for_each(|z| *z *= s[i]);
            }
            rem = next;
            left = chi;
            debug_assert!(k < n);
        }
        tensors.push(DenseTensor::new(vec![left, D, 1], rem)?);
        let mut psi = Self::from_tensors(tensors, policy)?;
        psi.center = Some(n - 1);
        psi.normalize_center()?;
        Ok(psi)
    }

    /// Random normalized state with bond dimensions capped at `chi`.
    pub fn random(n: usize, chi: usize, rng: &mut impl Rng, policy: TruncationPolicy) -> Result<Self> {
        if n == 0 {
            return Err(MpsError::Empty);
        }
        let bond = |b: usize| -> usize {
            // bond b sits right of site b - 1; b = 0 and b = n are boundaries
            let l = D.saturating_pow(b as u32);
            let r = D.saturating_pow((n - b) as u32);
            l.min(r).min(chi).max(1)
        };
        let tensors = (0..n)
            .map(|k| {
                DenseTensor::from_fn(vec![bond(k), D, bond(k + 1)], |_| {
                    C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                })
            })
            .collect();
        let mut psi = Self::from_tensors(tensors, policy)?;
        psi.canonicalize(0)?;
        Ok(psi)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn tensor(&self, k: usize) -> &DenseTensor {
        &self.tensors[k]
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: TruncationPolicy) {
        self.policy = policy;
    }

    /// Bond dimensions of the `N − 1` internal bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len() - 1].iter().map(|t| t.shape()[2]).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    fn dims(&self, k: usize) -> (usize, usize) {
        let s = self.tensors[k].shape();
        (s[0], s[2])
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.len() {
            return Err(MpsError::SiteOutOfRange { site, len: self.len() });
        }
        Ok(())
    }

    /// Replaces site tensors directly; used by the variational solver, which
    /// maintains the canonical form itself.
    pub(crate) fn set_tensor(&mut self, k: usize, t: DenseTensor) {
        self.tensors[k] = t;
    }

    pub(crate) fn set_center_unchecked(&mut self, center: Option<usize>) {
        self.center = center;
    }

    fn normalize_center(&mut self) -> Result<f64> {
        let c = self.center.expect("center known");
        let norm = self.tensors[c].norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(MpsError::ZeroNorm);
        }
        self.tensors[c] = std::mem::replace(&mut self.tensors[c], DenseTensor::zeros(vec![1]))
            .scaled(C64::new(1.0 / norm, 0.0));
        Ok(norm)
    }

    /// Moves the center from `k` to `k + 1`.
    fn step_right(&mut self, k: usize) -> Result<f64> {
        let (l, r) = self.dims(k);
        let (u, s, vh, disc) = truncated_svd(self.tensors[k].as_mat(2), &self.policy)?;
        let chi = s.len();
        self.tensors[k] = DenseTensor::new(vec![l, D, chi], to_row_major(u.as_ref()))?;
        let mut sv = to_row_major(vh.as_ref());
        for (i, row) in sv.chunks_mut(r).enumerate() {
            row.iter_mut().for_each(|z| *z *= s[i]);
        }
        let (_, r2) = self.dims(k + 1);
        let mut next = vec![ZERO; chi * D * r2];
        gemm(
            rm_mut(&mut next, chi, D * r2),
            rm(&sv, chi, r),
            self.tensors[k + 1].as_mat(1),
            false,
        );
        self.tensors[k + 1] = DenseTensor::new(vec![chi, D, r2], next)?;
        self.center = Some(k + 1);
        Ok(disc)
    }

    /// Moves the center from `k` to `k − 1`.
    fn step_left(&mut self, k: usize) -> Result<f64> {
        let (l, r) = self.dims(k);
        let (u, s, vh, disc) = truncated_svd(self.tensors[k].as_mat(1), &self.policy)?;
        let chi = s.len();
        self.tensors[k] = DenseTensor::new(vec![chi, D, r], to_row_major(vh.as_ref()))?;
        let mut us = to_row_major(u.as_ref());
        for row in us.chunks_mut(chi) {
            row.iter_mut().zip(&s).for_each(|(z, x)| *z *= x);
        }
        let (l0, _) = self.dims(k - 1);
        let mut prev = vec![ZERO; l0 * D * chi];
        gemm(
            rm_mut(&mut prev, l0 * D, chi),
            self.tensors[k - 1].as_mat(2),
            rm(&us, l, chi),
            false,
        );
        self.tensors[k - 1] = DenseTensor::new(vec![l0, D, chi], prev)?;
        self.center = Some(k - 1);
        Ok(disc)
    }

    /// Brings the state into mixed canonical form around `center` and returns
    /// the discarded weight. Uses at most `N − 1` SVDs.
    pub fn canonicalize(&mut self, center: usize) -> Result<f64> {
        self.check_site(center)?;
        let mut disc = 0.0;
        match self.center {
            Some(c) if c == center => return Ok(0.0),
            Some(c) if c < center => {
                for k in c..center {
                    disc += self.step_right(k)?;
                }
            }
            Some(c) => {
                for k in (center + 1..=c).rev() {
                    disc += self.step_left(k)?;
                }
            }
            None => {
                for k in 0..center {
                    disc += self.step_right(k)?;
                }
                for k in (center + 1..self.len()).rev() {
                    disc += self.step_left(k)?;
                }
            }
        }
        self.center = Some(center);
        self.normalize_center()?;
        Ok(disc)
    }

    /// Moves the center into `[a, b]` if it is not already there.
    fn center_into(&mut self, a: usize, b: usize) -> Result<f64> {
        match self.center {
            Some(c) if (a..=b).contains(&c) => Ok(0.0),
            Some(c) if c > b => self.canonicalize(b),
            _ => self.canonicalize(a),
        }
    }

    /// Contracts sites `a..=b` into `[left, 3^w, right]`.
    fn window_theta(&self, a: usize, b: usize) -> Vec<C64> {
        let (l, _) = self.dims(a);
        let mut theta = self.tensors[a].data().to_vec();
        let mut rows = l * D;
        for k in a + 1..=b {
            let (rk, r2) = self.dims(k);
            let mut next = vec![ZERO; rows * D * r2];
            gemm(rm_mut(&mut next, rows, D * r2), rm(&theta, rows, rk), self.tensors[k].as_mat(1), false);
            theta = next;
            rows *= D;
        }
        theta
    }

    /// Splits a window tensor back into sites `a..=b`, leaving the center at `b`.
    fn split_window(&mut self, a: usize, b: usize, theta: Vec<C64>) -> Result<f64> {
        let (l, _) = self.dims(a);
        let (_, r) = self.dims(b);
        let mut disc = 0.0;
        let mut rem = theta;
        let mut left = l;
        for k in a..b {
            let cols = rem.len() / (left * D);
            let (u, s, vh, d) = truncated_svd(rm(&rem, left * D, cols), &self.policy)?;
            disc += d;
            let chi = s.len();
            self.tensors[k] = DenseTensor::new(vec![left, D, chi], to_row_major(u.as_ref()))?;
            let mut next = to_row_major(vh.as_ref());
            for (i, row) in next.chunks_mut(cols).enumerate() {
                row.iter_mut().zip(std::iter::repeat(s[i])).for_each(|(z, x)| *z *= x);
            }
            rem = next;
            left = chi;
        }
        self.tensors[b] = DenseTensor::new(vec![left, D, r], rem)?;
        self.center = Some(b);
        Ok(disc)
    }

    fn apply_contiguous(&mut self, a: usize, matrix: &[C64]) -> Result<f64> {
        let w = (matrix.len() as f64).sqrt().round() as usize;
        let width = (w as f64).log(3.0).round() as usize;
        let b = a + width - 1;
        let mut disc = self.center_into(a, b)?;
        let theta = self.window_theta(a, b);
        let (l, _) = self.dims(a);
        let (_, r) = self.dims(b);
        let mut out = vec![ZERO; theta.len()];
        let op = rm(matrix, w, w);
        for li in 0..l {
            let block = li * w * r..(li + 1) * w * r;
            gemm(rm_mut(&mut out[block.clone()], w, r), op, rm(&theta[block], w, r), false);
        }
        if width == 1 {
            self.tensors[a] = DenseTensor::new(vec![l, D, r], out)?;
            self.center = Some(a);
        } else {
            disc += self.split_window(a, b, out)?;
        }
        self.normalize_center()?;
        Ok(disc)
    }

    /// Applies `op ⊗ 1`, truncates per policy and renormalizes. Returns the
    /// discarded weight. Non-adjacent sites are gathered with swap gates and
    /// returned afterwards.
    pub fn apply_local(&mut self, op: &LocalOperator) -> Result<f64> {
        self.check_site(op.last())?;
        if op.is_contiguous() {
            return self.apply_contiguous(op.first(), &op.matrix);
        }
        let swap = crate::lattice::swap_matrix();
        let s = &op.sites;
        let mut swaps = Vec::new();
        for i in 1..s.len() {
            for p in (s[0] + i..s[i]).rev() {
                swaps.push(p);
            }
        }
        let mut disc = 0.0;
        for &p in &swaps {
            disc += self.apply_contiguous(p, &swap)?;
        }
        disc += self.apply_contiguous(s[0], &op.matrix)?;
        for &p in swaps.iter().rev() {
            disc += self.apply_contiguous(p, &swap)?;
        }
        Ok(disc)
    }

    /// Exchanges the full local states of chain-adjacent sites `p` and `p + 1`.
    pub fn apply_swap(&mut self, p: usize) -> Result<f64> {
        self.check_site(p + 1)?;
        self.apply_contiguous(p, &crate::lattice::swap_matrix())
    }

    /// Region whose outside is isometric: the span of `[a, b]` and the center.
    fn region(&self, a: usize, b: usize) -> (usize, usize) {
        match self.center {
            Some(c) => (a.min(c), b.max(c)),
            None => (0, self.len() - 1),
        }
    }

    /// `⟨ψ|op|ψ⟩`.
    pub fn expectation(&self, op: &LocalOperator) -> Result<C64> {
        self.check_site(op.last())?;
        if op.is_contiguous() {
            return Ok(self.window_expectation(op.first(), op.last(), &op.matrix));
        }
        // Expand into products of single-site matrix units.
        let w = op.width();
        let dim = op.dim();
        let mut total = ZERO;
        for (k, &m) in op.matrix.iter().enumerate() {
            if m == ZERO {
                continue;
            }
            let (row, col) = (k / dim, k % dim);
            let factors: Vec<(usize, Op3)> = (0..w)
                .map(|i| {
                    let shift = D.pow((w - 1 - i) as u32);
                    let mut unit = [[ZERO; 3]; 3];
                    unit[(row / shift) % D][(col / shift) % D] = ONE;
                    (op.sites[i], unit)
                })
                .collect();
            total += m * self.product_expectation(&factors)?;
        }
        Ok(total)
    }

    /// `⟨ψ|Π_k O_k|ψ⟩` for single-site factors at distinct sites.
    pub fn product_expectation(&self, factors: &[(usize, Op3)]) -> Result<C64> {
        if factors.is_empty() {
            return Ok(ONE);
        }
        for f in factors {
            self.check_site(f.0)?;
        }
        let a = factors.iter().map(|f| f.0).min().expect("nonempty");
        let b = factors.iter().map(|f| f.0).max().expect("nonempty");
        let (lo, hi) = self.region(a, b);
        let (l, _) = self.dims(lo);
        let mut env = Mat::<C64>::identity(l, l);
        for k in lo..=hi {
            let op = factors.iter().find(|f| f.0 == k).map(|f| &f.1);
            env = transfer_left(env.as_ref(), &self.tensors[k], &self.tensors[k], op);
        }
        Ok((0..env.nrows()).map(|i| env[(i, i)]).sum())
    }

    fn window_expectation(&self, a: usize, b: usize, matrix: &[C64]) -> C64 {
        let (lo, hi) = self.region(a, b);
        let (la, _) = self.dims(a);
        let (_, rb) = self.dims(b);
        let (l0, _) = self.dims(lo);
        let mut left = Mat::<C64>::identity(l0, l0);
        for k in lo..a {
            left = transfer_left(left.as_ref(), &self.tensors[k], &self.tensors[k], None);
        }
        let (_, rh) = self.dims(hi);
        let mut right = Mat::<C64>::identity(rh, rh);
        for k in (b + 1..=hi).rev() {
            right = transfer_right(right.as_ref(), &self.tensors[k], &self.tensors[k], None);
        }
        let theta = self.window_theta(a, b);
        let w = matrix.len().isqrt();
        // X = L · θ over the left bond, then the operator, then R over the right bond.
        let mut x = vec![ZERO; theta.len()];
        gemm(rm_mut(&mut x, la, w * rb), left.as_ref(), rm(&theta, la, w * rb), false);
        let mut y = vec![ZERO; theta.len()];
        let op = rm(matrix, w, w);
        for li in 0..la {
            let block = li * w * rb..(li + 1) * w * rb;
            gemm(rm_mut(&mut y[block.clone()], w, rb), op, rm(&x[block], w, rb), false);
        }
        let mut z = vec![ZERO; theta.len()];
        gemm(rm_mut(&mut z, la * w, rb), rm(&y, la * w, rb), right.transpose(), false);
        theta.iter().zip(&z).map(|(t, v)| t.conj() * v).sum()
    }

    /// Schmidt values across `bond` (between sites `bond` and `bond + 1`).
    pub fn schmidt_values(&mut self, bond: usize) -> Result<Vec<f64>> {
        if bond + 1 >= self.len() {
            return Err(MpsError::BondOutOfRange { bond, len: self.len() });
        }
        self.canonicalize(bond)?;
        let exact = TruncationPolicy::exact();
        let (_, s, _, _) = truncated_svd(self.tensors[bond].as_mat(2), &exact)?;
        Ok(s)
    }

    /// Von Neumann entropy (natural log) across `bond`.
    pub fn bond_entropy(&self, bond: usize) -> Result<f64> {
        let mut psi = self.clone();
        let s = psi.schmidt_values(bond)?;
        Ok(crate::tensor::von_neumann(s.iter().map(|x| x * x)))
    }

    /// `⟨φ|ψ⟩`.
    pub fn overlap(&self, other: &Self) -> C64 {
        assert_eq!(self.len(), other.len());
        let mut env = Mat::<C64>::identity(1, 1);
        for (bra, ket) in self.tensors.iter().zip(&other.tensors) {
            env = transfer_left(env.as_ref(), bra, ket, None);
        }
        env[(0, 0)]
    }

    pub fn norm(&self) -> f64 {
        self.overlap(self).re.max(0.0).sqrt()
    }

    /// `⟨N̂⟩` and `⟨N̂²⟩ − ⟨N̂⟩²` over occupied sites.
    pub fn number_moments(&self) -> (f64, f64) {
        let n_op = crate::lattice::n_occ();
        let mut e0 = Mat::<C64>::identity(1, 1);
        let mut e1 = Mat::<C64>::zeros(1, 1);
        let mut e2 = Mat::<C64>::zeros(1, 1);
        for t in &self.tensors {
            let id0 = transfer_left(e0.as_ref(), t, t, None);
            let n0 = transfer_left(e0.as_ref(), t, t, Some(&n_op));
            let id1 = transfer_left(e1.as_ref(), t, t, None);
            let n1 = transfer_left(e1.as_ref(), t, t, Some(&n_op));
            let id2 = transfer_left(e2.as_ref(), t, t, None);
            e2 = &id2 + &n1 + &n1 + &n0;
            e1 = &id1 + &n0;
            e0 = id0;
        }
        let norm = e0[(0, 0)].re;
        let mean = e1[(0, 0)].re / norm;
        let second = e2[(0, 0)].re / norm;
        (mean, (second - mean * mean).max(0.0))
    }

    /// Single-site reduced density matrix `ρ[σ][σ']` at the center.
    fn site_density(&self, k: usize) -> Op3 {
        debug_assert_eq!(self.center, Some(k));
        let (l, r) = self.dims(k);
        let a = self.tensors[k].data();
        let mut rho = [[ZERO; 3]; 3];
        for li in 0..l {
            for s in 0..D {
                let row_s = &a[(li * D + s) * r..(li * D + s + 1) * r];
                for t in 0..D {
                    let row_t = &a[(li * D + t) * r..(li * D + t + 1) * r];
                    rho[s][t] += row_s.iter().zip(row_t).map(|(x, y)| x * y.conj()).sum::<C64>();
                }
            }
        }
        rho
    }

    /// Born probabilities of single-site projectors at site `k`; moves the
    /// center there.
    pub fn site_probabilities(&mut self, k: usize, projectors: &[Op3]) -> Result<Vec<f64>> {
        self.check_site(k)?;
        self.canonicalize(k)?;
        let rho = self.site_density(k);
        Ok(projectors
            .iter()
            .map(|p| {
                let mut acc = ZERO;
                for s in 0..D {
                    for t in 0..D {
                        acc += p[s][t] * rho[t][s];
                    }
                }
                acc.re.max(0.0)
            })
            .collect())
    }

    /// Projects site `k` (the current center) with `p` and renormalizes.
    fn project_site(&mut self, k: usize, p: &Op3) -> Result<()> {
        self.canonicalize(k)?;
        let (l, r) = self.dims(k);
        let mut out = vec![ZERO; l * D * r];
        let a = self.tensors[k].data();
        for li in 0..l {
            for s in 0..D {
                for t in 0..D {
                    let c = p[s][t];
                    if c == ZERO {
                        continue;
                    }
                    for ri in 0..r {
                        out[(li * D + s) * r + ri] += c * a[(li * D + t) * r + ri];
                    }
                }
            }
        }
        self.tensors[k] = DenseTensor::new(vec![l, D, r], out)?;
        self.normalize_center()?;
        Ok(())
    }

    /// Measures a complete set of single-site projectors at site `k`.
    pub fn measure_site(&mut self, k: usize, projectors: &[Op3], rng: &mut impl Rng) -> Result<Measurement> {
        let probs = self.site_probabilities(k, projectors)?;
        let outcome = sample(&probs, rng)?;
        self.project_site(k, &projectors[outcome])?;
        Ok(Measurement {
            outcome,
            probability: probs[outcome],
        })
    }

    /// Samples an outcome of a complete projector set with the Born rule and
    /// collapses the state onto it.
    pub fn measure_projective(&mut self, projectors: &[LocalOperator], rng: &mut impl Rng) -> Result<Measurement> {
        let probs = self.projector_probabilities(projectors)?;
        let outcome = sample(&probs, rng)?;
        self.apply_local(&projectors[outcome])?;
        Ok(Measurement {
            outcome,
            probability: probs[outcome],
        })
    }

    /// Collapses onto a chosen outcome; rejected if it has zero probability.
    pub fn project(&mut self, projectors: &[LocalOperator], outcome: usize) -> Result<f64> {
        let probs = self.projector_probabilities(projectors)?;
        let p = probs[outcome];
        if p <= 1e-14 {
            return Err(MpsError::ZeroProbability { outcome, probability: p });
        }
        self.apply_local(&projectors[outcome])?;
        Ok(p)
    }

    fn projector_probabilities(&mut self, projectors: &[LocalOperator]) -> Result<Vec<f64>> {
        let first = projectors.first().ok_or(MpsError::IncompleteSet(1.0))?;
        if projectors.iter().any(|p| p.sites != first.sites) {
            return Err(MpsError::MixedWindows);
        }
        for (index, p) in projectors.iter().enumerate() {
            let defect = p.projector_defect();
            if defect > 1e-9 {
                return Err(MpsError::NotProjector { index, defect });
            }
        }
        let dim = first.dim();
        let mut sum = vec![ZERO; dim * dim];
        for p in projectors {
            sum.iter_mut().zip(&p.matrix).for_each(|(s, x)| *s += x);
        }
        let defect = (0..dim * dim)
            .map(|k| (sum[k] - if k / dim == k % dim { ONE } else { ZERO }).norm())
            .fold(0.0, f64::max);
        if defect > 1e-9 {
            return Err(MpsError::IncompleteSet(defect));
        }
        if first.is_contiguous() {
            self.center_into(first.first(), first.last())?;
        }
        projectors
            .iter()
            .map(|p| Ok(self.expectation(p)?.re.max(0.0)))
            .collect()
    }

    /// Full state vector, site 0 most significant.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut v = self.window_theta(0, self.len() - 1);
        v.truncate(D.pow(self.len() as u32));
        v
    }

    /// Projects every listed site onto a basis state and removes it from the
    /// chain. Returns the norm of the projected state, which is 1 when the
    /// sites were already in those states.
    pub fn remove_sites(&self, sites: &[(usize, usize)]) -> Result<(Self, f64)> {
        let n = self.len();
        let mut fixed = vec![None; n];
        for &(s, d) in sites {
            self.check_site(s)?;
            fixed[s] = Some(d);
        }
        if fixed.iter().all(Option::is_some) {
            return Err(MpsError::Empty);
        }
        let mut out: Vec<DenseTensor> = Vec::new();
        // Pending matrix from removed sites to absorb into the next kept site.
        let mut carry: Option<Vec<C64>> = None;
        let mut carry_dims = (0, 0);
        for k in 0..n {
            let (l, r) = self.dims(k);
            match fixed[k] {
                Some(d) => {
                    let slice: Vec<C64> = (0..l)
                        .flat_map(|li| {
                            let a = self.tensors[k].data();
                            a[(li * D + d) * r..(li * D + d + 1) * r].to_vec()
                        })
                        .collect();
                    let (m, dims) = match carry.take() {
                        Some(c) => {
                            let mut m = vec![ZERO; carry_dims.0 * r];
                            gemm(rm_mut(&mut m, carry_dims.0, r), rm(&c, carry_dims.0, l), rm(&slice, l, r), false);
                            (m, (carry_dims.0, r))
                        }
                        None => (slice, (l, r)),
                    };
                    carry = Some(m);
                    carry_dims = dims;
                }
                None => {
                    let t = match carry.take() {
                        Some(c) => {
                            let rows = carry_dims.0;
                            let mut m = vec![ZERO; rows * D * r];
                            gemm(rm_mut(&mut m, rows, D * r), rm(&c, rows, l), self.tensors[k].as_mat(1), false);
                            DenseTensor::new(vec![rows, D, r], m)?
                        }
                        None => self.tensors[k].clone(),
                    };
                    out.push(t);
                }
            }
        }
        if let Some(c) = carry {
            // Trailing removed sites: absorb into the last kept tensor.
            let last = out.pop().expect("one site kept");
            let s = last.shape().to_vec();
            let mut m = vec![ZERO; s[0] * D * carry_dims.1];
            gemm(
                rm_mut(&mut m, s[0] * D, carry_dims.1),
                last.as_mat(2),
                rm(&c, carry_dims.0, carry_dims.1),
                false,
            );
            out.push(DenseTensor::new(vec![s[0], D, carry_dims.1], m)?);
        }
        let mut psi = Self::from_tensors(out, self.policy)?;
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(MpsError::ZeroNorm);
        }
        psi.canonicalize(0)?;
        Ok((psi, norm))
    }
}

/// Draws an index from unnormalized non-negative weights.
pub(crate) fn sample(probs: &[f64], rng: &mut impl Rng) -> Result<usize> {
    let total: f64 = probs.iter().sum();
    if total < 1.0 - 1e-6 {
        return Err(MpsError::ProbabilityDeficit(total));
    }
    let x = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return Ok(i);
        }
    }
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// `E'[r', r] = Σ conj(B[l',σ',r']) E[l',l] O[σ',σ] A[l,σ,r]`.
pub(crate) fn transfer_left(env: faer::MatRef<'_, C64>, bra: &DenseTensor, ket: &DenseTensor, op: Option<&Op3>) -> Mat<C64> {
    let (l, r) = (ket.shape()[0], ket.shape()[2]);
    let (lb, rb) = (bra.shape()[0], bra.shape()[2]);
    let mut t = vec![ZERO; lb * D * r];
    gemm(rm_mut(&mut t, lb, D * r), env, rm(ket.data(), l, D * r), false);
    if let Some(o) = op {
        apply_physical(&mut t, lb, r, o);
    }
    let mut out = Mat::<C64>::zeros(rb, r);
    gemm(out.as_mut(), rm(bra.data(), lb * D, rb).adjoint(), rm(&t, lb * D, r), false);
    out
}

/// `F'[l', l] = Σ conj(B[l',σ',r']) O[σ',σ] A[l,σ,r] F[r', r]`.
pub(crate) fn transfer_right(env: faer::MatRef<'_, C64>, bra: &DenseTensor, ket: &DenseTensor, op: Option<&Op3>) -> Mat<C64> {
    let (l, r) = (ket.shape()[0], ket.shape()[2]);
    let (lb, rb) = (bra.shape()[0], bra.shape()[2]);
    let mut t = vec![ZERO; l * D * rb];
    gemm(rm_mut(&mut t, l * D, rb), rm(ket.data(), l * D, r), env.transpose(), false);
    if let Some(o) = op {
        apply_physical(&mut t, l, rb, o);
    }
    let mut out = Mat::<C64>::zeros(lb, l);
    gemm(out.as_mut(), rm(bra.data(), lb, D * rb).conjugate(), rm(&t, l, D * rb).transpose(), false);
    out
}

/// In-place `x[a, σ, b] ← Σ_τ O[σ][τ] x[a, τ, b]`.
fn apply_physical(x: &mut [C64], a: usize, b: usize, op: &Op3) {
    for ai in 0..a {
        for bi in 0..b {
            let v = [x[(ai * D) * b + bi], x[(ai * D + 1) * b + bi], x[(ai * D + 2) * b + bi]];
            for s in 0..D {
                x[(ai * D + s) * b + bi] = op[s][0] * v[0] + op[s][1] * v[1] + op[s][2] * v[2];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{n_occ, sigma_x, sigma_z, vacancy, DOWN, UP, VACANT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact() -> TruncationPolicy {
        TruncationPolicy::exact()
    }

    #[test]
    fn product_state_is_canonical_everywhere() {
        let mut psi = MatrixProductState::basis_state(&[UP, VACANT, DOWN, UP], exact()).unwrap();
        let before = psi.clone();
        for c in [3, 0, 2] {
            let disc = psi.canonicalize(c).unwrap();
            assert!(disc < 1e-30);
            assert!((psi.overlap(&before).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_center_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut psi = MatrixProductState::random(6, 4, &mut rng, TruncationPolicy::default()).unwrap();
        psi.canonicalize(3).unwrap();
        let copy = psi.clone();
        assert_eq!(psi.canonicalize(3).unwrap(), 0.0);
        assert_eq!(psi, copy);
    }

    #[test]
    fn sigma_x_flips_down_to_up() {
        let mut psi = MatrixProductState::basis_state(&[DOWN, VACANT], exact()).unwrap();
        psi.apply_local(&LocalOperator::single(0, &sigma_x())).unwrap();
        let up = MatrixProductState::basis_state(&[UP, VACANT], exact()).unwrap();
        assert!((psi.overlap(&up).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_expectations_on_product_states() {
        let psi = MatrixProductState::basis_state(&[VACANT, UP, DOWN], exact()).unwrap();
        let occ = psi.expectation(&LocalOperator::single(0, &n_occ())).unwrap();
        assert!(occ.norm() < 1e-15);
        let z = psi.expectation(&LocalOperator::single(1, &sigma_z())).unwrap();
        assert!((z - ONE).norm() < 1e-15);
        let vac = psi.expectation(&LocalOperator::single(2, &vacancy())).unwrap();
        assert!(vac.norm() < 1e-15);
    }

    #[test]
    fn bell_pair_entropy() {
        let mut v = vec![ZERO; 9];
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[UP * 3 + VACANT] = h;
        v[VACANT * 3 + UP] = h;
        let psi = MatrixProductState::from_dense(&v, 2, exact()).unwrap();
        assert!((psi.bond_entropy(0).unwrap() - 2f64.ln()).abs() < 1e-12);
        let prod = MatrixProductState::basis_state(&[UP, VACANT, DOWN], exact()).unwrap();
        assert!(prod.bond_entropy(1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn occupation_measurement_on_an_eigenstate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut psi = MatrixProductState::basis_state(&[UP, VACANT], exact()).unwrap();
        let before = psi.clone();
        let set = [LocalOperator::single(0, &n_occ()), LocalOperator::single(0, &vacancy())];
        let m = psi.measure_projective(&set, &mut rng).unwrap();
        assert_eq!(m.outcome, 0);
        assert!((m.probability - 1.0).abs() < 1e-12);
        assert!((psi.overlap(&before).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_sets_and_forced_outcomes_are_rejected() {
        let mut psi = MatrixProductState::basis_state(&[UP, VACANT], exact()).unwrap();
        let only = [LocalOperator::single(0, &n_occ())];
        assert!(matches!(psi.clone().project(&only, 0), Err(MpsError::IncompleteSet(_))));
        let set = [LocalOperator::single(0, &n_occ()), LocalOperator::single(0, &vacancy())];
        assert!(matches!(psi.project(&set, 1), Err(MpsError::ZeroProbability { outcome: 1, .. })));
    }

    #[test]
    fn window_must_fit_the_chain() {
        let mut psi = MatrixProductState::basis_state(&[UP, VACANT], exact()).unwrap();
        assert!(matches!(psi.apply_swap(1), Err(MpsError::SiteOutOfRange { .. })));
        assert!(LocalOperator::new(vec![1, 0], vec![ZERO; 81]).is_err());
    }
}
