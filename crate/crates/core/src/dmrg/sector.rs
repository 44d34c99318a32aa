//! Particle-number labels on MPS bonds.
//!
//! Every bond index carries the number of particles to its left. Indices are
//! kept sorted by that number, so a charge occupies one contiguous range and
//! tensors become block sparse with dense blocks addressable as submatrices.

use faer::{Mat, MatRef};

use crate::lattice::VACANT;
use crate::mps::MatrixProductState;
use crate::tensor::{gemm, rm, thin_svd, to_row_major, DenseTensor, TensorError, TruncationPolicy, C64, ZERO};

use super::{DmrgError, D};

/// Particle number of a local basis state.
pub(crate) fn occ(s: usize) -> i64 {
    i64::from(s != VACANT)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Charges {
    q: Vec<i64>,
    /// `(charge, start, len)` in ascending charge order.
    blocks: Vec<(i64, usize, usize)>,
}

impl Charges {
    pub(crate) fn new(q: Vec<i64>) -> Self {
        debug_assert!(q.windows(2).all(|w| w[0] <= w[1]), "charges must be sorted");
        let mut blocks: Vec<(i64, usize, usize)> = Vec::new();
        for (i, &c) in q.iter().enumerate() {
            match blocks.last_mut() {
                Some(b) if b.0 == c => b.2 += 1,
                _ => blocks.push((c, i, 1)),
            }
        }
        Self { q, blocks }
    }

    pub(crate) fn dim(&self) -> usize {
        self.q.len()
    }

    pub(crate) fn blocks(&self) -> &[(i64, usize, usize)] {
        &self.blocks
    }

    /// `(start, len)` of charge `c`, if present.
    pub(crate) fn find(&self, c: i64) -> Option<(usize, usize)> {
        self.blocks
            .binary_search_by_key(&c, |b| b.0)
            .ok()
            .map(|i| (self.blocks[i].1, self.blocks[i].2))
    }
}

pub(crate) struct BlockSvd {
    /// `rows × k`
    pub u: Mat<C64>,
    pub s: Vec<f64>,
    /// `k × cols`
    pub vh: Mat<C64>,
    /// Charge of every kept singular vector, ascending.
    pub charges: Vec<i64>,
    pub discarded: f64,
}

/// SVD of a matrix that is block diagonal once rows and columns are grouped
/// by charge; entries coupling different charges are ignored. Truncation is
/// global over all blocks. Rows with charge `None` are dropped; without column
/// charges every block spans all columns.
pub(crate) fn block_svd(
    m: MatRef<'_, C64>,
    row_q: &[Option<i64>],
    col_q: Option<&[i64]>,
    policy: &TruncationPolicy,
) -> Result<BlockSvd, TensorError> {
    let mut charges: Vec<i64> = row_q.iter().flatten().copied().collect();
    charges.sort_unstable();
    charges.dedup();
    // (s, charge, block index, column within block)
    let mut triplets: Vec<(f64, i64, usize, usize)> = Vec::new();
    let mut factors: Vec<(Vec<usize>, Vec<usize>, Mat<C64>, Mat<C64>)> = Vec::new();
    for &c in &charges {
        let rows: Vec<usize> = (0..row_q.len()).filter(|&i| row_q[i] == Some(c)).collect();
        let cols: Vec<usize> = match col_q {
            Some(q) => (0..q.len()).filter(|&j| q[j] == c).collect(),
            None => (0..m.ncols()).collect(),
        };
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let block = Mat::<C64>::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]);
        let (u, s, v) = thin_svd(block.as_ref())?;
        let b = factors.len();
        triplets.extend(s.iter().enumerate().map(|(j, &x)| (x, c, b, j)));
        factors.push((rows, cols, u, v));
    }
    triplets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if triplets.is_empty() || triplets[0].0 == 0.0 {
        return Err(TensorError::NonFinite);
    }
    let values: Vec<f64> = triplets.iter().map(|t| t.0).collect();
    let keep = policy.keep_count(&values);
    let discarded: f64 = values[keep..].iter().map(|x| x * x).sum();
    let mut kept = triplets[..keep].to_vec();
    kept.sort_by(|a, b| a.1.cmp(&b.1).then(b.0.total_cmp(&a.0)));
    let norm = kept.iter().map(|t| t.0 * t.0).sum::<f64>().sqrt();
    let scale = if policy.renormalize { 1.0 / norm } else { 1.0 };
    let mut u = Mat::<C64>::zeros(m.nrows(), keep);
    let mut vh = Mat::<C64>::zeros(keep, m.ncols());
    for (k, &(_, _, b, j)) in kept.iter().enumerate() {
        let (rows, cols, bu, bv) = &factors[b];
        for (i, &r) in rows.iter().enumerate() {
            u[(r, k)] = bu[(i, j)];
        }
        for (i, &c) in cols.iter().enumerate() {
            vh[(k, c)] = bv[(i, j)].conj();
        }
    }
    Ok(BlockSvd {
        u,
        s: kept.iter().map(|t| t.0 * scale).collect(),
        vh,
        charges: kept.iter().map(|t| t.1).collect(),
        discarded,
    })
}

/// Row charges of a site tensor viewed as `(l·D) × r`.
pub(crate) fn fused_left(left: &Charges) -> Vec<i64> {
    left.q.iter().flat_map(|&q| (0..D).map(move |s| q + occ(s))).collect()
}

/// Column charges of a site tensor viewed as `l × (D·r)`, expressed on the
/// left bond.
pub(crate) fn fused_right(right: &Charges) -> Vec<i64> {
    (0..D).flat_map(|s| right.q.iter().map(move |&q| q - occ(s))).collect()
}

/// Projects `psi` onto total particle number `target` and returns it
/// normalized, in charge-labelled form with the orthogonality center on site 0.
pub(crate) fn sectorize(psi: &MatrixProductState, target: i64) -> Result<(MatrixProductState, Vec<Charges>), DmrgError> {
    let n = psi.len() as i64;
    // drop only numerically vanishing Schmidt weight
    let keep_nonzero = TruncationPolicy::exact().with_cutoff(1e-26).with_renormalize(false);
    let mut charges = vec![Charges::new(vec![0])];
    let mut tensors: Vec<DenseTensor> = Vec::with_capacity(psi.len());
    // carry: rows labelled by the current bond, columns = old bond of site k
    let mut carry = Mat::<C64>::identity(1, 1);
    for k in 0..psi.len() {
        let a = psi.tensor(k);
        let (r_old, l) = (a.shape()[2], carry.nrows());
        let mut t = vec![ZERO; l * D * r_old];
        gemm(crate::tensor::rm_mut(&mut t, l, D * r_old), carry.as_ref(), a.as_mat(1), false);
        let lo = (target - (n - 1 - k as i64)).max(0);
        let hi = target.min(k as i64 + 1);
        let rows: Vec<Option<i64>> = fused_left(&charges[k]).into_iter().map(|q| (lo..=hi).contains(&q).then_some(q)).collect();
        let svd = block_svd(rm(&t, l * D, r_old), &rows, None, &keep_nonzero).map_err(|_| DmrgError::NoSectorWeight)?;
        let kdim = svd.s.len();
        tensors.push(DenseTensor::new(vec![l, D, kdim], to_row_major(svd.u.as_ref()))?);
        charges.push(Charges::new(svd.charges.clone()));
        carry = Mat::from_fn(kdim, r_old, |i, j| svd.vh[(i, j)] * svd.s[i]);
    }
    if charges[psi.len()].q != [target] {
        return Err(DmrgError::NoSectorWeight);
    }
    // fold the remaining norm away and sweep the center back to site 0
    let mut out = MatrixProductState::from_tensors(tensors, TruncationPolicy::exact())?;
    for k in (1..psi.len()).rev() {
        let b = out.tensor(k);
        let (l, r) = (b.shape()[0], b.shape()[2]);
        let rows: Vec<Option<i64>> = charges[k].q.iter().map(|&q| Some(q)).collect();
        let cols = fused_right(&charges[k + 1]);
        let svd = block_svd(b.as_mat(1), &rows, Some(&cols), &keep_nonzero)?;
        let kdim = svd.s.len();
        let us = Mat::<C64>::from_fn(l, kdim, |i, j| svd.u[(i, j)] * svd.s[j]);
        let a = out.tensor(k - 1);
        let la = a.shape()[0];
        let mut merged = vec![ZERO; la * D * kdim];
        gemm(crate::tensor::rm_mut(&mut merged, la * D, kdim), a.as_mat(2), us.as_ref(), false);
        out.set_tensor(k, DenseTensor::new(vec![kdim, D, r], to_row_major(svd.vh.as_ref()))?);
        out.set_tensor(k - 1, DenseTensor::new(vec![la, D, kdim], merged)?);
        charges[k] = Charges::new(svd.charges);
    }
    let norm = out.tensor(0).norm();
    if !(norm > 0.0) {
        return Err(DmrgError::NoSectorWeight);
    }
    let t0 = out.tensor(0).clone().scaled(C64::new(1.0 / norm, 0.0));
    out.set_tensor(0, t0);
    out.set_center_unchecked(Some(0));
    Ok((out, charges))
}
