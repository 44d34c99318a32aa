//! Entanglement entropy of one ladder leg and the extrapolated topological
//! term `γ` from `S = αL − γ`.
//!
//! The reduced density matrix of a full leg is dense in `3^W` dimensions, so
//! every entry point checks a memory estimate before allocating.

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LadderLattice, LOCAL_DIM};
use crate::mps::MatrixProductState;
use crate::tensor::{eigh_mat, gemm, hermitian_defect, rm, von_neumann, TensorError, C64, ZERO};

pub const CSV_HEADER: [&str; 7] = ["t", "N", "L", "S", "alpha", "gamma", "residual"];

/// Hard limit on the cut length.
pub const MAX_CUT: usize = 16;
/// Default allowance for the dense state, its leg-ordered copy and `ρ`.
pub const DEFAULT_MEMORY_BUDGET: usize = 3 << 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeeError {
    #[error("cut length {length} exceeds the limit of {max}")]
    CutTooLong { length: usize, max: usize },
    #[error("leg density matrix needs about {needed} bytes, budget is {budget}")]
    OverBudget { needed: usize, budget: usize },
    #[error("state has {state} sites, lattice has {lattice}")]
    SizeMismatch { state: usize, lattice: usize },
    #[error("need at least 3 distinct cut lengths, got {0}")]
    TooFewPoints(usize),
    #[error("density matrix check failed: {0}")]
    BadDensityMatrix(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Bytes used by [`leg_reduced_density_matrix`] on `n` sites.
pub fn memory_estimate(n: usize) -> usize {
    let full = LOCAL_DIM.saturating_pow(n as u32);
    full.saturating_mul(3 * std::mem::size_of::<C64>())
}

/// `ρ_top = Tr_bottom |ψ⟩⟨ψ|`, rows and columns indexed by the top-leg sites
/// from left to right, first column most significant.
pub fn leg_reduced_density_matrix(psi: &MatrixProductState, lat: &LadderLattice) -> Result<Mat<C64>, TeeError> {
    leg_rdm_with_budget(psi, lat, DEFAULT_MEMORY_BUDGET)
}

pub fn leg_rdm_with_budget(psi: &MatrixProductState, lat: &LadderLattice, budget: usize) -> Result<Mat<C64>, TeeError> {
    let n = lat.len();
    if psi.len() != n {
        return Err(TeeError::SizeMismatch { state: psi.len(), lattice: n });
    }
    let w = lat.columns();
    if w > MAX_CUT {
        return Err(TeeError::CutTooLong { length: w, max: MAX_CUT });
    }
    let needed = memory_estimate(n);
    if needed > budget {
        return Err(TeeError::OverBudget { needed, budget });
    }
    let v = psi.to_dense();
    let dim = LOCAL_DIM.pow(w as u32);
    // place value of each chain position inside the top or bottom index
    let top = lat.top_leg();
    let mut place = vec![(false, 0usize); n];
    for (c, &p) in top.iter().enumerate() {
        place[p] = (true, LOCAL_DIM.pow((w - 1 - c) as u32));
    }
    let bottom: Vec<usize> = (0..w).map(|c| lat.position(1, c)).collect();
    for (c, &p) in bottom.iter().enumerate() {
        place[p] = (false, LOCAL_DIM.pow((w - 1 - c) as u32));
    }
    let mut psi_tb = vec![ZERO; dim * dim];
    for (i, &amp) in v.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let (mut t, mut b) = (0, 0);
        let mut rest = i;
        for k in (0..n).rev() {
            let d = rest % LOCAL_DIM;
            rest /= LOCAL_DIM;
            match place[k] {
                (true, x) => t += d * x,
                (false, x) => b += d * x,
            }
        }
        psi_tb[t * dim + b] = amp;
    }
    drop(v);
    let m = rm(&psi_tb, dim, dim);
    let mut rho = Mat::<C64>::zeros(dim, dim);
    gemm(rho.as_mut(), m, m.adjoint(), false);
    Ok(rho)
}

/// Cut length `L = W` and the von Neumann entropy (natural log) of the top leg.
pub fn leg_entropy(psi: &MatrixProductState, lat: &LadderLattice) -> Result<(usize, f64), TeeError> {
    let rho = leg_reduced_density_matrix(psi, lat)?;
    Ok((lat.columns(), entropy_of(&rho)?))
}

/// Entropy of a density matrix after the trace, Hermiticity and positivity checks.
pub fn entropy_of(rho: &Mat<C64>) -> Result<f64, TeeError> {
    let herm = hermitian_defect(rho.as_ref());
    if herm > 1e-10 {
        return Err(TeeError::BadDensityMatrix(format!("Hermiticity defect {herm:e}")));
    }
    let trace: f64 = (0..rho.nrows()).map(|i| rho[(i, i)].re).sum();
    if (trace - 1.0).abs() > 1e-9 {
        return Err(TeeError::BadDensityMatrix(format!("trace {trace}")));
    }
    let (vals, _) = eigh_mat(rho.as_ref())?;
    if let Some(&low) = vals.iter().min_by(|a, b| a.total_cmp(b)) {
        if low < -1e-10 {
            return Err(TeeError::BadDensityMatrix(format!("eigenvalue {low:e}")));
        }
    }
    Ok(von_neumann(vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub n: usize,
    pub l: usize,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeeFit {
    pub alpha: f64,
    pub gamma: f64,
    /// Root-mean-square deviation of the points from the fitted line.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub t: f64,
    pub points: Vec<EntropyPoint>,
    pub fit: Option<TeeFit>,
}

/// Ordinary least squares of `S` on `L`; `γ` is minus the intercept.
pub fn extract_tee(points: &[EntropyPoint]) -> Result<TeeFit, TeeError> {
    let mut ls: Vec<usize> = points.iter().map(|p| p.l).collect();
    ls.sort_unstable();
    ls.dedup();
    if ls.len() < 3 {
        return Err(TeeError::TooFewPoints(ls.len()));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.l as f64).sum::<f64>() / k;
    let my = points.iter().map(|p| p.s).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.l as f64 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.l as f64 - mx) * (p.s - my)).sum();
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    let ssr: f64 = points.iter().map(|p| (p.s - intercept - alpha * p.l as f64).powi(2)).sum();
    Ok(TeeFit {
        alpha,
        gamma: -intercept,
        residual: (ssr / k).sqrt(),
    })
}

impl EntropyCurve {
    pub fn new(t: f64, points: Vec<EntropyPoint>) -> Self {
        let fit = extract_tee(&points).ok();
        Self { t, points, fit }
    }

    /// Header plus one row per point.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        self.write_rows(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Rows `t, N, L, S, alpha, gamma, residual`; the fit columns are empty
    /// when there is no fit.
    pub fn write_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> csv::Result<()> {
        let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for p in &self.points {
            w.write_record([
                self.t.to_string(),
                p.n.to_string(),
                p.l.to_string(),
                p.s.to_string(),
                f(self.fit.map(|x| x.alpha)),
                f(self.fit.map(|x| x.gamma)),
                f(self.fit.map(|x| x.residual)),
            ])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_gives_log_two() {
        let pts: Vec<EntropyPoint> = (4..8)
            .map(|l| EntropyPoint {
                n: 2 * l,
                l,
                s: 0.7 * l as f64 - 2f64.ln(),
            })
            .collect();
        let fit = extract_tee(&pts).unwrap();
        assert!((fit.gamma - 2f64.ln()).abs() < 1e-12);
        assert!((fit.alpha - 0.7).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn inverse_length_term_leaks_into_gamma() {
        let pts: Vec<EntropyPoint> = (4..8)
            .map(|l| EntropyPoint {
                n: 2 * l,
                l,
                s: 0.7 * l as f64 - 2f64.ln() + 0.3 / l as f64,
            })
            .collect();
        let fit = extract_tee(&pts).unwrap();
        // least squares over L = 4..7 maps 0.3/L onto an intercept of exactly 231/2000
        assert!((fit.gamma - (2f64.ln() - 231.0 / 2000.0)).abs() < 1e-12, "{}", fit.gamma);
    }

    #[test]
    fn needs_three_lengths() {
        let p = |l| EntropyPoint { n: 2 * l, l, s: 1.0 };
        assert_eq!(extract_tee(&[p(4), p(5), p(5)]), Err(TeeError::TooFewPoints(2)));
    }

    #[test]
    fn memory_guard_reports_cost() {
        assert!(memory_estimate(16) > 1 << 30);
        assert!(memory_estimate(40) == usize::MAX || memory_estimate(40) > DEFAULT_MEMORY_BUDGET);
    }
}
