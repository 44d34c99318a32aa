//! Restarted Lanczos for the lowest eigenpair of a Hermitian operator given
//! only as a matrix-vector product.

use faer::Mat;
use thiserror::Error;

use crate::tensor::{eigh_mat, C64, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("starting vector vanishes after deflation")]
    NullStart,
    #[error("non-finite value encountered at iteration {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosConfig {
    /// Converged once the residual norm estimate `‖Hx − θx‖` drops below this.
    pub tol: f64,
    /// Total matrix-vector products across restarts.
    pub max_iter: usize,
    /// Krylov vectors kept before a restart.
    pub krylov_dim: usize,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 400,
            krylov_dim: 24,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<C64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += alpha * b);
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn project_out(w: &mut [C64], basis: &[Vec<C64>]) {
    for v in basis {
        let c = dot(v, w);
        axpy(w, -c, v);
    }
}

/// Lowest eigenpair of `op` restricted to the orthogonal complement of
/// `deflate` (assumed orthonormal), warm-started from `start`.
pub fn lowest_eigenpair(
    mut op: impl FnMut(&[C64], &mut [C64]),
    start: &[C64],
    deflate: &[Vec<C64>],
    cfg: &LanczosConfig,
) -> Result<EigenPair, EigenError> {
    let n = start.len();
    let mut x = start.to_vec();
    project_out(&mut x, deflate);
    project_out(&mut x, deflate);
    let nx = norm(&x);
    if nx < 1e-300 || !nx.is_finite() {
        return Err(EigenError::NullStart);
    }
    x.iter_mut().for_each(|z| *z /= nx);

    let kdim = cfg.krylov_dim.clamp(2, n.max(2));
    let mut total = 0usize;
    let mut best: EigenPair;
    loop {
        let mut basis: Vec<Vec<C64>> = vec![x.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![ZERO; n];
        loop {
            let j = basis.len() - 1;
            op(&basis[j], &mut w);
            total += 1;
            project_out(&mut w, deflate);
            let a = dot(&basis[j], &w).re;
            if !a.is_finite() {
                return Err(EigenError::NonFinite(total));
            }
            alpha.push(a);
            // Full reorthogonalization, applied twice for stability.
            project_out(&mut w, &basis);
            project_out(&mut w, &basis);
            let b = norm(&w);
            let (theta, y) = tridiagonal_lowest(&alpha, &beta);
            let residual = b * y.last().map_or(0.0, |v| v.abs());
            let invariant = b < 1e-13 * a.abs().max(1.0);
            if residual <= cfg.tol || invariant || basis.len() >= kdim.min(n) || total >= cfg.max_iter {
                let mut ritz = vec![ZERO; n];
                for (coef, v) in y.iter().zip(&basis) {
                    axpy(&mut ritz, C64::new(*coef, 0.0), v);
                }
                let rn = norm(&ritz);
                ritz.iter_mut().for_each(|z| *z /= rn);
                let converged = residual <= cfg.tol || invariant;
                best = EigenPair {
                    value: theta,
                    vector: ritz,
                    residual: if invariant { 0.0 } else { residual },
                    iterations: total,
                    converged,
                };
                break;
            }
            beta.push(b);
            let next: Vec<C64> = w.iter().map(|z| z / b).collect();
            basis.push(next);
        }
        if best.converged || total >= cfg.max_iter {
            return Ok(best);
        }
        x = best.vector.clone();
    }
}

/// Lowest eigenpair of the symmetric tridiagonal matrix with diagonal `a`
/// and off-diagonal `b`.
fn tridiagonal_lowest(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let m = a.len();
    if m == 1 {
        return (a[0], vec![1.0]);
    }
    let t = Mat::<C64>::from_fn(m, m, |i, j| {
        if i == j {
            C64::new(a[i], 0.0)
        } else if i + 1 == j {
            C64::new(b[i], 0.0)
        } else if j + 1 == i {
            C64::new(b[j], 0.0)
        } else {
            ZERO
        }
    });
    let (vals, vecs) = eigh_mat(t.as_ref()).expect("small symmetric eigenproblem");
    let k = m - 1; // descending order
    // Fix the sign so the vector is real and its largest entry positive.
    let col: Vec<C64> = (0..m).map(|i| vecs[(i, k)]).collect();
    let pivot = col
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .expect("nonempty");
    let phase = pivot.conj() / pivot.norm();
    (vals[k], col.iter().map(|z| (z * phase).re).collect())
}
