//! Two-site DMRG over a sparse MPO.
//!
//! Environments are stored per MPO channel: `L[k][a]` is the `χ_bra × χ_ket`
//! block for channel `a` on the bond left of site `k`, `R[k][c]` the block on
//! the bond right of site `k`.

use std::collections::BTreeMap;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolver::{lowest_eigenpair, EigenError, LanczosConfig};
use crate::lattice::{LadderLattice, UP, VACANT};
use crate::mpo::Mpo;
use crate::mps::{MatrixProductState, MpsError};
use crate::tensor::{gemm, rm, rm_mut, to_row_major, DenseTensor, TensorError, TruncationPolicy, C64, ONE, ZERO};

mod sector;

use faer::reborrow::ReborrowMut;

use sector::{occ, Charges};

const D: usize = 3;

#[derive(Debug, Error)]
pub enum DmrgError {
    #[error("MPO has {mpo} sites but the state has {state}")]
    LengthMismatch { mpo: usize, state: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("local eigensolver failed at sweep {sweep}, site {site}: {source}")]
    Eigensolver {
        sweep: usize,
        site: usize,
        #[source]
        source: EigenError,
    },
    #[error("initial state has no weight in the half-filled sector")]
    NoSectorWeight,
    #[error("MPO does not conserve particle number (site {site})")]
    NotConserving { site: usize },
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmrgConfig {
    /// Bond-dimension cap per sweep; the last entry repeats.
    pub chi_schedule: Vec<usize>,
    pub cutoff: f64,
    pub max_sweeps: usize,
    /// Converged once consecutive sweep energies differ by at most this.
    pub energy_tolerance: f64,
    pub lanczos_tolerance: f64,
    pub lanczos_max_iter: usize,
    /// Seed for the random perturbation of the initial state.
    pub seed: u64,
    /// Amplitude of the random spinor admixture on occupied crystal sites.
    pub initial_noise: f64,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        Self {
            chi_schedule: vec![16, 32, 64],
            cutoff: 1e-12,
            max_sweeps: 20,
            energy_tolerance: 1e-9,
            lanczos_tolerance: 1e-10,
            lanczos_max_iter: 60,
            seed: 1,
            initial_noise: 1e-2,
        }
    }
}

impl DmrgConfig {
    /// Doubling ramp up to `chi_max`.
    pub fn with_chi(chi_max: usize) -> Self {
        let mut schedule = Vec::new();
        let mut c = 16.min(chi_max);
        while c < chi_max {
            schedule.push(c);
            c *= 2;
        }
        schedule.push(chi_max);
        Self {
            chi_schedule: schedule,
            ..Self::default()
        }
    }

    pub fn chi_max(&self) -> usize {
        self.chi_schedule.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), DmrgError> {
        let bad = |m: &str| Err(DmrgError::Config(m.to_string()));
        if self.chi_schedule.is_empty() || self.chi_schedule.contains(&0) {
            return bad("chi schedule must be nonempty and positive");
        }
        if self.chi_schedule.windows(2).any(|w| w[0] > w[1]) {
            return bad("chi schedule must be nondecreasing");
        }
        if !(self.energy_tolerance > 0.0 && self.lanczos_tolerance > 0.0 && self.cutoff >= 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_sweeps == 0 || self.lanczos_max_iter == 0 {
            return bad("sweep and iteration limits must be positive");
        }
        Ok(())
    }

    fn policy(&self, sweep: usize) -> TruncationPolicy {
        let chi = self.chi_schedule[sweep.min(self.chi_schedule.len() - 1)];
        TruncationPolicy::new(chi).with_cutoff(self.cutoff)
    }
}

#[derive(Debug, Clone)]
pub enum InitialState {
    /// `|↑⟩`-dominated spinors on one sublattice, vacancies elsewhere.
    Crystal { sublattice: usize },
    Random { chi: usize },
    State(MatrixProductState),
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub psi: MatrixProductState,
    pub energy: f64,
    pub energy_history: Vec<f64>,
    /// Largest discarded weight of each sweep.
    pub truncation_error: Vec<f64>,
    pub particle_number: f64,
    pub particle_variance: f64,
    pub converged: bool,
    pub sweeps: usize,
}

/// Product state with `|↑⟩` on every site of one sublattice and `|0⟩` elsewhere.
pub fn crystal_initial_state(lat: &LadderLattice, sublattice: usize) -> MatrixProductState {
    let digits: Vec<usize> = (0..lat.len())
        .map(|p| if lat.sublattice(p) == sublattice { UP } else { VACANT })
        .collect();
    MatrixProductState::basis_state(&digits, TruncationPolicy::new(1)).expect("nonempty lattice")
}

/// Crystal plus `noise` times a random bond-dimension-4 MPS, normalized.
///
/// A product-state perturbation is not enough: at small `t` most two-site
/// windows of the crystal hold a single spin, so product environments never
/// acquire the entanglement of the stabilizer ground state.
pub fn perturbed_crystal(lat: &LadderLattice, sublattice: usize, noise: f64, seed: u64) -> MatrixProductState {
    let crystal = crystal_initial_state(lat, sublattice);
    if noise == 0.0 {
        return crystal;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = MatrixProductState::random(lat.len(), 4, &mut rng, TruncationPolicy::exact()).expect("nonempty lattice");
    let n = lat.len();
    let tensors = (0..n)
        .map(|k| {
            let (a, b) = (crystal.tensor(k), random.tensor(k));
            let (al, ar) = (a.shape()[0], a.shape()[2]);
            let (bl, br) = (b.shape()[0], b.shape()[2]);
            let first = k == 0;
            let last = k + 1 == n;
            let l = if first { 1 } else { al + bl };
            let r = if last { 1 } else { ar + br };
            let scale = if first { C64::new(noise, 0.0) } else { ONE };
            DenseTensor::from_fn(vec![l, 3, r], |ix| {
                let (i, s, j) = (ix[0], ix[1], ix[2]);
                let (ia, ja) = (if first { Some(0) } else { (i < al).then_some(i) }, if last { Some(0) } else { (j < ar).then_some(j) });
                let (ib, jb) = (
                    if first { Some(0) } else { i.checked_sub(al) },
                    if last { Some(0) } else { j.checked_sub(ar) },
                );
                let mut v = ZERO;
                if let (Some(i), Some(j)) = (ia, ja) {
                    v += a.get(&[i, s, j]);
                }
                if let (Some(i), Some(j)) = (ib, jb) {
                    v += b.get(&[i, s, j]) * scale;
                }
                v
            })
        })
        .collect();
    let mut psi = MatrixProductState::from_tensors(tensors, TruncationPolicy::exact()).expect("consistent bonds");
    psi.canonicalize(0).expect("finite tensors");
    let norm = psi.norm();
    let t0 = psi.tensor(0).clone().scaled(C64::new(1.0 / norm, 0.0));
    psi.set_tensor(0, t0);
    psi
}

/// Sparse two-site operator `Σ_b W_i[a,b] ⊗ W_{i+1}[b,c]` grouped by `(a, c)`.
struct PairOp {
    left: usize,
    right: usize,
    /// `(s', s, value)` over the 9-dimensional two-site space.
    entries: Vec<(usize, usize, C64)>,
}

fn pair_ops(mpo: &Mpo, i: usize) -> Vec<PairOp> {
    let mut acc: BTreeMap<(usize, usize), [[C64; 9]; 9]> = BTreeMap::new();
    for e1 in &mpo.site(i).entries {
        for e2 in mpo.site(i + 1).entries.iter().filter(|e| e.left == e1.right) {
            let m = acc.entry((e1.left, e2.right)).or_insert([[ZERO; 9]; 9]);
            for a in 0..D {
                for b in 0..D {
                    let x = e1.op[a][b];
                    if x == ZERO {
                        continue;
                    }
                    for c in 0..D {
                        for d in 0..D {
                            m[a * D + c][b * D + d] += x * e2.op[c][d];
                        }
                    }
                }
            }
        }
    }
    acc.into_iter()
        .map(|((left, right), m)| PairOp {
            left,
            right,
            entries: (0..9)
                .flat_map(|s| (0..9).map(move |t| (s, t)))
                .filter(|&(s, t)| m[s][t].norm() > 0.0)
                .map(|(s, t)| (s, t, m[s][t]))
                .collect(),
        })
        .filter(|p| !p.entries.is_empty())
        .collect()
}

/// Particle-number change of every MPO channel, bond by bond: an environment
/// block for channel `a` couples bra charge `q + δ_a` to ket charge `q`.
type Shifts = Vec<Vec<Option<i64>>>;

fn channel_shifts(mpo: &Mpo) -> Result<Shifts, DmrgError> {
    let n = mpo.len();
    let mut sh: Shifts = (0..n).map(|k| vec![None; mpo.site(k).left_dim]).collect();
    sh.push(vec![None; mpo.site(n - 1).right_dim]);
    sh[0][0] = Some(0);
    for k in 0..n {
        for e in &mpo.site(k).entries {
            let Some(d) = sh[k][e.left] else { continue };
            let mut op_shift = None;
            for sp in 0..D {
                for s in 0..D {
                    if e.op[sp][s] == ZERO {
                        continue;
                    }
                    let x = occ(sp) - occ(s);
                    if op_shift.is_some_and(|y| y != x) {
                        return Err(DmrgError::NotConserving { site: k });
                    }
                    op_shift = Some(x);
                }
            }
            let Some(x) = op_shift else { continue };
            match sh[k + 1][e.right] {
                Some(y) if y != d + x => return Err(DmrgError::NotConserving { site: k }),
                _ => sh[k + 1][e.right] = Some(d + x),
            }
        }
    }
    Ok(sh)
}

type Env = Vec<Option<Mat<C64>>>;

fn boundary_env(dim: usize) -> Env {
    let mut e: Env = vec![None; dim];
    e[0] = Some(Mat::identity(1, 1));
    e
}

/// `dst[l, s', r] += Σ_s op[s'][s] src[l, s, r]` for `l × (D·r)` row-major blocks.
fn apply_site_op(dst: &mut [C64], src: &[C64], op: &crate::lattice::Op3, l: usize, r: usize) {
    for li in 0..l {
        for s in 0..D {
            for sp in 0..D {
                let c = op[sp][s];
                if c == ZERO {
                    continue;
                }
                let src = &src[(li * D + s) * r..(li * D + s + 1) * r];
                let dst = &mut dst[(li * D + sp) * r..(li * D + sp + 1) * r];
                dst.iter_mut().zip(src).for_each(|(d, x)| *d += c * x);
            }
        }
    }
}

/// Left environment on bond `k + 1` from the one on bond `k`, blockwise.
fn grow_left(env: &Env, a: &DenseTensor, mpo: &Mpo, k: usize, cl: &Charges, cr: &Charges, sh: &Shifts) -> Env {
    let (l, r) = (a.shape()[0], a.shape()[2]);
    let av = a.as_mat(1);
    let site = mpo.site(k);
    let mut u: Vec<Option<Vec<C64>>> = vec![None; site.right_dim];
    let mut t_cache: Vec<Option<Vec<C64>>> = vec![None; site.left_dim];
    for e in &site.entries {
        let (Some(la), Some(d)) = (&env[e.left], sh[k][e.left]) else { continue };
        let t = t_cache[e.left].get_or_insert_with(|| {
            // t[P, s, C] = L[P, Q] A[Q, s, C]
            let mut t = vec![ZERO; l * D * r];
            let mut tv = rm_mut(&mut t, l, D * r);
            for &(q, q0, ql) in cl.blocks() {
                let Some((p0, pl)) = cl.find(q + d) else { continue };
                for s in 0..D {
                    let Some((c0, cn)) = cr.find(q + occ(s)) else { continue };
                    gemm(
                        tv.rb_mut().submatrix_mut(p0, s * r + c0, pl, cn),
                        la.as_ref().submatrix(p0, q0, pl, ql),
                        av.submatrix(q0, s * r + c0, ql, cn),
                        true,
                    );
                }
            }
            t
        });
        let ub = u[e.right].get_or_insert_with(|| vec![ZERO; l * D * r]);
        apply_site_op(ub, t, &e.op, l, r);
    }
    u.into_iter()
        .enumerate()
        .map(|(b, ub)| {
            let (ub, d) = (ub?, sh[k + 1][b]?);
            // out[X, Y] = Σ_{P, s'} A[P, s', X]^† u[P, s', Y]
            let mut out = Mat::<C64>::zeros(r, r);
            let uv = rm(&ub, l, D * r);
            for &(p, p0, pl) in cl.blocks() {
                for s in 0..D {
                    let (Some((x0, xn)), Some((y0, yn))) = (cr.find(p + occ(s)), cr.find(p + occ(s) - d)) else { continue };
                    gemm(
                        out.as_mut().submatrix_mut(x0, y0, xn, yn),
                        av.submatrix(p0, s * r + x0, pl, xn).adjoint(),
                        uv.submatrix(p0, s * r + y0, pl, yn),
                        true,
                    );
                }
            }
            Some(out)
        })
        .collect()
}

/// Right environment on bond `k` from the one on bond `k + 1`, blockwise.
fn grow_right(env: &Env, b: &DenseTensor, mpo: &Mpo, k: usize, cl: &Charges, cr: &Charges, sh: &Shifts) -> Env {
    let (l, r) = (b.shape()[0], b.shape()[2]);
    let bv = b.as_mat(1);
    let site = mpo.site(k);
    let mut u: Vec<Option<Vec<C64>>> = vec![None; site.left_dim];
    let mut t_cache: Vec<Option<Vec<C64>>> = vec![None; site.right_dim];
    for e in &site.entries {
        let (Some(rc), Some(d)) = (&env[e.right], sh[k + 1][e.right]) else { continue };
        let t = t_cache[e.right].get_or_insert_with(|| {
            // t[P, s, Y] = B[P, s, X] R[Y, X]ᵀ
            let mut t = vec![ZERO; l * D * r];
            let mut tv = rm_mut(&mut t, l, D * r);
            for &(p, p0, pl) in cl.blocks() {
                for s in 0..D {
                    let x = p + occ(s);
                    let (Some((x0, xn)), Some((y0, yn))) = (cr.find(x), cr.find(x + d)) else { continue };
                    gemm(
                        tv.rb_mut().submatrix_mut(p0, s * r + y0, pl, yn),
                        bv.submatrix(p0, s * r + x0, pl, xn),
                        rc.as_ref().submatrix(y0, x0, yn, xn).transpose(),
                        true,
                    );
                }
            }
            t
        });
        let ua = u[e.left].get_or_insert_with(|| vec![ZERO; l * D * r]);
        apply_site_op(ua, t, &e.op, l, r);
    }
    u.into_iter()
        .enumerate()
        .map(|(a, ua)| {
            let (ua, d) = (ua?, sh[k][a]?);
            // out[X, Y] = Σ_{s', R} conj(B[X, s', R]) u[Y, s', R]
            let mut out = Mat::<C64>::zeros(l, l);
            let uv = rm(&ua, l, D * r);
            for &(q, y0, yn) in cl.blocks() {
                let Some((x0, xn)) = cl.find(q + d) else { continue };
                for s in 0..D {
                    let Some((r0, rn)) = cr.find(q + d + occ(s)) else { continue };
                    gemm(
                        out.as_mut().submatrix_mut(x0, y0, xn, yn),
                        bv.submatrix(x0, s * r + r0, xn, rn).conjugate(),
                        uv.submatrix(y0, s * r + r0, yn, rn).transpose(),
                        true,
                    );
                }
            }
            Some(out)
        })
        .collect()
}

/// Charge-resolved two-site window: bonds `i` and `i + 2`.
struct Window<'a> {
    left: &'a Env,
    right: &'a Env,
    pairs: &'a [PairOp],
    cl: &'a Charges,
    cr: &'a Charges,
    sl: &'a [Option<i64>],
    sr: &'a [Option<i64>],
}

fn two_site_occ(sigma: usize) -> i64 {
    occ(sigma / D) + occ(sigma % D)
}

impl Window<'_> {
    /// `H_eff θ` with `θ` stored as `l × (9·r)`.
    fn apply(&self, theta: &[C64], out: &mut [C64]) {
        let (l, r) = (self.cl.dim(), self.cr.dim());
        let block = l * 9 * r;
        let tv = rm(theta, l, 9 * r);
        let mut x: Vec<Option<Vec<C64>>> = vec![None; self.left.len()];
        let mut y: Vec<Option<Vec<C64>>> = vec![None; self.right.len()];
        for p in self.pairs {
            let (Some(la), Some(_), Some(d)) = (&self.left[p.left], &self.right[p.right], self.sl[p.left]) else {
                continue;
            };
            let xa = x[p.left].get_or_insert_with(|| {
                let mut v = vec![ZERO; block];
                let mut xv = rm_mut(&mut v, l, 9 * r);
                for &(q, q0, ql) in self.cl.blocks() {
                    let Some((p0, pl)) = self.cl.find(q + d) else { continue };
                    for sigma in 0..9 {
                        let Some((c0, cn)) = self.cr.find(q + two_site_occ(sigma)) else { continue };
                        gemm(
                            xv.rb_mut().submatrix_mut(p0, sigma * r + c0, pl, cn),
                            la.as_ref().submatrix(p0, q0, pl, ql),
                            tv.submatrix(q0, sigma * r + c0, ql, cn),
                            true,
                        );
                    }
                }
                v
            });
            let yc = y[p.right].get_or_insert_with(|| vec![ZERO; block]);
            for li in 0..l {
                for &(sp, s, c) in &p.entries {
                    let src = &xa[(li * 9 + s) * r..(li * 9 + s + 1) * r];
                    let dst = &mut yc[(li * 9 + sp) * r..(li * 9 + sp + 1) * r];
                    dst.iter_mut().zip(src).for_each(|(d, v)| *d += c * v);
                }
            }
        }
        out.iter_mut().for_each(|z| *z = ZERO);
        let mut ov = rm_mut(out, l, 9 * r);
        for (c, yc) in y.iter().enumerate() {
            let (Some(yc), Some(rc), Some(d)) = (yc, &self.right[c], self.sr[c]) else { continue };
            let yv = rm(yc, l, 9 * r);
            for &(p, p0, pl) in self.cl.blocks() {
                for sigma in 0..9 {
                    let x = p + two_site_occ(sigma);
                    let (Some((x0, xn)), Some((k0, kn))) = (self.cr.find(x), self.cr.find(x - d)) else { continue };
                    gemm(
                        ov.rb_mut().submatrix_mut(p0, sigma * r + x0, pl, xn),
                        yv.submatrix(p0, sigma * r + k0, pl, kn),
                        rc.as_ref().submatrix(x0, k0, xn, kn).transpose(),
                        true,
                    );
                }
            }
        }
    }
}

/// `θ = A_i · A_{i+1}` as `l × (9·r)`, only charge-allowed blocks.
fn two_site_theta(a: &DenseTensor, b: &DenseTensor, cl: &Charges, cm: &Charges, cr: &Charges) -> Vec<C64> {
    let (l, m, r) = (cl.dim(), cm.dim(), cr.dim());
    let mut theta = vec![ZERO; l * 9 * r];
    let mut tv = rm_mut(&mut theta, l, 9 * r);
    let (av, bv) = (a.as_mat(1), b.as_mat(1));
    for &(p, p0, pl) in cl.blocks() {
        for s1 in 0..D {
            let Some((m0, mn)) = cm.find(p + occ(s1)) else { continue };
            for s2 in 0..D {
                let Some((c0, cn)) = cr.find(p + occ(s1) + occ(s2)) else { continue };
                gemm(
                    tv.rb_mut().submatrix_mut(p0, (s1 * D + s2) * r + c0, pl, cn),
                    av.submatrix(p0, s1 * m + m0, pl, mn),
                    bv.submatrix(m0, s2 * r + c0, mn, cn),
                    true,
                );
            }
        }
    }
    theta
}

/// Dense left environment, for states without charge labels.
fn dense_grow_left(env: &Env, a: &DenseTensor, mpo: &Mpo, k: usize) -> Env {
    let (l, r) = (a.shape()[0], a.shape()[2]);
    let site = mpo.site(k);
    let mut u: Vec<Option<Vec<C64>>> = vec![None; site.right_dim];
    let mut t_cache: Vec<Option<Vec<C64>>> = vec![None; site.left_dim];
    for e in &site.entries {
        let Some(la) = &env[e.left] else { continue };
        let t = t_cache[e.left].get_or_insert_with(|| {
            let mut t = vec![ZERO; l * D * r];
            gemm(rm_mut(&mut t, l, D * r), la.as_ref(), a.as_mat(1), false);
            t
        });
        let ub = u[e.right].get_or_insert_with(|| vec![ZERO; l * D * r]);
        apply_site_op(ub, t, &e.op, l, r);
    }
    u.into_iter()
        .map(|ub| {
            ub.map(|ub| {
                let mut out = Mat::<C64>::zeros(r, r);
                gemm(out.as_mut(), a.as_mat(2).adjoint(), rm(&ub, l * D, r), false);
                out
            })
        })
        .collect()
}

/// `⟨ψ|H|ψ⟩` by a full left-to-right environment contraction.
pub fn mpo_expectation(psi: &MatrixProductState, mpo: &Mpo) -> C64 {
    let mut env = boundary_env(mpo.site(0).left_dim);
    for k in 0..psi.len() {
        env = dense_grow_left(&env, psi.tensor(k), mpo, k);
    }
    env[0].as_ref().map_or(ZERO, |m| m[(0, 0)])
}

/// Two-site DMRG ground-state search in the half-filled sector.
///
/// The initial state is projected onto `N/2` particles and every bond keeps
/// particle-number labels, so all contractions and SVDs run block by block.
/// The penalty term of the MPO then contributes exactly zero.
pub fn find_ground_state(mpo: &Mpo, config: &DmrgConfig, initial: InitialState, lat: &LadderLattice) -> Result<GroundStateResult, DmrgError> {
    config.validate()?;
    let n = mpo.len();
    let start = match initial {
        InitialState::Crystal { sublattice } => perturbed_crystal(lat, sublattice, config.initial_noise, config.seed),
        InitialState::Random { chi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            MatrixProductState::random(n, chi, &mut rng, config.policy(0))?
        }
        InitialState::State(s) => s,
    };
    if start.len() != n {
        return Err(DmrgError::LengthMismatch { mpo: n, state: start.len() });
    }
    if n < 2 {
        return Err(DmrgError::Config("chain needs at least two sites".into()));
    }
    let shifts = channel_shifts(mpo)?;
    let (mut psi, mut charges) = sector::sectorize(&start, (n / 2) as i64)?;
    psi.set_policy(config.policy(0));

    let pairs: Vec<Vec<PairOp>> = (0..n - 1).map(|i| pair_ops(mpo, i)).collect();
    let mut lenv: Vec<Env> = vec![Vec::new(); n];
    let mut renv: Vec<Env> = vec![Vec::new(); n];
    lenv[0] = boundary_env(mpo.site(0).left_dim);
    renv[n - 1] = boundary_env(mpo.site(n - 1).right_dim);
    for k in (1..n).rev() {
        renv[k - 1] = grow_right(&renv[k], psi.tensor(k), mpo, k, &charges[k], &charges[k + 1], &shifts);
    }
    let full = grow_right(&renv[0], psi.tensor(0), mpo, 0, &charges[0], &charges[1], &shifts);
    let mut energy = full[0].as_ref().map_or(0.0, |m| m[(0, 0)].re);

    let lanczos = LanczosConfig {
        tol: config.lanczos_tolerance,
        max_iter: config.lanczos_max_iter,
        krylov_dim: 24,
    };
    let mut history = Vec::new();
    let mut trunc = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    for sweep in 0..config.max_sweeps {
        let policy = config.policy(sweep);
        psi.set_policy(policy);
        let mut max_disc = 0.0f64;
        let mut e_sweep = energy;
        // left to right, then right to left; the center ends at site 0
        let order = (0..n - 1).map(|i| (i, true)).chain((0..n - 1).rev().map(|i| (i, false)));
        for (i, rightward) in order {
            let (cl, cr) = (&charges[i], &charges[i + 2]);
            let (l, r) = (cl.dim(), cr.dim());
            let theta = two_site_theta(psi.tensor(i), psi.tensor(i + 1), cl, &charges[i + 1], cr);
            let window = Window {
                left: &lenv[i],
                right: &renv[i + 1],
                pairs: &pairs[i],
                cl,
                cr,
                sl: &shifts[i],
                sr: &shifts[i + 2],
            };
            let pair = lowest_eigenpair(|x, y| window.apply(x, y), &theta, &[], &lanczos)
                .map_err(|source| DmrgError::Eigensolver { sweep, site: i, source })?;
            e_sweep = pair.value;
            let rows: Vec<Option<i64>> = sector::fused_left(cl).into_iter().map(Some).collect();
            let cols = sector::fused_right(cr);
            let svd = sector::block_svd(rm(&pair.vector, l * D, D * r), &rows, Some(&cols), &policy)?;
            max_disc = max_disc.max(svd.discarded);
            let chi = svd.s.len();
            let mut left = to_row_major(svd.u.as_ref());
            let mut right = to_row_major(svd.vh.as_ref());
            if rightward {
                for (k, row) in right.chunks_mut(D * r).enumerate() {
                    row.iter_mut().for_each(|z| *z *= svd.s[k]);
                }
            } else {
                for row in left.chunks_mut(chi) {
                    row.iter_mut().zip(&svd.s).for_each(|(z, x)| *z *= x);
                }
            }
            psi.set_tensor(i, DenseTensor::new(vec![l, D, chi], left)?);
            psi.set_tensor(i + 1, DenseTensor::new(vec![chi, D, r], right)?);
            charges[i + 1] = Charges::new(svd.charges);
            if rightward {
                psi.set_center_unchecked(Some(i + 1));
                lenv[i + 1] = grow_left(&lenv[i], psi.tensor(i), mpo, i, &charges[i], &charges[i + 1], &shifts);
            } else {
                psi.set_center_unchecked(Some(i));
                renv[i] = grow_right(&renv[i + 1], psi.tensor(i + 1), mpo, i + 1, &charges[i + 1], &charges[i + 2], &shifts);
            }
        }
        sweeps = sweep + 1;
        history.push(e_sweep);
        trunc.push(max_disc);
        let delta = (e_sweep - energy).abs();
        energy = e_sweep;
        if delta <= config.energy_tolerance {
            converged = true;
            break;
        }
    }
    let (mean, var) = psi.number_moments();
    Ok(GroundStateResult {
        psi,
        energy,
        energy_history: history,
        truncation_error: trunc,
        particle_number: mean,
        particle_variance: var,
        converged,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, enumerate_stabilizers, ModelParams};
    use crate::mpo::build_hamiltonian_mpo;

    #[test]
    fn crystal_pattern_follows_parity() {
        let lat = build_lattice(4).unwrap();
        let psi = crystal_initial_state(&lat, 0);
        let (mean, var) = psi.number_moments();
        assert!((mean - 4.0).abs() < 1e-12 && var < 1e-12);
        assert_eq!(psi.max_bond_dim(), 1);
    }

    #[test]
    fn schedule_must_not_shrink() {
        let cfg = DmrgConfig {
            chi_schedule: vec![32, 16],
            ..DmrgConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(DmrgConfig::with_chi(64).chi_schedule, vec![16, 32, 64]);
    }

    #[test]
    fn mpo_expectation_of_the_crystal() {
        let lat = build_lattice(4).unwrap();
        let mpo = build_hamiltonian_mpo(&lat, &enumerate_stabilizers(&lat), &ModelParams::new(0.3));
        let psi = crystal_initial_state(&lat, 1);
        // ZZZ-type stabilizers on the occupied sublattice give −1 each for all-up spins.
        let b_count = enumerate_stabilizers(&lat)
            .iter()
            .filter(|s| s.sublattice == 1 && s.kind == crate::lattice::StabilizerKind::B)
            .count();
        let e = mpo_expectation(&psi, &mpo);
        assert!((e.re + b_count as f64).abs() < 1e-12, "{e}");
    }
}
