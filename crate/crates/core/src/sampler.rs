//! Monte-Carlo error-correction trajectories on a ground-state MPS.
//!
//! One trajectory measures every occupation, decodes the density wave, moves
//! particles onto the nearer crystal, measures the stabilizers of the occupied
//! sublattice and decodes the resulting anyons.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{
    compute_dw_syndrome, crystal, dw_correct, tc_correct, AnyonSyndrome, DecoderConfig, DecoderError, DecoderOutcome,
};
use crate::lattice::{n_occ, vacancy, StabilizerKind, StabilizerSpec, VACANT};
use crate::mps::{LocalOperator, MatrixProductState, MpsError};
use crate::tensor::{gemm, rm, rm_mut, DenseTensor, C64, ZERO};

const D: usize = crate::lattice::LOCAL_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("{attempts} occupation samples in a row left the half-filled sector")]
    Leakage { attempts: usize },
    #[error("swap ({0}, {1}) is not between chain neighbours")]
    NonAdjacentSwap(usize, usize),
    #[error("uncorrected configuration: stabilizer {index} has vacuum support")]
    Uncorrected { index: usize },
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Mps(#[from] MpsError),
}

/// RNG for one trajectory: a fixed seed with the trajectory id as stream.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationRecord {
    /// 1 occupied, 0 empty, in chain order.
    pub bits: Vec<u8>,
    /// Born probability of every realized outcome.
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilizerOutcome {
    Plus,
    Minus,
    Skipped,
}

/// Outcomes aligned with the stabilizer list that was measured.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SyndromeRecord {
    pub outcomes: Vec<StabilizerOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Sampling,
    DensityWave,
    Swap,
    Stabilizers,
    Toric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: FailureStage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub stream: u64,
    pub occupations: Option<OccupationRecord>,
    pub decoder: Option<DecoderOutcome>,
    pub syndromes: SyndromeRecord,
    pub d_dw: usize,
    pub d_tc: usize,
    pub d_tot: usize,
    /// Samples discarded for leaving the half-filled sector.
    pub leakage_rejections: usize,
    pub failure: Option<Failure>,
}

impl Trajectory {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Occupation samples tried before a trajectory fails with leakage.
    pub max_leakage_attempts: usize,
    pub decoder: DecoderConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_leakage_attempts: 100,
            decoder: DecoderConfig::default(),
        }
    }
}

/// Measures `{1 − n, n}` on every site in chain order. Samples outside the
/// half-filled sector are redrawn from a fresh copy of `psi`.
///
/// Returns the record, the collapsed state and the number of rejections.
pub fn sample_occupations(
    psi: &MatrixProductState,
    rng: &mut impl rand::Rng,
    max_attempts: usize,
) -> Result<(OccupationRecord, MatrixProductState, usize), SamplerError> {
    let mut base = psi.clone();
    base.canonicalize(0)?;
    for attempt in 0..max_attempts {
        let (record, state) = draw_occupations(&base, rng)?;
        if 2 * record.bits.iter().map(|&b| usize::from(b)).sum::<usize>() == psi.len() {
            return Ok((record, state, attempt));
        }
    }
    Err(SamplerError::Leakage { attempts: max_attempts })
}

/// Sequential Born sampling of occupation classes on a state whose center is
/// site 0. Everything right of the current site is right-isometric, so the
/// conditional weights only need the left environment of the projected
/// prefix; no tensor is refactorized.
fn draw_occupations(psi: &MatrixProductState, rng: &mut impl rand::Rng) -> Result<(OccupationRecord, MatrixProductState), SamplerError> {
    let n = psi.len();
    let mut env = Mat::<C64>::identity(1, 1);
    let mut tensors = Vec::with_capacity(n);
    let mut bits = Vec::with_capacity(n);
    let mut probabilities = Vec::with_capacity(n);
    let mut weight = 1.0;
    for k in 0..n {
        let a = psi.tensor(k);
        let (l, r) = (a.shape()[0], a.shape()[2]);
        let mut t = vec![ZERO; l * D * r];
        gemm(rm_mut(&mut t, l, D * r), env.as_ref(), a.as_mat(1), false);
        let tv = rm(&t, l, D * r);
        // class 0: vacancy, class 1: either spin
        let mut classes = [Mat::<C64>::zeros(r, r), Mat::<C64>::zeros(r, r)];
        for s in 0..D {
            let c = usize::from(s != VACANT);
            gemm(
                classes[c].as_mut(),
                a.as_mat(1).submatrix(0, s * r, l, r).adjoint(),
                tv.submatrix(0, s * r, l, r),
                true,
            );
        }
        let w: Vec<f64> = classes.iter().map(|m| (0..r).map(|i| m[(i, i)].re).sum::<f64>().max(0.0)).collect();
        let total = w[0] + w[1];
        if !(total > 0.0) {
            return Err(MpsError::ZeroNorm.into());
        }
        let c = usize::from(rng.random::<f64>() * total >= w[0]);
        bits.push(c as u8);
        probabilities.push(w[c] / total);
        weight *= w[c];
        env = Mat::from_fn(r, r, |i, j| classes[c][(i, j)] / w[c]);
        let mut projected = a.clone();
        let data = projected.data_mut();
        for li in 0..l {
            for s in (0..D).filter(|&s| usize::from(s != VACANT) != c) {
                data[(li * D + s) * r..(li * D + s + 1) * r].iter_mut().for_each(|z| *z = ZERO);
            }
        }
        tensors.push(projected);
    }
    tensors[0] = std::mem::replace(&mut tensors[0], DenseTensor::zeros(vec![1])).scaled(C64::new(1.0 / weight.sqrt(), 0.0));
    let state = MatrixProductState::from_tensors(tensors, *psi.policy())?;
    Ok((OccupationRecord { bits, probabilities }, state))
}

/// Applies nearest-neighbour swaps in order; each exchanges full local states.
pub fn apply_swap_plan(psi: &mut MatrixProductState, plan: &[(usize, usize)]) -> Result<(), SamplerError> {
    if let Some(&(p, q)) = plan.iter().find(|&&(p, q)| q != p + 1 || q >= psi.len()) {
        return Err(SamplerError::NonAdjacentSwap(p, q));
    }
    for &(p, _) in plan {
        psi.apply_swap(p)?;
    }
    Ok(())
}

/// `(1 ± S)/2` restricted to the occupied subspace of the window.
fn stabilizer_projectors(sites: &[usize; 3], kind: StabilizerKind) -> Result<[LocalOperator; 2], MpsError> {
    let pauli = LocalOperator::product(&sites.map(|p| (p, kind.pauli())))?;
    let occ = LocalOperator::product(&sites.map(|p| (p, n_occ())))?;
    let half = C64::new(0.5, 0.0);
    let mix = |sign: f64| -> Vec<C64> {
        occ.matrix()
            .iter()
            .zip(pauli.matrix())
            .map(|(o, s)| half * (o + s * sign))
            .collect()
    };
    Ok([
        LocalOperator::new(sites.to_vec(), mix(1.0))?,
        LocalOperator::new(sites.to_vec(), mix(-1.0))?,
    ])
}

/// Measurement order: increasing zigzag position, A before B.
fn measurement_order(stabs: &[StabilizerSpec]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stabs.len()).collect();
    order.sort_by_key(|&i| (stabs[i].position, stabs[i].kind, stabs[i].sublattice));
    order
}

/// Measures every stabilizer whose support is occupied; stabilizers whose
/// support is empty are skipped. Partially occupied support is an error.
pub fn measure_stabilizers(
    psi: &mut MatrixProductState,
    stabs: &[StabilizerSpec],
    rng: &mut impl rand::Rng,
) -> Result<SyndromeRecord, SamplerError> {
    const TOL: f64 = 1e-8;
    let mut outcomes = vec![StabilizerOutcome::Skipped; stabs.len()];
    for index in measurement_order(stabs) {
        let s = &stabs[index];
        let mut sorted = s.sites;
        sorted.sort_unstable();
        let filled = psi.product_expectation(&sorted.map(|p| (p, n_occ())))?.re;
        if filled < TOL {
            let empty = psi.product_expectation(&sorted.map(|p| (p, vacancy())))?.re;
            if empty > 1.0 - TOL {
                continue;
            }
        }
        if filled < 1.0 - TOL {
            return Err(SamplerError::Uncorrected { index });
        }
        // sites listed in chain order for the operator, same Pauli on each
        let stab = psi.product_expectation(&sorted.map(|p| (p, s.kind.pauli())))?.re;
        let plus = ((filled + stab) / 2.0).max(0.0);
        let minus = ((filled - stab) / 2.0).max(0.0);
        let outcome = usize::from(rng.random::<f64>() * (plus + minus) >= plus);
        psi.apply_local(&stabilizer_projectors(&sorted, s.kind)?[outcome])?;
        outcomes[index] = [StabilizerOutcome::Plus, StabilizerOutcome::Minus][outcome];
    }
    Ok(SyndromeRecord { outcomes })
}

/// Anyon positions of the measured sublattice, indexed by zigzag position.
pub fn anyon_syndrome(stabs: &[StabilizerSpec], record: &SyndromeRecord, length: usize) -> Result<AnyonSyndrome, DecoderError> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (s, o) in stabs.iter().zip(&record.outcomes) {
        if *o == StabilizerOutcome::Minus {
            match s.kind {
                StabilizerKind::A => a.push(s.position),
                StabilizerKind::B => b.push(s.position),
            }
        }
    }
    a.sort_unstable();
    b.sort_unstable();
    AnyonSyndrome::new(length, a, b)
}

/// The spin chain left after removing every empty site of a measured state,
/// with the stabilizers of the corrected crystal re-addressed to particle
/// indices.
///
/// The swap plan only ever exchanges a particle with a hole, so particles keep
/// their order along the chain and the spin state is untouched by it: the
/// `k`-th particle of `measured` is the `k`-th occupied site of `corrected`.
fn spin_chain(
    state: &MatrixProductState,
    measured: &[u8],
    corrected: &[u8],
    stabs: &[StabilizerSpec],
) -> Result<(MatrixProductState, Vec<Option<StabilizerSpec>>), SamplerError> {
    let empty: Vec<(usize, usize)> = (0..measured.len()).filter(|&p| measured[p] == 0).map(|p| (p, VACANT)).collect();
    let (chain, _) = state.remove_sites(&empty)?;
    let mut rank = vec![None; corrected.len()];
    let mut next = 0;
    for (p, &b) in corrected.iter().enumerate() {
        if b == 1 {
            rank[p] = Some(next);
            next += 1;
        }
    }
    let mut mapped = Vec::with_capacity(stabs.len());
    for (index, s) in stabs.iter().enumerate() {
        let ranks = s.sites.map(|p| rank[p]);
        mapped.push(match ranks {
            [Some(a), Some(b), Some(c)] => Some(StabilizerSpec {
                sites: [a, b, c],
                ..s.clone()
            }),
            [None, None, None] => None,
            _ => return Err(SamplerError::Uncorrected { index }),
        });
    }
    Ok((chain, mapped))
}

/// One full trajectory; deterministic in `(config.seed, stream)`.
pub fn run_trajectory(ground: &MatrixProductState, stabs: &[StabilizerSpec], config: &SamplerConfig, stream: u64) -> Trajectory {
    let mut rng = trajectory_rng(config.seed, stream);
    let mut traj = Trajectory {
        stream,
        occupations: None,
        decoder: None,
        syndromes: SyndromeRecord::default(),
        d_dw: 0,
        d_tc: 0,
        d_tot: 0,
        leakage_rejections: 0,
        failure: None,
    };
    let fail = |traj: &mut Trajectory, stage, e: &dyn std::fmt::Display| {
        traj.failure = Some(Failure {
            stage,
            message: e.to_string(),
        });
    };

    let (record, state, rejected) = match sample_occupations(ground, &mut rng, config.max_leakage_attempts) {
        Ok(x) => x,
        Err(e) => {
            traj.leakage_rejections = config.max_leakage_attempts;
            fail(&mut traj, FailureStage::Sampling, &e);
            return traj;
        }
    };
    traj.leakage_rejections = rejected;
    let bits = record.bits.clone();
    traj.occupations = Some(record);

    let dw = match compute_dw_syndrome(&bits).and_then(|s| dw_correct(&s, &config.decoder)) {
        Ok(x) => x,
        Err(e) => {
            fail(&mut traj, FailureStage::DensityWave, &e);
            return traj;
        }
    };
    traj.d_dw = dw.depth;
    traj.d_tot = dw.depth;
    let phase = dw.target_phase.unwrap_or(usize::from(bits[0] == 0));
    let corrected = crystal(bits.len(), phase);

    let (mut chain, mapped) = match spin_chain(&state, &bits, &corrected, stabs) {
        Ok(x) => x,
        Err(e) => {
            fail(&mut traj, FailureStage::Swap, &e);
            return traj;
        }
    };
    let active: Vec<StabilizerSpec> = mapped.iter().flatten().cloned().collect();
    let measured = match measure_stabilizers(&mut chain, &active, &mut rng) {
        Ok(r) => r,
        Err(e) => {
            fail(&mut traj, FailureStage::Stabilizers, &e);
            return traj;
        }
    };
    let mut it = measured.outcomes.iter();
    traj.syndromes.outcomes = mapped
        .iter()
        .map(|m| match m {
            Some(_) => *it.next().expect("one outcome per active stabilizer"),
            None => StabilizerOutcome::Skipped,
        })
        .collect();

    let length = active.iter().map(|s| s.position + 1).max().unwrap_or(0);
    let tc = match anyon_syndrome(&active, &measured, length).and_then(|s| tc_correct(&s, &config.decoder)) {
        Ok(x) => x,
        Err(e) => {
            fail(&mut traj, FailureStage::Toric, &e);
            return traj;
        }
    };
    let out = DecoderOutcome::new(dw, tc);
    traj.d_tc = out.d_tc;
    traj.d_tot = out.d_tot;
    traj.decoder = Some(out);
    traj
}

/// `m` trajectories on streams `0..m`, in stream order.
pub fn run_trajectories(ground: &MatrixProductState, stabs: &[StabilizerSpec], config: &SamplerConfig, m: usize) -> Vec<Trajectory> {
    let mut psi = ground.clone();
    // every trajectory would otherwise redo this
    if psi.canonicalize(0).is_err() {
        psi = ground.clone();
    }
    crate::parallel::par_map_range(m, |i| run_trajectory(&psi, stabs, config, i as u64))
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
}

impl MeanSem {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, sem: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, sem: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, sem: (var / n).sqrt() }
    }
}

/// Fold over finished trajectories; failed ones are counted, not averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub m: usize,
    pub failed: usize,
    pub rejected_samples: usize,
    pub d_dw: MeanSem,
    pub d_tc: MeanSem,
    pub d_tot: MeanSem,
}

impl DepthSummary {
    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let ok: Vec<&Trajectory> = trajs.iter().filter(|t| t.is_ok()).collect();
        Self {
            m: trajs.len(),
            failed: trajs.len() - ok.len(),
            rejected_samples: trajs.iter().map(|t| t.leakage_rejections).sum(),
            d_dw: MeanSem::of(ok.iter().map(|t| t.d_dw as f64)),
            d_tc: MeanSem::of(ok.iter().map(|t| t.d_tc as f64)),
            d_tot: MeanSem::of(ok.iter().map(|t| t.d_tot as f64)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, enumerate_stabilizers};
    use crate::tensor::TruncationPolicy;

    #[test]
    fn mean_and_standard_error() {
        let m = MeanSem::of([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.sem - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSem::of([7.0]), MeanSem { mean: 7.0, sem: 0.0 });
    }

    #[test]
    fn swaps_must_be_adjacent() {
        let mut psi = MatrixProductState::basis_state(&[2, 1, 2, 1], TruncationPolicy::exact()).unwrap();
        assert_eq!(apply_swap_plan(&mut psi, &[(0, 2)]), Err(SamplerError::NonAdjacentSwap(0, 2)));
        assert_eq!(apply_swap_plan(&mut psi, &[(3, 4)]), Err(SamplerError::NonAdjacentSwap(3, 4)));
    }

    #[test]
    fn measurement_order_is_by_position_then_kind() {
        let lat = build_lattice(6).unwrap();
        let stabs = enumerate_stabilizers(&lat);
        let order = measurement_order(&stabs);
        let keys: Vec<_> = order.iter().map(|&i| (stabs[i].position, stabs[i].kind)).collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        use rand::Rng;
        let a: u64 = trajectory_rng(7, 1).random();
        let b: u64 = trajectory_rng(7, 1).random();
        let c: u64 = trajectory_rng(7, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
