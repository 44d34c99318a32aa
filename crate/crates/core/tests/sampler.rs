//! Trajectory sampling against exact-diagonalization and dense-vector oracles.

use std::collections::BTreeMap;

use mtc_core::decoder::crystal;
use mtc_core::ed::{exact_ground_state, exact_marginals, GroundSpace};
use mtc_core::lattice::{build_lattice, enumerate_stabilizers, sigma_z, LadderLattice, ModelParams, StabilizerKind, DOWN, UP, VACANT};
use mtc_core::mps::{LocalOperator, MatrixProductState};
use mtc_core::sampler::*;
use mtc_core::tensor::{TruncationPolicy, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn ground(w: usize, t: f64) -> (LadderLattice, GroundSpace, MatrixProductState) {
    let lat = build_lattice(w).unwrap();
    let gs = exact_ground_state(&lat, &enumerate_stabilizers(&lat), &ModelParams::new(t)).unwrap();
    let mut psi = MatrixProductState::from_dense(&gs.basis.embed(&gs.vectors[0]), lat.len(), TruncationPolicy::exact()).unwrap();
    psi.canonicalize(0).unwrap();
    (lat, gs, psi)
}

fn index_of(digits: &[usize]) -> usize {
    digits.iter().fold(0, |a, &d| a * 3 + d)
}

/// Dense state: `crystal` occupations, spins drawn from `amp(spin pattern)`.
fn crystal_with_spins(n: usize, phase: usize, mut amp: impl FnMut(usize) -> C64) -> Vec<C64> {
    let occ = crystal(n, phase);
    let sites: Vec<usize> = (0..n).filter(|&p| occ[p] == 1).collect();
    let mut v = vec![ZERO; 3usize.pow(n as u32)];
    for pattern in 0..1usize << sites.len() {
        let mut d = vec![VACANT; n];
        for (k, &p) in sites.iter().enumerate() {
            d[p] = if pattern >> k & 1 == 1 { UP } else { DOWN };
        }
        v[index_of(&d)] = amp(pattern);
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    v
}

fn random_spins(n: usize, phase: usize, seed: u64) -> MatrixProductState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = crystal_with_spins(n, phase, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let mut psi = MatrixProductState::from_dense(&v, n, TruncationPolicy::exact()).unwrap();
    psi.canonicalize(0).unwrap();
    psi
}

#[test]
fn crystal_samples_are_certain() {
    let psi = random_spins(8, 0, 1);
    let mut rng = trajectory_rng(0, 0);
    let (rec, post, rejected) = sample_occupations(&psi, &mut rng, 10).unwrap();
    assert_eq!(rec.bits, vec![1, 0, 1, 0, 1, 0, 1, 0]);
    assert!(rec.probabilities.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    assert_eq!(rejected, 0);
    assert!((post.overlap(&psi).norm() - 1.0).abs() < 1e-10, "spin state disturbed");
}

#[test]
fn superposed_crystals_split_evenly() {
    let n = 8;
    let a = crystal_with_spins(n, 0, |p| C64::new(if p == 0 { 1.0 } else { 0.0 }, 0.0));
    let b = crystal_with_spins(n, 1, |p| C64::new(if p == 3 { 1.0 } else { 0.0 }, 0.0));
    let v: Vec<C64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2f64.sqrt()).collect();
    let psi = MatrixProductState::from_dense(&v, n, TruncationPolicy::exact()).unwrap();
    let m = 10_000;
    let mut first = 0;
    for s in 0..m {
        let (rec, _, _) = sample_occupations(&psi, &mut trajectory_rng(3, s), 10).unwrap();
        assert!(rec.bits == crystal(n, 0) || rec.bits == crystal(n, 1));
        first += usize::from(rec.bits == crystal(n, 0));
    }
    let f = first as f64 / m as f64;
    assert!((f - 0.5).abs() <= 3.0 * (0.25 / m as f64).sqrt(), "{f}");
}

/// Pearson statistic with expected counts below 5 pooled into one bin.
fn chi_square_p(observed: &BTreeMap<Vec<u8>, usize>, expected: &BTreeMap<Vec<u8>, f64>, m: usize) -> f64 {
    let mut stat = 0.0;
    let mut bins = 0;
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (key, &p) in expected {
        let e = p * m as f64;
        let o = observed.get(key).copied().unwrap_or(0) as f64;
        if e < 5.0 {
            pooled_o += o;
            pooled_e += e;
        } else {
            stat += (o - e).powi(2) / e;
            bins += 1;
        }
    }
    let unexpected: usize = observed.iter().filter(|(k, _)| !expected.contains_key(*k)).map(|(_, &c)| c).sum();
    assert_eq!(unexpected, 0, "sampled strings outside the exact support");
    if pooled_e > 0.0 {
        stat += (pooled_o - pooled_e).powi(2) / pooled_e;
        bins += 1;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn occupation_strings_follow_the_born_rule() {
    let (_, gs, psi) = ground(4, 0.5);
    let all: Vec<usize> = (0..8).collect();
    let expected = exact_marginals(&gs.basis, &gs.vectors[0], &all).unwrap();
    let m = 10_000;
    let mut observed: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    for s in 0..m {
        let (rec, _, _) = sample_occupations(&psi, &mut trajectory_rng(11, s as u64), 10).unwrap();
        *observed.entry(rec.bits).or_insert(0) += 1;
    }
    let p = chi_square_p(&observed, &expected, m);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn swap_plan_repairs_the_example_string() {
    let bits = [1, 0, 1, 1, 0, 0, 1, 0];
    let digits: Vec<usize> = bits.iter().map(|&b| if b == 1 { UP } else { VACANT }).collect();
    let mut psi = MatrixProductState::basis_state(&digits, TruncationPolicy::exact()).unwrap();
    apply_swap_plan(&mut psi, &[(3, 4)]).unwrap();
    let (rec, _, _) = sample_occupations(&psi, &mut trajectory_rng(0, 0), 1).unwrap();
    assert_eq!(rec.bits, vec![1, 0, 1, 0, 1, 0, 1, 0]);
}

#[test]
fn swaps_match_dense_permutation() {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut psi = MatrixProductState::random(n, 8, &mut rng, TruncationPolicy::exact()).unwrap();
    let before = psi.to_dense();
    let plan = [(2, 3), (3, 4), (0, 1), (6, 7)];
    apply_swap_plan(&mut psi, &plan).unwrap();
    let after = psi.to_dense();
    for (i, &amp) in before.iter().enumerate() {
        let mut d: Vec<usize> = (0..n).rev().map(|k| i / 3usize.pow(k as u32) % 3).collect();
        for &(p, q) in &plan {
            d.swap(p, q);
        }
        assert!((after[index_of(&d)] - amp).norm() < 1e-9);
    }
}

#[test]
fn ground_state_at_zero_hopping_has_no_violations() {
    let (lat, gs, _) = ground(4, 0.0);
    let stabs = enumerate_stabilizers(&lat);
    for v in &gs.vectors {
        let psi = MatrixProductState::from_dense(&gs.basis.embed(v), 8, TruncationPolicy::exact()).unwrap();
        for stream in 0..20 {
            let mut rng = trajectory_rng(5, stream);
            let (rec, mut post, _) = sample_occupations(&psi, &mut rng, 10).unwrap();
            let syn = measure_stabilizers(&mut post, &stabs, &mut rng).unwrap();
            for (s, o) in stabs.iter().zip(&syn.outcomes) {
                let occupied = s.sites.iter().all(|&p| rec.bits[p] == 1);
                assert_eq!(*o, if occupied { StabilizerOutcome::Plus } else { StabilizerOutcome::Skipped });
            }
            let traj = run_trajectory(&psi, &stabs, &SamplerConfig::default(), stream);
            assert!(traj.is_ok(), "{:?}", traj.failure);
            assert_eq!((traj.d_dw, traj.d_tc, traj.d_tot), (0, 0, 0));
        }
    }
}

#[test]
fn sigma_z_flips_the_two_neighbouring_a_stabilizers() {
    let (lat, gs, _) = ground(6, 0.0);
    let stabs = enumerate_stabilizers(&lat);
    let psi = MatrixProductState::from_dense(&gs.basis.embed(&gs.vectors[0]), 12, TruncationPolicy::exact()).unwrap();
    let mut rng = trajectory_rng(9, 0);
    let (rec, mut post, _) = sample_occupations(&psi, &mut rng, 10).unwrap();
    let sub = usize::from(rec.bits[0] == 0);
    let zz = lat.zigzag(sub);
    post.apply_local(&LocalOperator::single(zz[2], &sigma_z())).unwrap();
    for stream in 0..5 {
        let mut state = post.clone();
        let syn = measure_stabilizers(&mut state, &stabs, &mut trajectory_rng(9, stream)).unwrap();
        for (s, o) in stabs.iter().zip(&syn.outcomes) {
            let want = if s.sublattice != sub {
                StabilizerOutcome::Skipped
            } else if s.kind == StabilizerKind::A && (s.position == 0 || s.position == 2) {
                StabilizerOutcome::Minus
            } else {
                StabilizerOutcome::Plus
            };
            assert_eq!(*o, want, "{s:?}");
        }
    }
}

#[test]
fn misplaced_particles_cost_density_wave_depth_only() {
    let (lat, gs, _) = ground(4, 0.0);
    let stabs = enumerate_stabilizers(&lat);
    let psi = MatrixProductState::from_dense(&gs.basis.embed(&gs.vectors[0]), 8, TruncationPolicy::exact()).unwrap();
    let (rec, mut post, _) = sample_occupations(&psi, &mut trajectory_rng(1, 0), 10).unwrap();
    // move the particle nearest the middle onto the other sublattice
    let p = (3..5).find(|&p| rec.bits[p] == 1).unwrap();
    apply_swap_plan(&mut post, &[(p, p + 1)]).unwrap();
    for stream in 0..10 {
        let traj = run_trajectory(&post, &stabs, &SamplerConfig::default(), stream);
        assert!(traj.is_ok(), "{:?}", traj.failure);
        assert!(traj.d_dw >= 1);
        assert_eq!(traj.d_tc, 0);
    }
}

#[test]
fn trajectories_are_reproducible() {
    let (lat, _, psi) = ground(4, 0.5);
    let stabs = enumerate_stabilizers(&lat);
    let cfg = SamplerConfig { seed: 77, ..SamplerConfig::default() };
    for stream in 0..10 {
        assert_eq!(run_trajectory(&psi, &stabs, &cfg, stream), run_trajectory(&psi, &stabs, &cfg, stream));
    }
}

/// The trajectory measures stabilizers on the spin chain left after removing
/// holes; the same stream replayed on the full corrected MPS must agree.
#[test]
fn spin_chain_route_matches_full_state_route() {
    let (lat, _, psi) = ground(4, 0.5);
    let stabs = enumerate_stabilizers(&lat);
    let cfg = SamplerConfig::default();
    let mut agree = 0;
    let m = 200;
    for stream in 0..m {
        let traj = run_trajectory(&psi, &stabs, &cfg, stream);
        assert!(traj.is_ok(), "{:?}", traj.failure);
        let mut rng = trajectory_rng(cfg.seed, stream);
        let (_, mut post, _) = sample_occupations(&psi, &mut rng, cfg.max_leakage_attempts).unwrap();
        apply_swap_plan(&mut post, &traj.decoder.as_ref().unwrap().swap_plan).unwrap();
        let syn = measure_stabilizers(&mut post, &stabs, &mut rng).unwrap();
        agree += usize::from(syn == traj.syndromes);
    }
    assert!(agree + 2 >= m as usize, "{agree}/{m}");
}

fn syndrome_histogram(records: impl Iterator<Item = SyndromeRecord>) -> BTreeMap<Vec<StabilizerOutcome>, usize> {
    let mut h = BTreeMap::new();
    for r in records {
        *h.entry(r.outcomes).or_insert(0) += 1;
    }
    h
}

#[test]
fn occupation_measurement_does_not_disturb_syndromes() {
    let lat = build_lattice(4).unwrap();
    let stabs = enumerate_stabilizers(&lat);
    let psi = random_spins(8, 0, 21);
    let m = 5000u64;
    let direct = syndrome_histogram((0..m).map(|s| {
        let mut state = psi.clone();
        measure_stabilizers(&mut state, &stabs, &mut trajectory_rng(2, s)).unwrap()
    }));
    let cfg = SamplerConfig { seed: 3, ..SamplerConfig::default() };
    let via = syndrome_histogram((0..m).map(|s| run_trajectory(&psi, &stabs, &cfg, s).syndromes));
    let keys: std::collections::BTreeSet<_> = direct.keys().chain(via.keys()).collect();
    let tv: f64 = keys
        .into_iter()
        .map(|k| (*direct.get(k).unwrap_or(&0) as f64 - *via.get(k).unwrap_or(&0) as f64).abs() / m as f64)
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.05, "total variation {tv}");
}

fn shared_ground() -> &'static (LadderLattice, GroundSpace, MatrixProductState) {
    static CELL: std::sync::OnceLock<(LadderLattice, GroundSpace, MatrixProductState)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| ground(4, 0.7))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn depths_add_up(stream in 0u64..1_000_000, seed in 0u64..1000) {
        let (lat, _, psi) = shared_ground();
        let stabs = enumerate_stabilizers(lat);
        let traj = run_trajectory(psi, &stabs, &SamplerConfig { seed, ..SamplerConfig::default() }, stream);
        prop_assert!(traj.is_ok());
        prop_assert_eq!(traj.d_tot, traj.d_dw + traj.d_tc);
        let bits = &traj.occupations.as_ref().unwrap().bits;
        prop_assert_eq!(2 * bits.iter().filter(|&&b| b == 1).count(), bits.len());
    }
}
