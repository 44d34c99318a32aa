//! Leg entanglement against hand-built states and exact ground vectors.

use std::time::Instant;

use mtc_core::ed::exact_ground_state;
use mtc_core::lattice::{build_lattice, enumerate_stabilizers, ModelParams, DOWN, UP, VACANT};
use mtc_core::mps::MatrixProductState;
use mtc_core::tee::*;
use mtc_core::tensor::{TruncationPolicy, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN2: f64 = std::f64::consts::LN_2;

fn index_of(digits: &[usize]) -> usize {
    digits.iter().fold(0, |a, &d| a * 3 + d)
}

/// `k` rungs in `(|↑↓⟩ + |↓↑⟩)/√2`, every other rung holding one up spin on top.
fn entangled_rungs(w: usize, k: usize) -> MatrixProductState {
    let lat = build_lattice(w).unwrap();
    let n = lat.len();
    let mut v = vec![C64::new(0.0, 0.0); 3usize.pow(n as u32)];
    let amp = C64::new((0.5f64).powf(k as f64 / 2.0), 0.0);
    for pattern in 0..1usize << k {
        let mut d = vec![VACANT; n];
        for c in 0..w {
            let (top, bottom) = (lat.position(0, c), lat.position(1, c));
            if c < k {
                let flip = pattern >> c & 1 == 1;
                d[top] = if flip { UP } else { DOWN };
                d[bottom] = if flip { DOWN } else { UP };
            } else {
                d[top] = UP;
            }
        }
        v[index_of(&d)] = amp;
    }
    MatrixProductState::from_dense(&v, n, TruncationPolicy::exact()).unwrap()
}

#[test]
fn product_state_has_no_leg_entropy() {
    let lat = build_lattice(4).unwrap();
    let digits: Vec<usize> = (0..8).map(|p| if p % 2 == 0 { UP } else { VACANT }).collect();
    let psi = MatrixProductState::basis_state(&digits, TruncationPolicy::exact()).unwrap();
    let rho = leg_reduced_density_matrix(&psi, &lat).unwrap();
    // rank-1 projector
    let tr2: f64 = (0..rho.nrows())
        .flat_map(|i| (0..rho.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (rho[(i, j)] * rho[(j, i)]).re)
        .sum();
    assert!((tr2 - 1.0).abs() < 1e-12);
    assert!(leg_entropy(&psi, &lat).unwrap().1.abs() < 1e-12);
}

#[test]
fn entangled_rungs_add_log_two_each() {
    for k in 0..=4 {
        let psi = entangled_rungs(4, k);
        let (l, s) = leg_entropy(&psi, &build_lattice(4).unwrap()).unwrap();
        assert_eq!(l, 4);
        assert!((s - k as f64 * LN2).abs() < 1e-9, "k={k}: {s}");
    }
}

#[test]
fn density_matrix_is_a_state() {
    let lat = build_lattice(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let psi = MatrixProductState::random(8, 6, &mut rng, TruncationPolicy::exact()).unwrap();
    let rho = leg_reduced_density_matrix(&psi, &lat).unwrap();
    let trace: f64 = (0..rho.nrows()).map(|i| rho[(i, i)].re).sum();
    assert!((trace - 1.0).abs() < 1e-9);
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            assert!((rho[(i, j)] - rho[(j, i)].conj()).norm() < 1e-10);
        }
    }
    assert!(entropy_of(&rho).unwrap() >= 0.0);
}

/// Partial trace computed straight from the sector amplitudes.
#[test]
fn ground_state_entropy_matches_exact_partial_trace() {
    let lat = build_lattice(4).unwrap();
    let gs = exact_ground_state(&lat, &enumerate_stabilizers(&lat), &ModelParams::new(0.0)).unwrap();
    let top = lat.top_leg();
    let bottom: Vec<usize> = (0..4).map(|c| lat.position(1, c)).collect();
    for v in &gs.vectors {
        let mut rho = faer::Mat::<C64>::zeros(81, 81);
        for (i, a) in v.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                let (di, dj) = (gs.basis.digits(i), gs.basis.digits(j));
                if bottom.iter().any(|&p| di[p] != dj[p]) {
                    continue;
                }
                let ti = index_of(&top.iter().map(|&p| di[p]).collect::<Vec<_>>());
                let tj = index_of(&top.iter().map(|&p| dj[p]).collect::<Vec<_>>());
                rho[(ti, tj)] += a * b.conj();
            }
        }
        let want = entropy_of(&rho).unwrap();
        let psi = MatrixProductState::from_dense(&gs.basis.embed(v), 8, TruncationPolicy::exact()).unwrap();
        let got = leg_entropy(&psi, &lat).unwrap().1;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        let mps_rho = leg_reduced_density_matrix(&psi, &lat).unwrap();
        assert!((0..81).all(|i| (0..81).all(|j| (mps_rho[(i, j)] - rho[(i, j)]).norm() < 1e-9)));
    }
}

#[test]
fn budget_and_cut_limits_are_enforced() {
    let lat = build_lattice(4).unwrap();
    let psi = entangled_rungs(4, 1);
    assert!(matches!(leg_rdm_with_budget(&psi, &lat, 1000), Err(TeeError::OverBudget { .. })));
    let other = build_lattice(5).unwrap();
    assert!(matches!(leg_reduced_density_matrix(&psi, &other), Err(TeeError::SizeMismatch { .. })));
}

#[test]
fn cost_grows_exponentially_with_the_cut() {
    let time = |w: usize| {
        let lat = build_lattice(w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
        let psi = MatrixProductState::random(2 * w, 8, &mut rng, TruncationPolicy::exact()).unwrap();
        let start = Instant::now();
        leg_entropy(&psi, &lat).unwrap();
        start.elapsed().as_secs_f64()
    };
    let small = (0..5).map(|_| time(4)).fold(f64::INFINITY, f64::min);
    let large = time(6);
    assert!(large / small >= 10.0, "{large} / {small}");
}

#[test]
fn csv_export_has_the_fit_columns() {
    let curve = EntropyCurve::new(
        0.0,
        (4..8).map(|l| EntropyPoint { n: 2 * l, l, s: 0.5 * l as f64 - LN2 }).collect(),
    );
    let mut out = Vec::new();
    curve.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,N,L,S,alpha,gamma,residual"));
    assert_eq!(lines.count(), 4);
    assert!((curve.fit.unwrap().gamma - LN2).abs() < 1e-12);
}
