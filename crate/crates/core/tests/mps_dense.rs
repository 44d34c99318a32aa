//! MPS operations checked against a brute-force state-vector implementation.

use mtc_core::lattice::{n_occ, sigma_x, sigma_z, swap_matrix, vacancy, Op3, UP, VACANT};
use mtc_core::mps::{LocalOperator, MatrixProductState};
use mtc_core::tensor::{hermitian_eigendecomposition, DenseTensor, TruncationPolicy, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn random_mps(n: usize, chi: usize, seed: u64) -> MatrixProductState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MatrixProductState::random(n, chi, &mut rng, TruncationPolicy::exact()).unwrap()
}

fn digits(mut idx: usize, n: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for k in (0..n).rev() {
        d[k] = idx % 3;
        idx /= 3;
    }
    d
}

fn index(d: &[usize]) -> usize {
    d.iter().fold(0, |a, &x| a * 3 + x)
}

/// `(M ⊗ 1)|v⟩` by explicit enumeration of basis states.
fn dense_apply(v: &[C64], n: usize, sites: &[usize], m: &[C64]) -> Vec<C64> {
    let w = sites.len();
    let dim = 3usize.pow(w as u32);
    let mut out = vec![ZERO; v.len()];
    for (idx, &amp) in v.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let d = digits(idx, n);
        let col = sites.iter().fold(0, |a, &s| a * 3 + d[s]);
        for row in 0..dim {
            let x = m[row * dim + col];
            if x == ZERO {
                continue;
            }
            let mut e = d.clone();
            let rd = digits(row, w);
            for (i, &s) in sites.iter().enumerate() {
                e[s] = rd[i];
            }
            out[index(&e)] += x * amp;
        }
    }
    out
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalized(v: Vec<C64>) -> Vec<C64> {
    let n = inner(&v, &v).re.sqrt();
    v.into_iter().map(|z| z / n).collect()
}

fn op_matrix(op: &Op3) -> Vec<C64> {
    op.iter().flatten().copied().collect()
}

fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    let da = (a.len() as f64).sqrt() as usize;
    let db = (b.len() as f64).sqrt() as usize;
    let d = da * db;
    let mut out = vec![ZERO; d * d];
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k) * d + j * db + l] = a[i * da + j] * b[k * db + l];
                }
            }
        }
    }
    out
}

/// Entropy of sites `0..=bond` from the eigenvalues of the dense reduced density matrix.
fn dense_entropy(v: &[C64], n: usize, bond: usize) -> f64 {
    let rows = 3usize.pow(bond as u32 + 1);
    let cols = 3usize.pow((n - bond - 1) as u32);
    let rho = DenseTensor::from_fn(vec![rows, rows], |i| {
        (0..cols).map(|c| v[i[0] * cols + c] * v[i[1] * cols + c].conj()).sum()
    });
    let (vals, _) = hermitian_eigendecomposition(&rho).unwrap();
    vals.iter().filter(|&&x| x > 0.0).map(|x| -x * x.ln()).sum()
}

#[test]
fn canonicalize_preserves_the_vector() {
    let psi = random_mps(6, 4, 10);
    let dense = psi.to_dense();
    let mut moved = psi.clone();
    moved.canonicalize(0).unwrap();
    moved.canonicalize(5).unwrap();
    assert_eq!(moved.center(), Some(5));
    let ov = inner(&dense, &moved.to_dense()).norm();
    assert!(ov >= 1.0 - 1e-9, "overlap {ov}");
}

#[test]
fn left_and_right_isometries_after_canonicalize() {
    let mut psi = random_mps(7, 5, 11);
    psi.canonicalize(3).unwrap();
    for k in 0..7 {
        let t = psi.tensor(k);
        let (l, r) = (t.shape()[0], t.shape()[2]);
        if k < 3 {
            let m = t.as_mat(2);
            let g = m.adjoint() * m;
            for i in 0..r {
                for j in 0..r {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - C64::new(e, 0.0)).norm() < 1e-9);
                }
            }
        } else if k > 3 {
            let m = t.as_mat(1);
            let g = m * m.adjoint();
            for i in 0..l {
                for j in 0..l {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - C64::new(e, 0.0)).norm() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn swap_gate_matches_dense_swap() {
    let mut psi = random_mps(6, 8, 12);
    let dense = psi.to_dense();
    psi.apply_local(&LocalOperator::swap(2, 3).unwrap()).unwrap();
    let expect = dense_apply(&dense, 6, &[2, 3], &swap_matrix());
    let got = psi.to_dense();
    let err: f64 = got.iter().zip(&expect).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn non_adjacent_operator_matches_dense() {
    let mut psi = random_mps(7, 6, 13);
    let dense = psi.to_dense();
    let op = LocalOperator::product(&[(1, sigma_x()), (3, sigma_z()), (6, n_occ())]).unwrap();
    let m = op.matrix().to_vec();
    psi.apply_local(&op).unwrap();
    let expect = normalized(dense_apply(&dense, 7, &[1, 3, 6], &m));
    let ov = inner(&expect, &psi.to_dense()).norm();
    assert!((ov - 1.0).abs() < 1e-9, "{ov}");
    assert!((psi.norm() - 1.0).abs() < 1e-9);
}

#[test]
fn identity_operator_is_harmless() {
    let mut psi = random_mps(5, 4, 14);
    let before = psi.clone();
    psi.apply_local(&LocalOperator::identity(vec![1, 2, 3]).unwrap()).unwrap();
    assert!((psi.overlap(&before).norm() - 1.0).abs() < 1e-10);
}

#[test]
fn stabilizer_expectation_matches_dense() {
    let psi = random_mps(8, 6, 15);
    let dense = psi.to_dense();
    for (sites, p) in [([0, 2, 4], sigma_x()), ([3, 5, 7], sigma_z()), ([2, 3, 4], sigma_x())] {
        let op = LocalOperator::product(&sites.map(|s| (s, p))).unwrap();
        let got = psi.expectation(&op).unwrap();
        let expect = inner(&dense, &dense_apply(&dense, 8, &sites, op.matrix()));
        assert!((got - expect).norm() < 1e-10, "{got} vs {expect}");
        assert!(got.im.abs() < 1e-10);
    }
}

#[test]
fn expectation_without_known_center() {
    let psi = random_mps(6, 5, 16);
    let dense = psi.to_dense();
    let reloaded = MatrixProductState::from_tensors(psi.tensors().to_vec(), TruncationPolicy::exact()).unwrap();
    assert_eq!(reloaded.center(), None);
    let m = kron(&op_matrix(&sigma_x()), &op_matrix(&n_occ()));
    let op = LocalOperator::new(vec![3, 4], m.clone()).unwrap();
    let expect = inner(&dense, &dense_apply(&dense, 6, &[3, 4], &m));
    assert!((reloaded.expectation(&op).unwrap() - expect).norm() < 1e-10);
}

#[test]
fn bond_entropy_matches_dense_density_matrix() {
    let psi = random_mps(6, 9, 17);
    let dense = psi.to_dense();
    for bond in 0..5 {
        let got = psi.bond_entropy(bond).unwrap();
        let expect = dense_entropy(&dense, 6, bond);
        assert!((got - expect).abs() < 1e-9, "bond {bond}: {got} vs {expect}");
    }
}

#[test]
fn dense_round_trip() {
    let psi = random_mps(5, 9, 18);
    let dense = psi.to_dense();
    let back = MatrixProductState::from_dense(&dense, 5, TruncationPolicy::exact()).unwrap();
    assert!((inner(&dense, &back.to_dense()).norm() - 1.0).abs() < 1e-10);
}

#[test]
fn superposition_measurement_statistics() {
    let h = C64::new(1.0, 0.0);
    let mut counts = 0usize;
    let m = 10_000;
    let set = [LocalOperator::single(0, &n_occ()), LocalOperator::single(0, &vacancy())];
    let base = MatrixProductState::product_state(&[[ZERO, h, h]], TruncationPolicy::exact()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..m {
        let mut psi = base.clone();
        let r = psi.measure_projective(&set, &mut rng).unwrap();
        assert!((r.probability - 0.5).abs() < 1e-12);
        counts += usize::from(r.outcome == 0);
    }
    let sigma = (m as f64 * 0.25).sqrt();
    assert!(((counts as f64) - 5000.0).abs() < 3.0 * sigma, "{counts}");
}

#[test]
fn removing_vacant_sites_keeps_the_rest() {
    // |↑⟩|0⟩ ⊗ random ⊗ |0⟩ collapses to |↑⟩ ⊗ random
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut v3 = [ZERO; 3];
    v3.iter_mut()
        .for_each(|z| *z = C64::new(rng.random::<f64>(), rng.random::<f64>()));
    let psi = MatrixProductState::product_state(
        &[
            [ZERO, ZERO, C64::new(1.0, 0.0)],
            [ZERO, C64::new(1.0, 0.0), ZERO],
            v3,
            [ZERO, C64::new(1.0, 0.0), ZERO],
        ],
        TruncationPolicy::exact(),
    )
    .unwrap();
    let (reduced, norm) = psi.remove_sites(&[(1, VACANT), (3, VACANT)]).unwrap();
    assert!((norm - 1.0).abs() < 1e-12);
    assert_eq!(reduced.len(), 2);
    let up = reduced
        .expectation(&LocalOperator::single(0, &{
            let mut p = [[ZERO; 3]; 3];
            p[UP][UP] = C64::new(1.0, 0.0);
            p
        }))
        .unwrap();
    assert!((up.re - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_preserved_by_random_gates(seed in 0u64..1000, first in 0usize..4, width in 1usize..=3) {
        let mut psi = random_mps(7, 6, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let dim = 3usize.pow(width as u32);
        let m: Vec<C64> = (0..dim * dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let sites: Vec<usize> = (first..first + width).collect();
        let dense = psi.to_dense();
        psi.apply_local(&LocalOperator::new(sites.clone(), m.clone()).unwrap()).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() <= 1e-9);
        let expect = normalized(dense_apply(&dense, 7, &sites, &m));
        let ov = inner(&expect, &psi.to_dense()).norm();
        prop_assert!((ov - 1.0).abs() < 1e-8);
        // Schmidt spectra stay normalized at every bond.
        for b in 0..6 {
            let s = psi.clone().schmidt_values(b).unwrap();
            prop_assert!((s.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn measurement_probabilities_sum_to_one(seed in 0u64..1000, site in 0usize..6) {
        let mut psi = random_mps(6, 5, seed);
        let p = psi.site_probabilities(site, &[n_occ(), vacancy()]).unwrap();
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
    }
}
