//! Exact diagonalization in the half-filling sector.
//!
//! The Hamiltonian is assembled here directly from the lattice bonds and the
//! stabilizer list, without going through the MPO, so the two constructions
//! check each other.

use std::collections::{BTreeMap, HashMap};

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eigensolver::{lowest_eigenpair, EigenError, LanczosConfig};
use crate::lattice::{LadderLattice, ModelParams, StabilizerKind, StabilizerSpec, DOWN, UP, VACANT};
use crate::tensor::{eigh_mat, thin_svd, von_neumann, TensorError, C64, ZERO};

/// Largest chain handled by the oracle.
pub const MAX_SITES: usize = 12;
/// Sectors up to this size are diagonalized densely.
const DENSE_LIMIT: usize = 4000;
/// Eigenvalues within this distance of the lowest count as degenerate.
const DEGENERACY_TOL: f64 = 1e-7;
const MAX_DEGENERACY: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdError {
    #[error("{sites} sites exceed the exact-diagonalization cap of {cap}")]
    TooLarge { sites: usize, cap: usize },
    #[error("subset of {size} sites exceeds the cap of {cap}")]
    SubsetTooLarge { size: usize, cap: usize },
    #[error("chain length must be even, got {0}")]
    OddLength(usize),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Configurations with exactly `N/2` occupied sites, as base-3 codes with
/// site 0 the most significant digit (the MPS dense-vector order).
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBasis {
    n: usize,
    codes: Vec<u64>,
}

impl SectorBasis {
    pub fn half_filling(n: usize) -> Result<Self, EdError> {
        if n % 2 != 0 {
            return Err(EdError::OddLength(n));
        }
        if n > 2 * MAX_SITES {
            return Err(EdError::TooLarge { sites: n, cap: MAX_SITES });
        }
        let mut codes = Vec::new();
        let mut digits = vec![VACANT; n];
        fill(&mut digits, 0, n / 2, &mut codes);
        codes.sort_unstable();
        Ok(Self { n, codes })
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, i: usize) -> u64 {
        self.codes[i]
    }

    pub fn index_of(&self, code: u64) -> Option<usize> {
        self.codes.binary_search(&code).ok()
    }

    pub fn digits(&self, i: usize) -> Vec<usize> {
        decode(self.codes[i], self.n)
    }

    /// Embeds a sector vector into the full `3^N` space.
    pub fn embed(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; 3usize.pow(self.n as u32)];
        for (i, &c) in self.codes.iter().enumerate() {
            out[c as usize] = v[i];
        }
        out
    }

    /// Restricts a full-space vector to the sector.
    pub fn restrict(&self, full: &[C64]) -> Vec<C64> {
        self.codes.iter().map(|&c| full[c as usize]).collect()
    }
}

fn fill(digits: &mut [usize], from: usize, remaining: usize, out: &mut Vec<u64>) {
    let n = digits.len();
    if remaining == 0 {
        out.push(encode(digits));
        return;
    }
    if n - from < remaining {
        return;
    }
    for spin in [DOWN, UP] {
        digits[from] = spin;
        fill(digits, from + 1, remaining - 1, out);
    }
    digits[from] = VACANT;
    fill(digits, from + 1, remaining, out);
}

fn encode(d: &[usize]) -> u64 {
    d.iter().fold(0u64, |a, &x| a * 3 + x as u64)
}

fn decode(mut code: u64, n: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for k in (0..n).rev() {
        d[k] = (code % 3) as usize;
        code /= 3;
    }
    d
}

fn flip(d: usize) -> usize {
    match d {
        UP => DOWN,
        DOWN => UP,
        other => other,
    }
}

/// Off-diagonal and diagonal actions of every Hamiltonian term on one
/// configuration, excluding the penalty. Calls `emit(new_digits, amplitude)`.
fn act(digits: &[usize], lat: &LadderLattice, stabs: &[StabilizerSpec], t: f64, mut emit: impl FnMut(&[usize], f64)) {
    for s in stabs {
        if s.sites.iter().any(|&p| digits[p] == VACANT) {
            continue;
        }
        match s.kind {
            StabilizerKind::A => {
                let mut e = digits.to_vec();
                s.sites.iter().for_each(|&p| e[p] = flip(e[p]));
                emit(&e, -1.0);
            }
            StabilizerKind::B => {
                let sign: f64 = s.sites.iter().map(|&p| if digits[p] == UP { 1.0 } else { -1.0 }).product();
                emit(digits, -sign);
            }
        }
    }
    if t != 0.0 {
        for &(i, j) in lat.bonds() {
            let (a, b) = (digits[i], digits[j]);
            if (a == VACANT) != (b == VACANT) {
                let mut e = digits.to_vec();
                e.swap(i, j);
                emit(&e, -t);
            }
        }
    }
}

/// Sparse sector Hamiltonian, one row of `(column, value)` per basis state.
#[derive(Debug, Clone)]
pub struct SectorHamiltonian {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SectorHamiltonian {
    pub fn build(lat: &LadderLattice, stabs: &[StabilizerSpec], params: &ModelParams, basis: &SectorBasis) -> Self {
        let rows = (0..basis.len())
            .map(|i| {
                let d = basis.digits(i);
                let mut row: BTreeMap<usize, f64> = BTreeMap::new();
                act(&d, lat, stabs, params.t, |e, amp| {
                    let j = basis.index_of(encode(e)).expect("terms conserve particle number");
                    *row.entry(j).or_insert(0.0) += amp;
                });
                row.into_iter().filter(|(_, v)| *v != 0.0).collect()
            })
            .collect();
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(j, v)| x[j] * v).sum();
        }
    }

    pub fn element(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn expectation(&self, v: &[C64]) -> f64 {
        let mut hv = vec![ZERO; v.len()];
        self.apply(v, &mut hv);
        v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// `H|v⟩` on the full `3^N` space, penalty included.
pub fn apply_hamiltonian_full(lat: &LadderLattice, stabs: &[StabilizerSpec], params: &ModelParams, v: &[C64]) -> Vec<C64> {
    let n = lat.len();
    let mut out = vec![ZERO; v.len()];
    for (code, &amp) in v.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let d = decode(code as u64, n);
        let occ = d.iter().filter(|&&x| x != VACANT).count() as f64;
        let dev = occ - n as f64 / 2.0;
        out[code] += amp * params.lambda * dev * dev;
        act(&d, lat, stabs, params.t, |e, a| out[encode(e) as usize] += amp * a);
    }
    out
}

/// Lowest energy and an orthonormal basis of the (possibly degenerate)
/// ground space, as sector vectors.
#[derive(Debug, Clone)]
pub struct GroundSpace {
    pub energy: f64,
    pub energies: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
    pub basis: SectorBasis,
    /// Largest `‖Hv − Ev‖` over the returned vectors.
    pub residual: f64,
}

impl GroundSpace {
    pub fn degeneracy(&self) -> usize {
        self.vectors.len()
    }

    /// `⟨φ|P_ground|φ⟩` for a sector vector `φ`.
    pub fn projector_weight(&self, phi: &[C64]) -> f64 {
        self.vectors
            .iter()
            .map(|v| v.iter().zip(phi).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr())
            .sum()
    }
}

pub fn exact_ground_state(lat: &LadderLattice, stabs: &[StabilizerSpec], params: &ModelParams) -> Result<GroundSpace, EdError> {
    let n = lat.len();
    if n > MAX_SITES {
        return Err(EdError::TooLarge { sites: n, cap: MAX_SITES });
    }
    let basis = SectorBasis::half_filling(n)?;
    let h = SectorHamiltonian::build(lat, stabs, params, &basis);
    let dim = h.dim();
    let (energies, vectors) = if dim <= DENSE_LIMIT {
        let m = Mat::<C64>::from_fn(dim, dim, |i, j| C64::new(h.element(i, j), 0.0));
        let (vals, vecs) = eigh_mat(m.as_ref())?;
        let e0 = vals[dim - 1];
        let mut energies = Vec::new();
        let mut vectors = Vec::new();
        for k in (0..dim).rev() {
            if vals[k] - e0 > DEGENERACY_TOL || energies.len() == MAX_DEGENERACY {
                break;
            }
            energies.push(vals[k]);
            vectors.push((0..dim).map(|i| vecs[(i, k)]).collect::<Vec<_>>());
        }
        (energies, vectors)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let cfg = LanczosConfig {
            tol: 1e-11,
            max_iter: 20_000,
            krylov_dim: 40,
        };
        let mut energies: Vec<f64> = Vec::new();
        let mut vectors: Vec<Vec<C64>> = Vec::new();
        while vectors.len() < MAX_DEGENERACY {
            let start: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, 0.0)).collect();
            let pair = lowest_eigenpair(|x, y| h.apply(x, y), &start, &vectors, &cfg)?;
            if let Some(&e0) = energies.first() {
                if pair.value - e0 > DEGENERACY_TOL {
                    break;
                }
            }
            energies.push(pair.value);
            vectors.push(pair.vector);
        }
        (energies, vectors)
    };
    let residual = vectors
        .iter()
        .zip(&energies)
        .map(|(v, &e)| {
            let mut hv = vec![ZERO; dim];
            h.apply(v, &mut hv);
            hv.iter().zip(v).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    Ok(GroundSpace {
        energy: energies[0],
        energies,
        vectors,
        basis,
        residual,
    })
}

/// Probability of every occupation pattern (1 occupied, 0 empty) on `subset`.
pub fn exact_marginals(basis: &SectorBasis, v: &[C64], subset: &[usize]) -> Result<BTreeMap<Vec<u8>, f64>, EdError> {
    if subset.len() > 2 * MAX_SITES {
        return Err(EdError::SubsetTooLarge {
            size: subset.len(),
            cap: 2 * MAX_SITES,
        });
    }
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let mut table = BTreeMap::new();
    for (i, amp) in v.iter().enumerate() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let d = basis.digits(i);
        let key: Vec<u8> = subset.iter().map(|&s| u8::from(d[s] != VACANT)).collect();
        *table.entry(key).or_insert(0.0) += p / norm;
    }
    Ok(table)
}

/// Von Neumann entropy of the reduced state on `subset`.
pub fn exact_entropy(basis: &SectorBasis, v: &[C64], subset: &[usize]) -> Result<f64, EdError> {
    const CAP: usize = 10;
    if subset.len() > CAP {
        return Err(EdError::SubsetTooLarge {
            size: subset.len(),
            cap: CAP,
        });
    }
    let n = basis.sites();
    let mut inside = vec![false; n];
    subset.iter().for_each(|&s| inside[s] = true);
    // The reduced state is block diagonal in the subset's particle number.
    let mut blocks: BTreeMap<usize, (HashMap<u64, usize>, HashMap<u64, usize>, Vec<(usize, usize, C64)>)> =
        BTreeMap::new();
    for (i, &amp) in v.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let d = basis.digits(i);
        let a = encode(&subset.iter().map(|&s| d[s]).collect::<Vec<_>>());
        let rest: Vec<usize> = (0..n).filter(|&s| !inside[s]).map(|s| d[s]).collect();
        let b = encode(&rest);
        let k = subset.iter().filter(|&&s| d[s] != VACANT).count();
        let (rows, cols, entries) = blocks.entry(k).or_default();
        let nr = rows.len();
        let r = *rows.entry(a).or_insert(nr);
        let nc = cols.len();
        let c = *cols.entry(b).or_insert(nc);
        entries.push((r, c, amp));
    }
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let mut weights = Vec::new();
    for (rows, cols, entries) in blocks.values() {
        let mut m = Mat::<C64>::zeros(rows.len(), cols.len());
        for &(r, c, a) in entries {
            m[(r, c)] = a;
        }
        let (_, s, _) = thin_svd(m.as_ref())?;
        weights.extend(s.iter().map(|x| x * x / norm));
    }
    Ok(von_neumann(weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, enumerate_stabilizers};

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn sector_sizes() {
        for n in [4, 6, 8] {
            let b = SectorBasis::half_filling(n).unwrap();
            assert_eq!(b.len(), binomial(n, n / 2) << (n / 2));
            for i in 0..b.len() {
                assert_eq!(b.index_of(b.code(i)), Some(i));
            }
        }
    }

    #[test]
    fn sector_hamiltonian_is_symmetric() {
        let lat = build_lattice(4).unwrap();
        let stabs = enumerate_stabilizers(&lat);
        let basis = SectorBasis::half_filling(8).unwrap();
        let h = SectorHamiltonian::build(&lat, &stabs, &ModelParams::new(0.37), &basis);
        for i in 0..h.dim() {
            for &(j, v) in &h.rows[i] {
                assert_eq!(h.element(j, i), v);
            }
        }
    }

    #[test]
    fn zero_hopping_energy_and_crystals() {
        let lat = build_lattice(4).unwrap();
        let stabs = enumerate_stabilizers(&lat);
        let gs = exact_ground_state(&lat, &stabs, &ModelParams::new(0.0)).unwrap();
        assert!((gs.energy + 2.0).abs() < 1e-10);
        assert!(gs.residual < 1e-9);
        // Both crystal sectors contain a ground state.
        for sub in 0..2 {
            let weight: f64 = gs
                .vectors
                .iter()
                .map(|v| {
                    v.iter()
                        .enumerate()
                        .filter(|(i, _)| {
                            gs.basis
                                .digits(*i)
                                .iter()
                                .enumerate()
                                .all(|(p, &d)| (d != VACANT) == (lat.sublattice(p) == sub))
                        })
                        .map(|(_, a)| a.norm_sqr())
                        .sum::<f64>()
                })
                .sum();
            assert!(weight > 0.5, "sector {sub}: {weight}");
        }
    }

    #[test]
    fn energy_is_continuous_in_t() {
        let lat = build_lattice(4).unwrap();
        let stabs = enumerate_stabilizers(&lat);
        let e0 = exact_ground_state(&lat, &stabs, &ModelParams::new(0.0)).unwrap().energy;
        let e1 = exact_ground_state(&lat, &stabs, &ModelParams::new(0.01)).unwrap().energy;
        assert!((e1 - e0).abs() <= 0.1);
    }

    #[test]
    fn entropy_of_simple_states() {
        let basis = SectorBasis::half_filling(2).unwrap();
        let mut v = vec![ZERO; basis.len()];
        let up0 = basis.index_of(encode(&[UP, VACANT])).unwrap();
        let up1 = basis.index_of(encode(&[VACANT, UP])).unwrap();
        v[up0] = C64::new(1.0, 0.0);
        assert!(exact_entropy(&basis, &v, &[0]).unwrap().abs() < 1e-12);
        v[up1] = C64::new(1.0, 0.0);
        assert!((exact_entropy(&basis, &v, &[0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        let table = exact_marginals(&basis, &v, &[0, 1]).unwrap();
        assert_eq!(table.len(), 2);
        assert!((table.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
