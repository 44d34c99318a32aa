//! Matrix product operator for the ladder Hamiltonian
//!
//! `H = −Σ_stab P⊗P⊗P − t Σ_{⟨ij⟩,s} (a_{i,s} a†_{j,s} + h.c.) + λ(N̂ − N/2)²`
//!
//! built by a finite-state automaton over chain positions. Bond channels are
//! `start` (nothing placed yet), `done` (term complete), an optional `carry`
//! channel for the pairwise part of the penalty, and one channel per distinct
//! pending operator suffix, so terms sharing a tail share channels.

use std::collections::{BTreeMap, BTreeSet};

use crate::lattice::{self, LadderLattice, ModelParams, Op3, StabilizerSpec, DOWN, UP};
use crate::tensor::{C64, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum OpId {
    Identity,
    SigmaX,
    SigmaZ,
    Number,
    Create(usize),
    Annihilate(usize),
}

impl OpId {
    fn matrix(self) -> Op3 {
        match self {
            OpId::Identity => lattice::identity(),
            OpId::SigmaX => lattice::sigma_x(),
            OpId::SigmaZ => lattice::sigma_z(),
            OpId::Number => lattice::n_occ(),
            OpId::Create(s) => lattice::create(s),
            OpId::Annihilate(s) => lattice::annihilate(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Channel {
    Start,
    Done,
    Carry,
    Pending(Vec<(usize, OpId)>),
}

/// One nonzero block `W[l][r]` of an MPO site.
#[derive(Debug, Clone, PartialEq)]
pub struct MpoEntry {
    pub left: usize,
    pub right: usize,
    pub op: Op3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpoSite {
    pub left_dim: usize,
    pub right_dim: usize,
    pub entries: Vec<MpoEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mpo {
    sites: Vec<MpoSite>,
}

impl Mpo {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[MpoSite] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &MpoSite {
        &self.sites[i]
    }

    pub fn max_bond_dim(&self) -> usize {
        self.sites.iter().map(|s| s.right_dim).max().unwrap_or(1)
    }

    /// `H|v⟩` on the full `3^N` space; site 0 is the most significant digit.
    pub fn apply_dense(&self, v: &[C64]) -> Vec<C64> {
        let n = self.sites.len();
        let total = 3usize.pow(n as u32);
        assert_eq!(v.len(), total);
        // Contract left to right; the working array is indexed
        // [out digits so far][in digits remaining][channel].
        let mut cur: Vec<C64> = v.to_vec();
        let mut chans = 1usize;
        let mut done_digits = 0usize;
        for site in &self.sites {
            let rest = total / 3usize.pow(done_digits as u32 + 1);
            let before = 3usize.pow(done_digits as u32);
            let r = site.right_dim;
            let mut next = vec![ZERO; before * 3 * rest * r];
            for e in &site.entries {
                for b in 0..before {
                    for s_in in 0..3 {
                        for x in 0..rest {
                            let src = cur[((b * 3 + s_in) * rest + x) * chans + e.left];
                            if src == ZERO {
                                continue;
                            }
                            for s_out in 0..3 {
                                let w = e.op[s_out][s_in];
                                if w != ZERO {
                                    next[((b * 3 + s_out) * rest + x) * r + e.right] += w * src;
                                }
                            }
                        }
                    }
                }
            }
            cur = next;
            chans = r;
            done_digits += 1;
        }
        debug_assert_eq!(chans, 1);
        cur
    }
}

struct Builder {
    n: usize,
    /// Transitions whose operators accumulate (term heads).
    summed: Vec<BTreeMap<(Channel, Channel), Op3>>,
    /// Shared transitions, inserted once.
    shared: Vec<BTreeMap<(Channel, Channel), OpId>>,
}

impl Builder {
    fn new(n: usize) -> Self {
        Self {
            n,
            summed: vec![BTreeMap::new(); n],
            shared: vec![BTreeMap::new(); n],
        }
    }

    fn add_summed(&mut self, site: usize, l: Channel, r: Channel, op: Op3) {
        let slot = self.summed[site].entry((l, r)).or_insert([[ZERO; 3]; 3]);
        *slot = lattice::add(slot, &op);
    }

    fn add_shared(&mut self, site: usize, l: Channel, r: Channel, op: OpId) {
        self.shared[site].insert((l, r), op);
    }

    /// Adds `coef · Π op_k` for factors at strictly increasing positions.
    fn add_term(&mut self, coef: C64, factors: &[(usize, OpId)]) {
        debug_assert!(factors.windows(2).all(|w| w[0].0 < w[1].0));
        let tail = |k: usize| -> Channel {
            if k >= factors.len() {
                Channel::Done
            } else {
                Channel::Pending(factors[k..].to_vec())
            }
        };
        let (p0, op0) = factors[0];
        self.add_summed(p0, Channel::Start, tail(1), lattice::scale(&op0.matrix(), coef));
        for k in 1..factors.len() {
            let pending = tail(k);
            for s in factors[k - 1].0 + 1..factors[k].0 {
                self.add_shared(s, pending.clone(), pending.clone(), OpId::Identity);
            }
            self.add_shared(factors[k].0, pending, tail(k + 1), factors[k].1);
        }
    }

    fn finish(self) -> Mpo {
        let n = self.n;
        let mut edges: Vec<Vec<(Channel, Channel, Op3)>> = vec![Vec::new(); n];
        for (s, map) in self.summed.into_iter().enumerate() {
            for ((l, r), op) in map {
                edges[s].push((l, r, op));
            }
        }
        for (s, map) in self.shared.into_iter().enumerate() {
            for ((l, r), op) in map {
                edges[s].push((l, r, op.matrix()));
            }
        }
        // Bond b sits to the right of site b.
        let mut bond_keys: Vec<BTreeSet<Channel>> = vec![BTreeSet::new(); n + 1];
        bond_keys[0].insert(Channel::Start);
        bond_keys[n].insert(Channel::Done);
        for (s, list) in edges.iter().enumerate() {
            for (l, r, _) in list {
                if s > 0 {
                    bond_keys[s].insert(l.clone());
                }
                if s + 1 < n {
                    bond_keys[s + 1].insert(r.clone());
                }
            }
        }
        let index: Vec<BTreeMap<Channel, usize>> = bond_keys
            .iter()
            .map(|keys| keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect())
            .collect();
        let sites = edges
            .into_iter()
            .enumerate()
            .map(|(s, list)| {
                let entries = list
                    .into_iter()
                    .filter_map(|(l, r, op)| {
                        let li = *index[s].get(&l)?;
                        let ri = *index[s + 1].get(&r)?;
                        Some(MpoEntry {
                            left: li,
                            right: ri,
                            op,
                        })
                    })
                    .collect();
                MpoSite {
                    left_dim: index[s].len(),
                    right_dim: index[s + 1].len(),
                    entries,
                }
            })
            .collect();
        Mpo { sites }
    }
}

/// Builds the Hamiltonian MPO over the lattice's chain order.
pub fn build_hamiltonian_mpo(lat: &LadderLattice, stabilizers: &[StabilizerSpec], params: &ModelParams) -> Mpo {
    let n = lat.len();
    let mut b = Builder::new(n);
    for s in 0..n {
        if s + 1 < n {
            b.add_shared(s, Channel::Start, Channel::Start, OpId::Identity);
        }
        if s > 0 {
            b.add_shared(s, Channel::Done, Channel::Done, OpId::Identity);
        }
    }

    for stab in stabilizers {
        let op = match stab.kind {
            lattice::StabilizerKind::A => OpId::SigmaX,
            lattice::StabilizerKind::B => OpId::SigmaZ,
        };
        let mut sites = stab.sites;
        sites.sort_unstable();
        b.add_term(-ONE, &sites.map(|p| (p, op)));
    }

    if params.t != 0.0 {
        let hop = C64::new(-params.t, 0.0);
        for &(i, j) in lat.bonds() {
            for spin in [DOWN, UP] {
                b.add_term(hop, &[(i, OpId::Annihilate(spin)), (j, OpId::Create(spin))]);
                b.add_term(hop, &[(i, OpId::Create(spin)), (j, OpId::Annihilate(spin))]);
            }
        }
    }

    if params.lambda != 0.0 {
        // λ(N̂ − N/2)² = λ(1 − N)Σn_i + 2λΣ_{i<j} n_i n_j + λN²/4, using n² = n.
        let lam = params.lambda;
        let nf = n as f64;
        let n_op = lattice::n_occ();
        let mut first = lattice::scale(&n_op, C64::new(lam * (1.0 - nf), 0.0));
        first = lattice::add(&first, &lattice::scale(&lattice::identity(), C64::new(lam * nf * nf / 4.0, 0.0)));
        b.add_summed(0, Channel::Start, Channel::Done, first);
        for s in 1..n {
            b.add_summed(s, Channel::Start, Channel::Done, lattice::scale(&n_op, C64::new(lam * (1.0 - nf), 0.0)));
        }
        for s in 0..n {
            if s + 1 < n {
                b.add_summed(s, Channel::Start, Channel::Carry, lattice::scale(&n_op, C64::new(2.0 * lam, 0.0)));
            }
            if s > 0 && s + 1 < n {
                b.add_shared(s, Channel::Carry, Channel::Carry, OpId::Identity);
            }
            if s > 0 {
                b.add_shared(s, Channel::Carry, Channel::Done, OpId::Number);
            }
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, enumerate_stabilizers};

    fn basis(n: usize, digits: &[usize]) -> Vec<C64> {
        let mut v = vec![ZERO; 3usize.pow(n as u32)];
        let idx = digits.iter().fold(0, |a, &d| a * 3 + d);
        v[idx] = ONE;
        v
    }

    fn expect(mpo: &Mpo, v: &[C64]) -> C64 {
        let hv = mpo.apply_dense(v);
        v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn boundary_bonds_are_trivial() {
        let lat = build_lattice(5).unwrap();
        let mpo = build_hamiltonian_mpo(&lat, &enumerate_stabilizers(&lat), &ModelParams::new(0.7));
        assert_eq!(mpo.site(0).left_dim, 1);
        assert_eq!(mpo.site(mpo.len() - 1).right_dim, 1);
        for w in mpo.sites().windows(2) {
            assert_eq!(w[0].right_dim, w[1].left_dim);
        }
    }

    #[test]
    fn penalty_counts_particles() {
        let lat = build_lattice(4).unwrap();
        let params = ModelParams { t: 0.0, lambda: 1.5 };
        let mpo = build_hamiltonian_mpo(&lat, &[], &params);
        // three particles on eight sites: λ(3 − 4)² = 1.5
        let v = basis(8, &[2, 1, 0, 1, 2, 1, 1, 1]);
        assert!((expect(&mpo, &v) - C64::new(1.5, 0.0)).norm() < 1e-12);
        let v = basis(8, &[1; 8]);
        assert!((expect(&mpo, &v) - C64::new(24.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn hopping_moves_one_particle() {
        let lat = build_lattice(4).unwrap();
        let mpo = build_hamiltonian_mpo(&lat, &[], &ModelParams { t: 1.0, lambda: 0.0 });
        let mut digits = [1usize; 8];
        digits[0] = UP;
        let hv = mpo.apply_dense(&basis(8, &digits));
        // Site 0 neighbours: its rung partner and its leg partner.
        let neighbours: Vec<usize> = lat
            .bonds()
            .iter()
            .filter_map(|&(i, j)| (i == 0).then_some(j))
            .collect();
        assert_eq!(neighbours.len(), 2);
        let nonzero = hv.iter().filter(|z| z.norm() > 1e-14).count();
        assert_eq!(nonzero, 2);
        for j in neighbours {
            let mut d = [1usize; 8];
            d[j] = UP;
            let idx = d.iter().fold(0, |a, &x| a * 3 + x);
            assert!((hv[idx] + ONE).norm() < 1e-14);
        }
    }
}
