//! Two-leg ladder geometry, the three-level local algebra and the stabilizer
//! triples.
//!
//! Every other module addresses sites by their *chain position*: the index
//! along the traversal path, which is also the MPS site order and the order of
//! occupation bit strings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{C64, ONE, ZERO};

/// Local basis index of `|↓⟩`.
pub const DOWN: usize = 0;
/// Local basis index of the vacancy `|0⟩`.
pub const VACANT: usize = 1;
/// Local basis index of `|↑⟩`.
pub const UP: usize = 2;
pub const LOCAL_DIM: usize = 3;

/// A 3×3 single-site operator, `op[row][col]`.
pub type Op3 = [[C64; 3]; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("ladder needs at least 4 columns, got {0}")]
    TooFewColumns(usize),
    #[error("stabilizer {index}: {reason}")]
    BadStabilizer { index: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    /// Column by column, reversing the leg order in every other column:
    /// (0,0),(1,0),(1,1),(0,1),(0,2),… Every ladder bond spans at most three
    /// chain positions and stabilizer triples span five.
    #[default]
    Snake,
    /// Top leg left to right, then bottom leg right to left. Rung bonds become
    /// long-ranged and the middle MPS bond coincides with the leg cut.
    Boustrophedon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub leg: usize,
    pub column: usize,
}

impl Site {
    pub fn sublattice(&self) -> usize {
        (self.leg + self.column) % 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLattice {
    columns: usize,
    traversal: Traversal,
    /// Chain position → coordinates.
    sites: Vec<Site>,
    /// Nearest-neighbour pairs as chain positions, smaller first.
    bonds: Vec<(usize, usize)>,
}

impl LadderLattice {
    pub fn new(columns: usize, traversal: Traversal) -> Result<Self, LatticeError> {
        if columns < 4 {
            return Err(LatticeError::TooFewColumns(columns));
        }
        let sites: Vec<Site> = match traversal {
            Traversal::Snake => (0..columns)
                .flat_map(|c| {
                    let first = c % 2;
                    [Site { leg: first, column: c }, Site { leg: 1 - first, column: c }]
                })
                .collect(),
            Traversal::Boustrophedon => (0..columns)
                .map(|c| Site { leg: 0, column: c })
                .chain((0..columns).rev().map(|c| Site { leg: 1, column: c }))
                .collect(),
        };
        let mut lat = Self {
            columns,
            traversal,
            sites,
            bonds: Vec::new(),
        };
        let mut bonds = Vec::with_capacity(3 * columns - 2);
        for leg in 0..2 {
            for c in 0..columns - 1 {
                bonds.push(ordered(lat.position(leg, c), lat.position(leg, c + 1)));
            }
        }
        for c in 0..columns {
            bonds.push(ordered(lat.position(0, c), lat.position(1, c)));
        }
        lat.bonds = bonds;
        Ok(lat)
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn len(&self) -> usize {
        2 * self.columns
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn traversal(&self) -> Traversal {
        self.traversal
    }

    pub fn site(&self, position: usize) -> Site {
        self.sites[position]
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Chain position of the site at `(leg, column)`.
    pub fn position(&self, leg: usize, column: usize) -> usize {
        match self.traversal {
            Traversal::Snake => 2 * column + usize::from(leg != column % 2),
            Traversal::Boustrophedon => {
                if leg == 0 {
                    column
                } else {
                    2 * self.columns - 1 - column
                }
            }
        }
    }

    pub fn sublattice(&self, position: usize) -> usize {
        self.sites[position].sublattice()
    }

    /// Sublattice parity of every chain position.
    pub fn parities(&self) -> Vec<usize> {
        self.sites.iter().map(Site::sublattice).collect()
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    /// Chain positions of one sublattice in zigzag order (increasing column).
    pub fn zigzag(&self, sublattice: usize) -> Vec<usize> {
        (0..self.columns)
            .map(|c| self.position((sublattice + c) % 2, c))
            .collect()
    }

    /// Chain positions of the top leg, left to right.
    pub fn top_leg(&self) -> Vec<usize> {
        (0..self.columns).map(|c| self.position(0, c)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lattice serializes")
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Ladder with the default snake traversal.
pub fn build_lattice(columns: usize) -> Result<LadderLattice, LatticeError> {
    LadderLattice::new(columns, Traversal::Snake)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StabilizerKind {
    /// X-type string.
    A,
    /// Z-type string.
    B,
}

impl StabilizerKind {
    pub fn pauli(self) -> Op3 {
        match self {
            StabilizerKind::A => sigma_x(),
            StabilizerKind::B => sigma_z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilizerSpec {
    pub kind: StabilizerKind,
    /// Chain positions in zigzag order.
    pub sites: [usize; 3],
    pub sublattice: usize,
    /// Index of the first site within its sublattice's zigzag.
    pub position: usize,
}

/// Contiguous zigzag triples on both sublattices, kinds alternating A, B, …
pub fn enumerate_stabilizers(lat: &LadderLattice) -> Vec<StabilizerSpec> {
    let mut out = Vec::with_capacity(2 * (lat.columns() - 2));
    for sub in 0..2 {
        let zz = lat.zigzag(sub);
        for k in 0..zz.len() - 2 {
            out.push(StabilizerSpec {
                kind: if k % 2 == 0 { StabilizerKind::A } else { StabilizerKind::B },
                sites: [zz[k], zz[k + 1], zz[k + 2]],
                sublattice: sub,
                position: k,
            });
        }
    }
    out
}

/// Checks an explicit stabilizer list against the lattice.
pub fn validate_stabilizers(lat: &LadderLattice, stabs: &[StabilizerSpec]) -> Result<(), LatticeError> {
    for (index, s) in stabs.iter().enumerate() {
        let bad = |reason: &str| LatticeError::BadStabilizer {
            index,
            reason: reason.to_string(),
        };
        if s.sites.iter().any(|&p| p >= lat.len()) {
            return Err(bad("site out of range"));
        }
        if s.sites.iter().any(|&p| lat.sublattice(p) != s.sublattice) {
            return Err(bad("sites do not share the declared sublattice"));
        }
        if s.sites[0] == s.sites[1] || s.sites[1] == s.sites[2] || s.sites[0] == s.sites[2] {
            return Err(bad("repeated site"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub t: f64,
    /// Strength of the `λ(N̂ − N/2)²` half-filling penalty.
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(t: f64) -> Self {
        Self { t, lambda: 10.0 }
    }

    pub fn is_valid(&self) -> bool {
        self.t.is_finite() && self.lambda.is_finite() && self.t >= 0.0 && self.lambda >= 0.0
    }
}

fn ket_bra(row: usize, col: usize) -> Op3 {
    let mut m = [[ZERO; 3]; 3];
    m[row][col] = ONE;
    m
}

pub fn identity() -> Op3 {
    let mut m = [[ZERO; 3]; 3];
    (0..3).for_each(|i| m[i][i] = ONE);
    m
}

pub fn sigma_x() -> Op3 {
    add(&ket_bra(UP, DOWN), &ket_bra(DOWN, UP))
}

pub fn sigma_z() -> Op3 {
    let mut m = ket_bra(UP, UP);
    m[DOWN][DOWN] = -ONE;
    m
}

pub fn n_occ() -> Op3 {
    add(&ket_bra(UP, UP), &ket_bra(DOWN, DOWN))
}

pub fn vacancy() -> Op3 {
    ket_bra(VACANT, VACANT)
}

/// `a†_s = |s⟩⟨0|` for `spin` ∈ {DOWN, UP}.
pub fn create(spin: usize) -> Op3 {
    debug_assert!(spin == UP || spin == DOWN);
    ket_bra(spin, VACANT)
}

pub fn annihilate(spin: usize) -> Op3 {
    debug_assert!(spin == UP || spin == DOWN);
    ket_bra(VACANT, spin)
}

pub fn add(a: &Op3, b: &Op3) -> Op3 {
    let mut m = *a;
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += b[i][j];
        }
    }
    m
}

pub fn scale(a: &Op3, c: C64) -> Op3 {
    let mut m = *a;
    m.iter_mut().flatten().for_each(|z| *z *= c);
    m
}

pub fn matmul(a: &Op3, b: &Op3) -> Op3 {
    let mut m = [[ZERO; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            for j in 0..3 {
                m[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    m
}

/// The 9×9 gate exchanging the full local states of two sites, row-major in
/// `(s1, s2)`.
pub fn swap_matrix() -> Vec<C64> {
    let mut m = vec![ZERO; 81];
    for a in 0..3 {
        for b in 0..3 {
            m[(b * 3 + a) * 9 + a * 3 + b] = ONE;
        }
    }
    m
}

/// Named single-site operators, in the order used by [`local_algebra`].
pub fn local_algebra() -> Vec<(&'static str, Op3)> {
    vec![
        ("sigma_x", sigma_x()),
        ("sigma_z", sigma_z()),
        ("n_occ", n_occ()),
        ("create_up", create(UP)),
        ("create_down", create(DOWN)),
        ("annihilate_up", annihilate(UP)),
        ("annihilate_down", annihilate(DOWN)),
    ]
}
