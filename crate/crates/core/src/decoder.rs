//! Classical syndrome extraction and correction-circuit depths.
//!
//! Two stages: density-wave errors live on the dual chain (between traversal
//! neighbours) and are removed by particle swaps; stabilizer violations of each
//! kind are fused pairwise. Both use the same synchronous walker picture: every
//! unfused error explores one more site per timestep and a pair fuses on
//! contact. Depth is the time of the last fusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod oracle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecoderError {
    #[error("bit string has odd length {0}")]
    OddLength(usize),
    #[error("bit string needs at least two sites, got {0}")]
    TooShort(usize),
    #[error("entry {index} is {value}, expected 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("syndrome entry {index} is {value}, expected -1, 0 or 1")]
    BadSyndromeValue { index: usize, value: i8 },
    #[error("{particles} particles on {sites} sites: outside the half-filled sector")]
    Leakage { particles: usize, sites: usize },
    #[error("syndrome does not come from any occupation string")]
    Inconsistent,
    #[error("unpaired {what} and boundary fusion is disabled")]
    UnpairedDefect { what: &'static str },
    #[error("violation position {position} outside 0..{length}")]
    PositionOutOfRange { position: usize, length: usize },
    #[error("violation positions must be strictly increasing")]
    Unsorted,
    #[error("instance of size {size} exceeds oracle limit {max}")]
    TooLarge { size: usize, max: usize },
}

/// When two walkers count as having met.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionConvention {
    /// Explored intervals overlap: a pair at distance `g` fuses at `⌈g/2⌉`.
    #[default]
    IntervalTouching,
    /// One walker reaches the other's origin: fuses at `g`.
    WalkerToError,
}

impl FusionConvention {
    pub fn in_contact(self, gap: usize, step: usize) -> bool {
        match self {
            Self::IntervalTouching => gap <= 2 * step,
            Self::WalkerToError => gap <= step,
        }
    }
}

/// Treatment of an error left without a partner on the open chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    Reject,
    /// Fuse with the nearer chain end; the walker needs `p + 1` steps to leave
    /// on the left and `len − p` on the right (ties go left).
    #[default]
    NearestEnd,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub convention: FusionConvention,
    pub boundary: BoundaryRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partner {
    Error(usize),
    LeftEnd,
    RightEnd,
}

/// One fusion event: `origin` (the initiating error, for the density wave
/// always the `+1` member unless it fused with an end) meets `partner`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fusion {
    pub origin: usize,
    pub partner: Partner,
    pub step: usize,
}

/// `s_k ∈ {+1, 0, −1}` on the dual chain `k = 0..N−2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityWaveSyndrome {
    values: Vec<i8>,
}

impl DensityWaveSyndrome {
    pub fn new(values: Vec<i8>) -> Result<Self, DecoderError> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(-1..=1).contains(*v)) {
            return Err(DecoderError::BadSyndromeValue { index, value });
        }
        if values.is_empty() {
            return Err(DecoderError::TooShort(1));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Number of dual sites, `N − 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `count(+1) − count(−1)`.
    pub fn charge(&self) -> i64 {
        self.values.iter().map(|&v| i64::from(v)).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn errors(&self) -> Vec<(usize, i8)> {
        self.values.iter().enumerate().filter(|(_, v)| **v != 0).map(|(k, &v)| (k, v)).collect()
    }

    /// Occupations consistent with the syndrome. Unique whenever there is at
    /// least one error; `None` for a clean syndrome (both crystals qualify).
    pub fn reconstruct_bits(&self) -> Option<Vec<u8>> {
        let (k0, v0) = self.errors().first().copied()?;
        let n = self.values.len() + 1;
        let mut bits = vec![0u8; n];
        bits[k0] = u8::from(v0 > 0);
        for k in k0..n - 1 {
            bits[k + 1] = next_bit(bits[k], self.values[k]);
        }
        for k in (0..k0).rev() {
            bits[k] = next_bit(bits[k + 1], self.values[k]);
        }
        Some(bits)
    }
}

fn next_bit(b: u8, s: i8) -> u8 {
    if s == 0 {
        1 - b
    } else {
        b
    }
}

pub fn compute_dw_syndrome(bits: &[u8]) -> Result<DensityWaveSyndrome, DecoderError> {
    check_bits(bits)?;
    let values = bits
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (1, 1) => 1,
            (0, 0) => -1,
            _ => 0,
        })
        .collect();
    Ok(DensityWaveSyndrome { values })
}

fn check_bits(bits: &[u8]) -> Result<(), DecoderError> {
    if bits.len() < 2 {
        return Err(DecoderError::TooShort(bits.len()));
    }
    if bits.len() % 2 == 1 {
        return Err(DecoderError::OddLength(bits.len()));
    }
    if let Some((index, &value)) = bits.iter().enumerate().find(|(_, b)| **b > 1) {
        return Err(DecoderError::NotBinary { index, value });
    }
    Ok(())
}

/// Phase of a perfect crystal: `0` occupies even chain positions, `1` odd.
pub fn crystal(n: usize, phase: usize) -> Vec<u8> {
    (0..n).map(|p| u8::from(p % 2 == phase % 2)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityWaveOutcome {
    pub depth: usize,
    pub fusions: Vec<Fusion>,
    /// Nearest-neighbour swaps `(p, p + 1)`, applied in order.
    pub swap_plan: Vec<(usize, usize)>,
    /// Phase of the crystal reached by the plan (see [`crystal`]); `None` for
    /// a clean syndrome, which does not tell the two crystals apart.
    pub target_phase: Option<usize>,
}

pub fn dw_correct(syndrome: &DensityWaveSyndrome, config: &DecoderConfig) -> Result<DensityWaveOutcome, DecoderError> {
    let n = syndrome.len() + 1;
    let Some(bits) = syndrome.reconstruct_bits() else {
        return Ok(DensityWaveOutcome {
            depth: 0,
            fusions: Vec::new(),
            swap_plan: Vec::new(),
            target_phase: None,
        });
    };
    if compute_dw_syndrome(&bits)?.values != syndrome.values {
        return Err(DecoderError::Inconsistent);
    }
    let particles = bits.iter().filter(|&&b| b == 1).count();
    if n % 2 == 1 || 2 * particles != n {
        return Err(DecoderError::Leakage { particles, sites: n });
    }
    let walkers: Vec<(usize, i8)> = syndrome.errors();
    let (depth, fusions) = fuse(&walkers, syndrome.len(), config, true, "density-wave error")?;

    // Outer domains: the left end sits in phase 0 iff site 0 is occupied, the
    // right end iff site N−1 is empty. An end that absorbed a wall is flipped.
    let left = usize::from(bits[0] == 0);
    let right = usize::from(bits[n - 1] == 1);
    let target_phase = if left == right || fusions.iter().any(|f| f.partner == Partner::RightEnd) {
        left
    } else {
        right
    };
    let swap_plan = transport_plan(&bits, &crystal(n, target_phase));
    Ok(DensityWaveOutcome {
        depth,
        fusions,
        swap_plan,
        target_phase: Some(target_phase),
    })
}

/// Adjacent swaps carrying the `i`-th particle of `from` to the `i`-th
/// particle of `to`, never exchanging two particles (spins ride along).
pub fn transport_plan(from: &[u8], to: &[u8]) -> Vec<(usize, usize)> {
    let xs: Vec<usize> = (0..from.len()).filter(|&p| from[p] == 1).collect();
    let ys: Vec<usize> = (0..to.len()).filter(|&p| to[p] == 1).collect();
    debug_assert_eq!(xs.len(), ys.len());
    let mut plan = Vec::new();
    // right-movers from the right, then left-movers from the left
    for (&x, &y) in xs.iter().zip(&ys).rev() {
        plan.extend((x..y).map(|p| (p, p + 1)));
    }
    for (&x, &y) in xs.iter().zip(&ys) {
        plan.extend((y..x).rev().map(|p| (p, p + 1)));
    }
    plan
}

/// Per-kind violated stabilizer positions along the zigzag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnyonSyndrome {
    /// Number of stabilizer positions per sublattice zigzag.
    pub length: usize,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl AnyonSyndrome {
    pub fn new(length: usize, a: Vec<usize>, b: Vec<usize>) -> Result<Self, DecoderError> {
        for v in [&a, &b] {
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DecoderError::Unsorted);
            }
            if let Some(&position) = v.iter().find(|&&p| p >= length) {
                return Err(DecoderError::PositionOutOfRange { position, length });
            }
        }
        Ok(Self { length, a, b })
    }

    pub fn clean(length: usize) -> Self {
        Self {
            length,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.a.is_empty() && self.b.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToricOutcome {
    pub depth: usize,
    pub a_fusions: Vec<Fusion>,
    pub b_fusions: Vec<Fusion>,
}

pub fn tc_correct(syndrome: &AnyonSyndrome, config: &DecoderConfig) -> Result<ToricOutcome, DecoderError> {
    let run = |v: &[usize], what| {
        let walkers: Vec<(usize, i8)> = v.iter().map(|&p| (p, 1)).collect();
        fuse(&walkers, syndrome.length, config, false, what)
    };
    let (da, a_fusions) = run(&syndrome.a, "A-kind violation")?;
    let (db, b_fusions) = run(&syndrome.b, "B-kind violation")?;
    Ok(ToricOutcome {
        depth: da.max(db),
        a_fusions,
        b_fusions,
    })
}

/// Synchronous walker dynamics on a chain of `len` sites.
///
/// With `opposite` only `+1`/`−1` pairs fuse and `+1` members initiate;
/// otherwise any two walkers annihilate. At each step initiators are taken in
/// increasing position and pick the nearest contacted partner, smaller
/// position on ties. A single survivor goes to the nearer end if allowed.
fn fuse(
    walkers: &[(usize, i8)],
    len: usize,
    config: &DecoderConfig,
    opposite: bool,
    what: &'static str,
) -> Result<(usize, Vec<Fusion>), DecoderError> {
    let mut alive: Vec<(usize, i8)> = walkers.to_vec();
    alive.sort_unstable();
    let compatible = |a: i8, b: i8| !opposite || a != b;
    let initiates = |a: i8| !opposite || a > 0;
    let mut fusions = Vec::new();
    let mut step = 0;
    while alive.iter().enumerate().any(|(i, a)| alive[i + 1..].iter().any(|b| compatible(a.1, b.1))) {
        step += 1;
        let mut i = 0;
        while i < alive.len() {
            let (p, c) = alive[i];
            if !initiates(c) {
                i += 1;
                continue;
            }
            let partner = alive
                .iter()
                .enumerate()
                .filter(|&(j, &(q, d))| j != i && compatible(c, d) && config.convention.in_contact(p.abs_diff(q), step))
                .min_by_key(|&(_, &(q, _))| (p.abs_diff(q), q))
                .map(|(j, _)| j);
            match partner {
                Some(j) => {
                    fusions.push(Fusion {
                        origin: p,
                        partner: Partner::Error(alive[j].0),
                        step,
                    });
                    let (lo, hi) = (i.min(j), i.max(j));
                    alive.remove(hi);
                    alive.remove(lo);
                    // the element now at `lo` has not been visited yet when j > i
                    i = lo;
                }
                None => i += 1,
            }
        }
    }
    match alive.as_slice() {
        [] => {}
        [(p, _)] => {
            if config.boundary == BoundaryRule::Reject {
                return Err(DecoderError::UnpairedDefect { what });
            }
            let (left, right) = (p + 1, len - p);
            let (partner, step) = if left <= right {
                (Partner::LeftEnd, left)
            } else {
                (Partner::RightEnd, right)
            };
            fusions.push(Fusion { origin: *p, partner, step });
        }
        _ => return Err(DecoderError::UnpairedDefect { what }),
    }
    let depth = fusions.iter().map(|f| f.step).max().unwrap_or(0);
    Ok((depth, fusions))
}

/// Both stages together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderOutcome {
    pub d_dw: usize,
    pub d_tc: usize,
    pub d_tot: usize,
    pub dw_fusions: Vec<Fusion>,
    pub tc_fusions: Vec<Fusion>,
    pub swap_plan: Vec<(usize, usize)>,
}

impl DecoderOutcome {
    pub fn new(dw: DensityWaveOutcome, tc: ToricOutcome) -> Self {
        let mut tc_fusions = tc.a_fusions;
        tc_fusions.extend(tc.b_fusions);
        Self {
            d_dw: dw.depth,
            d_tc: tc.depth,
            d_tot: dw.depth + tc.depth,
            dw_fusions: dw.fusions,
            tc_fusions,
            swap_plan: dw.swap_plan,
        }
    }
}

/// Applies `(p, p + 1)` swaps to a bit string.
pub fn apply_swaps(bits: &mut [u8], plan: &[(usize, usize)]) {
    for &(p, q) in plan {
        bits.swap(p, q);
    }
}
