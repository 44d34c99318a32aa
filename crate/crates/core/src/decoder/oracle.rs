//! Reference walker simulation for small instances.
//!
//! Every walker carries its explored region as an explicit set of cells,
//! grown one neighbour per step; contacts are found by set intersection. It
//! shares no code with the interval arithmetic of the production decoder.

use std::collections::BTreeSet;

use super::{BoundaryRule, DecoderConfig, DecoderError, FusionConvention};

pub const MAX_SITES: usize = 16;

struct Walker {
    origin: i64,
    charge: i8,
    cells: BTreeSet<i64>,
    alive: bool,
}

/// Density-wave depth straight from occupations.
pub fn dw_depth(bits: &[u8], config: &DecoderConfig) -> Result<usize, DecoderError> {
    if bits.len() > MAX_SITES {
        return Err(DecoderError::TooLarge {
            size: bits.len(),
            max: MAX_SITES,
        });
    }
    if bits.len() < 2 || bits.len() % 2 == 1 {
        return Err(DecoderError::OddLength(bits.len()));
    }
    let particles: usize = bits.iter().map(|&b| usize::from(b)).sum();
    if 2 * particles != bits.len() {
        return Err(DecoderError::Leakage {
            particles,
            sites: bits.len(),
        });
    }
    let mut errors = Vec::new();
    for k in 0..bits.len() - 1 {
        if bits[k] == bits[k + 1] {
            errors.push((k, if bits[k] == 1 { 1 } else { -1 }));
        }
    }
    simulate(&errors, bits.len() - 1, config, true)
}

/// Toric-stage depth: maximum over the two kinds.
pub fn tc_depth(length: usize, a: &[usize], b: &[usize], config: &DecoderConfig) -> Result<usize, DecoderError> {
    if length > MAX_SITES {
        return Err(DecoderError::TooLarge { size: length, max: MAX_SITES });
    }
    let mut depth = 0;
    for kind in [a, b] {
        let errors: Vec<(usize, i8)> = kind.iter().map(|&p| (p, 1)).collect();
        depth = depth.max(simulate(&errors, length, config, false)?);
    }
    Ok(depth)
}

fn simulate(errors: &[(usize, i8)], len: usize, config: &DecoderConfig, opposite: bool) -> Result<usize, DecoderError> {
    let mut walkers: Vec<Walker> = errors
        .iter()
        .map(|&(p, c)| Walker {
            origin: p as i64,
            charge: c,
            cells: BTreeSet::from([p as i64]),
            alive: true,
        })
        .collect();
    walkers.sort_by_key(|w| w.origin);
    let fusable = |a: &Walker, b: &Walker| a.alive && b.alive && (!opposite || a.charge != b.charge);
    let met = |a: &Walker, b: &Walker| match config.convention {
        FusionConvention::IntervalTouching => !a.cells.is_disjoint(&b.cells),
        FusionConvention::WalkerToError => a.cells.contains(&b.origin) || b.cells.contains(&a.origin),
    };
    let mut depth = 0;
    let mut step = 0;
    loop {
        let pending = (0..walkers.len()).any(|i| (i + 1..walkers.len()).any(|j| fusable(&walkers[i], &walkers[j])));
        if !pending {
            break;
        }
        step += 1;
        for w in walkers.iter_mut().filter(|w| w.alive) {
            let grown: Vec<i64> = w
                .cells
                .iter()
                .flat_map(|&c| [c - 1, c + 1])
                .filter(|&c| (0..len as i64).contains(&c))
                .collect();
            w.cells.extend(grown);
        }
        for i in 0..walkers.len() {
            if !walkers[i].alive || (opposite && walkers[i].charge < 0) {
                continue;
            }
            let mut best: Option<(i64, i64, usize)> = None;
            for j in 0..walkers.len() {
                if j == i || !fusable(&walkers[i], &walkers[j]) || !met(&walkers[i], &walkers[j]) {
                    continue;
                }
                let key = ((walkers[i].origin - walkers[j].origin).abs(), walkers[j].origin, j);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
            if let Some((_, _, j)) = best {
                walkers[i].alive = false;
                walkers[j].alive = false;
                depth = step;
            }
        }
    }
    let survivors: Vec<&Walker> = walkers.iter().filter(|w| w.alive).collect();
    match survivors.as_slice() {
        [] => Ok(depth),
        [w] if config.boundary == BoundaryRule::NearestEnd => {
            // walk a fresh region outward until it covers a virtual end cell
            let mut cells = BTreeSet::from([w.origin]);
            let mut t = 0;
            while !cells.contains(&-1) && !cells.contains(&(len as i64)) {
                t += 1;
                let grown: Vec<i64> = cells.iter().flat_map(|&c| [c - 1, c + 1]).collect();
                cells.extend(grown);
            }
            Ok(depth.max(t))
        }
        _ => Err(DecoderError::UnpairedDefect { what: "walker" }),
    }
}
