//! Seeded families of condenser sets `E ⋐ Ω` used by the scans.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::capacity::{CellSet, Field};
use crate::geometry::GridDomain;
use crate::whitney::WhitneyCover;

/// A labelled condenser candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSet {
    pub label: String,
    pub set: CellSet,
    /// Whitney-ball indices when the set is a union of cover balls.
    pub balls: Vec<usize>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Whether the set keeps a positive gap to a collar of width `delta`.
pub fn clears_collar(domain: &GridDomain, set: &CellSet, delta: f64) -> bool {
    !set.is_empty() && set.boundary_distance(domain) > delta
}

/// Balls of `cover` whose cells stay outside a collar of width `delta`.
pub fn eligible_balls(domain: &GridDomain, cover: &WhitneyCover, delta: f64) -> Vec<usize> {
    (0..cover.len())
        .filter(|&i| {
            let b = cover.balls()[i];
            domain.dist(b.center) - b.radius > delta
        })
        .collect()
}

/// `count` distinct single Whitney balls, drawn without replacement.
pub fn single_balls(
    domain: &GridDomain,
    cover: &WhitneyCover,
    count: usize,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<LabelledSet> {
    let pool = eligible_balls(domain, cover, delta);
    let k = count.min(pool.len());
    let mut picks: Vec<usize> = sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|i| LabelledSet {
            label: format!("ball:{i}"),
            set: CellSet::from_sorted_unchecked(cover.ball_cells(domain, i, 1.0)),
            balls: vec![i],
        })
        .collect()
}

/// Random unions of `1..=max_balls` Whitney balls.
pub fn ball_unions(
    domain: &GridDomain,
    cover: &WhitneyCover,
    count: usize,
    max_balls: usize,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<LabelledSet> {
    let pool = eligible_balls(domain, cover, delta);
    if pool.is_empty() || max_balls == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|s| {
            let k = rng.random_range(1..=max_balls.min(pool.len()));
            let mut idx: Vec<usize> = sample(rng, pool.len(), k)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            idx.sort_unstable();
            LabelledSet {
                label: format!("union:{s}:{}", idx.len()),
                set: CellSet::from_sorted_unchecked(cover.union_cells(domain, &idx)),
                balls: idx,
            }
        })
        .collect()
}

/// Sublevel sets `{x : d(x, Ω^c) ≥ s}` for each threshold.
pub fn distance_sublevels(domain: &GridDomain, thresholds: &[f64]) -> Vec<LabelledSet> {
    thresholds
        .iter()
        .filter_map(|&s| {
            let cells: Vec<usize> = domain
                .inside_cells()
                .iter()
                .copied()
                .filter(|&c| domain.dist(c) >= s)
                .collect();
            (!cells.is_empty()).then(|| LabelledSet {
                label: format!("dist>={s}"),
                set: CellSet::from_sorted_unchecked(cells),
                balls: Vec::new(),
            })
        })
        .collect()
}

/// Superlevel sets `{|u| ≥ f · max|u|}` of a field.
pub fn field_levels(domain: &GridDomain, u: &Field, fractions: &[f64]) -> Vec<LabelledSet> {
    let top = u.max_abs();
    if top == 0.0 {
        return Vec::new();
    }
    fractions
        .iter()
        .filter_map(|&f| {
            let cells: Vec<usize> = domain
                .inside_cells()
                .iter()
                .copied()
                .filter(|&c| u.get(c).abs() >= f * top)
                .collect();
            (!cells.is_empty()).then(|| LabelledSet {
                label: format!("level>={f}"),
                set: CellSet::from_sorted_unchecked(cells),
                balls: Vec::new(),
            })
        })
        .collect()
}

/// Unions of small random cell clusters (discs of 1–3 cells radius).
pub fn cell_clusters(
    domain: &GridDomain,
    count: usize,
    max_clusters: usize,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<LabelledSet> {
    let h = domain.h();
    let pool: Vec<usize> = domain
        .inside_cells()
        .iter()
        .copied()
        .filter(|&c| domain.dist(c) > delta + 4.0 * h)
        .collect();
    if pool.is_empty() || max_clusters == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|s| {
            let k = rng.random_range(1..=max_clusters);
            let mut cells = Vec::new();
            for _ in 0..k {
                let c = pool[rng.random_range(0..pool.len())];
                let r = h * rng.random_range(1..=3) as f64;
                let p = domain.center(c);
                domain.for_each_in_ball(&p[..domain.dim()], r, |cell, _| {
                    if domain.is_inside(cell) && domain.dist(cell) > delta {
                        cells.push(cell);
                    }
                });
            }
            cells.sort_unstable();
            cells.dedup();
            LabelledSet {
                label: format!("cells:{s}:{k}"),
                set: CellSet::from_sorted_unchecked(cells),
                balls: Vec::new(),
            }
        })
        .filter(|s| !s.set.is_empty())
        .collect()
}
