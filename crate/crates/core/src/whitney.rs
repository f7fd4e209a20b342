//! Whitney ball covers `W_c(Ω)` and their Lipschitz partitions of unity.
//!
//! Covers are built greedily: inside cells are visited by decreasing distance
//! to the complement (ties by cell index) and a cell becomes a new center iff
//! it is not yet inside an earlier ball `B_j` (or `s·B_j` with
//! [`build_cover_with`]). Ball membership is by cell center, `|x - x_i| < r_i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::GridDomain;
use crate::math::sqrt;

/// One Whitney ball `B(x_i, c·d(x_i, Ω^c))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitneyBall {
    /// Cell index of the center.
    pub center: usize,
    pub radius: f64,
}

/// A Whitney cover together with per-cell membership lists.
#[derive(Debug, Clone)]
pub struct WhitneyCover {
    c: f64,
    dilation: f64,
    balls: Vec<WhitneyBall>,
    overlap: usize,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

/// Default dilation `L` used for `B_i^* = L·B_i`.
pub fn default_dilation(c: f64) -> f64 {
    if c <= 1.0 / 9.0 {
        3.0
    } else {
        1.0 / (3.0 * c)
    }
}

impl WhitneyCover {
    /// Assembles a cover from explicit balls (membership is recomputed).
    pub fn from_balls(domain: &GridDomain, c: f64, balls: Vec<WhitneyBall>) -> Result<Self> {
        if !(c > 0.0 && c < 1.0 / 3.0) {
            return Err(Error::param(
                "c",
                "Whitney parameter must satisfy 0 < c < 1/3",
            ));
        }
        let n = domain.len();
        let dim = domain.dim();
        let mut counts = vec![0usize; n + 1];
        for b in &balls {
            let p = domain.center(b.center);
            domain.for_each_in_ball(&p[..dim], b.radius, |cell, _| {
                if domain.is_inside(cell) {
                    counts[cell + 1] += 1;
                }
            });
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let mut members = vec![0u32; offsets[n]];
        for (bi, b) in balls.iter().enumerate() {
            let p = domain.center(b.center);
            domain.for_each_in_ball(&p[..dim], b.radius, |cell, _| {
                if domain.is_inside(cell) {
                    members[fill[cell]] = bi as u32;
                    fill[cell] += 1;
                }
            });
        }
        let dilation = default_dilation(c);
        let mut cover = Self {
            c,
            dilation,
            balls,
            overlap: 0,
            offsets,
            members,
        };
        cover.overlap = cover.dilated_overlap(domain, dilation);
        Ok(cover)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Dilation `L` used for the stored overlap bound.
    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    pub fn balls(&self) -> &[WhitneyBall] {
        &self.balls
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Measured `M_obs = max_x #{i : x ∈ L·B_i}` for the stored dilation.
    pub fn overlap(&self) -> usize {
        self.overlap
    }

    /// Indices of the balls `B_i` containing `cell`.
    pub fn covering(&self, cell: usize) -> &[u32] {
        &self.members[self.offsets[cell]..self.offsets[cell + 1]]
    }

    /// Inside cells of `s·B_i`.
    pub fn ball_cells(&self, domain: &GridDomain, i: usize, s: f64) -> Vec<usize> {
        let b = self.balls[i];
        let p = domain.center(b.center);
        let mut out = Vec::new();
        domain.for_each_in_ball(&p[..domain.dim()], s * b.radius, |cell, _| {
            if domain.is_inside(cell) {
                out.push(cell);
            }
        });
        out
    }

    /// Inside cells of a union of balls, sorted and deduplicated.
    pub fn union_cells(&self, domain: &GridDomain, indices: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = indices
            .iter()
            .flat_map(|&i| self.ball_cells(domain, i, 1.0))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Ball whose center is closest to `p` (first in cover order on ties).
    pub fn nearest_ball(&self, domain: &GridDomain, p: &[f64]) -> Option<usize> {
        let dim = domain.dim();
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, b) in self.balls.iter().enumerate() {
            let q = domain.center(b.center);
            let d: f64 = (0..dim).map(|a| (q[a] - p[a]) * (q[a] - p[a])).sum();
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        best
    }

    fn dilated_overlap(&self, domain: &GridDomain, dilation: f64) -> usize {
        let mut count = vec![0u32; domain.len()];
        for b in &self.balls {
            let p = domain.center(b.center);
            domain.for_each_in_ball(&p[..domain.dim()], dilation * b.radius, |cell, _| {
                if domain.is_inside(cell) {
                    count[cell] += 1;
                }
            });
        }
        count.into_iter().max().unwrap_or(0) as usize
    }
}

/// Exclusion factor `s` of [`build_cover`]: a cell inside `s·B_j` of an
/// earlier center is not selected.
pub const EXCLUSION: f64 = 1.0;

/// Greedy Whitney cover with parameter `c ∈ (0, 1/3)` and exclusion factor
/// [`EXCLUSION`].
pub fn build_cover(domain: &GridDomain, c: f64) -> Result<WhitneyCover> {
    build_cover_with(domain, c, EXCLUSION)
}

/// Greedy Whitney cover whose centers avoid `exclusion·B_j` of earlier
/// centers, `exclusion ∈ (0, 1]`. Any such net covers Ω; smaller factors
/// give denser nets and larger overlap.
pub fn build_cover_with(domain: &GridDomain, c: f64, exclusion: f64) -> Result<WhitneyCover> {
    if !(c > 0.0 && c < 1.0 / 3.0) {
        return Err(Error::param(
            "c",
            "Whitney parameter must satisfy 0 < c < 1/3",
        ));
    }
    if !(exclusion > 0.0 && exclusion <= 1.0) {
        return Err(Error::param("exclusion", "requires 0 < exclusion <= 1"));
    }
    let mut order: Vec<usize> = domain.inside_cells().to_vec();
    if order.is_empty() {
        return Err(Error::EmptyInterior);
    }
    order.sort_by(|&a, &b| {
        domain
            .dist(b)
            .partial_cmp(&domain.dist(a))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let dim = domain.dim();
    let mut excluded = vec![false; domain.len()];
    let mut balls = Vec::new();
    for x in order {
        if excluded[x] {
            continue;
        }
        let r = c * domain.dist(x);
        balls.push(WhitneyBall {
            center: x,
            radius: r,
        });
        excluded[x] = true;
        let p = domain.center(x);
        domain.for_each_in_ball(&p[..dim], exclusion * r, |cell, _| excluded[cell] = true);
    }
    WhitneyCover::from_balls(domain, c, balls)
}

/// Outcome of the Whitney-cover property checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverReport {
    pub c: f64,
    pub dilation: f64,
    /// `c ≤ (3L)^{-1}`.
    pub hypothesis_ok: bool,
    pub uncovered_cells: usize,
    pub cover_ok: bool,
    pub radius_law_ok: bool,
    /// Number of `(ball, cell)` pairs with a cell of `B_i^*` outside Ω.
    pub containment_violations: usize,
    pub containment_ok: bool,
    /// Worst violation of `(1/c − L) r_i ≤ d(x) ≤ (1/c + L) r_i` over `x ∈ B_i^*`.
    pub max_sandwich_slack: f64,
    pub sandwich_ok: bool,
    /// Measured `M_obs` for `B_i^*`.
    pub overlap: usize,
    pub overlap_bound: usize,
    pub overlap_ok: bool,
}

impl CoverReport {
    /// The four structural properties (cover, containment, sandwich, overlap).
    pub fn all_pass(&self) -> bool {
        self.cover_ok && self.containment_ok && self.sandwich_ok && self.overlap_ok
    }
}

/// Checks cover, dilated containment, distance sandwich (with slack `h`) and
/// bounded overlap of `B_i^* = L·B_i`.
pub fn verify_cover(
    domain: &GridDomain,
    cover: &WhitneyCover,
    dilation: f64,
    overlap_bound: usize,
) -> CoverReport {
    let c = cover.c();
    let h = domain.h();
    let dim = domain.dim();
    let uncovered = domain
        .inside_cells()
        .iter()
        .filter(|&&x| cover.covering(x).is_empty())
        .count();
    let radius_law_ok = cover
        .balls()
        .iter()
        .all(|b| b.radius == c * domain.dist(b.center));
    let mut count = vec![0u32; domain.len()];
    let mut containment_violations = 0usize;
    let mut slack: f64 = 0.0;
    for b in cover.balls() {
        let p = domain.center(b.center);
        let r = b.radius;
        let lo = (1.0 / c - dilation) * r;
        let hi = (1.0 / c + dilation) * r;
        domain.for_each_in_ball(&p[..dim], dilation * r, |cell, _| {
            if domain.is_inside(cell) {
                count[cell] += 1;
                let d = domain.dist(cell);
                slack = slack.max(lo - d).max(d - hi);
            } else {
                containment_violations += 1;
            }
        });
    }
    let overlap = count.iter().copied().max().unwrap_or(0) as usize;
    CoverReport {
        c,
        dilation,
        hypothesis_ok: c <= 1.0 / (3.0 * dilation),
        uncovered_cells: uncovered,
        cover_ok: uncovered == 0,
        radius_law_ok,
        containment_violations,
        containment_ok: containment_violations == 0,
        max_sandwich_slack: slack.max(0.0),
        sandwich_ok: slack <= h,
        overlap,
        overlap_bound,
        overlap_ok: overlap <= overlap_bound,
    }
}

/// Sparse Lipschitz partition of unity subordinate to `{6B_i}`.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    scale: f64,
    /// Per ball: `(cell, φ_i(cell))` sorted by cell, nonzero entries only.
    entries: Vec<Vec<(usize, f64)>>,
    nu: f64,
    lipschitz: f64,
    overlap: usize,
    max_sum_error: f64,
}

impl PartitionOfUnity {
    /// Scale `t = 18c` of the underlying cover.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn entries(&self, ball: usize) -> &[(usize, f64)] {
        &self.entries[ball]
    }

    /// `φ_i(cell)`.
    pub fn value(&self, ball: usize, cell: usize) -> f64 {
        let e = &self.entries[ball];
        match e.binary_search_by(|probe| probe.0.cmp(&cell)) {
            Ok(k) => e[k].1,
            Err(_) => 0.0,
        }
    }

    /// Measured `ν = min_i min_{3B_i} φ_i`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Measured `K = max |φ_i(x) − φ_i(y)| r_i / h` over adjacent cells.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Maximum number of supports `6B_i` containing one cell.
    pub fn overlap(&self) -> usize {
        self.overlap
    }

    /// `max_x |Σ_i φ_i(x) − 1|`.
    pub fn max_sum_error(&self) -> f64 {
        self.max_sum_error
    }
}

/// `ψ_i = clamp(2 − |x − x_i|/(3 r_i), 0, 1)` normalized to `φ_i = ψ_i / Σ_j ψ_j`.
pub fn build_partition(domain: &GridDomain, cover: &WhitneyCover) -> Result<PartitionOfUnity> {
    let dim = domain.dim();
    let h = domain.h();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::with_capacity(cover.len());
    let mut sum = vec![0.0; domain.len()];
    let mut supports = vec![0u32; domain.len()];
    for b in cover.balls() {
        let p = domain.center(b.center);
        let r = b.radius;
        let mut e = Vec::new();
        domain.for_each_in_ball(&p[..dim], 6.0 * r, |cell, d2| {
            if !domain.is_inside(cell) {
                return;
            }
            let psi = (2.0 - sqrt(d2) / (3.0 * r)).clamp(0.0, 1.0);
            if psi > 0.0 {
                e.push((cell, psi));
                sum[cell] += psi;
                supports[cell] += 1;
            }
        });
        entries.push(e);
    }
    for &x in domain.inside_cells() {
        if !(sum[x] > 0.0) {
            return Err(Error::BrokenCover { cell: x });
        }
    }
    for e in entries.iter_mut() {
        for (cell, v) in e.iter_mut() {
            *v /= sum[*cell];
        }
    }
    let mut total = vec![0.0; domain.len()];
    for e in &entries {
        for &(cell, v) in e {
            total[cell] += v;
        }
    }
    let max_sum_error = domain
        .inside_cells()
        .iter()
        .map(|&x| (total[x] - 1.0).abs())
        .fold(0.0, f64::max);
    let mut nu = f64::INFINITY;
    let mut lipschitz: f64 = 0.0;
    let strides = domain.strides();
    for (i, b) in cover.balls().iter().enumerate() {
        let r = b.radius;
        let e = &entries[i];
        let lookup = |cell: usize| -> f64 {
            match e.binary_search_by(|probe| probe.0.cmp(&cell)) {
                Ok(k) => e[k].1,
                Err(_) => 0.0,
            }
        };
        for &(cell, v) in e {
            if domain.cell_distance(cell, b.center) < 3.0 * r {
                nu = nu.min(v);
            }
            for &s in &strides[..dim] {
                for nb in [cell + s, cell - s] {
                    if domain.is_inside(nb) {
                        lipschitz = lipschitz.max((v - lookup(nb)).abs() * r / h);
                    }
                }
            }
        }
    }
    Ok(PartitionOfUnity {
        scale: 18.0 * cover.c(),
        entries,
        nu,
        lipschitz,
        overlap: supports.into_iter().max().unwrap_or(0) as usize,
        max_sum_error,
    })
}
