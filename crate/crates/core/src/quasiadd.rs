//! Quasiadditivity scans, Whitney-ball capacity bounds, the decaying test
//! sequence on the disc, and the combined equivalence experiment.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng;

use crate::capacity::{
    ball_test_upper_bound, field_energy, solve_capacity, CapacityProblem, CellSet, Field,
    SolverConfig,
};
use crate::error::{Error, Result};
use crate::family::{self, LabelledSet};
use crate::geometry::{build_domain, measure_of_ball, GridDomain, MeasureMode, ShapeSpec};
use crate::hardy::{
    interpolation_check, rayleigh_lower_bound, HSParams, IntegrandMode, RayleighConfig,
};
use crate::math::{log2, powf, sqrt};
use crate::par;
use crate::whitney::{build_cover, WhitneyCover};

/// A solved capacity with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapValue {
    pub value: f64,
    /// Energy of the Lipschitz warm start, used as the reference scale.
    pub upper: f64,
    /// `value ≤ 10 · tol · upper`.
    pub degenerate: bool,
}

/// Solves every distinct set once, in a deterministic order.
fn solve_sets(
    domain: &GridDomain,
    params: &HSParams,
    solver: &SolverConfig,
    sets: &[Vec<usize>],
) -> BTreeMap<Vec<usize>, Result<CapValue>> {
    let mut unique: Vec<&Vec<usize>> = sets.iter().collect();
    unique.sort();
    unique.dedup();
    let values = par::map(&unique, |_, cells| {
        let set = CellSet::from_sorted_unchecked((*cells).clone());
        let prob = CapacityProblem::new(domain, params.beta, params.p, set)?;
        let r = solve_capacity(&prob, solver)?;
        Ok(CapValue {
            value: r.value,
            upper: r.upper_bound,
            degenerate: r.value <= 10.0 * solver.tol * r.upper_bound,
        })
    });
    unique.into_iter().cloned().zip(values).collect()
}

fn ratio_of(sum: f64, whole: f64, exponent: f64) -> f64 {
    let den = powf(whole, exponent);
    if den > 0.0 {
        sum / den
    } else {
        f64::INFINITY
    }
}

/// One set `E` of the strong quasiadditivity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiaddSample {
    pub label: String,
    /// Balls `B_i` meeting `E`.
    pub balls: Vec<usize>,
    /// `cap(E ∩ B_i)` in the order of `balls`.
    pub piece_caps: Vec<f64>,
    pub capacity: f64,
    /// `Σ cap(E ∩ B_i)^{q/p}`.
    pub sum: f64,
    /// `sum / cap(E)^{q/p}`; infinite when `E` is degenerate.
    pub ratio: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiaddScan {
    pub samples: Vec<QuasiaddSample>,
    pub skipped: Vec<(String, Error)>,
    /// Largest finite ratio.
    pub max_ratio: f64,
    pub degenerate: usize,
}

impl QuasiaddScan {
    /// Largest finite ratio among the first `n` samples.
    pub fn max_ratio_first(&self, n: usize) -> f64 {
        self.samples
            .iter()
            .take(n)
            .map(|s| s.ratio)
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max)
    }
}

/// Pieces `E ∩ B_i` for every ball meeting `E`.
fn pieces(domain: &GridDomain, cover: &WhitneyCover, set: &CellSet) -> Vec<(usize, Vec<usize>)> {
    let mut hit: Vec<usize> = set
        .cells()
        .iter()
        .flat_map(|&c| cover.covering(c).iter().map(|&i| i as usize))
        .collect();
    hit.sort_unstable();
    hit.dedup();
    hit.into_iter()
        .map(|i| {
            let cells: Vec<usize> = cover
                .ball_cells(domain, i, 1.0)
                .into_iter()
                .filter(|&c| set.contains(c))
                .collect();
            (i, cells)
        })
        .filter(|(_, c)| !c.is_empty())
        .collect()
}

/// Ratios `Σ_i cap(E ∩ B_i)^{q/p} / cap(E)^{q/p}` over a family of sets.
pub fn quasiadd_scan(
    domain: &GridDomain,
    params: &HSParams,
    cover: &WhitneyCover,
    family: &[LabelledSet],
    solver: &SolverConfig,
) -> QuasiaddScan {
    let split: Vec<Vec<(usize, Vec<usize>)>> = family
        .iter()
        .map(|s| pieces(domain, cover, &s.set))
        .collect();
    let mut wanted: Vec<Vec<usize>> = family.iter().map(|s| s.set.cells().to_vec()).collect();
    for p in &split {
        wanted.extend(p.iter().map(|(_, c)| c.clone()));
    }
    let caps = solve_sets(domain, params, solver, &wanted);
    let e = params.q / params.p;
    let mut scan = QuasiaddScan {
        samples: Vec::new(),
        skipped: Vec::new(),
        max_ratio: 0.0,
        degenerate: 0,
    };
    'sets: for (s, parts) in family.iter().zip(&split) {
        let whole = match &caps[s.set.cells()] {
            Ok(v) => *v,
            Err(err) => {
                scan.skipped.push((s.label.clone(), err.clone()));
                continue;
            }
        };
        let mut piece_caps = Vec::with_capacity(parts.len());
        for (_, cells) in parts {
            match &caps[cells] {
                Ok(v) => piece_caps.push(v.value),
                Err(err) => {
                    scan.skipped.push((s.label.clone(), err.clone()));
                    continue 'sets;
                }
            }
        }
        let sum: f64 = piece_caps.iter().map(|&c| powf(c, e)).sum();
        let ratio = if whole.degenerate {
            scan.degenerate += 1;
            f64::INFINITY
        } else {
            ratio_of(sum, whole.value, e)
        };
        if ratio.is_finite() {
            scan.max_ratio = scan.max_ratio.max(ratio);
        }
        scan.samples.push(QuasiaddSample {
            label: s.label.clone(),
            balls: parts.iter().map(|p| p.0).collect(),
            piece_caps,
            capacity: whole.value,
            sum,
            ratio,
            degenerate: whole.degenerate,
        });
    }
    scan
}

/// One index set `I` of the weak scan.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakSample {
    pub balls: Vec<usize>,
    /// `cap(B_i)` for `i ∈ I`.
    pub ball_caps: Vec<f64>,
    /// `cap(∪_{i∈I} B_i)`.
    pub union_cap: f64,
    pub ratio: f64,
    /// `cap(∪ B_i) ≤ Σ cap(B_i) + 2·tol·Σ cap(B_i)`; meaningful for `q = p`.
    pub subadditive: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakScan {
    pub samples: Vec<WeakSample>,
    pub skipped: Vec<(Vec<usize>, Error)>,
    pub max_ratio: f64,
    pub subadditivity_failures: usize,
}

impl WeakScan {
    pub fn max_ratio_first(&self, n: usize) -> f64 {
        self.samples
            .iter()
            .take(n)
            .map(|s| s.ratio)
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max)
    }
}

/// Ratios `Σ_{i∈I} cap(B_i)^{q/p} / cap(∪_{i∈I} B_i)^{q/p}`.
pub fn weak_quasiadd_scan(
    domain: &GridDomain,
    params: &HSParams,
    cover: &WhitneyCover,
    index_sets: &[Vec<usize>],
    solver: &SolverConfig,
) -> WeakScan {
    let mut wanted = Vec::new();
    for idx in index_sets {
        for &i in idx {
            wanted.push(cover.ball_cells(domain, i, 1.0));
        }
        wanted.push(cover.union_cells(domain, idx));
    }
    let caps = solve_sets(domain, params, solver, &wanted);
    let e = params.q / params.p;
    let mut scan = WeakScan {
        samples: Vec::new(),
        skipped: Vec::new(),
        max_ratio: 0.0,
        subadditivity_failures: 0,
    };
    'sets: for idx in index_sets {
        let mut ball_caps = Vec::with_capacity(idx.len());
        for &i in idx {
            match &caps[&cover.ball_cells(domain, i, 1.0)] {
                Ok(v) => ball_caps.push(v.value),
                Err(err) => {
                    scan.skipped.push((idx.clone(), err.clone()));
                    continue 'sets;
                }
            }
        }
        let whole = match &caps[&cover.union_cells(domain, idx)] {
            Ok(v) => *v,
            Err(err) => {
                scan.skipped.push((idx.clone(), err.clone()));
                continue;
            }
        };
        let sum: f64 = ball_caps.iter().map(|&c| powf(c, e)).sum();
        let plain: f64 = ball_caps.iter().sum();
        let subadditive = whole.value <= plain * (1.0 + 2.0 * solver.tol);
        if !subadditive {
            scan.subadditivity_failures += 1;
        }
        let ratio = if whole.degenerate {
            f64::INFINITY
        } else {
            ratio_of(sum, whole.value, e)
        };
        if ratio.is_finite() {
            scan.max_ratio = scan.max_ratio.max(ratio);
        }
        scan.samples.push(WeakSample {
            balls: idx.clone(),
            ball_caps,
            union_cap: whole.value,
            ratio,
            subadditive,
            degenerate: whole.degenerate,
        });
    }
    scan
}

/// Seeded index sets: `count` sets of `1..=max_size` balls, each the ball
/// nearest to a uniformly drawn point with `d(x, Ω^c) ≥ min_depth`. Drawing
/// points rather than indices keeps the sets comparable across resolutions.
pub fn index_families(
    domain: &GridDomain,
    cover: &WhitneyCover,
    count: usize,
    max_size: usize,
    min_depth: f64,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = family::rng(seed);
    let eligible = family::eligible_balls(domain, cover, domain.h());
    let o = domain.origin();
    let ext = domain.extent();
    let dim = domain.dim();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.random_range(1..=max_size.max(1));
        let mut idx = Vec::with_capacity(k);
        let mut attempts = 0;
        while idx.len() < k && attempts < 10_000 {
            attempts += 1;
            let mut p = [0.0; 3];
            for a in 0..dim {
                p[a] = o[a] + rng.random_range(0.0..1.0) * ext[a] as f64 * domain.h();
            }
            let cell = domain.nearest_cell(&p[..dim]);
            if !domain.is_inside(cell) || domain.dist(cell) < min_depth {
                continue;
            }
            if let Some(i) = cover.nearest_ball(domain, &p[..dim]) {
                if eligible.binary_search(&i).is_ok() && !idx.contains(&i) {
                    idx.push(i);
                }
            }
        }
        idx.sort_unstable();
        if !idx.is_empty() {
            out.push(idx);
        }
    }
    out
}

/// Capacity bounds for one Whitney ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallBoundRecord {
    pub ball: usize,
    pub radius: f64,
    pub capacity: f64,
    /// `μ(B_i) r_i^{β-p}`, or `r_i^{n+β-p}` in Q-regular mode.
    pub reference: f64,
    pub lower_ratio: f64,
    /// Test-function energy over the reference.
    pub upper_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallBounds {
    pub records: Vec<BallBoundRecord>,
    pub skipped: Vec<(usize, Error)>,
    pub min_lower: f64,
    pub max_lower: f64,
    /// `max lower_ratio / min lower_ratio`.
    pub spread: f64,
    /// Balls with `lower_ratio > upper_ratio + tol`.
    pub order_violations: usize,
}

/// Balls resolved by at least `min_cells` cell widths of radius that clear
/// the collar, thinned to at most `max_balls` by a seeded sample.
pub fn resolved_balls(
    domain: &GridDomain,
    cover: &WhitneyCover,
    min_cells: f64,
    max_balls: usize,
    seed: u64,
) -> Vec<usize> {
    let pool: Vec<usize> = family::eligible_balls(domain, cover, domain.h())
        .into_iter()
        .filter(|&i| cover.balls()[i].radius >= min_cells * domain.h())
        .collect();
    if pool.len() <= max_balls {
        return pool;
    }
    let mut rng = family::rng(seed);
    let mut pick: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), max_balls)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    pick.sort_unstable();
    pick
}

/// Lower and upper capacity ratios for the given balls.
pub fn ball_bounds_scan(
    domain: &GridDomain,
    params: &HSParams,
    cover: &WhitneyCover,
    balls: &[usize],
    solver: &SolverConfig,
    mode: IntegrandMode,
) -> BallBounds {
    let wanted: Vec<Vec<usize>> = balls
        .iter()
        .map(|&i| cover.ball_cells(domain, i, 1.0))
        .collect();
    let caps = solve_sets(domain, params, solver, &wanted);
    let n = domain.dim() as f64;
    let (p, beta) = (params.p, params.beta);
    let mut out = BallBounds {
        records: Vec::new(),
        skipped: Vec::new(),
        min_lower: f64::INFINITY,
        max_lower: 0.0,
        spread: 0.0,
        order_violations: 0,
    };
    for (&i, cells) in balls.iter().zip(&wanted) {
        let b = cover.balls()[i];
        let cap = match &caps[cells] {
            Ok(v) => v.value,
            Err(e) => {
                out.skipped.push((i, e.clone()));
                continue;
            }
        };
        let upper = match ball_test_upper_bound(domain, cover, i, beta, p) {
            Ok(u) => u,
            Err(e) => {
                out.skipped.push((i, e));
                continue;
            }
        };
        let reference = match mode {
            IntegrandMode::Ambient => {
                measure_of_ball(domain, b.center, b.radius, MeasureMode::Ambient)
                    * powf(b.radius, beta - p)
            }
            IntegrandMode::QRegular => powf(b.radius, n + beta - p),
        };
        let rec = BallBoundRecord {
            ball: i,
            radius: b.radius,
            capacity: cap,
            reference,
            lower_ratio: cap / reference,
            upper_ratio: upper / reference,
        };
        if rec.lower_ratio > rec.upper_ratio * (1.0 + solver.tol) {
            out.order_violations += 1;
        }
        out.min_lower = out.min_lower.min(rec.lower_ratio);
        out.max_lower = out.max_lower.max(rec.lower_ratio);
        out.records.push(rec);
    }
    out.spread = if out.records.is_empty() {
        0.0
    } else {
        out.max_lower / out.min_lower
    };
    if out.records.is_empty() {
        out.min_lower = 0.0;
    }
    out
}

/// Weighted energies of the radial ramps `u_j` on the unit disc.
#[derive(Debug, Clone, PartialEq)]
pub struct Example62 {
    pub p: f64,
    pub beta: f64,
    pub h: f64,
    pub j: Vec<u32>,
    pub energies: Vec<f64>,
    /// Least-squares slope of `log₂ energy` against `j`; `None` for one level.
    pub slope: Option<f64>,
    /// The predicted slope `-(1 - p + β)`.
    pub predicted: f64,
}

/// `u_j = 1` on `B(0, 1-2^{-j})`, `0` outside `B(0, 1-2^{-j-1})`, linear in
/// the radius between, for `j_min ≤ j ≤ j_max`.
pub fn example_62_sequence(p: f64, beta: f64, j_min: u32, j_max: u32, h: f64) -> Result<Example62> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", "requires 1 < p"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", "requires β ≥ 0"));
    }
    if j_min > j_max {
        return Err(Error::param("j_min", "must not exceed j_max"));
    }
    if j_max > 60 || powf(2.0, -(j_max as f64) - 1.0) < 4.0 * h {
        return Err(Error::param(
            "j_max",
            format!("ramp width 2^-(j_max+1) must be at least 4h = {}", 4.0 * h),
        ));
    }
    let domain = build_domain(
        &ShapeSpec::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        },
        h,
        0.0,
    )?;
    let js: Vec<u32> = (j_min..=j_max).collect();
    let energies = js
        .iter()
        .map(|&j| {
            let a = 1.0 - powf(2.0, -(j as f64));
            let b = 1.0 - powf(2.0, -(j as f64) - 1.0);
            let u = Field::from_fn(&domain, |_, x| {
                let r = sqrt(x[0] * x[0] + x[1] * x[1]);
                ((b - r) / (b - a)).clamp(0.0, 1.0)
            });
            field_energy(&domain, beta, p, &u)
        })
        .collect::<Result<Vec<f64>>>()?;
    let slope = (js.len() > 1).then(|| {
        let xs: Vec<f64> = js.iter().map(|&j| j as f64).collect();
        let ys: Vec<f64> = energies.iter().map(|&e| log2(e)).collect();
        least_squares_slope(&xs, &ys)
    });
    Ok(Example62 {
        p,
        beta,
        h,
        j: js,
        energies,
        slope,
        predicted: -(1.0 - p + beta),
    })
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Classification of a measured quantity under refinement and budget growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Changes by less than 30% under both.
    Bounded,
    /// Grows by at least 1.5× under both.
    Failing,
    Inconclusive,
}

impl Status {
    /// Status of a single growth factor; NaN (nothing measured) is
    /// inconclusive, +inf is failing.
    pub fn classify_one(factor: f64) -> Self {
        if factor.is_nan() {
            Status::Inconclusive
        } else if factor.is_finite() && (factor - 1.0).abs() < BOUNDED_CHANGE {
            Status::Bounded
        } else if factor >= FAILING_GROWTH {
            Status::Failing
        } else {
            Status::Inconclusive
        }
    }

    pub fn classify(budget_factor: f64, refine_factor: f64) -> Self {
        match (
            Self::classify_one(budget_factor),
            Self::classify_one(refine_factor),
        ) {
            (a, b) if a == b => a,
            _ => Status::Inconclusive,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Bounded => "bounded",
            Status::Failing => "failing",
            Status::Inconclusive => "inconclusive",
        }
    }
}

/// Relative change below which a quantity counts as bounded.
pub const BOUNDED_CHANGE: f64 = 0.3;
/// Growth factor at or above which a quantity counts as failing.
pub const FAILING_GROWTH: f64 = 1.5;

/// One condition of the equivalence. `coarse` and `doubled` are measured on
/// the coarse grid at budgets `B` and `2B`; the refinement factor compares
/// `fine` (grid `h/2`) with `refine_base` (grid `h`) at matched effort.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRecord {
    pub name: String,
    pub coarse: f64,
    pub doubled: f64,
    pub refine_base: f64,
    pub fine: f64,
    pub budget_factor: f64,
    pub refine_factor: f64,
    pub status: Status,
}

/// `to / from`, except that a quantity infinite at both levels keeps
/// growing.
fn growth(from: f64, to: f64) -> f64 {
    if from == f64::INFINITY && to == f64::INFINITY {
        f64::INFINITY
    } else {
        to / from
    }
}

impl ConditionRecord {
    fn new(name: &str, coarse: f64, doubled: f64, refine_base: f64, fine: f64) -> Self {
        let budget_factor = growth(coarse, doubled);
        let refine_factor = growth(refine_base, fine);
        Self {
            name: name.to_string(),
            coarse,
            doubled,
            refine_base,
            fine,
            budget_factor,
            refine_factor,
            status: Status::classify(budget_factor, refine_factor),
        }
    }
}

/// Settings of [`equivalence_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceConfig {
    /// Whitney parameter of the quasiadditivity scans.
    pub c: f64,
    /// Whitney parameter of the ball-bound scan; larger than `c` so that
    /// the balls are resolved on coarse grids.
    pub ball_c: f64,
    /// Rayleigh ascent budget at the coarse grid; `0` selects `h^{-2}/32`.
    pub budget: usize,
    /// Sets per quasiadditivity scan.
    pub samples: usize,
    /// Largest number of balls in a set.
    pub max_balls: usize,
    /// Balls in the ball-bound scan.
    pub ball_samples: usize,
    pub solver: SolverConfig,
    pub rayleigh: RayleighConfig,
    pub seed: u64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            c: 1.0 / 54.0,
            ball_c: 0.25,
            budget: 0,
            samples: 4,
            max_balls: 3,
            ball_samples: 4,
            solver: SolverConfig::default(),
            rayleigh: RayleighConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub h: f64,
    /// Rayleigh budgets `B` and `2B` on the coarse grid.
    pub budgets: [usize; 2],
    /// Rayleigh budgets of the plateau values on grids `h` and `h/2`
    /// (`h^{-2}` each).
    pub plateau_budgets: [usize; 2],
    /// (i) Rayleigh lower bound for the inequality constant.
    pub hardy: ConditionRecord,
    /// (ii) strong quasiadditivity max ratio.
    pub quasiadd: ConditionRecord,
    /// (iii) weak quasiadditivity max ratio.
    pub weak: ConditionRecord,
    /// Reciprocal of the smallest ball lower ratio; grows when the
    /// capacity lower bound fails.
    pub ball_lower: ConditionRecord,
    /// Spread of the ball lower ratios on the coarse grid.
    pub ball_spread: f64,
    /// `ℓ^{q'/p}` monotonicity on every ball-capacity sequence for a ladder
    /// of `q' ≥ q`.
    pub interpolation_holds: bool,
    pub consistent: bool,
    pub verdict: String,
}

fn interpolation_ladder(params: &HSParams) -> Vec<f64> {
    (0..5).map(|k| params.q * (1.0 + 0.5 * k as f64)).collect()
}

struct Level {
    /// Rayleigh values at `B`, `2B` and the plateau budget.
    rayleigh: [f64; 3],
    /// Max ratios at the configured tolerance and at half of it.
    quasiadd: (f64, f64),
    weak: (f64, f64),
    inv_lower: f64,
    spread: f64,
    sequences: Vec<Vec<f64>>,
}

/// Strong-scan sets built from the same seeded index sets as the weak scan.
fn unions_of(domain: &GridDomain, cover: &WhitneyCover, sets: &[Vec<usize>]) -> Vec<LabelledSet> {
    sets.iter()
        .enumerate()
        .map(|(k, idx)| LabelledSet {
            label: format!("union:{k}:{}", idx.len()),
            set: CellSet::from_sorted_unchecked(cover.union_cells(domain, idx)),
            balls: idx.clone(),
        })
        .collect()
}

fn measure_level(
    domain: &GridDomain,
    params: &HSParams,
    cfg: &EquivalenceConfig,
    budget: usize,
    plateau: usize,
    coarse: bool,
) -> Result<Level> {
    let cover = build_cover(domain, cfg.c)?;
    let mut rc = cfg.rayleigh.clone();
    rc.iterations = plateau.max(2 * budget);
    rc.seed = cfg.seed;
    let ray = rayleigh_lower_bound(domain, params, &rc)?;
    let rayleigh = [
        ray.value_at(budget),
        ray.value_at(2 * budget),
        ray.value_at(plateau),
    ];

    let min_depth = 0.1 * domain.distances().iter().copied().fold(0.0, f64::max);
    let sets = index_families(
        domain,
        &cover,
        cfg.samples,
        cfg.max_balls,
        min_depth,
        cfg.seed ^ 0x77,
    );
    let unions = unions_of(domain, &cover, &sets);
    let strict = SolverConfig {
        tol: 0.5 * cfg.solver.tol,
        ..cfg.solver
    };
    let strong = quasiadd_scan(domain, params, &cover, &unions, &cfg.solver);
    let weak = weak_quasiadd_scan(domain, params, &cover, &sets, &cfg.solver);
    let (strong2, weak2) = if coarse {
        (
            quasiadd_scan(domain, params, &cover, &unions, &strict).max_ratio,
            weak_quasiadd_scan(domain, params, &cover, &sets, &strict).max_ratio,
        )
    } else {
        (f64::NAN, f64::NAN)
    };

    let ball_cover = build_cover(domain, cfg.ball_c)?;
    let balls = resolved_balls(domain, &ball_cover, 2.0, cfg.ball_samples, cfg.seed ^ 0xba);
    let bounds = ball_bounds_scan(
        domain,
        params,
        &ball_cover,
        &balls,
        &cfg.solver,
        cfg.rayleigh.mode,
    );
    let mut sequences: Vec<Vec<f64>> = weak.samples.iter().map(|s| s.ball_caps.clone()).collect();
    sequences.push(bounds.records.iter().map(|r| r.capacity).collect());
    Ok(Level {
        rayleigh,
        quasiadd: (strong.max_ratio, strong2),
        weak: (weak.max_ratio, weak2),
        inv_lower: if bounds.records.is_empty() {
            f64::NAN
        } else if bounds.min_lower > 0.0 {
            1.0 / bounds.min_lower
        } else {
            f64::INFINITY
        },
        spread: bounds.spread,
        sequences,
    })
}

/// Measures conditions (i)–(iii) and the ball lower bound on `shape` at `h`
/// and `h/2` and classifies each with [`Status::classify`].
///
/// The Rayleigh budget doubling is `B → 2B` on the coarse grid; its
/// refinement compares plateau values after `h^{-2}` iterations on each
/// grid. The scans double their budget by halving the solver tolerance on
/// the same sets, which are drawn in continuum coordinates so that both
/// grids see the same configuration.
pub fn equivalence_experiment(
    shape: &ShapeSpec,
    h: f64,
    params: &HSParams,
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    if !(cfg.c > 0.0 && cfg.c < 1.0 / 3.0) {
        return Err(Error::param("c", "requires 0 < c < 1/3"));
    }
    if !(cfg.ball_c > 0.0 && cfg.ball_c < 1.0 / 3.0) {
        return Err(Error::param("ball_c", "requires 0 < ball_c < 1/3"));
    }
    let budget = if cfg.budget > 0 {
        cfg.budget
    } else {
        libm::round((1.0 / (h * h)) / 32.0).max(1.0) as usize
    };
    let coarse_dom = build_domain(shape, h, 0.0)?;
    let fine_dom = build_domain(shape, 0.5 * h, 0.0)?;
    let plateau = [
        libm::round(1.0 / (h * h)) as usize,
        libm::round(4.0 / (h * h)) as usize,
    ];
    let coarse = measure_level(&coarse_dom, params, cfg, budget, plateau[0], true)?;
    let fine = measure_level(&fine_dom, params, cfg, 4 * budget, plateau[1], false)?;

    let [r1, r2, rp] = coarse.rayleigh;
    let hardy = ConditionRecord::new("hardy", r1, r2, rp, fine.rayleigh[2]);
    let (q1, q2) = coarse.quasiadd;
    let quasiadd = ConditionRecord::new("quasiadd", q1, q2, q1, fine.quasiadd.0);
    let (w1, w2) = coarse.weak;
    let weak = ConditionRecord::new("weak_quasiadd", w1, w2, w1, fine.weak.0);
    // the ball scan has no budget; its doubled value equals the coarse one
    let l1 = coarse.inv_lower;
    let ball_lower = ConditionRecord::new("ball_lower_bound", l1, l1, l1, fine.inv_lower);
    let ball_lower = ConditionRecord {
        status: Status::classify_one(ball_lower.refine_factor),
        ..ball_lower
    };

    let ladder = interpolation_ladder(params);
    let interpolation_holds = coarse.sequences.iter().chain(&fine.sequences).all(|seq| {
        ladder
            .windows(2)
            .all(|w| interpolation_check(seq, w[0], w[1], params.p))
    });

    let (consistent, verdict) = verdict(&hardy, &quasiadd, &weak, &ball_lower);
    Ok(EquivalenceReport {
        h,
        budgets: [budget, 2 * budget],
        plateau_budgets: plateau,
        hardy,
        quasiadd,
        weak,
        ball_lower,
        ball_spread: coarse.spread,
        interpolation_holds,
        consistent,
        verdict,
    })
}

/// Verdict text and whether the pattern agrees with the equivalence:
/// the inequality holds iff (ii) and the ball bound hold, iff (iii) and
/// the ball bound hold.
fn verdict(
    hardy: &ConditionRecord,
    quasiadd: &ConditionRecord,
    weak: &ConditionRecord,
    lower: &ConditionRecord,
) -> (bool, String) {
    use Status::*;
    let parts = [hardy, quasiadd, weak, lower];
    if parts.iter().any(|c| c.status == Inconclusive) {
        let names: Vec<&str> = parts
            .iter()
            .filter(|c| c.status == Inconclusive)
            .map(|c| c.name.as_str())
            .collect();
        return (false, format!("inconclusive: {}", names.join(", ")));
    }
    let strong_ok = quasiadd.status == Bounded && lower.status == Bounded;
    let weak_ok = weak.status == Bounded && lower.status == Bounded;
    let hs_ok = hardy.status == Bounded;
    let consistent = hs_ok == strong_ok && hs_ok == weak_ok;
    let mut text = String::from(if hs_ok { "HS holds" } else { "HS fails" });
    text.push_str(if lower.status == Bounded {
        "; ball lower bound holds"
    } else {
        "; ball lower bound fails"
    });
    text.push_str(match (quasiadd.status, lower.status) {
        (Bounded, Failing) => "; quasiadd vacuous",
        (Bounded, _) => "; quasiadd holds",
        _ => "; quasiadd fails",
    });
    text.push_str(if consistent {
        " (consistent)"
    } else {
        " (inconsistent)"
    });
    (consistent, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: f64) -> GridDomain {
        build_domain(
            &ShapeSpec::Box {
                min: vec![0.0, 0.0],
                max: vec![1.0, 1.0],
            },
            h,
            0.0,
        )
        .unwrap()
    }

    fn fast() -> SolverConfig {
        SolverConfig {
            tol: 1e-6,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn single_ball_weak_ratio_is_one() {
        let d = square(1.0 / 32.0);
        let cover = build_cover(&d, 0.2).unwrap();
        let params = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let scan = weak_quasiadd_scan(&d, &params, &cover, &[vec![0]], &fast());
        assert_eq!(scan.samples[0].ratio, 1.0);
        assert!(scan.samples[0].subadditive);
    }

    #[test]
    fn single_ball_strong_ratio_at_least_one() {
        let d = square(1.0 / 32.0);
        let cover = build_cover(&d, 0.2).unwrap();
        let params = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let set = LabelledSet {
            label: "b0".into(),
            set: CellSet::from_sorted_unchecked(cover.ball_cells(&d, 0, 1.0)),
            balls: vec![0],
        };
        let scan = quasiadd_scan(&d, &params, &cover, &[set], &fast());
        let s = &scan.samples[0];
        assert!(s.balls.contains(&0));
        assert!(s.ratio >= 1.0 - 2.0 * fast().tol, "{}", s.ratio);
    }

    #[test]
    fn union_is_subadditive() {
        let d = square(1.0 / 32.0);
        let cover = build_cover(&d, 0.1).unwrap();
        let params = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let sets = index_families(&d, &cover, 3, 3, 0.1, 5);
        let scan = weak_quasiadd_scan(&d, &params, &cover, &sets, &fast());
        assert_eq!(scan.subadditivity_failures, 0);
        assert!(scan.samples.iter().all(|s| s.ratio >= 1.0 - 1e-9));
    }

    #[test]
    fn index_families_are_seeded() {
        let d = square(1.0 / 32.0);
        let cover = build_cover(&d, 0.1).unwrap();
        let a = index_families(&d, &cover, 5, 4, 0.05, 9);
        assert_eq!(a, index_families(&d, &cover, 5, 4, 0.05, 9));
        assert!(a.iter().all(|s| !s.is_empty() && s.len() <= 4));
    }

    #[test]
    fn ball_bounds_are_ordered() {
        let d = square(1.0 / 48.0);
        let cover = build_cover(&d, 0.2).unwrap();
        let params = HSParams::new(1.5, 1.5, 0.0).unwrap();
        let balls = resolved_balls(&d, &cover, 2.0, 4, 1);
        assert!(!balls.is_empty());
        let b = ball_bounds_scan(&d, &params, &cover, &balls, &fast(), IntegrandMode::Ambient);
        assert_eq!(b.order_violations, 0);
        assert!(b.spread >= 1.0);
    }

    #[test]
    fn example_sequence_validation() {
        assert!(example_62_sequence(2.0, 1.5, 2, 6, 1.0 / 64.0).is_err());
        assert!(example_62_sequence(1.0, 1.5, 2, 3, 1.0 / 64.0).is_err());
        let one = example_62_sequence(2.0, 0.0, 0, 0, 1.0 / 32.0).unwrap();
        assert_eq!(one.energies.len(), 1);
        assert!(one.slope.is_none());
    }

    #[test]
    fn ramp_energy_matches_radial_integral() {
        // β = 0, p = 2: ∫ |∇u|² = 2π ∫_a^b r dr / (b-a)² = π (a+b)/(b-a)
        let e = example_62_sequence(2.0, 0.0, 1, 1, 1.0 / 256.0).unwrap();
        let (a, b) = (0.5, 0.75);
        let exact = core::f64::consts::PI * (a + b) / (b - a);
        assert!(
            (e.energies[0] / exact - 1.0).abs() < 0.05,
            "{} vs {exact}",
            e.energies[0]
        );
    }

    #[test]
    fn slope_fit_exact_on_lines() {
        assert!((least_squares_slope(&[1.0, 2.0, 3.0], &[5.0, 3.0, 1.0]) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn status_rules() {
        assert_eq!(Status::classify(1.1, 0.9), Status::Bounded);
        assert_eq!(Status::classify(1.6, 2.0), Status::Failing);
        assert_eq!(Status::classify(1.6, 1.1), Status::Inconclusive);
        assert_eq!(Status::classify(f64::INFINITY, 1.5), Status::Failing);
        assert_eq!(Status::classify_one(f64::NAN), Status::Inconclusive);
        assert_eq!(growth(f64::INFINITY, f64::INFINITY), f64::INFINITY);
        assert!(growth(f64::NAN, 1.0).is_nan());
    }
}
