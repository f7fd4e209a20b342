//! The `(q, p, β)`-Hardy–Sobolev functional, Maz'ya ratios, and a numerical
//! replay of the dyadic truncation argument behind the Maz'ya
//! characterization.
//!
//! The left-hand side is
//! `(∫ |u|^q d^{-(q/p)(p-β)} μ(B(x, d))^{(q-p)/p} dμ)^{1/q}` with `d = d(x, Ω^c)`;
//! the right-hand side is the weighted energy `(∫ |∇u|^p d^β dμ)^{1/p}`.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng;

use crate::capacity::{
    ball_test_function, energy_density, field_energy, lipschitz_test_function, solve_capacity,
    CapacityProblem, CellSet, Energy, Field, SolverConfig,
};
use crate::error::{Error, Result};
use crate::family::{self, LabelledSet};
use crate::geometry::{measure_of_ball, GridDomain, MeasureMode};
use crate::math::{ceil, exp, log, log2, powf, unit_ball_volume};
use crate::par;
use crate::whitney::build_cover;

/// How `μ(B(x, d))` enters the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntegrandMode {
    /// `μ(B(x, d)) = ω_n d^n`.
    #[default]
    Ambient,
    /// Ahlfors-regular simplification `d^{(q/p)(n-p+β) - n}`.
    QRegular,
}

/// Exponents of a Hardy–Sobolev inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HSParams {
    pub p: f64,
    pub q: f64,
    pub beta: f64,
}

impl HSParams {
    pub fn new(p: f64, q: f64, beta: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::param("p", "requires 1 < p"));
        }
        if !(q >= p && q.is_finite()) {
            return Err(Error::param("q", "requires p ≤ q < ∞"));
        }
        if !beta.is_finite() {
            return Err(Error::param("beta", "must be finite"));
        }
        Ok(Self { p, q, beta })
    }

    /// `q ≤ np/(n-p)` whenever `p < n`.
    pub fn sobolev_admissible(&self, n: usize) -> bool {
        let n = n as f64;
        self.p >= n || self.q <= n * self.p / (n - self.p)
    }

    /// The power of `d` in the Q-regular integrand.
    pub fn distance_exponent(&self, n: usize) -> f64 {
        (self.q / self.p) * (n as f64 - self.p + self.beta) - n as f64
    }
}

/// Per-cell Maz'ya integrand `ρ(x)`; zero outside Ω.
pub fn integrand_density(domain: &GridDomain, params: &HSParams, mode: IntegrandMode) -> Vec<f64> {
    let n = domain.dim();
    let (p, q, beta) = (params.p, params.q, params.beta);
    let mut rho = vec![0.0; domain.len()];
    for &x in domain.inside_cells() {
        let d = domain.dist(x);
        rho[x] = match mode {
            IntegrandMode::Ambient => {
                let mu = measure_of_ball(domain, x, d, MeasureMode::Ambient);
                powf(d, -(q / p) * (p - beta)) * powf(mu, (q - p) / p)
            }
            IntegrandMode::QRegular => powf(d, params.distance_exponent(n)),
        };
    }
    rho
}

/// `Σ |u|^q ρ h^n` (the `q`-th power of [`hs_lhs`]).
fn lhs_power(domain: &GridDomain, u: &Field, rho: &[f64], q: f64) -> f64 {
    let s: f64 = domain
        .inside_cells()
        .iter()
        .filter(|&&x| u.get(x) != 0.0)
        .map(|&x| powf(u.get(x).abs(), q) * rho[x])
        .sum();
    s * domain.cell_measure()
}

/// Left side of the Hardy–Sobolev inequality.
pub fn hs_lhs(
    domain: &GridDomain,
    u: &Field,
    params: &HSParams,
    mode: IntegrandMode,
) -> Result<f64> {
    let rho = integrand_density(domain, params, mode);
    let v = powf(lhs_power(domain, u, &rho, params.q), 1.0 / params.q);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(String::from("Hardy–Sobolev integrand")))
    }
}

/// Right side `(Σ |∇_h u|^p d^β h^n)^{1/p}`.
pub fn hs_rhs(domain: &GridDomain, u: &Field, params: &HSParams) -> Result<f64> {
    Ok(powf(
        field_energy(domain, params.beta, params.p, u)?,
        1.0 / params.p,
    ))
}

/// `hs_lhs / hs_rhs`, a lower bound for the best constant.
pub fn hs_quotient(
    domain: &GridDomain,
    u: &Field,
    params: &HSParams,
    mode: IntegrandMode,
) -> Result<f64> {
    let rhs = hs_rhs(domain, u, params)?;
    if rhs == 0.0 {
        return Err(Error::Degenerate(String::from("zero energy")));
    }
    Ok(hs_lhs(domain, u, params, mode)? / rhs)
}

/// Seeds and budget for [`rayleigh_lower_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct RayleighConfig {
    pub whitney_bumps: usize,
    pub test_functions: usize,
    pub random_fields: usize,
    /// Ascent iterations per seed.
    pub iterations: usize,
    /// Whitney parameter of the cover the bumps are drawn from.
    pub cover_c: f64,
    pub seed: u64,
    pub mode: IntegrandMode,
}

impl Default for RayleighConfig {
    fn default() -> Self {
        Self {
            whitney_bumps: 3,
            test_functions: 2,
            random_fields: 2,
            iterations: 512,
            cover_c: 1.0 / 54.0,
            seed: 0,
            mode: IntegrandMode::Ambient,
        }
    }
}

/// Quotient history of one ascent run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTrace {
    pub label: String,
    pub initial: f64,
    /// Best quotient after each budget in [`RayleighResult::budgets`].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RayleighResult {
    pub value: f64,
    pub witness: Field,
    /// Iteration budgets `1, 2, 4, …` (and the final budget).
    pub budgets: Vec<usize>,
    /// Best quotient over all seeds at each budget.
    pub trace: Vec<f64>,
    pub seeds: Vec<SeedTrace>,
}

impl RayleighResult {
    /// `trace[k+1] / trace[k]` for successive budget doublings.
    pub fn growth_factors(&self) -> Vec<f64> {
        self.trace.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Best quotient at the largest recorded budget not exceeding `budget`.
    pub fn value_at(&self, budget: usize) -> f64 {
        self.budgets
            .iter()
            .zip(&self.trace)
            .filter(|(b, _)| **b <= budget)
            .map(|(_, v)| *v)
            .next_back()
            .unwrap_or(0.0)
    }
}

fn budget_ladder(iterations: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut b = 1;
    while b <= iterations {
        out.push(b);
        b *= 2;
    }
    if out.last() != Some(&iterations) && iterations > 0 {
        out.push(iterations);
    }
    out
}

struct Ascent<'a> {
    energy: Energy<'a>,
    rho: Vec<f64>,
    inv_diag: Vec<f64>,
    free: Vec<usize>,
    p: f64,
    q: f64,
    cell_measure: f64,
}

impl Ascent<'_> {
    fn log_quotient(&self, u: &[f64]) -> f64 {
        let a: f64 = self
            .free
            .iter()
            .map(|&c| powf(u[c], self.q) * self.rho[c])
            .sum::<f64>()
            * self.cell_measure;
        let b = self.energy.value(u, 0.0);
        if a > 0.0 && b > 0.0 {
            log(a) / self.q - log(b) / self.p
        } else {
            f64::NEG_INFINITY
        }
    }

    fn project(&self, u: &mut [f64]) {
        let top = self.free.iter().fold(0.0f64, |m, &c| m.max(u[c]));
        if top > 0.0 {
            for &c in &self.free {
                u[c] /= top;
            }
        }
    }

    /// Preconditioned gradient ascent on `log(lhs/rhs)` with backtracking.
    fn run(&self, mut u: Vec<f64>, budgets: &[usize]) -> (Vec<f64>, Vec<f64>, f64) {
        for (c, v) in u.iter_mut().enumerate() {
            *v = if self.inv_diag[c] > 0.0 {
                v.max(0.0)
            } else {
                0.0
            };
        }
        self.project(&mut u);
        let mut f = self.log_quotient(&u);
        let initial = exp(f);
        let iterations = budgets.last().copied().unwrap_or(0);
        let mut values = Vec::with_capacity(budgets.len());
        let mut next = 0;
        let mut grad_b = vec![0.0; u.len()];
        let mut dir = vec![0.0; u.len()];
        let mut trial = u.clone();
        let mut alpha = 0.5;
        let mut stalled = false;
        for it in 1..=iterations {
            if !stalled && f.is_finite() {
                let b = self.energy.value_grad(&u, 0.0, &mut grad_b);
                let a: f64 = self
                    .free
                    .iter()
                    .map(|&c| powf(u[c], self.q) * self.rho[c])
                    .sum::<f64>()
                    * self.cell_measure;
                let mut slope = 0.0;
                for &c in &self.free {
                    let ga = self.q * powf(u[c], self.q - 1.0) * self.rho[c] * self.cell_measure;
                    let g = b * (ga / (self.q * a) - grad_b[c] / (self.p * b));
                    dir[c] = self.inv_diag[c] * g;
                    slope += g * dir[c];
                }
                slope /= b;
                let mut accepted = false;
                for _ in 0..40 {
                    for &c in &self.free {
                        trial[c] = (u[c] + alpha * dir[c]).max(0.0);
                    }
                    let ft = self.log_quotient(&trial);
                    if ft >= f + 1e-4 * alpha * slope && ft > f {
                        self.project(&mut trial);
                        core::mem::swap(&mut u, &mut trial);
                        f = ft;
                        alpha *= 1.5;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    stalled = true;
                }
            }
            while next < budgets.len() && budgets[next] == it {
                values.push(exp(f));
                next += 1;
            }
        }
        (u, values, initial)
    }
}

/// Maximizes `hs_lhs / hs_rhs` from Whitney bumps, capacity test functions
/// and random smooth fields; the best value is a lower bound for the best
/// Hardy–Sobolev constant.
pub fn rayleigh_lower_bound(
    domain: &GridDomain,
    params: &HSParams,
    cfg: &RayleighConfig,
) -> Result<RayleighResult> {
    let h = domain.h();
    let seeds = rayleigh_seeds(domain, params, cfg)?;
    if seeds.is_empty() {
        return Err(Error::Degenerate(String::from("no usable initializations")));
    }
    let energy = Energy::new(domain, params.beta, params.p);
    let diag = energy.jacobi_diagonal(domain.len());
    let mut inv_diag = vec![0.0; domain.len()];
    let mut free = Vec::new();
    for &c in domain.inside_cells() {
        if domain.dist(c) >= h && diag[c] > 0.0 && diag[c].is_finite() {
            inv_diag[c] = 1.0 / diag[c];
            free.push(c);
        }
    }
    let ascent = Ascent {
        energy,
        rho: integrand_density(domain, params, cfg.mode),
        inv_diag,
        free,
        p: params.p,
        q: params.q,
        cell_measure: domain.cell_measure(),
    };
    let budgets = budget_ladder(cfg.iterations);
    let runs = par::map(&seeds, |_, (label, u)| {
        let (w, values, initial) = ascent.run(u.values().to_vec(), &budgets);
        (label.clone(), w, values, initial)
    });
    let mut trace = vec![0.0f64; budgets.len()];
    let mut best = (f64::NEG_INFINITY, None);
    let mut traces = Vec::with_capacity(runs.len());
    for (label, w, values, initial) in runs {
        if !initial.is_finite() || initial <= 0.0 {
            continue;
        }
        for (t, v) in trace.iter_mut().zip(&values) {
            *t = t.max(*v);
        }
        let last = values.last().copied().unwrap_or(initial);
        if last > best.0 {
            best = (last, Some(w));
        }
        traces.push(SeedTrace {
            label,
            initial,
            values,
        });
    }
    let witness = match best.1 {
        Some(w) => Field::from_values(domain, w)?,
        None => {
            return Err(Error::Degenerate(String::from(
                "all initializations have zero energy",
            )))
        }
    };
    Ok(RayleighResult {
        value: best.0,
        witness,
        budgets,
        trace,
        seeds: traces,
    })
}

fn rayleigh_seeds(
    domain: &GridDomain,
    params: &HSParams,
    cfg: &RayleighConfig,
) -> Result<Vec<(String, Field)>> {
    let h = domain.h();
    let mut rng = family::rng(cfg.seed);
    let mut seeds = Vec::new();
    if cfg.whitney_bumps > 0 {
        let cover = build_cover(domain, cfg.cover_c)?;
        for s in family::single_balls(domain, &cover, cfg.whitney_bumps, h, &mut rng) {
            seeds.push((
                format!("bump:{}", s.balls[0]),
                ball_test_function(domain, &cover, s.balls[0]),
            ));
        }
    }
    let dmax = domain.distances().iter().copied().fold(0.0, f64::max);
    for k in 0..cfg.test_functions {
        let s = dmax * (k + 1) as f64 / (cfg.test_functions + 1) as f64;
        if let Some(ls) = family::distance_sublevels(domain, &[s]).pop() {
            if let Ok(problem) = CapacityProblem::new(domain, params.beta, params.p, ls.set) {
                seeds.push((
                    format!("test:{}", ls.label),
                    lipschitz_test_function(&problem)?,
                ));
            }
        }
    }
    let (lo, hi) = grid_bounds(domain);
    let diam = (0..domain.dim()).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    for k in 0..cfg.random_fields {
        let bumps: Vec<([f64; 3], f64, f64)> = (0..5)
            .map(|_| {
                let c = domain.inside_cells()[rng.random_range(0..domain.inside_cells().len())];
                let sigma = diam * rng.random_range(0.05..0.3);
                let amp = rng.random_range(0.2..1.0);
                (domain.center(c), sigma, amp)
            })
            .collect();
        let u = Field::from_fn(domain, |_, x| {
            bumps
                .iter()
                .map(|(c, s, a)| {
                    let r2: f64 = (0..domain.dim())
                        .map(|i| (x[i] - c[i]) * (x[i] - c[i]))
                        .sum();
                    a * exp(-0.5 * r2 / (s * s))
                })
                .sum()
        });
        seeds.push((format!("random:{k}"), u));
    }
    Ok(seeds)
}

fn grid_bounds(domain: &GridDomain) -> ([f64; 3], [f64; 3]) {
    let o = domain.origin();
    let e = domain.extent();
    let h = domain.h();
    let mut hi = o;
    for a in 0..domain.dim() {
        hi[a] = o[a] + e[a] as f64 * h;
    }
    (o, hi)
}

/// `∫_E ρ dμ`, the left side of the Maz'ya condition.
pub fn mazya_integral(
    domain: &GridDomain,
    set: &CellSet,
    params: &HSParams,
    mode: IntegrandMode,
) -> f64 {
    let rho = integrand_density(domain, params, mode);
    set.cells().iter().map(|&c| rho[c]).sum::<f64>() * domain.cell_measure()
}

/// One Maz'ya ratio `∫_E ρ / cap(E)^{q/p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MazyaSample {
    pub label: String,
    pub cells: usize,
    pub lhs: f64,
    pub capacity: f64,
    /// `f64::INFINITY` when the capacity is degenerate and `lhs > 0`.
    pub ratio: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MazyaScan {
    pub samples: Vec<MazyaSample>,
    /// Samples whose capacity solve failed, with the reason.
    pub skipped: Vec<(String, Error)>,
    /// Largest finite ratio; a lower bound for `C_1`.
    pub max_ratio: f64,
    /// Some sample has positive integral but degenerate capacity.
    pub failure: bool,
}

/// Maz'ya ratios over a family of condensers.
pub fn mazya_scan(
    domain: &GridDomain,
    params: &HSParams,
    family: &[LabelledSet],
    solver: &SolverConfig,
    mode: IntegrandMode,
    floor: f64,
) -> MazyaScan {
    let rho = integrand_density(domain, params, mode);
    let hn = domain.cell_measure();
    let results = par::map(family, |_, s| {
        let lhs = s.set.cells().iter().map(|&c| rho[c]).sum::<f64>() * hn;
        let cap = CapacityProblem::new(domain, params.beta, params.p, s.set.clone())
            .and_then(|prob| solve_capacity(&prob, solver))
            .map(|r| r.value);
        (s.label.clone(), s.set.len(), lhs, cap)
    });
    let mut scan = MazyaScan {
        samples: Vec::new(),
        skipped: Vec::new(),
        max_ratio: 0.0,
        failure: false,
    };
    for (label, cells, lhs, cap) in results {
        match cap {
            Ok(capacity) => {
                let degenerate = capacity <= floor;
                let ratio = if degenerate {
                    if lhs > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    lhs / powf(capacity, params.q / params.p)
                };
                if ratio.is_infinite() {
                    scan.failure = true;
                } else {
                    scan.max_ratio = scan.max_ratio.max(ratio);
                }
                scan.samples.push(MazyaSample {
                    label,
                    cells,
                    lhs,
                    capacity,
                    ratio,
                    degenerate,
                });
            }
            Err(e) => scan.skipped.push((label, e)),
        }
    }
    scan
}

/// Outcome of the witness inequality `∫_E ρ ≤ Σ |s u*|^q ρ h^n` with
/// `s = 1 / min_E |u*|`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliesReport {
    pub checked: usize,
    /// Sets on which the witness vanishes somewhere.
    pub skipped: usize,
    pub violations: usize,
    /// `max_E ∫_E ρ / (s^q Σ |u*|^q ρ h^n)`; at most 1 without violations.
    pub worst_ratio: f64,
}

pub fn applies_check(
    domain: &GridDomain,
    witness: &Field,
    family: &[LabelledSet],
    params: &HSParams,
    mode: IntegrandMode,
) -> AppliesReport {
    let rho = integrand_density(domain, params, mode);
    let full = lhs_power(domain, witness, &rho, params.q);
    let hn = domain.cell_measure();
    let mut rep = AppliesReport {
        checked: 0,
        skipped: 0,
        violations: 0,
        worst_ratio: 0.0,
    };
    for s in family {
        let m = s
            .set
            .cells()
            .iter()
            .map(|&c| witness.get(c).abs())
            .fold(f64::INFINITY, f64::min);
        if !(m > 0.0) || s.set.is_empty() {
            rep.skipped += 1;
            continue;
        }
        let lhs = s.set.cells().iter().map(|&c| rho[c]).sum::<f64>() * hn;
        let rhs = powf(1.0 / m, params.q) * full;
        let ratio = lhs / rhs;
        rep.checked += 1;
        rep.worst_ratio = rep.worst_ratio.max(ratio);
        if ratio > 1.0 + 1e-12 {
            rep.violations += 1;
        }
    }
    rep
}

/// Options of [`truncation_chain_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Number of top levels whose sets `E_{j+1}` get capacity solves for
    /// chain (a); zero skips it.
    pub solve_levels: usize,
    pub solver: SolverConfig,
    pub mode: IntegrandMode,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            solve_levels: 0,
            solver: SolverConfig::default(),
            mode: IntegrandMode::Ambient,
        }
    }
}

/// One dyadic level `j` with shell `E_j ∖ E_{j+1} = {2^j < |u| ≤ 2^{j+1}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub j: i32,
    pub shell_cells: usize,
    /// `Σ_{shell} w |∇u|^p h^n`.
    pub shell_energy: f64,
    /// Energy of the truncation `u_j = clamp(2^{-j}|u| - 1, 0, 1)`.
    pub truncated_energy: f64,
    /// `2^{-jp} · shell_energy`.
    pub scaled_bound: f64,
    /// `cap(E_{j+1})`, when solved.
    pub capacity: Option<f64>,
    /// `∫_{E_{j+1}} ρ dμ`.
    pub level_integral: f64,
}

/// Chain (a) restricted to levels `j ≥ lowest_level`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainA {
    pub lowest_level: i32,
    /// `Σ_{E_{lowest+1}} |u|^q ρ h^n`.
    pub lhs: f64,
    /// Largest `∫_{E_{j+1}} ρ / cap(E_{j+1})^{q/p}` over the solved levels.
    pub c1: f64,
    /// `4^q C_1 Σ_j 2^{jq} cap(E_{j+1})^{q/p}`.
    pub rhs: f64,
    pub holds: bool,
    /// `hs_lhs(u) / hs_rhs(u)`.
    pub quotient: f64,
    /// `4 C_1^{1/q}`.
    pub constant_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub levels: Vec<LevelRecord>,
    pub total_energy: f64,
    /// Positive cells below the lowest tracked level.
    pub untracked_cells: usize,
    /// `Σ_j max(0, 2^{jp} E(u_j) - S_j) / Σ_j S_j`.
    pub leak: f64,
    /// Largest per-level `2^{jp} E(u_j) / S_j - 1`.
    pub max_level_leak: f64,
    /// `Σ_j S_j^{q/p}`.
    pub chain_c_lhs: f64,
    /// `(Σ_j S_j)^{q/p}`.
    pub chain_c_rhs: f64,
    pub chain_c_holds: bool,
    pub chain_a: Option<ChainA>,
}

/// Deepest level span tracked below the top level.
const MAX_LEVELS: i32 = 64;

/// Rebuilds level sets and truncations of `u` and checks the three chains.
pub fn truncation_chain_check(
    domain: &GridDomain,
    u: &Field,
    params: &HSParams,
    cfg: &ChainConfig,
) -> Result<ChainReport> {
    let (p, q) = (params.p, params.q);
    let inside = domain.inside_cells();
    let top = u.max_abs();
    let bottom = inside
        .iter()
        .map(|&c| u.get(c).abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(top > 0.0) {
        return Err(Error::Degenerate(String::from("empty level-set cascade")));
    }
    let level_of = |v: f64| ceil(log2(v)) as i32 - 1;
    let j_max = level_of(top);
    let j_min = level_of(bottom).max(j_max - MAX_LEVELS + 1);
    let density = energy_density(domain, params.beta, p, u);
    let total_energy: f64 = density.iter().sum();
    let rho = integrand_density(domain, params, cfg.mode);
    let hn = domain.cell_measure();

    let mut untracked = 0;
    let nlev = (j_max - j_min + 1) as usize;
    let mut shell_energy = vec![0.0; nlev];
    let mut shell_cells = vec![0usize; nlev];
    for &c in inside {
        let v = u.get(c).abs();
        if v == 0.0 {
            continue;
        }
        // exact dyadic placement, independent of log rounding
        let mut j = level_of(v).clamp(j_min - 1, j_max);
        while j < j_max && v > exp2i(j + 1) {
            j += 1;
        }
        while j >= j_min && v <= exp2i(j) {
            j -= 1;
        }
        if j < j_min {
            untracked += 1;
            continue;
        }
        let k = (j - j_min) as usize;
        shell_energy[k] += density[c];
        shell_cells[k] += 1;
    }

    let mut levels = Vec::with_capacity(nlev);
    for k in 0..nlev {
        let j = j_min + k as i32;
        let scale = exp2i(-j);
        let uj = Field::from_values(
            domain,
            u.values()
                .iter()
                .map(|v| (scale * v.abs() - 1.0).clamp(0.0, 1.0))
                .collect(),
        )?;
        let truncated = field_energy(domain, params.beta, p, &uj)?;
        let upper = exp2i(j + 1);
        let level_integral = inside
            .iter()
            .filter(|&&c| u.get(c).abs() > upper)
            .map(|&c| rho[c])
            .sum::<f64>()
            * hn;
        levels.push(LevelRecord {
            j,
            shell_cells: shell_cells[k],
            shell_energy: shell_energy[k],
            truncated_energy: truncated,
            scaled_bound: powf(scale, p) * shell_energy[k],
            capacity: None,
            level_integral,
        });
    }

    let shell_sum: f64 = shell_energy.iter().sum();
    let mut excess = 0.0;
    let mut max_level_leak: f64 = 0.0;
    for l in &levels {
        let rescaled = powf(exp2i(l.j), p) * l.truncated_energy;
        excess += (rescaled - l.shell_energy).max(0.0);
        if l.shell_energy > 0.0 {
            max_level_leak = max_level_leak.max(rescaled / l.shell_energy - 1.0);
        }
    }
    let leak = if shell_sum > 0.0 {
        excess / shell_sum
    } else {
        0.0
    };
    let r = q / p;
    let chain_c_lhs: f64 = shell_energy.iter().map(|&s| powf(s, r)).sum();
    let chain_c_rhs = powf(shell_sum, r);
    let chain_c_holds =
        chain_c_lhs <= chain_c_rhs * (1.0 + 1e-12) && shell_sum <= total_energy * (1.0 + 1e-12);

    let chain_a = if cfg.solve_levels > 0 {
        Some(chain_a(domain, u, params, cfg, &mut levels, &rho)?)
    } else {
        None
    };

    Ok(ChainReport {
        levels,
        total_energy,
        untracked_cells: untracked,
        leak,
        max_level_leak,
        chain_c_lhs,
        chain_c_rhs,
        chain_c_holds,
        chain_a,
    })
}

fn chain_a(
    domain: &GridDomain,
    u: &Field,
    params: &HSParams,
    cfg: &ChainConfig,
    levels: &mut [LevelRecord],
    rho: &[f64],
) -> Result<ChainA> {
    let (p, q) = (params.p, params.q);
    let start = levels.len().saturating_sub(cfg.solve_levels);
    let lowest = levels[start].j;
    let sets: Vec<CellSet> = levels[start..]
        .iter()
        .map(|l| {
            let mask: Vec<bool> = u
                .values()
                .iter()
                .map(|v| v.abs() > exp2i(l.j + 1))
                .collect();
            CellSet::from_mask(domain, &mask)
        })
        .collect();
    let caps = par::map(&sets, |_, set| {
        if set.is_empty() {
            return Ok(0.0);
        }
        let prob = CapacityProblem::new(domain, params.beta, p, set.clone())?;
        solve_capacity(&prob, &cfg.solver).map(|r| r.value)
    });
    let mut c1: f64 = 0.0;
    let mut sum = 0.0;
    for (l, cap) in levels[start..].iter_mut().zip(caps) {
        let cap = cap?;
        l.capacity = Some(cap);
        if cap > 0.0 {
            c1 = c1.max(l.level_integral / powf(cap, q / p));
        }
        sum += powf(exp2i(l.j), q) * powf(cap, q / p);
    }
    let threshold = exp2i(lowest + 1);
    let lhs = domain
        .inside_cells()
        .iter()
        .filter(|&&c| u.get(c).abs() > threshold)
        .map(|&c| powf(u.get(c).abs(), q) * rho[c])
        .sum::<f64>()
        * domain.cell_measure();
    let rhs = powf(4.0, q) * c1 * sum;
    let quotient = hs_quotient(domain, u, params, cfg.mode)?;
    Ok(ChainA {
        lowest_level: lowest,
        lhs,
        c1,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
        quotient,
        constant_bound: 4.0 * powf(c1, 1.0 / q),
    })
}

fn exp2i(j: i32) -> f64 {
    crate::math::exp2(j as f64)
}

/// `(Σ a_i^r)^{1/r}`.
pub fn power_sum_norm(a: &[f64], r: f64) -> f64 {
    let top = a.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    // factor out the maximum to avoid overflow for large r
    top * powf(a.iter().map(|&x| powf(x / top, r)).sum::<f64>(), 1.0 / r)
}

/// `(Σ a_i^{q'/p})^{p/q'} ≤ (Σ a_i^{q/p})^{p/q}` for `q ≤ q'`, up to rounding.
/// Returns `false` for invalid input (negative or non-finite terms, `q > q'`).
pub fn interpolation_check(a: &[f64], q: f64, q_prime: f64, p: f64) -> bool {
    if !(p > 0.0 && q > 0.0 && q <= q_prime) || a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return false;
    }
    power_sum_norm(a, q_prime / p) <= power_sum_norm(a, q / p) * (1.0 + 1e-12)
}

/// The constant `ω_n^{(q-p)/p}` relating the ambient and Q-regular integrands.
pub fn mode_factor(n: usize, params: &HSParams) -> f64 {
    powf(unit_ball_volume(n), (params.q - params.p) / params.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, ShapeSpec};
    use alloc::vec;
    use proptest::prelude::*;

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

    #[test]
    fn params_validation() {
        assert!(HSParams::new(1.0, 2.0, 0.0).is_err());
        assert!(HSParams::new(2.0, 1.5, 0.0).is_err());
        let hp = HSParams::new(1.5, 6.0, 0.0).unwrap();
        assert!(hp.sobolev_admissible(2));
        assert!(!HSParams::new(1.5, 6.5, 0.0).unwrap().sobolev_admissible(2));
    }

    #[test]
    fn lhs_of_zero_is_zero() {
        let d = square(1.0 / 16.0);
        let hp = HSParams::new(2.0, 3.0, 1.0).unwrap();
        assert_eq!(
            hs_lhs(&d, &Field::zeros(&d), &hp, IntegrandMode::Ambient).unwrap(),
            0.0
        );
    }

    #[test]
    fn q_equal_p_reduces_to_weighted_norm() {
        let d = square(1.0 / 32.0);
        let hp = HSParams::new(2.0, 2.0, 0.5).unwrap();
        let u = Field::from_fn(&d, |_, x| x[0] * (1.0 - x[0]) * x[1]);
        let direct: f64 = d
            .inside_cells()
            .iter()
            .map(|&c| u.get(c).powi(2) * d.dist(c).powf(0.5 - 2.0))
            .sum::<f64>()
            * d.cell_measure();
        for mode in [IntegrandMode::Ambient, IntegrandMode::QRegular] {
            let v = hs_lhs(&d, &u, &hp, mode).unwrap();
            assert!((v - direct.sqrt()).abs() <= 1e-12 * v);
        }
    }

    #[test]
    fn modes_differ_by_a_constant() {
        let d = square(1.0 / 32.0);
        let hp = HSParams::new(2.0, 3.0, 0.7).unwrap();
        let a = integrand_density(&d, &hp, IntegrandMode::Ambient);
        let b = integrand_density(&d, &hp, IntegrandMode::QRegular);
        // substitute μ(B(x,d)) = π d²: ratio is π^{(q-p)/p}
        let k = PI_FACTOR.powf(0.5);
        for &c in d.inside_cells() {
            assert!((a[c] / b[c] / k - 1.0).abs() < 1e-10);
        }
        assert!((mode_factor(2, &hp) / k - 1.0).abs() < 1e-12);
    }
    const PI_FACTOR: f64 = core::f64::consts::PI;

    #[test]
    fn rhs_matches_energy() {
        let d = square(1.0 / 32.0);
        let hp = HSParams::new(2.0, 2.0, 1.0).unwrap();
        let u = Field::from_fn(&d, |_, x| x[0] * (1.0 - x[0]));
        let e = field_energy(&d, 1.0, 2.0, &u).unwrap();
        assert!((hs_rhs(&d, &u, &hp).unwrap() - e.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn interpolation_examples() {
        assert!(interpolation_check(&[1.0, 1.0], 2.0, 4.0, 2.0));
        assert!((power_sum_norm(&[1.0, 1.0], 2.0) - 2f64.sqrt()).abs() < 1e-15);
        assert!((power_sum_norm(&[1.0, 1.0], 1.0) - 2.0).abs() < 1e-15);
        assert!(interpolation_check(&[3.5, 0.0, 0.0], 2.0, 7.0, 2.0));
        assert!(!interpolation_check(&[1.0], 3.0, 2.0, 2.0));
    }

    proptest! {
        #[test]
        fn interpolation_holds_for_random_sequences(
            a in proptest::collection::vec(0.0f64..10.0, 20),
            q in 1.1f64..6.0,
            dq in 0.0f64..6.0,
            p in 1.05f64..3.0,
        ) {
            let q = q.max(p);
            prop_assert!(interpolation_check(&a, q, q + dq, p));
        }
    }

    #[test]
    fn chain_single_level() {
        let d = square(1.0 / 32.0);
        let hp = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let u = Field::from_fn(&d, |_, x| {
            if (x[0] - 0.5).abs() < 0.2 && (x[1] - 0.5).abs() < 0.2 {
                1.0
            } else {
                0.0
            }
        });
        let rep = truncation_chain_check(&d, &u, &hp, &ChainConfig::default()).unwrap();
        let nonempty: Vec<_> = rep.levels.iter().filter(|l| l.shell_cells > 0).collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].j, -1);
        assert!(rep.chain_c_holds);
        assert!(
            truncation_chain_check(&d, &Field::zeros(&d), &hp, &ChainConfig::default()).is_err()
        );
    }

    #[test]
    fn chain_c_is_superadditive() {
        let d = square(1.0 / 48.0);
        let hp = HSParams::new(2.0, 3.0, 0.0).unwrap();
        let u = Field::from_fn(&d, |_, x| 4.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        let rep = truncation_chain_check(&d, &u, &hp, &ChainConfig::default()).unwrap();
        assert!(rep.chain_c_holds);
        assert!(rep.chain_c_lhs <= rep.chain_c_rhs);
        // truncations are 2^{-j}-Lipschitz images of |u|, so leaks only come
        // from cells just outside each shell
        assert!(rep.leak >= 0.0);
    }

    #[test]
    fn chain_a_with_solved_levels() {
        let d = square(1.0 / 32.0);
        let hp = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let set = CellSet::closed_ball(&d, &[0.5, 0.5], 0.15);
        let prob = CapacityProblem::new(&d, 0.0, 2.0, set).unwrap();
        let u = solve_capacity(&prob, &SolverConfig::default())
            .unwrap()
            .minimizer;
        let cfg = ChainConfig {
            solve_levels: 4,
            ..ChainConfig::default()
        };
        let rep = truncation_chain_check(&d, &u, &hp, &cfg).unwrap();
        let a = rep.chain_a.unwrap();
        assert!(a.holds, "{a:?}");
        assert!(a.c1 > 0.0);
    }

    #[test]
    fn applies_check_has_no_violations() {
        let d = square(1.0 / 32.0);
        let hp = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let u = Field::from_fn(&d, |_, x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        let fam = family::field_levels(&d, &u, &[0.2, 0.5, 0.9]);
        let rep = applies_check(&d, &u, &fam, &hp, IntegrandMode::Ambient);
        assert_eq!(rep.checked, 3);
        assert_eq!(rep.violations, 0);
        assert!(rep.worst_ratio <= 1.0);
    }

    #[test]
    fn mazya_scan_single_ball() {
        let d = square(1.0 / 32.0);
        let hp = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let cover = build_cover(&d, 0.1).unwrap();
        let fam = family::single_balls(&d, &cover, 3, d.h(), &mut family::rng(1));
        let scan = mazya_scan(
            &d,
            &hp,
            &fam,
            &SolverConfig::default(),
            IntegrandMode::Ambient,
            1e-12,
        );
        assert_eq!(scan.samples.len(), 3);
        assert!(!scan.failure);
        for s in &scan.samples {
            assert!(s.ratio.is_finite() && s.ratio > 0.0);
        }
    }

    #[test]
    fn rayleigh_is_deterministic_and_monotone() {
        let d = square(1.0 / 24.0);
        let hp = HSParams::new(2.0, 2.0, 0.0).unwrap();
        let cfg = RayleighConfig {
            iterations: 32,
            cover_c: 0.1,
            ..RayleighConfig::default()
        };
        let a = rayleigh_lower_bound(&d, &hp, &cfg).unwrap();
        let b = rayleigh_lower_bound(&d, &hp, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(a.budgets, vec![1, 2, 4, 8, 16, 32]);
        let q = hs_quotient(&d, &a.witness, &hp, IntegrandMode::Ambient).unwrap();
        assert!((q / a.value - 1.0).abs() < 1e-9);
    }
}
