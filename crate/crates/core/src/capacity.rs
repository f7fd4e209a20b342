//! Discrete weighted p-energy and the relative capacity `cap_{p,β}(E, Ω)`.
//!
//! Test functions live on cell centers and vanish outside Ω. The gradient at
//! a cell is the vector of forward differences toward its `+axis` neighbors,
//! and the energy is `Σ w_β(x) |∇_h u(x)|^p h^n` over all inside cells.
//! Compact support is encoded by a collar `{d(x, Ω^c) < δ}` pinned to zero.
//!
//! Minimization runs an accelerated projected gradient method in the metric
//! of the `p = 2` Hessian diagonal. Feasible values are confined to `[0, 1]`
//! with `u = 1` on `E`: truncating any test function at 1 never increases the
//! energy, so the box costs nothing and keeps iterates bounded.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{distance_to_set, DistanceWeight, GridDomain};
use crate::math::{powf, sqrt};
use crate::whitney::WhitneyCover;

/// Collar width `δ = h + fraction·min_E d(x, Ω^c)`.
pub fn collar_width(domain: &GridDomain, set: &CellSet, fraction: f64) -> f64 {
    domain.h() + fraction * set.boundary_distance(domain)
}

/// A sorted, duplicate-free set of inside cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellSet {
    cells: Vec<usize>,
}

impl CellSet {
    /// Builds a set from arbitrary inside cells.
    pub fn new(domain: &GridDomain, mut cells: Vec<usize>) -> Result<Self> {
        cells.sort_unstable();
        cells.dedup();
        if let Some(&bad) = cells
            .iter()
            .find(|&&c| c >= domain.len() || !domain.is_inside(c))
        {
            return Err(Error::param(
                "E",
                alloc::format!("cell {bad} is not inside the domain"),
            ));
        }
        Ok(Self { cells })
    }

    /// Wraps cells already known to be sorted, unique and inside.
    pub(crate) fn from_sorted_unchecked(cells: Vec<usize>) -> Self {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        Self { cells }
    }

    /// Inside cells with `|x - center| ≤ radius`.
    pub fn closed_ball(domain: &GridDomain, center: &[f64], radius: f64) -> Self {
        let mut cells = Vec::new();
        let dim = domain.dim();
        // widen slightly so the boundary sphere is included, then filter exactly
        domain.for_each_in_ball(&center[..dim], radius + domain.h(), |cell, d2| {
            if d2 <= radius * radius && domain.is_inside(cell) {
                cells.push(cell);
            }
        });
        cells.sort_unstable();
        Self { cells }
    }

    /// Inside cells where `mask` is set.
    pub fn from_mask(domain: &GridDomain, mask: &[bool]) -> Self {
        let cells = domain
            .inside_cells()
            .iter()
            .copied()
            .filter(|&c| mask[c])
            .collect();
        Self { cells }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.cells.iter().all(|&c| other.contains(c))
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let mut cells = Vec::with_capacity(self.len() + other.len());
        cells.extend_from_slice(&self.cells);
        cells.extend_from_slice(&other.cells);
        cells.sort_unstable();
        cells.dedup();
        CellSet { cells }
    }

    /// `min_{x ∈ E} d(x, Ω^c)`; infinite for the empty set.
    pub fn boundary_distance(&self, domain: &GridDomain) -> f64 {
        self.cells
            .iter()
            .map(|&c| domain.dist(c))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A grid function, zero outside Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(domain: &GridDomain) -> Self {
        Self {
            values: vec![0.0; domain.len()],
        }
    }

    /// Evaluates `f` at the center of every inside cell.
    pub fn from_fn<F: FnMut(usize, [f64; 3]) -> f64>(domain: &GridDomain, mut f: F) -> Self {
        let mut values = vec![0.0; domain.len()];
        for &c in domain.inside_cells() {
            values[c] = f(c, domain.center(c));
        }
        Self { values }
    }

    /// Wraps full-grid values; entries outside Ω are reset to zero.
    pub fn from_values(domain: &GridDomain, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::param(
                "field",
                alloc::format!("expected {} values, got {}", domain.len(), values.len()),
            ));
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !domain.is_inside(i) {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite(alloc::format!("field value at cell {i}")));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

/// A condenser `(E, Ω)` with weight `d^β`, exponent `p` and collar width `δ`.
#[derive(Debug, Clone)]
pub struct CapacityProblem<'a> {
    domain: &'a GridDomain,
    weight: DistanceWeight,
    p: f64,
    set: CellSet,
    delta: f64,
}

impl<'a> CapacityProblem<'a> {
    /// Problem with the one-cell collar `δ = h`.
    pub fn new(domain: &'a GridDomain, beta: f64, p: f64, set: CellSet) -> Result<Self> {
        let delta = domain.h();
        Self::with_collar(domain, beta, p, set, delta)
    }

    pub fn with_collar(
        domain: &'a GridDomain,
        beta: f64,
        p: f64,
        set: CellSet,
        delta: f64,
    ) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::param("p", "requires 1 < p < ∞"));
        }
        if !beta.is_finite() {
            return Err(Error::param("beta", "must be finite"));
        }
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        if !(delta > 0.0) {
            return Err(Error::param("delta", "collar width must be positive"));
        }
        let reach = set.boundary_distance(domain);
        if delta >= reach {
            return Err(Error::Infeasible(alloc::format!(
                "collar width {delta} reaches the condenser set (min distance {reach})"
            )));
        }
        Ok(Self {
            domain,
            weight: DistanceWeight::new(beta),
            p,
            set,
            delta,
        })
    }

    pub fn domain(&self) -> &'a GridDomain {
        self.domain
    }

    pub fn beta(&self) -> f64 {
        self.weight.beta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn set(&self) -> &CellSet {
        &self.set
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Whether `cell` is pinned to zero (outside Ω or in the collar).
    pub fn is_pinned(&self, cell: usize) -> bool {
        !self.domain.is_inside(cell) || self.domain.dist(cell) < self.delta
    }
}

/// Knobs of the projected gradient solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative objective decrease over `window` iterations that stops the run.
    pub tol: f64,
    pub max_iters: usize,
    /// `ε` in `(|∇u|² + ε²)^{p/2}`, used only for `p < 2`.
    pub smoothing: f64,
    pub window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 20_000,
            smoothing: 1e-6,
            window: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::param("smoothing", "must be nonnegative"));
        }
        if self.window == 0 {
            return Err(Error::param("window", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub iterations: usize,
    /// Relative decrease over the last window when the run stopped.
    pub relative_decrease: f64,
    /// `max(max_E (1 - u)^+, max_collar |u|)`; zero by projection.
    pub feasibility_residual: f64,
    pub restarts: usize,
    pub energy_evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    /// Unsmoothed energy of the returned minimizer.
    pub value: f64,
    pub minimizer: Field,
    /// Per-cell `w_β |∇_h u|^p h^n`.
    pub density: Vec<f64>,
    pub stats: SolverStats,
    /// Energy of the warm-start Lipschitz test function.
    pub upper_bound: f64,
    pub delta: f64,
}

#[inline]
fn forward_diffs(u: &[f64], x: usize, strides: &[usize], inv_h: f64, out: &mut [f64; 3]) -> f64 {
    let ux = u[x];
    let mut s = 0.0;
    for (a, &st) in strides.iter().enumerate() {
        let d = (u[x + st] - ux) * inv_h;
        out[a] = d;
        s += d * d;
    }
    s
}

/// Per-cell magnitude of the forward-difference gradient (zero outside Ω).
pub fn discrete_gradient(domain: &GridDomain, u: &Field) -> Vec<f64> {
    let strides = domain.strides();
    let strides = &strides[..domain.dim()];
    let inv_h = 1.0 / domain.h();
    let mut out = vec![0.0; domain.len()];
    let mut g = [0.0; 3];
    for &x in domain.inside_cells() {
        out[x] = sqrt(forward_diffs(u.values(), x, strides, inv_h, &mut g));
    }
    out
}

/// Shared energy evaluator for a fixed weight and exponent.
pub(crate) struct Energy<'a> {
    cells: &'a [usize],
    strides: [usize; 3],
    dim: usize,
    inv_h: f64,
    cell_measure: f64,
    weights: Vec<f64>,
    p: f64,
}

impl<'a> Energy<'a> {
    pub(crate) fn new(domain: &'a GridDomain, beta: f64, p: f64) -> Self {
        Self {
            cells: domain.inside_cells(),
            strides: domain.strides(),
            dim: domain.dim(),
            inv_h: 1.0 / domain.h(),
            cell_measure: domain.cell_measure(),
            weights: DistanceWeight::new(beta).field(domain),
            p,
        }
    }

    /// `Σ w (s + eps2)^{p/2} h^n`, minus the constant `eps2^{p/2}` per cell.
    pub(crate) fn value(&self, u: &[f64], eps2: f64) -> f64 {
        let half_p = 0.5 * self.p;
        let base = if eps2 > 0.0 { powf(eps2, half_p) } else { 0.0 };
        let strides = &self.strides[..self.dim];
        let mut g = [0.0; 3];
        let mut total = 0.0;
        for &x in self.cells {
            let s = forward_diffs(u, x, strides, self.inv_h, &mut g);
            if s > 0.0 || eps2 > 0.0 {
                total += self.weights[x] * (powf(s + eps2, half_p) - base);
            }
        }
        total * self.cell_measure
    }

    /// Value and gradient (written into `grad`, which is overwritten).
    pub(crate) fn value_grad(&self, u: &[f64], eps2: f64, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let half_p = 0.5 * self.p;
        let base = if eps2 > 0.0 { powf(eps2, half_p) } else { 0.0 };
        let strides = &self.strides[..self.dim];
        let mut g = [0.0; 3];
        let mut total = 0.0;
        for &x in self.cells {
            let s = forward_diffs(u, x, strides, self.inv_h, &mut g);
            let t = s + eps2;
            if t <= 0.0 {
                continue;
            }
            let w = self.weights[x];
            let pw = powf(t, half_p - 1.0);
            total += w * (pw * t - base);
            // d/dD_a of w t^{p/2} is w p t^{p/2-1} D_a, and dD_a/du = ∓1/h
            let coef = w * self.p * pw * self.cell_measure * self.inv_h;
            for (a, &st) in strides.iter().enumerate() {
                let c = coef * g[a];
                grad[x] -= c;
                grad[x + st] += c;
            }
        }
        total * self.cell_measure
    }

    /// Diagonal of the `p = 2` Hessian, `2 h^{n-2} (n w_x + Σ_a w_{x - e_a})`.
    pub(crate) fn jacobi_diagonal(&self, len: usize) -> Vec<f64> {
        let scale = 2.0 * self.cell_measure * self.inv_h * self.inv_h;
        let mut diag = vec![0.0; len];
        let strides = &self.strides[..self.dim];
        for &x in self.cells {
            let w = self.weights[x] * scale;
            diag[x] += self.dim as f64 * w;
            for &st in strides {
                diag[x + st] += w;
            }
        }
        diag
    }
}

/// Unsmoothed discrete energy `Σ w_β |∇_h u|^p h^n`.
pub fn energy(problem: &CapacityProblem<'_>, u: &Field) -> Result<f64> {
    let e = Energy::new(problem.domain, problem.beta(), problem.p).value(u.values(), 0.0);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite(alloc::format!(
            "energy overflows for beta = {}",
            problem.beta()
        )))
    }
}

/// Per-cell energy density `w_β |∇_h u|^p h^n`.
pub fn energy_density(domain: &GridDomain, beta: f64, p: f64, u: &Field) -> Vec<f64> {
    let w = DistanceWeight::new(beta).field(domain);
    let grad = discrete_gradient(domain, u);
    let hn = domain.cell_measure();
    let mut out = vec![0.0; domain.len()];
    for &x in domain.inside_cells() {
        if grad[x] > 0.0 {
            out[x] = w[x] * powf(grad[x], p) * hn;
        }
    }
    out
}

/// Energy of `u` for given `β` and `p`, without a condenser attached.
pub fn field_energy(domain: &GridDomain, beta: f64, p: f64, u: &Field) -> Result<f64> {
    let e = Energy::new(domain, beta, p).value(u.values(), 0.0);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite(alloc::format!(
            "energy overflows for beta = {beta}"
        )))
    }
}

/// `max{0, 1 - 2 d(x, E)/d(E, Ω^c)}`, set to 1 on `E` and 0 on the collar.
pub fn lipschitz_test_function(problem: &CapacityProblem<'_>) -> Result<Field> {
    let domain = problem.domain;
    let to_set = distance_to_set(domain, problem.set.cells())?;
    let reach = problem.set.boundary_distance(domain);
    let mut u = Field::from_fn(domain, |c, _| (1.0 - 2.0 * to_set[c] / reach).max(0.0));
    project(problem, &mut u.values);
    Ok(u)
}

/// Energy of [`lipschitz_test_function`].
pub fn lipschitz_upper_bound(problem: &CapacityProblem<'_>) -> Result<f64> {
    energy(problem, &lipschitz_test_function(problem)?)
}

fn project(problem: &CapacityProblem<'_>, u: &mut [f64]) {
    for (c, v) in u.iter_mut().enumerate() {
        if problem.is_pinned(c) {
            *v = 0.0;
        } else {
            *v = v.clamp(0.0, 1.0);
        }
    }
    for &c in problem.set.cells() {
        u[c] = 1.0;
    }
}

/// Minimizes the energy over `{u = 1 on E, u = 0 on the collar, 0 ≤ u ≤ 1}`.
pub fn solve_capacity(problem: &CapacityProblem<'_>, cfg: &SolverConfig) -> Result<CapacityResult> {
    cfg.validate()?;
    let domain = problem.domain;
    let n = domain.len();
    let op = Energy::new(domain, problem.beta(), problem.p);
    let eps2 = if problem.p < 2.0 {
        cfg.smoothing * cfg.smoothing
    } else {
        0.0
    };

    // 0 = pinned, 1 = free, 2 = fixed at one
    let mut kind = vec![0u8; n];
    for &c in domain.inside_cells() {
        if !problem.is_pinned(c) {
            kind[c] = 1;
        }
    }
    for &c in problem.set.cells() {
        kind[c] = 2;
    }
    let free: Vec<usize> = (0..n).filter(|&c| kind[c] == 1).collect();
    let diag = op.jacobi_diagonal(n);
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| {
            if d > 0.0 && d.is_finite() {
                1.0 / d
            } else {
                0.0
            }
        })
        .collect();

    let start = lipschitz_test_function(problem)?;
    let upper_bound = energy(problem, &start)?;
    let mut x = start.into_values();
    let mut fx = op.value(&x, eps2);
    if !fx.is_finite() {
        return Err(Error::NonFinite(alloc::format!(
            "objective at the warm start for beta = {}",
            problem.beta()
        )));
    }
    let mut y = x.clone();
    let mut z = x.clone();
    let mut grad = vec![0.0; n];
    let mut t = 1.0f64;
    // inverse step length in the diagonal metric
    let mut lip = 1.0f64;
    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iters.min(100_000) + 1);
    history.push(fx);
    let mut stats = SolverStats {
        energy_evaluations: 1,
        ..SolverStats::default()
    };
    let mut rel = f64::INFINITY;

    while stats.iterations < cfg.max_iters {
        stats.iterations += 1;
        let fy = op.value_grad(&y, eps2, &mut grad);
        stats.energy_evaluations += 1;
        let fz = loop {
            let mut lin = 0.0;
            let mut quad = 0.0;
            for &c in &free {
                let step = inv_diag[c] / lip;
                let v = (y[c] - step * grad[c]).clamp(0.0, 1.0);
                z[c] = v;
                let dv = v - y[c];
                lin += grad[c] * dv;
                quad += diag[c] * dv * dv;
            }
            let fz = op.value(&z, eps2);
            stats.energy_evaluations += 1;
            let model = fy + lin + 0.5 * lip * quad;
            if fz <= model + 1e-14 * fy.abs() || quad == 0.0 || lip > 1e12 {
                break fz;
            }
            lip *= 2.0;
        };
        if !fz.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "objective during iteration {}",
                stats.iterations
            )));
        }
        if fz > fx {
            // momentum overshoot: restart from the last accepted iterate
            stats.restarts += 1;
            t = 1.0;
            for &c in &free {
                y[c] = x[c];
            }
            if y == z {
                break;
            }
            history.push(fx);
        } else {
            let t_next = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t));
            let beta = (t - 1.0) / t_next;
            for &c in &free {
                let zc = z[c];
                y[c] = (zc + beta * (zc - x[c])).clamp(0.0, 1.0);
                x[c] = zc;
            }
            t = t_next;
            fx = fz;
            history.push(fx);
            lip = (lip * 0.9).max(1e-3);
        }
        let k = history.len() - 1;
        if k >= cfg.window {
            let old = history[k - cfg.window];
            rel = (old - fx) / fx.abs().max(f64::MIN_POSITIVE);
            if rel < cfg.tol {
                stats.converged = true;
                break;
            }
        }
    }
    stats.relative_decrease = rel;
    let minimizer = Field { values: x };
    stats.feasibility_residual = feasibility_residual(problem, &minimizer);
    let value = energy(problem, &minimizer)?;
    let density = energy_density(domain, problem.beta(), problem.p, &minimizer);
    Ok(CapacityResult {
        value,
        minimizer,
        density,
        stats,
        upper_bound,
        delta: problem.delta,
    })
}

fn feasibility_residual(problem: &CapacityProblem<'_>, u: &Field) -> f64 {
    let mut r: f64 = 0.0;
    for &c in problem.set.cells() {
        r = r.max(1.0 - u.get(c));
    }
    for (c, &v) in u.values().iter().enumerate() {
        if problem.is_pinned(c) {
            r = r.max(v.abs());
        }
    }
    r
}

/// `max{0, 1 - d(x, B)/d(B, X∖B^*)}` for `B = B_i`, `B^* = L·B`, `L = 1/(3c)`.
pub fn ball_test_function(domain: &GridDomain, cover: &WhitneyCover, ball: usize) -> Field {
    let b = cover.balls()[ball];
    let p = domain.center(b.center);
    let dilation = 1.0 / (3.0 * cover.c());
    let r = b.radius;
    let ramp = (dilation - 1.0) * r;
    let mut u = Field::zeros(domain);
    let dim = domain.dim();
    domain.for_each_in_ball(&p[..dim], dilation * r, |cell, d2| {
        if domain.is_inside(cell) {
            let gap = (sqrt(d2) - r).max(0.0);
            u.values[cell] = (1.0 - gap / ramp).max(0.0);
        }
    });
    u
}

/// Energy of [`ball_test_function`] with weight `d^β` and exponent `p`.
pub fn ball_test_upper_bound(
    domain: &GridDomain,
    cover: &WhitneyCover,
    ball: usize,
    beta: f64,
    p: f64,
) -> Result<f64> {
    if ball >= cover.len() {
        return Err(Error::param("ball", "index out of range"));
    }
    let u = ball_test_function(domain, cover, ball);
    let b = cover.balls()[ball];
    let centre = domain.center(b.center);
    let dim = domain.dim();
    let strides = domain.strides();
    let inv_h = 1.0 / domain.h();
    let weight = DistanceWeight::new(beta);
    let reach = b.radius / (3.0 * cover.c()) + 2.0 * domain.h();
    let mut total = 0.0;
    let mut g = [0.0; 3];
    domain.for_each_in_ball(&centre[..dim], reach, |cell, _| {
        if domain.is_inside(cell) {
            let s = forward_diffs(u.values(), cell, &strides[..dim], inv_h, &mut g);
            if s > 0.0 {
                total += weight.eval(domain.dist(cell)) * powf(s, 0.5 * p);
            }
        }
    });
    let e = total * domain.cell_measure();
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite(alloc::format!(
            "ball test energy for beta = {beta}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, ShapeSpec};
    use crate::math::{log, PI};
    use alloc::vec;

    fn disc(h: f64) -> GridDomain {
        build_domain(
            &ShapeSpec::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            h,
            0.0,
        )
        .unwrap()
    }

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

    /// Discrete 1-D radial minimizer: conductances `2π ρ w(ρ)` in series.
    fn radial_oracle(p: f64, beta: f64, r: f64, big_r: f64, nodes: usize) -> f64 {
        let dr = (big_r - r) / nodes as f64;
        let mut resistance = 0.0;
        for k in 0..nodes {
            let rho = r + (k as f64 + 0.5) * dr;
            let w = (big_r - rho).powf(beta);
            resistance += (rho * w).powf(-1.0 / (p - 1.0)) * dr;
        }
        2.0 * PI * resistance.powf(1.0 - p)
    }

    #[test]
    fn radial_oracle_matches_closed_forms() {
        let two = radial_oracle(2.0, 0.0, 0.25, 1.0, 10_000);
        assert!((two - 2.0 * PI / log(4.0)).abs() < 1e-6);
        let three = radial_oracle(3.0, 0.0, 0.25, 1.0, 10_000);
        assert!((three - 2.0 * PI).abs() < 1e-5);
    }

    #[test]
    fn gradient_examples() {
        let d = square(1.0 / 32.0);
        let c = Field::from_fn(&d, |_, _| 3.0);
        let g = discrete_gradient(&d, &c);
        let x = d.nearest_cell(&[0.5, 0.5]);
        assert_eq!(g[x], 0.0);
        let lin = Field::from_fn(&d, |_, p| p[0]);
        let g = discrete_gradient(&d, &lin);
        assert!((g[x] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_profile_gradient() {
        let h = 1.0 / 128.0;
        let d = build_domain(
            &ShapeSpec::Annulus {
                center: vec![0.0, 0.0],
                inner: 0.25,
                outer: 1.0,
            },
            h,
            0.0,
        )
        .unwrap();
        let u = Field::from_fn(&d, |_, p| log(1.0 / (p[0] * p[0] + p[1] * p[1]).sqrt()));
        let g = discrete_gradient(&d, &u);
        for &x in d.inside_cells() {
            if d.dist(x) > 2.0 * h {
                let p = d.center(x);
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert!(
                    (g[x] - 1.0 / r).abs() < 4.0 * h / (r * r),
                    "{} vs {}",
                    g[x],
                    1.0 / r
                );
            }
        }
    }

    #[test]
    fn energy_examples() {
        let d = square(1.0 / 64.0);
        let set = CellSet::closed_ball(&d, &[0.5, 0.5], 0.1);
        let prob = CapacityProblem::new(&d, 0.0, 2.0, set).unwrap();
        assert_eq!(energy(&prob, &Field::zeros(&d)).unwrap(), 0.0);
        // linear profile without the wall jump: interior slope-1 density sums to the area
        let u = Field::from_fn(&d, |_, p| p[0]);
        let g = discrete_gradient(&d, &u);
        let e: f64 = d
            .inside_cells()
            .iter()
            .filter(|&&x| g[x] < 1.5)
            .map(|&x| g[x] * g[x] * d.cell_measure())
            .sum();
        assert!((e - 1.0).abs() < 0.05);
    }

    #[test]
    fn energy_overflow_is_reported() {
        let d = square(1.0 / 16.0);
        let set = CellSet::closed_ball(&d, &[0.5, 0.5], 0.1);
        let prob = CapacityProblem::new(&d, -400.0, 2.0, set).unwrap();
        let u = lipschitz_test_function(&prob).unwrap();
        assert!(matches!(energy(&prob, &u), Err(Error::NonFinite(_))));
    }

    #[test]
    fn problem_validation() {
        let d = square(1.0 / 16.0);
        let set = CellSet::closed_ball(&d, &[0.5, 0.5], 0.1);
        assert!(CapacityProblem::new(&d, 0.0, 1.0, set.clone()).is_err());
        assert!(matches!(
            CapacityProblem::new(&d, 0.0, 2.0, CellSet::default()),
            Err(Error::EmptySet)
        ));
        assert!(matches!(
            CapacityProblem::with_collar(&d, 0.0, 2.0, set, 0.45),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn solver_feasible_and_below_upper_bound() {
        let d = disc(1.0 / 32.0);
        let set = CellSet::closed_ball(&d, &[0.0, 0.0], 0.25);
        let prob = CapacityProblem::new(&d, 0.0, 2.0, set).unwrap();
        let res = solve_capacity(&prob, &SolverConfig::default()).unwrap();
        assert_eq!(res.stats.feasibility_residual, 0.0);
        assert!(res.value <= res.upper_bound);
        assert!(res.value > 0.0);
        for &c in prob.set().cells() {
            assert_eq!(res.minimizer.get(c), 1.0);
        }
        let sum: f64 = res.density.iter().sum();
        assert!((sum - res.value).abs() <= 1e-9 * res.value);
    }

    #[test]
    fn condenser_coarse_against_oracle() {
        let d = disc(1.0 / 64.0);
        let set = CellSet::closed_ball(&d, &[0.0, 0.0], 0.25);
        let prob = CapacityProblem::new(&d, 0.0, 2.0, set).unwrap();
        let res = solve_capacity(&prob, &SolverConfig::default()).unwrap();
        let exact = 2.0 * PI / log(4.0);
        assert!((res.value / exact - 1.0).abs() < 0.1, "{}", res.value);
    }

    #[test]
    fn determinism() {
        let d = disc(1.0 / 32.0);
        let set = CellSet::closed_ball(&d, &[0.0, 0.0], 0.25);
        let prob = CapacityProblem::new(&d, 1.0, 1.5, set).unwrap();
        let a = solve_capacity(&prob, &SolverConfig::default()).unwrap();
        let b = solve_capacity(&prob, &SolverConfig::default()).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn point_capacity_decreases_under_refinement() {
        let mut last = f64::INFINITY;
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let d = disc(h);
            let x0 = d.nearest_cell(&[0.0, 0.0]);
            let set = CellSet::new(&d, vec![x0]).unwrap();
            let prob = CapacityProblem::new(&d, 0.0, 2.0, set).unwrap();
            let v = solve_capacity(&prob, &SolverConfig::default())
                .unwrap()
                .value;
            assert!(v < last, "{v} !< {last}");
            last = v;
        }
    }

    #[test]
    fn lipschitz_bound_radial_ramp() {
        // E = closed B(0,1/2): φ ramps from 1 at ρ=1/2 to 0 at ρ=3/4
        let h = 1.0 / 128.0;
        let d = disc(h);
        let set = CellSet::closed_ball(&d, &[0.0, 0.0], 0.5);
        let prob = CapacityProblem::new(&d, 0.0, 2.0, set).unwrap();
        let ub = lipschitz_upper_bound(&prob).unwrap();
        // ∫ 16 dx over the annulus 1/2 < ρ < 3/4
        let exact = 16.0 * PI * (0.5625 - 0.25);
        assert!((ub / exact - 1.0).abs() < 0.05, "{ub} vs {exact}");
    }

    #[test]
    fn lipschitz_bound_scales_with_reach() {
        // small balls centered at depth ρ: bound ~ ρ^{n-p+β} with fixed ratio radius/ρ
        let h = 1.0 / 256.0;
        let d = square(h);
        let mut vals = vec![];
        for depth in [0.1, 0.2, 0.4] {
            let set = CellSet::closed_ball(&d, &[0.5, 0.5 - (0.5 - depth)], depth / 4.0);
            let prob = CapacityProblem::new(&d, 1.0, 2.0, set).unwrap();
            vals.push(lipschitz_upper_bound(&prob).unwrap());
        }
        assert!(vals[0] < vals[1] && vals[1] < vals[2]);
        assert!((vals[2] / vals[1] / 2.0 - 1.0).abs() < 0.25);
    }

    #[test]
    fn ball_test_function_is_one_on_ball() {
        let d = square(1.0 / 64.0);
        let cover = crate::whitney::build_cover(&d, 1.0 / 54.0).unwrap();
        let u = ball_test_function(&d, &cover, 0);
        for cell in cover.ball_cells(&d, 0, 1.0) {
            assert_eq!(u.get(cell), 1.0);
        }
        let e = ball_test_upper_bound(&d, &cover, 0, 0.0, 2.0).unwrap();
        let direct = field_energy(&d, 0.0, 2.0, &u).unwrap();
        assert!((e - direct).abs() <= 1e-12 * direct);
    }
}
