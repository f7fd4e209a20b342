//! The local maximal operator `M_{Ω,κ}` and the Whitney discrete convolution
//! `u_t = Σ_i φ_i u_{3B_i}`.
//!
//! Averages are taken over cell centers in open balls `B(x, k h)`. The local
//! ladder uses `1 ≤ k ≤ ⌊κ d(x, Ω^c)/h⌋`; the global one uses every `k` up to
//! the grid diameter, so `M_{Ω,κ} f ≤ M f` holds cell by cell.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng;

use crate::capacity::{discrete_gradient, Field};
use crate::error::{Error, Result};
use crate::family;
use crate::geometry::{DistanceWeight, GridDomain};
use crate::math::{exp, floor, powf};
use crate::par;
use crate::whitney::{build_cover, build_partition, PartitionOfUnity, WhitneyCover};

/// Parameters of the local maximal operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximalConfig {
    pub kappa: f64,
    /// Integrability exponent `s` of the `L^s` bound and of `(M g^s)^{1/s}`.
    pub s: f64,
}

impl MaximalConfig {
    pub fn new(kappa: f64, s: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::param("kappa", "requires 0 < κ ≤ 1"));
        }
        if !(s > 1.0 && s.is_finite()) {
            return Err(Error::param("s", "requires 1 < s"));
        }
        Ok(Self { kappa, s })
    }

    /// `κ < 1/5`, the range of the weighted `L^s` bound.
    pub fn bounded_range(&self) -> bool {
        self.kappa < 0.2
    }
}

/// Offsets of the ball `B(0, K h)` grouped by ring: an offset at distance
/// `ρ` first enters the ladder at `k = ⌊ρ/h⌋ + 1`.
struct Stencil {
    dim: usize,
    /// `(offset in cells per axis, ring)` sorted by ring.
    entries: Vec<([i64; 3], usize)>,
}

impl Stencil {
    fn new(dim: usize, kmax: usize) -> Self {
        let k = kmax as i64;
        let zr = if dim == 3 { k } else { 0 };
        let mut entries = Vec::new();
        for c in -zr..=zr {
            for b in -k..=k {
                for a in -k..=k {
                    let r2 = a * a + b * b + c * c;
                    if r2 < k * k {
                        // smallest m with r2 < m², in integers
                        let mut m = libm::sqrt(r2 as f64) as i64;
                        while m * m <= r2 {
                            m += 1;
                        }
                        entries.push(([a, b, c], m as usize));
                    }
                }
            }
        }
        entries.sort_by_key(|e| (e.1, e.0));
        Self { dim, entries }
    }

    /// `max_{1≤k≤K} avg_{B(x,kh)} f` where averages count grid cells only.
    fn max_average(&self, domain: &GridDomain, f: &[f64], x: usize, kmax: usize) -> f64 {
        let ext = domain.extent();
        let ijk = domain.coords(x);
        let strides = domain.strides();
        let interior = (0..self.dim).all(|a| ijk[a] >= kmax && ijk[a] + kmax < ext[a]);
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut best = 0.0f64;
        let mut ring = 1;
        for &(o, r) in &self.entries {
            if r > kmax {
                break;
            }
            if r != ring {
                if count > 0 {
                    best = best.max(sum / count as f64);
                }
                ring = r;
            }
            let cell = if interior {
                let mut idx = x as i64;
                for a in 0..self.dim {
                    idx += o[a] * strides[a] as i64;
                }
                idx as usize
            } else {
                let mut idx = 0usize;
                let mut ok = true;
                for a in 0..self.dim {
                    let v = ijk[a] as i64 + o[a];
                    if v < 0 || v >= ext[a] as i64 {
                        ok = false;
                        break;
                    }
                    idx += v as usize * strides[a];
                }
                if !ok {
                    continue;
                }
                idx
            };
            sum += f[cell];
            count += 1;
        }
        if count > 0 {
            best = best.max(sum / count as f64);
        }
        best
    }
}

fn ladder_len(domain: &GridDomain, x: usize, kappa: f64) -> usize {
    floor(kappa * domain.dist(x) / domain.h()) as usize
}

/// `M_{Ω,κ} f`: zero outside Ω, `|f(x)|` where the ladder is empty.
pub fn local_maximal(domain: &GridDomain, f: &Field, kappa: f64) -> Field {
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let kmax = domain
        .inside_cells()
        .iter()
        .map(|&x| ladder_len(domain, x, kappa))
        .max()
        .unwrap_or(0);
    let stencil = Stencil::new(domain.dim(), kmax.max(1));
    let vals = par::map(domain.inside_cells(), |_, &x| {
        let k = ladder_len(domain, x, kappa);
        if k == 0 {
            abs[x]
        } else {
            stencil.max_average(domain, &abs, x, k)
        }
    });
    let mut out = vec![0.0; domain.len()];
    for (&x, v) in domain.inside_cells().iter().zip(vals) {
        out[x] = v;
    }
    Field::from_values(domain, out).expect("finite averages")
}

/// Centered maximal function over every ball `B(x, kh)` up to the grid
/// diameter (cells outside Ω count with value zero).
pub fn global_maximal(domain: &GridDomain, f: &Field) -> Field {
    let ext = domain.extent();
    let kmax = (0..domain.dim()).map(|a| ext[a] * ext[a]).sum::<usize>();
    let kmax = libm::ceil(libm::sqrt(kmax as f64)) as usize + 1;
    global_maximal_capped(domain, f, kmax)
}

/// Centered maximal function over balls `B(x, kh)`, `k ≤ kmax`.
pub fn global_maximal_capped(domain: &GridDomain, f: &Field, kmax: usize) -> Field {
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let stencil = Stencil::new(domain.dim(), kmax.max(1));
    let vals = par::map(domain.inside_cells(), |_, &x| {
        stencil.max_average(domain, &abs, x, kmax.max(1))
    });
    let mut out = vec![0.0; domain.len()];
    for (&x, v) in domain.inside_cells().iter().zip(vals) {
        out[x] = v;
    }
    Field::from_values(domain, out).expect("finite averages")
}

/// Ratio `∫ (M_{Ω,κ} f)^s w_β / ∫ |f|^s w_β` for one field.
pub fn weighted_ratio(domain: &GridDomain, f: &Field, beta: f64, cfg: &MaximalConfig) -> f64 {
    let m = local_maximal(domain, f, cfg.kappa);
    let w = DistanceWeight::new(beta).field(domain);
    let mut num = 0.0;
    let mut den = 0.0;
    for &x in domain.inside_cells() {
        num += powf(m.get(x), cfg.s) * w[x];
        den += powf(f.get(x).abs(), cfg.s) * w[x];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Kind of test field in [`maximal_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialKind {
    Bumps,
    Noise,
    Spikes,
}

/// Uniform point of the grid box whose cell lies in Ω.
fn random_inside_point<R: Rng>(domain: &GridDomain, rng: &mut R) -> [f64; 3] {
    let o = domain.origin();
    let ext = domain.extent();
    loop {
        let mut p = [0.0; 3];
        for a in 0..domain.dim() {
            p[a] = o[a] + rng.random_range(0.0..1.0) * ext[a] as f64 * domain.h();
        }
        if domain.is_inside(domain.nearest_cell(&p[..domain.dim()])) {
            return p;
        }
    }
}

/// Random test field `trial` of the seeded sequence. Bump and spike
/// positions are drawn in continuum coordinates, so the same seed gives the
/// same field shape at every `h`.
pub fn trial_field(domain: &GridDomain, seed: u64, trial: usize) -> (TrialKind, Field) {
    let mut rng = family::rng(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(trial as u64),
    );
    let dmax = domain.distances().iter().copied().fold(0.0, f64::max);
    let dist2 = |x: &[f64; 3], c: &[f64; 3]| -> f64 {
        (0..domain.dim())
            .map(|i| (x[i] - c[i]) * (x[i] - c[i]))
            .sum()
    };
    match trial % 3 {
        0 => {
            let bumps: Vec<([f64; 3], f64, f64)> = (0..4)
                .map(|_| {
                    let c = random_inside_point(domain, &mut rng);
                    (
                        c,
                        dmax * rng.random_range(0.05..0.5),
                        rng.random_range(0.1..1.0),
                    )
                })
                .collect();
            let f = Field::from_fn(domain, |_, x| {
                bumps
                    .iter()
                    .map(|(c, s, a)| a * exp(-0.5 * dist2(&x, c) / (s * s)))
                    .sum()
            });
            (TrialKind::Bumps, f)
        }
        1 => {
            let f = Field::from_fn(domain, |_, _| rng.random_range(0.0..1.0));
            (TrialKind::Noise, f)
        }
        _ => {
            // indicator of a few balls B(x, d(x)/10)
            let spots: Vec<([f64; 3], f64)> = (0..3)
                .map(|_| {
                    let c = random_inside_point(domain, &mut rng);
                    let d = domain.dist(domain.nearest_cell(&c[..domain.dim()]));
                    (c, (0.1 * d).max(domain.h()))
                })
                .collect();
            let f = Field::from_fn(domain, |_, x| {
                if spots.iter().any(|(c, r)| dist2(&x, c) < r * r) {
                    1.0
                } else {
                    0.0
                }
            });
            (TrialKind::Spikes, f)
        }
    }
}

/// Weighted `L^s` ratios of `M_{Ω,κ}` over seeded test fields.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub beta: f64,
    pub s: f64,
    pub kappa: f64,
    pub ratios: Vec<(TrialKind, f64)>,
    pub max_ratio: f64,
    /// Ratio for `f ≡ 1`.
    pub constant_ratio: f64,
}

pub fn maximal_bound_check(
    domain: &GridDomain,
    beta: f64,
    cfg: &MaximalConfig,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    if !cfg.bounded_range() {
        return Err(Error::param("kappa", "the weighted bound requires κ < 1/5"));
    }
    let idx: Vec<usize> = (0..trials).collect();
    let ratios = par::map(&idx, |_, &t| {
        let (kind, f) = trial_field(domain, seed, t);
        (kind, weighted_ratio(domain, &f, beta, cfg))
    });
    let max_ratio = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let one = Field::from_fn(domain, |_, _| 1.0);
    Ok(BoundReport {
        beta,
        s: cfg.s,
        kappa: cfg.kappa,
        ratios,
        max_ratio,
        constant_ratio: weighted_ratio(domain, &one, beta, cfg),
    })
}

/// Scale `t` of the discrete convolution and the data of its gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionConfig {
    pub t: f64,
    pub kappa: f64,
    pub s: f64,
}

impl ConvolutionConfig {
    pub fn new(t: f64, kappa: f64, s: f64) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::param("t", "requires 0 < t < 1"));
        }
        MaximalConfig::new(kappa, s)?;
        Ok(Self { t, kappa, s })
    }

    /// Whitney parameter `c = t/18`.
    pub fn c(&self) -> f64 {
        self.t / 18.0
    }

    /// `t < 6κ/(3λ + 2κ)` with `λ = 1`.
    pub fn gradient_constraint_ok(&self) -> bool {
        self.t < 6.0 * self.kappa / (3.0 + 2.0 * self.kappa)
    }
}

/// `u_t` together with the cover, partition and ball averages behind it.
#[derive(Debug, Clone)]
pub struct Convolution {
    pub field: Field,
    pub cover: WhitneyCover,
    pub partition: PartitionOfUnity,
    /// `u_{3B_i}` per ball.
    pub averages: Vec<f64>,
}

/// `u_t(x) = Σ_i φ_i(x) u_{3B_i}` on the cover `W_{t/18}(Ω)`.
pub fn discrete_convolution(
    domain: &GridDomain,
    u: &Field,
    cfg: &ConvolutionConfig,
) -> Result<Convolution> {
    let cover = build_cover(domain, cfg.c())?;
    let partition = build_partition(domain, &cover)?;
    let field_and_avgs = convolve_with(domain, u, &cover, &partition);
    Ok(Convolution {
        field: field_and_avgs.0,
        averages: field_and_avgs.1,
        cover,
        partition,
    })
}

/// Convolution on a prebuilt cover and partition.
pub fn convolve_with(
    domain: &GridDomain,
    u: &Field,
    cover: &WhitneyCover,
    partition: &PartitionOfUnity,
) -> (Field, Vec<f64>) {
    let idx: Vec<usize> = (0..cover.len()).collect();
    let averages = par::map(&idx, |_, &i| {
        let cells = cover.ball_cells(domain, i, 3.0);
        if cells.is_empty() {
            0.0
        } else {
            cells.iter().map(|&c| u.get(c)).sum::<f64>() / cells.len() as f64
        }
    });
    let mut out = vec![0.0; domain.len()];
    for (i, &a) in averages.iter().enumerate() {
        if a != 0.0 {
            for &(cell, phi) in partition.entries(i) {
                out[cell] += phi * a;
            }
        }
    }
    (
        Field::from_values(domain, out).expect("finite convolution"),
        averages,
    )
}

/// Lower bound of `u_t` on retained balls of an outer cover.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedReport {
    /// Balls with `u_{B_i} ≥ 1/2`.
    pub retained: usize,
    /// `2 · min_{retained i} min_{B_i} u_t`.
    pub constant: f64,
}

pub fn retained_ball_bound(
    domain: &GridDomain,
    u: &Field,
    u_t: &Field,
    outer: &WhitneyCover,
) -> RetainedReport {
    let mut retained = 0;
    let mut low = f64::INFINITY;
    for i in 0..outer.len() {
        let cells = outer.ball_cells(domain, i, 1.0);
        if cells.is_empty() {
            continue;
        }
        let avg = cells.iter().map(|&c| u.get(c)).sum::<f64>() / cells.len() as f64;
        if avg >= 0.5 {
            retained += 1;
            low = low.min(
                cells
                    .iter()
                    .map(|&c| u_t.get(c))
                    .fold(f64::INFINITY, f64::min),
            );
        }
    }
    RetainedReport {
        retained,
        constant: if retained > 0 { 2.0 * low } else { 0.0 },
    }
}

/// `max_x u_t(x) / M_{Ω,1} u(x)` over cells where `u_t > 0`.
pub fn domination_constant(domain: &GridDomain, u: &Field, u_t: &Field) -> f64 {
    let m = local_maximal(domain, u, 1.0);
    domain
        .inside_cells()
        .iter()
        .filter(|&&x| u_t.get(x).abs() > 0.0)
        .map(|&x| {
            if m.get(x) > 0.0 {
                u_t.get(x).abs() / m.get(x)
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Pointwise comparison of `|∇_h u_t|` with `(M_{Ω,κ} g^s)^{1/s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    /// Largest quotient over cells with a positive maximal term.
    pub max_quotient: f64,
    /// Cells where the maximal term vanishes but `|∇_h u_t|` exceeds `tolerance`.
    pub violations: usize,
    pub checked_cells: usize,
    pub tolerance: f64,
    pub constraint_ok: bool,
}

pub fn upper_gradient_check(
    domain: &GridDomain,
    u: &Field,
    g: &Field,
    cfg: &ConvolutionConfig,
) -> Result<GradReport> {
    if !cfg.gradient_constraint_ok() {
        return Err(Error::param(
            "t",
            format!(
                "requires t < 6κ/(3 + 2κ) = {}",
                6.0 * cfg.kappa / (3.0 + 2.0 * cfg.kappa)
            ),
        ));
    }
    let conv = discrete_convolution(domain, u, cfg)?;
    Ok(gradient_report(domain, &conv.field, g, cfg))
}

/// The comparison of [`upper_gradient_check`] for a precomputed `u_t`.
pub fn gradient_report(
    domain: &GridDomain,
    u_t: &Field,
    g: &Field,
    cfg: &ConvolutionConfig,
) -> GradReport {
    let grad_t = discrete_gradient(domain, u_t);
    let gs = Field::from_values(
        domain,
        g.values().iter().map(|v| powf(v.abs(), cfg.s)).collect(),
    )
    .expect("finite powers");
    let m = local_maximal(domain, &gs, cfg.kappa);
    let top = grad_t.iter().copied().fold(0.0, f64::max);
    let tolerance = 1e-10 * top.max(f64::MIN_POSITIVE);
    let mut rep = GradReport {
        max_quotient: 0.0,
        violations: 0,
        checked_cells: 0,
        tolerance,
        constraint_ok: cfg.gradient_constraint_ok(),
    };
    for &x in domain.inside_cells() {
        let den = powf(m.get(x), 1.0 / cfg.s);
        if den > 0.0 {
            rep.checked_cells += 1;
            rep.max_quotient = rep.max_quotient.max(grad_t[x] / den);
        } else if grad_t[x] > tolerance {
            rep.violations += 1;
        }
    }
    rep
}

/// Descriptive label for a trial kind.
pub fn trial_label(kind: TrialKind) -> String {
    String::from(match kind {
        TrialKind::Bumps => "bumps",
        TrialKind::Noise => "noise",
        TrialKind::Spikes => "spikes",
    })
}
