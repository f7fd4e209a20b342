//! Subcommand pipelines.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use clap::ValueEnum;
use hardycap_core::capacity::{
    ball_test_function, collar_width, discrete_gradient, solve_capacity, CapacityProblem,
    CapacityResult, CellSet, Field,
};
use hardycap_core::family::{self, LabelledSet};
use hardycap_core::geometry::{build_domain, GridDomain};
use hardycap_core::hardy::{
    applies_check, mazya_scan, rayleigh_lower_bound, truncation_chain_check, ChainConfig, HSParams,
    RayleighConfig, RayleighResult,
};
use hardycap_core::maximal::{
    discrete_convolution, domination_constant, global_maximal_capped, gradient_report,
    local_maximal, maximal_bound_check, retained_ball_bound, trial_field, trial_label,
    ConvolutionConfig, MaximalConfig,
};
use hardycap_core::quasiadd::{
    ball_bounds_scan, equivalence_experiment, example_62_sequence, index_families, quasiadd_scan,
    resolved_balls, weak_quasiadd_scan, EquivalenceConfig,
};
use hardycap_core::whitney::{build_cover, build_partition, verify_cover, WhitneyCover};
use hardycap_core::Error;
use serde_json::json;

use crate::report::{cell, num, nums, Artifacts, Provenance, Report};
use crate::scenario::{Mode, Parsed, Scenario, ScenarioError, Shape, Witness};
use crate::svg;

/// Overlap bound used when reporting the Whitney cover checks.
pub const OVERLAP_BOUND: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Domain,
    Whitney,
    Capacity,
    Hardy,
    Mazya,
    Maximal,
    Convolve,
    Quasiadd,
    WeakQuasiadd,
    BallBounds,
    Example62,
    Equivalence,
    All,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Domain => "domain",
            Subcommand::Whitney => "whitney",
            Subcommand::Capacity => "capacity",
            Subcommand::Hardy => "hardy",
            Subcommand::Mazya => "mazya",
            Subcommand::Maximal => "maximal",
            Subcommand::Convolve => "convolve",
            Subcommand::Quasiadd => "quasiadd",
            Subcommand::WeakQuasiadd => "weak-quasiadd",
            Subcommand::BallBounds => "ball-bounds",
            Subcommand::Example62 => "example62",
            Subcommand::Equivalence => "equivalence",
            Subcommand::All => "all",
        }
    }

    /// Pipelines run by `all`, in order.
    pub const EACH: [Subcommand; 12] = [
        Subcommand::Domain,
        Subcommand::Whitney,
        Subcommand::Capacity,
        Subcommand::Hardy,
        Subcommand::Mazya,
        Subcommand::Maximal,
        Subcommand::Convolve,
        Subcommand::Quasiadd,
        Subcommand::WeakQuasiadd,
        Subcommand::BallBounds,
        Subcommand::Example62,
        Subcommand::Equivalence,
    ];
}

/// Command-line overrides.
#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub mode: Option<Mode>,
}

#[derive(Debug)]
pub enum RunError {
    Scenario(ScenarioError),
    /// A module rejected its input.
    Constraint(Error),
    /// A solver or scan failed on valid input.
    Solver(Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(_) | RunError::Constraint(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Scenario(e) => write!(f, "{e}"),
            RunError::Constraint(e) => write!(f, "constraint violation: {e}"),
            RunError::Solver(e) => write!(f, "solver failure: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidShape(_)
            | Error::EmptyInterior
            | Error::EmptyComplement
            | Error::InvalidParameter { .. }
            | Error::EmptySet
            | Error::Infeasible(_) => RunError::Constraint(e),
            Error::NonFinite(_) | Error::BrokenCover { .. } | Error::Degenerate(_) => {
                RunError::Solver(e)
            }
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type Res<T> = Result<T, RunError>;

/// Lazily built shared state of one run.
struct Ctx {
    s: Scenario,
    seed: u64,
    mode: Mode,
    params: HSParams,
    domain: GridDomain,
    cover: Option<WhitneyCover>,
    condenser: Option<CapacityResult>,
    rayleigh: Option<RayleighResult>,
}

impl Ctx {
    fn cover(&mut self) -> Res<&WhitneyCover> {
        if self.cover.is_none() {
            self.cover = Some(build_cover(&self.domain, self.s.whitney.c)?);
        }
        Ok(self.cover.as_ref().expect("built above"))
    }

    fn condenser(&mut self) -> Res<&CapacityResult> {
        if self.condenser.is_none() {
            let c = &self.s.capacity;
            let set = CellSet::closed_ball(&self.domain, &c.center, c.radius);
            if set.is_empty() {
                return Err(Error::EmptySet.into());
            }
            let delta = collar_width(&self.domain, &set, c.collar_fraction);
            let prob = CapacityProblem::with_collar(
                &self.domain,
                self.params.beta,
                self.params.p,
                set,
                delta,
            )?;
            self.condenser = Some(solve_capacity(&prob, &self.s.solver.config())?);
        }
        Ok(self.condenser.as_ref().expect("solved above"))
    }

    fn rayleigh(&mut self) -> Res<&RayleighResult> {
        if self.rayleigh.is_none() {
            let r = &self.s.rayleigh;
            let cfg = RayleighConfig {
                whitney_bumps: r.whitney_bumps,
                test_functions: r.test_functions,
                random_fields: r.random_fields,
                iterations: r.budget_for(self.domain.h()),
                cover_c: self.s.whitney.c,
                seed: self.seed,
                mode: self.mode.integrand(),
            };
            self.rayleigh = Some(rayleigh_lower_bound(&self.domain, &self.params, &cfg)?);
        }
        Ok(self.rayleigh.as_ref().expect("computed above"))
    }
}

fn grid_stats(d: &GridDomain) -> serde_json::Value {
    json!({
        "dim": d.dim(),
        "h": num(d.h()),
        "extent": &d.extent()[..d.dim()],
        "cells": d.len(),
        "inside_cells": d.inside_cells().len(),
    })
}

/// Validates, runs the pipeline and writes every artifact into `opts.out`.
pub fn run(parsed: Parsed, sub: Subcommand, opts: &Options) -> Res<Report> {
    let started = Instant::now();
    let Parsed {
        mut scenario,
        warnings,
    } = parsed;
    if let Some(seed) = opts.seed {
        scenario.seed = Some(seed);
    }
    if let Some(mode) = opts.mode {
        scenario.mode = mode;
    }
    let seed = scenario.seed.ok_or_else(|| {
        RunError::Scenario(ScenarioError::Invalid(vec!["seed is mandatory".into()]))
    })?;
    let mut art = Artifacts::new(&opts.out)?;
    let mut report = Report::new(sub.name(), seed, scenario.clone(), warnings);

    let outcome = (|| -> Res<Ctx> {
        let p = &scenario.params;
        let params = HSParams::new(p.p, p.q, p.beta)?;
        let domain = build_domain(
            &scenario.domain.shape.to_spec(),
            scenario.domain.spacing(),
            scenario.domain.padding,
        )?;
        let mut ctx = Ctx {
            s: scenario.clone(),
            seed,
            mode: scenario.mode,
            params,
            domain,
            cover: None,
            condenser: None,
            rayleigh: None,
        };
        let subs: Vec<Subcommand> = if sub == Subcommand::All {
            Subcommand::EACH.to_vec()
        } else {
            vec![sub]
        };
        for s in subs {
            run_one(&mut ctx, s, &mut report, &mut art)?;
        }
        Ok(ctx)
    })();

    match outcome {
        Ok(ctx) => {
            art.write("report.json", &report.to_json())?;
            let prov = Provenance {
                version: env!("CARGO_PKG_VERSION"),
                seed,
                threads: opts.threads.unwrap_or_else(rayon::current_num_threads),
                wall_clock_seconds: started.elapsed().as_secs_f64(),
                finished_unix_seconds: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                grid: grid_stats(&ctx.domain),
            };
            let mut p = serde_json::to_string_pretty(&prov).expect("provenance serializes");
            p.push('\n');
            art.write("provenance.json", &p)?;
            art.finish(None)?;
            Ok(report)
        }
        Err(e) => {
            // flush what exists so far
            let _ = art.write("report.json", &report.to_json());
            let _ = art.finish(Some(&e.to_string()));
            Err(e)
        }
    }
}

fn run_one(ctx: &mut Ctx, sub: Subcommand, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    match sub {
        Subcommand::Domain => domain(ctx, rep, art),
        Subcommand::Whitney => whitney(ctx, rep, art),
        Subcommand::Capacity => capacity(ctx, rep, art),
        Subcommand::Hardy => hardy(ctx, rep, art),
        Subcommand::Mazya => mazya(ctx, rep, art),
        Subcommand::Maximal => maximal(ctx, rep, art),
        Subcommand::Convolve => convolve(ctx, rep, art),
        Subcommand::Quasiadd => quasiadd(ctx, rep, art),
        Subcommand::WeakQuasiadd => weak_quasiadd(ctx, rep, art),
        Subcommand::BallBounds => ball_bounds(ctx, rep, art),
        Subcommand::Example62 => example62(ctx, rep, art),
        Subcommand::Equivalence => equivalence(ctx, rep, art),
        Subcommand::All => unreachable!("expanded by run"),
    }
}

fn write_svg(art: &mut Artifacts, name: &str, svg: Option<String>) -> Res<()> {
    if let Some(s) = svg {
        art.write(name, &s)?;
    }
    Ok(())
}

fn domain(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let d = &ctx.domain;
    let dmax = d.distances().iter().copied().fold(0.0, f64::max);
    let measure = d.inside_cells().len() as f64 * d.cell_measure();
    rep.push(
        "build_domain",
        json!({ "grid": grid_stats(d), "max_distance": num(dmax), "measure": num(measure) }),
    );
    art.write_csv(
        "domain.csv",
        &["quantity", "value"],
        &[
            vec!["h".into(), cell(d.h())],
            vec!["inside_cells".into(), d.inside_cells().len().to_string()],
            vec!["max_distance".into(), cell(dmax)],
            vec!["measure".into(), cell(measure)],
        ],
    )?;
    write_svg(
        art,
        "domain_distance.svg",
        svg::heatmap(d, d.distances(), "distance to the complement"),
    )
}

fn whitney(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let cover = ctx.cover()?.clone();
    let d = &ctx.domain;
    let check = verify_cover(d, &cover, cover.dilation(), OVERLAP_BOUND);
    let pou = build_partition(d, &cover)?;
    rep.push(
        "verify_cover",
        json!({
            "c": num(check.c),
            "balls": cover.len(),
            "dilation": num(check.dilation),
            "hypothesis_ok": check.hypothesis_ok,
            "uncovered_cells": check.uncovered_cells,
            "cover_ok": check.cover_ok,
            "radius_law_ok": check.radius_law_ok,
            "containment_violations": check.containment_violations,
            "containment_ok": check.containment_ok,
            "max_sandwich_slack": num(check.max_sandwich_slack),
            "sandwich_ok": check.sandwich_ok,
            "overlap": check.overlap,
            "overlap_bound": check.overlap_bound,
            "overlap_ok": check.overlap_ok,
            "all_pass": check.all_pass(),
        }),
    );
    rep.push(
        "build_partition",
        json!({
            "scale": num(pou.scale()),
            "nu": num(pou.nu()),
            "lipschitz": num(pou.lipschitz()),
            "overlap": pou.overlap(),
            "max_sum_error": num(pou.max_sum_error()),
        }),
    );
    let rows: Vec<Vec<String>> = cover
        .balls()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let p = d.center(b.center);
            let mut r = vec![i.to_string()];
            r.extend(p[..d.dim()].iter().map(|&x| cell(x)));
            r.push(cell(b.radius));
            r.push(cell(d.dist(b.center)));
            r
        })
        .collect();
    let header: Vec<&str> = ["ball", "x", "y", "z"][..1 + d.dim()]
        .iter()
        .copied()
        .chain(["radius", "depth"])
        .collect();
    art.write_csv("whitney_balls.csv", &header, &rows)?;
    let count: Vec<f64> = (0..d.len())
        .map(|c| cover.covering(c).len() as f64)
        .collect();
    write_svg(
        art,
        "whitney_multiplicity.svg",
        svg::heatmap(d, &count, "balls covering each cell"),
    )
}

/// `cap_{p,0}` of concentric balls `B(x, r) ⋐ B(x, R)` in the plane.
fn radial_closed_form(p: f64, r: f64, big_r: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    if (p - 2.0).abs() < 1e-12 {
        two_pi / (big_r / r).ln()
    } else {
        let a = (p - 2.0) / (p - 1.0);
        two_pi * a.abs().powf(p - 1.0) / (big_r.powf(a) - r.powf(a)).abs().powf(p - 1.0)
    }
}

fn capacity(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let r = ctx.condenser()?.clone();
    let d = &ctx.domain;
    rep.push(
        "solve_capacity",
        json!({
            "p": num(ctx.params.p),
            "beta": num(ctx.params.beta),
            "value": num(r.value),
            "upper_bound": num(r.upper_bound),
            "collar": num(r.delta),
            "iterations": r.stats.iterations,
            "converged": r.stats.converged,
            "relative_decrease": num(r.stats.relative_decrease),
            "feasibility_residual": num(r.stats.feasibility_residual),
            "restarts": r.stats.restarts,
        }),
    );
    let c = &ctx.s.capacity;
    if let Shape::Ball { center, radius } = &ctx.s.domain.shape {
        if d.dim() == 2 && ctx.params.beta == 0.0 && *center == c.center && c.radius < *radius {
            let exact = radial_closed_form(ctx.params.p, c.radius, *radius);
            rep.push(
                "radial_closed_form",
                json!({ "value": num(exact), "relative_error": num(r.value / exact - 1.0) }),
            );
        }
    }
    art.write_csv(
        "capacity.csv",
        &["value", "upper_bound", "collar", "iterations", "converged"],
        &[vec![
            cell(r.value),
            cell(r.upper_bound),
            cell(r.delta),
            r.stats.iterations.to_string(),
            r.stats.converged.to_string(),
        ]],
    )?;
    write_svg(
        art,
        "capacity_minimizer.svg",
        svg::heatmap(d, r.minimizer.values(), "capacity minimizer"),
    )
}

fn hardy(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let ray = ctx.rayleigh()?.clone();
    rep.push(
        "rayleigh_lower_bound",
        json!({
            "value": num(ray.value),
            "budgets": ray.budgets,
            "trace": nums(&ray.trace),
            "growth_factors": nums(&ray.growth_factors()),
            "seeds": ray.seeds.iter().map(|s| json!({
                "label": s.label,
                "initial": num(s.initial),
                "final": num(s.values.last().copied().unwrap_or(0.0)),
            })).collect::<Vec<_>>(),
        }),
    );
    let chain_cfg = ChainConfig {
        solve_levels: ctx.s.chain.solve_levels,
        solver: ctx.s.solver.config(),
        mode: ctx.mode.integrand(),
    };
    let chain = truncation_chain_check(&ctx.domain, &ray.witness, &ctx.params, &chain_cfg)?;
    rep.push(
        "truncation_chain_check",
        json!({
            "levels": chain.levels.len(),
            "leak": num(chain.leak),
            "max_level_leak": num(chain.max_level_leak),
            "chain_c_lhs": num(chain.chain_c_lhs),
            "chain_c_rhs": num(chain.chain_c_rhs),
            "chain_c_holds": chain.chain_c_holds,
            "chain_a": chain.chain_a.as_ref().map(|a| json!({
                "lowest_level": a.lowest_level,
                "lhs": num(a.lhs),
                "c1": num(a.c1),
                "rhs": num(a.rhs),
                "holds": a.holds,
                "quotient": num(a.quotient),
                "constant_bound": num(a.constant_bound),
            })),
        }),
    );
    let rows: Vec<Vec<String>> = ray
        .budgets
        .iter()
        .zip(&ray.trace)
        .map(|(b, v)| vec![b.to_string(), cell(*v)])
        .collect();
    art.write_csv("hardy_trace.csv", &["budget", "quotient"], &rows)?;
    write_svg(
        art,
        "hardy_witness.svg",
        svg::heatmap(&ctx.domain, ray.witness.values(), "Rayleigh witness"),
    )
}

fn condenser_family(ctx: &mut Ctx) -> Res<Vec<LabelledSet>> {
    let f = ctx.s.family.clone();
    let seed = ctx.seed;
    let cover = ctx.cover()?.clone();
    let d = &ctx.domain;
    let delta = d.h();
    let mut rng = family::rng(seed);
    let mut out = family::single_balls(d, &cover, f.single_balls, delta, &mut rng);
    out.extend(family::ball_unions(
        d,
        &cover,
        f.ball_unions,
        f.max_balls,
        delta,
        &mut rng,
    ));
    out.extend(family::cell_clusters(
        d,
        f.clusters,
        f.max_clusters,
        delta,
        &mut rng,
    ));
    out.extend(
        family::distance_sublevels(d, &f.sublevels)
            .into_iter()
            .filter(|s| family::clears_collar(d, &s.set, delta)),
    );
    Ok(out)
}

fn mazya(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let fam = condenser_family(ctx)?;
    let solver = ctx.s.solver.config();
    let mode = ctx.mode.integrand();
    let scan = mazya_scan(
        &ctx.domain,
        &ctx.params,
        &fam,
        &solver,
        mode,
        10.0 * solver.tol,
    );
    let ray = ctx.rayleigh()?.clone();
    let levels = family::field_levels(&ctx.domain, &ray.witness, &[0.9, 0.7, 0.5, 0.3, 0.1]);
    let applies = applies_check(&ctx.domain, &ray.witness, &levels, &ctx.params, mode);
    let inv_q = 1.0 / ctx.params.q;
    rep.push(
        "mazya_scan",
        json!({
            "samples": scan.samples.len(),
            "skipped": scan.skipped.iter().map(|(l, e)| json!({"label": l, "reason": e.to_string()})).collect::<Vec<_>>(),
            "max_ratio": num(scan.max_ratio),
            "max_ratio_root_q": num(scan.max_ratio.powf(inv_q)),
            "failure": scan.failure,
            "rayleigh_root_q": num(ray.value.powf(inv_q)),
        }),
    );
    rep.push(
        "applies_check",
        json!({
            "checked": applies.checked,
            "skipped": applies.skipped,
            "violations": applies.violations,
            "worst_ratio": num(applies.worst_ratio),
        }),
    );
    let rows: Vec<Vec<String>> = scan
        .samples
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                s.cells.to_string(),
                cell(s.lhs),
                cell(s.capacity),
                cell(s.ratio),
                s.degenerate.to_string(),
            ]
        })
        .collect();
    art.write_csv(
        "mazya.csv",
        &[
            "set",
            "cells",
            "integral",
            "capacity",
            "ratio",
            "degenerate",
        ],
        &rows,
    )?;
    let labels: Vec<String> = scan.samples.iter().map(|s| s.label.clone()).collect();
    let vals: Vec<f64> = scan.samples.iter().map(|s| s.ratio).collect();
    art.write(
        "mazya_ratios.svg",
        &svg::bar_chart(&labels, &vals, "Maz'ya ratios"),
    )?;
    Ok(())
}

fn maximal(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let m = &ctx.s.maximal;
    let cfg = MaximalConfig::new(m.kappa, m.s)?;
    let d = &ctx.domain;
    let bound = maximal_bound_check(d, ctx.params.beta, &cfg, m.trials, ctx.seed)?;
    // pointwise domination by a global ladder that contains every local one
    let dmax = d.distances().iter().copied().fold(0.0, f64::max);
    let kmax = (m.kappa * dmax / d.h()).floor() as usize + 1;
    let mut dominated = true;
    let mut kappa_monotone = true;
    for t in 0..m.trials.min(3) {
        let (_, f) = trial_field(d, ctx.seed, t);
        let local = local_maximal(d, &f, m.kappa);
        let global = global_maximal_capped(d, &f, kmax);
        let wider = local_maximal(d, &f, (2.0 * m.kappa).min(1.0));
        for &x in d.inside_cells() {
            dominated &= local.get(x) <= global.get(x);
            kappa_monotone &= local.get(x) <= wider.get(x);
        }
    }
    rep.push(
        "maximal_bound_check",
        json!({
            "beta": num(bound.beta),
            "s": num(bound.s),
            "kappa": num(bound.kappa),
            "trials": bound.ratios.len(),
            "max_ratio": num(bound.max_ratio),
            "constant_ratio": num(bound.constant_ratio),
            "dominated_by_global": dominated,
            "kappa_monotone": kappa_monotone,
        }),
    );
    let rows: Vec<Vec<String>> = bound
        .ratios
        .iter()
        .enumerate()
        .map(|(i, (k, r))| vec![i.to_string(), trial_label(*k), cell(*r)])
        .collect();
    art.write_csv("maximal.csv", &["trial", "kind", "ratio"], &rows)?;
    let labels: Vec<String> = bound
        .ratios
        .iter()
        .enumerate()
        .map(|(i, (k, _))| format!("{i}:{}", trial_label(*k)))
        .collect();
    let vals: Vec<f64> = bound.ratios.iter().map(|r| r.1).collect();
    art.write(
        "maximal_ratios.svg",
        &svg::bar_chart(&labels, &vals, "weighted L^s ratios"),
    )?;
    Ok(())
}

fn convolve(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let m = ctx.s.maximal.clone();
    let cfg = ConvolutionConfig::new(ctx.s.convolution.t, m.kappa, m.s)?;
    let witness = ctx.s.convolution.witness;
    let u: Field = match witness {
        Witness::BallTest => {
            let cover = ctx.cover()?.clone();
            ball_test_function(&ctx.domain, &cover, 0)
        }
        Witness::Condenser => ctx.condenser()?.minimizer.clone(),
    };
    let outer = ctx.cover()?.clone();
    let d = &ctx.domain;
    let g = Field::from_values(d, discrete_gradient(d, &u))?;
    if !cfg.gradient_constraint_ok() {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "requires t < 6κ/(3 + 2κ)".into(),
        }
        .into());
    }
    let conv = discrete_convolution(d, &u, &cfg)?;
    let grad = gradient_report(d, &conv.field, &g, &cfg);
    let retained = retained_ball_bound(d, &u, &conv.field, &outer);
    let dom = domination_constant(d, &u, &conv.field);
    rep.push(
        "upper_gradient_check",
        json!({
            "witness": format!("{witness:?}"),
            "t": num(cfg.t),
            "c": num(cfg.c()),
            "kappa": num(cfg.kappa),
            "s": num(cfg.s),
            "max_quotient": num(grad.max_quotient),
            "violations": grad.violations,
            "checked_cells": grad.checked_cells,
            "tolerance": num(grad.tolerance),
        }),
    );
    rep.push(
        "discrete_convolution",
        json!({
            "balls": conv.cover.len(),
            "retained_balls": retained.retained,
            "retained_constant": num(retained.constant),
            "domination_constant": num(dom),
        }),
    );
    art.write_csv(
        "convolve.csv",
        &[
            "max_quotient",
            "violations",
            "retained_balls",
            "retained_constant",
            "domination_constant",
        ],
        &[vec![
            cell(grad.max_quotient),
            grad.violations.to_string(),
            retained.retained.to_string(),
            cell(retained.constant),
            cell(dom),
        ]],
    )?;
    write_svg(
        art,
        "convolve_ut.svg",
        svg::heatmap(d, conv.field.values(), "discrete convolution u_t"),
    )
}

fn quasiadd(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let q = ctx.s.quasiadd.clone();
    let cover = ctx.cover()?.clone();
    let d = &ctx.domain;
    let mut rng = family::rng(ctx.seed ^ 0x51);
    let fam = family::ball_unions(d, &cover, q.samples, q.max_balls, d.h(), &mut rng);
    let scan = quasiadd_scan(d, &ctx.params, &cover, &fam, &ctx.s.solver.config());
    rep.push(
        "quasiadd_scan",
        json!({
            "samples": scan.samples.len(),
            "skipped": scan.skipped.len(),
            "degenerate": scan.degenerate,
            "max_ratio": num(scan.max_ratio),
        }),
    );
    let rows: Vec<Vec<String>> = scan
        .samples
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                s.balls.len().to_string(),
                cell(s.capacity),
                cell(s.sum),
                cell(s.ratio),
                s.degenerate.to_string(),
            ]
        })
        .collect();
    art.write_csv(
        "quasiadd.csv",
        &[
            "set",
            "pieces",
            "capacity",
            "piece_sum",
            "ratio",
            "degenerate",
        ],
        &rows,
    )?;
    let labels: Vec<String> = scan.samples.iter().map(|s| s.label.clone()).collect();
    let vals: Vec<f64> = scan.samples.iter().map(|s| s.ratio).collect();
    art.write(
        "quasiadd_ratios.svg",
        &svg::bar_chart(&labels, &vals, "quasiadditivity ratios"),
    )?;
    Ok(())
}

fn weak_quasiadd(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let q = ctx.s.quasiadd.clone();
    let cover = ctx.cover()?.clone();
    let d = &ctx.domain;
    let dmax = d.distances().iter().copied().fold(0.0, f64::max);
    let sets = index_families(
        d,
        &cover,
        q.index_sets,
        q.max_balls,
        q.min_depth_fraction * dmax,
        ctx.seed ^ 0x77,
    );
    let scan = weak_quasiadd_scan(d, &ctx.params, &cover, &sets, &ctx.s.solver.config());
    rep.push(
        "weak_quasiadd_scan",
        json!({
            "samples": scan.samples.len(),
            "skipped": scan.skipped.len(),
            "max_ratio": num(scan.max_ratio),
            "subadditivity_failures": scan.subadditivity_failures,
        }),
    );
    let rows: Vec<Vec<String>> = scan
        .samples
        .iter()
        .map(|s| {
            vec![
                s.balls
                    .iter()
                    .map(|b| b.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                cell(s.union_cap),
                cell(s.ball_caps.iter().sum()),
                cell(s.ratio),
                s.subadditive.to_string(),
            ]
        })
        .collect();
    art.write_csv(
        "weak_quasiadd.csv",
        &[
            "balls",
            "union_capacity",
            "ball_capacity_sum",
            "ratio",
            "subadditive",
        ],
        &rows,
    )?;
    let labels: Vec<String> = (0..scan.samples.len()).map(|i| format!("I{i}")).collect();
    let vals: Vec<f64> = scan.samples.iter().map(|s| s.ratio).collect();
    art.write(
        "weak_quasiadd_ratios.svg",
        &svg::bar_chart(&labels, &vals, "weak quasiadditivity ratios"),
    )?;
    Ok(())
}

fn ball_bounds(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let q = ctx.s.quasiadd.clone();
    let cover = ctx.cover()?.clone();
    let d = &ctx.domain;
    let balls = resolved_balls(
        d,
        &cover,
        q.min_radius_cells,
        q.ball_samples,
        ctx.seed ^ 0xba,
    );
    let b = ball_bounds_scan(
        d,
        &ctx.params,
        &cover,
        &balls,
        &ctx.s.solver.config(),
        ctx.mode.integrand(),
    );
    rep.push(
        "ball_bounds_scan",
        json!({
            "balls": b.records.len(),
            "skipped": b.skipped.len(),
            "min_lower_ratio": num(b.min_lower),
            "max_lower_ratio": num(b.max_lower),
            "spread": num(b.spread),
            "order_violations": b.order_violations,
        }),
    );
    let rows: Vec<Vec<String>> = b
        .records
        .iter()
        .map(|r| {
            vec![
                r.ball.to_string(),
                cell(r.radius),
                cell(r.capacity),
                cell(r.reference),
                cell(r.lower_ratio),
                cell(r.upper_ratio),
            ]
        })
        .collect();
    art.write_csv(
        "ball_bounds.csv",
        &[
            "ball",
            "radius",
            "capacity",
            "reference",
            "lower_ratio",
            "upper_ratio",
        ],
        &rows,
    )?;
    let labels: Vec<String> = b.records.iter().map(|r| format!("B{}", r.ball)).collect();
    let vals: Vec<f64> = b.records.iter().map(|r| r.lower_ratio).collect();
    art.write(
        "ball_bounds.svg",
        &svg::bar_chart(&labels, &vals, "ball capacity / reference"),
    )?;
    Ok(())
}

fn example62(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let e = &ctx.s.example62;
    let h = e.h.unwrap_or_else(|| ctx.domain.h());
    let seq = example_62_sequence(ctx.params.p, ctx.params.beta, e.j_min, e.j_max, h)?;
    rep.push(
        "example_62_sequence",
        json!({
            "p": num(seq.p),
            "beta": num(seq.beta),
            "h": num(seq.h),
            "j": seq.j,
            "energies": nums(&seq.energies),
            "slope": seq.slope.map(num),
            "predicted_slope": num(seq.predicted),
        }),
    );
    let rows: Vec<Vec<String>> = seq
        .j
        .iter()
        .zip(&seq.energies)
        .map(|(j, e)| vec![j.to_string(), cell(*e), cell(e.log2())])
        .collect();
    art.write_csv("example62.csv", &["j", "energy", "log2_energy"], &rows)?;
    let labels: Vec<String> = seq.j.iter().map(|j| format!("j={j}")).collect();
    let logs: Vec<f64> = seq.energies.iter().map(|e| e.log2()).collect();
    art.write(
        "example62.svg",
        &svg::bar_chart(&labels, &logs, "log2 energy of u_j"),
    )?;
    Ok(())
}

fn equivalence(ctx: &mut Ctx, rep: &mut Report, art: &mut Artifacts) -> Res<()> {
    let e = &ctx.s.equivalence;
    let r = &ctx.s.rayleigh;
    let cfg = EquivalenceConfig {
        c: ctx.s.whitney.c,
        ball_c: e.ball_c,
        budget: e.budget,
        samples: e.samples,
        max_balls: e.max_balls,
        ball_samples: e.ball_samples,
        solver: ctx.s.solver.config(),
        rayleigh: RayleighConfig {
            whitney_bumps: r.whitney_bumps,
            test_functions: r.test_functions,
            random_fields: r.random_fields,
            iterations: 0,
            cover_c: ctx.s.whitney.c,
            seed: ctx.seed,
            mode: ctx.mode.integrand(),
        },
        seed: ctx.seed,
    };
    let out = equivalence_experiment(
        &ctx.s.domain.shape.to_spec(),
        ctx.domain.h(),
        &ctx.params,
        &cfg,
    )?;
    let cond = |c: &hardycap_core::quasiadd::ConditionRecord| {
        json!({
            "coarse": num(c.coarse),
            "doubled_budget": num(c.doubled),
            "refine_base": num(c.refine_base),
            "refined": num(c.fine),
            "budget_factor": num(c.budget_factor),
            "refine_factor": num(c.refine_factor),
            "status": c.status.as_str(),
        })
    };
    rep.push(
        "equivalence_experiment",
        json!({
            "h": num(out.h),
            "budgets": out.budgets,
            "plateau_budgets": out.plateau_budgets,
            "hardy": cond(&out.hardy),
            "quasiadd": cond(&out.quasiadd),
            "weak_quasiadd": cond(&out.weak),
            "ball_lower_bound": cond(&out.ball_lower),
            "ball_spread": num(out.ball_spread),
            "interpolation_holds": out.interpolation_holds,
            "consistent": out.consistent,
            "decision_rule": "bounded: change < 30% under refinement and budget doubling; failing: growth >= 1.5x under both; Rayleigh refinement compares plateau values after h^-2 iterations; scans double their budget by halving the solver tolerance",
        }),
    );
    rep.verdict = Some(out.verdict.clone());
    let rows: Vec<Vec<String>> = [&out.hardy, &out.quasiadd, &out.weak, &out.ball_lower]
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                cell(c.coarse),
                cell(c.doubled),
                cell(c.refine_base),
                cell(c.fine),
                c.status.as_str().to_string(),
            ]
        })
        .collect();
    art.write_csv(
        "equivalence.csv",
        &[
            "condition",
            "coarse",
            "doubled_budget",
            "refine_base",
            "refined",
            "status",
        ],
        &rows,
    )?;
    Ok(())
}

/// Parses and runs in one step; scenario errors map to exit status 2.
pub fn run_path(path: &std::path::Path, sub: Subcommand, opts: &Options) -> Res<Report> {
    let parsed = crate::scenario::load(path).map_err(RunError::Scenario)?;
    run(parsed, sub, opts)
}
