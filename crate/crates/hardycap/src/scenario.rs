//! Scenario files: TOML with one table per module.
//!
//! Parsing is two-stage. Syntax and type errors come from the TOML
//! deserializer and carry line and column. Admissibility is then checked in
//! one pass so every violated hypothesis is reported together.

use std::fmt;
use std::path::Path;

use hardycap_core::capacity::SolverConfig;
use hardycap_core::geometry::ShapeSpec;
use hardycap_core::hardy::{HSParams, IntegrandMode};
use hardycap_core::maximal::{ConvolutionConfig, MaximalConfig};
use serde::{Deserialize, Serialize};

/// Whitney parameter bound needed for the equivalence of the HS
/// inequality, quasiadditivity and weak quasiadditivity on grids.
pub const EQUIVALENCE_C_BOUND: f64 = 1.0 / 53.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Mandatory; `--seed` overrides it.
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    pub domain: DomainSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub whitney: WhitneySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub capacity: CapacitySection,
    #[serde(default)]
    pub rayleigh: RayleighSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub family: FamilySection,
    #[serde(default)]
    pub maximal: MaximalSection,
    #[serde(default)]
    pub convolution: ConvolutionSection,
    #[serde(default)]
    pub quasiadd: QuasiaddSection,
    #[serde(default)]
    pub example62: Example62Section,
    #[serde(default)]
    pub equivalence: EquivalenceSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Ambient,
    Qregular,
}

impl Mode {
    pub fn integrand(self) -> IntegrandMode {
        match self {
            Mode::Ambient => IntegrandMode::Ambient,
            Mode::Qregular => IntegrandMode::QRegular,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ambient" => Ok(Mode::Ambient),
            "qregular" => Ok(Mode::Qregular),
            _ => Err(format!("unknown mode `{s}` (expected ambient or qregular)")),
        }
    }
}

/// Shape description, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    Box {
        min: Vec<f64>,
        max: Vec<f64>,
    },
    LShape {
        min: Vec<f64>,
        max: Vec<f64>,
    },
    PuncturedBox {
        min: Vec<f64>,
        max: Vec<f64>,
        hole_center: Vec<f64>,
        hole_radius: f64,
    },
}

impl Shape {
    pub fn to_spec(&self) -> ShapeSpec {
        match self.clone() {
            Shape::Ball { center, radius } => ShapeSpec::Ball { center, radius },
            Shape::Annulus {
                center,
                inner,
                outer,
            } => ShapeSpec::Annulus {
                center,
                inner,
                outer,
            },
            Shape::Box { min, max } => ShapeSpec::Box { min, max },
            Shape::LShape { min, max } => ShapeSpec::LShape { min, max },
            Shape::PuncturedBox {
                min,
                max,
                hole_center,
                hole_radius,
            } => ShapeSpec::PuncturedBox {
                min,
                max,
                hole_center,
                hole_radius,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub shape: Shape,
    /// Grid spacing; give either `h` or `cells_per_unit`.
    pub h: Option<f64>,
    pub cells_per_unit: Option<u32>,
    #[serde(default)]
    pub padding: f64,
}

impl DomainSection {
    pub fn spacing(&self) -> f64 {
        match (self.h, self.cells_per_unit) {
            (Some(h), _) => h,
            (None, Some(n)) => 1.0 / n as f64,
            (None, None) => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub p: f64,
    pub q: f64,
    pub beta: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            p: 2.0,
            q: 2.0,
            beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitneySection {
    pub c: f64,
}

impl Default for WhitneySection {
    fn default() -> Self {
        Self { c: 1.0 / 54.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
    pub smoothing: f64,
    pub window: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            tol: d.tol,
            max_iters: d.max_iters,
            smoothing: d.smoothing,
            window: d.window,
        }
    }
}

impl SolverSection {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            smoothing: self.smoothing,
            window: self.window,
        }
    }
}

/// The condenser set `E` of the `capacity` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacitySection {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Collar width is `h + collar_fraction · min_E d`.
    pub collar_fraction: f64,
}

impl Default for CapacitySection {
    fn default() -> Self {
        Self {
            center: vec![0.5, 0.5],
            radius: 0.25,
            collar_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RayleighSection {
    /// Ascent iterations; 0 selects `h^{-2}/32`.
    pub budget: usize,
    pub whitney_bumps: usize,
    pub test_functions: usize,
    pub random_fields: usize,
}

impl Default for RayleighSection {
    fn default() -> Self {
        Self {
            budget: 0,
            whitney_bumps: 3,
            test_functions: 2,
            random_fields: 2,
        }
    }
}

impl RayleighSection {
    pub fn budget_for(&self, h: f64) -> usize {
        if self.budget > 0 {
            self.budget
        } else {
            ((1.0 / (h * h)) / 32.0).round().max(1.0) as usize
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    /// Top truncation levels whose capacities are solved.
    pub solve_levels: usize,
}

/// Condenser families for the Maz'ya and strong quasiadditivity scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySection {
    pub single_balls: usize,
    pub ball_unions: usize,
    pub max_balls: usize,
    pub clusters: usize,
    pub max_clusters: usize,
    /// Thresholds `s` of the sets `{d ≥ s}`.
    pub sublevels: Vec<f64>,
}

impl Default for FamilySection {
    fn default() -> Self {
        Self {
            single_balls: 10,
            ball_unions: 10,
            max_balls: 4,
            clusters: 6,
            max_clusters: 3,
            sublevels: vec![0.1, 0.2, 0.3],
        }
    }
}

impl FamilySection {
    pub fn total(&self) -> usize {
        self.single_balls + self.ball_unions + self.clusters + self.sublevels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaximalSection {
    pub kappa: f64,
    pub s: f64,
    pub trials: usize,
}

impl Default for MaximalSection {
    fn default() -> Self {
        Self {
            kappa: 0.18,
            s: 1.5,
            trials: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    /// Test function of the deepest ball of the cover.
    #[default]
    BallTest,
    /// Minimizer of the `capacity` condenser.
    Condenser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvolutionSection {
    pub t: f64,
    pub witness: Witness,
}

impl Default for ConvolutionSection {
    fn default() -> Self {
        Self {
            t: 0.1,
            witness: Witness::BallTest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasiaddSection {
    /// Sets in the strong scan.
    pub samples: usize,
    /// Index sets in the weak scan.
    pub index_sets: usize,
    pub max_balls: usize,
    /// Weak-scan balls are drawn at depth at least this fraction of the
    /// deepest point.
    pub min_depth_fraction: f64,
    /// Balls in the ball-bound scan.
    pub ball_samples: usize,
    /// Smallest radius, in cells, of a ball in the ball-bound scan.
    pub min_radius_cells: f64,
}

impl Default for QuasiaddSection {
    fn default() -> Self {
        Self {
            samples: 10,
            index_sets: 20,
            max_balls: 8,
            min_depth_fraction: 0.2,
            ball_samples: 12,
            min_radius_cells: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Example62Section {
    pub j_min: u32,
    pub j_max: u32,
    /// Grid spacing of the disc; defaults to the domain spacing.
    pub h: Option<f64>,
}

impl Default for Example62Section {
    fn default() -> Self {
        Self {
            j_min: 2,
            j_max: 6,
            h: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquivalenceSection {
    /// Whitney parameter of the ball-bound scan.
    pub ball_c: f64,
    pub samples: usize,
    pub max_balls: usize,
    pub ball_samples: usize,
    /// Coarse Rayleigh budget; 0 selects `h^{-2}/32`.
    pub budget: usize,
}

impl Default for EquivalenceSection {
    fn default() -> Self {
        Self {
            ball_c: 0.25,
            samples: 4,
            max_balls: 3,
            ball_samples: 4,
            budget: 0,
        }
    }
}

/// Problems found in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Unreadable file.
    Io(String),
    /// TOML syntax or schema error; the message carries line and column.
    Syntax(String),
    /// Every violated constraint, in schema order.
    Invalid(Vec<String>),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io(m) => write!(f, "cannot read scenario: {m}"),
            ScenarioError::Syntax(m) => write!(f, "scenario syntax error: {m}"),
            ScenarioError::Invalid(v) => {
                writeln!(f, "scenario violates {} constraint(s):", v.len())?;
                for m in v {
                    writeln!(f, "  - {m}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ScenarioError {}

/// A validated scenario plus non-fatal warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

pub fn load(path: &Path) -> Result<Parsed, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Parsed, ScenarioError> {
    let scenario: Scenario =
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    let warnings = validate(&scenario)?;
    Ok(Parsed { scenario, warnings })
}

/// Checks every admissibility constraint and returns the warnings.
pub fn validate(s: &Scenario) -> Result<Vec<String>, ScenarioError> {
    let mut bad = Vec::new();
    let mut warn = Vec::new();

    if s.seed.is_none() {
        bad.push("seed is mandatory".to_string());
    }

    let d = &s.domain;
    match (d.h, d.cells_per_unit) {
        (Some(_), Some(_)) => bad.push("domain: give h or cells_per_unit, not both".into()),
        (None, None) => bad.push("domain: h or cells_per_unit is required".into()),
        (Some(h), None) if !(h > 0.0 && h.is_finite()) => {
            bad.push(format!("domain.h = {h}: must be positive"))
        }
        (None, Some(0)) => bad.push("domain.cells_per_unit must be positive".into()),
        _ => {}
    }
    if !(d.padding >= 0.0 && d.padding.is_finite()) {
        bad.push(format!(
            "domain.padding = {}: must be non-negative",
            d.padding
        ));
    }
    if let Err(e) = d.shape.to_spec().validate() {
        bad.push(format!("domain.shape: {e}"));
    }

    let p = &s.params;
    if !(p.p > 1.0 && p.p.is_finite()) {
        bad.push(format!("params.p = {}: requires 1 < p", p.p));
    }
    if !(p.q.is_finite()) || p.q < p.p {
        bad.push(format!("params.q = {}: requires p ≤ q < ∞", p.q));
    }
    if !p.beta.is_finite() {
        bad.push("params.beta must be finite".into());
    }
    if bad.is_empty() {
        if let Err(e) = HSParams::new(p.p, p.q, p.beta) {
            bad.push(format!("params: {e}"));
        }
    }

    let c = s.whitney.c;
    if !(c > 0.0 && c < 1.0 / 3.0) {
        bad.push(format!("whitney.c = {c}: requires 0 < c < 1/3"));
    } else if c >= EQUIVALENCE_C_BOUND {
        warn.push(format!(
            "whitney.c = {c}: the equivalence of the HS inequality and (weak) quasiadditivity needs c < 1/53"
        ));
    }

    if let Err(e) = s.solver.config().validate() {
        bad.push(format!("solver: {e}"));
    }

    if s.capacity.radius <= 0.0 || !s.capacity.radius.is_finite() {
        bad.push(format!(
            "capacity.radius = {}: must be positive",
            s.capacity.radius
        ));
    }
    if !(s.capacity.collar_fraction >= 0.0 && s.capacity.collar_fraction < 1.0) {
        bad.push(format!(
            "capacity.collar_fraction = {}: requires 0 ≤ fraction < 1",
            s.capacity.collar_fraction
        ));
    }

    let m = &s.maximal;
    match MaximalConfig::new(m.kappa, m.s) {
        Err(e) => bad.push(format!("maximal: {e}")),
        Ok(cfg) => {
            if !cfg.bounded_range() {
                warn.push(format!(
                    "maximal.kappa = {}: the weighted bound is only claimed for κ < 1/5",
                    m.kappa
                ));
            }
        }
    }
    if m.s >= p.p {
        bad.push(format!("maximal.s = {}: requires s < p = {}", m.s, p.p));
    }

    match ConvolutionConfig::new(s.convolution.t, m.kappa, m.s) {
        Err(e) => bad.push(format!("convolution: {e}")),
        Ok(cfg) => {
            if !cfg.gradient_constraint_ok() {
                bad.push(format!(
                    "convolution.t = {}: requires t < 6κ/(3 + 2κ) = {:.6}",
                    cfg.t,
                    6.0 * m.kappa / (3.0 + 2.0 * m.kappa)
                ));
            }
        }
    }

    let e = &s.example62;
    if e.j_min > e.j_max {
        bad.push("example62: requires j_min ≤ j_max".into());
    }
    if let Some(h) = e.h {
        if !(h > 0.0) {
            bad.push(format!("example62.h = {h}: must be positive"));
        }
    }
    if let Some(&t) = s.family.sublevels.iter().find(|t| !(**t > 0.0)) {
        bad.push(format!("family.sublevels: threshold {t} must be positive"));
    }
    if s.quasiadd.max_balls == 0 || s.equivalence.max_balls == 0 {
        bad.push("max_balls must be at least 1".into());
    }
    let bc = s.equivalence.ball_c;
    if !(bc > 0.0 && bc < 1.0 / 3.0) {
        bad.push(format!(
            "equivalence.ball_c = {bc}: requires 0 < ball_c < 1/3"
        ));
    }

    if bad.is_empty() {
        Ok(warn)
    } else {
        Err(ScenarioError::Invalid(bad))
    }
}
