//! Open sets on uniform grids, their distance-to-complement fields, and ball
//! measures.
//!
//! A cell belongs to the domain iff its center lies in the open set. Distances
//! are evaluated at cell centers from the analytic description of the shape,
//! so the weight `d(x, Ω^c)^β` carries no staircase bias from the mask.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ceil, floor, powf, sqrt, unit_ball_volume};
use crate::transform::squared_edt;

/// Supersampling factor used when a shape has no exact distance formula.
const SUPERSAMPLE_2D: usize = 5;
const SUPERSAMPLE_3D: usize = 3;

/// Tagged description of an open set in `R^n`, `n ∈ {2, 3}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{inner < |x - center| < outer}`.
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    /// Open axis-aligned box.
    Box { min: Vec<f64>, max: Vec<f64> },
    /// Open box with the closed upper quadrant `[mid, max]` (axes 0 and 1)
    /// removed.
    LShape { min: Vec<f64>, max: Vec<f64> },
    /// Open box minus a closed ball.
    PuncturedBox {
        min: Vec<f64>,
        max: Vec<f64>,
        hole_center: Vec<f64>,
        hole_radius: f64,
    },
    /// `base` minus the closure of `remove`.
    Difference {
        base: Box<ShapeSpec>,
        remove: Box<ShapeSpec>,
    },
    /// Union of open sets.
    Union(Vec<ShapeSpec>),
}

fn dist_point(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Exact signed distance to the boundary of an axis-aligned box, positive inside.
fn box_sd(x: &[f64], min: &[f64], max: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::NEG_INFINITY;
    for a in 0..min.len() {
        let c = 0.5 * (min[a] + max[a]);
        let half = 0.5 * (max[a] - min[a]);
        let q = (x[a] - c).abs() - half;
        if q > 0.0 {
            outside += q * q;
        }
        if q > inside {
            inside = q;
        }
    }
    if outside > 0.0 {
        -sqrt(outside)
    } else {
        -inside
    }
}

impl ShapeSpec {
    /// Ambient dimension implied by the coordinate vectors.
    pub fn dim(&self) -> Result<usize> {
        let n = match self {
            ShapeSpec::Ball { center, .. } | ShapeSpec::Annulus { center, .. } => center.len(),
            ShapeSpec::Box { min, max }
            | ShapeSpec::LShape { min, max }
            | ShapeSpec::PuncturedBox { min, max, .. } => {
                if min.len() != max.len() {
                    return Err(Error::InvalidShape(
                        "box corners differ in dimension".into(),
                    ));
                }
                min.len()
            }
            ShapeSpec::Difference { base, remove } => {
                let a = base.dim()?;
                if remove.dim()? != a {
                    return Err(Error::InvalidShape(
                        "difference operands differ in dimension".into(),
                    ));
                }
                a
            }
            ShapeSpec::Union(parts) => {
                let first = parts
                    .first()
                    .ok_or_else(|| Error::InvalidShape("empty union".into()))?
                    .dim()?;
                for p in parts {
                    if p.dim()? != first {
                        return Err(Error::InvalidShape(
                            "union parts differ in dimension".into(),
                        ));
                    }
                }
                first
            }
        };
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidShape(format!(
                "dimension {n} not in {{2, 3}}"
            )));
        }
        Ok(n)
    }

    /// Checks parameters; the described set must be open and nonempty.
    pub fn validate(&self) -> Result<usize> {
        let n = self.dim()?;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ShapeSpec::Ball { center, radius } => {
                if !finite(center) || !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidShape(
                        "ball needs finite center and radius > 0".into(),
                    ));
                }
            }
            ShapeSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                if !finite(center) || !(*inner >= 0.0) || !(outer > inner) || !outer.is_finite() {
                    return Err(Error::InvalidShape(
                        "annulus needs 0 <= inner < outer".into(),
                    ));
                }
            }
            ShapeSpec::Box { min, max } | ShapeSpec::LShape { min, max } => {
                if !finite(min) || !finite(max) || min.iter().zip(max).any(|(a, b)| !(a < b)) {
                    return Err(Error::InvalidShape(
                        "box needs min < max on every axis".into(),
                    ));
                }
            }
            ShapeSpec::PuncturedBox {
                min,
                max,
                hole_center,
                hole_radius,
            } => {
                if !finite(min) || !finite(max) || min.iter().zip(max).any(|(a, b)| !(a < b)) {
                    return Err(Error::InvalidShape(
                        "box needs min < max on every axis".into(),
                    ));
                }
                if hole_center.len() != n || !finite(hole_center) || !(*hole_radius > 0.0) {
                    return Err(Error::InvalidShape(
                        "hole needs a center and radius > 0".into(),
                    ));
                }
            }
            ShapeSpec::Difference { base, remove } => {
                base.validate()?;
                remove.validate()?;
            }
            ShapeSpec::Union(parts) => {
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(n)
    }

    /// Signed distance, positive inside. Exact for every variant except
    /// [`ShapeSpec::Union`], where it is a lower bound of the distance to the
    /// complement (the sign is still exact).
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            ShapeSpec::Ball { center, radius } => radius - dist_point(x, center),
            ShapeSpec::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist_point(x, center);
                (outer - r).min(r - inner)
            }
            ShapeSpec::Box { min, max } => box_sd(x, min, max),
            ShapeSpec::LShape { min, max } => {
                let mut notch_min = min.clone();
                for a in 0..2 {
                    notch_min[a] = 0.5 * (min[a] + max[a]);
                }
                // the notch spans the full extent along axes >= 2 and beyond
                // the outer box on axes 0, 1 so its closure cuts cleanly
                let mut notch_max = max.clone();
                for a in 0..min.len() {
                    let w = max[a] - min[a];
                    notch_max[a] = max[a] + w;
                    if a >= 2 {
                        notch_min[a] = min[a] - w;
                    }
                }
                box_sd(x, min, max).min(-box_sd(x, &notch_min, &notch_max))
            }
            ShapeSpec::PuncturedBox {
                min,
                max,
                hole_center,
                hole_radius,
            } => box_sd(x, min, max).min(dist_point(x, hole_center) - hole_radius),
            ShapeSpec::Difference { base, remove } => {
                base.signed_distance(x).min(-remove.signed_distance(x))
            }
            ShapeSpec::Union(parts) => parts
                .iter()
                .map(|p| p.signed_distance(x))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Whether [`ShapeSpec::signed_distance`] is the exact distance.
    pub fn has_exact_distance(&self) -> bool {
        match self {
            ShapeSpec::Union(parts) => parts.len() == 1 && parts[0].has_exact_distance(),
            ShapeSpec::Difference { base, remove } => {
                base.has_exact_distance() && remove.has_exact_distance()
            }
            _ => true,
        }
    }

    /// Closed-set membership (`signed_distance >= 0`).
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        self.signed_distance(x) >= 0.0
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ShapeSpec::Ball { center, radius: r }
            | ShapeSpec::Annulus {
                center, outer: r, ..
            } => (
                center.iter().map(|c| c - r).collect(),
                center.iter().map(|c| c + r).collect(),
            ),
            ShapeSpec::Box { min, max }
            | ShapeSpec::LShape { min, max }
            | ShapeSpec::PuncturedBox { min, max, .. } => (min.clone(), max.clone()),
            ShapeSpec::Difference { base, .. } => base.bounds(),
            ShapeSpec::Union(parts) => {
                let (mut lo, mut hi) = parts[0].bounds();
                for p in &parts[1..] {
                    let (l, h) = p.bounds();
                    for a in 0..lo.len() {
                        lo[a] = lo[a].min(l[a]);
                        hi[a] = hi[a].max(h[a]);
                    }
                }
                (lo, hi)
            }
        }
    }
}

/// How `μ(B(x, r))` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeasureMode {
    /// Lebesgue measure of the ball in `R^n`, `ω_n r^n`.
    #[default]
    Ambient,
    /// Number of grid cells whose centers lie in the open ball, times `h^n`,
    /// clipped to the grid bounding box.
    Counted,
}

/// The weight `w_β(x) = d(x, Ω^c)^β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceWeight {
    pub beta: f64,
}

impl DistanceWeight {
    pub fn new(beta: f64) -> Self {
        Self { beta }
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else if d > 0.0 {
            powf(d, self.beta)
        } else if self.beta > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Weight at every cell; outside cells get 0.
    pub fn field(&self, domain: &GridDomain) -> Vec<f64> {
        let mut w = vec![0.0; domain.len()];
        for &c in domain.inside_cells() {
            w[c] = self.eval(domain.dist(c));
        }
        w
    }
}

/// A discretized open set `Ω ⊊ R^n` with its distance field.
///
/// Cells are indexed linearly with axis 0 fastest. The grid always keeps at
/// least one layer of outside cells around the domain, so the `+axis`
/// neighbor of an inside cell is a valid index.
#[derive(Debug, Clone)]
pub struct GridDomain {
    dim: usize,
    h: f64,
    extent: [usize; 3],
    origin: [f64; 3],
    strides: [usize; 3],
    inside: Vec<bool>,
    dist: Vec<f64>,
    inside_cells: Vec<usize>,
}

impl GridDomain {
    /// Assembles a domain from raw arrays. `dist` must be positive exactly on
    /// inside cells and `inside` must not touch the grid border.
    pub fn from_parts(
        dim: usize,
        h: f64,
        extent: [usize; 3],
        origin: [f64; 3],
        inside: Vec<bool>,
        dist: Vec<f64>,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::param("dim", "must be 2 or 3"));
        }
        if !(h > 0.0) {
            return Err(Error::param("h", "must be positive"));
        }
        let mut extent = extent;
        if dim == 2 {
            extent[2] = 1;
        }
        let total = extent[0] * extent[1] * extent[2];
        if inside.len() != total || dist.len() != total {
            return Err(Error::param(
                "extent",
                "array lengths do not match the extent",
            ));
        }
        let strides = [1, extent[0], extent[0] * extent[1]];
        let inside_cells: Vec<usize> = (0..total).filter(|&i| inside[i]).collect();
        if inside_cells.is_empty() {
            return Err(Error::EmptyInterior);
        }
        if inside_cells.len() == total {
            return Err(Error::EmptyComplement);
        }
        let dom = Self {
            dim,
            h,
            extent,
            origin,
            strides,
            inside,
            dist,
            inside_cells,
        };
        for &c in &dom.inside_cells {
            let ijk = dom.coords(c);
            for a in 0..dim {
                if ijk[a] == 0 || ijk[a] + 1 >= extent[a] {
                    return Err(Error::param(
                        "extent",
                        "inside cell touches the grid border",
                    ));
                }
            }
            if !(dom.dist[c] > 0.0) {
                return Err(Error::param(
                    "dist",
                    "inside cell with non-positive distance",
                ));
            }
        }
        Ok(dom)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn strides(&self) -> [usize; 3] {
        self.strides
    }

    /// Total number of grid cells (inside and outside).
    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inside.is_empty()
    }

    /// `h^n`.
    pub fn cell_measure(&self) -> f64 {
        powf(self.h, self.dim as f64)
    }

    #[inline]
    pub fn is_inside(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    /// `d(x, Ω^c)` at a cell center (0 outside).
    #[inline]
    pub fn dist(&self, idx: usize) -> f64 {
        self.dist[idx]
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn inside_mask(&self) -> &[bool] {
        &self.inside
    }

    /// Inside cells in increasing index order.
    pub fn inside_cells(&self) -> &[usize] {
        &self.inside_cells
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.extent[0];
        let j = (idx / self.extent[0]) % self.extent[1];
        let k = idx / (self.extent[0] * self.extent[1]);
        [i, j, k]
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.strides[1] * ijk[1] + self.strides[2] * ijk[2]
    }

    /// Center of a cell; unused coordinates are 0.
    #[inline]
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let ijk = self.coords(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.origin[a] + (ijk[a] as f64 + 0.5) * self.h;
        }
        p
    }

    #[inline]
    pub fn cell_distance(&self, a: usize, b: usize) -> f64 {
        let pa = self.center(a);
        let pb = self.center(b);
        dist_point(&pa[..self.dim], &pb[..self.dim])
    }

    /// Cell whose center is closest to `p`, clamped to the grid.
    pub fn nearest_cell(&self, p: &[f64]) -> usize {
        let mut ijk = [0usize; 3];
        for a in 0..self.dim {
            let t = floor((p[a] - self.origin[a]) / self.h);
            ijk[a] = if t < 0.0 {
                0
            } else {
                (t as usize).min(self.extent[a] - 1)
            };
        }
        self.index(ijk)
    }

    /// Calls `f(cell, squared distance)` for every grid cell whose center lies
    /// in the open ball `B(p, r)`.
    pub fn for_each_in_ball<F: FnMut(usize, f64)>(&self, p: &[f64], r: f64, mut f: F) {
        if !(r > 0.0) {
            return;
        }
        let r2 = r * r;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            if a >= self.dim {
                lo[a] = 0;
                hi[a] = 0;
                continue;
            }
            let l = ceil((p[a] - r - self.origin[a]) / self.h - 0.5);
            let u = floor((p[a] + r - self.origin[a]) / self.h - 0.5);
            if u < 0.0 || l > (self.extent[a] - 1) as f64 {
                return;
            }
            lo[a] = if l < 0.0 { 0 } else { l as usize };
            hi[a] = (u as usize).min(self.extent[a] - 1);
        }
        for k in lo[2]..=hi[2] {
            let dz = if self.dim == 3 {
                self.origin[2] + (k as f64 + 0.5) * self.h - p[2]
            } else {
                0.0
            };
            for j in lo[1]..=hi[1] {
                let dy = self.origin[1] + (j as f64 + 0.5) * self.h - p[1];
                let base = self.strides[1] * j + self.strides[2] * k;
                for i in lo[0]..=hi[0] {
                    let dx = self.origin[0] + (i as f64 + 0.5) * self.h - p[0];
                    let d2 = dx * dx + dy * dy + dz * dz;
                    if d2 < r2 {
                        f(base + i, d2);
                    }
                }
            }
        }
    }

    /// Grid cells (inside or not) whose centers lie in `B(p, r)`.
    pub fn cells_in_ball(&self, p: &[f64], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_ball(p, r, |c, _| out.push(c));
        out
    }

    /// Domain rescaled by `lambda` about the origin of coordinates. Distances
    /// and spacing scale with `lambda`; the cell structure is unchanged.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::param("lambda", "must be positive"));
        }
        let mut origin = self.origin;
        for o in origin.iter_mut() {
            *o *= lambda;
        }
        Self::from_parts(
            self.dim,
            self.h * lambda,
            self.extent,
            origin,
            self.inside.clone(),
            self.dist.iter().map(|d| d * lambda).collect(),
        )
    }
}

/// Discretizes `spec` on a grid of spacing `h` whose bounding box is the
/// shape's box widened by `padding` plus one cell.
pub fn build_domain(spec: &ShapeSpec, h: f64, padding: f64) -> Result<GridDomain> {
    let dim = spec.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::param("h", "must be positive and finite"));
    }
    if !(padding >= 0.0) || !padding.is_finite() {
        return Err(Error::param("padding", "must be nonnegative"));
    }
    let (lo, hi) = spec.bounds();
    let mut extent = [1usize; 3];
    let mut origin = [0.0; 3];
    for a in 0..dim {
        let l = lo[a] - padding - h;
        let u = hi[a] + padding + h;
        let cells = ceil((u - l) / h - 1e-9).max(3.0);
        extent[a] = cells as usize;
        origin[a] = l;
    }
    let total = extent[0] * extent[1] * extent[2];
    if total > 200_000_000 {
        return Err(Error::param("h", "grid too large"));
    }
    let strides = [1, extent[0], extent[0] * extent[1]];
    let center = |idx: usize| -> [f64; 3] {
        let i = idx % extent[0];
        let j = (idx / extent[0]) % extent[1];
        let k = idx / strides[2];
        let mut p = [0.0; 3];
        let ijk = [i, j, k];
        for a in 0..dim {
            p[a] = origin[a] + (ijk[a] as f64 + 0.5) * h;
        }
        p
    };
    let mut inside = vec![false; total];
    let mut dist = vec![0.0; total];
    for idx in 0..total {
        let p = center(idx);
        let sd = spec.signed_distance(&p[..dim]);
        if sd > 0.0 {
            inside[idx] = true;
            dist[idx] = sd;
        }
    }
    if !spec.has_exact_distance() {
        supersampled_distance(spec, dim, h, extent, origin, &inside, &mut dist);
    }
    GridDomain::from_parts(dim, h, extent, origin, inside, dist)
}

/// Distance to complement samples on a grid refined by an odd factor, so that
/// every coarse cell center coincides with a fine sample.
fn supersampled_distance(
    spec: &ShapeSpec,
    dim: usize,
    h: f64,
    extent: [usize; 3],
    origin: [f64; 3],
    inside: &[bool],
    dist: &mut [f64],
) {
    let k = if dim == 2 {
        SUPERSAMPLE_2D
    } else {
        SUPERSAMPLE_3D
    };
    let fh = h / k as f64;
    let mut fext = [1usize; 3];
    for a in 0..dim {
        fext[a] = extent[a] * k;
    }
    let ftotal = fext[0] * fext[1] * fext[2];
    let mut sites = vec![false; ftotal];
    for (m, s) in sites.iter_mut().enumerate() {
        let i = m % fext[0];
        let j = (m / fext[0]) % fext[1];
        let l = m / (fext[0] * fext[1]);
        let ijk = [i, j, l];
        let mut p = [0.0; 3];
        for a in 0..dim {
            p[a] = origin[a] + (ijk[a] as f64 + 0.5) * fh;
        }
        *s = spec.signed_distance(&p[..dim]) <= 0.0;
    }
    let sq = squared_edt(&sites, &fext[..dim]);
    let off = (k - 1) / 2;
    for idx in 0..inside.len() {
        if !inside[idx] {
            continue;
        }
        let i = idx % extent[0];
        let j = (idx / extent[0]) % extent[1];
        let l = idx / (extent[0] * extent[1]);
        let fi = i * k + off;
        let fj = j * k + off;
        let fl = if dim == 3 { l * k + off } else { 0 };
        let m = fi + fext[0] * (fj + fext[1] * fl);
        dist[idx] = sqrt(sq[m]) * fh;
    }
}

/// Euclidean distance from every cell center to the nearest center in `set`.
pub fn distance_to_set(domain: &GridDomain, set: &[usize]) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut sites = vec![false; domain.len()];
    for &c in set {
        sites[c] = true;
    }
    let ext = domain.extent();
    let sq = squared_edt(&sites, &ext[..domain.dim()]);
    let h = domain.h();
    Ok(sq.into_iter().map(|s| sqrt(s) * h).collect())
}

/// `μ(B(x, r))` for the ball centered at cell `x`.
pub fn measure_of_ball(domain: &GridDomain, x: usize, r: f64, mode: MeasureMode) -> f64 {
    match mode {
        MeasureMode::Ambient => unit_ball_volume(domain.dim()) * powf(r, domain.dim() as f64),
        MeasureMode::Counted => {
            let p = domain.center(x);
            let mut count = 0usize;
            domain.for_each_in_ball(&p[..domain.dim()], r, |_, _| count += 1);
            count as f64 * domain.cell_measure()
        }
    }
}

/// Convenience: the unit-ball volume `ω_n`.
pub fn omega(n: usize) -> f64 {
    unit_ball_volume(n)
}
