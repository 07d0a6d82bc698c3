//! Constraint sets and the geometry the market induces on them: the budget
//! cone of portfolios whose wealth stays nonnegative, null directions the
//! model cannot distinguish, recession structure, and the
//! unbounded-increasing-profit check that decides whether optimization is
//! well posed at all.

use crate::levy_model::{JumpMeasure, LevyTriplet};
use crate::linprog;
use crate::Result;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::sync::Arc;

/// Admissible portfolio sets. All variants must contain the zero portfolio;
/// `validate_model` enforces that. Convex variants support exact Euclidean
/// projection; the star-shaped oracle and unions are membership-only.
#[derive(Clone)]
pub enum ConstraintSet {
    /// No constraint: all of R^d.
    Whole { dim: usize },
    /// { y : a y <= ub } componentwise.
    Polyhedron { a: DMatrix<f64>, ub: DVector<f64> },
    /// Componentwise bounds; entries may be infinite.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// Euclidean ball.
    Ball { center: DVector<f64>, radius: f64 },
    /// Convex hull of finitely many points.
    Hull { points: Vec<DVector<f64>> },
    /// Second-order cone { y : |y - (axis.y) axis| <= slope * axis.y } with
    /// `axis` a unit vector.
    Cone { axis: DVector<f64>, slope: f64 },
    /// Star-shaped (around 0) set given by a membership oracle and a radius
    /// bound (infinite when unknown). Membership-only.
    StarOracle {
        dim: usize,
        membership: Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>,
        radial_bound: f64,
    },
    /// Finite union of sets (generally non-convex).
    Union { pieces: Vec<ConstraintSet> },
}

impl std::fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintSet::Whole { dim } => write!(f, "Whole(R^{dim})"),
            ConstraintSet::Polyhedron { a, ub } => {
                write!(f, "Polyhedron({} rows, dim {})", a.nrows(), a.ncols())?;
                write!(f, " ub={:?}", ub.as_slice())
            }
            ConstraintSet::Box { lo, hi } => write!(f, "Box({:?}..{:?})", lo.as_slice(), hi.as_slice()),
            ConstraintSet::Ball { center, radius } => {
                write!(f, "Ball(center {:?}, r {radius})", center.as_slice())
            }
            ConstraintSet::Hull { points } => write!(f, "Hull({} points)", points.len()),
            ConstraintSet::Cone { axis, slope } => {
                write!(f, "Cone(axis {:?}, slope {slope})", axis.as_slice())
            }
            ConstraintSet::StarOracle { dim, radial_bound, .. } => {
                write!(f, "StarOracle(dim {dim}, radius {radial_bound})")
            }
            ConstraintSet::Union { pieces } => f.debug_list().entries(pieces.iter()).finish(),
        }
    }
}

impl ConstraintSet {
    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Whole { dim } => *dim,
            ConstraintSet::Polyhedron { a, .. } => a.ncols(),
            ConstraintSet::Box { lo, .. } => lo.len(),
            ConstraintSet::Ball { center, .. } => center.len(),
            ConstraintSet::Hull { points } => points.first().map_or(0, |p| p.len()),
            ConstraintSet::Cone { axis, .. } => axis.len(),
            ConstraintSet::StarOracle { dim, .. } => *dim,
            ConstraintSet::Union { pieces } => pieces.first().map_or(0, |p| p.dim()),
        }
    }

    /// One-line description for reports.
    pub fn describe(&self) -> String {
        format!("{self:?}")
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(match self {
            ConstraintSet::Whole { .. } => true,
            ConstraintSet::Polyhedron { a, ub } => {
                let ay = a * y;
                (0..ub.len()).all(|i| ay[i] <= ub[i] + tol)
            }
            ConstraintSet::Box { lo, hi } => {
                (0..y.len()).all(|i| y[i] >= lo[i] - tol && y[i] <= hi[i] + tol)
            }
            ConstraintSet::Ball { center, radius } => (y - center).norm() <= radius + tol,
            ConstraintSet::Hull { points } => hull_contains(points, y, tol)?,
            ConstraintSet::Cone { axis, slope } => {
                let z = axis.dot(y);
                let w = y - axis * z;
                z >= -tol && w.norm() <= slope * z.max(0.0) + tol
            }
            ConstraintSet::StarOracle { membership, .. } => membership(y),
            ConstraintSet::Union { pieces } => {
                for p in pieces {
                    if p.contains(y, tol)? {
                        return Ok(true);
                    }
                }
                false
            }
        })
    }

    /// Exact Euclidean projection where available. None for the
    /// membership-only variants (star oracle, union).
    pub fn project(&self, y: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            ConstraintSet::Whole { .. } => Some(y.clone()),
            ConstraintSet::Polyhedron { a, ub } => Some(project_polyhedron(a, ub, y)),
            ConstraintSet::Box { lo, hi } => {
                let mut out = y.clone();
                for i in 0..y.len() {
                    out[i] = out[i].clamp(lo[i], hi[i]);
                }
                Some(out)
            }
            ConstraintSet::Ball { center, radius } => {
                let d = y - center;
                let n = d.norm();
                if n <= *radius {
                    Some(y.clone())
                } else {
                    Some(center + d * (*radius / n))
                }
            }
            ConstraintSet::Hull { points } => Some(project_hull(points, y)),
            ConstraintSet::Cone { axis, slope } => Some(project_cone(axis, *slope, y)),
            ConstraintSet::StarOracle { .. } | ConstraintSet::Union { .. } => None,
        }
    }

    /// Finite vertex list for the polytopal variants (used to seed candidate
    /// pools). None when the set has no usable vertex description.
    pub fn vertices(&self) -> Option<Vec<DVector<f64>>> {
        match self {
            ConstraintSet::Box { lo, hi } => {
                let d = lo.len();
                if (0..d).any(|i| !lo[i].is_finite() || !hi[i].is_finite()) || d > 16 {
                    return None;
                }
                let mut out = Vec::with_capacity(1 << d);
                for mask in 0..(1usize << d) {
                    let mut v = DVector::zeros(d);
                    for i in 0..d {
                        v[i] = if mask & (1 << i) != 0 { hi[i] } else { lo[i] };
                    }
                    out.push(v);
                }
                Some(out)
            }
            ConstraintSet::Hull { points } => Some(points.clone()),
            ConstraintSet::Polyhedron { a, ub } => polyhedron_vertices(a, ub),
            _ => None,
        }
    }

    /// Recession structure of the set.
    pub fn recession(&self) -> Recession {
        match self {
            ConstraintSet::Whole { dim } => {
                Recession::Halfspaces(DMatrix::zeros(0, *dim))
            }
            ConstraintSet::Polyhedron { a, .. } => Recession::Halfspaces(a.clone()),
            ConstraintSet::Box { lo, hi } => {
                let d = lo.len();
                let mut rows = Vec::new();
                for i in 0..d {
                    if hi[i].is_finite() {
                        let mut r = vec![0.0; d];
                        r[i] = 1.0;
                        rows.push(r);
                    }
                    if lo[i].is_finite() {
                        let mut r = vec![0.0; d];
                        r[i] = -1.0;
                        rows.push(r);
                    }
                }
                Recession::Halfspaces(DMatrix::from_row_slice(rows.len(), d, &rows.concat()))
            }
            ConstraintSet::Ball { .. } | ConstraintSet::Hull { .. } => Recession::Zero,
            ConstraintSet::Cone { .. } => Recession::SelfCone,
            ConstraintSet::StarOracle { radial_bound, .. } => {
                if radial_bound.is_finite() {
                    Recession::Zero
                } else {
                    Recession::Unknown
                }
            }
            ConstraintSet::Union { .. } => Recession::Unknown,
        }
    }

    /// Is the set bounded (compactness up to closedness)?
    pub fn is_bounded(&self) -> bool {
        match self {
            ConstraintSet::Whole { .. } => false,
            ConstraintSet::Ball { .. } | ConstraintSet::Hull { .. } => true,
            ConstraintSet::Box { lo, hi } => {
                lo.iter().all(|v| v.is_finite()) && hi.iter().all(|v| v.is_finite())
            }
            ConstraintSet::Cone { .. } => false,
            ConstraintSet::Polyhedron { .. } => matches!(self.recession_is_zero(), Some(true)),
            ConstraintSet::StarOracle { radial_bound, .. } => radial_bound.is_finite(),
            ConstraintSet::Union { pieces } => pieces.iter().all(|p| p.is_bounded()),
        }
    }

    /// Some(true) when the recession cone is provably {0}.
    fn recession_is_zero(&self) -> Option<bool> {
        match self.recession() {
            Recession::Zero => Some(true),
            Recession::Halfspaces(a) => {
                // {a y <= 0} = {0} iff max +-e_i . y over it (with box caps)
                // is zero in every coordinate.
                let d = a.ncols();
                let mut rows = a.clone();
                let box_rows = append_unit_box(&mut rows);
                let ub = DVector::from_fn(rows.nrows(), |i, _| {
                    if i < rows.nrows() - box_rows { 0.0 } else { 1.0 }
                });
                for i in 0..d {
                    for sign in [1.0, -1.0] {
                        let mut c = DVector::zeros(d);
                        c[i] = sign;
                        match linprog::maximize(&c, &rows, &ub) {
                            Ok(sol) if sol.value > 1e-9 => return Some(false),
                            Ok(_) => {}
                            Err(_) => return None,
                        }
                    }
                }
                Some(true)
            }
            Recession::SelfCone => Some(false),
            Recession::Unknown => None,
        }
    }
}

/// Recession cone descriptions the pipeline can work with.
#[derive(Debug, Clone)]
pub enum Recession {
    /// Bounded set: recession is {0}.
    Zero,
    /// { y : rows * y <= 0 } (zero rows means all of R^d).
    Halfspaces(DMatrix<f64>),
    /// The set itself is a (non-polyhedral) cone.
    SelfCone,
    Unknown,
}

/// Budget halfspace `normal . y >= rhs` with rhs in {-1, 0}.
#[derive(Debug, Clone, Serialize)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub rhs: f64,
}

/// Halfspace description of the natural budget set: portfolios keeping
/// wealth nonnegative against every possible jump. Finite support features
/// contribute `y.x >= -1`; unbounded directions contribute `y.dir >= 0`.
pub fn natural_constraints(jumps: &JumpMeasure, tol: f64) -> Vec<Halfspace> {
    let mut out: Vec<Halfspace> = Vec::new();
    let mut push = |normal: DVector<f64>, rhs: f64| {
        let dup = out.iter().any(|h| h.rhs == rhs && (&h.normal - &normal).norm() <= tol);
        if !dup {
            out.push(Halfspace { normal, rhs });
        }
    };
    for sp in jumps.support_points() {
        push(sp.x().clone(), -1.0);
    }
    for ray in jumps.support_rays() {
        push(ray, 0.0);
    }
    out
}

/// Membership in the closed budget set: wealth stays nonnegative, i.e.
/// y.x >= -1 on the whole jump support.
pub fn in_budget_set(jumps: &JumpMeasure, y: &DVector<f64>, tol: f64) -> bool {
    jumps.support_contact(y, tol).inf >= -1.0 - tol
}

/// Membership in the strict budget set: wealth stays strictly positive,
/// i.e. F[y.x <= -1] = 0. Touching -1 is allowed only where the measure
/// puts no mass: a density endpoint qualifies, an atom does not.
pub fn in_strict_budget_set(jumps: &JumpMeasure, y: &DVector<f64>, tol: f64) -> bool {
    let contact = jumps.support_contact(y, tol);
    if contact.inf > -1.0 + tol {
        return true;
    }
    if contact.inf < -1.0 - tol {
        return false;
    }
    !contact.mass_at_inf
}

/// Orthonormal basis of the null directions: portfolios with zero drift
/// exposure, zero diffusion exposure, and zero jump exposure almost surely.
/// Wealth is invariant under adding any such direction.
pub fn null_space(triplet: &LevyTriplet, tol: f64) -> Vec<DVector<f64>> {
    let d = triplet.dim();
    let mut rows: Vec<DVector<f64>> = vec![triplet.b.clone()];
    for i in 0..d {
        rows.push(triplet.c.row(i).transpose());
    }
    for sp in triplet.jumps.support_points() {
        rows.push(sp.x().clone());
    }
    for ray in triplet.jumps.support_rays() {
        rows.push(ray);
    }
    kernel_basis(&rows, d, tol)
}

/// Orthonormal kernel of the stacked rows via SVD. The matrix is padded
/// with zero rows up to d so the thin decomposition carries the full
/// right-singular basis (kernel vectors included).
pub(crate) fn kernel_basis(rows: &[DVector<f64>], d: usize, tol: f64) -> Vec<DVector<f64>> {
    if rows.is_empty() {
        return (0..d)
            .map(|i| {
                let mut v = DVector::zeros(d);
                v[i] = 1.0;
                v
            })
            .collect();
    }
    let n_rows = rows.len().max(d);
    let m = DMatrix::from_fn(n_rows, d, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("svd with v_t requested");
    let mut basis = Vec::new();
    for i in 0..d {
        let sv = if i < svd.singular_values.len() { svd.singular_values[i] } else { 0.0 };
        if sv <= tol {
            basis.push(vt.row(i).transpose());
        }
    }
    basis
}

/// Component of y orthogonal to the span of the (orthonormal) null basis.
pub fn project_onto_null_complement(y: &DVector<f64>, n_basis: &[DVector<f64>]) -> DVector<f64> {
    let mut out = y.clone();
    for n in n_basis {
        let coef = out.dot(n);
        out -= n * coef;
    }
    out
}

/// Verdict of the unbounded-increasing-profit check.
#[derive(Debug, Clone, Serialize)]
pub enum NuipVerdict {
    /// No admissible direction yields monotone unbounded profit.
    Holds,
    /// `witness` is a direction along which scaling up never hurts and
    /// strictly gains: optimization is unbounded.
    Violated { witness: Vec<f64> },
    /// The recession structure was not decidable with the available
    /// descriptions (non-polyhedral unbounded constraint sets).
    Undecidable { reason: String },
}

/// Three-valued closedness report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Closedness {
    True,
    False,
    Unknown,
}

/// Full geometry report for a model/constraint pair.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintGeometry {
    /// Halfspaces of the natural budget set.
    pub c0_halfspaces: Vec<Halfspace>,
    /// Orthonormal basis of the null directions.
    pub n_basis: Vec<DVector<f64>>,
    /// Generators of the recession cone of (constraints & budget set), when
    /// the description is polyhedral; empty otherwise.
    pub recession_rays: Vec<DVector<f64>>,
    pub nuip: NuipVerdict,
    /// Whether the image of the feasible set under the null-complement
    /// projection is provably closed (existence of maximizers can fail
    /// when this is unknown).
    pub projection_closed: Closedness,
}

/// Compute the full geometry report.
pub fn analyze(
    triplet: &LevyTriplet,
    constraints: &ConstraintSet,
    tol: f64,
) -> Result<ConstraintGeometry> {
    let c0_halfspaces = natural_constraints(&triplet.jumps, tol);
    let n_basis = null_space(triplet, tol);
    let nuip = nuip_check(triplet, constraints, tol)?;
    let recession_rays = recession_generators(triplet, constraints);
    let projection_closed = projection_closedness(constraints, &n_basis, tol);
    Ok(ConstraintGeometry { c0_halfspaces, n_basis, recession_rays, nuip, projection_closed })
}

/// Rows of the cone of candidate profit directions shared by every
/// constraint set: diffusion-null (c y = 0 as two-sided rows), nonnegative
/// jump products, nonnegative cutoff-free drift product.
fn profit_cone_rows(triplet: &LevyTriplet) -> Result<DMatrix<f64>> {
    let d = triplet.dim();
    let b0 = triplet.drift_without_cutoff()?;
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0;
    let push = |r: &DVector<f64>, rows: &mut Vec<f64>, n: &mut usize| {
        rows.extend(r.iter());
        *n += 1;
    };
    for i in 0..d {
        let r = triplet.c.row(i).transpose();
        push(&r, &mut rows, &mut n);
        push(&(-&r), &mut rows, &mut n);
    }
    for sp in triplet.jumps.support_points() {
        push(&(-sp.x()), &mut rows, &mut n); // y.x >= 0  <=>  -x . y <= 0
    }
    for ray in triplet.jumps.support_rays() {
        push(&(-&ray), &mut rows, &mut n);
    }
    push(&(-&b0), &mut rows, &mut n);
    Ok(DMatrix::from_row_slice(n, d, &rows))
}

/// Append |y_i| <= 1 rows to `rows`; returns how many were added.
fn append_unit_box(rows: &mut DMatrix<f64>) -> usize {
    let d = rows.ncols();
    let mut data: Vec<f64> = Vec::with_capacity((rows.nrows() + 2 * d) * d);
    for i in 0..rows.nrows() {
        for j in 0..d {
            data.push(rows[(i, j)]);
        }
    }
    for i in 0..d {
        let mut r = vec![0.0; d];
        r[i] = 1.0;
        data.extend(&r);
        r[i] = -1.0;
        data.extend(&r);
    }
    *rows = DMatrix::from_row_slice(rows.nrows() + 2 * d, d, &data);
    2 * d
}

/// Does { cone_rows y <= 0 } contain a direction outside span(n_basis)?
/// Returns such a direction when it exists.
fn cone_direction_outside_null(
    cone_rows: &DMatrix<f64>,
    n_basis: &[DVector<f64>],
    tol: f64,
) -> Result<Option<DVector<f64>>> {
    let d = cone_rows.ncols();
    let mut rows = cone_rows.clone();
    let box_rows = append_unit_box(&mut rows);
    let ub = DVector::from_fn(rows.nrows(), |i, _| {
        if i < rows.nrows() - box_rows { 0.0 } else { 1.0 }
    });
    // Directions spanning the complement of the null space.
    let mut complement: Vec<DVector<f64>> = Vec::new();
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        let proj = project_onto_null_complement(&e, n_basis);
        if proj.norm() > tol {
            complement.push(proj.normalize());
        }
    }
    for dir in &complement {
        for sign in [1.0f64, -1.0] {
            let c = dir * sign;
            let sol = linprog::maximize(&c, &rows, &ub)?;
            if sol.value > 100.0 * tol {
                return Ok(Some(sol.point));
            }
        }
    }
    Ok(None)
}

/// Decide the unbounded-increasing-profit condition for the given
/// constraints. The check is exact for polyhedral recession structure and
/// conservative (undecidable) otherwise, except that a model whose profit
/// cone collapses into the null directions passes for every constraint set.
pub fn nuip_check(
    triplet: &LevyTriplet,
    constraints: &ConstraintSet,
    tol: f64,
) -> Result<NuipVerdict> {
    let n_basis = null_space(triplet, tol);
    let base_rows = profit_cone_rows(triplet)?;

    // Fast path: no profit direction exists in the whole space, so none can
    // exist inside any constraint set.
    if cone_direction_outside_null(&base_rows, &n_basis, tol)?.is_none() {
        return Ok(NuipVerdict::Holds);
    }

    match constraints {
        ConstraintSet::Union { pieces } => {
            // A profit direction in the union's recession lies in some
            // piece's recession, so check each piece.
            let mut reasons = Vec::new();
            for piece in pieces {
                match nuip_check(triplet, piece, tol)? {
                    NuipVerdict::Violated { witness } => {
                        return Ok(NuipVerdict::Violated { witness })
                    }
                    NuipVerdict::Undecidable { reason } => reasons.push(reason),
                    NuipVerdict::Holds => {}
                }
            }
            if reasons.is_empty() {
                Ok(NuipVerdict::Holds)
            } else {
                Ok(NuipVerdict::Undecidable { reason: reasons.join("; ") })
            }
        }
        _ => match constraints.recession() {
            Recession::Zero => Ok(NuipVerdict::Holds),
            Recession::Halfspaces(a) => {
                let mut rows_vec: Vec<f64> = Vec::new();
                for i in 0..base_rows.nrows() {
                    for j in 0..base_rows.ncols() {
                        rows_vec.push(base_rows[(i, j)]);
                    }
                }
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        rows_vec.push(a[(i, j)]);
                    }
                }
                let all = DMatrix::from_row_slice(
                    base_rows.nrows() + a.nrows(),
                    base_rows.ncols(),
                    &rows_vec,
                );
                match cone_direction_outside_null(&all, &n_basis, tol)? {
                    Some(y) => {
                        let scale = y.amax();
                        let witness = (y / scale).iter().cloned().collect();
                        Ok(NuipVerdict::Violated { witness })
                    }
                    None => Ok(NuipVerdict::Holds),
                }
            }
            Recession::SelfCone | Recession::Unknown => Ok(NuipVerdict::Undecidable {
                reason: format!(
                    "profit directions exist in the unconstrained model and the recession cone of {} is not polyhedral",
                    constraints.describe()
                ),
            }),
        },
    }
}

/// Generators of the recession cone of (constraints & budget set) when both
/// are polyhedral; empty otherwise.
pub fn recession_generators(triplet: &LevyTriplet, constraints: &ConstraintSet) -> Vec<DVector<f64>> {
    let d = triplet.dim();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    match constraints.recession() {
        Recession::Zero => return Vec::new(),
        Recession::Halfspaces(a) => {
            for i in 0..a.nrows() {
                rows.push(a.row(i).transpose());
            }
        }
        Recession::SelfCone | Recession::Unknown => return Vec::new(),
    }
    for sp in triplet.jumps.support_points() {
        rows.push(-sp.x());
    }
    for ray in triplet.jumps.support_rays() {
        rows.push(-ray);
    }
    extreme_rays(&rows, d)
}

/// Extreme rays of { y : row . y <= 0 for all rows } by (d-1)-subset
/// enumeration; adequate for the small dimensions this crate targets.
fn extreme_rays(rows: &[DVector<f64>], d: usize) -> Vec<DVector<f64>> {
    let m = rows.len();
    if d == 0 {
        return Vec::new();
    }
    let feasible = |v: &DVector<f64>| rows.iter().all(|r| r.dot(v) <= 1e-9);
    let mut out: Vec<DVector<f64>> = Vec::new();
    let push_unique = |v: DVector<f64>, out: &mut Vec<DVector<f64>>| {
        if v.norm() < 1e-12 {
            return;
        }
        let v = v.normalize();
        if !out.iter().any(|u| (u - &v).norm() < 1e-8) {
            out.push(v);
        }
    };
    if d == 1 {
        for sign in [1.0, -1.0] {
            let v = DVector::from_row_slice(&[sign]);
            if feasible(&v) {
                push_unique(v, &mut out);
            }
        }
        return out;
    }
    // Choose d-1 rows to be active; their kernel gives candidate rays.
    let k = d - 1;
    let mut idx: Vec<usize> = (0..k).collect();
    if m < k {
        // Too few constraints to pin down rays; the cone has lineality.
        return Vec::new();
    }
    loop {
        let sub: Vec<DVector<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        for v in kernel_basis(&sub, d, 1e-10) {
            for sign in [1.0, -1.0] {
                let cand = &v * sign;
                if feasible(&cand) {
                    push_unique(cand.clone(), &mut out);
                }
            }
        }
        // Next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + m - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Is the projection of the feasible set onto the null-space complement
/// provably closed? Sufficient conditions only; `Unknown` is an honest
/// answer that downgrades existence claims downstream.
pub fn projection_closedness(
    constraints: &ConstraintSet,
    n_basis: &[DVector<f64>],
    tol: f64,
) -> Closedness {
    if n_basis.is_empty() {
        return Closedness::True;
    }
    match constraints {
        ConstraintSet::Whole { .. }
        | ConstraintSet::Polyhedron { .. }
        | ConstraintSet::Box { .. } => Closedness::True,
        ConstraintSet::Ball { .. } | ConstraintSet::Hull { .. } => Closedness::True,
        ConstraintSet::Cone { .. } => {
            // Convex and closed: projection is closed when the null space
            // sits inside the set (then projecting along it loses nothing).
            let inside = n_basis.iter().all(|n| {
                constraints.contains(n, tol).unwrap_or(false)
                    && constraints.contains(&(-n), tol).unwrap_or(false)
            });
            if inside {
                Closedness::True
            } else {
                Closedness::Unknown
            }
        }
        ConstraintSet::StarOracle { .. } => Closedness::Unknown,
        ConstraintSet::Union { pieces } => {
            if pieces.iter().all(|p| projection_closedness(p, n_basis, tol) == Closedness::True) {
                Closedness::True
            } else {
                Closedness::Unknown
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Projection helpers

/// Project onto a single halfspace { y : a.y <= u }.
fn project_halfspace(a: &DVector<f64>, u: f64, y: &DVector<f64>) -> DVector<f64> {
    let viol = a.dot(y) - u;
    if viol <= 0.0 {
        y.clone()
    } else {
        y - a * (viol / a.norm_squared())
    }
}

/// Dykstra's alternating projections onto the intersection of halfspaces.
/// Converges to the exact Euclidean projection for polyhedra.
fn project_polyhedron(a: &DMatrix<f64>, ub: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let m = a.nrows();
    if m == 0 {
        return y.clone();
    }
    let rows: Vec<DVector<f64>> = (0..m).map(|i| a.row(i).transpose()).collect();
    let mut x = y.clone();
    let mut corrections: Vec<DVector<f64>> = vec![DVector::zeros(y.len()); m];
    for _ in 0..5000 {
        let mut moved: f64 = 0.0;
        for i in 0..m {
            let z = &x + &corrections[i];
            let projected = project_halfspace(&rows[i], ub[i], &z);
            corrections[i] = &z - &projected;
            moved = moved.max((&projected - &x).norm());
            x = projected;
        }
        if moved < 1e-14 {
            break;
        }
    }
    x
}

/// Projection onto a second-order cone with unit axis.
fn project_cone(axis: &DVector<f64>, slope: f64, y: &DVector<f64>) -> DVector<f64> {
    let z = axis.dot(y);
    let w = y - axis * z;
    let nw = w.norm();
    if nw <= slope * z {
        return y.clone();
    }
    if slope * nw <= -z {
        return DVector::zeros(y.len());
    }
    let z_new = (slope * nw + z) / (slope * slope + 1.0);
    if nw == 0.0 {
        return axis * z_new;
    }
    &w * (slope * z_new / nw) + axis * z_new
}

/// Membership in conv(points) via feasibility of the weight program.
fn hull_contains(points: &[DVector<f64>], y: &DVector<f64>, tol: f64) -> Result<bool> {
    let p = project_hull(points, y);
    Ok((&p - y).norm() <= tol.max(1e-9) * 10.0)
}

/// Projection onto conv(points): projected gradient on the simplex of
/// weights. The instances here are tiny (few points, low dimension).
fn project_hull(points: &[DVector<f64>], y: &DVector<f64>) -> DVector<f64> {
    let k = points.len();
    if k == 0 {
        return y.clone();
    }
    if k == 1 {
        return points[0].clone();
    }
    let gram = DMatrix::from_fn(k, k, |i, j| points[i].dot(&points[j]));
    let lin = DVector::from_fn(k, |i, _| points[i].dot(y));
    let lipschitz = gram.norm().max(1e-12);
    let mut w = DVector::from_element(k, 1.0 / k as f64);
    for _ in 0..20_000 {
        // gradient of 0.5 |sum w_i p_i - y|^2 in w
        let grad = &gram * &w - &lin;
        let step = &w - &grad / lipschitz;
        let next = project_simplex(&step);
        let delta = (&next - &w).norm();
        w = next;
        if delta < 1e-14 {
            break;
        }
    }
    let mut out = DVector::zeros(y.len());
    for i in 0..k {
        out += &points[i] * w[i];
    }
    out
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().cloned().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut rho = 0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            rho = i + 1;
        }
    }
    let theta = (u[..rho].iter().sum::<f64>() - 1.0) / rho as f64;
    v.map(|x| (x - theta).max(0.0))
}

/// Vertex enumeration for { a y <= ub } by active-set subsets; None when the
/// polyhedron is unbounded or too large to enumerate.
fn polyhedron_vertices(a: &DMatrix<f64>, ub: &DVector<f64>) -> Option<Vec<DVector<f64>>> {
    let d = a.ncols();
    let m = a.nrows();
    if m < d || d > 8 || binomial(m, d) > 20_000 {
        return None;
    }
    let mut verts: Vec<DVector<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let sub = DMatrix::from_fn(d, d, |i, j| a[(idx[i], j)]);
        let rhs = DVector::from_fn(d, |i, _| ub[idx[i]]);
        if let Some(sol) = sub.lu().solve(&rhs) {
            let ay = a * &sol;
            let feas = (0..m).all(|i| ay[i] <= ub[i] + 1e-9);
            if feas && !verts.iter().any(|v| (v - &sol).norm() < 1e-9) {
                verts.push(sol);
            }
        }
        let mut i = d;
        loop {
            if i == 0 {
                if verts.is_empty() {
                    return None;
                }
                return Some(verts);
            }
            i -= 1;
            if idx[i] != i + m - d {
                idx[i] += 1;
                for j in i + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r: usize = 1;
    for i in 0..k.min(n - k) {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}
