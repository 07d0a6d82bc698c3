//! Static portfolio maximization. The dynamic problem collapses to one
//! finite-dimensional program: maximize the concave criterion over the
//! constraint set intersected with the budget set. This module solves that
//! program and reports what kind of solution it found -- an attained
//! maximizer (interior or on one of the two boundaries), a certified
//! unbounded-profit direction, an infinite-value verdict for heavy upside
//! tails, or a supremum that is approached but never attained.
//!
//! The solver is projected gradient ascent with an Armijo line search,
//! followed by a Newton polish on the active-set tangent space. Projections
//! onto (constraints & budget halfspaces) go through Dykstra's alternating
//! scheme, so any projectable constraint kind composes with the budget set.
//! For p < 0 the criterion has -inf walls at ruin contacts; iterates are
//! kept strictly inside by a shrink-and-release continuation on the budget
//! halfspaces.

use crate::constraint_geometry::{
    analyze, in_budget_set, kernel_basis, project_onto_null_complement, ConstraintGeometry,
    ConstraintSet, Halfspace, NuipVerdict,
};
use crate::g_objective::{eval_directional, eval_g, eval_grad_g, eval_hessian};
use crate::levy_model::{validate_model, LevyTriplet, ProblemSpec, TailModel, Tolerances};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

const MAX_DYKSTRA_SWEEPS: usize = 2000;
const MAX_ASCENT_ITERS: usize = 4000;
const MAX_STEP: f64 = 1e14;
/// Null-component norm (relative to the orthogonal part) beyond which
/// iterates count as escaping to infinity.
const NULL_ESCAPE_NORM: f64 = 1e2;
/// Overall iterate norm treated as divergence when no null space explains it.
const ESCAPE_NORM: f64 = 1e8;

/// Where the maximizer sits relative to the two constraint systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaximizerLocation {
    /// Unconstrained stationary point of the criterion.
    Interior,
    /// On the boundary of the investor-imposed constraint set.
    ConstraintBoundary,
    /// On the boundary of the budget set (some jump can wipe out wealth).
    BudgetBoundary,
    /// No maximizer: the reported portfolio represents the limit direction
    /// modulo null directions, and `g_star` is the supremum.
    NotAttained,
}

/// Solver output. `pi_hat` is the minimal-norm representative when the
/// model carries null directions (adding those changes nothing observable).
#[derive(Debug, Clone)]
pub struct PortfolioSolution {
    pub pi_hat: DVector<f64>,
    /// Supremum of the criterion (attained unless `location` says otherwise,
    /// `+inf` when `finite_value` is false).
    pub g_star: f64,
    /// Composite rate a = p/(1-p) * g_star feeding the time curves.
    pub a: f64,
    /// False when a heavy upside tail makes the attainable utility infinite.
    pub finite_value: bool,
    pub maximizer_attained: bool,
    pub location: MaximizerLocation,
    /// Directional criterion at zero toward pi_hat; zero at interior optima,
    /// strictly negative on boundaries. NaN when the value is infinite.
    pub directional_at_zero: f64,
    pub geometry: ConstraintGeometry,
    pub iterations: usize,
    /// First-order residual at the reported point (projected-gradient gap).
    pub achieved_tol: f64,
    pub warnings: Vec<String>,
}

/// Maximize the criterion over the problem's constraint set. Entry point
/// for every constraint kind; non-convex kinds are decomposed here.
pub fn maximize(triplet: &LevyTriplet, problem: &ProblemSpec) -> Result<PortfolioSolution> {
    let report = validate_model(triplet, problem);
    if !report.is_valid() {
        return Err(Error::InvalidModel(report.violations.join("; ")));
    }
    maximize_over(triplet, problem, &problem.constraints)
}

fn maximize_over(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    set: &ConstraintSet,
) -> Result<PortfolioSolution> {
    match set {
        ConstraintSet::Union { pieces } => maximize_union(triplet, problem, pieces),
        ConstraintSet::StarOracle { .. } => maximize_star(triplet, problem, set),
        _ => maximize_convex(triplet, problem, set),
    }
}

// ---------------------------------------------------------------------------
// Feasible region: constraint set & budget halfspaces, with Dykstra projection.

struct Feasible<'a> {
    set: &'a ConstraintSet,
    halfspaces: Vec<Halfspace>,
}

impl Feasible<'_> {
    /// Budget halfspaces with the ruin rows pulled in by `margin` (rows with
    /// rhs 0 describe cone directions and cannot be shrunk).
    fn new<'a>(set: &'a ConstraintSet, budget: &[Halfspace], margin: f64) -> Feasible<'a> {
        let halfspaces = budget
            .iter()
            .map(|h| Halfspace {
                normal: h.normal.clone(),
                rhs: if h.rhs < -0.5 { h.rhs + margin } else { h.rhs },
            })
            .collect();
        Feasible { set, halfspaces }
    }

    fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.set.contains(y, tol).unwrap_or(false)
            && self.halfspaces.iter().all(|h| h.normal.dot(y) >= h.rhs - tol)
    }

    /// Euclidean projection onto the intersection via Dykstra's scheme.
    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        let k = 1 + self.halfspaces.len();
        if k == 1 {
            return self.set.project(y).expect("projectable constraint set");
        }
        let mut x = y.clone();
        let mut corrections = vec![DVector::zeros(y.len()); k];
        for _ in 0..MAX_DYKSTRA_SWEEPS {
            let mut moved = 0.0;
            for i in 0..k {
                let w = &x + &corrections[i];
                let px = if i == 0 {
                    self.set.project(&w).expect("projectable constraint set")
                } else {
                    project_halfspace_ge(&w, &self.halfspaces[i - 1])
                };
                corrections[i] = &w - &px;
                moved += (&px - &x).norm();
                x = px;
            }
            if moved <= 1e-14 * (1.0 + x.norm()) {
                break;
            }
        }
        x
    }
}

/// Projection onto { y : normal.y >= rhs }.
fn project_halfspace_ge(y: &DVector<f64>, h: &Halfspace) -> DVector<f64> {
    let s = h.normal.dot(y);
    if s >= h.rhs {
        y.clone()
    } else {
        y + &h.normal * ((h.rhs - s) / h.normal.norm_squared())
    }
}

// ---------------------------------------------------------------------------
// Projected gradient ascent, generic in the objective.

enum AscentOutcome {
    Converged { y: DVector<f64>, value: f64, iterations: usize, residual: f64 },
    /// Objective evaluated to +inf at this point.
    InfiniteValue { witness: DVector<f64> },
    /// Iterates escape along null directions while the value plateaus.
    NullEscape { y: DVector<f64>, iterations: usize },
    /// Iteration budget spent; best point so far.
    Budget { y: DVector<f64>, value: f64, iterations: usize, residual: f64 },
}

struct AscentOpts<'a> {
    max_iters: usize,
    /// Stop when the projected-gradient gap falls under this (scaled).
    stop_tol: f64,
    /// Null basis for escape detection; empty disables it.
    n_basis: &'a [DVector<f64>],
}

fn projected_ascent<F, G>(
    value_fn: &F,
    grad_fn: &G,
    feasible: &Feasible,
    y0: &DVector<f64>,
    opts: &AscentOpts,
) -> Result<AscentOutcome>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut y = feasible.project(y0);
    let mut value = value_fn(&y)?;
    // A -inf start (projection landed on a ruin wall) backs off toward the
    // origin, which is always feasible and has value zero.
    let mut shrink = 0;
    while value == f64::NEG_INFINITY && shrink < 200 {
        y *= 0.5;
        y = feasible.project(&y);
        value = value_fn(&y)?;
        shrink += 1;
    }
    if value == f64::INFINITY {
        return Ok(AscentOutcome::InfiniteValue { witness: y });
    }

    // Convergence at an astronomical null component is an escape to
    // infinity in disguise; the caller's recovery check sorts out whether
    // a finite representative exists.
    let null_escaped = |y: &DVector<f64>| {
        if opts.n_basis.is_empty() {
            return false;
        }
        let perp = project_onto_null_complement(y, opts.n_basis);
        (y - &perp).norm() > NULL_ESCAPE_NORM * (1.0 + perp.norm())
    };

    let mut step = 1.0f64;
    let mut plateau = 0usize;
    let mut residual = f64::INFINITY;
    for iter in 0..opts.max_iters {
        let grad = finite_direction(&grad_fn(&y)?);
        let probe = feasible.project(&(&y + &grad));
        residual = (&probe - &y).norm();
        if residual <= opts.stop_tol * (1.0 + y.norm()) {
            if null_escaped(&y) {
                return Ok(AscentOutcome::NullEscape { y, iterations: iter });
            }
            return Ok(AscentOutcome::Converged { y, value, iterations: iter, residual });
        }

        step = (step * 4.0).min(MAX_STEP);
        let mut accepted = false;
        for _ in 0..90 {
            let cand = feasible.project(&(&y + &grad * step));
            let dy = &cand - &y;
            if dy.norm() <= 1e-16 * (1.0 + y.norm()) {
                step *= 0.5;
                continue;
            }
            let cand_value = value_fn(&cand)?;
            if cand_value == f64::INFINITY {
                return Ok(AscentOutcome::InfiniteValue { witness: cand });
            }
            if cand_value.is_finite() && cand_value >= value + 1e-4 * grad.dot(&dy).max(0.0) {
                let gain = cand_value - value;
                plateau = if gain <= 1e-10 * (1.0 + value.abs()) { plateau + 1 } else { 0 };
                y = cand;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search exhausted: first-order stationarity to the step
            // resolution; report as converged with the measured residual.
            if null_escaped(&y) {
                return Ok(AscentOutcome::NullEscape { y, iterations: iter });
            }
            return Ok(AscentOutcome::Converged { y, value, iterations: iter, residual });
        }

        if plateau >= 5 && null_escaped(&y) {
            return Ok(AscentOutcome::NullEscape { y, iterations: iter });
        }
        if y.norm() > ESCAPE_NORM {
            break;
        }
    }
    if null_escaped(&y) {
        return Ok(AscentOutcome::NullEscape { y, iterations: opts.max_iters });
    }
    Ok(AscentOutcome::Budget { y, value, iterations: opts.max_iters, residual })
}

/// Replace infinite gradient entries by large finite ones so the line search
/// can still form trial points; the Armijo test validates by value.
fn finite_direction(grad: &DVector<f64>) -> DVector<f64> {
    let finite_max =
        grad.iter().filter(|v| v.is_finite()).fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cap = 1e6 * (1.0 + finite_max);
    DVector::from_fn(grad.len(), |i, _| {
        let v = grad[i];
        if v.is_finite() {
            v
        } else if v.is_nan() {
            0.0
        } else {
            cap * v.signum()
        }
    })
}

// ---------------------------------------------------------------------------
// Newton polish on the active-set tangent space.

#[allow(clippy::too_many_arguments)]
fn newton_polish<F, G, H>(
    value_fn: &F,
    grad_fn: &G,
    hess_fn: &H,
    feasible: &Feasible,
    mut y: DVector<f64>,
    mut value: f64,
    tol: f64,
    iterations: &mut usize,
) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> Result<f64>,
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    H: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let d = y.len();
    for _ in 0..40 {
        *iterations += 1;
        let grad = match grad_fn(&y) {
            Ok(g) if g.iter().all(|v| v.is_finite()) => g,
            _ => break,
        };
        let rows = active_rows(feasible, &y, 1e-9);
        let basis = if rows.is_empty() {
            (0..d)
                .map(|i| {
                    let mut e = DVector::zeros(d);
                    e[i] = 1.0;
                    e
                })
                .collect::<Vec<_>>()
        } else {
            kernel_basis(&rows, d, 1e-12)
        };
        if basis.is_empty() {
            break; // pinned at a vertex
        }
        let b = DMatrix::from_fn(d, basis.len(), |i, j| basis[j][i]);
        let ng = b.transpose() * &grad;
        if ng.norm() <= tol * (1.0 + value.abs()) {
            break;
        }
        let hess = match hess_fn(&y) {
            Ok(h) => h,
            Err(_) => break, // contact point: second order information gone
        };
        let nh = b.transpose() * &hess * &b;
        // SVD pseudo-solve: the Hessian is singular along null directions,
        // where the gradient vanishes as well, so dropping those is exact.
        let eps = 1e-12 * (1.0 + nh.amax());
        let step = match nh.clone().svd(true, true).solve(&(-&ng), eps) {
            Ok(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => break,
        };
        let mut improved = false;
        let mut damping = 1.0;
        for _ in 0..30 {
            let cand = feasible.project(&(&y + &b * &step * damping));
            if let Ok(cand_value) = value_fn(&cand) {
                if cand_value.is_finite() && cand_value >= value - 1e-15 * (1.0 + value.abs()) {
                    let moved = (&cand - &y).norm() > 1e-16 * (1.0 + y.norm());
                    y = cand;
                    value = cand_value.max(value);
                    improved = moved;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (y, value)
}

/// Gradient rows of constraints active at y (within atol), for the polish
/// tangent space. Kinds without a usable linearization return what they can;
/// the polish step is validated by value and feasibility anyway.
fn active_rows(feasible: &Feasible, y: &DVector<f64>, atol: f64) -> Vec<DVector<f64>> {
    let d = y.len();
    let mut rows = Vec::new();
    for h in &feasible.halfspaces {
        if (h.normal.dot(y) - h.rhs).abs() <= atol * (1.0 + h.normal.norm() * y.norm()) {
            rows.push(h.normal.clone());
        }
    }
    match feasible.set {
        ConstraintSet::Box { lo, hi } => {
            for i in 0..d {
                if (y[i] - lo[i]).abs() <= atol * (1.0 + lo[i].abs())
                    || (y[i] - hi[i]).abs() <= atol * (1.0 + hi[i].abs())
                {
                    let mut e = DVector::zeros(d);
                    e[i] = 1.0;
                    rows.push(e);
                }
            }
        }
        ConstraintSet::Polyhedron { a, ub } => {
            for i in 0..ub.len() {
                let row = a.row(i).transpose();
                if (row.dot(y) - ub[i]).abs() <= atol * (1.0 + row.norm() * y.norm()) {
                    rows.push(row);
                }
            }
        }
        ConstraintSet::Ball { center, radius } => {
            let dv = y - center;
            if (dv.norm() - radius).abs() <= atol * (1.0 + radius) && dv.norm() > 0.0 {
                rows.push(dv);
            }
        }
        ConstraintSet::Cone { axis, slope } => {
            let z = axis.dot(y);
            let w = y - axis * z;
            if (w.norm() - slope * z).abs() <= atol * (1.0 + y.norm()) && w.norm() > 0.0 {
                // gradient of |y - (a.y)a| - slope * a.y
                rows.push(&w / w.norm() - axis * *slope);
            }
        }
        _ => {}
    }
    rows
}

// ---------------------------------------------------------------------------
// Convex solve.

fn maximize_convex(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    set: &ConstraintSet,
) -> Result<PortfolioSolution> {
    let tol = &problem.tol;
    let p = problem.p;
    let mut warnings = Vec::new();
    let mut geometry = analyze(triplet, set, tol.geometry)?;
    match &geometry.nuip {
        NuipVerdict::Violated { witness } => {
            return Err(Error::NuipViolated { witness: witness.clone() })
        }
        NuipVerdict::Undecidable { reason } => {
            if set.is_bounded() {
                // Compact feasible sets cannot host unbounded profit.
                geometry.nuip = NuipVerdict::Holds;
            } else {
                warnings.push(format!("arbitrage check undecidable ({reason}); proceeding"));
            }
        }
        NuipVerdict::Holds => {}
    }

    if p > 0.0 {
        if let Some(witness) = infinite_value_witness(triplet, set, problem)? {
            return Ok(infinite_value_solution(witness, p, geometry, warnings));
        }
    }

    let value_fn = |y: &DVector<f64>| eval_g(y, triplet, p, tol).map(|g| g.value);
    let grad_fn = |y: &DVector<f64>| eval_grad_g(y, triplet, p, tol);
    let hess_fn = |y: &DVector<f64>| eval_hessian(y, triplet, p, tol);

    // For p < 0 the ruin walls carry -inf values; approach them through a
    // shrinking sequence of safety margins instead of head-on.
    let margins: &[f64] = if p < 0.0 { &[1e-3, 1e-8, 0.0] } else { &[0.0] };
    let mut y = DVector::zeros(triplet.dim());
    let mut value = 0.0;
    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;
    for (stage, &margin) in margins.iter().enumerate() {
        let feasible = Feasible::new(set, &geometry.c0_halfspaces, margin);
        let opts = AscentOpts {
            max_iters: MAX_ASCENT_ITERS,
            stop_tol: if stage + 1 == margins.len() { 1e-9 } else { 1e-7 },
            n_basis: &geometry.n_basis,
        };
        match projected_ascent(&value_fn, &grad_fn, &feasible, &y, &opts)? {
            AscentOutcome::Converged { y: yy, value: v, iterations: it, residual: r }
            | AscentOutcome::Budget { y: yy, value: v, iterations: it, residual: r } => {
                y = yy;
                value = v;
                iterations += it;
                residual = r;
            }
            AscentOutcome::InfiniteValue { witness } => {
                return Ok(infinite_value_solution(witness, p, geometry, warnings))
            }
            AscentOutcome::NullEscape { y: yy, iterations: it } => {
                iterations += it;
                return no_maximizer_report(
                    triplet, problem, set, &geometry, &yy, iterations, warnings,
                );
            }
        }
    }

    let feasible = Feasible::new(set, &geometry.c0_halfspaces, 0.0);
    let (mut y, mut value) =
        newton_polish(&value_fn, &grad_fn, &hess_fn, &feasible, y, value, 1e-13, &mut iterations);

    // The polish can accelerate a slow escape to infinity (riding a curved
    // boundary along null directions); re-check before trusting the point.
    if !geometry.n_basis.is_empty() {
        let perp = project_onto_null_complement(&y, &geometry.n_basis);
        if (&y - &perp).norm() > NULL_ESCAPE_NORM * (1.0 + perp.norm()) {
            return no_maximizer_report(triplet, problem, set, &geometry, &y, iterations, warnings);
        }
    }

    // Minimal-norm representative: project the origin onto (y + N) & feasible.
    if !geometry.n_basis.is_empty() {
        let rep = min_norm_representative(&feasible, &y, &geometry.n_basis);
        if let Ok(rep_value) = value_fn(&rep) {
            if (rep_value - value).abs() <= 1e-8 * (1.0 + value.abs()) {
                y = rep;
                value = rep_value.max(value);
            } else {
                warnings.push(
                    "minimal-norm representative shifted the criterion; keeping raw maximizer"
                        .into(),
                );
            }
        }
    }

    if let Ok(grad) = grad_fn(&y) {
        let fin = finite_direction(&grad);
        residual = (&feasible.project(&(&y + &fin)) - &y).norm();
    }
    let location = classify_location(triplet, &y, &grad_fn, tol);
    let directional_at_zero =
        eval_directional(&DVector::zeros(y.len()), &y, triplet, p, tol).unwrap_or(f64::NAN);
    Ok(PortfolioSolution {
        a: p / (1.0 - p) * value,
        pi_hat: y,
        g_star: value,
        finite_value: true,
        maximizer_attained: true,
        location,
        directional_at_zero,
        geometry,
        iterations,
        achieved_tol: residual,
        warnings,
    })
}

fn infinite_value_solution(
    witness: DVector<f64>,
    p: f64,
    geometry: ConstraintGeometry,
    mut warnings: Vec<String>,
) -> PortfolioSolution {
    warnings.push(format!(
        "criterion is +inf at an admissible portfolio: the p-th moment of the jump tail \
         diverges for p = {p}; expected utility is unbounded"
    ));
    PortfolioSolution {
        pi_hat: witness,
        g_star: f64::INFINITY,
        a: f64::INFINITY,
        finite_value: false,
        maximizer_attained: false,
        location: MaximizerLocation::NotAttained,
        directional_at_zero: f64::NAN,
        geometry,
        iterations: 0,
        achieved_tol: f64::NAN,
        warnings,
    }
}

/// Admissible portfolio with positive exposure to a power tail too heavy for
/// the p-th moment, if one exists. Checked before the ascent so the +inf
/// verdict is deterministic rather than a line-search accident.
fn infinite_value_witness(
    triplet: &LevyTriplet,
    set: &ConstraintSet,
    problem: &ProblemSpec,
) -> Result<Option<DVector<f64>>> {
    let tol = &problem.tol;
    for part in &triplet.jumps.parts {
        if part.t_hi.is_finite() {
            continue;
        }
        let heavy = matches!(part.tail, Some(TailModel::Power { alpha }) if alpha <= problem.p);
        if !heavy {
            continue;
        }
        let dir = &part.dir / part.dir.norm();
        let mut candidates: Vec<DVector<f64>> = (-6..=6)
            .map(|k| &dir * 10f64.powi(k))
            .filter_map(|c| set.project(&c))
            .collect();
        if let Some(vs) = set.vertices() {
            candidates.extend(vs);
        }
        for cand in candidates {
            let admissible = set.contains(&cand, tol.geometry)?
                && in_budget_set(&triplet.jumps, &cand, tol.geometry);
            if admissible && cand.dot(&part.dir) > 1e-9 * (1.0 + cand.norm()) {
                let gv = eval_g(&cand, triplet, problem.p, tol)?;
                if gv.value == f64::INFINITY {
                    return Ok(Some(cand));
                }
            }
        }
    }
    Ok(None)
}

/// Gradient-based location classification: an (essentially) vanishing full
/// gradient means an interior stationary point; otherwise the binding system
/// is the budget set when some jump brings wealth to the ruin threshold.
fn classify_location<G>(
    triplet: &LevyTriplet,
    y: &DVector<f64>,
    grad_fn: &G,
    tol: &Tolerances,
) -> MaximizerLocation
where
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let scale = 1.0 + triplet.b.norm();
    if let Ok(grad) = grad_fn(y) {
        if grad.iter().all(|v| v.is_finite()) && grad.norm() <= 1e-6 * scale {
            return MaximizerLocation::Interior;
        }
    }
    let contact = triplet.jumps.support_contact(y, tol.geometry);
    if contact.inf <= -1.0 + 1e-7 {
        MaximizerLocation::BudgetBoundary
    } else {
        MaximizerLocation::ConstraintBoundary
    }
}

/// Dykstra projection of the origin onto (anchor + null span) & feasible:
/// the minimal-norm portfolio indistinguishable from the maximizer.
fn min_norm_representative(
    feasible: &Feasible,
    anchor: &DVector<f64>,
    n_basis: &[DVector<f64>],
) -> DVector<f64> {
    let project_affine = |q: &DVector<f64>| {
        let diff = q - anchor;
        let mut out = anchor.clone();
        for n in n_basis {
            out += n * diff.dot(n);
        }
        out
    };
    let mut x: DVector<f64> = DVector::zeros(anchor.len());
    let mut c1 = DVector::zeros(anchor.len());
    let mut c2 = DVector::zeros(anchor.len());
    for _ in 0..MAX_DYKSTRA_SWEEPS {
        let w1 = &x + &c1;
        let p1 = project_affine(&w1);
        c1 = &w1 - &p1;
        let w2 = &p1 + &c2;
        let p2 = feasible.project(&w2);
        c2 = &w2 - &p2;
        let moved = (&p2 - &x).norm();
        x = p2;
        if moved <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

// ---------------------------------------------------------------------------
// No-maximizer path: supremum over the null-complement, recovery, probes.

#[allow(clippy::too_many_arguments)]
fn no_maximizer_report(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    set: &ConstraintSet,
    geometry: &ConstraintGeometry,
    escape_point: &DVector<f64>,
    iterations_so_far: usize,
    mut warnings: Vec<String>,
) -> Result<PortfolioSolution> {
    let tol = &problem.tol;
    let p = problem.p;
    let d = triplet.dim();
    let mut iterations = iterations_so_far;

    // Supremum candidate: maximize over the null-complement subspace with the
    // constraint set deliberately ignored (the criterion does not see null
    // directions, so this dominates the constrained supremum).
    let basis = kernel_basis(&geometry.n_basis.to_vec(), d, 1e-12);
    let b = DMatrix::from_fn(d, basis.len(), |i, j| basis[j][i]);
    let z_halfspaces: Vec<Halfspace> = geometry
        .c0_halfspaces
        .iter()
        .map(|h| Halfspace { normal: b.transpose() * &h.normal, rhs: h.rhs })
        .filter(|h| h.normal.norm() > 1e-12)
        .collect();
    let whole = ConstraintSet::Whole { dim: basis.len() };
    let z_feasible = Feasible { set: &whole, halfspaces: z_halfspaces };
    let lift = |z: &DVector<f64>| &b * z;
    let value_fn = |z: &DVector<f64>| eval_g(&lift(z), triplet, p, tol).map(|g| g.value);
    let grad_fn = |z: &DVector<f64>| eval_grad_g(&lift(z), triplet, p, tol).map(|g| b.transpose() * g);
    let hess_fn =
        |z: &DVector<f64>| eval_hessian(&lift(z), triplet, p, tol).map(|h| b.transpose() * &h * &b);

    let z0 = b.transpose() * project_onto_null_complement(escape_point, &geometry.n_basis);
    let opts = AscentOpts { max_iters: MAX_ASCENT_ITERS, stop_tol: 1e-10, n_basis: &[] };
    let (z, mut sup) = match projected_ascent(&value_fn, &grad_fn, &z_feasible, &z0, &opts)? {
        AscentOutcome::Converged { y, value, iterations: it, .. }
        | AscentOutcome::Budget { y, value, iterations: it, .. } => {
            iterations += it;
            (y, value)
        }
        AscentOutcome::InfiniteValue { .. } => {
            return Err(Error::PreconditionFailed(
                "unconstrained criterion is unbounded while iterates escape".into(),
            ))
        }
        AscentOutcome::NullEscape { .. } => unreachable!("escape detection disabled"),
    };
    let (z, sup2) =
        newton_polish(&value_fn, &grad_fn, &hess_fn, &z_feasible, z, sup, 1e-13, &mut iterations);
    sup = sup2;
    let v_star = lift(&z);

    // Did the full feasible set reach this point after all? The criterion is
    // flat along null directions, so check (v_star + N) & feasible.
    let feasible = Feasible::new(set, &geometry.c0_halfspaces, 0.0);
    if let Some(recovered) = intersect_shifted_null(&feasible, &v_star, &geometry.n_basis, tol) {
        let value_fn_full = |y: &DVector<f64>| eval_g(y, triplet, p, tol).map(|g| g.value);
        let grad_fn_full = |y: &DVector<f64>| eval_grad_g(y, triplet, p, tol);
        let recovered_value = value_fn_full(&recovered)?;
        if (recovered_value - sup).abs() <= 1e-7 * (1.0 + sup.abs()) {
            let location = classify_location(triplet, &recovered, &grad_fn_full, tol);
            let directional_at_zero =
                eval_directional(&DVector::zeros(d), &recovered, triplet, p, tol)
                    .unwrap_or(f64::NAN);
            return Ok(PortfolioSolution {
                pi_hat: recovered,
                g_star: recovered_value,
                a: p / (1.0 - p) * recovered_value,
                finite_value: true,
                maximizer_attained: true,
                location,
                directional_at_zero,
                geometry: geometry.clone(),
                iterations,
                achieved_tol: f64::NAN,
                warnings,
            });
        }
    }

    // Approachability probe: the supremum should be approached along a
    // sequence of feasible portfolios with growing norm caps.
    let mut probe_values = Vec::new();
    let mut warm = DVector::zeros(d);
    for cap in [1e2, 1e3, 1e4] {
        let mut capped = Feasible::new(set, &geometry.c0_halfspaces, 0.0);
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            capped.halfspaces.push(Halfspace { normal: e.clone(), rhs: -cap });
            capped.halfspaces.push(Halfspace { normal: -e, rhs: -cap });
        }
        let value_fn_full = |y: &DVector<f64>| eval_g(y, triplet, p, tol).map(|g| g.value);
        let grad_fn_full = |y: &DVector<f64>| eval_grad_g(y, triplet, p, tol);
        let opts = AscentOpts { max_iters: 1500, stop_tol: 1e-9, n_basis: &[] };
        match projected_ascent(&value_fn_full, &grad_fn_full, &capped, &warm, &opts)? {
            AscentOutcome::Converged { y, value, iterations: it, .. }
            | AscentOutcome::Budget { y, value, iterations: it, .. } => {
                iterations += it;
                probe_values.push(value);
                warm = y;
            }
            _ => break,
        }
    }
    let approaching = probe_values.windows(2).all(|w| w[1] >= w[0] - 1e-12)
        && probe_values.last().is_some_and(|v| sup - v <= 0.05 * (1.0 + sup.abs()));
    warnings.push(format!(
        "no maximizer is attained: the supremum {sup:.12} is approached along portfolios of \
         unbounded norm (capped-norm values {probe_values:?}); reported portfolio is the \
         limit direction modulo null directions"
    ));
    if !approaching {
        warnings.push(
            "capped-norm probes did not close in on the supremum; treat the reported value \
             as an upper bound"
                .into(),
        );
    }
    let directional_at_zero =
        eval_directional(&DVector::zeros(d), &v_star, triplet, p, tol).unwrap_or(f64::NAN);
    Ok(PortfolioSolution {
        pi_hat: v_star,
        g_star: sup,
        a: p / (1.0 - p) * sup,
        finite_value: true,
        maximizer_attained: false,
        location: MaximizerLocation::NotAttained,
        directional_at_zero,
        geometry: geometry.clone(),
        iterations,
        achieved_tol: f64::NAN,
        warnings,
    })
}

/// Point of (anchor + null span) & feasible, or None when the intersection
/// is (numerically) empty. Alternating projections between the affine space
/// and the feasible set; both are convex, so the gap converges to the
/// distance between them.
fn intersect_shifted_null(
    feasible: &Feasible,
    anchor: &DVector<f64>,
    n_basis: &[DVector<f64>],
    tol: &Tolerances,
) -> Option<DVector<f64>> {
    let project_affine = |q: &DVector<f64>| {
        let diff = q - anchor;
        let mut out = anchor.clone();
        for n in n_basis {
            out += n * diff.dot(n);
        }
        out
    };
    // A nonempty intersection keeps the alternating iterates near the
    // anchor. Runaway norms mean the two sets only approach each other at
    // infinity -- exactly the non-closed situation with no maximizer -- so
    // that counts as empty no matter how small the gap gets.
    let norm_cap = 1e3 * (1.0 + anchor.norm());
    let mut q = anchor.clone();
    let mut gap = f64::INFINITY;
    for _ in 0..800 {
        let qc = feasible.project(&q);
        let qa = project_affine(&qc);
        gap = (&qc - &qa).norm();
        if qa.norm() > norm_cap {
            return None;
        }
        if (&qa - &q).norm() <= 1e-14 * (1.0 + q.norm()) {
            q = qa;
            break;
        }
        q = qa;
    }
    let qc = feasible.project(&q);
    if gap <= 1e-7 * (1.0 + anchor.norm()) && feasible.contains(&qc, tol.geometry) {
        Some(qc)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Non-convex constraint sets.

fn maximize_union(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    pieces: &[ConstraintSet],
) -> Result<PortfolioSolution> {
    let (c3, why) = check_c3(triplet, &problem.constraints, &problem.tol);
    let mut extra_warnings = Vec::new();
    if !c3 {
        if problem.p > 0.0 {
            return Err(Error::C3Violated(why));
        }
        extra_warnings.push(format!("union decomposition not certified: {why}"));
    }
    let mut best: Option<PortfolioSolution> = None;
    for (idx, piece) in pieces.iter().enumerate() {
        let mut sol = maximize_over(triplet, problem, piece)?;
        for w in &mut sol.warnings {
            *w = format!("piece {idx}: {w}");
        }
        if !sol.finite_value {
            sol.warnings.extend(extra_warnings);
            return Ok(sol);
        }
        best = match best {
            None => Some(sol),
            Some(b) if sol.g_star > b.g_star => Some(sol),
            Some(b) => Some(b),
        };
    }
    let mut sol = best.ok_or_else(|| {
        Error::PreconditionFailed("union constraint set has no pieces".into())
    })?;
    sol.warnings.extend(extra_warnings);
    Ok(sol)
}

/// Sufficient conditions for the union decomposition to compute the true
/// supremum: a star-shaped feasible set, or a budget set whose boundary
/// carries no jump mass (then closures add nothing).
pub fn check_c3(
    triplet: &LevyTriplet,
    set: &ConstraintSet,
    tol: &Tolerances,
) -> (bool, String) {
    fn star_shaped(set: &ConstraintSet, tol: f64) -> bool {
        match set {
            ConstraintSet::Union { pieces } => pieces.iter().all(|p| star_shaped(p, tol)),
            other => {
                let origin = DVector::zeros(other.dim());
                other.contains(&origin, tol).unwrap_or(false)
            }
        }
    }
    if star_shaped(set, tol.geometry) {
        return (true, "constraint set is star-shaped around the zero portfolio".into());
    }
    if triplet.jumps.atoms.is_empty() {
        return (
            true,
            "jump measure has no atoms, so ruin-boundary contacts carry no mass".into(),
        );
    }
    (
        false,
        "constraint set is not star-shaped and the jump measure carries atoms; the \
         piecewise supremum can miss boundary limits"
            .into(),
    )
}

/// Membership-oracle sets: deterministic multistart over ray directions with
/// a golden-section radial search, then a compass pattern polish. The oracle
/// is only assumed star-shaped around 0 and bounded by `radial_bound`.
fn maximize_star(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    set: &ConstraintSet,
) -> Result<PortfolioSolution> {
    let ConstraintSet::StarOracle { dim, radial_bound, .. } = set else {
        return Err(Error::PreconditionFailed("maximize_star needs a star oracle".into()));
    };
    let d = *dim;
    let tol = &problem.tol;
    let p = problem.p;
    let mut geometry = analyze(triplet, set, tol.geometry)?;
    if matches!(geometry.nuip, NuipVerdict::Undecidable { .. }) && radial_bound.is_finite() {
        geometry.nuip = NuipVerdict::Holds;
    }
    if let NuipVerdict::Violated { witness } = &geometry.nuip {
        return Err(Error::NuipViolated { witness: witness.clone() });
    }
    let admissible = |y: &DVector<f64>| {
        set.contains(y, tol.geometry).unwrap_or(false)
            && in_budget_set(&triplet.jumps, y, tol.geometry)
    };
    let objective = |y: &DVector<f64>| match eval_g(y, triplet, p, tol) {
        Ok(g) => g.value,
        Err(_) => f64::NEG_INFINITY,
    };

    let mut best = DVector::zeros(d);
    let mut best_value = 0.0f64; // zero portfolio is always admissible
    let mut evals = 0usize;
    for dir in halton_directions(d, 64 * d) {
        // Star shape gives the prefix property along each ray: binary-search
        // the largest admissible radius, then golden-section the value.
        let mut r_hi = *radial_bound;
        if !admissible(&(&dir * r_hi)) {
            let mut lo = 0.0;
            let mut hi = r_hi;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if admissible(&(&dir * mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            r_hi = lo;
        }
        if r_hi <= 0.0 {
            continue;
        }
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0f64, r_hi);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let mut f1 = objective(&(&dir * x1));
        let mut f2 = objective(&(&dir * x2));
        for _ in 0..80 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = objective(&(&dir * x2));
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = objective(&(&dir * x1));
            }
            evals += 1;
        }
        let r = 0.5 * (a + b);
        let v = objective(&(&dir * r));
        if v > best_value {
            best_value = v;
            best = &dir * r;
        }
    }

    // Compass pattern polish around the incumbent.
    let mut step = 0.1 * (1.0 + best.norm());
    while step > 1e-9 {
        let mut moved = false;
        for i in 0..d {
            for sgn in [1.0, -1.0] {
                let mut cand = best.clone();
                cand[i] += sgn * step;
                evals += 1;
                if admissible(&cand) {
                    let v = objective(&cand);
                    if v > best_value {
                        best_value = v;
                        best = cand;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }

    let grad_fn = |y: &DVector<f64>| eval_grad_g(y, triplet, p, tol);
    let location = classify_location(triplet, &best, &grad_fn, tol);
    let directional_at_zero =
        eval_directional(&DVector::zeros(d), &best, triplet, p, tol).unwrap_or(f64::NAN);
    Ok(PortfolioSolution {
        a: p / (1.0 - p) * best_value,
        pi_hat: best,
        g_star: best_value,
        finite_value: true,
        maximizer_attained: true,
        location,
        directional_at_zero,
        geometry,
        iterations: evals,
        achieved_tol: 1e-9,
        warnings: vec!["membership-oracle constraint set: solution from pattern search, \
                        first-order certificates unavailable"
            .into()],
    })
}

/// Deterministic low-discrepancy directions on the unit sphere (Halton
/// points in the cube, centered and normalized).
fn halton_directions(d: usize, count: usize) -> Vec<DVector<f64>> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let radical_inverse = |mut n: usize, base: usize| {
        let mut inv = 0.0;
        let mut denom = 1.0 / base as f64;
        while n > 0 {
            inv += (n % base) as f64 * denom;
            n /= base;
            denom /= base as f64;
        }
        inv
    };
    let mut out = Vec::with_capacity(count + 2 * d);
    // Axis directions first: they catch axis-aligned optima exactly.
    for i in 0..d {
        for sgn in [1.0, -1.0] {
            let mut e = DVector::zeros(d);
            e[i] = sgn;
            out.push(e);
        }
    }
    for k in 1..=count {
        let v = DVector::from_fn(d, |i, _| 2.0 * radical_inverse(k, PRIMES[i % PRIMES.len()]) - 1.0);
        let n = v.norm();
        if n > 1e-6 {
            out.push(v / n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{DensityPart, DensityProfile, JumpAtom, JumpMeasure, QuadSpec};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn merton_triplet() -> LevyTriplet {
        LevyTriplet {
            b: DVector::from_row_slice(&[0.08]),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure::default(),
        }
    }

    fn problem(p: f64, constraints: ConstraintSet) -> ProblemSpec {
        ProblemSpec {
            p,
            consumption: false,
            horizon: 1.0,
            x0: 1.0,
            constraints,
            tol: Tolerances::default(),
        }
    }

    #[test]
    fn merton_unconstrained_hits_closed_form() {
        let t = merton_triplet();
        let prob = problem(0.5, ConstraintSet::Whole { dim: 1 });
        let sol = maximize(&t, &prob).unwrap();
        assert!((sol.pi_hat[0] - 4.0).abs() < 1e-8, "pi_hat = {}", sol.pi_hat[0]);
        assert!((sol.g_star - 0.16).abs() < 1e-10, "g_star = {}", sol.g_star);
        assert_eq!(sol.location, MaximizerLocation::Interior);
        assert!(sol.maximizer_attained && sol.finite_value);
        assert!(sol.directional_at_zero.abs() < 1e-8);
        assert_relative_eq!(sol.a, 0.16, max_relative = 1e-9);
    }

    #[test]
    fn merton_box_constrained_sits_on_constraint_boundary() {
        let t = merton_triplet();
        let prob = problem(
            0.5,
            ConstraintSet::Box {
                lo: DVector::from_row_slice(&[0.0]),
                hi: DVector::from_row_slice(&[1.0]),
            },
        );
        let sol = maximize(&t, &prob).unwrap();
        assert!((sol.pi_hat[0] - 1.0).abs() < 1e-9);
        assert!((sol.g_star - 0.07).abs() < 1e-12, "g_star = {}", sol.g_star);
        assert_eq!(sol.location, MaximizerLocation::ConstraintBoundary);
        // moving from pi_hat back toward 0 must lower the criterion
        assert!((sol.directional_at_zero + 0.06).abs() < 1e-9);
    }

    #[test]
    fn compound_poisson_interior_optimum() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.1]),
            c: DMatrix::zeros(1, 1),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[0.5]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        let prob = problem(0.5, ConstraintSet::Whole { dim: 1 });
        let sol = maximize(&t, &prob).unwrap();
        assert!((sol.pi_hat[0] - 1.125).abs() < 1e-7, "pi_hat = {}", sol.pi_hat[0]);
        assert!((sol.g_star - 0.05).abs() < 1e-10, "g_star = {}", sol.g_star);
        assert_eq!(sol.location, MaximizerLocation::Interior);
    }

    #[test]
    fn negative_power_ruin_wall_stays_interior() {
        // p = -1 with a single downward jump: the wall at the contact repels.
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.3]),
            c: DMatrix::zeros(1, 1),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[-0.8]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        let prob = problem(-1.0, ConstraintSet::Whole { dim: 1 });
        let sol = maximize(&t, &prob).unwrap();
        // budget bound: y <= 1.25
        assert!(sol.pi_hat[0] > 0.0 && sol.pi_hat[0] < 1.25);
        assert_eq!(sol.location, MaximizerLocation::Interior);
        let grad = eval_grad_g(&sol.pi_hat, &t, -1.0, &prob.tol).unwrap();
        assert!(grad[0].abs() < 1e-7, "stationarity residual {}", grad[0]);
    }

    #[test]
    fn duplicated_asset_returns_minimal_norm_representative() {
        // Two identical assets: only the total exposure s = y1 + y2 matters.
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.05, 0.05]),
            c: DMatrix::from_row_slice(2, 2, &[0.02, 0.02, 0.02, 0.02]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[0.1, 0.1]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        let prob = problem(
            0.5,
            ConstraintSet::Box {
                lo: DVector::from_row_slice(&[-5.0, -5.0]),
                hi: DVector::from_row_slice(&[5.0, 5.0]),
            },
        );
        let sol = maximize(&t, &prob).unwrap();
        assert_eq!(sol.geometry.n_basis.len(), 1, "one duplicated direction");
        // 1d oracle in s: g1(s) = .05 s - .005 s^2 + 2 sqrt(1+.1 s) - 2 - .1 s
        let g1 = |s: f64| 0.05 * s - 0.005 * s * s + 2.0 * (1.0 + 0.1 * s).sqrt() - 2.0 - 0.1 * s;
        let dg1 = |s: f64| 0.05 - 0.01 * s + 0.1 / (1.0 + 0.1 * s).sqrt() - 0.1;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dg1(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s_star = 0.5 * (lo + hi);
        let s = sol.pi_hat[0] + sol.pi_hat[1];
        assert!((s - s_star).abs() < 1e-7, "total exposure {s} vs oracle {s_star}");
        assert!(
            (sol.pi_hat[0] - sol.pi_hat[1]).abs() < 1e-8,
            "minimal-norm representative must split evenly, got {:?}",
            sol.pi_hat.as_slice()
        );
        assert!((sol.g_star - g1(s_star)).abs() < 1e-10);
    }

    #[test]
    fn cone_model_reports_unattained_supremum() {
        // The criterion depends on y1 and (y2 - y3) only; the cone forces
        // any feasible point with y1 > 0 to carry huge y3, so the optimum
        // is approached but never attained. Supremum = beta/2 = 1.
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            c: DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, -2.0, 0.0, -2.0, 2.0]),
            jumps: JumpMeasure::default(),
        };
        let prob = problem(
            0.5,
            ConstraintSet::Cone { axis: DVector::from_row_slice(&[0.0, 0.0, 1.0]), slope: 1.0 },
        );
        let sol = maximize(&t, &prob).unwrap();
        assert!(!sol.maximizer_attained);
        assert_eq!(sol.location, MaximizerLocation::NotAttained);
        assert!((sol.g_star - 1.0).abs() < 1e-6, "supremum = {}", sol.g_star);
        assert!(sol.warnings.iter().any(|w| w.contains("no maximizer")));
        assert!(matches!(sol.geometry.nuip, NuipVerdict::Holds));
        // limit direction modulo null: (2, 0, 0)
        let perp = project_onto_null_complement(&sol.pi_hat, &sol.geometry.n_basis);
        assert!((perp[0] - 2.0).abs() < 1e-6, "limit direction {:?}", perp.as_slice());
    }

    #[test]
    fn increasing_jump_asset_is_unbounded_profit() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[1.0]),
            c: DMatrix::zeros(1, 1),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[1.0]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        let prob = problem(
            0.5,
            ConstraintSet::Box {
                lo: DVector::from_row_slice(&[0.0]),
                hi: DVector::from_row_slice(&[f64::INFINITY]),
            },
        );
        match maximize(&t, &prob) {
            Err(Error::NuipViolated { witness }) => {
                assert_eq!(witness.len(), 1);
                assert!((witness[0] - 1.0).abs() < 1e-9, "witness {witness:?}");
            }
            other => panic!("expected unbounded-profit error, got {other:?}"),
        }
    }

    #[test]
    fn heavy_tail_reports_infinite_value() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.05]),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure {
                atoms: vec![],
                parts: vec![DensityPart::new(
                    DVector::from_row_slice(&[1.0]),
                    1.0,
                    f64::INFINITY,
                    DensityProfile::Pareto { alpha: 0.3 },
                    0.2,
                    None,
                    QuadSpec::default(),
                )
                .unwrap()],
            },
        };
        let prob = problem(0.5, ConstraintSet::Whole { dim: 1 });
        let sol = maximize(&t, &prob).unwrap();
        assert!(!sol.finite_value);
        assert_eq!(sol.g_star, f64::INFINITY);
        assert!(!sol.maximizer_attained);
        assert!(sol.warnings.iter().any(|w| w.contains("unbounded")));
    }

    #[test]
    fn budget_boundary_argmax_with_positive_slope() {
        // All jump mass on [-0.5, -0.3] with density ~ (x+0.5)^2: the budget
        // bound y <= 2 binds and the slope there stays positive.
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.5]),
            c: DMatrix::zeros(1, 1),
            jumps: JumpMeasure {
                atoms: vec![],
                parts: vec![DensityPart::new(
                    DVector::from_row_slice(&[1.0]),
                    -0.5,
                    -0.3,
                    DensityProfile::ShiftedPower { shift: -0.5, power: 2.0 },
                    1.0,
                    None,
                    QuadSpec::default(),
                )
                .unwrap()],
            },
        };
        let prob = problem(0.5, ConstraintSet::Whole { dim: 1 });
        let sol = maximize(&t, &prob).unwrap();
        assert!((sol.pi_hat[0] - 2.0).abs() < 1e-6, "pi_hat = {}", sol.pi_hat[0]);
        assert_eq!(sol.location, MaximizerLocation::BudgetBoundary);
        let grad = eval_grad_g(&sol.pi_hat, &t, 0.5, &prob.tol).unwrap();
        assert!(grad[0] > 0.0, "slope at the boundary should push outward");
        // directional value toward 0 equals -pi_hat * g'(pi_hat)
        assert_relative_eq!(sol.directional_at_zero, -2.0 * grad[0], max_relative = 1e-6);
        assert!(sol.directional_at_zero < 0.0);
    }

    #[test]
    fn union_of_boxes_picks_the_better_piece() {
        let t = merton_triplet();
        let prob = problem(
            0.5,
            ConstraintSet::Union {
                pieces: vec![
                    ConstraintSet::Box {
                        lo: DVector::from_row_slice(&[0.0]),
                        hi: DVector::from_row_slice(&[0.0]),
                    },
                    ConstraintSet::Box {
                        lo: DVector::from_row_slice(&[0.5]),
                        hi: DVector::from_row_slice(&[1.0]),
                    },
                ],
            },
        );
        let sol = maximize(&t, &prob).unwrap();
        assert!((sol.pi_hat[0] - 1.0).abs() < 1e-9);
        assert!((sol.g_star - 0.07).abs() < 1e-12);
    }

    #[test]
    fn star_oracle_ball_matches_projected_solution() {
        let t = merton_triplet();
        let prob = problem(
            0.5,
            ConstraintSet::StarOracle {
                dim: 1,
                membership: Arc::new(|y: &DVector<f64>| y.norm() <= 2.0),
                radial_bound: 2.5,
            },
        );
        let sol = maximize(&t, &prob).unwrap();
        assert!((sol.pi_hat[0] - 2.0).abs() < 1e-6, "pi_hat = {}", sol.pi_hat[0]);
        assert!((sol.g_star - 0.12).abs() < 1e-8, "g_star = {}", sol.g_star);
    }

    #[test]
    fn union_without_star_shape_needs_atom_free_jumps() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.08]),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[0.5]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        // {0} u [0.5, 1] is not star-shaped and the measure has an atom.
        let set = ConstraintSet::Union {
            pieces: vec![
                ConstraintSet::Box {
                    lo: DVector::from_row_slice(&[0.0]),
                    hi: DVector::from_row_slice(&[0.0]),
                },
                ConstraintSet::Box {
                    lo: DVector::from_row_slice(&[0.5]),
                    hi: DVector::from_row_slice(&[1.0]),
                },
            ],
        };
        let (ok, _) = check_c3(&t, &set, &Tolerances::default());
        assert!(!ok);
        let prob = problem(0.5, set);
        assert!(matches!(maximize(&t, &prob), Err(Error::C3Violated(_))));
    }

    #[test]
    fn solves_are_deterministic() {
        let t = merton_triplet();
        let prob = problem(0.5, ConstraintSet::Whole { dim: 1 });
        let a = maximize(&t, &prob).unwrap();
        let b = maximize(&t, &prob).unwrap();
        assert_eq!(a.pi_hat, b.pi_hat);
        assert_eq!(a.g_star.to_bits(), b.g_star.to_bits());
    }
}
