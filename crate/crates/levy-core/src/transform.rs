//! Market transformation: replace each traded asset by the wealth process of
//! an admissible portfolio. The replacement portfolios form the rows of a
//! matrix `lambda`; holdings `z` in the transformed market correspond to
//! holdings `lambda^T z` in the original one, and the static criterion is
//! invariant under that correspondence. The point of the exercise: a market
//! with awkward jump support or constraints can be traded through portfolios
//! whose wealth never hits zero, moving the ruin boundary away from the
//! region of interest while provably changing no answer.

use crate::constraint_geometry::{in_strict_budget_set, ConstraintSet};
use crate::levy_model::{cutoff, LevyTriplet, ProblemSpec};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A transformed market description, together with the correspondence in
/// both directions.
#[derive(Debug, Clone)]
pub struct ModelTransform {
    /// Row i holds the original-market portfolio backing transformed asset
    /// i; a zero row marks an untradable asset (kept as a constant).
    pub lambda: DMatrix<f64>,
    /// Replacement portfolio per asset, None when untradable.
    pub steps: Vec<Option<DVector<f64>>>,
    /// The transformed market triplet.
    pub triplet: LevyTriplet,
    /// Preimage of the original constraint set: { z : lambda^T z in C }.
    pub constraints: ConstraintSet,
    pub warnings: Vec<String>,
}

impl ModelTransform {
    /// Original-market exposure of transformed holdings z.
    pub fn to_original_portfolio(&self, z: &DVector<f64>) -> DVector<f64> {
        self.lambda.transpose() * z
    }

    /// Transformed holdings replicating original-market exposure pi, when
    /// the replacement system is invertible on its range.
    pub fn to_new_portfolio(&self, pi: &DVector<f64>) -> Result<DVector<f64>> {
        let lt = self.lambda.transpose();
        let solved = lt
            .clone()
            .svd(true, true)
            .solve(pi, 1e-12 * (1.0 + self.lambda.amax()))
            .map_err(|e| Error::PreconditionFailed(format!("replacement solve failed: {e}")))?;
        let residual = (&lt * &solved - pi).norm();
        if residual > 1e-9 * (1.0 + pi.norm()) {
            return Err(Error::PreconditionFailed(format!(
                "portfolio is not replicable through the replacement portfolios \
                 (residual {residual:.3e}); some asset is untradable"
            )));
        }
        Ok(solved)
    }

    /// Problem restated in the transformed market.
    pub fn transformed_problem(&self, problem: &ProblemSpec) -> ProblemSpec {
        ProblemSpec {
            p: problem.p,
            consumption: problem.consumption,
            horizon: problem.horizon,
            x0: problem.x0,
            constraints: self.constraints.clone(),
            tol: problem.tol,
        }
    }
}

/// Build the transform for a model/problem pair. Each asset's replacement is
/// chosen from a deterministic candidate pool -- signed unit holdings,
/// constraint-set vertices, and projections of scaled unit holdings --
/// filtered to the constraint set intersected with the strict budget set
/// (portfolio wealth must stay strictly positive, so the replacement's own
/// wealth is a usable numeraire). Candidates failing strictness are halved
/// toward the origin up to 40 times; both sets are convex and contain 0, so
/// halving preserves membership. Among the admissible candidates the one
/// with the largest own-asset exposure wins (ties: smaller norm, then pool
/// order). No admissible candidate means the asset is untradable and its
/// replacement row is zero.
pub fn build_transform(triplet: &LevyTriplet, problem: &ProblemSpec) -> Result<ModelTransform> {
    let d = triplet.dim();
    let set = &problem.constraints;
    let tol = problem.tol.geometry;
    if triplet.jumps.parts.iter().any(|p| p.reweight.is_some()) {
        return Err(Error::PreconditionFailed(
            "transforming a reweighted jump measure is not supported".into(),
        ));
    }

    let mut warnings = Vec::new();
    let mut steps: Vec<Option<DVector<f64>>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        // Unit holdings first: when a (possibly halved) single-asset
        // position is admissible it keeps the transform close to a
        // rescaling. The wider pool only enters for sets that exclude every
        // axis segment through the origin.
        let unit_pool: Vec<DVector<f64>> = vec![e.clone(), -&e];
        let mut fallback_pool: Vec<DVector<f64>> = Vec::new();
        if let Some(vs) = set.vertices() {
            fallback_pool.extend(vs);
        }
        for k in -3..=3 {
            for sgn in [1.0, -1.0] {
                if let Some(proj) = set.project(&(&e * (sgn * 10f64.powi(k)))) {
                    fallback_pool.push(proj);
                }
            }
        }

        let admissible = |y: &DVector<f64>| {
            set.contains(y, tol).unwrap_or(false)
                && in_strict_budget_set(&triplet.jumps, y, tol)
                && y[i].abs() > tol
        };
        let select = |pool: &[DVector<f64>]| {
            let mut best: Option<DVector<f64>> = None;
            for cand in pool {
                let mut y = cand.clone();
                let mut ok = false;
                for _ in 0..40 {
                    if admissible(&y) {
                        ok = true;
                        break;
                    }
                    y *= 0.5;
                }
                if !ok {
                    continue;
                }
                best = match best {
                    None => Some(y),
                    Some(b) => {
                        let better = y[i].abs() > b[i].abs() + tol
                            || (y[i].abs() >= b[i].abs() - tol && y.norm() < b.norm() - tol);
                        Some(if better { y } else { b })
                    }
                };
            }
            best
        };
        let best = select(&unit_pool).or_else(|| select(&fallback_pool));
        if best.is_none() {
            warnings.push(format!(
                "asset {i} is untradable: no admissible portfolio carries exposure to it"
            ));
        }
        steps.push(best);
    }

    let lambda = DMatrix::from_fn(d, d, |i, j| steps[i].as_ref().map_or(0.0, |y| y[j]));
    if lambda.clone().svd(false, false).rank(1e-10) < d {
        warnings.push(
            "replacement system is singular: criterion invariance holds on its range only"
                .into(),
        );
    }

    let new_triplet = transform_triplet(triplet, &lambda, tol)?;
    let constraints = preimage_constraints(set, &lambda)?;
    Ok(ModelTransform { lambda, steps, triplet: new_triplet, constraints, warnings })
}

/// Push the triplet through the linear map: quadratic form conjugation, jump
/// images, and the drift correction from re-centering the cutoff,
///   b~ = lambda b + int [h(lambda x) - lambda h(x)] F(dx).
pub fn transform_triplet(
    triplet: &LevyTriplet,
    lambda: &DMatrix<f64>,
    tol: f64,
) -> Result<LevyTriplet> {
    let d = triplet.dim();
    let mut b = lambda * &triplet.b;
    for a in &triplet.jumps.atoms {
        let image = lambda * &a.x;
        b += (cutoff(&image) - lambda * cutoff(&a.x)) * a.lambda;
    }
    for part in &triplet.jumps.parts {
        let image_dir = lambda * &part.dir;
        // The integrand switches branch where |x| or |lambda x| crosses 1.
        let mut splits = vec![1.0 / part.dir.norm(), -1.0 / part.dir.norm()];
        if image_dir.norm() > 0.0 {
            splits.push(1.0 / image_dir.norm());
            splits.push(-1.0 / image_dir.norm());
        }
        for j in 0..d {
            let (v, _) = part.integrate(
                |x, _| {
                    let image = lambda * x;
                    cutoff(&image)[j] - (lambda * cutoff(x))[j]
                },
                0.0,
                &splits,
                None,
            )?;
            b[j] += v;
        }
    }

    let c = lambda * &triplet.c * lambda.transpose();

    let mut jumps = triplet.jumps.clone();
    jumps.atoms = jumps
        .atoms
        .iter()
        .filter_map(|a| {
            let x = lambda * &a.x;
            // Jumps mapped to zero stop being jumps; dropping them changes
            // no wealth path and keeps the origin atom-free.
            (x.norm() > tol).then(|| crate::levy_model::JumpAtom { x, lambda: a.lambda })
        })
        .collect();
    jumps.parts =
        jumps.parts.iter().filter_map(|p| p.pushforward(lambda, tol)).collect();

    Ok(LevyTriplet { b, c, jumps })
}

/// Constraint preimage { z : lambda^T z in C }. Polyhedral descriptions map
/// exactly; ball and cone become membership oracles (their preimages are
/// ellipsoidal/conic but not of the same parametric family).
fn preimage_constraints(set: &ConstraintSet, lambda: &DMatrix<f64>) -> Result<ConstraintSet> {
    let d = lambda.nrows();
    let lt = lambda.transpose();
    Ok(match set {
        ConstraintSet::Whole { .. } => {
            // lambda^T z ranges over a subspace; membership in R^d is free.
            ConstraintSet::Whole { dim: d }
        }
        ConstraintSet::Polyhedron { a, ub } => {
            ConstraintSet::Polyhedron { a: a * &lt, ub: ub.clone() }
        }
        ConstraintSet::Box { lo, hi } => {
            let mut rows: Vec<DVector<f64>> = Vec::new();
            let mut bounds = Vec::new();
            for i in 0..lo.len() {
                let row = lt.row(i).transpose();
                if hi[i].is_finite() {
                    rows.push(row.clone());
                    bounds.push(hi[i]);
                }
                if lo[i].is_finite() {
                    rows.push(-row);
                    bounds.push(-lo[i]);
                }
            }
            let a = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
            ConstraintSet::Polyhedron { a, ub: DVector::from_vec(bounds) }
        }
        ConstraintSet::Hull { .. } | ConstraintSet::Ball { .. } | ConstraintSet::Cone { .. } => {
            let inner = set.clone();
            let lt_owned = lt.clone();
            let radial_bound = preimage_radial_bound(set, lambda);
            ConstraintSet::StarOracle {
                dim: d,
                membership: Arc::new(move |z: &DVector<f64>| {
                    inner.contains(&(&lt_owned * z), 1e-9).unwrap_or(false)
                }),
                radial_bound,
            }
        }
        ConstraintSet::StarOracle { membership, radial_bound, .. } => {
            let inner = membership.clone();
            let lt_owned = lt.clone();
            let rb = if lt.clone().svd(false, false).rank(1e-10) < lt.ncols() {
                f64::INFINITY
            } else {
                *radial_bound / smallest_positive_singular_value(lambda)
            };
            ConstraintSet::StarOracle {
                dim: d,
                membership: Arc::new(move |z: &DVector<f64>| inner(&(&lt_owned * z))),
                radial_bound: rb,
            }
        }
        ConstraintSet::Union { pieces } => ConstraintSet::Union {
            pieces: pieces
                .iter()
                .map(|p| preimage_constraints(p, lambda))
                .collect::<Result<Vec<_>>>()?,
        },
    })
}

fn preimage_radial_bound(set: &ConstraintSet, lambda: &DMatrix<f64>) -> f64 {
    if !set.is_bounded() {
        return f64::INFINITY;
    }
    if lambda.clone().svd(false, false).rank(1e-10) < lambda.nrows() {
        return f64::INFINITY;
    }
    let reach = match set {
        ConstraintSet::Ball { center, radius } => center.norm() + radius,
        ConstraintSet::Hull { points } => {
            points.iter().map(|p| p.norm()).fold(0.0, f64::max)
        }
        _ => return f64::INFINITY,
    };
    reach / smallest_positive_singular_value(lambda)
}

fn smallest_positive_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .filter(|s| *s > 1e-10)
        .fold(f64::INFINITY, f64::min)
}
