//! Analysis of the candidate dual measure attached to an optimal portfolio.
//! For power preferences with exponent p the relevant change of measure is
//! built from the terminal wealth of the optimal portfolio; its density
//! process reweights the continuous part by a Girsanov drift `(p-1) pi_hat`
//! and every jump of size x by `(1 + pi_hat . x)^(p-1)`. The measure exists
//! (as a probability measure with the martingale property for each asset)
//! exactly when the directional criterion toward the zero portfolio
//! vanishes at the optimum; on constrained or boundary optima it is
//! strictly negative and the candidate density fails to be a martingale.

use crate::constraint_geometry::{in_strict_budget_set, ConstraintSet};
use crate::g_objective::eval_directional;
use crate::levy_model::{cutoff, LevyTriplet, ProblemSpec};
use crate::optimizer::PortfolioSolution;
use crate::{Error, Result};
use nalgebra::DVector;

/// Existence tolerance for the directional criterion at the optimum.
pub const EXISTENCE_TOL: f64 = 1e-7;

/// Outcome of the dual-measure analysis at an optimal portfolio.
#[derive(Debug, Clone)]
pub struct QMeasureReport {
    /// The dual moment index q = p / (p - 1), in (0, 1) for p < 0 and
    /// negative for p in (0, 1).
    pub q: f64,
    /// Whether the candidate measure is a genuine equivalent measure with
    /// the asset martingale property.
    pub exists: bool,
    /// Set when the existence decision sits within two orders of magnitude
    /// of the tolerance on either side; treat the verdict with suspicion.
    pub marginal: bool,
    /// Directional criterion toward the zero portfolio, the quantity whose
    /// vanishing characterises existence.
    pub directional_at_zero: f64,
    /// Girsanov drift adjustment of the Brownian part: (p - 1) pi_hat.
    pub girsanov_continuous: DVector<f64>,
    /// The market triplet under the candidate measure, when the density is
    /// well defined (no ruin contact at the optimum).
    pub triplet_under_q: Option<LevyTriplet>,
    /// Per-asset drift of the reweighted market, b_Q + int (x - h) dF_Q;
    /// zero (to quadrature accuracy) iff each asset is a local martingale
    /// under the candidate measure. None when a jump moment diverges.
    pub martingale_residuals: Option<DVector<f64>>,
    pub warnings: Vec<String>,
}

/// Jump reweighting kernel of the candidate density, (1 + pi . x)^(p-1).
pub fn girsanov_jump_kernel(pi: &DVector<f64>, x: &DVector<f64>, p: f64) -> f64 {
    (1.0 + pi.dot(x)).powf(p - 1.0)
}

/// Analyze the candidate dual measure at a solved optimum. Requires the
/// terminal-wealth-only problem on an unconstrained portfolio set: with
/// running consumption or an explicit constraint the density construction
/// below is not the right object.
pub fn analyze_q_measure(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    solution: &PortfolioSolution,
) -> Result<QMeasureReport> {
    if problem.consumption {
        return Err(Error::PreconditionFailed(
            "dual-measure analysis applies to the terminal-wealth problem only".into(),
        ));
    }
    if !matches!(problem.constraints, ConstraintSet::Whole { .. }) {
        return Err(Error::PreconditionFailed(
            "dual-measure analysis needs an unconstrained portfolio set".into(),
        ));
    }
    if !solution.finite_value || !solution.maximizer_attained {
        return Err(Error::PreconditionFailed(
            "dual-measure analysis needs an attained finite optimum".into(),
        ));
    }

    let p = problem.p;
    let pi = &solution.pi_hat;
    let mut warnings = Vec::new();

    let dir0 = eval_directional(&DVector::zeros(triplet.dim()), pi, triplet, p, &problem.tol)?;
    let exists = dir0.abs() <= EXISTENCE_TOL;
    let marginal = dir0.abs() > EXISTENCE_TOL / 100.0 && dir0.abs() <= EXISTENCE_TOL * 100.0;

    let girsanov_continuous = pi * (p - 1.0);

    // The reweighted triplet is only meaningful when the optimum stays
    // strictly clear of the ruin boundary; a contact sends the jump kernel
    // to infinity on part of the support.
    let (triplet_under_q, martingale_residuals) =
        if in_strict_budget_set(&triplet.jumps, pi, problem.tol.geometry) {
            let tq = reweighted_triplet(triplet, pi, p, &problem.tol)?;
            let residuals = match q_drift_residuals(&tq) {
                Ok(r) => Some(r),
                Err(Error::TailDivergence(msg)) => {
                    warnings.push(format!(
                        "martingale residuals unavailable: first jump moment diverges \
                         under the candidate measure ({msg})"
                    ));
                    None
                }
                Err(e) => return Err(e),
            };
            (Some(tq), residuals)
        } else {
            warnings.push(
                "candidate density contacts the ruin boundary at the optimum; \
                 the reweighted market is not defined"
                    .into(),
            );
            (None, None)
        };

    Ok(QMeasureReport {
        q: p / (p - 1.0),
        exists,
        marginal,
        directional_at_zero: dir0,
        girsanov_continuous,
        triplet_under_q,
        martingale_residuals,
        warnings,
    })
}

/// The market triplet under the candidate measure: drift picks up the
/// Girsanov correction plus the cutoff-weighted jump reweighting, the
/// quadratic part is unchanged, and the jump measure gains the density
/// (1 + pi . x)^(p-1).
fn reweighted_triplet(
    triplet: &LevyTriplet,
    pi: &DVector<f64>,
    p: f64,
    tol: &crate::levy_model::Tolerances,
) -> Result<LevyTriplet> {
    let mut b = &triplet.b + (p - 1.0) * (&triplet.c * pi);
    for a in &triplet.jumps.atoms {
        b += cutoff(&a.x) * (a.lambda * (girsanov_jump_kernel(pi, &a.x, p) - 1.0));
    }
    let mut jumps = triplet.jumps.clone();
    let mut parts_q = Vec::with_capacity(triplet.jumps.parts.len());
    for part in &triplet.jumps.parts {
        // Only the exposure along the ray matters; a floating-point remnant
        // of a genuinely zero exposure would flip the kernel's sign far out
        // on an unbounded support, so snap it away.
        let w = pi.dot(&part.dir);
        let pi_eff = if w.abs() <= 1e-12 * (1.0 + pi.norm() * part.dir.norm()) {
            pi - &part.dir * (w / part.dir.norm_squared())
        } else {
            pi.clone()
        };
        // The cutoff restricts the drift correction to the unit ball, where
        // the kernel is safely positive for any budget-feasible optimum.
        for j in 0..triplet.dim() {
            let (v, _) = part.integrate_inside_unit_ball(
                |x, _| x[j] * (girsanov_jump_kernel(&pi_eff, x, p) - 1.0),
                &[],
                Some(tol.quad_rel),
            )?;
            b[j] += v;
        }
        parts_q.push(part.reweighted(&pi_eff, p - 1.0)?);
    }
    jumps.atoms = jumps
        .atoms
        .iter()
        .map(|a| crate::levy_model::JumpAtom {
            x: a.x.clone(),
            lambda: a.lambda * girsanov_jump_kernel(pi, &a.x, p),
        })
        .collect();
    jumps.parts = parts_q;
    Ok(LevyTriplet { b, c: triplet.c.clone(), jumps })
}

/// Drift of each asset under the candidate measure relative to the plain
/// (uncompensated) jump integral: b_Q + int (x - h(x)) dF_Q. The integrand
/// vanishes inside the unit ball, so only unbounded supports contribute;
/// a power tail under the reweighted measure must decay faster than the
/// first moment for the integral to exist.
fn q_drift_residuals(tq: &LevyTriplet) -> Result<DVector<f64>> {
    let d = tq.dim();
    let mut r = tq.b.clone();
    for a in &tq.jumps.atoms {
        r += (&a.x - cutoff(&a.x)) * a.lambda;
    }
    for part in &tq.jumps.parts {
        let splits = [1.0 / part.dir.norm(), -1.0 / part.dir.norm()];
        for j in 0..d {
            let (v, _) = part.integrate(|x, _| x[j] - cutoff(x)[j], 1.0, &splits, None)?;
            r[j] += v;
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{
        DensityPart, DensityProfile, JumpAtom, JumpMeasure, QuadSpec, TailModel, Tolerances,
    };
    use crate::optimizer::maximize;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn unconstrained(p: f64, consumption: bool, dim: usize) -> ProblemSpec {
        ProblemSpec {
            p,
            consumption,
            horizon: 1.0,
            x0: 1.0,
            constraints: ConstraintSet::Whole { dim },
            tol: Tolerances::default(),
        }
    }

    #[test]
    fn diffusion_market_measure_exists_with_zero_drift() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.08]),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure::default(),
        };
        let prob = unconstrained(0.5, false, 1);
        let sol = maximize(&t, &prob).unwrap();
        let rep = analyze_q_measure(&t, &prob, &sol).unwrap();
        assert!(rep.exists);
        assert!(!rep.marginal);
        assert_relative_eq!(rep.q, -1.0, max_relative = 1e-12);
        // (p - 1) pi_hat = -0.5 * 4
        assert_relative_eq!(rep.girsanov_continuous[0], -2.0, max_relative = 1e-7);
        let tq = rep.triplet_under_q.as_ref().unwrap();
        // b_Q = b + (p-1) c pi = 0.08 - 0.5 * 0.04 * 4 = 0
        assert!(tq.b[0].abs() < 1e-10);
        let res = rep.martingale_residuals.as_ref().unwrap();
        assert!(res[0].abs() < 1e-10, "martingale residual {}", res[0]);
    }

    #[test]
    fn jump_market_reweights_intensity_exactly() {
        // single up-jump of 0.5 at rate 1, drift 0.1: the optimum is at
        // 1.125 and the reweighted intensity is (1 + 1.125/2)^(-1/2) = 0.8.
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.1]),
            c: DMatrix::zeros(1, 1),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[0.5]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        let prob = unconstrained(0.5, false, 1);
        let sol = maximize(&t, &prob).unwrap();
        let rep = analyze_q_measure(&t, &prob, &sol).unwrap();
        assert!(rep.exists);
        let tq = rep.triplet_under_q.as_ref().unwrap();
        assert_relative_eq!(tq.jumps.atoms[0].lambda, 0.8, max_relative = 1e-7);
        // b_Q = 0.1 + 0.5 * (0.8 - 1) = 0, and the jump sits inside the
        // unit ball so the residual is b_Q itself.
        let res = rep.martingale_residuals.as_ref().unwrap();
        assert!(res[0].abs() < 1e-9, "residual {}", res[0]);
    }

    #[test]
    fn budget_boundary_optimum_has_no_measure() {
        // drift strong enough that the argmax sits on the ruin boundary:
        // jumps concentrated on [-0.5, -0.3] with density vanishing at
        // -0.5 cap holdings at 2, and the slope there still points out.
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
        let prob = unconstrained(0.5, false, 1);
        let sol = maximize(&t, &prob).unwrap();
        assert_relative_eq!(sol.pi_hat[0], 2.0, max_relative = 1e-5);
        let rep = analyze_q_measure(&t, &prob, &sol).unwrap();
        assert!(!rep.exists);
        assert!(rep.directional_at_zero < -1e-3);
        // the contact is massless, so the reweighted market still exists as
        // a measure -- it just fails the martingale property.
        let res = rep.martingale_residuals.as_ref().unwrap();
        assert!(res[0].abs() > 1e-3, "residual should expose the failure, got {}", res[0]);
    }

    #[test]
    fn atom_contact_portfolio_has_no_reweighted_market() {
        // An externally supplied portfolio sitting exactly on an atom's
        // ruin contact: the jump kernel is infinite with positive mass.
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.5]),
            c: DMatrix::zeros(1, 1),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[-1.0]), lambda: 0.4 }],
                parts: vec![],
            },
        };
        let prob = unconstrained(0.5, false, 1);
        let mut sol = maximize(&t, &prob).unwrap();
        assert!(sol.pi_hat[0] < 1.0 - 1e-6);
        sol.pi_hat = DVector::from_row_slice(&[1.0]);
        let rep = analyze_q_measure(&t, &prob, &sol).unwrap();
        assert!(rep.triplet_under_q.is_none());
        assert!(rep.martingale_residuals.is_none());
        assert!(rep.warnings.iter().any(|w| w.contains("ruin boundary")));
    }

    #[test]
    fn heavy_two_sided_tails_defeat_the_moment_check() {
        // two-sided power tails force the zero portfolio; under it the
        // candidate measure is the original one, whose first jump moment
        // diverges.
        let part = |sign: f64| {
            DensityPart::new(
                DVector::from_row_slice(&[sign]),
                1.0,
                f64::INFINITY,
                DensityProfile::Pareto { alpha: 0.8 },
                0.1,
                Some(TailModel::Power { alpha: 0.8 }),
                QuadSpec::default(),
            )
            .unwrap()
        };
        let t = LevyTriplet {
            b: DVector::zeros(1),
            c: DMatrix::zeros(1, 1),
            jumps: JumpMeasure { atoms: vec![], parts: vec![part(1.0), part(-1.0)] },
        };
        let prob = unconstrained(0.5, false, 1);
        let sol = maximize(&t, &prob).unwrap();
        assert!(sol.pi_hat[0].abs() < 1e-9);
        let rep = analyze_q_measure(&t, &prob, &sol).unwrap();
        assert!(rep.triplet_under_q.is_some());
        assert!(rep.martingale_residuals.is_none());
        assert!(rep.warnings.iter().any(|w| w.contains("diverges")));
    }

    #[test]
    fn consumption_and_constraints_are_rejected() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.08]),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure::default(),
        };
        let consuming = unconstrained(0.5, true, 1);
        let sol = maximize(&t, &consuming).unwrap();
        assert!(matches!(
            analyze_q_measure(&t, &consuming, &sol),
            Err(Error::PreconditionFailed(_))
        ));
        let boxed = ProblemSpec {
            constraints: ConstraintSet::Box {
                lo: DVector::from_row_slice(&[0.0]),
                hi: DVector::from_row_slice(&[1.0]),
            },
            ..unconstrained(0.5, false, 1)
        };
        let sol = maximize(&t, &boxed).unwrap();
        assert!(matches!(
            analyze_q_measure(&t, &boxed, &sol),
            Err(Error::PreconditionFailed(_))
        ));
    }
}
