//! The deterministic concave criterion behind the optimal portfolio: a
//! quadratic drift/covariance part plus a jump integral of power-utility
//! kernels. Its maximizers over the constraint set are exactly the optimal
//! fractions of wealth per asset; the directional form at the maximizer
//! feeds the measure analysis.
//!
//! Values live on the extended real line. For p < 0 the function drops to
//! -inf where the portfolio admits (near-)ruinous jumps with too much mass;
//! for 0 < p < 1 heavy upside tails can push it to +inf. Both are detected
//! from the support and tail annotations before quadrature runs, so an
//! infinite value is an exact verdict rather than an overflow.

use crate::constraint_geometry::in_budget_set;
use crate::levy_model::{DensityPart, DensityProfile, LevyTriplet, TailModel, Tolerances};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Evaluation of the criterion at one portfolio.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GValue {
    /// Criterion value; may be -inf (p < 0) or +inf (0 < p < 1).
    pub value: f64,
    /// Accumulated quadrature error estimate (0 for atom-only models).
    pub quad_error: f64,
    /// Some jump in the support can wipe out wealth exactly (1 + y.x = 0).
    pub boundary_contact: bool,
    /// The value is +inf because an upside tail outweighs its decay.
    pub divergent_tail: bool,
}

/// Power-utility jump kernel: (1/p)((1+s)^p - 1) - s * [inside unit ball],
/// where s = y.x. Stable for tiny s via expm1/ln_1p; s = -1 lands on the
/// correct extended-real limit automatically.
fn utility_kernel(s: f64, p: f64, inside: bool) -> f64 {
    let s = s.max(-1.0);
    let pow_term = (p * s.ln_1p()).exp_m1() / p;
    if inside {
        pow_term - s
    } else {
        pow_term
    }
}

/// Derivative kernel: (1+s)^(p-1) - [inside unit ball], multiplying x.
fn derivative_kernel(s: f64, p: f64, inside: bool) -> f64 {
    let s = s.max(-1.0);
    let w = ((p - 1.0) * s.ln_1p()).exp();
    if inside {
        w - 1.0
    } else {
        w
    }
}

/// Forced quadrature breaks for a part against portfolio y: the cutoff
/// sphere crossings and the ruin boundary 1 + t (y.dir) = 0.
fn part_splits(part: &DensityPart, y: &DVector<f64>) -> Vec<f64> {
    let mut splits = Vec::new();
    let r = 1.0 / part.dir.norm();
    splits.push(r);
    splits.push(-r);
    let s = y.dot(&part.dir);
    if s != 0.0 {
        splits.push(-1.0 / s);
    }
    splits
}

/// Where the portfolio touches the ruin boundary on the jump support.
enum Contact {
    None,
    /// An atom sits exactly at 1 + y.x = 0; positive mass of ruin.
    Atom,
    /// A density part touches it; `exponent` is the local vanishing order
    /// of the density at the contact point (0 for non-vanishing).
    Part { exponent: f64 },
}

fn find_contact(triplet: &LevyTriplet, y: &DVector<f64>, tol: f64) -> Contact {
    for a in &triplet.jumps.atoms {
        if (1.0 + y.dot(&a.x)).abs() <= tol {
            return Contact::Atom;
        }
    }
    let mut worst: Option<f64> = None;
    for part in &triplet.jumps.parts {
        let s = y.dot(&part.dir);
        if s.abs() <= tol {
            continue;
        }
        let t_star = -1.0 / s;
        if t_star >= part.t_lo - tol && (part.t_hi.is_infinite() || t_star <= part.t_hi + tol) {
            let e = match part.profile {
                DensityProfile::ShiftedPower { shift, power } if (t_star - shift).abs() <= tol => power,
                _ => 0.0,
            };
            worst = Some(worst.map_or(e, |w: f64| w.min(e)));
        }
    }
    match worst {
        Some(exponent) => Contact::Part { exponent },
        None => Contact::None,
    }
}

/// Does an unbounded part make the criterion +inf at y (0 < p < 1 only)?
fn tail_blows_up(triplet: &LevyTriplet, y: &DVector<f64>, p: f64, tol: f64) -> Result<bool> {
    if p <= 0.0 {
        return Ok(false);
    }
    for part in &triplet.jumps.parts {
        if part.t_hi.is_finite() || y.dot(&part.dir) <= tol {
            continue;
        }
        match part.tail {
            Some(TailModel::Power { alpha }) => {
                if alpha <= p {
                    return Ok(true);
                }
            }
            Some(TailModel::Exponential { .. }) => {}
            None => {
                return Err(Error::UnboundedSupportWithoutTailModel(
                    "criterion tail on an unannotated unbounded density part".into(),
                ))
            }
        }
    }
    Ok(false)
}

/// Evaluate the criterion at y. Requires y in the closed budget set.
pub fn eval_g(y: &DVector<f64>, triplet: &LevyTriplet, p: f64, tol: &Tolerances) -> Result<GValue> {
    if !in_budget_set(&triplet.jumps, y, tol.geometry) {
        return Err(Error::Domain(format!(
            "portfolio {:?} admits wealth-destroying jumps (outside the budget set)",
            y.as_slice()
        )));
    }
    let quadratic = y.dot(&triplet.b) + 0.5 * (p - 1.0) * (&triplet.c * y).dot(y);
    let contact = find_contact(triplet, y, tol.geometry);
    let mut out = GValue {
        value: quadratic,
        quad_error: 0.0,
        boundary_contact: !matches!(contact, Contact::None),
        divergent_tail: false,
    };

    if p < 0.0 {
        match contact {
            Contact::Atom => {
                out.value = f64::NEG_INFINITY;
                return Ok(out);
            }
            // Kernel ~ w^p near the contact against density ~ w^exponent:
            // diverges unless p + exponent > -1.
            Contact::Part { exponent } if p + exponent <= -1.0 => {
                out.value = f64::NEG_INFINITY;
                return Ok(out);
            }
            _ => {}
        }
    } else if tail_blows_up(triplet, y, p, tol.geometry)? {
        out.value = f64::INFINITY;
        out.divergent_tail = true;
        return Ok(out);
    }

    for a in &triplet.jumps.atoms {
        let s = y.dot(&a.x);
        let inside = a.x.norm() <= 1.0;
        out.value += a.lambda * utility_kernel(s, p, inside);
    }
    for part in &triplet.jumps.parts {
        if zero_exposure(y, &part.dir) {
            // y.x vanishes identically on this part, so does the kernel.
            continue;
        }
        let splits = part_splits(part, y);
        let growth = if p > 0.0 { p } else { 0.0 };
        let (v, e) = part.integrate(
            |x, _| utility_kernel(y.dot(x), p, x.norm() <= 1.0),
            growth,
            &splits,
            Some(tol.quad_rel),
        )?;
        out.value += v;
        out.quad_error += e;
    }
    Ok(out)
}

/// Is y.x identically zero (to roundoff) along the part's ray? Such parts
/// drop out of the criterion but still carry outside-ball mass that shows
/// up in gradients.
fn zero_exposure(y: &DVector<f64>, dir: &DVector<f64>) -> bool {
    y.dot(dir).abs() <= 1e-13 * (y.norm() * dir.norm()).max(1.0)
}

/// Gradient of the criterion at y. Entries can be infinite at boundary
/// contacts (the p < 0 barrier effect); callers must guard.
pub fn eval_grad_g(
    y: &DVector<f64>,
    triplet: &LevyTriplet,
    p: f64,
    tol: &Tolerances,
) -> Result<DVector<f64>> {
    if !in_budget_set(&triplet.jumps, y, tol.geometry) {
        return Err(Error::Domain("gradient requested outside the budget set".into()));
    }
    let d = triplet.dim();
    let mut grad = &triplet.b + &triplet.c * y * (p - 1.0);

    let contact = find_contact(triplet, y, tol.geometry);
    // Derivative kernel ~ w^(p-1) at a contact; with local density order k
    // the integral diverges when (p-1) + k <= -1.
    let grad_diverges = match contact {
        Contact::Atom => true,
        Contact::Part { exponent } => p - 1.0 + exponent <= -1.0,
        Contact::None => false,
    };
    if grad_diverges {
        // The one-sided slope toward the boundary is -inf along the contact
        // jump direction. Build the signed infinite gradient explicitly.
        let mut inf_dir = DVector::zeros(d);
        for a in &triplet.jumps.atoms {
            if (1.0 + y.dot(&a.x)).abs() <= tol.geometry {
                inf_dir += &a.x;
            }
        }
        for part in &triplet.jumps.parts {
            let s = y.dot(&part.dir);
            if s.abs() <= tol.geometry {
                continue;
            }
            let t_star = -1.0 / s;
            if t_star >= part.t_lo - tol.geometry
                && (part.t_hi.is_infinite() || t_star <= part.t_hi + tol.geometry)
            {
                inf_dir += part.point(t_star);
            }
        }
        for j in 0..d {
            if inf_dir[j].abs() > tol.geometry {
                grad[j] = f64::INFINITY * inf_dir[j].signum();
            }
        }
        return Ok(grad);
    }

    for a in &triplet.jumps.atoms {
        let s = y.dot(&a.x);
        let k = derivative_kernel(s, p, a.x.norm() <= 1.0);
        grad += &a.x * (a.lambda * k);
    }
    for part in &triplet.jumps.parts {
        let splits = part_splits(part, y);
        let flat = zero_exposure(y, &part.dir);
        for j in 0..d {
            if part.dir[j] == 0.0 {
                continue;
            }
            let res = if flat {
                // Kernel reduces to the outside-ball indicator.
                part.integrate(
                    |x, _| if x.norm() > 1.0 { x[j] } else { 0.0 },
                    1.0,
                    &splits,
                    Some(tol.quad_rel),
                )
            } else {
                part.integrate(
                    |x, _| {
                        let s = y.dot(x);
                        // Rounding can push a node across the ruin contact
                        // (a single t, carrying no mass): drop it rather
                        // than let the kernel blow up there.
                        if s <= -1.0 {
                            return 0.0;
                        }
                        x[j] * derivative_kernel(s, p, x.norm() <= 1.0)
                    },
                    p,
                    &splits,
                    Some(tol.quad_rel),
                )
            };
            match res {
                Ok((v, _)) => grad[j] += v,
                // Genuinely divergent tail moment: the slope toward the
                // heavy side is +inf in that component.
                Err(Error::TailDivergence(_)) => grad[j] = f64::INFINITY * part.dir[j].signum(),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(grad)
}

/// Directional criterion: the derivative of g at y in the direction
/// (y_target - y), written as its own integral so it stays meaningful where
/// the gradient itself is infinite componentwise. Requires g(y) > -inf.
pub fn eval_directional(
    y_target: &DVector<f64>,
    y: &DVector<f64>,
    triplet: &LevyTriplet,
    p: f64,
    tol: &Tolerances,
) -> Result<f64> {
    if !in_budget_set(&triplet.jumps, y, tol.geometry) {
        return Err(Error::Domain("directional derivative needs y in the budget set".into()));
    }
    let u = y_target - y;
    let mut total = u.dot(&triplet.b) + (p - 1.0) * (&triplet.c * y).dot(&u);
    for a in &triplet.jumps.atoms {
        let s = y.dot(&a.x);
        let su = u.dot(&a.x);
        let k = derivative_kernel(s, p, a.x.norm() <= 1.0);
        let term = a.lambda * su * k;
        total += term;
        if !total.is_finite() {
            return Ok(total); // signed infinity from an exact-ruin atom
        }
    }
    for part in &triplet.jumps.parts {
        if zero_exposure(&u, &part.dir) {
            // u.x vanishes along the part: no contribution.
            continue;
        }
        let splits = part_splits(part, y);
        let res = if zero_exposure(y, &part.dir) {
            part.integrate(
                |x, _| if x.norm() > 1.0 { u.dot(x) } else { 0.0 },
                1.0,
                &splits,
                Some(tol.quad_rel),
            )
        } else {
            part.integrate(
                |x, _| {
                    let s = y.dot(x);
                    // Same measure-zero contact guard as in the gradient.
                    if s <= -1.0 {
                        return 0.0;
                    }
                    u.dot(x) * derivative_kernel(s, p, x.norm() <= 1.0)
                },
                p,
                &splits,
                Some(tol.quad_rel),
            )
        };
        match res {
            Ok((v, _)) => total += v,
            // The heavy tail dominates; the sign is that of the direction's
            // exposure to it.
            Err(Error::TailDivergence(_)) => {
                total += f64::INFINITY * u.dot(&part.dir).signum();
            }
            Err(e) => return Err(e),
        }
    }
    if total.is_nan() {
        return Err(Error::Domain(
            "directional derivative is indeterminate (opposing infinite contributions)".into(),
        ));
    }
    Ok(total)
}

/// Hessian of the criterion at y; finite only away from contacts.
pub fn eval_hessian(
    y: &DVector<f64>,
    triplet: &LevyTriplet,
    p: f64,
    tol: &Tolerances,
) -> Result<DMatrix<f64>> {
    if !matches!(find_contact(triplet, y, tol.geometry), Contact::None) {
        return Err(Error::Domain("hessian at a ruin-boundary contact".into()));
    }
    let d = triplet.dim();
    let mut h = &triplet.c * (p - 1.0);
    for a in &triplet.jumps.atoms {
        let s = y.dot(&a.x).max(-1.0);
        let w = ((p - 2.0) * s.ln_1p()).exp();
        let coef = a.lambda * (p - 1.0) * w;
        h += &a.x * a.x.transpose() * coef;
    }
    for part in &triplet.jumps.parts {
        let splits = part_splits(part, y);
        for i in 0..d {
            for j in i..d {
                if part.dir[i] == 0.0 || part.dir[j] == 0.0 {
                    continue;
                }
                let (v, _) = part.integrate(
                    |x, _| {
                        let s = y.dot(x).max(-1.0);
                        x[i] * x[j] * (p - 1.0) * ((p - 2.0) * s.ln_1p()).exp()
                    },
                    p,
                    &splits,
                    Some(tol.quad_rel),
                )?;
                h[(i, j)] += v;
                if i != j {
                    h[(j, i)] += v;
                }
            }
        }
    }
    Ok(h)
}

/// Criterion along the segment [0, y]: values at lambda = k/n, k = 0..n.
/// The budget set is convex and contains 0, so the whole segment is inside
/// it whenever y is.
pub fn eval_g_on_segment(
    y: &DVector<f64>,
    triplet: &LevyTriplet,
    p: f64,
    n: usize,
    tol: &Tolerances,
) -> Result<Vec<(f64, GValue)>> {
    if n == 0 {
        return Err(Error::PreconditionFailed("segment needs at least one step".into()));
    }
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let lambda = k as f64 / n as f64;
        let point = y * lambda;
        out.push((lambda, eval_g(&point, triplet, p, tol)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{JumpAtom, JumpMeasure, QuadSpec};

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_row_slice(&[x])
    }

    fn diffusion() -> LevyTriplet {
        LevyTriplet {
            b: v1(0.08),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure::default(),
        }
    }

    fn compound_poisson() -> LevyTriplet {
        LevyTriplet {
            b: v1(0.1),
            c: DMatrix::from_row_slice(1, 1, &[0.0]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: v1(0.5), lambda: 1.0 }],
                parts: vec![],
            },
        }
    }

    #[test]
    fn zero_portfolio_scores_zero() {
        for t in [diffusion(), compound_poisson()] {
            let g = eval_g(&v1(0.0), &t, 0.5, &tols()).unwrap();
            assert_eq!(g.value, 0.0);
            assert!(!g.boundary_contact);
        }
    }

    #[test]
    fn diffusion_matches_quadratic_closed_form() {
        let t = diffusion();
        // p = 0.5: g(y) = 0.08 y - 0.01 y^2, so g(4) = 0.16.
        let g = eval_g(&v1(4.0), &t, 0.5, &tols()).unwrap();
        assert!((g.value - 0.16).abs() < 1e-15, "{}", g.value);
        let grad = eval_grad_g(&v1(4.0), &t, 0.5, &tols()).unwrap();
        assert!(grad[0].abs() < 1e-15, "stationary at 4, got {}", grad[0]);
    }

    #[test]
    fn compound_poisson_matches_closed_form() {
        let t = compound_poisson();
        // p = 0.5: g(y) = 0.1 y + 2 sqrt(1 + 0.5 y) - 2 - 0.5 y; g(1.125) = 0.05.
        let g = eval_g(&v1(1.125), &t, 0.5, &tols()).unwrap();
        assert!((g.value - 0.05).abs() < 1e-14, "{}", g.value);
        let grad = eval_grad_g(&v1(1.125), &t, 0.5, &tols()).unwrap();
        assert!(grad[0].abs() < 1e-14, "stationary at 1.125, got {}", grad[0]);
    }

    #[test]
    fn directional_form_vanishes_along_itself() {
        let t = compound_poisson();
        let y = v1(0.7);
        let g = eval_directional(&y, &y, &t, 0.5, &tols()).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn directional_form_matches_gradient_inner_product() {
        let t = compound_poisson();
        let y = v1(0.7);
        let target = v1(-0.4);
        let grad = eval_grad_g(&y, &t, 0.5, &tols()).unwrap();
        let expected = (target.clone() - &y).dot(&grad);
        let got = eval_directional(&target, &y, &t, 0.5, &tols()).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn atom_ruin_contact_sends_negative_p_to_minus_infinity() {
        let t = LevyTriplet {
            b: v1(0.1),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: v1(-1.0), lambda: 0.4 }],
                parts: vec![],
            },
        };
        let g = eval_g(&v1(1.0), &t, -1.0, &tols()).unwrap();
        assert_eq!(g.value, f64::NEG_INFINITY);
        assert!(g.boundary_contact);
        // For 0 < p < 1 the same point is finite: the kernel tends to -1/p.
        let g2 = eval_g(&v1(1.0), &t, 0.5, &tols()).unwrap();
        assert!(g2.value.is_finite());
        // Closed form: 0.1 - 0.25*0.04 + 0.4 * (2*(0 - 1) + 1) = 0.09 - 0.4.
        assert!((g2.value - (0.09 - 0.4)).abs() < 1e-14, "{}", g2.value);
    }

    #[test]
    fn heavy_upside_tail_reports_plus_infinity() {
        let t = LevyTriplet {
            b: v1(0.05),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure {
                atoms: vec![],
                parts: vec![crate::levy_model::DensityPart::new(
                    v1(1.0),
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
        let g = eval_g(&v1(1.0), &t, 0.5, &tols()).unwrap();
        assert_eq!(g.value, f64::INFINITY);
        assert!(g.divergent_tail);
        // At y = 0 the tail factor is constant and the value is 0.
        let g0 = eval_g(&v1(0.0), &t, 0.5, &tols()).unwrap();
        assert_eq!(g0.value, 0.0);
    }

    #[test]
    fn outside_budget_set_is_a_domain_error() {
        let t = LevyTriplet {
            b: v1(0.1),
            c: DMatrix::from_row_slice(1, 1, &[0.0]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: v1(-0.5), lambda: 1.0 }],
                parts: vec![],
            },
        };
        assert!(matches!(eval_g(&v1(2.5), &t, 0.5, &tols()), Err(Error::Domain(_))));
    }

    #[test]
    fn segment_values_are_concave_in_lambda() {
        let t = compound_poisson();
        let vals = eval_g_on_segment(&v1(1.8), &t, 0.5, 10, &tols()).unwrap();
        assert_eq!(vals.len(), 11);
        for w in vals.windows(3) {
            let (g0, g1, g2) = (w[0].1.value, w[1].1.value, w[2].1.value);
            assert!(g1 >= 0.5 * (g0 + g2) - 1e-12, "concavity broken: {g0} {g1} {g2}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_density_model() {
        let t = LevyTriplet {
            b: v1(0.1),
            c: DMatrix::from_row_slice(1, 1, &[0.0]),
            jumps: JumpMeasure {
                atoms: vec![],
                parts: vec![crate::levy_model::DensityPart::new(
                    v1(1.0),
                    -1.0,
                    -0.5,
                    DensityProfile::Uniform,
                    0.3,
                    None,
                    QuadSpec::default(),
                )
                .unwrap()],
            },
        };
        let tol = Tolerances { quad_rel: 1e-12, ..Default::default() };
        let y = v1(0.6);
        let h = 1e-5;
        let gp = eval_g(&v1(0.6 + h), &t, 0.5, &tol).unwrap().value;
        let gm = eval_g(&v1(0.6 - h), &t, 0.5, &tol).unwrap().value;
        let fd = (gp - gm) / (2.0 * h);
        let grad = eval_grad_g(&y, &t, 0.5, &tol).unwrap();
        assert!((grad[0] - fd).abs() < 1e-8, "{} vs {fd}", grad[0]);
    }
}
