//! Randomized checks of the structural guarantees: concavity, null
//! directions, budget-set geometry, scaling laws, and the transform's
//! postconditions. Markets here are atom-only so every case evaluates in
//! closed form; the quadrature path gets its randomized coverage from the
//! finite-difference and concavity sweeps in the acceptance suite.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use levy_core::constraint_geometry::{
    in_budget_set, in_strict_budget_set, nuip_check, null_space, project_onto_null_complement,
    ConstraintSet, NuipVerdict,
};
use levy_core::g_objective::eval_g;
use levy_core::levy_model::{
    pth_moment_finite, JumpAtom, JumpMeasure, LevyTriplet, Tolerances,
};
use levy_core::model_file::parse_model;
use levy_core::solution_curves::build_curves;
use levy_core::transform::build_transform;

fn one_asset(b: f64, c: f64, mark: f64, lambda: f64) -> LevyTriplet {
    LevyTriplet {
        b: DVector::from_row_slice(&[b]),
        c: DMatrix::from_row_slice(1, 1, &[c]),
        jumps: JumpMeasure {
            atoms: vec![JumpAtom { x: DVector::from_row_slice(&[mark]), lambda }],
            parts: vec![],
        },
    }
}

/// Interval of exposures keeping 1 + y * mark comfortably positive.
fn safe_exposures(mark: f64) -> (f64, f64) {
    let lo = if mark > 0.0 { -0.95 / mark } else { -4.0 };
    let hi = if mark < 0.0 { 0.95 / -mark } else { 4.0 };
    (lo.max(-4.0), hi.min(4.0))
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![-3.0f64..-0.1, 0.05f64..0.95]
}

fn jump_mark() -> impl Strategy<Value = f64> {
    prop_oneof![-0.95f64..-0.05, 0.05f64..2.0]
}

proptest! {
    #[test]
    fn criterion_is_concave_between_any_two_exposures(
        b in -0.5f64..0.5,
        c in 0.0f64..0.25,
        mark in jump_mark(),
        lambda in 0.01f64..2.0,
        p in exponent(),
        u1 in 0.0f64..1.0,
        u2 in 0.0f64..1.0,
        w in 0.01f64..0.99,
    ) {
        let t = one_asset(b, c, mark, lambda);
        let tol = Tolerances::default();
        let (lo, hi) = safe_exposures(mark);
        let y1 = lo + u1 * (hi - lo);
        let y2 = lo + u2 * (hi - lo);
        let at = |y: f64| eval_g(&DVector::from_row_slice(&[y]), &t, p, &tol).unwrap().value;
        let chord = w * at(y1) + (1.0 - w) * at(y2);
        let mid = at(w * y1 + (1.0 - w) * y2);
        prop_assert!(
            mid >= chord - 1e-9,
            "g({}) = {mid} under the chord {chord}", w * y1 + (1.0 - w) * y2
        );
    }

    #[test]
    fn null_directions_never_move_the_criterion(
        b in -0.5f64..0.5,
        c in 0.0f64..0.25,
        mark in jump_mark(),
        lambda in 0.01f64..2.0,
        p in exponent(),
        u in 0.0f64..1.0,
        split in -2.0f64..2.0,
        alpha in -2.0f64..2.0,
    ) {
        // the same asset listed twice: (1, -1) moves between the copies
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[b, b]),
            c: DMatrix::from_row_slice(2, 2, &[c, c, c, c]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[mark, mark]), lambda }],
                parts: vec![],
            },
        };
        let tol = Tolerances::default();
        let (lo, hi) = safe_exposures(mark);
        let total = lo + u * (hi - lo);
        let y = DVector::from_row_slice(&[total / 2.0 + split, total / 2.0 - split]);
        let shifted = &y + DVector::from_row_slice(&[alpha, -alpha]);
        let g0 = eval_g(&y, &t, p, &tol).unwrap().value;
        let g1 = eval_g(&shifted, &t, p, &tol).unwrap().value;
        prop_assert!(
            (g0 - g1).abs() <= 1e-9 * (1.0 + g0.abs()),
            "null shift moved the criterion from {g0} to {g1}"
        );
    }

    #[test]
    fn null_complement_projection_is_idempotent(
        b in -0.5f64..0.5,
        c in 0.0f64..0.25,
        mark in jump_mark(),
        lambda in 0.01f64..2.0,
        y1 in -5.0f64..5.0,
        y2 in -5.0f64..5.0,
        duplicated in proptest::bool::ANY,
    ) {
        // the duplicated market has a one-dimensional null space, the
        // generic market has none; idempotence must hold either way
        let t = if duplicated {
            LevyTriplet {
                b: DVector::from_row_slice(&[b, b]),
                c: DMatrix::from_row_slice(2, 2, &[c, c, c, c]),
                jumps: JumpMeasure {
                    atoms: vec![JumpAtom { x: DVector::from_row_slice(&[mark, mark]), lambda }],
                    parts: vec![],
                },
            }
        } else {
            LevyTriplet {
                b: DVector::from_row_slice(&[b, -0.3]),
                c: DMatrix::from_row_slice(2, 2, &[c + 0.1, 0.0, 0.0, 0.2]),
                jumps: JumpMeasure {
                    atoms: vec![JumpAtom { x: DVector::from_row_slice(&[mark, 0.0]), lambda }],
                    parts: vec![],
                },
            }
        };
        let basis = null_space(&t, Tolerances::default().geometry);
        prop_assert_eq!(basis.len(), usize::from(duplicated));
        let y = DVector::from_row_slice(&[y1, y2]);
        let once = project_onto_null_complement(&y, &basis);
        let twice = project_onto_null_complement(&once, &basis);
        prop_assert!((&once - &twice).amax() <= 1e-12, "projection moved on the second pass");
    }

    #[test]
    fn compact_constraints_never_flag_a_free_lunch(
        b in -1.0f64..1.0,
        mark in prop_oneof![0.05f64..2.0, -0.95f64..-0.05],
        lambda in 0.01f64..2.0,
        lo in -2.0f64..0.0,
        hi in 0.0f64..2.0,
    ) {
        // even a pure-trend market (the unconstrained free lunch) is safe
        // once exposure is capped
        let t = one_asset(b, 0.0, mark, lambda);
        let set = ConstraintSet::Box {
            lo: DVector::from_row_slice(&[lo]),
            hi: DVector::from_row_slice(&[hi]),
        };
        let verdict = nuip_check(&t, &set, Tolerances::default().geometry).unwrap();
        prop_assert!(matches!(verdict, NuipVerdict::Holds), "got {:?}", verdict);
    }

    #[test]
    fn budget_set_is_convex_and_scales_into_its_interior(
        mark1 in jump_mark(),
        mark2 in jump_mark(),
        u1 in 0.0f64..1.0,
        u2 in 0.0f64..1.0,
        w in 0.0f64..1.0,
        s in 0.01f64..0.99,
    ) {
        let jumps = JumpMeasure {
            atoms: vec![
                JumpAtom { x: DVector::from_row_slice(&[mark1]), lambda: 0.5 },
                JumpAtom { x: DVector::from_row_slice(&[mark2]), lambda: 0.5 },
            ],
            parts: vec![],
        };
        let tol = Tolerances::default().geometry;
        let (lo1, hi1) = safe_exposures(mark1);
        let (lo2, hi2) = safe_exposures(mark2);
        let (lo, hi) = (lo1.max(lo2), hi1.min(hi2));
        prop_assume!(lo < hi);
        let y1 = DVector::from_row_slice(&[lo + u1 * (hi - lo)]);
        let y2 = DVector::from_row_slice(&[lo + u2 * (hi - lo)]);
        prop_assert!(in_budget_set(&jumps, &y1, tol));
        prop_assert!(in_budget_set(&jumps, &y2, tol));
        let between = &y1 * w + &y2 * (1.0 - w);
        prop_assert!(in_budget_set(&jumps, &between, tol), "convex combination left the budget set");
        prop_assert!(
            in_strict_budget_set(&jumps, &(&between * s), tol),
            "scaling by {s} did not reach the strict interior"
        );
    }

    #[test]
    fn initial_capital_scales_out_of_the_value(
        g_star in -2.0f64..2.0,
        p in exponent(),
        delta in proptest::bool::ANY,
        horizon in 0.1f64..3.0,
        x0 in 0.1f64..10.0,
        lam in 0.1f64..10.0,
    ) {
        let base = build_curves(g_star, p, delta, horizon, x0).unwrap();
        let scaled = build_curves(g_star, p, delta, horizon, lam * x0).unwrap();
        let expect = lam.powf(p) * base.utility_at_start();
        let got = scaled.utility_at_start();
        prop_assert!(
            (got - expect).abs() <= 1e-12 * expect.abs(),
            "u({lam} x0) = {got}, expected {expect}"
        );
    }

    #[test]
    fn curves_respect_their_terminal_contract(
        g_star in -2.0f64..2.0,
        p in exponent(),
        delta in proptest::bool::ANY,
        horizon in 0.1f64..3.0,
    ) {
        let curves = build_curves(g_star, p, delta, horizon, 1.0).unwrap();
        prop_assert!((curves.ell(horizon) - 1.0).abs() <= 1e-12);
        if delta {
            let k = curves.kappa(horizon).unwrap();
            prop_assert!((k - 1.0).abs() <= 1e-12, "kappa(T) = {k}");
        } else {
            prop_assert!(curves.kappa(horizon).is_none());
        }
        for i in 0..=20 {
            let t = horizon * i as f64 / 20.0;
            prop_assert!(curves.ell(t) > 0.0, "ell({t}) not positive");
            if delta {
                prop_assert!(curves.kappa(t).unwrap() > 0.0, "kappa({t}) not positive");
            }
        }
    }

    #[test]
    fn transform_leaves_every_asset_tradable(
        b in -0.3f64..0.5,
        c in 0.0f64..0.1,
        lambda in 0.1f64..1.0,
        cap in 0.5f64..3.0,
        p in exponent(),
        uz in 0.01f64..0.99,
    ) {
        // a total-loss atom: holding one unit of the raw asset risks ruin
        let t = one_asset(b, c, -1.0, lambda);
        let problem = levy_core::levy_model::ProblemSpec {
            p,
            consumption: false,
            horizon: 1.0,
            x0: 1.0,
            constraints: ConstraintSet::Box {
                lo: DVector::from_row_slice(&[0.0]),
                hi: DVector::from_row_slice(&[cap]),
            },
            tol: Tolerances::default(),
        };
        let tol = problem.tol.geometry;
        let tr = build_transform(&t, &problem).unwrap();

        // the replacement asset survives its own worst jump and is holdable
        let e1 = DVector::from_row_slice(&[1.0]);
        prop_assert!(in_strict_budget_set(&tr.triplet.jumps, &e1, tol));
        prop_assert!(tr.constraints.contains(&e1, tol).unwrap());

        // admissible holdings (inside the transformed constraint set AND its
        // strict budget set) map back to admissible original exposures
        let z_hi = cap / tr.lambda[(0, 0)];
        let z = DVector::from_row_slice(&[uz * z_hi]);
        prop_assume!(tr.constraints.contains(&z, tol).unwrap());
        prop_assume!(in_strict_budget_set(&tr.triplet.jumps, &z, tol));
        let pi = tr.to_original_portfolio(&z);
        prop_assert!(problem.constraints.contains(&pi, tol).unwrap());
        prop_assert!(in_strict_budget_set(&t.jumps, &pi, tol));
    }
}

proptest! {
    // each case parses a model and runs tail quadrature, so fewer of them
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_tail_moment_verdicts_are_monotone(
        alpha in 0.1f64..1.5,
        pa in 0.05f64..0.95,
        pb in 0.05f64..0.95,
    ) {
        let (p_low, p_high) = (pa.min(pb), pa.max(pb));
        // stay clear of the decision boundary, where either verdict is fair
        prop_assume!((p_low - alpha).abs() > 0.02 && (p_high - alpha).abs() > 0.02);
        let model = |p: f64| {
            let text = format!(
                "[triplet]\nb = [0.05]\nc = [[0.04]]\n\n\
                 [[density]]\nkind = \"pareto\"\nsupport = [1.0, inf]\nmass = 0.2\nalpha = {alpha}\n\
                 tail = {{ kind = \"power\", alpha = {alpha} }}\n\n\
                 [problem]\np = {p}\ndelta = 0\nT = 1.0\nx0 = 1.0\n"
            );
            parse_model(&text).unwrap().0
        };
        let fine_high = pth_moment_finite(&model(p_high), p_high).unwrap();
        let fine_low = pth_moment_finite(&model(p_low), p_low).unwrap();
        prop_assert_eq!(fine_high, p_high < alpha);
        prop_assert_eq!(fine_low, p_low < alpha);
        if fine_high {
            prop_assert!(fine_low, "finite at {p_high} but not at the smaller {p_low}");
        }
    }
}
