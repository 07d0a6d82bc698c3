//! The `verify` subcommand: run the whole pipeline on one model and check
//! every identity that can be checked independently -- validation, the
//! free-lunch condition, first-order optimality against sampled competitors,
//! the value curves against their defining ODE, invariance under asset
//! replacement, dual-measure consistency, and the Monte Carlo martingale
//! identities. Checks that need an attained finite optimum are skipped (and
//! say so) when there is none; the run fails only when an executed check
//! contradicts the solver.

use crate::make_solve_report;
use crate::report::{vec_of, CheckRow, Estimate, Num, Outputs, SimulateReport, VerifyReport};
use anyhow::Result;
use levy_core::constraint_geometry::{in_budget_set, nuip_check, ConstraintSet, NuipVerdict};
use levy_core::g_objective::{eval_directional, eval_g};
use levy_core::levy_model::{pth_moment_finite, validate_model, LevyTriplet, ProblemSpec};
use levy_core::mc_lab::{simulate, SimConfig, TradingPolicy};
use levy_core::optimizer::{maximize, PortfolioSolution};
use levy_core::qmeasure::{analyze_q_measure, QMeasureReport};
use levy_core::solution_curves::{build_curves, SolutionCurves};
use levy_core::transform::build_transform;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::process::ExitCode;

/// Sampled competitor portfolios for the first-order optimality check.
const OPTIMALITY_SAMPLES: usize = 20;
/// Monte Carlo agreement band: this many standard errors plus a small
/// absolute allowance for the trapezoidal running integrals.
const MC_SIGMA: f64 = 4.0;
const MC_ABS: f64 = 5e-4;

struct Checks {
    rows: Vec<CheckRow>,
    failed: bool,
}

impl Checks {
    fn new() -> Self {
        Checks { rows: Vec::new(), failed: false }
    }

    fn record(&mut self, name: &str, status: &str, detail: String) {
        println!("check {name}: {} ({detail})", status.to_uppercase());
        self.rows.push(CheckRow { name: name.into(), status: status.into(), detail });
    }

    fn pass(&mut self, name: &str, detail: String) {
        self.record(name, "pass", detail);
    }

    fn fail(&mut self, name: &str, detail: String) {
        self.failed = true;
        self.record(name, "fail", detail);
    }

    fn skip(&mut self, name: &str, detail: String) {
        self.record(name, "skip", detail);
    }

    fn verdict(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            self.pass(name, detail);
        } else {
            self.fail(name, detail);
        }
    }

    /// Monte Carlo agreement: sample mean within the sigma band of target.
    fn within(&mut self, name: &str, mean: f64, se: f64, target: f64) {
        let band = MC_SIGMA * se + MC_ABS * (1.0 + target.abs());
        let ok = mean.is_finite() && (mean - target).abs() <= band;
        self.verdict(
            name,
            ok,
            format!("mean {mean:.6} vs target {target:.6} (allowed deviation {band:.2e})"),
        );
    }
}

pub fn run(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    paths: usize,
    seed: u64,
    grid: usize,
    out: &Outputs,
) -> Result<ExitCode> {
    let mut checks = Checks::new();
    let mut solve_rep = None;
    let mut sim_rep = None;

    // 1. Structural validation.
    let validation = validate_model(triplet, problem);
    if validation.is_valid() {
        checks.pass("model validation", format!("{} warnings", validation.warnings.len()));
    } else {
        checks.fail("model validation", validation.violations.join("; "));
    }

    // 2. Free-lunch condition.
    let mut free_lunch = false;
    match nuip_check(triplet, &problem.constraints, problem.tol.geometry) {
        Ok(NuipVerdict::Holds) => {
            checks.pass("free lunch", "no increasing-profit direction".into())
        }
        Ok(NuipVerdict::Violated { witness }) => {
            free_lunch = true;
            checks.fail("free lunch", format!("unbounded increasing profit along {witness:?}"));
        }
        Ok(NuipVerdict::Undecidable { reason }) => {
            checks.skip("free lunch", format!("undecidable: {reason}"));
        }
        Err(e) => checks.fail("free lunch", e.to_string()),
    }

    // 3. Criterion maximization. Everything downstream hangs off this.
    let sol = if validation.is_valid() && !free_lunch {
        match maximize(triplet, problem) {
            Ok(sol) => {
                checks.pass(
                    "criterion maximization",
                    format!(
                        "g_star = {:.9}, location {:?}, {} warnings",
                        sol.g_star,
                        sol.location,
                        sol.warnings.len()
                    ),
                );
                Some(sol)
            }
            Err(e) => {
                checks.fail("criterion maximization", e.to_string());
                None
            }
        }
    } else {
        checks.skip("criterion maximization", "model defective, nothing to solve".into());
        None
    };

    if let Some(sol) = &sol {
        solve_rep = Some(make_solve_report(triplet, problem, sol));

        // 4. Tail classification must agree with the moment condition.
        match pth_moment_finite(triplet, problem.p) {
            Ok(moment_finite) => {
                if !sol.finite_value && moment_finite {
                    checks.fail(
                        "tail classification",
                        "solver reports an infinite value but the p-th jump moment is finite"
                            .into(),
                    );
                } else {
                    let note = if sol.finite_value && !moment_finite {
                        "p-th jump moment diverges but the constraints avoid the heavy direction"
                    } else if sol.finite_value {
                        "finite value, finite p-th jump moment"
                    } else {
                        "infinite value matches a divergent p-th jump moment"
                    };
                    checks.pass("tail classification", note.into());
                }
            }
            Err(e) => checks.skip("tail classification", e.to_string()),
        }

        if sol.finite_value && sol.maximizer_attained {
            check_optimality(&mut checks, triplet, problem, sol, seed);
            let curves = check_curves(&mut checks, problem, sol);
            check_transform(&mut checks, triplet, problem, sol);
            let qrep = check_dual_measure(&mut checks, triplet, problem, sol);
            sim_rep = check_monte_carlo(
                &mut checks,
                triplet,
                problem,
                sol,
                curves,
                qrep.as_ref(),
                paths,
                seed,
                grid,
            );
        } else {
            let reason = if !sol.finite_value {
                "the problem value is infinite"
            } else {
                "no maximizer is attained (supremum only)"
            };
            for name in [
                "first-order optimality",
                "value curves vs ODE",
                "asset replacement round-trip",
                "dual measure",
                "monte carlo",
            ] {
                checks.skip(name, reason.into());
            }
        }
    }

    let ok = !checks.failed;
    let artifact = out.write_json(
        "verify.json",
        &VerifyReport { ok, checks: checks.rows, solve: solve_rep, simulation: sim_rep },
    )?;
    println!("artifact: {}", artifact.display());
    println!("verify: {}", if ok { "OK" } else { "FAILED" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// First-order optimality: the directional criterion at the optimum must be
/// nonpositive toward every sampled feasible competitor. Only meaningful for
/// convex constraint sets (on a union the optimum competes per piece).
fn check_optimality(
    checks: &mut Checks,
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    sol: &PortfolioSolution,
    seed: u64,
) {
    let name = "first-order optimality";
    if matches!(problem.constraints, ConstraintSet::Union { .. } | ConstraintSet::StarOracle { .. })
    {
        checks
            .skip(name, "non-convex constraint set: the global gap criterion does not apply".into());
        return;
    }
    let d = triplet.dim();
    let scale = 1.0 + sol.pi_hat.norm();
    let gap_tol = 1e-6 * (1.0 + sol.g_star.abs());
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x51d3);
    let mut tested = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut attempts = 0usize;
    while tested < OPTIMALITY_SAMPLES && attempts < 40 * OPTIMALITY_SAMPLES {
        attempts += 1;
        let noise: DVector<f64> =
            DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)) * (scale * 0.5);
        let candidate = &sol.pi_hat + noise;
        let projected = match problem.constraints.project(&candidate) {
            Some(y) => y,
            None => {
                checks.skip(
                    name,
                    "constraint set has no projection; cannot sample competitors".into(),
                );
                return;
            }
        };
        if !in_budget_set(&triplet.jumps, &projected, problem.tol.geometry) {
            continue;
        }
        match eval_directional(&projected, &sol.pi_hat, triplet, problem.p, &problem.tol) {
            Ok(gap) => {
                tested += 1;
                worst = worst.max(gap);
                if gap > gap_tol {
                    checks.fail(
                        name,
                        format!(
                            "competitor {:?} improves the criterion: directional gap {gap:.3e}",
                            vec_of(&projected)
                        ),
                    );
                    return;
                }
            }
            Err(_) => continue, // not evaluable there; try another sample
        }
    }
    if tested == 0 {
        checks.skip(name, "no evaluable competitor portfolios found".into());
    } else {
        checks.pass(name, format!("{tested} sampled competitors, worst gap {worst:.3e}"));
    }
}

fn check_curves(
    checks: &mut Checks,
    problem: &ProblemSpec,
    sol: &PortfolioSolution,
) -> Option<SolutionCurves> {
    let name = "value curves vs ODE";
    match build_curves(sol.g_star, problem.p, problem.consumption, problem.horizon, problem.x0) {
        Ok(curves) => {
            match curves.verify_against_ode(1e-10) {
                Ok(err) if err < 1e-8 => {
                    checks.pass(name, format!("max |closed form - integrated| = {err:.3e}"));
                }
                Ok(err) => {
                    checks.fail(name, format!("closed form deviates from the ODE by {err:.3e}"));
                }
                Err(e) => checks.fail(name, e.to_string()),
            }
            Some(curves)
        }
        Err(e) => {
            checks.fail(name, e.to_string());
            None
        }
    }
}

/// Solve the asset-replacement transform of the problem and require the same
/// optimal value, with the mapped-back optimizer attaining it.
fn check_transform(
    checks: &mut Checks,
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    sol: &PortfolioSolution,
) {
    let name = "asset replacement round-trip";
    let tr = match build_transform(triplet, problem) {
        Ok(tr) => tr,
        Err(e) => {
            checks.skip(name, e.to_string());
            return;
        }
    };
    if tr.lambda.is_identity(1e-12) {
        checks.pass(name, "identity transform (no asset touches its ruin boundary)".into());
        return;
    }
    let tp = tr.transformed_problem(problem);
    let tsol = match maximize(&tr.triplet, &tp) {
        Ok(s) => s,
        Err(e) => {
            checks.fail(name, format!("transformed problem failed to solve: {e}"));
            return;
        }
    };
    let tol = 1e-7 * (1.0 + sol.g_star.abs());
    let dv = (tsol.g_star - sol.g_star).abs();
    if dv > tol {
        checks.fail(
            name,
            format!("transformed optimum {:.10} vs original {:.10}", tsol.g_star, sol.g_star),
        );
        return;
    }
    let mapped = tr.to_original_portfolio(&tsol.pi_hat);
    match eval_g(&mapped, triplet, problem.p, &problem.tol) {
        Ok(gv) if (gv.value - sol.g_star).abs() <= tol => {
            checks
                .pass(name, format!("value agrees within {dv:.2e}; mapped-back portfolio attains it"));
        }
        Ok(gv) => checks.fail(
            name,
            format!("mapped-back portfolio scores {:.10}, expected {:.10}", gv.value, sol.g_star),
        ),
        Err(e) => checks.fail(name, format!("mapped-back portfolio not evaluable: {e}")),
    }
}

fn check_dual_measure(
    checks: &mut Checks,
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    sol: &PortfolioSolution,
) -> Option<QMeasureReport> {
    let name = "dual measure";
    if problem.consumption || !matches!(problem.constraints, ConstraintSet::Whole { .. }) {
        checks.skip(
            name,
            "dual-measure analysis applies to unconstrained terminal-wealth problems only".into(),
        );
        return None;
    }
    match analyze_q_measure(triplet, problem, sol) {
        Ok(rep) => {
            if rep.exists {
                match &rep.martingale_residuals {
                    Some(r) => {
                        let worst = r.amax();
                        let tol = 1e-5 * (1.0 + triplet.b.amax());
                        checks.verdict(
                            name,
                            worst <= tol,
                            format!("measure exists; worst martingale residual {worst:.3e}"),
                        );
                    }
                    None => checks.pass(
                        name,
                        "measure exists; residuals not computable (divergent tail integral)".into(),
                    ),
                }
            } else {
                checks.verdict(
                    name,
                    rep.directional_at_zero < 0.0,
                    format!(
                        "no dual measure: optimality gap {:.3e} strictly negative",
                        rep.directional_at_zero
                    ),
                );
            }
            Some(rep)
        }
        Err(e) => {
            checks.fail(name, e.to_string());
            None
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn check_monte_carlo(
    checks: &mut Checks,
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    sol: &PortfolioSolution,
    curves: Option<SolutionCurves>,
    qrep: Option<&QMeasureReport>,
    paths: usize,
    seed: u64,
    grid: usize,
) -> Option<SimulateReport> {
    let curves = match curves {
        Some(c) => c,
        None => {
            checks.skip("monte carlo", "no solution curves to check against".into());
            return None;
        }
    };
    let policy = TradingPolicy { pi: sol.pi_hat.clone(), curves: Some(curves) };
    let config = SimConfig { n_paths: paths, seed, grid_points: grid, diffusion_factor: None };
    let batch = match simulate(triplet, problem, &policy, &config) {
        Ok(b) => b,
        Err(e) => {
            checks.fail("monte carlo", e.to_string());
            return None;
        }
    };

    let utility = batch.expected_utility(problem.p);
    checks.within(
        "monte carlo: expected utility",
        utility.mean,
        utility.std_error,
        curves.utility_at_start(),
    );
    let (np_m, np_se) = batch.mean_se(|f| f.normalized_power);
    checks.within("monte carlo: normalized power mean", np_m, np_se, 1.0);
    let (gamma_m, gamma_se) = batch.mean_se(|f| f.gamma);
    let gamma_target = curves.ell(0.0) * problem.x0.powf(problem.p);
    checks.within("monte carlo: shadow-value martingale", gamma_m, gamma_se, gamma_target);

    let (z_m, z_se) = batch.mean_se(|f| f.z_terminal);
    match qrep {
        Some(q) if q.exists => checks.within("monte carlo: dual density mean", z_m, z_se, 1.0),
        Some(_) => {
            checks.skip("monte carlo: dual density mean", "no dual measure to target".into())
        }
        None => {
            checks.skip("monte carlo: dual density mean", "dual analysis not applicable".into())
        }
    }

    Some(SimulateReport {
        policy_kind: "optimal".into(),
        policy: vec_of(&sol.pi_hat),
        n_paths: paths,
        seed,
        grid_points: grid,
        n_ruined: batch.n_ruined,
        utility: Estimate { mean: Num(utility.mean), std_error: Num(utility.std_error) },
        gamma: Estimate { mean: Num(gamma_m), std_error: Num(gamma_se) },
        normalized_power: Estimate { mean: Num(np_m), std_error: Num(np_se) },
        z_terminal: Estimate { mean: Num(z_m), std_error: Num(z_se) },
        closed_form_utility: Some(Num(curves.utility_at_start())),
        gamma_target: Some(Num(gamma_target)),
    })
}
