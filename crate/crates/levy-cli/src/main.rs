//! `levy`: the solver pipeline as subcommands, from model validation
//! through Monte Carlo verification. Every run writes machine-readable
//! artifacts (JSON/CSV) and a manifest into the output directory and prints
//! a short human summary to stdout.
//!
//! Exit codes: 0 success (warnings allowed), 1 operational error (unreadable
//! input, solver failure), 2 negative finding (invalid model, free-lunch
//! witness, failed verification).

mod report;
mod verify;

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};
use levy_core::constraint_geometry::{analyze, nuip_check, Closedness, NuipVerdict};
use levy_core::g_objective::eval_g;
use levy_core::levy_model::{validate_model, LevyTriplet, ProblemSpec};
use levy_core::mc_lab::{simulate, SimConfig, TradingPolicy};
use levy_core::model_file::{load_model, render_model, SCHEMA_VERSION};
use levy_core::optimizer::{maximize, PortfolioSolution};
use levy_core::qmeasure::analyze_q_measure;
use levy_core::solution_curves::{build_curves, SolutionCurves};
use levy_core::transform::build_transform;
use nalgebra::DVector;
use report::{
    sha256_hex, show_vec, vec_of, Estimate, GeometryReport, HalfspaceRow, Manifest, Num,
    NuipReport, Outputs, QMeasureArtifact, SimulateReport, SolveReport, TransformReport,
    ValidateReport,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "levy",
    version,
    about = "Optimal investment and consumption under power utility in exponential Levy markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Directory for JSON/CSV artifacts and the run manifest.
    #[arg(long, global = true, env = "LEVY_OUT_DIR", default_value = "levy-out")]
    out: PathBuf,

    /// Override the model's relative quadrature tolerance.
    #[arg(long, global = true)]
    quad_rel: Option<f64>,

    /// Override the optimizer's first-order tolerance.
    #[arg(long, global = true)]
    opt_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the model file for structural problems.
    Validate { model: PathBuf },
    /// Report budget halfspaces, null directions, recession rays, closedness.
    Geometry { model: PathBuf },
    /// Check the no-unbounded-increasing-profit condition.
    Nuip { model: PathBuf },
    /// Replace ruin-touching assets and emit the transformed model.
    Transform { model: PathBuf },
    /// Tabulate the criterion over a grid (models of dimension 1 or 2).
    GScan {
        model: PathBuf,
        /// Lower grid corner, comma separated.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        lo: Vec<f64>,
        /// Upper grid corner, comma separated.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        hi: Vec<f64>,
        /// Grid steps per axis.
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Maximize the criterion and report the optimal portfolio.
    Solve { model: PathBuf },
    /// Emit the value multiplier and consumption-rate curves as CSV.
    Curves {
        model: PathBuf,
        /// Number of sample times on [0, T].
        #[arg(long, default_value_t = 101)]
        samples: usize,
    },
    /// Analyze the candidate dual martingale measure at the optimum.
    Qmeasure { model: PathBuf },
    /// Simulate the wealth process under a constant-proportion policy.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0x5EED)]
        seed: u64,
        /// Time-grid points for the running integrals.
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// `optimal`, `zero`, or a JSON file holding the portfolio vector.
        #[arg(long, default_value = "optimal")]
        policy: String,
    },
    /// Run the full pipeline and check every verifiable identity.
    Verify {
        model: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 0x5EED)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
}

impl Cmd {
    fn model_path(&self) -> &Path {
        match self {
            Cmd::Validate { model }
            | Cmd::Geometry { model }
            | Cmd::Nuip { model }
            | Cmd::Transform { model }
            | Cmd::GScan { model, .. }
            | Cmd::Solve { model }
            | Cmd::Curves { model, .. }
            | Cmd::Qmeasure { model }
            | Cmd::Simulate { model, .. }
            | Cmd::Verify { model, .. } => model,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Cmd::Validate { .. } => "validate",
            Cmd::Geometry { .. } => "geometry",
            Cmd::Nuip { .. } => "nuip",
            Cmd::Transform { .. } => "transform",
            Cmd::GScan { .. } => "g-scan",
            Cmd::Solve { .. } => "solve",
            Cmd::Curves { .. } => "curves",
            Cmd::Qmeasure { .. } => "qmeasure",
            Cmd::Simulate { .. } => "simulate",
            Cmd::Verify { .. } => "verify",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Cmd::Simulate { seed, .. } | Cmd::Verify { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let model_path = cli.command.model_path().to_path_buf();
    let (triplet, mut problem) = load_model(&model_path).map_err(|e| anyhow!("{e}"))?;
    if let Some(v) = cli.quad_rel {
        problem.tol.quad_rel = v;
    }
    if let Some(v) = cli.opt_tol {
        problem.tol.optimizer = v;
    }

    let out = Outputs::new(cli.out.clone());
    let manifest = Manifest {
        command: cli.command.name().into(),
        model: model_path.display().to_string(),
        model_sha256: sha256_hex(&model_path)?,
        model_schema_version: SCHEMA_VERSION,
        seed: cli.command.seed(),
        quad_rel_override: cli.quad_rel,
        optimizer_tol_override: cli.opt_tol,
        levy_core_version: levy_core::VERSION.into(),
        levy_cli_version: env!("CARGO_PKG_VERSION").into(),
    };
    out.write_json("manifest.json", &manifest)?;

    match cli.command {
        Cmd::Validate { .. } => cmd_validate(&triplet, &problem, &out),
        Cmd::Geometry { .. } => cmd_geometry(&triplet, &problem, &out),
        Cmd::Nuip { .. } => cmd_nuip(&triplet, &problem, &out),
        Cmd::Transform { .. } => cmd_transform(&triplet, &problem, &out),
        Cmd::GScan { lo, hi, steps, .. } => cmd_gscan(&triplet, &problem, &lo, &hi, steps, &out),
        Cmd::Solve { .. } => cmd_solve(&triplet, &problem, &out),
        Cmd::Curves { samples, .. } => cmd_curves(&triplet, &problem, samples, &out),
        Cmd::Qmeasure { .. } => cmd_qmeasure(&triplet, &problem, &out),
        Cmd::Simulate { paths, seed, grid, policy, .. } => {
            cmd_simulate(&triplet, &problem, paths, seed, grid, &policy, &out)
        }
        Cmd::Verify { paths, seed, grid, .. } => {
            verify::run(&triplet, &problem, paths, seed, grid, &out)
        }
    }
}

/// Solve, separating the free-lunch verdict (a model finding, exit 2) from
/// operational failures (exit 1 via the error path).
enum SolveOutcome {
    Solved(PortfolioSolution),
    FreeLunch(Vec<f64>),
}

fn try_solve(triplet: &LevyTriplet, problem: &ProblemSpec) -> Result<SolveOutcome> {
    match maximize(triplet, problem) {
        Ok(sol) => Ok(SolveOutcome::Solved(sol)),
        Err(levy_core::Error::NuipViolated { witness }) => Ok(SolveOutcome::FreeLunch(witness)),
        Err(e) => Err(anyhow!("{e}")),
    }
}

fn report_free_lunch(witness: &[f64]) -> ExitCode {
    println!("free lunch: unbounded increasing profit along direction {witness:?}");
    println!("no optimum exists; fix the model or tighten the constraints");
    ExitCode::from(2)
}

fn cmd_validate(triplet: &LevyTriplet, problem: &ProblemSpec, out: &Outputs) -> Result<ExitCode> {
    let rep = validate_model(triplet, problem);
    let valid = rep.is_valid();
    for v in &rep.violations {
        println!("violation: {v}");
    }
    for w in &rep.warnings {
        println!("warning: {w}");
    }
    println!("{}", if valid { "model ok" } else { "model INVALID" });
    let artifact = out.write_json(
        "validate.json",
        &ValidateReport { valid, violations: rep.violations, warnings: rep.warnings },
    )?;
    println!("artifact: {}", artifact.display());
    Ok(if valid { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn nuip_report(verdict: &NuipVerdict) -> NuipReport {
    match verdict {
        NuipVerdict::Holds => {
            NuipReport { verdict: "holds".into(), witness: None, reason: None }
        }
        NuipVerdict::Violated { witness } => NuipReport {
            verdict: "violated".into(),
            witness: Some(witness.clone()),
            reason: None,
        },
        NuipVerdict::Undecidable { reason } => NuipReport {
            verdict: "undecidable".into(),
            witness: None,
            reason: Some(reason.clone()),
        },
    }
}

fn cmd_geometry(triplet: &LevyTriplet, problem: &ProblemSpec, out: &Outputs) -> Result<ExitCode> {
    let geo = analyze(triplet, &problem.constraints, problem.tol.geometry)
        .map_err(|e| anyhow!("{e}"))?;
    println!("constraint set: {}", problem.constraints.describe());
    println!("budget halfspaces ({}):", geo.c0_halfspaces.len());
    for h in &geo.c0_halfspaces {
        println!("  y . {} >= {}", show_vec(&h.normal), h.rhs);
    }
    println!("null directions ({}):", geo.n_basis.len());
    for n in &geo.n_basis {
        println!("  {}", show_vec(n));
    }
    println!("recession rays ({}):", geo.recession_rays.len());
    for r in &geo.recession_rays {
        println!("  {}", show_vec(r));
    }
    let closed = match geo.projection_closed {
        Closedness::True => "true",
        Closedness::False => "false",
        Closedness::Unknown => "unknown",
    };
    let nuip = nuip_report(&geo.nuip);
    println!("free-lunch check: {}", nuip.verdict);
    println!("projection closed: {closed}");
    let artifact = out.write_json(
        "geometry.json",
        &GeometryReport {
            budget_halfspaces: geo
                .c0_halfspaces
                .iter()
                .map(|h| HalfspaceRow { normal: vec_of(&h.normal), rhs: h.rhs })
                .collect(),
            null_basis: geo.n_basis.iter().map(vec_of).collect(),
            recession_rays: geo.recession_rays.iter().map(vec_of).collect(),
            nuip,
            projection_closed: closed.into(),
        },
    )?;
    println!("artifact: {}", artifact.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_nuip(triplet: &LevyTriplet, problem: &ProblemSpec, out: &Outputs) -> Result<ExitCode> {
    let verdict =
        nuip_check(triplet, &problem.constraints, problem.tol.geometry).map_err(|e| anyhow!("{e}"))?;
    let rep = nuip_report(&verdict);
    match &verdict {
        NuipVerdict::Holds => println!("no unbounded increasing profit: holds"),
        NuipVerdict::Violated { witness } => {
            println!("no unbounded increasing profit: VIOLATED");
            println!("witness direction: {witness:?}");
        }
        NuipVerdict::Undecidable { reason } => {
            println!("no unbounded increasing profit: undecidable");
            println!("reason: {reason}");
        }
    }
    let artifact = out.write_json("nuip.json", &rep)?;
    println!("artifact: {}", artifact.display());
    Ok(match verdict {
        NuipVerdict::Violated { .. } => ExitCode::from(2),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_transform(triplet: &LevyTriplet, problem: &ProblemSpec, out: &Outputs) -> Result<ExitCode> {
    let tr = build_transform(triplet, problem).map_err(|e| anyhow!("{e}"))?;
    let d = tr.lambda.nrows();
    if tr.lambda.is_identity(1e-12) {
        println!("identity transform: no asset touches its ruin boundary");
    } else {
        println!("replacement matrix (rows are replacement portfolios):");
        for i in 0..d {
            let row: Vec<f64> = tr.lambda.row(i).iter().cloned().collect();
            println!("  asset {}: {row:?}", i + 1);
        }
    }
    for w in &tr.warnings {
        println!("warning: {w}");
    }
    let tp = tr.transformed_problem(problem);
    println!("transformed constraints: {}", tp.constraints.describe());
    let rendered = render_model(&tr.triplet, &tp);
    let model_file = match rendered {
        Ok(text) => {
            let p = out.write_text("transformed_model.toml", &text)?;
            println!("transformed model: {}", p.display());
            Some(p.file_name().unwrap().to_string_lossy().into_owned())
        }
        Err(e) => {
            println!("note: transformed model has no file form ({e})");
            None
        }
    };
    let artifact = out.write_json(
        "transform.json",
        &TransformReport {
            lambda: (0..d).map(|i| tr.lambda.row(i).iter().cloned().collect()).collect(),
            replacements: tr.steps.iter().map(|s| s.as_ref().map(vec_of)).collect(),
            constraints: tp.constraints.describe(),
            transformed_model_file: model_file,
            warnings: tr.warnings.clone(),
        },
    )?;
    println!("artifact: {}", artifact.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gscan(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    lo: &[f64],
    hi: &[f64],
    steps: usize,
    out: &Outputs,
) -> Result<ExitCode> {
    let d = triplet.dim();
    if d > 2 {
        bail!("g-scan tabulates dimension 1 or 2 models, this one has {d} assets");
    }
    if lo.len() != d || hi.len() != d {
        bail!("--lo and --hi need {d} entries for this model");
    }
    if steps == 0 {
        bail!("--steps must be positive");
    }
    let value_at = |y: &DVector<f64>| -> f64 {
        match eval_g(y, triplet, problem.p, &problem.tol) {
            Ok(gv) => gv.value,
            Err(_) => f64::NAN, // outside the budget set (or not integrable there)
        }
    };
    let mut csv = String::from(if d == 1 { "y,g\n" } else { "y1,y2,g\n" });
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut finite = 0usize;
    let mut total = 0usize;
    let mut record = |y: &DVector<f64>, g: f64, line: String| {
        total += 1;
        if g.is_finite() {
            finite += 1;
            if best.as_ref().map_or(true, |(b, _)| g > *b) {
                best = Some((g, y.iter().cloned().collect()));
            }
        }
        csv.push_str(&line);
    };
    if d == 1 {
        for i in 0..=steps {
            let y1 = lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64;
            let y = DVector::from_row_slice(&[y1]);
            let g = value_at(&y);
            record(&y, g, format!("{y1},{g}\n"));
        }
    } else {
        for i in 0..=steps {
            let y1 = lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64;
            for j in 0..=steps {
                let y2 = lo[1] + (hi[1] - lo[1]) * j as f64 / steps as f64;
                let y = DVector::from_row_slice(&[y1, y2]);
                let g = value_at(&y);
                record(&y, g, format!("{y1},{y2},{g}\n"));
            }
        }
    }
    drop(record);
    let artifact = out.write_text("g_scan.csv", &csv)?;
    println!("grid points: {total} ({finite} with finite criterion)");
    if let Some((g, y)) = best {
        println!("best grid point: {y:?} with criterion {g:.9}");
    }
    println!("artifact: {}", artifact.display());
    Ok(ExitCode::SUCCESS)
}

fn make_solve_report(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    sol: &PortfolioSolution,
) -> SolveReport {
    let utility = sol
        .g_star
        .is_finite()
        .then(|| {
            build_curves(sol.g_star, problem.p, problem.consumption, problem.horizon, problem.x0)
                .ok()
                .map(|c| c.utility_at_start())
        })
        .flatten();
    SolveReport {
        dim: triplet.dim(),
        p: problem.p,
        consumption: problem.consumption,
        horizon: problem.horizon,
        x0: problem.x0,
        pi_hat: vec_of(&sol.pi_hat),
        g_star: Num(sol.g_star),
        rate_a: Num(sol.a),
        finite_value: sol.finite_value,
        maximizer_attained: sol.maximizer_attained,
        location: format!("{:?}", sol.location),
        directional_at_zero: Num(sol.directional_at_zero),
        achieved_tol: sol.achieved_tol,
        iterations: sol.iterations,
        utility_at_start: utility.map(Num),
        warnings: sol.warnings.clone(),
    }
}

fn print_solution(rep: &SolveReport) {
    println!("pi_hat           {:?}", rep.pi_hat);
    println!("g_star           {}", rep.g_star.0);
    println!("rate a           {}", rep.rate_a.0);
    if let Some(u) = &rep.utility_at_start {
        println!("utility u(x0)    {}", u.0);
    }
    println!("location         {}", rep.location);
    println!("attained         {}", rep.maximizer_attained);
    println!("finite value     {}", rep.finite_value);
    println!("optimality gap   {:.3e}", rep.directional_at_zero.0);
    for w in &rep.warnings {
        println!("warning: {w}");
    }
}

fn cmd_solve(triplet: &LevyTriplet, problem: &ProblemSpec, out: &Outputs) -> Result<ExitCode> {
    let sol = match try_solve(triplet, problem)? {
        SolveOutcome::Solved(sol) => sol,
        SolveOutcome::FreeLunch(w) => return Ok(report_free_lunch(&w)),
    };
    let rep = make_solve_report(triplet, problem, &sol);
    print_solution(&rep);
    let artifact = out.write_json("solve.json", &rep)?;
    println!("artifact: {}", artifact.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_curves(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    samples: usize,
    out: &Outputs,
) -> Result<ExitCode> {
    if samples < 2 {
        bail!("--samples must be at least 2");
    }
    let sol = match try_solve(triplet, problem)? {
        SolveOutcome::Solved(sol) => sol,
        SolveOutcome::FreeLunch(w) => return Ok(report_free_lunch(&w)),
    };
    if !sol.finite_value {
        println!("the problem value is infinite; there are no finite curves");
        return Ok(ExitCode::from(2));
    }
    let curves = build_curves(sol.g_star, problem.p, problem.consumption, problem.horizon, problem.x0)
        .map_err(|e| anyhow!("{e}"))?;
    let mut csv = String::from("t,ell,kappa\n");
    for i in 0..samples {
        let t = problem.horizon * i as f64 / (samples - 1) as f64;
        let kappa = curves.kappa(t).map_or(String::new(), |k| k.to_string());
        csv.push_str(&format!("{t},{},{kappa}\n", curves.ell(t)));
    }
    println!("ell(0)           {}", curves.ell(0.0));
    if let Some(k0) = curves.kappa(0.0) {
        println!("kappa(0)         {k0}");
    }
    println!("utility u(x0)    {}", curves.utility_at_start());
    let artifact = out.write_text("curves.csv", &csv)?;
    println!("artifact: {}", artifact.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_qmeasure(triplet: &LevyTriplet, problem: &ProblemSpec, out: &Outputs) -> Result<ExitCode> {
    let sol = match try_solve(triplet, problem)? {
        SolveOutcome::Solved(sol) => sol,
        SolveOutcome::FreeLunch(w) => return Ok(report_free_lunch(&w)),
    };
    let rep = analyze_q_measure(triplet, problem, &sol).map_err(|e| anyhow!("{e}"))?;
    println!("exponent q       {}", rep.q);
    println!(
        "dual measure     {}",
        match (rep.exists, rep.marginal) {
            (true, true) => "exists (marginal: optimality gap near tolerance)",
            (true, false) => "exists",
            (false, true) => "does not exist (marginal: optimality gap near tolerance)",
            (false, false) => "does not exist",
        }
    );
    println!("optimality gap   {:.6e}", rep.directional_at_zero);
    println!("girsanov drift   {}", show_vec(&rep.girsanov_continuous));
    if let Some(r) = &rep.martingale_residuals {
        println!("mart. residuals  {}", show_vec(r));
    }
    for w in &rep.warnings {
        println!("warning: {w}");
    }
    let model_file = match &rep.triplet_under_q {
        Some(tq) => match render_model(tq, problem) {
            Ok(text) => {
                let p = out.write_text("model_under_q.toml", &text)?;
                println!("model under Q:   {}", p.display());
                Some(p.file_name().unwrap().to_string_lossy().into_owned())
            }
            Err(e) => {
                println!("note: reweighted model has no file form ({e})");
                None
            }
        },
        None => None,
    };
    let artifact = out.write_json(
        "qmeasure.json",
        &QMeasureArtifact {
            q: rep.q,
            exists: rep.exists,
            marginal: rep.marginal,
            directional_at_zero: Num(rep.directional_at_zero),
            girsanov_continuous: vec_of(&rep.girsanov_continuous),
            martingale_residuals: rep.martingale_residuals.as_ref().map(vec_of),
            model_under_q_file: model_file,
            warnings: rep.warnings.clone(),
        },
    )?;
    println!("artifact: {}", artifact.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    paths: usize,
    seed: u64,
    grid: usize,
    policy_arg: &str,
    out: &Outputs,
) -> Result<ExitCode> {
    let d = triplet.dim();
    // The optimal policy needs a solve; so does any consumption run, because
    // the consumption schedule comes from the solved rate curves.
    let needs_solve = policy_arg == "optimal" || problem.consumption;
    let sol = if needs_solve {
        match try_solve(triplet, problem)? {
            SolveOutcome::Solved(sol) => Some(sol),
            SolveOutcome::FreeLunch(w) => return Ok(report_free_lunch(&w)),
        }
    } else {
        None
    };
    if policy_arg == "optimal" {
        let s = sol.as_ref().expect("solved above");
        if !s.finite_value || !s.maximizer_attained {
            println!("no attained finite optimum to simulate (value infinite or supremum only)");
            return Ok(ExitCode::from(2));
        }
    }
    let curves = sol.as_ref().and_then(|s| {
        s.g_star.is_finite().then(|| {
            build_curves(s.g_star, problem.p, problem.consumption, problem.horizon, problem.x0).ok()
        })?
    });
    let (kind, pi) = match policy_arg {
        "optimal" => ("optimal", sol.as_ref().expect("solved above").pi_hat.clone()),
        "zero" => ("zero", DVector::zeros(d)),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                anyhow!("--policy must be `optimal`, `zero`, or a JSON file; cannot read {path}: {e}")
            })?;
            let v: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| anyhow!("policy file {path} is not a JSON array of numbers: {e}"))?;
            if v.len() != d {
                bail!("policy file has {} entries, the model has {d} assets", v.len());
            }
            ("file", DVector::from_row_slice(&v))
        }
    };
    let policy = TradingPolicy { pi: pi.clone(), curves };
    let config = SimConfig { n_paths: paths, seed, grid_points: grid, diffusion_factor: None };
    let batch = simulate(triplet, problem, &policy, &config).map_err(|e| anyhow!("{e}"))?;

    let utility = batch.expected_utility(problem.p);
    let (gamma_m, gamma_se) = batch.mean_se(|f| f.gamma);
    let (np_m, np_se) = batch.mean_se(|f| f.normalized_power);
    let (z_m, z_se) = batch.mean_se(|f| f.z_terminal);
    let is_optimal = kind == "optimal";
    let closed_form = is_optimal.then(|| curves_utility(&policy)).flatten();
    let gamma_target = is_optimal
        .then(|| policy.curves.as_ref().map(|c| c.ell(0.0) * problem.x0.powf(problem.p)))
        .flatten();

    println!("policy           {kind} {}", show_vec(&pi));
    println!("paths            {paths} (ruined: {})", batch.n_ruined);
    println!("E[utility]       {} +- {}", utility.mean, utility.std_error);
    if let Some(u) = closed_form {
        println!("closed form      {u}");
    }
    println!("E[Gamma]         {gamma_m} +- {gamma_se}");
    if let Some(t) = gamma_target {
        println!("Gamma target     {t}");
    }
    println!("E[norm. power]   {np_m} +- {np_se}  (target 1 for admissible policies)");
    println!("E[dual density]  {z_m} +- {z_se}  (target 1 iff the dual measure exists)");

    let rep = SimulateReport {
        policy_kind: kind.into(),
        policy: pi.iter().cloned().collect(),
        n_paths: paths,
        seed,
        grid_points: grid,
        n_ruined: batch.n_ruined,
        utility: Estimate { mean: Num(utility.mean), std_error: Num(utility.std_error) },
        gamma: Estimate { mean: Num(gamma_m), std_error: Num(gamma_se) },
        normalized_power: Estimate { mean: Num(np_m), std_error: Num(np_se) },
        z_terminal: Estimate { mean: Num(z_m), std_error: Num(z_se) },
        closed_form_utility: closed_form.map(Num),
        gamma_target: gamma_target.map(Num),
    };
    let artifact = out.write_json("simulate.json", &rep)?;
    println!("artifact: {}", artifact.display());
    Ok(ExitCode::SUCCESS)
}

fn curves_utility(policy: &TradingPolicy) -> Option<f64> {
    policy.curves.as_ref().map(SolutionCurves::utility_at_start)
}
