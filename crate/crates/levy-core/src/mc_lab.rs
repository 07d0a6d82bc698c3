//! Monte Carlo verification lab. Simulates the exponential market under a
//! constant-proportion policy with the exact wealth recursion (no Euler
//! bias: between jumps the wealth is a closed-form exponential, and every
//! jump multiplies it by 1 + pi . x), then reports the path functionals the
//! optimality theory pins down exactly:
//!
//!   * expected utility (running consumption part included),
//!   * the shadow-value combination Gamma whose mean must equal its t=0
//!     value under the optimal policy,
//!   * the normalized power of terminal wealth, whose mean is 1 for any
//!     admissible constant policy (a direct check of the criterion value),
//!   * the candidate dual density, whose mean is 1 exactly when the dual
//!     measure exists.
//!
//! Determinism: every path owns one RNG stream per source of randomness
//! (the Brownian driver and each jump component), so results are bitwise
//! reproducible for a fixed seed regardless of thread count, and two
//! markets sharing component layout (e.g. a market and its transform) see
//! identical draws path by path.

use crate::levy_model::{cutoff, LevyTriplet, ProblemSpec};
use crate::qmeasure::girsanov_jump_kernel;
use crate::solution_curves::SolutionCurves;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

/// Simulation controls.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Time-grid resolution for the running integrals (consumption utility
    /// and the Gamma integrand); terminal quantities are grid-exact.
    pub grid_points: usize,
    /// Override for the diffusion loading (defaults to a symmetric square
    /// root of c). Lets a transformed market reuse the original market's
    /// Brownian driver: passing lambda * factor(c) makes wealth paths agree
    /// with the original ones not just in law but number for number.
    pub diffusion_factor: Option<DMatrix<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_paths: 10_000, seed: 0x5EED, grid_points: 256, diffusion_factor: None }
    }
}

/// A constant-proportion trading policy, with the consumption-rate curve
/// attached when the problem consumes.
#[derive(Debug, Clone)]
pub struct TradingPolicy {
    pub pi: DVector<f64>,
    pub curves: Option<SolutionCurves>,
}

impl TradingPolicy {
    pub fn constant(pi: DVector<f64>) -> Self {
        TradingPolicy { pi, curves: None }
    }
}

/// Functionals extracted from one simulated path.
#[derive(Debug, Clone, Copy)]
pub struct PathFunctionals {
    pub terminal_wealth: f64,
    /// Running + terminal utility; -inf for a ruined path with p < 0.
    pub utility: f64,
    /// ell(T) X_T^p + delta int kappa ell X^p dt.
    pub gamma: f64,
    /// X_T^p over its exact mean x0^p exp(p (g(pi) T - int kappa));
    /// sample mean 1 for any admissible constant pi.
    pub normalized_power: f64,
    /// Candidate dual density at T; mean 1 iff the dual measure exists.
    pub z_terminal: f64,
    /// The wealth was absorbed at zero by a jump.
    pub ruined: bool,
}

/// One simulated batch with its per-path functionals in path order.
#[derive(Debug, Clone)]
pub struct SimBatch {
    pub paths: Vec<PathFunctionals>,
    pub seed: u64,
    pub n_ruined: usize,
}

/// Mean and standard error of a sample mean.
#[derive(Debug, Clone, Copy)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_ruined: usize,
}

impl SimBatch {
    /// Sample mean and standard error of an arbitrary path functional.
    pub fn mean_se<F: Fn(&PathFunctionals) -> f64>(&self, f: F) -> (f64, f64) {
        let n = self.paths.len() as f64;
        let mut sum = 0.0;
        for p in &self.paths {
            sum += f(p);
        }
        let mean = sum / n;
        let mut var = 0.0;
        for p in &self.paths {
            let d = f(p) - mean;
            var += d * d;
        }
        let se = (var / (n * (n - 1.0).max(1.0))).sqrt();
        (mean, se)
    }

    /// Expected utility of the batch. A single ruined path with p < 0 pins
    /// the estimate at -inf (the true expectation is -inf as well).
    pub fn expected_utility(&self, p: f64) -> UtilityEstimate {
        if p < 0.0 && self.n_ruined > 0 {
            return UtilityEstimate {
                mean: f64::NEG_INFINITY,
                std_error: f64::INFINITY,
                n_paths: self.paths.len(),
                n_ruined: self.n_ruined,
            };
        }
        let (mean, std_error) = self.mean_se(|p| p.utility);
        UtilityEstimate { mean, std_error, n_paths: self.paths.len(), n_ruined: self.n_ruined }
    }
}

/// Symmetric PSD square root via the spectral decomposition; tolerates the
/// rank-deficient and zero matrices that pure-jump models carry.
fn psd_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = c.clone().symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-10 * (1.0 + c.amax()) {
            return Err(Error::Domain(format!("diffusion matrix has negative eigenvalue {v}")));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals))
}

/// Simulate `config.n_paths` for the policy and collect path functionals.
///
/// Requires finite jump activity: the event-driven scheme enumerates every
/// jump, which only terminates for finitely many per path.
pub fn simulate(
    triplet: &LevyTriplet,
    problem: &ProblemSpec,
    policy: &TradingPolicy,
    config: &SimConfig,
) -> Result<SimBatch> {
    let d = triplet.dim();
    if policy.pi.len() != d {
        return Err(Error::Domain(format!(
            "policy dimension {} does not match the market dimension {d}",
            policy.pi.len()
        )));
    }
    if config.n_paths == 0 || config.grid_points == 0 {
        return Err(Error::Domain("n_paths and grid_points must be positive".into()));
    }
    let total = triplet.jumps.total_intensity();
    if !total.is_finite() {
        return Err(Error::InfiniteActivity(format!(
            "event-driven simulation needs finite jump intensity, got {total}"
        )));
    }
    if problem.consumption && policy.curves.is_none() {
        return Err(Error::PreconditionFailed(
            "a consumption problem needs the rate curve attached to the policy".into(),
        ));
    }

    let p = problem.p;
    let horizon = problem.horizon;
    let x0 = problem.x0;
    let pi = &policy.pi;
    let delta = problem.consumption;

    let factor = match &config.diffusion_factor {
        Some(f) => {
            if f.nrows() != d {
                return Err(Error::Domain("diffusion factor has wrong row count".into()));
            }
            f.clone()
        }
        None => psd_factor(&triplet.c)?,
    };
    // Uncompensated drift: the cutoff compensation is folded back so the
    // jump product below needs no correction term.
    let mut b0 = triplet.b.clone();
    for a in &triplet.jumps.atoms {
        b0 -= cutoff(&a.x) * a.lambda;
    }
    for part in &triplet.jumps.parts {
        for j in 0..d {
            let (v, _) = part.integrate_inside_unit_ball(|x, _| x[j], &[], None)?;
            b0[j] -= v;
        }
    }
    let drift = pi.dot(&b0);
    let diff_load = factor.transpose() * pi; // pi' F dW = (F' pi) . dW
    let diff_var = diff_load.norm_squared(); // = pi' c pi, subtracted on the path

    // Compensator of the candidate dual density's jump part.
    let mut z_comp = 0.0;
    for a in &triplet.jumps.atoms {
        z_comp += a.lambda * (girsanov_jump_kernel(pi, &a.x, p) - 1.0);
    }
    for part in &triplet.jumps.parts {
        let w = pi.dot(&part.dir);
        if w != 0.0 {
            let splits = [-1.0 / w];
            let (v, _) =
                part.integrate(|x, _| girsanov_jump_kernel(pi, x, p) - 1.0, 0.0, &splits, None)?;
            z_comp += v;
        }
    }
    let z_diff_load = &diff_load * (p - 1.0);

    let n_grid = config.grid_points;
    let dt = horizon / n_grid as f64;
    let n_components = 1 + triplet.jumps.atoms.len() + triplet.jumps.parts.len();
    let stride = n_components as u64;

    let run_path = |path_idx: usize| -> Result<PathFunctionals> {
        // Brownian increments on the grid from the path's own stream.
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(path_idx as u64 * stride);
        let mut w_nodes = vec![DVector::<f64>::zeros(d); n_grid + 1];
        if factor.amax() > 0.0 {
            let sdt = dt.sqrt();
            for k in 1..=n_grid {
                let mut dw = DVector::zeros(d);
                for j in 0..d {
                    dw[j] = sdt * standard_normal(&mut rng);
                }
                w_nodes[k] = &w_nodes[k - 1] + dw;
            }
        }

        // Jump events, one stream per component: count, times, marks.
        let mut events: Vec<(f64, f64)> = Vec::new(); // (time, pi . x)
        let mut comp_id = 1u64;
        for a in &triplet.jumps.atoms {
            let s = pi.dot(&a.x);
            draw_events(&mut events, a.lambda, horizon, |_rng| Ok(s), {
                let mut r = ChaCha12Rng::seed_from_u64(config.seed);
                r.set_stream(path_idx as u64 * stride + comp_id);
                r
            })?;
            comp_id += 1;
        }
        for part in &triplet.jumps.parts {
            draw_events(
                &mut events,
                part.mass,
                horizon,
                |rng| Ok(pi.dot(&part.sample(rng)?)),
                {
                    let mut r = ChaCha12Rng::seed_from_u64(config.seed);
                    r.set_stream(path_idx as u64 * stride + comp_id);
                    r
                },
            )?;
            comp_id += 1;
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Walk the grid with a running jump product (absorbing at zero) and
        // the dual-density jump product alongside.
        let mut jump_prod = 1.0f64;
        let mut z_jump_prod = 1.0f64;
        let mut ruined = false;
        let mut next_event = 0usize;
        let mut run_utility = 0.0; // trapezoid of U(kappa X)
        let mut run_gamma = 0.0; // trapezoid of kappa ell X^p
        let mut prev_u_int = 0.0;
        let mut prev_g_int = 0.0;
        let mut x_t = x0;
        for k in 0..=n_grid {
            let t = k as f64 * dt;
            while next_event < events.len() && events[next_event].0 <= t {
                let (_, exposure) = events[next_event];
                let fac = 1.0 + exposure;
                if fac <= 0.0 {
                    ruined = true;
                    jump_prod = 0.0;
                } else if !ruined {
                    jump_prod *= fac;
                    z_jump_prod *= fac.powf(p - 1.0);
                }
                next_event += 1;
            }
            let consumed = match (&policy.curves, delta) {
                (Some(c), true) => c.consumption_integral(t),
                _ => 0.0,
            };
            let log_s = drift * t + diff_load.dot(&w_nodes[k]) - 0.5 * diff_var * t - consumed;
            x_t = if ruined { 0.0 } else { x0 * log_s.exp() * jump_prod };
            if delta {
                let curves = policy.curves.as_ref().expect("validated above");
                let kappa = curves.kappa(t).unwrap_or(0.0);
                let ell = curves.ell(t);
                let u_int = if x_t > 0.0 { power_utility(kappa * x_t, p) } else { ruin_utility(p) };
                let g_int = kappa * ell * powp(x_t, p);
                // trapezoid accumulation
                if k > 0 {
                    run_utility += 0.5 * dt * (prev_u_int + u_int);
                    run_gamma += 0.5 * dt * (prev_g_int + g_int);
                }
                prev_u_int = u_int;
                prev_g_int = g_int;
            }
        }

        let terminal_utility = if x_t > 0.0 { power_utility(x_t, p) } else { ruin_utility(p) };
        let utility = terminal_utility + run_utility;
        let ell_t = policy.curves.as_ref().map_or(1.0, |c| c.ell(horizon));
        let gamma = ell_t * powp(x_t, p) + run_gamma;
        let z_terminal = if ruined {
            f64::INFINITY
        } else {
            (z_diff_load.dot(&w_nodes[n_grid])
                - 0.5 * z_diff_load.norm_squared() * horizon
                - z_comp * horizon)
                .exp()
                * z_jump_prod
        };
        Ok(PathFunctionals {
            terminal_wealth: x_t,
            utility,
            gamma,
            normalized_power: powp(x_t, p),
            z_terminal,
            ruined,
        })
    };

    let mut paths: Vec<PathFunctionals> = (0..config.n_paths)
        .into_par_iter()
        .map(run_path)
        .collect::<Result<Vec<_>>>()?;

    // Normalize the power functional by its exact mean so its sample mean
    // targets 1; the criterion value enters through the policy, not the
    // optimum, so this works for perturbed policies too. The deterministic
    // consumption drain scales X_T and has to come out of the mean as well.
    let g_pi = crate::g_objective::eval_g(pi, triplet, p, &problem.tol)?;
    if g_pi.value.is_finite() {
        let drained = match (&policy.curves, delta) {
            (Some(c), true) => c.consumption_integral(horizon),
            _ => 0.0,
        };
        let norm = x0.powf(p) * (p * (g_pi.value * horizon - drained)).exp();
        for pf in paths.iter_mut() {
            pf.normalized_power /= norm;
        }
    }

    let n_ruined = paths.iter().filter(|p| p.ruined).count();
    Ok(SimBatch { paths, seed: config.seed, n_ruined })
}

/// U(x) = x^p / p.
fn power_utility(x: f64, p: f64) -> f64 {
    x.powf(p) / p
}

/// Utility of hitting zero wealth: 0 for p in (0,1), -inf for p < 0.
fn ruin_utility(p: f64) -> f64 {
    if p > 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// x^p with the absorbed-at-zero convention (0^p = 0 for p > 0, else +inf,
/// which downstream statistics must treat via the ruined flag).
fn powp(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        if p > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        x.powf(p)
    }
}

/// Standard normal via Box-Muller on the stream (rand_distr's ziggurat
/// tables would also do; this keeps the draw count per increment fixed at
/// two, which the cross-market reproducibility argument relies on).
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draw a Poisson number of events on [0, horizon] with i.i.d. marks, all
/// from the supplied component stream, and push (time, mark) pairs.
fn draw_events<R: Rng, M: FnMut(&mut R) -> Result<f64>>(
    events: &mut Vec<(f64, f64)>,
    intensity: f64,
    horizon: f64,
    mut mark: M,
    mut rng: R,
) -> Result<()> {
    if intensity <= 0.0 {
        return Ok(());
    }
    let dist = Poisson::new(intensity * horizon)
        .map_err(|e| Error::Domain(format!("invalid jump intensity: {e}")))?;
    let n = dist.sample(&mut rng) as usize;
    for _ in 0..n {
        let t: f64 = rng.gen::<f64>() * horizon;
        let m = mark(&mut rng)?;
        events.push((t, m));
    }
    Ok(())
}
