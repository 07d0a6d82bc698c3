//! Time dependence of the solved problem. Once the static maximization is
//! done, everything dynamic collapses to one scalar rate `a` and a family of
//! closed-form curves: the value multiplier `ell`, the optimal consumption
//! fraction `kappa`, and the attained utility at time zero. The formulas come
//! from solving the scalar ODE that the value multiplier satisfies; an
//! adaptive Runge-Kutta integration of that ODE is kept around as an
//! independent check (`verify_against_ode`).

use crate::{ode, Error, Result};

/// Below this |a| the exponential formulas switch to their a -> 0 limits.
const RATE_BRANCH_TOL: f64 = 1e-12;

/// Closed-form curves for a solved problem on [0, T].
#[derive(Debug, Clone, Copy)]
pub struct SolutionCurves {
    /// Composite rate a = p/(1-p) * g_star.
    pub a: f64,
    pub p: f64,
    /// Whether the problem includes running consumption.
    pub consumption: bool,
    pub horizon: f64,
    pub x0: f64,
}

/// Build the curves from the maximized objective value.
pub fn build_curves(g_star: f64, p: f64, consumption: bool, horizon: f64, x0: f64) -> Result<SolutionCurves> {
    if !g_star.is_finite() {
        return Err(Error::Domain(format!(
            "cannot build solution curves from non-finite objective value {g_star}"
        )));
    }
    if !(horizon > 0.0) || !(x0 > 0.0) {
        return Err(Error::Domain("horizon and initial capital must be positive".into()));
    }
    if !(p < 1.0) || p == 0.0 {
        return Err(Error::Domain(format!("risk aversion parameter p={p} outside (-inf,0)u(0,1)")));
    }
    Ok(SolutionCurves { a: p / (1.0 - p) * g_star, p, consumption, horizon, x0 })
}

impl SolutionCurves {
    /// f(s) = e^{as} + delta * (e^{as}-1)/a, written through expm1 so small
    /// rates lose no precision; at a = 0 it degenerates to 1 + delta*s.
    fn f(&self, s: f64) -> f64 {
        let delta = self.consumption as u8 as f64;
        if self.a.abs() < RATE_BRANCH_TOL {
            1.0 + delta * s
        } else {
            let eas = (self.a * s).exp();
            eas + delta * (self.a * s).exp_m1() / self.a
        }
    }

    /// Value multiplier at time t: the value function is ell(t) * x^p / p.
    pub fn ell(&self, t: f64) -> f64 {
        self.f(self.horizon - t).powf(1.0 - self.p)
    }

    /// Optimal fraction of wealth consumed per unit time, None without
    /// running consumption.
    pub fn kappa(&self, t: f64) -> Option<f64> {
        self.consumption.then(|| 1.0 / self.f(self.horizon - t))
    }

    /// Integral of kappa over [0, t]; zero when consumption is off. Feeds the
    /// exact wealth exponent, so it is closed-form rather than quadrature.
    pub fn consumption_integral(&self, t: f64) -> f64 {
        if !self.consumption {
            return 0.0;
        }
        if self.a.abs() < RATE_BRANCH_TOL {
            // kappa_t = 1/(1 + T - t)
            return ((1.0 + self.horizon) / (1.0 + self.horizon - t)).ln();
        }
        // With D(t) = (1+a) e^{a(T-t)} - 1 one has kappa_t = a / D(t) and
        // d/dt log D = -a - kappa, hence the closed form below. D is computed
        // as expm1(a s) + a e^{a s} to survive small rates.
        let d = |t: f64| {
            let s = self.horizon - t;
            (self.a * s).exp_m1() + self.a * (self.a * s).exp()
        };
        -self.a * t + (d(0.0) / d(t)).ln()
    }

    /// Attained expected utility at time zero for initial capital x0.
    pub fn utility_at_start(&self) -> f64 {
        self.ell(0.0) * self.x0.powf(self.p) / self.p
    }

    /// Re-derive ell(0) by integrating the defining ODE
    ///   dl/ds = delta (1-p) l^{p/(p-1)} + p g_star l,   l(0) = 1,
    /// in remaining time s = T - t with an adaptive Runge-Kutta scheme, and
    /// return the largest |closed form - integrated| over the accepted mesh.
    pub fn verify_against_ode(&self, rtol: f64) -> Result<f64> {
        let delta = self.consumption as u8 as f64;
        let p = self.p;
        let pg_star = self.a * (1.0 - p); // p * g_star
        let pm = p / (p - 1.0);
        let rhs = move |_s: f64, l: f64| delta * (1.0 - p) * l.powf(pm) + pg_star * l;
        let mesh = ode::rk45(rhs, 0.0, self.horizon, 1.0, rtol, rtol * 1e-4)?;
        let mut worst = 0.0f64;
        for (s, l_num) in mesh {
            let l_closed = self.f(s).powf(1.0 - p);
            worst = worst.max((l_closed - l_num).abs());
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn terminal_wealth_only_curves_match_hand_values() {
        // g_star = 0.16, p = 0.5 -> a = 0.16; no consumption.
        let c = build_curves(0.16, 0.5, false, 1.0, 1.0).unwrap();
        assert_relative_eq!(c.ell(0.0), (0.08f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(c.utility_at_start(), 2.0 * (0.08f64).exp(), max_relative = 1e-13);
        assert_eq!(c.ell(1.0), 1.0, "multiplier must end at one");
        assert!(c.kappa(0.3).is_none());
        assert_eq!(c.consumption_integral(0.7), 0.0);
    }

    #[test]
    fn consumption_curves_match_hand_values() {
        let c = build_curves(0.16, 0.5, true, 1.0, 1.0).unwrap();
        // f(1) = -6.25 + 7.25 e^{0.16}
        let f1 = -6.25 + 7.25 * (0.16f64).exp();
        assert_relative_eq!(c.kappa(0.0).unwrap(), 1.0 / f1, max_relative = 1e-13);
        assert_relative_eq!(c.kappa(0.0).unwrap(), 0.442878854958783, max_relative = 1e-12);
        assert_relative_eq!(c.ell(0.0), f1.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(c.ell(0.0), 1.502648932615541, max_relative = 1e-12);
        assert_relative_eq!(c.kappa(1.0).unwrap(), 1.0, max_relative = 1e-13);
        assert_eq!(c.ell(1.0), 1.0);
    }

    #[test]
    fn zero_rate_consumption_is_harmonic() {
        let c = build_curves(0.0, 0.5, true, 1.0, 1.0).unwrap();
        for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
            assert_relative_eq!(c.kappa(t).unwrap(), 1.0 / (2.0 - t), max_relative = 1e-14);
        }
        assert_relative_eq!(
            c.consumption_integral(0.5),
            (2.0f64 / 1.5).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn consumption_integral_agrees_with_simpson() {
        for &(g_star, p) in &[(0.16, 0.5), (-0.5, 0.5), (2.0, -1.0)] {
            let c = build_curves(g_star, p, true, 1.0, 1.0).unwrap();
            let t = 0.8;
            let n = 4000;
            let h = t / n as f64;
            let mut acc = c.kappa(0.0).unwrap() + c.kappa(t).unwrap();
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * c.kappa(k as f64 * h).unwrap();
            }
            let simpson = acc * h / 3.0;
            assert_relative_eq!(c.consumption_integral(t), simpson, max_relative = 1e-10);
        }
    }

    #[test]
    fn tiny_rate_matches_zero_rate_limit() {
        let lim = build_curves(0.0, 0.5, true, 2.0, 1.0).unwrap();
        let tiny = build_curves(1e-13, 0.5, true, 2.0, 1.0).unwrap();
        for t in [0.0, 0.7, 1.9] {
            assert_relative_eq!(lim.ell(t), tiny.ell(t), max_relative = 1e-9);
            assert_relative_eq!(
                lim.consumption_integral(t),
                tiny.consumption_integral(t),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn ode_integration_reproduces_closed_form() {
        for &g_star in &[-0.5, 0.0, 0.16, 2.0] {
            for &consumption in &[false, true] {
                let c = build_curves(g_star, 0.5, consumption, 1.0, 1.0).unwrap();
                let worst = c.verify_against_ode(1e-11).unwrap();
                assert!(
                    worst < 1e-8,
                    "ODE residual {worst} too large at g_star={g_star}, consumption={consumption}"
                );
            }
        }
    }

    #[test]
    fn utility_scales_as_a_power_of_initial_capital() {
        let base = build_curves(0.16, -1.0, true, 1.0, 1.0).unwrap();
        let scaled = build_curves(0.16, -1.0, true, 1.0, 3.0).unwrap();
        assert_relative_eq!(
            scaled.utility_at_start(),
            3.0f64.powi(-1) * base.utility_at_start(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn non_finite_objective_is_rejected() {
        assert!(build_curves(f64::INFINITY, 0.5, false, 1.0, 1.0).is_err());
        assert!(build_curves(f64::NAN, 0.5, false, 1.0, 1.0).is_err());
    }
}
