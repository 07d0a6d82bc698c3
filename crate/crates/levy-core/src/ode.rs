//! Adaptive scalar ODE integration with the Dormand-Prince 5(4) embedded
//! pair. Deliberately independent of the closed-form consumption/value
//! curves: the verification layer integrates the defining equation with this
//! and compares against the formulas, so nothing here may reuse them.

use crate::{Error, Result};

const MAX_STEPS: usize = 1_000_000;

/// Integrate dy/dt = f(t, y) from (t0, y0) to t1 > t0.
/// Returns the accepted mesh including both endpoints.
pub(crate) fn rk45<F: Fn(f64, f64) -> f64>(
    f: F,
    t0: f64,
    t1: f64,
    y0: f64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(t1 > t0) {
        return Err(Error::PreconditionFailed(format!(
            "rk45 integrates forward only, got [{t0}, {t1}]"
        )));
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = ((t1 - t0) * 1e-3).min(0.1).max(1e-10);
    let mut out = vec![(t, y)];

    for _ in 0..MAX_STEPS {
        if t >= t1 {
            return Ok(out);
        }
        if t + h > t1 {
            h = t1 - t;
        }
        let k1 = f(t, y);
        let k2 = f(t + h / 5.0, y + h * (k1 / 5.0));
        let k3 = f(t + 3.0 * h / 10.0, y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
        let k4 = f(
            t + 4.0 * h / 5.0,
            y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3),
        );
        let k5 = f(
            t + 8.0 * h / 9.0,
            y + h * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3
                - 212.0 / 729.0 * k4),
        );
        let k6 = f(
            t + h,
            y + h * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3
                + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5),
        );
        let y5 = y + h * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4
            - 2187.0 / 6784.0 * k5
            + 11.0 / 84.0 * k6);
        let k7 = f(t + h, y5);
        let y4 = y + h * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 + 393.0 / 640.0 * k4
            - 92097.0 / 339200.0 * k5
            + 187.0 / 2100.0 * k6
            + k7 / 40.0);

        let err = (y5 - y4).abs();
        let tol = atol + rtol * y.abs().max(y5.abs());
        if err <= tol || h <= 1e-14 {
            t += h;
            y = y5;
            out.push((t, y));
        }
        let factor = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        h = h.max(1e-14);
    }
    Err(Error::PreconditionFailed(
        "rk45 step cap reached; equation may be stiff or tolerances too tight".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_matches_closed_form() {
        let sol = rk45(|_, y| 0.7 * y, 0.0, 2.0, 1.0, 1e-11, 1e-13).unwrap();
        let (t_end, y_end) = *sol.last().unwrap();
        assert!((t_end - 2.0).abs() < 1e-12);
        assert!((y_end - (1.4f64).exp()).abs() < 1e-9, "got {y_end}");
    }

    #[test]
    fn logistic_equation_is_accurate_along_the_path() {
        // y' = y(1-y), y(0)=0.1 has closed form 1/(1+9 e^{-t}).
        let sol = rk45(|_, y: f64| y * (1.0 - y), 0.0, 5.0, 0.1, 1e-11, 1e-13).unwrap();
        for (t, y) in sol {
            let exact = 1.0 / (1.0 + 9.0 * (-t).exp());
            assert!((y - exact).abs() < 1e-9, "t={t}: {y} vs {exact}");
        }
    }

    #[test]
    fn backward_interval_is_rejected() {
        assert!(rk45(|_, y| y, 1.0, 0.0, 1.0, 1e-8, 1e-10).is_err());
    }
}
