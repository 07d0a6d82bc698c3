//! Adaptive one-dimensional quadrature on Gauss-Kronrod 7-15 panels.
//!
//! The integrands that show up here (jump compensators and their gradients)
//! are smooth except at a handful of algebraically known points: the cutoff
//! radius and the wealth-positivity boundary. Callers pass those as forced
//! split points; the panels then converge fast and the embedded Gauss rule
//! gives a usable error estimate. Semi-infinite tails are mapped to (0,1]
//! with a power substitution chosen from the declared tail decay so that the
//! transformed integrand stays bounded.

use crate::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Kronrod-15 abscissae on [0,1] side of the symmetric rule.
const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

/// Kronrod-15 weights matching `XK`.
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss-7 weights for the odd-indexed Kronrod abscissae (indices 1,3,5,7).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadOpts {
    /// Relative tolerance on the total integral.
    pub rel_tol: f64,
    /// Absolute floor so that integrals near zero still terminate.
    pub abs_tol: f64,
    /// Cap on the number of panel bisections before giving up.
    pub max_panels: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts { rel_tol: 1e-9, abs_tol: 1e-13, max_panels: 4000 }
    }
}

impl QuadOpts {
    #[cfg(test)]
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOpts { rel_tol, abs_tol: rel_tol * 1e-4, ..Default::default() }
    }
}

/// One Gauss-Kronrod 7-15 panel. Returns (kronrod value, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kron = 0.0;
    let mut gauss = 0.0;
    for i in 0..8 {
        let (fp, fm) = if XK[i] == 0.0 {
            let v = f(mid);
            (v, 0.0)
        } else {
            (f(mid + half * XK[i]), f(mid - half * XK[i]))
        };
        let pair = if XK[i] == 0.0 { fp } else { fp + fm };
        kron += WK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    kron *= half;
    gauss *= half;
    (kron, (kron - gauss).abs())
}

#[derive(Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive integral of `f` over [a, b] with interior break points forced
/// onto panel boundaries. Returns (value, error estimate).
pub(crate) fn integrate_split<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    splits: &[f64],
    opts: &QuadOpts,
) -> Result<(f64, f64)> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite interval [{a}, {b}]")));
    }
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut edges: Vec<f64> = vec![a, b];
    edges.extend(splits.iter().copied().filter(|s| *s > a && *s < b));
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in edges.windows(2) {
        let (v, e) = gk15(f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Panel { a: w[0], b: w[1], value: v, err: e });
    }

    let mut panels = heap.len();
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            return Ok((total, total_err));
        }
        if panels >= opts.max_panels {
            return Err(Error::Quadrature(format!(
                "tolerance {tol:.3e} not reached after {panels} panels (residual {total_err:.3e})"
            )));
        }
        let worst = heap.pop().expect("heap non-empty while error positive");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Interval at floating-point resolution; accept what we have.
            heap.push(Panel { err: 0.0, ..worst });
            total_err -= worst.err;
            continue;
        }
        let (v1, e1) = gk15(f, worst.a, m);
        let (v2, e2) = gk15(f, m, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { a: worst.a, b: m, value: v1, err: e1 });
        heap.push(Panel { a: m, b: worst.b, value: v2, err: e2 });
        panels += 1;
    }
}

pub(crate) fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: &QuadOpts) -> Result<(f64, f64)> {
    integrate_split(f, a, b, &[], opts)
}

/// Declared decay of an integrand on an unbounded support direction.
#[derive(Debug, Clone, Copy)]
pub(crate) enum TailDecay {
    /// Integrand behaves like x^(-s) for large x; requires s > 1 to converge.
    Algebraic { s: f64 },
    /// Integrand decays like exp(-rate * x).
    Exponential { rate: f64 },
}

/// Integral of `f` over [lower, infinity) given the decay of the integrand.
///
/// Algebraic tails are mapped through x = lower * u^(-m) with m chosen so the
/// transformed integrand vanishes at u = 0 at least linearly; exponential
/// tails are truncated where the factor is below 1e-35 of its start value.
pub(crate) fn integrate_tail<F: Fn(f64) -> f64>(
    f: &F,
    lower: f64,
    decay: TailDecay,
    opts: &QuadOpts,
) -> Result<(f64, f64)> {
    match decay {
        TailDecay::Exponential { rate } => {
            if rate <= 0.0 {
                return Err(Error::Quadrature(format!("non-positive tail rate {rate}")));
            }
            let cut = lower + 80.0 / rate;
            integrate(f, lower, cut, opts)
        }
        TailDecay::Algebraic { s } => {
            if s <= 1.0 {
                return Err(Error::TailDivergence(format!(
                    "algebraic tail exponent {s} <= 1, integral diverges"
                )));
            }
            if lower <= 0.0 {
                return Err(Error::Quadrature(
                    "algebraic tail substitution needs a positive lower bound".into(),
                ));
            }
            // Exponent of the transformed integrand at u=0 is m*(s-1)-1.
            let m = (2.0 / (s - 1.0)).ceil().max(2.0);
            let g = |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let x = lower * u.powf(-m);
                f(x) * lower * m * u.powf(-m - 1.0)
            };
            integrate(&g, 0.0, 1.0, opts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact_on_single_panel() {
        let (v, e) = integrate(&|x: f64| 3.0 * x * x, 0.0, 2.0, &QuadOpts::default()).unwrap();
        assert!((v - 8.0).abs() < 1e-13, "got {v}");
        assert!(e < 1e-10);
    }

    #[test]
    fn kink_needs_forced_split() {
        let f = |x: f64| x.abs();
        let opts = QuadOpts::with_rel_tol(1e-12);
        let (v, _) = integrate_split(&f, -1.0, 1.0, &[0.0], &opts).unwrap();
        assert!((v - 1.0).abs() < 1e-14, "split quadrature off: {v}");
    }

    #[test]
    fn integrable_endpoint_singularity_converges() {
        // int_0^1 x^(-1/2) dx = 2
        let (v, _) = integrate(&|x: f64| if x > 0.0 { x.powf(-0.5) } else { 0.0 }, 0.0, 1.0, &QuadOpts::with_rel_tol(1e-10)).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "got {v}");
    }

    #[test]
    fn algebraic_tail_matches_closed_form() {
        // int_1^inf x^(-2.2) dx = 1/1.2
        let (v, _) = integrate_tail(
            &|x: f64| x.powf(-2.2),
            1.0,
            TailDecay::Algebraic { s: 2.2 },
            &QuadOpts::with_rel_tol(1e-11),
        )
        .unwrap();
        assert!((v - 1.0 / 1.2).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn exponential_tail_matches_closed_form() {
        // int_0^inf e^(-3x) dx = 1/3
        let (v, _) = integrate_tail(
            &|x: f64| (-3.0 * x).exp(),
            0.0,
            TailDecay::Exponential { rate: 3.0 },
            &QuadOpts::with_rel_tol(1e-11),
        )
        .unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn divergent_tail_is_reported() {
        let r = integrate_tail(
            &|x: f64| x.powf(-0.8),
            1.0,
            TailDecay::Algebraic { s: 0.8 },
            &QuadOpts::default(),
        );
        assert!(matches!(r, Err(Error::TailDivergence(_))));
    }
}
