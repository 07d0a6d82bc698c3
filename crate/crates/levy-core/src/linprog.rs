//! Dense tableau simplex for the small feasibility/support problems that the
//! geometry layer produces (a handful of variables, tens of rows).
//!
//! Problems arrive as: maximize c.y subject to A y <= u with u >= 0, y free.
//! Free variables are split into positive and negative parts so the slack
//! basis is immediately feasible; Bland's rule keeps the walk from cycling.
//! Callers guarantee boundedness by including box rows, so an unbounded
//! verdict is reported as an error rather than handled.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 20_000;

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub value: f64,
    pub point: DVector<f64>,
}

/// Maximize `c . y` over `{ y : a y <= ub }` with `ub >= 0` componentwise.
pub(crate) fn maximize(c: &DVector<f64>, a: &DMatrix<f64>, ub: &DVector<f64>) -> Result<LpSolution> {
    let m = a.nrows();
    let d = a.ncols();
    assert_eq!(c.len(), d, "objective dimension mismatch");
    assert_eq!(ub.len(), m, "rhs dimension mismatch");
    if let Some(bad) = ub.iter().find(|v| **v < -PIVOT_TOL) {
        return Err(Error::PreconditionFailed(format!(
            "simplex seed needs nonnegative rhs, got {bad}"
        )));
    }

    // Columns: y+ (d), y- (d), slacks (m). Row `m` is the objective.
    let n = 2 * d + m;
    let mut t = DMatrix::<f64>::zeros(m + 1, n + 1);
    for i in 0..m {
        for j in 0..d {
            t[(i, j)] = a[(i, j)];
            t[(i, d + j)] = -a[(i, j)];
        }
        t[(i, 2 * d + i)] = 1.0;
        t[(i, n)] = ub[i].max(0.0);
    }
    for j in 0..d {
        t[(m, j)] = -c[j];
        t[(m, d + j)] = c[j];
    }
    let mut basis: Vec<usize> = (2 * d..2 * d + m).collect();

    for _ in 0..MAX_ITERS {
        // Bland: first column with negative reduced cost enters.
        let Some(enter) = (0..n).find(|&j| t[(m, j)] < -PIVOT_TOL) else {
            let mut y = DVector::zeros(d);
            for (i, &bj) in basis.iter().enumerate() {
                if bj < d {
                    y[bj] += t[(i, n)];
                } else if bj < 2 * d {
                    y[bj - d] -= t[(i, n)];
                }
            }
            return Ok(LpSolution { value: t[(m, n)], point: y });
        };
        // Ratio test, ties broken by smallest basis index (Bland).
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = t[(i, enter)];
            if aij > PIVOT_TOL {
                let ratio = t[(i, n)] / aij;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - PIVOT_TOL
                            || (ratio < lr + PIVOT_TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::PreconditionFailed(
                "linear program unbounded; caller must supply box rows".into(),
            ));
        };
        // Pivot on (row, enter).
        let piv = t[(row, enter)];
        for j in 0..=n {
            t[(row, j)] /= piv;
        }
        for i in 0..=m {
            if i != row {
                let factor = t[(i, enter)];
                if factor != 0.0 {
                    for j in 0..=n {
                        t[(i, j)] -= factor * t[(row, j)];
                    }
                }
            }
        }
        basis[row] = enter;
    }
    Err(Error::PreconditionFailed("simplex iteration cap reached".into()))
}
