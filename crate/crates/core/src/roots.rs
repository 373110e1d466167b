//! Bracketed one-dimensional solvers shared by the adjustment routines.

use crate::error::{Error, Result};

/// Outcome of a bracketed solve.
#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton iteration safeguarded by a bracket on an increasing function.
///
/// `f` returns `(value, derivative)`; the root of `value` is sought in
/// `[lo, hi]` where `value(lo) <= 0 <= value(hi)`. Any Newton step that
/// leaves the current bracket (or a vanishing derivative) is replaced by a
/// bisection step. Stops once `|value| <= ftol` or the step falls below
/// `xtol`.
pub fn newton_bracketed<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    ftol: f64,
    xtol: f64,
    max_iter: usize,
    solver: &'static str,
) -> Result<Root>
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    let mut last = f64::NAN;
    for it in 1..=max_iter {
        let (fx, dfx) = f(x);
        last = fx;
        if fx.abs() <= ftol {
            return Ok(Root { x, residual: fx, iterations: it });
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= xtol * x.abs().max(1.0) || hi - lo <= xtol * x.abs().max(1.0) {
            let (fn_, _) = f(next);
            return Ok(Root { x: next, residual: fn_, iterations: it });
        }
        x = next;
    }
    Err(Error::NonConvergence {
        solver,
        iterations: max_iter,
        last: x,
        residual: last,
        trace: Vec::new(),
    })
}

/// Plain bisection on an increasing function with `f(lo) <= 0 <= f(hi)`.
///
/// Stops when `|f| <= ftol` or the bracket is narrower than `xtol`.
pub fn bisect_increasing<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    ftol: f64,
    xtol: f64,
    max_iter: usize,
    solver: &'static str,
) -> Result<Root>
where
    F: FnMut(f64) -> f64,
{
    let mut mid = 0.5 * (lo + hi);
    let mut fm = f64::NAN;
    for it in 1..=max_iter {
        mid = 0.5 * (lo + hi);
        fm = f(mid);
        if fm.abs() <= ftol || (hi - lo) <= xtol {
            return Ok(Root { x: mid, residual: fm, iterations: it });
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        solver,
        iterations: max_iter,
        last: mid,
        residual: fm,
        trace: Vec::new(),
    })
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
///
/// Returns `(argmax, max)`; the endpoints are evaluated too so a monotone
/// objective returns the boundary.
pub fn golden_max<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64, usize)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (fa0, fb0) = (f(a), f(b));
    let (a0, b0) = (a, b);
    let mut evals = 2;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    evals += 2;
    while (b - a) > xtol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        evals += 1;
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if fa0 > best.1 {
        best = (a0, fa0);
    }
    if fb0 > best.1 {
        best = (b0, fb0);
    }
    (best.0, best.1, evals)
}
