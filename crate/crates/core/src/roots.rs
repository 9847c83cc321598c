//! Bracketed scalar root finding shared by the model and boundary solvers.

use crate::error::{Error, Result};

/// Iteration cap for every bisection in the crate.
pub const MAX_BISECTION_ITERS: usize = 200;

/// Bisection on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (a zero at either end is
/// returned directly). The midpoint of the final bracket is returned.
pub fn bisect<F>(what: &'static str, mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() * fb.signum() < 0.0) {
        return Err(Error::NoBracket { what, lo, hi });
    }
    let a_negative = fa < 0.0;
    for _ in 0..MAX_BISECTION_ITERS {
        let m = 0.5 * (a + b);
        if b - a <= tol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == a_negative {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect("sqrt2", |x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn rejects_missing_sign_change() {
        let err = bisect("none", |x| x * x + 1.0, -1.0, 1.0, 1e-12).unwrap_err();
        assert!(matches!(err, Error::NoBracket { .. }));
    }

    #[test]
    fn decreasing_function() {
        let r = bisect("dec", |x| 1.0 - x, 0.0, 3.0, 1e-14).unwrap();
        assert!((r - 1.0).abs() < 1e-13);
    }
}
