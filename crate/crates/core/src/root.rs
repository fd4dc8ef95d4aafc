//! Bracketed scalar root finding.

/// Iteration cap shared by every bracketed solve in the crate.
pub const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Bisection on `[lo, hi]` for a function whose sign differs at the ends.
///
/// Stops when `|f(x)| <= f_tol`, when the bracket is narrower than `x_tol`,
/// or after [`MAX_ITER`] halvings. Returns `None` when the ends do not
/// bracket a sign change.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, f_tol: f64, x_tol: f64) -> Option<Root>
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return Some(Root {
            x: lo,
            residual: 0.0,
            iterations: 0,
        });
    }
    let f_hi = f(hi);
    if f_hi == 0.0 {
        return Some(Root {
            x: hi,
            residual: 0.0,
            iterations: 0,
        });
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return None;
    }

    let mut best = if f_lo.abs() < f_hi.abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    for it in 1..=MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid.abs() <= f_tol || (hi - lo).abs() <= x_tol {
            return Some(Root {
                x: mid,
                residual: f_mid,
                iterations: it,
            });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(Root {
        x: best.0,
        residual: best.1,
        iterations: MAX_ITER,
    })
}
