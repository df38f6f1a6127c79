//! Small dependency-free convex solvers: scalar root bracketing, golden-section
//! search, a min-max-by-bisection driver and a damped-Newton log-barrier method
//! for smooth convex programs of a few dozen variables.

mod barrier;
mod linalg;

pub use barrier::*;
pub use linalg::cholesky_solve;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("upper end {hi} of the search interval is infeasible")]
    Infeasible { hi: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
}

/// Root of a monotone scalar map on `[lo, hi]`; returns the midpoint of a
/// bracketing interval no wider than `tol`.
pub fn bisect_root<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, ConvexError> {
    if !(lo <= hi) {
        return Err(ConvexError::BadInterval { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(ConvexError::NoBracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let rising = fb > 0.0;
    for _ in 0..400 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm > 0.0) == rising {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Minimizer of a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Smallest `tau` in `[lo, hi]` (within `tol`) accepted by a feasibility
/// oracle that is monotone in `tau`. The returned value is always one the
/// oracle accepted.
pub fn minmax_bisect<F: FnMut(f64) -> bool>(
    mut feasible: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, ConvexError> {
    if !(lo <= hi) {
        return Err(ConvexError::BadInterval { lo, hi });
    }
    if !feasible(hi) {
        return Err(ConvexError::Infeasible { hi });
    }
    let (mut a, mut b) = (lo, hi);
    if feasible(a) {
        return Ok(a);
    }
    for _ in 0..400 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if feasible(m) {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(b)
}
