//! Small bracketing helpers shared by the price and power searches.
//!
//! Both routines work on closed intervals and never evaluate outside them.

use crate::error::{Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `rel_tol * max(|lo|, |hi|)` or after
/// 400 halvings, and returns the midpoint of the final bracket.
pub fn bisect_root<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::RootFinding(format!(
            "no sign change on [{lo:e}, {hi:e}]: f(lo)={f_lo:e}, f(hi)={f_hi:e}"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * lo.abs().max(hi.abs()) || mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Boundary of a monotone predicate on `[lo, hi]` with `pred(lo) == false` and
/// `pred(hi) == true`. Halving happens in log space, so both ends must be positive.
///
/// Returns `(last_false, first_true)`; the caller decides which side to use.
pub fn bisect_predicate_log<P>(mut pred: P, mut lo: f64, mut hi: f64, rel_tol: f64) -> (f64, f64)
where
    P: FnMut(f64) -> bool,
{
    debug_assert!(lo > 0.0 && hi > lo);
    for _ in 0..400 {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`.
///
/// Returns the best point evaluated and its value.
pub fn golden_section_max<F>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let (mut best_x, mut best_f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..200 {
        if hi - lo <= rel_tol * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx > best_f {
                best_x = x;
                best_f = fx;
            }
        }
    }
    (best_x, best_f)
}
