//! Adaptive Simpson quadrature on a finite interval.

use crate::error::{Error, Result};

const MIN_DEPTH: u32 = 4;
const MAX_DEPTH: u32 = 48;

/// ∫_a^b f(x) dx to absolute tolerance `tol`.
///
/// Fails when the recursion hits its depth limit without meeting the
/// tolerance, which for the integrands used here means a malformed
/// (unbounded or discontinuous-everywhere) function.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quadrature needs a finite interval and tol > 0, got [{a}, {b}], tol = {tol}"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let out = step(&f, a, b, fa, fm, fb, whole, tol, 0)?;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::QuadratureNonConvergence { lower: a, upper: b })
    }
}

#[allow(clippy::too_many_arguments)]
fn step<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Below the rounding floor further splitting cannot help.
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth >= MIN_DEPTH && (delta.abs() <= 15.0 * tol || delta.abs() <= floor) {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH || !delta.is_finite() {
        return Err(Error::QuadratureNonConvergence { lower: a, upper: b });
    }
    let half = 0.5 * tol;
    Ok(step(f, a, m, fa, flm, fm, left, half, depth + 1)? + step(f, m, b, fm, frm, fb, right, half, depth + 1)?)
}
