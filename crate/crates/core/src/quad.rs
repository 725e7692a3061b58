//! Adaptive quadrature for integrals against jump densities on (-inf, 0).
//!
//! Two ends need care: the u -> 0- singularity of infinite-activity densities
//! and the unbounded left tail. Both are handled with dyadic bands whose
//! contributions must decay geometrically; a geometric-tail extrapolation closes
//! the remainder once the band ratio has stabilized. Band sums that fail to
//! decay are reported as divergent instead of silently truncated.

use crate::error::{Error, Result};

const MAX_SIMPSON_DEPTH: u32 = 48;

/// Outcome of a dyadic band sum.
pub(crate) enum BandSum {
    Converged(f64),
    Divergent { partial: f64 },
}

/// Adaptive Simpson rule on a finite interval; `f` must be smooth on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol.max(f64::MIN_POSITIVE), 0)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) < 1e-15 * (a.abs() + b.abs() + 1.0) {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_SIMPSON_DEPTH {
        return Err(Error::QuadratureNonConvergence {
            achieved: delta.abs() / 15.0,
            tolerance: tol,
        });
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// Sums `band(k)` for k = 0, 1, ... until the contributions are negligible and
/// decaying, then extrapolates the geometric remainder. The bands are expected
/// to be single-signed. Sustained non-decay above the tolerance is divergence.
pub(crate) fn sum_bands(
    band: &mut dyn FnMut(u32) -> Result<f64>,
    tol: f64,
    max_bands: u32,
) -> Result<BandSum> {
    let mut total = 0.0;
    let mut prev = f64::NAN;
    let mut flat_run = 0u32;
    for k in 0..max_bands {
        let b = band(k)?;
        total += b;
        let mag = b.abs();
        if mag <= tol {
            if prev.is_nan() || prev == 0.0 || mag == 0.0 {
                return Ok(BandSum::Converged(total));
            }
            let ratio = mag / prev.abs();
            if ratio < 0.95 {
                // geometric remainder; valid while band ratios keep shrinking
                total += b * ratio / (1.0 - ratio);
                return Ok(BandSum::Converged(total));
            }
            if mag <= tol * 1e-3 {
                return Ok(BandSum::Converged(total));
            }
        }
        if !prev.is_nan() && mag > tol {
            if mag >= 0.999 * prev.abs() {
                flat_run += 1;
                if flat_run >= 6 {
                    return Ok(BandSum::Divergent { partial: total });
                }
            } else {
                flat_run = 0;
            }
        }
        prev = b;
    }
    if prev.abs() > tol {
        return Err(Error::QuadratureNonConvergence {
            achieved: prev.abs(),
            tolerance: tol,
        });
    }
    Ok(BandSum::Converged(total))
}

/// Per-band Simpson tolerance so that the band errors sum below `tol`.
pub(crate) fn band_tol(tol: f64, k: u32) -> f64 {
    tol / ((k as f64 + 1.0) * (k as f64 + 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_is_exact() {
        let v = adaptive_simpson(&|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 0.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn simpson_exponential() {
        let v = adaptive_simpson(&f64::exp, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn band_sum_geometric() {
        // band k contributes 2^-k; exact sum 2
        let mut f = |k: u32| Ok(0.5f64.powi(k as i32));
        match sum_bands(&mut f, 1e-12, 200).unwrap() {
            BandSum::Converged(v) => assert!((v - 2.0).abs() < 1e-9, "got {v}"),
            BandSum::Divergent { .. } => panic!("diverged"),
        }
    }

    #[test]
    fn band_sum_detects_divergence() {
        let mut f = |_k: u32| Ok(1.0);
        match sum_bands(&mut f, 1e-12, 200).unwrap() {
            BandSum::Converged(_) => panic!("should diverge"),
            BandSum::Divergent { .. } => {}
        }
    }
}
