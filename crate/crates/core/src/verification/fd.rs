use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// Central-difference step.
    pub h: f64,
    /// Largest accepted relative error.
    pub tol: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { h: 1e-5, tol: 1e-5 }
    }
}

/// Magnitudes below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// Central differences `(f(x + h eⱼ) − f(x − h eⱼ)) / 2h`.
///
/// Coordinates where either evaluation is not finite come back as NaN.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            xp[j] = x[j] + h;
            let fp = f(&xp);
            xp[j] = x[j] - h;
            let fm = f(&xp);
            xp[j] = x[j];
            if fp.is_finite() && fm.is_finite() {
                (fp - fm) / (2.0 * h)
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Normwise relative error `max|a − f| / max(max|f|, REL_FLOOR)`.
///
/// Any NaN in either input yields infinity, so a failed evaluation can never
/// pass a check.
pub fn rel_error(analytic: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(
        analytic.len(),
        reference.len(),
        "length mismatch in rel_error"
    );
    if analytic.iter().chain(reference).any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let diff = analytic
        .iter()
        .zip(reference)
        .map(|(a, f)| (a - f).abs())
        .fold(0.0, f64::max);
    let scale = reference
        .iter()
        .map(|f| f.abs())
        .fold(0.0, f64::max)
        .max(REL_FLOOR);
    diff / scale
}
