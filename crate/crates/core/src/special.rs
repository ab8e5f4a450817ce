//! Standard normal density and distribution helpers that stay finite far into
//! the lower tail.

use libm::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const BRANCH: f64 = -10.0;

pub fn log_phi(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn phi(x: f64) -> f64 {
    log_phi(x).exp()
}

/// Standard normal CDF.
pub fn ndtr(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `log Φ(x)`, accurate for arguments well below -38.
pub fn log_ndtr(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > BRANCH {
        ndtr(x).ln()
    } else {
        log_phi(x) + mills_ratio(-x).ln()
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`.
pub fn inv_mills(x: f64) -> f64 {
    if x > BRANCH {
        phi(x) / ndtr(x)
    } else {
        1.0 / mills_ratio(-x)
    }
}

/// Mills ratio `Φ(-t)/φ(t)` for large positive `t`, by the continued fraction
/// `1/(t + 1/(t + 2/(t + 3/(t + ...))))` evaluated with the modified Lentz method.
fn mills_ratio(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64;
        d = t + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = t + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
