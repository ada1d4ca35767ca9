//! Scalar helpers. `core` has no transcendental functions, so these route
//! through `libm`.

use crate::EPS;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt_guarded(x: f64) -> f64 {
    libm::sqrt(x.max(EPS))
}

#[inline]
pub fn ln_guarded(x: f64) -> f64 {
    libm::log(x.max(EPS))
}

/// Huber penalty with unit threshold.
#[inline]
pub fn huber(x: f64, y: f64) -> f64 {
    let r = (x - y).abs();
    if r <= 1.0 {
        0.5 * r * r
    } else {
        r - 0.5
    }
}

/// Derivative of [`huber`] with respect to `x`; the derivative with respect
/// to `y` is its negation.
#[inline]
pub fn huber_grad(x: f64, y: f64) -> f64 {
    (x - y).clamp(-1.0, 1.0)
}
