//! Angle wrapping conventions.
//!
//! Two half-open domains are used in the toolkit: end-effector roll/pitch/yaw
//! and all angular deltas live in `[-pi, pi)`, while revolute joint angles of
//! the arm live in `(-pi, pi]`.

use std::f64::consts::{PI, TAU};

use crate::error::{domain, Result};

/// Wraps an angle into `[-pi, pi)` as `((x + pi) mod 2pi) - pi`, using the
/// non-negative (mathematical) remainder.
pub fn wrap_angle(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("cannot wrap non-finite angle {x}")));
    }
    Ok(wrap(x))
}

/// Unchecked form of [`wrap_angle`] for values already known to be finite.
pub(crate) fn wrap(x: f64) -> f64 {
    // in-range values pass through bit-exact
    if (-PI..PI).contains(&x) {
        return x;
    }
    let mut r = (x + PI).rem_euclid(TAU);
    // rem_euclid may round up to exactly 2pi for tiny negative inputs
    if r >= TAU {
        r = 0.0;
    }
    let out = r - PI;
    if out >= PI {
        -PI
    } else {
        out
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub(crate) fn wrap_joint(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let w = wrap(x);
    if w == -PI {
        PI
    } else {
        w
    }
}
