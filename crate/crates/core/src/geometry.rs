//! Planar poses and the metric used to score estimates.
//!
//! A [`State`] is a position in the plane plus a heading kept in `[0, 2π)`.
//! Distances between poses are the Frobenius norm of the difference of their
//! homogeneous transforms, which reduces to
//! `Δp1² + Δp2² + 4(1 − cos Δθ)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_angle(raw: f64) -> Result<f64> {
    if !raw.is_finite() {
        return Err(Error::InvalidArgument(format!("angle must be finite, got {raw}")));
    }
    Ok(wrap(raw))
}

/// `rem_euclid` can round up to exactly 2π for tiny negative inputs; one
/// conditional correction is enough.
#[inline]
pub(crate) fn wrap(raw: f64) -> f64 {
    debug_assert!(raw.is_finite());
    let r = raw.rem_euclid(TAU);
    if r >= TAU {
        r - TAU
    } else {
        r
    }
}

/// Shortest signed angular difference `a − b` in `(−π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// SPP pose: planar position in meters and heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub p1: f64,
    pub p2: f64,
    theta: f64,
}

impl State {
    pub const ORIGIN: State = State {
        p1: 0.0,
        p2: 0.0,
        theta: 0.0,
    };

    /// Builds a pose, wrapping the heading. Panics on a non-finite heading;
    /// use [`State::try_new`] for untrusted input.
    pub fn new(p1: f64, p2: f64, theta: f64) -> Self {
        Self::try_new(p1, p2, theta).expect("state components must be finite")
    }

    pub fn try_new(p1: f64, p2: f64, theta: f64) -> Result<Self> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "position must be finite, got ({p1}, {p2})"
            )));
        }
        Ok(Self {
            p1,
            p2,
            theta: wrap_angle(theta)?,
        })
    }

    #[inline]
    pub(crate) fn from_parts_unchecked(p1: f64, p2: f64, theta: f64) -> Self {
        debug_assert!((0.0..TAU).contains(&theta));
        Self { p1, p2, theta }
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn position(&self) -> (f64, f64) {
        (self.p1, self.p2)
    }

    /// Same pose with the position shifted by `(d1, d2)`.
    pub fn translated(&self, d1: f64, d2: f64) -> Self {
        Self {
            p1: self.p1 + d1,
            p2: self.p2 + d2,
            theta: self.theta,
        }
    }
}

/// Squared metric distance, `‖H(a) − H(b)‖_F²`.
#[inline]
pub fn distance_squared(a: &State, b: &State) -> f64 {
    let d1 = a.p1 - b.p1;
    let d2 = a.p2 - b.p2;
    d1 * d1 + d2 * d2 + 4.0 * (1.0 - (a.theta - b.theta).cos())
}

#[inline]
pub fn distance(a: &State, b: &State) -> f64 {
    distance_squared(a, b).max(0.0).sqrt()
}

/// Expresses `x` in the frame attached to `anchor`.
pub fn to_relative(anchor: &State, x: &State) -> State {
    let (s, c) = anchor.theta.sin_cos();
    let d1 = x.p1 - anchor.p1;
    let d2 = x.p2 - anchor.p2;
    State {
        p1: c * d1 + s * d2,
        p2: -s * d1 + c * d2,
        theta: wrap(x.theta - anchor.theta),
    }
}

/// Inverse of [`to_relative`]: maps a pose given in `anchor`'s frame back to
/// the world frame.
pub fn from_relative(anchor: &State, rel: &State) -> State {
    let (s, c) = anchor.theta.sin_cos();
    State {
        p1: c * rel.p1 - s * rel.p2 + anchor.p1,
        p2: s * rel.p1 + c * rel.p2 + anchor.p2,
        theta: wrap(rel.theta + anchor.theta),
    }
}
