//! Proximity operators for the weighted l1 norm and the Euclidean ball.
//!
//! The x-update needs `argmin_{|u| <= r} tau*|u|_1 + 0.5*|u - v|^2`. Writing
//! the KKT conditions of that problem, the ball multiplier `mu` enters every
//! coordinate as `u_i = soft(v_i, tau) / (1 + mu)`, so the combined operator is
//! exactly the radial projection of the soft-thresholded point.

use crate::error::{Error, Result};
use crate::Vector;

/// `prox_{tau*|.|_1}(v)`, componentwise `sign(v_i) * max(|v_i| - tau, 0)`.
pub fn soft_threshold(v: &Vector, tau: f64) -> Result<Vector> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "soft-threshold level must be nonnegative, got {tau}"
        )));
    }
    Ok(shrink(v, tau))
}

pub(crate) fn shrink(v: &Vector, tau: f64) -> Vector {
    v.map(|vi| {
        let mag = vi.abs() - tau;
        if mag > 0.0 {
            mag.copysign(vi)
        } else {
            0.0
        }
    })
}

/// Euclidean projection onto `{u : |u|_2 <= radius}`.
pub fn project_ball(v: &Vector, radius: f64) -> Vector {
    assert!(radius > 0.0, "ball radius must be positive, got {radius}");
    let norm = v.norm();
    if norm <= radius {
        v.clone()
    } else {
        v * (radius / norm)
    }
}

/// `argmin_{|u| <= radius} tau*|u|_1 + 0.5*|u - v|^2`.
pub fn prox_l1_ball(v: &Vector, tau: f64, radius: f64) -> Vector {
    assert!(tau >= 0.0, "l1 weight must be nonnegative, got {tau}");
    project_ball(&shrink(v, tau), radius)
}
