//! Stepsize certification for the proximal ADMM penalties.
//!
//! A penalty `rho` is certified for a component with gradient Lipschitz
//! constant `L` and staleness bound `T` when
//!
//! ```text
//! alpha = rho - 2 (1/rho + c L / (2 rho^2)) L^2 (T + 1)^2 - L T^2 > 0
//! ```
//!
//! and `rho` clears the class multiplier `c L`, where `c` is 7 for a general
//! smooth component (strict bound), 1 for a convex one and 5 for a concave
//! one (both non-strict).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Curvature class of a smooth component; selects the certification rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    General,
    Convex,
    Concave,
}

impl Curvature {
    /// Factor `c` in both the alpha formula and the lower bound `rho (>|>=) c L`.
    pub fn multiplier(self) -> f64 {
        match self {
            Curvature::General => 7.0,
            Curvature::Convex => 1.0,
            Curvature::Concave => 5.0,
        }
    }

    /// Only the general class uses a strict inequality on the multiplier bound.
    pub fn strict_bound(self) -> bool {
        matches!(self, Curvature::General)
    }

    pub fn rule(self) -> String {
        let rel = if self.strict_bound() { ">" } else { ">=" };
        let c = self.multiplier();
        format!("alpha = rho - 2(1/rho + {c}L/(2rho^2))L^2(T+1)^2 - L*T^2 > 0 and rho {rel} {c}L")
    }
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Curvature::General => "general",
            Curvature::Convex => "convex",
            Curvature::Concave => "concave",
        })
    }
}

impl std::str::FromStr for Curvature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Curvature::General),
            "convex" => Ok(Curvature::Convex),
            "concave" => Ok(Curvature::Concave),
            other => Err(Error::InvalidArgument(format!(
                "unknown curvature class `{other}` (expected general, convex or concave)"
            ))),
        }
    }
}

/// Verdict for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizeCertificate {
    pub lipschitz: f64,
    pub delay_bound: usize,
    pub curvature: Curvature,
    pub rho: f64,
    pub alpha: f64,
    pub feasible: bool,
}

impl StepsizeCertificate {
    /// Human-readable reason when the certificate is infeasible.
    pub fn failure_reason(&self) -> Option<String> {
        if self.feasible {
            return None;
        }
        let mut parts = Vec::new();
        if !(self.alpha > 0.0) {
            parts.push(format!("alpha = {} is not positive", self.alpha));
        }
        if !clears_multiplier(self.rho, self.lipschitz, self.curvature) {
            let rel = if self.curvature.strict_bound() {
                ">"
            } else {
                ">="
            };
            parts.push(format!(
                "rho must satisfy rho {rel} {} * L = {}",
                self.curvature.multiplier(),
                self.curvature.multiplier() * self.lipschitz
            ));
        }
        Some(parts.join("; "))
    }
}

fn validate(rho: f64, lipschitz: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rho must be positive and finite, got {rho}"
        )));
    }
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz constant must be positive and finite, got {lipschitz}"
        )));
    }
    Ok(())
}

fn clears_multiplier(rho: f64, lipschitz: f64, class: Curvature) -> bool {
    let bound = class.multiplier() * lipschitz;
    if class.strict_bound() {
        rho > bound
    } else {
        rho >= bound
    }
}

/// Class-specific alpha, evaluated exactly as the closed form above.
pub fn alpha(rho: f64, lipschitz: f64, delay_bound: usize, class: Curvature) -> Result<f64> {
    validate(rho, lipschitz)?;
    let l = lipschitz;
    let t = delay_bound as f64;
    let t1 = t + 1.0;
    let c = class.multiplier();
    Ok(rho - 2.0 * (1.0 / rho + c * l / (2.0 * rho * rho)) * l * l * (t1 * t1) - l * t * t)
}

pub fn certify(
    lipschitz: f64,
    delay_bound: usize,
    rho: f64,
    class: Curvature,
) -> Result<StepsizeCertificate> {
    let alpha = alpha(rho, lipschitz, delay_bound, class)?;
    let feasible = alpha > 0.0 && clears_multiplier(rho, lipschitz, class);
    Ok(StepsizeCertificate {
        lipschitz,
        delay_bound,
        curvature: class,
        rho,
        alpha,
        feasible,
    })
}

/// Smallest certified `rho`, to within additive `precision`.
///
/// Starts at the class multiplier bound, doubles until feasible, then bisects.
/// Alpha is strictly increasing in `rho` (its derivative is
/// `1 + 2(1/rho^2 + cL/rho^3)L^2(T+1)^2`), so feasibility is monotone.
pub fn min_rho(
    lipschitz: f64,
    delay_bound: usize,
    class: Curvature,
    precision: f64,
) -> Result<f64> {
    if !(precision > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "precision must be positive, got {precision}"
        )));
    }
    let floor = class.multiplier() * lipschitz;
    validate(floor, lipschitz)?;
    let feasible = |rho: f64| certify(lipschitz, delay_bound, rho, class).map(|c| c.feasible);

    if feasible(floor)? {
        return Ok(floor);
    }
    let mut lo = floor;
    let mut hi = 2.0 * floor;
    while !feasible(hi)? {
        lo = hi;
        hi *= 2.0;
    }
    let mut alpha_lo = alpha(lo, lipschitz, delay_bound, class)?;
    let mut alpha_hi = alpha(hi, lipschitz, delay_bound, class)?;
    while hi - lo > precision {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let alpha_mid = alpha(mid, lipschitz, delay_bound, class)?;
        assert!(
            alpha_lo <= alpha_mid && alpha_mid <= alpha_hi,
            "alpha not monotone on [{lo}, {hi}]"
        );
        if feasible(mid)? {
            hi = mid;
            alpha_hi = alpha_mid;
        } else {
            lo = mid;
            alpha_lo = alpha_mid;
        }
    }
    Ok(hi)
}

/// Default penalty: 1% above the smallest certified value.
pub fn default_rho(lipschitz: f64, delay_bound: usize, class: Curvature) -> Result<f64> {
    let precision = 1e-9 * lipschitz.max(f64::MIN_POSITIVE);
    Ok(1.01 * min_rho(lipschitz, delay_bound, class, precision)?)
}
