//! Continuous-noise mechanisms: scalar Laplace and Gaussian, and the planar
//! Laplace mechanism for location obfuscation.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_epsilon, LdpError, Result};

const BRANCH_POINT: f64 = -1.0 / E;
const HALLEY_MAX_ITER: usize = 50;
const HALLEY_TOL: f64 = 1e-14;

/// Lower real branch `W_{-1}` of the Lambert W function: the `w <= -1`
/// solving `w e^w = x` for `x` in `[-1/e, 0)`.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    if !(BRANCH_POINT..0.0).contains(&x) {
        return Err(LdpError::Domain(x));
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }
    let mut w = if x < -0.25 {
        // series in p = -sqrt(2 (1 + e x)) around the branch point
        let p = -(2.0 * (1.0 + E * x)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    let scale = x.abs().max(1e-300);
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= HALLEY_TOL * scale {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let mut next = w - step;
        if next > -1.0 {
            // overshot onto the principal branch; halve the way to -1 instead
            next = 0.5 * (w - 1.0);
        }
        if next == w {
            break;
        }
        w = next;
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(LdpError::InvalidInput(format!(
                "planar coordinates must be finite, got ({x}, {y})"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Privacy per unit of distance (per meter when coordinates are meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBudget {
    epsilon: f64,
}

impl GeoBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        ensure_epsilon(epsilon)?;
        Ok(Self { epsilon })
    }

    /// Distinguishability level `l` reached at radius `r`: `epsilon = l / r`.
    pub fn from_level_radius(l: f64, r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(LdpError::InvalidParameter(format!(
                "radius must be positive, got {r}"
            )));
        }
        Self::new(l / r)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Inverse radius CDF: `-(W_{-1}((p - 1) / e) + 1) / epsilon` for `p` in `[0, 1)`.
pub fn planar_laplace_radius(p: f64, budget: GeoBudget) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(LdpError::InvalidInput(format!(
            "radius quantile must lie in [0, 1), got {p}"
        )));
    }
    let w = lambert_w_minus1((p - 1.0) / E)?;
    Ok((-(w + 1.0) / budget.epsilon).max(0.0))
}

/// `Pr[radius <= r] = 1 - (1 + epsilon r) e^(-epsilon r)`.
pub fn planar_radius_cdf(r: f64, budget: GeoBudget) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let er = budget.epsilon * r;
    1.0 - (1.0 + er) * (-er).exp()
}

/// Noise offset for one draw: angle first, then radius quantile.
pub fn planar_laplace_offset<R: Rng + ?Sized>(budget: GeoBudget, rng: &mut R) -> (f64, f64) {
    let theta = rng.random::<f64>() * 2.0 * PI;
    let p = rng.random::<f64>();
    let r = planar_laplace_radius(p, budget).expect("quantile drawn from [0, 1)");
    (r * theta.cos(), r * theta.sin())
}

pub fn planar_laplace<R: Rng + ?Sized>(loc: PlanarPoint, budget: GeoBudget, rng: &mut R) -> PlanarPoint {
    let (dx, dy) = planar_laplace_offset(budget, rng);
    PlanarPoint {
        x: loc.x + dx,
        y: loc.y + dy,
    }
}

fn ensure_sensitivity(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(LdpError::InvalidParameter(format!(
            "sensitivity must be positive and finite, got {s}"
        )))
    }
}

/// Zero-centered Laplace draw with scale `b`, by inverting the CDF.
fn laplace_noise<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn laplace_mechanism<R: Rng + ?Sized>(value: f64, sensitivity1: f64, epsilon: f64, rng: &mut R) -> Result<f64> {
    ensure_sensitivity(sensitivity1)?;
    ensure_epsilon(epsilon)?;
    Ok(value + laplace_noise(sensitivity1 / epsilon, rng))
}

/// `sigma = (sensitivity2 / epsilon) sqrt(2 ln(1.25 / delta))`, valid only
/// for `epsilon < 1`.
pub fn gaussian_sigma(sensitivity2: f64, epsilon: f64, delta: f64) -> Result<f64> {
    ensure_sensitivity(sensitivity2)?;
    ensure_epsilon(epsilon)?;
    if epsilon >= 1.0 {
        return Err(LdpError::InvalidParameter(format!(
            "the Gaussian mechanism calibration requires epsilon < 1, got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LdpError::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(sensitivity2 / epsilon * (2.0 * (1.25 / delta).ln()).sqrt())
}

pub fn gaussian_mechanism<R: Rng + ?Sized>(
    value: f64,
    sensitivity2: f64,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<f64> {
    let sigma = gaussian_sigma(sensitivity2, epsilon, delta)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| LdpError::InvalidParameter(e.to_string()))?;
    Ok(value + normal.sample(rng))
}
