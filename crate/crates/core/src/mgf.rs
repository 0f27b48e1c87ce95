//! Exponential-martingale machinery: the `omega(theta)` map, its inverse root
//! pair, the restricted transforms `F_uv(omega)` and the quantities
//! conditional on the first descent `D` of a phase started at the level.
//!
//! Every function works at the effective level `p.level()`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::special::{phi1, phi3};

/// Real roots `theta1 <= theta2 < mu` of
/// `theta^2 + theta (lambda - mu - omega) + mu omega = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    pub theta1: f64,
    pub theta2: f64,
    pub omega: f64,
}

/// `(F00, F0H)` for a phase started at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginTransforms {
    pub f00: f64,
    pub f0h: f64,
}

/// `(FHH, FH0)` for a phase started at the level, given `D = d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTransforms {
    pub fhh: f64,
    pub fh0: f64,
}

/// `E[T_HH(d) 1{..}]` and `E[T_H0(d) 1{..}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMeans {
    pub mhh: f64,
    pub mh0: f64,
}

/// Largest admissible `omega`, `(sqrt(lambda) - sqrt(mu))^2`.
pub fn omega_upper_bound(p: &ModelParams) -> f64 {
    let d = p.lambda.sqrt() - p.mu.sqrt();
    d * d
}

pub fn omega_of_theta(theta: f64, p: &ModelParams) -> Result<f64> {
    if !(theta < p.mu) {
        return Err(Error::Domain(format!(
            "theta = {theta} must be below mu = {}",
            p.mu
        )));
    }
    Ok(theta * (p.mu - p.lambda - theta) / (p.mu - theta))
}

pub fn theta_roots(omega: f64, p: &ModelParams) -> Result<RootPair> {
    let bound = omega_upper_bound(p);
    if !omega.is_finite() || omega > bound {
        return Err(Error::Domain(format!(
            "omega = {omega} exceeds (sqrt(lambda) - sqrt(mu))^2 = {bound}"
        )));
    }
    let (sl, sm) = (p.lambda.sqrt(), p.mu.sqrt());
    let upper = (sl + sm) * (sl + sm);
    // Factored discriminant: both factors are non-negative on the domain.
    let disc = ((bound - omega) * (upper - omega)).max(0.0);
    let b = p.lambda - p.mu - omega;
    let c = p.mu * omega;
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
    let (theta1, theta2) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    Ok(RootPair {
        theta1,
        theta2,
        omega,
    })
}

/// Shared denominator `1 + (mu - theta1) L phi1(L (theta2 - theta1))`.
fn transform_denominator(roots: &RootPair, p: &ModelParams, level: f64) -> f64 {
    let gap = roots.theta2 - roots.theta1;
    1.0 + (p.mu - roots.theta1) * level * phi1(level * gap)
}

pub fn transform_from_origin(omega: f64, p: &ModelParams) -> Result<OriginTransforms> {
    let r = theta_roots(omega, p)?;
    let level = p.level();
    let gap = r.theta2 - r.theta1;
    let g = transform_denominator(&r, p, level);
    let f0h = (level * r.theta2).exp() / g;
    let f00 = level * phi1(level * gap) * (p.mu - r.theta1) * (p.mu - r.theta2) / (p.mu * g);
    Ok(OriginTransforms { f00, f0h })
}

/// Transforms for a phase from the level whose first descent lasts `d`.
/// A descent of length at least the level reaches the origin at once.
pub fn transform_from_h(omega: f64, d: f64, p: &ModelParams) -> Result<LevelTransforms> {
    check_descent(d)?;
    let r = theta_roots(omega, p)?;
    let level = p.level();
    if d >= level {
        return Ok(LevelTransforms { fhh: 0.0, fh0: 1.0 });
    }
    let gap = r.theta2 - r.theta1;
    let u = level - d;
    let g = transform_denominator(&r, p, level);
    let fhh = (r.theta2 * d).exp() * (1.0 + (p.mu - r.theta1) * u * phi1(gap * u)) / g;
    let fh0 = d * phi1(d * gap) * (p.mu - r.theta1) * (p.mu - r.theta2) * (-r.theta1 * u).exp()
        / (p.mu * g);
    Ok(LevelTransforms { fhh, fh0 })
}

fn check_descent(d: f64) -> Result<()> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::Domain(format!(
            "descent d = {d} must be non-negative"
        )));
    }
    Ok(())
}

/// `P_H0(d)`: probability that a phase from the level, whose first descent
/// lasts `d`, ends at the origin.
pub fn conditional_hit_prob(d: f64, p: &ModelParams) -> Result<f64> {
    check_descent(d)?;
    let level = p.level();
    if d >= level {
        return Ok(1.0);
    }
    let k = p.mu - p.lambda;
    let prob = p.lambda * d * phi1(k * d) / (1.0 + p.mu * level * phi1(k * level));
    // Close to 1 the quotient can round one ulp past it.
    Ok(prob.min(1.0))
}

/// Means of the truncated stopping times given the first descent `d`.
///
/// Needs distinct rates; the equal-rate seam is handled in `analytics`.
pub fn conditional_cycle_means(d: f64, p: &ModelParams) -> Result<ConditionalMeans> {
    check_descent(d)?;
    if p.is_equal_rate() {
        return Err(Error::DegenerateRates {
            gap: (p.lambda - p.mu).abs(),
        });
    }
    let level = p.level();
    if d >= level {
        return Ok(ConditionalMeans { mhh: 0.0, mh0: 0.0 });
    }
    let (l, m) = (p.lambda, p.mu);
    let k = m - l;
    if (k * level).abs() <= 1.0 {
        return Ok(conditional_means_near_seam(l, m, level, d));
    }
    let e = (k * level).exp();
    let ed = (k * d).exp();
    let lme = l - m * e;
    let den = (l - m) * lme * lme;
    let mhh = (d * lme * (l * l * ed + m * m * e)
        + l * m * e * (ed - 1.0) * (2.0 + level * (l + m)))
        / den;
    let mh0 = -l
        * (d * (m + l * ed) * lme + (ed - 1.0) * (l + l * m * level + m * e * (1.0 + l * level)))
        / den;
    Ok(ConditionalMeans { mhh, mh0 })
}

/// Conditional means for `|(mu - lambda) L| <= 1`.
///
/// With `x = (mu - lambda) L`, `b = mu L`, `r = d / L`, `p = phi3(x)` and
/// `q = phi3(r x)`, each mean is `L f(x) / s^2` where
/// `s = 1 + b phi1(x)` and `f` is a quintic in `x`. The direct form divides
/// an `O(x^3)` numerator by `x^3` and loses all precision as `x -> 0`.
#[allow(clippy::neg_multiply)]
fn conditional_means_near_seam(lambda: f64, mu: f64, level: f64, d: f64) -> ConditionalMeans {
    let x = (mu - lambda) * level;
    let b = mu * level;
    let r = d / level;
    let p = phi3(x);
    let q = phi3(r * x);
    let s = 1.0 + b * (1.0 + 0.5 * x + x * x * p);
    let c_hh = [
        r + 2.0 * b * r - b * r.powi(2) + (3_f64 / 2.0) * b.powi(2) * r
            - 3_f64 / 2.0 * b.powi(2) * r.powi(2)
            + (1_f64 / 2.0) * b.powi(2) * r.powi(3)
            - 1_f64 / 2.0 * b.powi(3) * r.powi(2)
            + (1_f64 / 2.0) * b.powi(3) * r.powi(3)
            + 2.0 * p * b.powi(3) * r
            - 2.0 * q * b.powi(2) * r.powi(3)
            - 2.0 * q * b.powi(3) * r.powi(3),
        r.powi(2) + (1_f64 / 2.0) * b * r + (3_f64 / 2.0) * b * r.powi(2) - b * r.powi(3)
            + (3_f64 / 2.0) * b.powi(2) * r
            - b.powi(2) * r.powi(3)
            + (1_f64 / 4.0) * b.powi(3) * r
            - 1_f64 / 2.0 * b.powi(3) * r.powi(2)
            + (1_f64 / 4.0) * b.powi(3) * r.powi(3)
            - 3.0 * p * b.powi(2) * r
            + p * b.powi(3) * r.powi(2)
            + 2.0 * q * b * r.powi(3)
            + q * b.powi(2) * r.powi(3)
            + q * b.powi(2) * r.powi(4)
            - 2.0 * q * b.powi(3) * r.powi(3)
            + q * b.powi(3) * r.powi(4),
        (1_f64 / 2.0) * r.powi(3) - 1_f64 / 2.0 * b * r
            + (1_f64 / 2.0) * b * r.powi(2)
            + (1_f64 / 2.0) * b * r.powi(3)
            + (3_f64 / 4.0) * b.powi(2) * r.powi(2)
            - 1_f64 / 2.0 * b.powi(2) * r.powi(3)
            + 3.0 * p * b * r
            + 3.0 * p * b.powi(2) * r
            - 3.0 * p * b.powi(2) * r.powi(2)
            + p * b.powi(3) * r
            - p * b.powi(3) * r.powi(2)
            + (1_f64 / 2.0) * p * b.powi(3) * r.powi(3)
            + q * b * r.powi(3)
            - 2.0 * q * b * r.powi(4)
            + 2.0 * q * b.powi(2) * r.powi(3)
            - 2.0 * q * b.powi(2) * r.powi(4)
            - q * b.powi(3) * r.powi(3)
            + (1_f64 / 2.0) * q * b.powi(3) * r.powi(4),
        q * r.powi(4) - 1_f64 / 4.0 * b * r.powi(2) + (1_f64 / 4.0) * b * r.powi(3) - p * b * r
            + 2.0 * p * b * r.powi(2)
            + (3_f64 / 2.0) * p * b.powi(2) * r.powi(2)
            - p * b.powi(2) * r.powi(3)
            + p.powi(2) * b.powi(3) * r
            + q * b * r.powi(4)
            + (3_f64 / 2.0) * q * b.powi(2) * r.powi(3)
            - q * b.powi(2) * r.powi(4)
            - 2.0 * p * q * b.powi(2) * r.powi(3)
            - 2.0 * p * q * b.powi(3) * r.powi(3)
            + p * q * b.powi(3) * r.powi(4),
        -1_f64 / 2.0 * p * b * r.powi(2) + (1_f64 / 2.0) * p * b * r.powi(3)
            - 1_f64 / 2.0 * q * b * r.powi(3)
            + (1_f64 / 2.0) * q * b * r.powi(4)
            + 2.0 * p * q * b * r.powi(3)
            + 3.0 * p * q * b.powi(2) * r.powi(3)
            - 2.0 * p * q * b.powi(2) * r.powi(4),
        -p * q * b * r.powi(3) + p * q * b * r.powi(4),
    ];
    let c_h0 = [
        (1_f64 / 2.0) * b * r.powi(2) + (1_f64 / 2.0) * b.powi(2) * r.powi(2)
            - 1_f64 / 2.0 * b.powi(2) * r.powi(3)
            + (1_f64 / 2.0) * b.powi(3) * r
            - 1_f64 / 2.0 * b.powi(3) * r.powi(3)
            - 2.0 * p * b.powi(3) * r
            + 2.0 * q * b.powi(2) * r.powi(3)
            + 2.0 * q * b.powi(3) * r.powi(3),
        -1_f64 / 2.0 * r.powi(2) - 1_f64 / 2.0 * b * r.powi(2) + b * r.powi(3) - b.powi(2) * r
            + (1_f64 / 4.0) * b.powi(2) * r.powi(2)
            + b.powi(2) * r.powi(3)
            + (1_f64 / 4.0) * b.powi(3) * r.powi(2)
            - 1_f64 / 4.0 * b.powi(3) * r.powi(3)
            + 4.0 * p * b.powi(2) * r
            + p * b.powi(3) * r
            - p * b.powi(3) * r.powi(2)
            - 3.0 * q * b * r.powi(3)
            - 3.0 * q * b.powi(2) * r.powi(3)
            - q * b.powi(2) * r.powi(4)
            + q * b.powi(3) * r.powi(3)
            - q * b.powi(3) * r.powi(4),
        -1_f64 / 2.0 * r.powi(3) + q * r.powi(3) + (1_f64 / 2.0) * b * r
            - 1_f64 / 4.0 * b * r.powi(2)
            - 1_f64 / 2.0 * b * r.powi(3)
            - 1_f64 / 2.0 * b.powi(2) * r.powi(2)
            + (1_f64 / 2.0) * b.powi(2) * r.powi(3)
            - 2.0 * p * b * r
            - 2.0 * p * b.powi(2) * r
            + (5_f64 / 2.0) * p * b.powi(2) * r.powi(2)
            + (1_f64 / 2.0) * p * b.powi(3) * r.powi(2)
            - 1_f64 / 2.0 * p * b.powi(3) * r.powi(3)
            + q * b * r.powi(3)
            + 2.0 * q * b * r.powi(4)
            - 3_f64 / 2.0 * q * b.powi(2) * r.powi(3)
            + 2.0 * q * b.powi(2) * r.powi(4)
            + (1_f64 / 2.0) * q * b.powi(3) * r.powi(3)
            - 1_f64 / 2.0 * q * b.powi(3) * r.powi(4),
        -q * r.powi(4) + (1_f64 / 4.0) * b * r.powi(2) - 1_f64 / 4.0 * b * r.powi(3) + p * b * r
            - 3_f64 / 2.0 * p * b * r.powi(2)
            - p * b.powi(2) * r.powi(2)
            + p * b.powi(2) * r.powi(3)
            + (1_f64 / 2.0) * q * b * r.powi(3)
            - q * b * r.powi(4)
            - q * b.powi(2) * r.powi(3)
            + q * b.powi(2) * r.powi(4)
            + p * q * b.powi(2) * r.powi(3)
            + p * q * b.powi(3) * r.powi(3)
            - p * q * b.powi(3) * r.powi(4),
        (1_f64 / 2.0) * p * b * r.powi(2) - 1_f64 / 2.0 * p * b * r.powi(3)
            + (1_f64 / 2.0) * q * b * r.powi(3)
            - 1_f64 / 2.0 * q * b * r.powi(4)
            - p * q * b * r.powi(3)
            - 2.0 * p * q * b.powi(2) * r.powi(3)
            + 2.0 * p * q * b.powi(2) * r.powi(4),
        p * q * b * r.powi(3) - p * q * b * r.powi(4),
    ];
    let horner = |c: &[f64; 6]| c.iter().rev().fold(0.0, |acc, &cj| acc * x + cj);
    let scale = level / (s * s);
    ConditionalMeans {
        mhh: scale * horner(&c_hh),
        mh0: scale * horner(&c_h0),
    }
}

/// `exp(theta Y - lambda t theta / (mu - theta))`, whose mean over phases
/// from the origin is one.
pub fn wald_statistic(theta: f64, y_at_stop: f64, t_stop: f64, p: &ModelParams) -> Result<f64> {
    if !(theta < p.mu) {
        return Err(Error::Domain(format!(
            "theta = {theta} must be below mu = {}",
            p.mu
        )));
    }
    Ok((theta * y_at_stop - p.lambda * t_stop * theta / (p.mu - theta)).exp())
}
