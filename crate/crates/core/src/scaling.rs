//! Kac scaling: rates growing like `c^2 / sigma^2` with velocity `c`, under
//! which the process approaches a drifted Brownian motion and the mean cycle
//! and absorption times vanish.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analytics::{expected_absorption_time, expected_cycles};
use crate::error::{Error, Param, Result};
use crate::model::{ModelParams, SwitchingProb};
use crate::numfmt::sig12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub sigma: f64,
    pub drift_a: f64,
    pub drift_b: f64,
    pub c_values: Vec<f64>,
}

fn positive(x: f64, param: Param) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter(param))
    }
}

impl ScalingSpec {
    pub fn new(sigma: f64, drift_a: f64, drift_b: f64, c_values: Vec<f64>) -> Result<Self> {
        positive(sigma, Param::Sigma)?;
        positive(drift_a, Param::DriftA)?;
        positive(drift_b, Param::DriftB)?;
        if c_values.is_empty() {
            return Err(Error::Precondition("c_values must not be empty".into()));
        }
        for &c in &c_values {
            positive(c, Param::Velocity)?;
        }
        if c_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("c_values must be strictly increasing".into()));
        }
        Ok(ScalingSpec {
            sigma,
            drift_a,
            drift_b,
            c_values,
        })
    }

    /// Drift of the limiting diffusion, `drift_b - drift_a`.
    pub fn drift(&self) -> f64 {
        self.drift_b - self.drift_a
    }
}

/// Powers of two from 1 to `2^k`.
pub fn doubling_grid(k: u32) -> Vec<f64> {
    (0..=k).map(|i| f64::from(2_u32.pow(i))).collect()
}

/// `lambda = (c^2 + 2 a c) / sigma^2`, `mu = (c^2 + 2 b c) / sigma^2`,
/// velocity `c`, level `h`.
pub fn scaled_params(c: f64, spec: &ScalingSpec, h: f64) -> Result<ModelParams> {
    positive(c, Param::Velocity)?;
    let s2 = spec.sigma * spec.sigma;
    let lambda = (c * c + 2.0 * spec.drift_a * c) / s2;
    let mu = (c * c + 2.0 * spec.drift_b * c) / s2;
    ModelParams::new(lambda, mu, h)?.with_velocity(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub c: f64,
    pub lambda: f64,
    pub mu: f64,
    #[serde(rename = "EC00")]
    pub ec00: f64,
    #[serde(rename = "EC0H")]
    pub ec0h: f64,
    /// Mean length of a phase from the origin, `m00 + m0H`.
    #[serde(rename = "Etau")]
    pub etau: f64,
    #[serde(rename = "ETA")]
    pub eta: f64,
}

impl ScalingRow {
    pub fn columns(&self) -> [f64; 4] {
        [self.ec00, self.ec0h, self.etau, self.eta]
    }
}

pub fn scaling_sweep(spec: &ScalingSpec, h: f64, s: SwitchingProb) -> Result<Vec<ScalingRow>> {
    spec.c_values
        .iter()
        .map(|&c| {
            let p = scaled_params(c, spec, h)?;
            let m = expected_cycles(&p);
            let eta = expected_absorption_time(&p, s)?.expected_absorption_time;
            Ok(ScalingRow {
                c,
                lambda: p.lambda,
                mu: p.mu,
                ec00: m.m00,
                ec0h: m.m0h,
                etau: m.l1(),
                eta,
            })
        })
        .collect()
}

/// True when every column strictly decreases over the upper half of the rows.
pub fn decreasing_on_upper_half(rows: &[ScalingRow]) -> bool {
    let start = rows.len() / 2;
    rows[start..].windows(2).all(|w| {
        w[0].columns()
            .iter()
            .zip(w[1].columns())
            .all(|(a, b)| b < *a)
    })
}

pub const SWEEP_CSV_HEADER: &str = "c,lambda,mu,EC00,EC0H,Etau,ETA";

pub fn sweep_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            sig12(r.c),
            sig12(r.lambda),
            sig12(r.mu),
            sig12(r.ec00),
            sig12(r.ec0h),
            sig12(r.etau),
            sig12(r.eta)
        );
    }
    out
}
