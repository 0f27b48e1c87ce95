//! Model parameters, boundaries and the seeded random source shared by the
//! analytic and simulation layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Param, Result};

/// Below this value of `|lambda - mu| * max(1, H)` the equal-rate closed forms
/// are used instead of the general ones.
pub const EQUAL_RATE_THRESHOLD: f64 = 1e-8;

/// Physical parameters of the confined telegraph process.
///
/// Upward sojourns are `Exp(lambda)`, downward sojourns `Exp(mu)`, the
/// boundaries sit at `0` and `h`, and the particle moves at `velocity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub mu: f64,
    pub h: f64,
    pub velocity: f64,
}

impl ModelParams {
    /// Unit-velocity parameters, validated.
    pub fn new(lambda: f64, mu: f64, h: f64) -> Result<Self> {
        validate_params(ModelParams {
            lambda,
            mu,
            h,
            velocity: 1.0,
        })
    }

    pub fn with_velocity(self, velocity: f64) -> Result<Self> {
        validate_params(ModelParams { velocity, ..self })
    }

    /// Level seen by a unit-velocity particle: hits of `c X(t)` at `{0, h}`
    /// are hits of `X(t)` at `{0, h / c}`.
    pub fn level(&self) -> f64 {
        self.h / self.velocity
    }

    /// Parameters of the mirrored process `level - X(t)`: up and down rates
    /// trade places, so origin-side and level-side quantities swap.
    pub fn swapped(&self) -> Self {
        ModelParams {
            lambda: self.mu,
            mu: self.lambda,
            ..*self
        }
    }

    pub fn is_equal_rate(&self) -> bool {
        (self.lambda - self.mu).abs() * self.level().max(1.0) < EQUAL_RATE_THRESHOLD
    }
}

fn positive(value: f64, param: Param) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::NonPositiveParameter(param))
    }
}

/// Checks every field of `p` and hands it back unchanged.
pub fn validate_params(p: ModelParams) -> Result<ModelParams> {
    positive(p.lambda, Param::Lambda)?;
    positive(p.mu, Param::Mu)?;
    positive(p.h, Param::H)?;
    positive(p.velocity, Param::Velocity)?;
    Ok(p)
}

/// Probability of absorption at each boundary contact.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SwitchingProb(f64);

impl SwitchingProb {
    /// Accepts `alpha` in `[0, 1]`. Operations that need a finite absorption
    /// time reject `alpha = 0` themselves.
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(SwitchingProb(alpha))
        } else {
            Err(Error::AlphaOutOfRange(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `alpha` if it lies in `(0, 1]`.
    pub fn absorbing(self) -> Result<f64> {
        if self.0 > 0.0 {
            Ok(self.0)
        } else {
            Err(Error::AlphaOutOfRange(self.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// The origin, `0`.
    Origin,
    /// The upper level, `H`.
    Level,
}

impl Boundary {
    pub fn other(self) -> Self {
        match self {
            Boundary::Origin => Boundary::Level,
            Boundary::Level => Boundary::Origin,
        }
    }

    /// Row/column index in the phase matrix.
    pub fn index(self) -> usize {
        match self {
            Boundary::Origin => 0,
            Boundary::Level => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Boundary::Origin => "0",
            Boundary::Level => "H",
        }
    }
}

/// Deterministic random stream identified by `(seed, stream_index)`.
///
/// Backed by ChaCha8, whose 2^64 streams per seed are independent; the same
/// pair always replays the same draws.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        RandomSource {
            seed,
            stream_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `(0, 1]`; never returns zero.
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Inverse-CDF exponential draw; `rate` must already be validated.
    pub(crate) fn exp_unchecked(&mut self, rate: f64) -> f64 {
        -self.uniform_open_closed().ln() / rate
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }
}

/// One `Exp(rate)` sample.
pub fn exp_draw(rate: f64, rng: &mut RandomSource) -> Result<f64> {
    positive(rate, Param::Rate)?;
    Ok(rng.exp_unchecked(rate))
}
