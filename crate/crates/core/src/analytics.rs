//! Closed-form phase probabilities, stopping-time and cycle means, phase-chain
//! powers, path lengths and the mean absorption time.
//!
//! Three evaluation regimes cover the rate plane without cancellation:
//! equal rates use the exact `lambda = mu` forms, a band around the seam uses
//! expansions in `phi3((mu - lambda) L)`, and the rest uses the rational forms
//! in `exp((mu - lambda) L)`, flipped to `exp(-x)` when `x > 0` so nothing
//! overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Boundary, ModelParams, SwitchingProb};
use crate::special::{phi3, CompensatedSum};

/// Transition probabilities between phase types (row = start boundary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatrix {
    pub p00: f64,
    #[serde(rename = "p0H")]
    pub p0h: f64,
    #[serde(rename = "pH0")]
    pub ph0: f64,
    #[serde(rename = "pHH")]
    pub phh: f64,
}

impl PhaseMatrix {
    pub const IDENTITY: PhaseMatrix = PhaseMatrix {
        p00: 1.0,
        p0h: 0.0,
        ph0: 0.0,
        phh: 1.0,
    };

    pub fn get(&self, from: Boundary, to: Boundary) -> f64 {
        match (from, to) {
            (Boundary::Origin, Boundary::Origin) => self.p00,
            (Boundary::Origin, Boundary::Level) => self.p0h,
            (Boundary::Level, Boundary::Origin) => self.ph0,
            (Boundary::Level, Boundary::Level) => self.phh,
        }
    }

    /// Second eigenvalue `P00 + PHH - 1`.
    pub fn theta_spectral(&self) -> f64 {
        self.p00 + self.phh - 1.0
    }

    pub fn mul(&self, other: &PhaseMatrix) -> PhaseMatrix {
        PhaseMatrix {
            p00: self.p00 * other.p00 + self.p0h * other.ph0,
            p0h: self.p00 * other.p0h + self.p0h * other.phh,
            ph0: self.ph0 * other.p00 + self.phh * other.ph0,
            phh: self.ph0 * other.p0h + self.phh * other.phh,
        }
    }
}

/// `E[T_uv 1{phase u -> v}]` for the four truncated stopping times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedTimeMeans {
    pub t00: f64,
    #[serde(rename = "t0H")]
    pub t0h: f64,
    #[serde(rename = "tHH")]
    pub thh: f64,
    #[serde(rename = "tH0")]
    pub th0: f64,
}

/// Unconditional cycle means `m_uv = E[C_uv]` (zero on other phase types)
/// and conditional means `kappa_uv = m_uv / P_uv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMeans {
    pub m00: f64,
    #[serde(rename = "m0H")]
    pub m0h: f64,
    #[serde(rename = "mH0")]
    pub mh0: f64,
    #[serde(rename = "mHH")]
    pub mhh: f64,
    pub kappa00: f64,
    #[serde(rename = "kappa0H")]
    pub kappa0h: f64,
    #[serde(rename = "kappaH0")]
    pub kappah0: f64,
    #[serde(rename = "kappaHH")]
    pub kappahh: f64,
}

impl CycleMeans {
    /// Mean length of a phase started at the origin.
    pub fn l1(&self) -> f64 {
        self.m00 + self.m0h
    }

    /// Mean length of a phase started at the level.
    pub fn l1_star(&self) -> f64 {
        self.mh0 + self.mhh
    }

    pub fn get(&self, from: Boundary, to: Boundary) -> f64 {
        match (from, to) {
            (Boundary::Origin, Boundary::Origin) => self.m00,
            (Boundary::Origin, Boundary::Level) => self.m0h,
            (Boundary::Level, Boundary::Origin) => self.mh0,
            (Boundary::Level, Boundary::Level) => self.mhh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub l1: f64,
    pub l1_star: f64,
    pub theta_spectral: f64,
    pub expected_absorption_time: f64,
}

/// Which set of formulas evaluates the means at these parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    EqualRate,
    NearSeam,
    General,
}

pub fn regime(p: &ModelParams) -> Regime {
    if p.is_equal_rate() {
        Regime::EqualRate
    } else if ((p.mu - p.lambda) * p.level()).abs() <= 1.0 {
        Regime::NearSeam
    } else {
        Regime::General
    }
}

pub fn phase_probabilities(p: &ModelParams) -> PhaseMatrix {
    let level = p.level();
    let (p0h, ph0) = if p.is_equal_rate() {
        let b = 0.5 * (p.lambda + p.mu) * level;
        (1.0 / (1.0 + b), 1.0 / (1.0 + b))
    } else {
        let k = p.mu - p.lambda;
        let x = k * level;
        let em = (-x).exp_m1();
        let ep = x.exp_m1();
        (k / (k - p.lambda * em), k / (k + p.mu * ep))
    };
    let origin_row = if p0h <= 0.5 {
        (1.0 - p0h, p0h)
    } else {
        let k = p.mu - p.lambda;
        let p00 = if p.is_equal_rate() {
            1.0 - p0h
        } else {
            let em = (-k * level).exp_m1();
            -p.lambda * em / (k - p.lambda * em)
        };
        (p00, 1.0 - p00)
    };
    let level_row = if ph0 <= 0.5 {
        (ph0, 1.0 - ph0)
    } else {
        let k = p.mu - p.lambda;
        let phh = if p.is_equal_rate() {
            1.0 - ph0
        } else {
            let ep = (k * level).exp_m1();
            p.mu * ep / (k + p.mu * ep)
        };
        (1.0 - phh, phh)
    };
    PhaseMatrix {
        p00: origin_row.0,
        p0h: origin_row.1,
        ph0: level_row.0,
        phh: level_row.1,
    }
}

/// All eight means from one regime.
#[derive(Debug, Clone, Copy)]
struct RawMeans {
    t: TruncatedTimeMeans,
    m00: f64,
    m0h: f64,
    mh0: f64,
    mhh: f64,
}

fn equal_rate_means(mu: f64, level: f64) -> RawMeans {
    let b = mu * level;
    let s2 = (1.0 + b) * (1.0 + b);
    let t_same = level * b * (3.0 + 2.0 * b) / (6.0 * s2);
    let m_cross = level * (3.0 + 3.0 * b + b * b) / (3.0 * s2);
    RawMeans {
        t: TruncatedTimeMeans {
            t00: t_same,
            t0h: level * (6.0 + 6.0 * b + b * b) / (6.0 * s2),
            thh: t_same,
            th0: level * b * b / (6.0 * s2),
        },
        m00: 2.0 * t_same,
        m0h: m_cross,
        mh0: m_cross,
        mhh: 2.0 * t_same,
    }
}

fn near_seam_means(lambda: f64, mu: f64, level: f64) -> RawMeans {
    let a = lambda * level;
    let b = mu * level;
    let x = b - a;
    let p = phi3(x);
    let s = 1.0 + b * (1.0 + 0.5 * x + x * x * p);
    let s2 = s * s;
    let e = x.exp();
    let s1 = 4.0 * b * p * p * x * x * x
        + 4.0 * b * p * x * x
        + 8.0 * b * p
        + b * x
        + 4.0 * p * x * x
        - 4.0 * p * x
        + 2.0 * x
        + 2.0;
    let sq = 2.0 * b * b * p * x - 4.0 * b * b * p + b * b + 4.0 * b * p * x + 2.0 * b + 2.0;
    let s3 = 2.0 * b * b + 2.0 + 2.0 * b - 8.0 * b * b * p + 4.0 * b * b * p * x
        - 2.0 * b * p * x * x
        + 8.0 * b * p * x
        - b * x;
    let t00 = level * a * s1 / (4.0 * s2);
    let thh = level * b * s1 / (4.0 * s2);
    let mh0 = level * s3 / (2.0 * s2);
    RawMeans {
        t: TruncatedTimeMeans {
            t00,
            t0h: level * e * sq / (2.0 * s2),
            thh,
            th0: level * a * b * (1.0 - 4.0 * p + 2.0 * p * x) / (2.0 * s2),
        },
        m00: 2.0 * t00,
        m0h: e * mh0,
        mh0,
        mhh: 2.0 * thh,
    }
}

/// Evaluates `(c0 + c1 e + c2 e^2) / ((lambda - mu)(lambda - mu e)^2)` with
/// `e = exp(x)`, `x = (mu - lambda) L`, dividing through by `e^2` when `x > 0`.
struct Rational {
    lambda: f64,
    mu: f64,
    x: f64,
}

impl Rational {
    fn eval(&self, c: [f64; 3]) -> f64 {
        let (l, m) = (self.lambda, self.mu);
        if self.x > 0.0 {
            let r = (-self.x).exp();
            let d = l * r - m;
            (c[0] * r * r + c[1] * r + c[2]) / ((l - m) * d * d)
        } else {
            let e = self.x.exp();
            let d = l - m * e;
            (c[0] + c[1] * e + c[2] * e * e) / ((l - m) * d * d)
        }
    }
}

fn general_means(l: f64, m: f64, h: f64) -> RawMeans {
    let x = (m - l) * h;
    let q = Rational {
        lambda: l,
        mu: m,
        x,
    };
    let same = [l, -(l - m) * (1.0 + h * (l + m)), -m];
    let t00 = l * q.eval(same);
    let thh = m * q.eval(same);
    let t0h = q.eval([
        0.0,
        -2.0 * l * m + h * (l - m) * l * l,
        2.0 * l * m + h * (l - m) * m * m,
    ]);
    let th0 = q.eval([-l * m * (2.0 + x), -l * m * (x - 2.0), 0.0]);
    let diff2 = l * l - m * m;
    let m0h = q.eval([0.0, -4.0 * l * m + h * diff2 * l, 4.0 * l * m + h * diff2 * m]);
    let mh0 = q.eval([l * (h * diff2 - 4.0 * m), m * (l * (4.0 + l * h) - m * m * h), 0.0]);
    RawMeans {
        t: TruncatedTimeMeans { t00, t0h, thh, th0 },
        m00: 2.0 * t00,
        m0h,
        mh0,
        mhh: 2.0 * thh,
    }
}

fn raw_means(p: &ModelParams) -> RawMeans {
    let level = p.level();
    match regime(p) {
        Regime::EqualRate => equal_rate_means(0.5 * (p.lambda + p.mu), level),
        Regime::NearSeam => near_seam_means(p.lambda, p.mu, level),
        Regime::General => general_means(p.lambda, p.mu, level),
    }
}

pub fn expected_truncated_times(p: &ModelParams) -> TruncatedTimeMeans {
    raw_means(p).t
}

pub fn expected_cycles(p: &ModelParams) -> CycleMeans {
    let r = raw_means(p);
    let pm = phase_probabilities(p);
    CycleMeans {
        m00: r.m00,
        m0h: r.m0h,
        mh0: r.mh0,
        mhh: r.mhh,
        kappa00: r.m00 / pm.p00,
        kappa0h: r.m0h / pm.p0h,
        kappah0: r.mh0 / pm.ph0,
        kappahh: r.mhh / pm.phh,
    }
}

/// `P^j` through the spectral decomposition; `j = 0` gives the identity.
pub fn matrix_power(pm: &PhaseMatrix, j: u64) -> PhaseMatrix {
    if j == 0 {
        return PhaseMatrix::IDENTITY;
    }
    let s = pm.p0h + pm.ph0;
    let vj = power(pm.theta_spectral(), j);
    PhaseMatrix {
        p00: (pm.ph0 + pm.p0h * vj) / s,
        p0h: (pm.p0h - pm.p0h * vj) / s,
        ph0: (pm.ph0 - pm.ph0 * vj) / s,
        phh: (pm.p0h + pm.ph0 * vj) / s,
    }
}

/// `P^j` by repeated multiplication.
pub fn matrix_power_naive(pm: &PhaseMatrix, j: u64) -> PhaseMatrix {
    (0..j).fold(PhaseMatrix::IDENTITY, |acc, _| acc.mul(pm))
}

fn power(base: f64, j: u64) -> f64 {
    match i32::try_from(j) {
        Ok(k) => base.powi(k),
        Err(_) => base.powf(j as f64),
    }
}

/// `Q^(i,m)_uv = sum_{j=i}^{m} (P^j)_uv`; zero when `m < i`.
pub fn q_sum(pm: &PhaseMatrix, i: u64, m: i64, u: Boundary, v: Boundary) -> f64 {
    if m < 0 || (m as u64) < i {
        return 0.0;
    }
    let m = m as u64;
    let mut total = 0.0;
    if i == 0 {
        total += PhaseMatrix::IDENTITY.get(u, v);
    }
    let first = i.max(1);
    if first > m {
        return total;
    }
    let count = (m - first + 1) as f64;
    let v_s = pm.theta_spectral();
    // sum_{j=first}^{m} v^j
    let geo = if v_s == 0.0 {
        0.0
    } else if (1.0 - v_s).abs() < f64::EPSILON {
        count
    } else {
        (power(v_s, first) - power(v_s, m + 1)) / (1.0 - v_s)
    };
    let s = pm.p0h + pm.ph0;
    let (stationary, weight) = match (u, v) {
        (Boundary::Origin, Boundary::Origin) => (pm.ph0, pm.p0h),
        (Boundary::Origin, Boundary::Level) => (pm.p0h, -pm.p0h),
        (Boundary::Level, Boundary::Origin) => (pm.ph0, -pm.ph0),
        (Boundary::Level, Boundary::Level) => (pm.p0h, pm.ph0),
    };
    total + (count * stationary + weight * geo) / s
}

fn check_index(n: i64) -> Result<u64> {
    if n < 1 {
        Err(Error::InvalidIndex(n))
    } else {
        Ok(n as u64)
    }
}

/// Mean total length of the first `n` phases of a path started at the
/// origin, from the closed sum over the phase chain.
pub fn expected_length(p: &ModelParams, n: i64) -> Result<f64> {
    let n = check_index(n)?;
    let c = expected_cycles(p);
    let (l1, l1s) = (c.l1(), c.l1_star());
    if n == 1 {
        return Ok(l1);
    }
    let pm = phase_probabilities(p);
    let p2 = matrix_power(&pm, 2);
    let top = n as i64 - 3;
    use Boundary::{Level as H, Origin as O};
    let origin = 1.0 + pm.p00 + p2.p00 * q_sum(&pm, 0, top, O, O) + p2.p0h * q_sum(&pm, 1, top, H, O);
    let level = pm.p0h + p2.p00 * q_sum(&pm, 1, top, O, H) + p2.p0h * q_sum(&pm, 0, top, H, H);
    Ok(l1 * origin + l1s * level)
}

/// Same quantity from `L_n = L_{n-1} + L1 P^(n-1)_00 + L1* P^(n-1)_0H`.
pub fn expected_length_recursive(p: &ModelParams, n: i64) -> Result<f64> {
    let n = check_index(n)?;
    let c = expected_cycles(p);
    let (l1, l1s) = (c.l1(), c.l1_star());
    let pm = phase_probabilities(p);
    let mut total = l1;
    for k in 1..n {
        let pk = matrix_power(&pm, k);
        total += l1 * pk.p00 + l1s * pk.p0h;
    }
    Ok(total)
}

fn absorbing_alpha(s: SwitchingProb) -> Result<f64> {
    let a = s.absorbing()?;
    if a > 1.0 {
        return Err(Error::AlphaOutOfRange(a));
    }
    Ok(a)
}

/// Mean time until absorption for a path started at the origin.
pub fn expected_absorption_time(p: &ModelParams, s: SwitchingProb) -> Result<AbsorptionReport> {
    let a = absorbing_alpha(s)?;
    let b = 1.0 - a;
    let c = expected_cycles(p);
    let pm = phase_probabilities(p);
    let (l1, l1s) = (c.l1(), c.l1_star());
    let (p00, p0h, ph0) = (pm.p00, pm.p0h, pm.ph0);
    let den = a + b * (p0h + ph0);
    let origin = 1.0
        + b * p00
        + b * b * (1.0 - p0h * (2.0 - p0h - ph0)) / den
        + b * b * b / a * ph0 / den;
    let level = p0h
        * b
        * (a + b * (2.0 + (1.0 - p0h - ph0) * a) / den + b * b / (a * den));
    Ok(AbsorptionReport {
        l1,
        l1_star: l1s,
        theta_spectral: pm.theta_spectral(),
        expected_absorption_time: l1 * origin + l1s * level,
    })
}

/// Partial sum of `alpha sum_n L_n (1 - alpha)^(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesEstimate {
    pub value: f64,
    pub terms: u64,
    pub tail_bound: f64,
}

/// Cap on the number of series terms.
pub const MAX_SERIES_TERMS: u64 = 100_000_000;

/// Sums the absorption-time series until a bound on the remaining tail falls
/// below `1e-14` of the partial sum.
///
/// Every phase has mean length at most `max(L1, L1*)`, so `L_n <= n M` and
/// the tail after `N` terms is at most `M (1-a)^N (N + 1 + (1-a)/a)`.
pub fn absorption_time_series(p: &ModelParams, s: SwitchingProb) -> Result<SeriesEstimate> {
    let a = absorbing_alpha(s)?;
    let b = 1.0 - a;
    let c = expected_cycles(p);
    let (l1, l1s) = (c.l1(), c.l1_star());
    let longest = l1.max(l1s);
    let pm = phase_probabilities(p);
    let mut sum = CompensatedSum::default();
    let mut l_n = l1;
    let mut weight = a;
    let mut n: u64 = 1;
    loop {
        sum.add(weight * l_n);
        let decay = power(b, n);
        let tail = longest * decay * ((n + 1) as f64 + b / a);
        if tail < 1e-14 * sum.value() {
            return Ok(SeriesEstimate {
                value: sum.value(),
                terms: n,
                tail_bound: tail,
            });
        }
        if n >= MAX_SERIES_TERMS {
            return Err(Error::Precondition(format!(
                "series did not converge within {MAX_SERIES_TERMS} terms (alpha = {a})"
            )));
        }
        let pk = matrix_power(&pm, n);
        l_n += l1 * pk.p00 + l1s * pk.p0h;
        weight *= b;
        n += 1;
    }
}
