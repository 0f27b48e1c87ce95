//! Event-driven simulation of the confined telegraph process.
//!
//! Positions are tracked in units where the particle moves at unit speed
//! between `0` and the effective level `p.level()`; durations are therefore
//! already in the original time units.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Boundary, ModelParams, RandomSource, SwitchingProb};

/// Velocity reversals allowed in one phase before giving up.
pub const REVERSAL_CAP: u64 = 10_000_000;

/// Default cap on phases per path.
pub const DEFAULT_MAX_PHASES: u64 = 1_000_000;

/// One excursion from a boundary to the next boundary contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub start: Boundary,
    pub end: Boundary,
    /// The renewal cycle length.
    pub duration: f64,
    pub n_switches: u64,
    /// Untruncated sojourn draws in order, alternating direction. The first
    /// is upward from the origin and downward from the level; the last one
    /// is the draw cut short by the boundary contact.
    pub draws: Vec<f64>,
    /// The part of the last draw actually travelled.
    pub truncated_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub phases: Vec<PhaseRecord>,
    /// Number of phases, equivalently boundary contacts, until absorption.
    pub m: u64,
    pub absorbed_at: Boundary,
    pub total_time: f64,
}

/// Result of replaying a phase through the compound Poisson representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualCheck {
    /// First-crossing time on the up-time clock.
    pub t_stop: f64,
    /// Accumulated down time at the crossing.
    pub y_at_stop: f64,
    pub end: Boundary,
    /// `|C - (2T + offset)|`.
    pub identity_residual: f64,
}

pub fn simulate_phase(start: Boundary, p: &ModelParams, rng: &mut RandomSource) -> Result<PhaseRecord> {
    let level = p.level();
    let mut draws = Vec::with_capacity(4);
    let mut pos = match start {
        Boundary::Origin => 0.0,
        Boundary::Level => level,
    };
    let mut up = start == Boundary::Origin;
    let mut duration = 0.0;
    let mut n_switches = 0;
    loop {
        if up {
            let u = rng.exp_unchecked(p.lambda);
            draws.push(u);
            let room = level - pos;
            if u >= room {
                duration += room;
                return Ok(PhaseRecord {
                    start,
                    end: Boundary::Level,
                    duration,
                    n_switches,
                    draws,
                    truncated_last: room,
                });
            }
            pos += u;
            duration += u;
        } else {
            let d = rng.exp_unchecked(p.mu);
            draws.push(d);
            if d >= pos {
                duration += pos;
                return Ok(PhaseRecord {
                    start,
                    end: Boundary::Origin,
                    duration,
                    n_switches,
                    draws,
                    truncated_last: pos,
                });
            }
            pos -= d;
            duration += d;
        }
        n_switches += 1;
        if n_switches > REVERSAL_CAP {
            return Err(Error::ReversalCapExceeded(REVERSAL_CAP));
        }
        up = !up;
    }
}

/// Runs phases from the origin until a boundary contact absorbs.
pub fn simulate_until_absorption(
    p: &ModelParams,
    s: SwitchingProb,
    rng: &mut RandomSource,
    max_phases: u64,
) -> Result<PathRecord> {
    let alpha = s.absorbing()?;
    if max_phases == 0 {
        return Err(Error::Precondition("max_phases must be at least 1".into()));
    }
    let mut phases = Vec::new();
    let mut at = Boundary::Origin;
    let mut total_time = 0.0;
    loop {
        let phase = simulate_phase(at, p, rng)?;
        total_time += phase.duration;
        at = phase.end;
        phases.push(phase);
        if rng.bernoulli(alpha) {
            return Ok(PathRecord {
                m: phases.len() as u64,
                phases,
                absorbed_at: at,
                total_time,
            });
        }
        if phases.len() as u64 >= max_phases {
            return Err(Error::MaxPhasesExceeded(max_phases));
        }
    }
}

/// Rebuilds `Y(t)`, the down time accumulated by up time `t`, from the
/// phase's own draws and checks the cycle identity for its phase type.
///
/// From the origin, position at up time `t` is `t - Y(t)`; from the level it
/// is `level - D1 + t - Y(t)` where `Y` collects the later descents.
pub fn dual_representation_check(ph: &PhaseRecord, p: &ModelParams) -> Result<DualCheck> {
    let level = p.level();
    let violation = || Error::IdentityViolation {
        residual: f64::INFINITY,
    };
    let (shift, mut rest) = match ph.start {
        Boundary::Origin => (0.0, &ph.draws[..]),
        Boundary::Level => {
            let (&d1, rest) = ph.draws.split_first().ok_or_else(violation)?;
            (d1, rest)
        }
    };
    // Hitting the level: Y = t - (level - start position).
    let level_gap = match ph.start {
        Boundary::Origin => level,
        Boundary::Level => shift,
    };
    // Hitting the origin: Y >= t + start position.
    let origin_gap = match ph.start {
        Boundary::Origin => 0.0,
        Boundary::Level => level - shift,
    };
    let mut y = 0.0;
    let mut s = 0.0;
    let (t_stop, end) = 'walk: {
        if ph.start == Boundary::Level && y >= s + origin_gap {
            break 'walk (0.0, Boundary::Origin);
        }
        while let Some((&u, tail)) = rest.split_first() {
            let crossing = y + level_gap;
            if crossing <= s + u {
                break 'walk (crossing, Boundary::Level);
            }
            s += u;
            let (&d, tail) = tail.split_first().ok_or_else(violation)?;
            y += d;
            rest = tail;
            if y >= s + origin_gap {
                break 'walk (s, Boundary::Origin);
            }
        }
        return Err(violation());
    };
    if end != ph.end {
        return Err(violation());
    }
    let predicted = match (ph.start, end) {
        (Boundary::Origin, Boundary::Origin) => 2.0 * t_stop,
        (Boundary::Origin, Boundary::Level) => 2.0 * t_stop - level,
        (Boundary::Level, Boundary::Level) => 2.0 * t_stop,
        (Boundary::Level, Boundary::Origin) => 2.0 * t_stop + level,
    };
    let residual = (ph.duration - predicted).abs();
    if !(residual < 1e-9 * ph.duration.max(1.0)) {
        return Err(Error::IdentityViolation { residual });
    }
    Ok(DualCheck {
        t_stop,
        y_at_stop: y,
        end,
        identity_residual: residual,
    })
}

/// Positions at every event of the phase, starting point included.
pub fn event_positions(ph: &PhaseRecord, p: &ModelParams) -> Vec<f64> {
    let level = p.level();
    let mut pos = match ph.start {
        Boundary::Origin => 0.0,
        Boundary::Level => level,
    };
    let mut up = ph.start == Boundary::Origin;
    let mut out = Vec::with_capacity(ph.draws.len() + 1);
    out.push(pos);
    let last = ph.draws.len().saturating_sub(1);
    for (i, &x) in ph.draws.iter().enumerate() {
        let step = if i == last { ph.truncated_last } else { x };
        pos += if up { step } else { -step };
        out.push(pos);
        up = !up;
    }
    out
}

/// True when every event position lies in `[0, level]`.
pub fn is_bounded(ph: &PhaseRecord, p: &ModelParams) -> bool {
    let level = p.level();
    let tol = 1e-12 * level.max(1.0);
    event_positions(ph, p)
        .iter()
        .all(|&x| x >= -tol && x <= level + tol)
}

pub const PATH_CSV_HEADER: &str = "path_id,phase_index,start,end,duration,n_switches";

/// Writes one CSV row per phase.
pub fn write_path_csv<W: Write>(out: &mut W, path_id: u64, path: &PathRecord) -> std::io::Result<()> {
    for (i, ph) in path.phases.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            path_id,
            i,
            ph.start.label(),
            ph.end.label(),
            crate::numfmt::sig12(ph.duration),
            ph.n_switches
        )?;
    }
    Ok(())
}
