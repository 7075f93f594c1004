//! Straight-highway kinematics on a single axis.
//!
//! Positions are evaluated on demand from the profile; nothing is stepped.

use crate::engine::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MobilityError {
    #[error("mobility: speed must be a finite value >= 0 km/h, got {0}")]
    BadSpeed(f64),
    #[error("mobility: position queried at {at}, before the profile starts at {start}")]
    BeforeStart { at: SimTime, start: SimTime },
    #[error("mobility: initial position must be finite, got {0}")]
    BadPosition(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Exact `v * 1000 / 3600`.
pub fn kmh_to_ms(kmh: f64) -> Result<f64, MobilityError> {
    if !kmh.is_finite() || kmh < 0.0 {
        return Err(MobilityError::BadSpeed(kmh));
    }
    Ok(kmh / 3.6)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MobilityProfile {
    pub initial_position_m: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub speed_kmh: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub direction: Direction,
    #[cfg_attr(feature = "serde", serde(default))]
    pub start_time: SimTime,
}

impl MobilityProfile {
    pub fn fixed(position_m: f64) -> Self {
        MobilityProfile {
            initial_position_m: position_m,
            speed_kmh: 0.0,
            direction: Direction::Forward,
            start_time: SimTime::ZERO,
        }
    }

    pub fn moving(initial_position_m: f64, speed_kmh: f64, direction: Direction) -> Self {
        MobilityProfile {
            initial_position_m,
            speed_kmh,
            direction,
            start_time: SimTime::ZERO,
        }
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        if !self.initial_position_m.is_finite() {
            return Err(MobilityError::BadPosition(self.initial_position_m));
        }
        kmh_to_ms(self.speed_kmh).map(|_| ())
    }

    pub fn speed_ms(&self) -> f64 {
        self.speed_kmh / 3.6
    }

    /// Signed velocity in m/s.
    pub fn velocity_ms(&self) -> f64 {
        self.direction.sign() * self.speed_ms()
    }

    pub fn is_fixed(&self) -> bool {
        self.speed_kmh == 0.0
    }

    pub fn position_at(&self, t: SimTime) -> Result<f64, MobilityError> {
        let dt = t.checked_sub(self.start_time).ok_or(MobilityError::BeforeStart {
            at: t,
            start: self.start_time,
        })?;
        // km/h * us / 3.6e6 = m, kept as one division to stay close to exact.
        let travelled = self.speed_kmh * dt.as_micros() as f64 / 3_600_000.0;
        Ok(self.initial_position_m + self.direction.sign() * travelled)
    }

    /// Position at `t`, holding the initial position before the start time.
    pub fn position_clamped(&self, t: SimTime) -> f64 {
        self.position_at(t.max(self.start_time)).unwrap_or(self.initial_position_m)
    }
}

/// Time two nodes spend within `range` of each other while one overtakes the
/// other, in seconds. `None` when the relative speed is zero (never separates).
pub fn contact_duration_s(a: &MobilityProfile, b: &MobilityProfile, range_m: f64) -> Option<f64> {
    let dv = (a.velocity_ms() - b.velocity_ms()).abs();
    if dv == 0.0 {
        None
    } else {
        Some(2.0 * range_m / dv)
    }
}
