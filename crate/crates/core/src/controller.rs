//! Pouring controller: tilt to a fixed angle, run a PD loop on the volume
//! error, then rotate back to vertical once the estimate reaches the target.
//!
//! The integral gain is fixed at zero. Pouring cannot be undone, so an
//! integral term would only ever push toward pouring faster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::VolumeEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// rad from vertical
    pub pre_tilt_angle: f64,
    /// rad/s per ml
    pub kp: f64,
    /// rad/s per ml of error change, per tick or per second (see
    /// [`DerivativeBasis`])
    pub kd: f64,
    pub ki: f64,
    /// rad/s
    pub pre_tilt_rate: f64,
    /// rad/s
    pub return_rate: f64,
    /// rad/s
    pub max_wrist_rate: f64,
    pub derivative: DerivativeBasis,
}

/// Time base of the derivative term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeBasis {
    /// `kd * (e - e_prev)`: the error change over one control tick.
    #[default]
    PerTick,
    /// `kd * (e - e_prev) / dt`: the error rate in ml/s.
    PerSecond,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            pre_tilt_angle: 75f64.to_radians(),
            kp: 0.01f64.to_radians(),
            kd: 0.2f64.to_radians(),
            ki: 0.0,
            pre_tilt_rate: 30f64.to_radians(),
            return_rate: 30f64.to_radians(),
            max_wrist_rate: 60f64.to_radians(),
            derivative: DerivativeBasis::PerTick,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.kp >= 0.0 && self.kd >= 0.0) {
            return bad(format!("gains must be non-negative (kp={}, kd={})", self.kp, self.kd));
        }
        if self.ki != 0.0 {
            return bad(format!("integral gain must be 0, got {}", self.ki));
        }
        for (name, rate) in [
            ("pre_tilt_rate", self.pre_tilt_rate),
            ("return_rate", self.return_rate),
            ("max_wrist_rate", self.max_wrist_rate),
        ] {
            if !(rate > 0.0) {
                return bad(format!("{name} must be positive, got {rate}"));
            }
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.pre_tilt_angle) {
            return bad(format!("pre-tilt angle {} outside [0, pi]", self.pre_tilt_angle));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    PreTilt,
    Pour,
    Return,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub phase: Phase,
    /// ml; `None` until the first PD step
    pub prev_error: Option<f64>,
    /// s
    pub prev_time: f64,
    pub target_ml: f64,
}

impl ControllerState {
    pub fn new(target_ml: f64) -> Self {
        Self {
            phase: Phase::PreTilt,
            prev_error: None,
            prev_time: 0.0,
            target_ml,
        }
    }
}

/// The PD law on its own, clamped to the wrist rate limit. The derivative is
/// zero on the first step.
pub fn pd_command(config: &ControllerConfig, error: f64, prev_error: Option<f64>, dt: f64) -> f64 {
    let derivative = prev_error.map_or(0.0, |p| match config.derivative {
        DerivativeBasis::PerTick => error - p,
        DerivativeBasis::PerSecond => (error - p) / dt,
    });
    (config.kp * error + config.kd * derivative).clamp(-config.max_wrist_rate, config.max_wrist_rate)
}

/// Advances the controller by one tick. Returns the wrist angular velocity
/// command (rad/s, positive tilts toward pouring) and the new state.
///
/// Rate-limited phases never command past their goal angle within one tick.
pub fn controller_step(
    state: &ControllerState,
    config: &ControllerConfig,
    estimate: &VolumeEstimate,
    wrist_angle: f64,
    dt: f64,
) -> Result<(f64, ControllerState)> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveDt(dt));
    }
    let mut next = *state;
    next.prev_time = state.prev_time + dt;

    if next.phase == Phase::PreTilt {
        if wrist_angle < config.pre_tilt_angle {
            let remaining = (config.pre_tilt_angle - wrist_angle) / dt;
            return Ok((config.pre_tilt_rate.min(remaining), next));
        }
        next.phase = Phase::Pour;
    }

    if next.phase == Phase::Pour {
        if estimate.volume_ml >= state.target_ml {
            next.phase = Phase::Return;
        } else {
            let error = state.target_ml - estimate.volume_ml;
            let cmd = pd_command(config, error, state.prev_error, dt);
            next.prev_error = Some(error);
            return Ok((cmd, next));
        }
    }

    if next.phase == Phase::Return {
        if wrist_angle > 0.0 {
            return Ok((-config.return_rate.min(wrist_angle / dt), next));
        }
        next.phase = Phase::Done;
    }
    Ok((0.0, next))
}
