//! Action-space execution semantics: relative-to-absolute resolution for
//! wrist and hand actions, virtual motor state, receding-horizon
//! windowing, and command-rate interpolation.
//!
//! This module computes command streams only; outputs are plain data any
//! controller can consume. Relative wrist actions chain against the
//! commanded pose, not a measured one.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("virtual motor state used before initialization from hardware")]
    UninitializedVirtualState,
    #[error("hardware mode requires a motor read every step")]
    MissingHardwareRead,
    #[error("expected {expected} frames, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("expected {expected} motor values, got {got}")]
    DofMismatch { expected: usize, got: usize },
    #[error("horizon invalid: {reason}")]
    BadHorizon { reason: String },
    #[error("target rate {target_hz} Hz is below the policy rate {policy_hz} Hz")]
    RateBelowPolicy { policy_hz: f64, target_hz: f64 },
}

/// Absolute wrist pose: position in millimeters plus orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct WristPose {
    pub position_mm: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl WristPose {
    pub fn identity() -> Self {
        Self {
            position_mm: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }
}

/// Resolve a relative wrist action against the current commanded pose.
/// The 6-vector is translation (mm, base frame) followed by a rotation
/// vector (radians); the rotation composes onto the current orientation
/// in the base frame.
pub fn resolve_wrist(current: &WristPose, ee_delta: &[f64; 6]) -> WristPose {
    let translation = Vector3::new(ee_delta[0], ee_delta[1], ee_delta[2]);
    let rotvec = Vector3::new(ee_delta[3], ee_delta[4], ee_delta[5]);
    WristPose {
        position_mm: current.position_mm + translation,
        orientation: UnitQuaternion::from_scaled_axis(rotvec) * current.orientation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandActionMode {
    Relative,
    Absolute,
}

/// One policy output step: a relative wrist delta plus a hand command for
/// every actuated motor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFrame {
    pub ee_delta: [f64; 6],
    pub hand: Vec<f64>,
    pub hand_mode: HandActionMode,
}

/// Whether relative hand actions accumulate onto software state or onto
/// fresh hardware reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandControlMode {
    Virtual,
    Hardware,
}

/// Software-maintained motor positions, updated by executed actions and
/// clamped to the motor range after every update. Once initialized from a
/// hardware read, later reads never influence it.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualMotorState {
    values: Vec<f64>,
    range: Interval,
    initialized: bool,
}

impl VirtualMotorState {
    pub fn uninitialized(dofs: usize, range: Interval) -> Self {
        Self {
            values: vec![0.0; dofs],
            range,
            initialized: false,
        }
    }

    pub fn initialize_from_hardware(&mut self, read: &[f64]) -> Result<(), ExecError> {
        self.check_width(read)?;
        self.values = read.iter().map(|&v| self.range.clamp(v)).collect();
        self.initialized = true;
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn dofs(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check_width(&self, v: &[f64]) -> Result<(), ExecError> {
        if v.len() != self.values.len() {
            return Err(ExecError::DofMismatch {
                expected: self.values.len(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Resolve one hand action into an absolute motor command, updating the
/// virtual state to the issued command.
///
/// Absolute actions pass through (clamped). Relative actions accumulate
/// onto the virtual state in `Virtual` mode (hardware reads are ignored
/// after initialization; the first call may initialize from one), or onto
/// the supplied hardware read in `Hardware` mode.
pub fn resolve_hand(
    frame: &ActionFrame,
    vstate: &mut VirtualMotorState,
    hardware_read: Option<&[f64]>,
    mode: HandControlMode,
) -> Result<Vec<f64>, ExecError> {
    vstate.check_width(&frame.hand)?;
    if let Some(read) = hardware_read {
        vstate.check_width(read)?;
    }
    let base: Vec<f64> = match (frame.hand_mode, mode) {
        (HandActionMode::Absolute, _) => vec![0.0; vstate.dofs()],
        (HandActionMode::Relative, HandControlMode::Virtual) => {
            if !vstate.initialized {
                let read = hardware_read.ok_or(ExecError::UninitializedVirtualState)?;
                vstate.initialize_from_hardware(read)?;
            }
            vstate.values.clone()
        }
        (HandActionMode::Relative, HandControlMode::Hardware) => hardware_read
            .ok_or(ExecError::MissingHardwareRead)?
            .to_vec(),
    };
    let command: Vec<f64> = base
        .iter()
        .zip(&frame.hand)
        .map(|(&b, &a)| vstate.range.clamp(b + a))
        .collect();
    vstate.values = command.clone();
    vstate.initialized = true;
    Ok(command)
}

/// Receding-horizon execution parameters plus the rates involved in
/// command interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonPolicy {
    pub predict: usize,
    pub execute: usize,
    pub policy_rate_hz: f64,
    pub command_rate_hz: f64,
}

impl HorizonPolicy {
    /// Arm default: 16-step prediction, 8 executed, 10 Hz policy
    /// interpolated to 125 Hz commands.
    pub fn arm() -> Self {
        Self {
            predict: 16,
            execute: 8,
            policy_rate_hz: 10.0,
            command_rate_hz: 125.0,
        }
    }

    /// Hand driven at the policy rate itself (10 Hz command rate).
    pub fn inspire_like_hand() -> Self {
        Self {
            command_rate_hz: 10.0,
            ..Self::arm()
        }
    }

    /// Hand commanded at 60 Hz.
    pub fn xhand_like_hand() -> Self {
        Self {
            command_rate_hz: 60.0,
            ..Self::arm()
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.execute == 0 || self.execute > self.predict {
            return Err(ExecError::BadHorizon {
                reason: format!(
                    "execute {} must be in 1..=predict {}",
                    self.execute, self.predict
                ),
            });
        }
        if !(self.policy_rate_hz > 0.0) || !(self.command_rate_hz > 0.0) {
            return Err(ExecError::BadHorizon {
                reason: "rates must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Keep the executed prefix of a predicted horizon; the rest is
/// discarded.
pub fn window_actions<'a, T>(
    predicted: &'a [T],
    policy: &HorizonPolicy,
) -> Result<&'a [T], ExecError> {
    policy.validate()?;
    if predicted.len() != policy.predict {
        return Err(ExecError::LengthMismatch {
            expected: policy.predict,
            got: predicted.len(),
        });
    }
    Ok(&predicted[..policy.execute])
}

/// Linearly interpolate a command sequence from the policy rate up to the
/// target rate. Output ticks sit at j/target_rate; the final input
/// command is always emitted exactly, and equal rates reproduce the input
/// unchanged.
pub fn interpolate_commands(
    commands: &[Vec<f64>],
    policy_rate_hz: f64,
    target_rate_hz: f64,
) -> Result<Vec<Vec<f64>>, ExecError> {
    if !(policy_rate_hz > 0.0) || target_rate_hz < policy_rate_hz {
        return Err(ExecError::RateBelowPolicy {
            policy_hz: policy_rate_hz,
            target_hz: target_rate_hz,
        });
    }
    let Some(first) = commands.first() else {
        return Ok(Vec::new());
    };
    let width = first.len();
    for row in commands {
        if row.len() != width {
            return Err(ExecError::DofMismatch {
                expected: width,
                got: row.len(),
            });
        }
    }
    let n = commands.len();
    let t_end = (n - 1) as f64 / policy_rate_hz;
    let mut out = Vec::new();
    let mut j = 0u64;
    loop {
        let t = j as f64 / target_rate_hz;
        if t >= t_end - 1e-12 {
            break;
        }
        let pos = t * policy_rate_hz;
        let i = (pos.floor() as usize).min(n - 2);
        let w = pos - i as f64;
        out.push(
            commands[i]
                .iter()
                .zip(&commands[i + 1])
                .map(|(&a, &b)| a + w * (b - a))
                .collect(),
        );
        j += 1;
    }
    out.push(commands[n - 1].clone());
    Ok(out)
}
