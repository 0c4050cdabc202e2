//! Open-loop compliant gear meshing.
//!
//! The small gear is driven by a compliant controller; friction drags the
//! large gear along by a fraction `rho` of the rotation, so the tooth phase
//! between them advances by `(1 - rho)` of each sweep. Alignment is checked
//! continuously, so a sweep that passes through alignment stops there.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PartClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("initial offset {0} outside [0, pitch)")]
    OffsetOutOfRange(f64),
    #[error("transmission ratio {0} outside (0, 1)")]
    InvalidTransmission(f64),
    #[error("invalid controller: {0}")]
    InvalidController(&'static str),
}

/// Tooth pitch angle of the driven small gear.
pub fn mesh_pitch() -> f64 {
    PartClass::GearSmall.geometry().tooth_pitch_angle().expect("gear")
}

/// Compliant controller `u(f, r_d)`: meshing force `f` applied at radial
/// distance `r_d` from the small-gear centre. The per-attempt rotation
/// saturates in force and scales linearly with the lever arm; at the
/// nominal point it is `nominal_sweep_pitches` tooth pitches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshController {
    pub force_n: f64,
    pub radius_mm: f64,
    pub nominal_force_n: f64,
    pub nominal_radius_mm: f64,
    pub saturation_n: f64,
    pub nominal_sweep_pitches: f64,
}

impl Default for MeshController {
    fn default() -> Self {
        MeshController {
            force_n: 5.0,
            radius_mm: 20.0,
            nominal_force_n: 5.0,
            nominal_radius_mm: 20.0,
            saturation_n: 10.0,
            nominal_sweep_pitches: 1.2,
        }
    }
}

impl MeshController {
    pub fn validate(&self) -> Result<(), MeshError> {
        let all = [
            self.force_n,
            self.radius_mm,
            self.nominal_force_n,
            self.nominal_radius_mm,
            self.saturation_n,
            self.nominal_sweep_pitches,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(MeshError::InvalidController("non-finite parameter"));
        }
        if self.force_n < 0.0 || self.radius_mm < 0.0 {
            return Err(MeshError::InvalidController("negative force or radius"));
        }
        if self.nominal_force_n <= 0.0 || self.nominal_radius_mm <= 0.0 || self.saturation_n <= 0.0 {
            return Err(MeshError::InvalidController("nominal point must be positive"));
        }
        Ok(())
    }

    /// Small-gear rotation per attempt, rad.
    pub fn sweep(&self, pitch: f64) -> f64 {
        let gain = (self.force_n / self.saturation_n).tanh() / (self.nominal_force_n / self.saturation_n).tanh();
        self.nominal_sweep_pitches * pitch * gain * self.radius_mm / self.nominal_radius_mm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub controller: MeshController,
    pub transmission: f64,
    pub tol_angle: f64,
    pub max_attempts: usize,
    /// Relative spread of the executed sweep, uniform in `[1 - j, 1 + j]`.
    pub jitter: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            controller: MeshController::default(),
            transmission: 0.7,
            tol_angle: 0.01,
            max_attempts: 5,
            jitter: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshState {
    /// Tooth phase still to close, in `[0, pitch)`.
    pub theta: f64,
    pub attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOutcome {
    pub success: bool,
    pub attempts: usize,
    pub final_state: MeshState,
}

fn aligned(theta: f64, pitch: f64, tol: f64) -> bool {
    theta <= tol || theta >= pitch - tol
}

/// Runs up to `max_attempts` sweeps from tooth phase `theta0`. One random
/// draw per attempt, even with zero jitter.
pub fn mesh_gears<R: Rng + ?Sized>(theta0: f64, config: &MeshConfig, rng: &mut R) -> Result<MeshOutcome, MeshError> {
    let pitch = mesh_pitch();
    if !(0.0..pitch).contains(&theta0) {
        return Err(MeshError::OffsetOutOfRange(theta0));
    }
    let rho = config.transmission;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MeshError::InvalidTransmission(rho));
    }
    config.controller.validate()?;
    let relative = (1.0 - rho) * config.controller.sweep(pitch);
    let tol = config.tol_angle;
    if aligned(theta0, pitch, tol) {
        return Ok(MeshOutcome {
            success: true,
            attempts: 1,
            final_state: MeshState { theta: theta0, attempts: 1 },
        });
    }
    // Sum of per-attempt multipliers; stays an exact integer with no jitter.
    let mut turns = 0.0;
    for attempt in 1..=config.max_attempts {
        let u: f64 = rng.random_range(-1.0..=1.0);
        turns += 1.0 + config.jitter * u;
        if theta0 + turns * relative >= pitch - tol {
            return Ok(MeshOutcome {
                success: true,
                attempts: attempt,
                final_state: MeshState { theta: 0.0, attempts: attempt },
            });
        }
    }
    let theta = theta0 + turns * relative;
    Ok(MeshOutcome {
        success: false,
        attempts: config.max_attempts,
        final_state: MeshState {
            theta,
            attempts: config.max_attempts,
        },
    })
}

/// Closed-form success region with no jitter: aligned at the start, or the
/// accumulated relative sweep closes the remaining phase.
pub fn closed_form_success(theta0: f64, config: &MeshConfig) -> bool {
    let pitch = mesh_pitch();
    let relative = (1.0 - config.transmission) * config.controller.sweep(pitch);
    aligned(theta0, pitch, config.tol_angle)
        || theta0 + config.max_attempts as f64 * relative >= pitch - config.tol_angle
}
