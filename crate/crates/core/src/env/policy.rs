//! Action sources for the environment: a scripted jumping heuristic, a
//! height-holding stand command and log replay.

use serde::{Deserialize, Serialize};

use super::Observation;
use crate::control::CentroidalAction;
use crate::error::{Error, Result};
use crate::gait::GaitConfig;
use crate::model::NUM_LEGS;

pub trait Policy: Send {
    /// Raw (unclamped) action vector for the current observation.
    fn act(&mut self, obs: &Observation, gait: &GaitConfig) -> Result<Vec<f64>>;

    /// Called at the start of every episode.
    fn reset(&mut self) {}
}

/// Tuning of the scripted jumping policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicConfig {
    /// Stepping frequency (Hz).
    pub f_step: f64,
    /// Vertical velocity reference at the end of stance (m/s).
    pub takeoff_velocity: f64,
    /// Vertical reference at stance start, as a fraction of the takeoff
    /// velocity. The reference ramps linearly up to the full value.
    pub ramp_start: f64,
    /// Base height the stance push is centred on (m).
    pub stance_height: f64,
    /// Height feedback added to the vertical reference (1/s).
    pub height_gain: f64,
    /// Forward velocity per metre of remaining goal distance (1/s).
    pub forward_gain: f64,
    pub max_forward_velocity: f64,
    /// Pitch-rate reference per radian of pitch (1/s).
    pub pitch_gain: f64,
    /// Extra swing apex height (m).
    pub clearance: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            f_step: 2.0,
            takeoff_velocity: 2.0,
            ramp_start: 0.3,
            stance_height: 0.265,
            height_gain: 5.0,
            forward_gain: 1.0,
            max_forward_velocity: 1.0,
            pitch_gain: 5.0,
            clearance: 0.06,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_step > 0.0 && self.f_step.is_finite()) {
            return Err(Error::config("policy.f_step", "must be positive"));
        }
        if !(self.max_forward_velocity >= 0.0) {
            return Err(Error::config("policy.max_forward_velocity", "must be non-negative"));
        }
        if !(self.ramp_start > 0.0 && self.ramp_start <= 1.0) {
            return Err(Error::config("policy.ramp_start", "must lie in (0, 1]"));
        }
        if !(self.clearance >= 0.0) {
            return Err(Error::config("policy.clearance", "must be non-negative"));
        }
        Ok(())
    }
}

/// Scripted jumping: push upward and toward the goal in stance, hold still
/// in flight, lift the swing feet over a bump.
#[derive(Debug, Clone, Default)]
pub struct HeuristicPolicy {
    pub config: HeuristicConfig,
}

impl HeuristicPolicy {
    pub fn new(config: HeuristicConfig) -> Self {
        HeuristicPolicy { config }
    }

    pub fn command(&self, obs: &Observation, gait: &GaitConfig) -> CentroidalAction {
        let c = &self.config;
        let mut action = CentroidalAction::hold(c.f_step);
        let progress: Vec<f64> = (0..NUM_LEGS)
            .filter_map(|leg| gait.stance_progress(obs.phase, leg))
            .collect();
        if !progress.is_empty() {
            let s = progress.iter().sum::<f64>() / progress.len() as f64;
            action.v_z_ref = c.takeoff_velocity * (c.ramp_start + (1.0 - c.ramp_start) * s)
                + c.height_gain * (c.stance_height - obs.position.z);
            action.v_x_ref = (c.forward_gain * obs.goal.x).clamp(-c.max_forward_velocity, c.max_forward_velocity);
            action.omega_y_ref = -c.pitch_gain * obs.orientation.y;
        }
        for leg in 0..NUM_LEGS {
            if let Ok(s) = gait.swing_progress(obs.phase, leg) {
                action.swing_residuals[leg].z = c.clearance * 4.0 * s * (1.0 - s);
            }
        }
        action
    }
}

impl Policy for HeuristicPolicy {
    fn act(&mut self, obs: &Observation, gait: &GaitConfig) -> Result<Vec<f64>> {
        Ok(self.command(obs, gait).to_vec())
    }
}

/// Stand still at a fixed base height: zero velocity references with a
/// proportional height correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldPolicy {
    pub f_step: f64,
    pub height: f64,
    pub height_gain: f64,
}

impl HoldPolicy {
    pub fn command(&self, height: f64) -> CentroidalAction {
        let mut a = CentroidalAction::hold(self.f_step);
        a.v_z_ref = self.height_gain * (self.height - height);
        a
    }
}

impl Policy for HoldPolicy {
    fn act(&mut self, obs: &Observation, _gait: &GaitConfig) -> Result<Vec<f64>> {
        Ok(self.command(obs.position.z).to_vec())
    }
}

/// Replays a recorded sequence of raw actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPolicy {
    actions: Vec<Vec<f64>>,
    next: usize,
}

impl ReplayPolicy {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        ReplayPolicy { actions, next: 0 }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl Policy for ReplayPolicy {
    fn act(&mut self, _obs: &Observation, _gait: &GaitConfig) -> Result<Vec<f64>> {
        let a = self
            .actions
            .get(self.next)
            .cloned()
            .ok_or(Error::ReplayExhausted { step: self.next })?;
        self.next += 1;
        Ok(a)
    }

    fn reset(&mut self) {
        self.next = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::GaitName;
    use nalgebra::{Vector2, Vector3};

    fn obs(goal: Vector2<f64>, phase: f64) -> Observation {
        Observation {
            position: Vector3::new(0.0, 0.0, 0.26),
            orientation: Vector3::zeros(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            feet_base: [Vector3::zeros(); 4],
            phase,
            goal,
        }
    }

    #[test]
    fn heuristic_signs() {
        let gait = GaitConfig::preset(GaitName::Pronking);
        let p = HeuristicPolicy::default();
        let a = p.command(&obs(Vector2::new(1.0, 0.0), 0.0), &gait);
        assert!(a.v_x_ref > 0.0 && a.v_z_ref > 0.0);
        let late = p.command(&obs(Vector2::new(1.0, 0.0), 2.5), &gait);
        assert!(late.v_z_ref > 0.0);
        let back = p.command(&obs(Vector2::new(-0.5, 0.0), 1.0), &gait);
        assert!(back.v_x_ref <= 0.0);
        let flight = p.command(&obs(Vector2::new(1.0, 0.0), 1.5 * std::f64::consts::PI), &gait);
        assert_eq!((flight.v_x_ref, flight.v_z_ref, flight.omega_y_ref), (0.0, 0.0, 0.0));
        assert!((flight.swing_residuals[0].z - p.config.clearance).abs() < 1e-12);
    }

    #[test]
    fn replay_runs_out() {
        let gait = GaitConfig::default();
        let mut r = ReplayPolicy::new(vec![vec![1.0; 16]]);
        let o = obs(Vector2::zeros(), 0.0);
        assert_eq!(r.act(&o, &gait).unwrap(), vec![1.0; 16]);
        assert!(matches!(r.act(&o, &gait), Err(Error::ReplayExhausted { step: 1 })));
        r.reset();
        assert!(r.act(&o, &gait).is_ok());
    }
}
