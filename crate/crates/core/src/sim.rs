//! Centroidal rigid-body simulator.
//!
//! The base is a single rigid body driven by the leg controller's contact
//! forces through the same dynamics map the controller plans with. Legs are
//! massless: stance feet are pinned to ground anchors, swing feet follow
//! their (workspace-clamped) targets kinematically.
//!
//! One low-level tick:
//! 1. apply due perturbations;
//! 2. resolve contacts, pinning feet on touchdown and releasing on lift-off;
//! 3. run the leg controller;
//! 4. integrate `A f + g` with semi-implicit Euler (velocities, then pose);
//! 5. move swing feet to their targets, keep stance feet on their anchors;
//! 6. recompute joint angles by IK of the realized feet.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{compute_leg_commands, CentroidalAction, ControlInput, ControllerConfig, LegCommand};
use crate::dynamics::{euler_rate_map, CentroidalState, PITCH_GUARD};
use crate::error::{Error, Result};
use crate::gait::{GaitConfig, PhaseState};
use crate::kinematics::{forward_kinematics, inverse_kinematics, inverse_kinematics_clamped, wrap_angle};
use crate::model::{apply_payload, JointState, RobotModel, NUM_LEGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// Contact equals the gait's desired contact.
    Idealized,
    /// Contact requires both the desired state and a foot on the ground.
    #[default]
    Physical,
}

/// A one-shot velocity change applied at the first tick with `time >= start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub start: f64,
    #[serde(default)]
    pub duration: f64,
    /// World-frame linear velocity delta (m/s).
    #[serde(default)]
    pub linear_velocity: [f64; 3],
    /// World-frame angular velocity delta (rad/s).
    #[serde(default)]
    pub angular_velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Low-level tick (s).
    pub dt: f64,
    /// Low-level ticks per policy step.
    pub steps_per_action: usize,
    pub ground_height: f64,
    pub contact_mode: ContactMode,
    /// Extra payload added on top of the robot model's (kg).
    pub payload_mass: f64,
    pub perturbations: Vec<Perturbation>,
    /// Feet within this height of the ground count as touching (m).
    pub contact_tolerance: f64,
    /// Base speed above which the run is declared diverged (m/s).
    pub max_speed: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.002,
            steps_per_action: 5,
            ground_height: 0.0,
            contact_mode: ContactMode::Physical,
            payload_mass: 0.0,
            perturbations: Vec::new(),
            contact_tolerance: 1e-6,
            max_speed: 50.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("sim.dt", "must be positive"));
        }
        if self.steps_per_action == 0 {
            return Err(Error::config("sim.steps_per_action", "must be at least 1"));
        }
        if !(self.payload_mass >= 0.0) {
            return Err(Error::config("sim.payload_mass", "must be non-negative"));
        }
        if !(self.contact_tolerance >= 0.0) {
            return Err(Error::config("sim.contact_tolerance", "must be non-negative"));
        }
        Ok(())
    }

    /// Duration of one policy step (s).
    pub fn policy_dt(&self) -> f64 {
        self.dt * self.steps_per_action as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub base: CentroidalState,
    /// Ground anchor of every pinned (contact-active) foot.
    pub anchors: [Option<Vector3<f64>>; NUM_LEGS],
    /// Foot position at the start of each leg's current swing.
    pub liftoff: [Vector3<f64>; NUM_LEGS],
    pub joints: JointState,
    pub time: f64,
    /// Feet physically on the ground at the end of the last tick.
    pub touching: [bool; NUM_LEGS],
    /// Desired contacts used by the last tick.
    pub desired: [bool; NUM_LEGS],
    /// World foot velocities over the last tick.
    pub foot_velocities: [Vector3<f64>; NUM_LEGS],
    pub perturbations_applied: Vec<bool>,
}

impl SimState {
    /// Robot standing on its nominal joint angles with every foot pinned.
    pub fn standing(model: &RobotModel, ground_height: f64) -> Self {
        let q = model.nominal_joint_angles();
        let feet_base: [Vector3<f64>; NUM_LEGS] = std::array::from_fn(|i| forward_kinematics(model, i, &q));
        let height = ground_height - feet_base.iter().map(|f| f.z).fold(f64::INFINITY, f64::min);
        let mut base = CentroidalState {
            position: Vector3::new(0.0, 0.0, height),
            ..Default::default()
        };
        let mut anchors = [None; NUM_LEGS];
        for leg in 0..NUM_LEGS {
            let mut foot = base.position + feet_base[leg];
            foot.z = ground_height;
            base.foot_positions_world[leg] = foot;
            base.contact_flags[leg] = true;
            anchors[leg] = Some(foot);
        }
        SimState {
            liftoff: base.foot_positions_world,
            base,
            anchors,
            joints: JointState {
                angles: [q; NUM_LEGS],
                velocities: [Vector3::zeros(); NUM_LEGS],
            },
            time: 0.0,
            touching: [true; NUM_LEGS],
            desired: [true; NUM_LEGS],
            foot_velocities: [Vector3::zeros(); NUM_LEGS],
            perturbations_applied: Vec::new(),
        }
    }

    /// All feet strictly above the ground and none pinned.
    pub fn in_flight(&self) -> bool {
        self.anchors.iter().all(Option::is_none) && self.touching.iter().all(|&t| !t)
    }
}

/// One row of the per-tick trajectory log.
#[derive(Debug, Clone, PartialEq)]
pub struct TickLog {
    pub time: f64,
    pub phase: f64,
    /// Action applied during the tick (after clamping and ablation overlays).
    pub action: CentroidalAction,
    pub position: Vector3<f64>,
    pub orientation: Vector3<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub desired_contacts: [bool; NUM_LEGS],
    pub contacts: [bool; NUM_LEGS],
    /// Feet on the ground at the end of the tick.
    pub touching: [bool; NUM_LEGS],
    /// Contact forces in the world frame (N).
    pub grf: [Vector3<f64>; NUM_LEGS],
    pub feet: [Vector3<f64>; NUM_LEGS],
    pub torques: [Vector3<f64>; NUM_LEGS],
    pub normal_clipped: [bool; NUM_LEGS],
    pub tangential_scaled: [bool; NUM_LEGS],
    pub torque_saturated: [bool; NUM_LEGS],
}

/// Robot, controller and gait bundled with the evolving simulator state.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub model: RobotModel,
    pub controller: ControllerConfig,
    pub gait: GaitConfig,
    pub config: SimConfig,
    pub state: SimState,
    pub phase: PhaseState,
}

impl Simulation {
    /// Simulation starting from the nominal standing pose. The config's
    /// payload is added to the model here.
    pub fn new(model: &RobotModel, controller: ControllerConfig, gait: GaitConfig, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let model = apply_payload(model, config.payload_mass)?;
        let mut state = SimState::standing(&model, config.ground_height);
        state.perturbations_applied = vec![false; config.perturbations.len()];
        let phase = PhaseState::new(gait.default_frequency);
        Ok(Simulation {
            model,
            controller,
            gait,
            config,
            state,
            phase,
        })
    }

    pub fn with_state(mut self, state: SimState) -> Self {
        let n = self.config.perturbations.len();
        self.state = state;
        self.state.perturbations_applied.resize(n, false);
        self
    }

    fn apply_perturbations(&mut self) {
        let t = self.state.time;
        for (i, p) in self.config.perturbations.iter().enumerate() {
            if !self.state.perturbations_applied[i] && t >= p.start - 1e-12 {
                self.state.base.linear_velocity += Vector3::from(p.linear_velocity);
                self.state.base.angular_velocity += Vector3::from(p.angular_velocity);
                self.state.perturbations_applied[i] = true;
            }
        }
    }

    fn resolve_contacts(&mut self, desired: &[bool; NUM_LEGS]) {
        let ground = self.config.ground_height;
        let st = &mut self.state;
        for leg in 0..NUM_LEGS {
            let contact = match self.config.contact_mode {
                ContactMode::Idealized => desired[leg],
                ContactMode::Physical => desired[leg] && st.touching[leg],
            };
            let foot = st.base.foot_positions_world[leg];
            match (contact, st.anchors[leg]) {
                (true, None) => {
                    st.anchors[leg] = Some(Vector3::new(foot.x, foot.y, ground));
                }
                (false, Some(anchor)) => {
                    st.liftoff[leg] = anchor;
                    st.anchors[leg] = None;
                }
                (false, None) if st.desired[leg] && !desired[leg] => {
                    // Swing window opened without a prior touchdown.
                    st.liftoff[leg] = foot;
                }
                _ => {}
            }
            if let Some(anchor) = st.anchors[leg] {
                st.base.foot_positions_world[leg] = anchor;
            }
            st.base.contact_flags[leg] = contact;
        }
        st.desired = *desired;
    }

    /// Joint angles of every leg for the current base pose and feet.
    fn update_joints(&mut self) {
        let rot = self.state.base.rotation();
        for leg in 0..NUM_LEGS {
            let target = rot.transpose() * (self.state.base.foot_positions_world[leg] - self.state.base.position);
            let (q, _) = inverse_kinematics_clamped(&self.model, leg, &target);
            self.state.joints.angles[leg] = q;
        }
    }

    /// Run one low-level tick with the current phase.
    pub fn step_low_level(&mut self, action: &CentroidalAction) -> Result<TickLog> {
        let dt = self.config.dt;
        let ground = self.config.ground_height;
        self.apply_perturbations();
        let phase = self.phase.phase();
        let desired = self.gait.desired_contact_state(phase);
        self.resolve_contacts(&desired);
        self.update_joints();

        let out = {
            let input = ControlInput {
                state: &self.state.base,
                joints: &self.state.joints,
                phase,
                liftoff: &self.state.liftoff,
                ground_height: ground,
            };
            compute_leg_commands(&self.model, &self.controller, &self.gait, &input, action)?
        };

        // Semi-implicit Euler on the base.
        let base = &mut self.state.base;
        let rot = base.rotation();
        let (lin_acc, ang_acc) = match &out.grf {
            Some(sol) => {
                let a = sol.achieved_acceleration;
                (
                    rot * Vector3::new(a[3], a[4], a[5]),
                    rot * Vector3::new(a[0], a[1], a[2]),
                )
            }
            None => (Vector3::new(0.0, 0.0, -self.model.gravity), Vector3::zeros()),
        };
        base.linear_velocity += lin_acc * dt;
        base.angular_velocity += ang_acc * dt;
        base.position += base.linear_velocity * dt;
        let body_rate = rot.transpose() * base.angular_velocity;
        let rates = euler_rate_map(&base.orientation) * body_rate;
        base.orientation += rates * dt;
        base.orientation.x = wrap_angle(base.orientation.x);
        base.orientation.z = wrap_angle(base.orientation.z);

        // Feet.
        let prev_feet = base.foot_positions_world;
        for cmd in &out.swing {
            let mut p = cmd.realized;
            p.z = p.z.max(ground);
            base.foot_positions_world[cmd.leg] = p;
        }
        let new_rot = base.rotation();
        let tol = self.config.contact_tolerance;
        for leg in 0..NUM_LEGS {
            let foot_base = new_rot.transpose() * (base.foot_positions_world[leg] - base.position);
            let pinned = self.state.anchors[leg].is_some();
            let (q, clamped) = inverse_kinematics_clamped(&self.model, leg, &foot_base);
            if !pinned && clamped {
                base.foot_positions_world[leg] = base.position + new_rot * forward_kinematics(&self.model, leg, &q);
            }
            let prev_q = self.state.joints.angles[leg];
            self.state.joints.velocities[leg] = (q - prev_q) / dt;
            self.state.joints.angles[leg] = q;
            self.state.touching[leg] = if pinned {
                inverse_kinematics(&self.model, leg, &foot_base).is_ok()
            } else {
                base.foot_positions_world[leg].z <= ground + tol
            };
            self.state.foot_velocities[leg] = (base.foot_positions_world[leg] - prev_feet[leg]) / dt;
        }
        self.state.time += dt;

        let base = &self.state.base;
        let speed = base.linear_velocity.norm();
        if !(speed <= self.config.max_speed) {
            return Err(Error::SimDiverged {
                time: self.state.time,
                reason: format!("base speed {speed:.3} m/s exceeds {}", self.config.max_speed),
            });
        }
        if !(base.orientation.y.abs() < PITCH_GUARD) {
            return Err(Error::SimDiverged {
                time: self.state.time,
                reason: format!("pitch {:.3} rad beyond the Euler-rate guard", base.orientation.y),
            });
        }

        let mut torques = [Vector3::zeros(); NUM_LEGS];
        let mut saturated = [false; NUM_LEGS];
        for (leg, cmd) in out.commands.iter().enumerate() {
            if let LegCommand::StanceTorque(t) = cmd {
                torques[leg] = t.torques;
                saturated[leg] = t.saturated;
            }
        }
        let mut normal_clipped = [false; NUM_LEGS];
        let mut tangential_scaled = [false; NUM_LEGS];
        if let Some(sol) = &out.grf {
            for (i, &leg) in sol.legs.iter().enumerate() {
                normal_clipped[leg] = sol.normal_clipped[i];
                tangential_scaled[leg] = sol.tangential_scaled[i];
            }
        }
        let grf = out.leg_forces().map(|f| rot * f);
        Ok(TickLog {
            time: self.state.time,
            phase,
            action: *action,
            position: base.position,
            orientation: base.orientation,
            linear_velocity: base.linear_velocity,
            angular_velocity: base.angular_velocity,
            desired_contacts: desired,
            contacts: base.contact_flags,
            touching: self.state.touching,
            grf,
            feet: base.foot_positions_world,
            torques,
            normal_clipped,
            tangential_scaled,
            torque_saturated: saturated,
        })
    }

    /// One low-level tick followed by the phase update.
    pub fn advance_tick(&mut self, action: &CentroidalAction) -> Result<TickLog> {
        let log = self.step_low_level(action)?;
        self.phase = self.gait.advance_phase(&self.phase, action.f_step, self.config.dt);
        Ok(log)
    }

    /// Hold `action` for `steps_per_action` ticks, advancing the phase after
    /// each tick.
    pub fn step_high_level(&mut self, action: &CentroidalAction) -> Result<Vec<TickLog>> {
        (0..self.config.steps_per_action)
            .map(|_| self.advance_tick(action))
            .collect()
    }

    /// Contact state seen by the reward: pinned feet in idealized mode,
    /// feet on the ground in physical mode.
    pub fn actual_contacts(&self) -> [bool; NUM_LEGS] {
        match self.config.contact_mode {
            ContactMode::Idealized => std::array::from_fn(|i| self.state.anchors[i].is_some()),
            ContactMode::Physical => self.state.touching,
        }
    }
}
