//! Low-level leg controller.
//!
//! Stance legs: CoM PD -> ground reaction force optimization -> `J^T f`.
//! Swing legs: Raibert landing point + quadratic reference + residual -> IK.

pub mod qp;
pub mod stance;
pub mod swing;

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::CentroidalState;
use crate::error::{Error, Result};
use crate::gait::GaitConfig;
use crate::kinematics::LegTorque;
use crate::model::{JointState, RobotModel, NUM_LEGS};

pub use stance::{
    clip_to_friction_cone, com_pd, solve_grf_closed_form, stance_leg_command, ClippedForce,
    GrfSolution, StanceOutput,
};
pub use swing::{raibert_landing_target, swing_leg_command, swing_reference, SwingCommand};

/// Number of entries in a flat action vector.
pub const ACTION_DIM: usize = 4 + 3 * NUM_LEGS;

/// High-level command consumed by the leg controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidalAction {
    /// Stepping frequency, Hz.
    pub f_step: f64,
    pub v_x_ref: f64,
    pub v_z_ref: f64,
    pub omega_y_ref: f64,
    /// Per-leg foot position residual in the heading frame (m).
    pub swing_residuals: [Vector3<f64>; NUM_LEGS],
}

impl CentroidalAction {
    pub fn hold(f_step: f64) -> Self {
        CentroidalAction {
            f_step,
            v_x_ref: 0.0,
            v_z_ref: 0.0,
            omega_y_ref: 0.0,
            swing_residuals: [Vector3::zeros(); NUM_LEGS],
        }
    }

    /// Layout: `[f, v_x, v_z, omega_y, r0x, r0y, r0z, ..., r3z]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.f_step, self.v_x_ref, self.v_z_ref, self.omega_y_ref];
        for r in &self.swing_residuals {
            v.extend_from_slice(r.as_slice());
        }
        v
    }

    pub fn from_slice(raw: &[f64]) -> Result<Self> {
        if raw.len() != ACTION_DIM {
            return Err(Error::config(
                "action",
                format!("expected {ACTION_DIM} entries, got {}", raw.len()),
            ));
        }
        Ok(CentroidalAction {
            f_step: raw[0],
            v_x_ref: raw[1],
            v_z_ref: raw[2],
            omega_y_ref: raw[3],
            swing_residuals: std::array::from_fn(|i| {
                Vector3::new(raw[4 + 3 * i], raw[5 + 3 * i], raw[6 + 3 * i])
            }),
        })
    }
}

/// Box bounds on each action component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionBounds {
    pub f_step: [f64; 2],
    pub v_x: [f64; 2],
    pub v_z: [f64; 2],
    pub omega_y: [f64; 2],
    /// Lower corner of the per-leg residual box `(x, y, z)`.
    pub residual_min: [f64; 3],
    pub residual_max: [f64; 3],
}

impl Default for ActionBounds {
    fn default() -> Self {
        ActionBounds {
            f_step: [1.0, 4.0],
            v_x: [-1.0, 3.0],
            v_z: [-3.0, 3.0],
            omega_y: [-3.0, 3.0],
            residual_min: [-0.1, -0.1, -0.1],
            residual_max: [0.1, 0.1, 0.25],
        }
    }
}

impl ActionBounds {
    /// Per-component `[lo, hi]` in flat action layout.
    pub fn as_box(&self) -> Vec<[f64; 2]> {
        let mut b = vec![self.f_step, self.v_x, self.v_z, self.omega_y];
        for _ in 0..NUM_LEGS {
            for k in 0..3 {
                b.push([self.residual_min[k], self.residual_max[k]]);
            }
        }
        b
    }

    /// Clamp a raw action into the box. Also returns the out-of-bound
    /// excess, each component normalized by its box width.
    pub fn clamp(&self, raw: &[f64]) -> Result<(CentroidalAction, f64)> {
        let bounds = self.as_box();
        if raw.len() != bounds.len() {
            return Err(Error::config(
                "action",
                format!("expected {} entries, got {}", bounds.len(), raw.len()),
            ));
        }
        let mut excess = 0.0;
        let clamped: Vec<f64> = raw
            .iter()
            .zip(&bounds)
            .map(|(&v, &[lo, hi])| {
                let c = if v.is_nan() { 0.5 * (lo + hi) } else { v.clamp(lo, hi) };
                let width = (hi - lo).max(f64::EPSILON);
                excess += if v.is_nan() { 1.0 } else { (v - c).abs() / width };
                c
            })
            .collect();
        Ok((CentroidalAction::from_slice(&clamped)?, excess))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, [lo, hi]) in self.as_box().into_iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(
                    format!("env.action_bounds[{i}]"),
                    "lower bound must not exceed upper bound",
                ));
            }
        }
        Ok(())
    }
}

/// Tracking weight `U` over `[w_dot; p_ddot]` and per-leg force weight block
/// `V_leg`; the full force weight is `blockdiag(V_leg, ..., V_leg)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverWeights {
    pub u: Matrix6<f64>,
    pub v_leg: Matrix3<f64>,
}

impl Default for SolverWeights {
    fn default() -> Self {
        SolverWeights {
            u: Matrix6::from_diagonal(&nalgebra::Vector6::new(1.0, 10.0, 1.0, 1.0, 1.0, 10.0)),
            v_leg: Matrix3::identity() * 1e-4,
        }
    }
}

impl SolverWeights {
    pub fn with_force_weight(mut self, scale: f64) -> Self {
        self.v_leg = Matrix3::identity() * scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sym6 = (self.u - self.u.transpose()).abs().max() <= 1e-12;
        if !sym6 || self.u.cholesky().is_none() {
            return Err(Error::config(
                "controller.tracking_weight",
                "must be symmetric positive definite",
            ));
        }
        let sym3 = (self.v_leg - self.v_leg.transpose()).abs().max() <= 1e-12;
        if !sym3 || self.v_leg.cholesky().is_none() {
            return Err(Error::config(
                "controller.force_weight",
                "must be symmetric positive definite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrfSolverKind {
    /// Unconstrained least squares followed by friction-cone clipping.
    #[default]
    ClosedForm,
    /// Full QP with box and pyramidal friction constraints.
    Qp,
}

/// Gains and options of the leg controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// CoM PD proportional gains over `[x, y, z, roll, pitch, yaw]`.
    pub kp: [f64; 6],
    /// CoM PD derivative gains over `[v_x, v_y, v_z, w_x, w_y, w_z]`.
    pub kd: [f64; 6],
    /// `U`, row major, over `[w_dot; p_ddot]`.
    pub tracking_weight: [[f64; 6]; 6],
    /// Per-leg block of `V`, row major.
    pub force_weight: [[f64; 3]; 3],
    pub grf_solver: GrfSolverKind,
    pub qp_max_iterations: usize,
    /// Swing joint PD gains (N m / rad, N m s / rad).
    pub swing_kp: f64,
    pub swing_kd: f64,
    /// Add the policy's swing residuals to the reference.
    pub swing_residuals: bool,
    /// Use the interpolated reference; when off the target is the hip
    /// projection plus residual.
    pub swing_reference: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let w = SolverWeights::default();
        ControllerConfig {
            kp: [0.0, 0.0, 0.0, 50.0, 0.0, 0.0],
            kd: [10.0; 6],
            tracking_weight: std::array::from_fn(|i| std::array::from_fn(|j| w.u[(i, j)])),
            force_weight: std::array::from_fn(|i| std::array::from_fn(|j| w.v_leg[(i, j)])),
            grf_solver: GrfSolverKind::ClosedForm,
            qp_max_iterations: 200,
            swing_kp: 30.0,
            swing_kd: 1.0,
            swing_residuals: true,
            swing_reference: true,
        }
    }
}

impl ControllerConfig {
    pub fn weights(&self) -> SolverWeights {
        SolverWeights {
            u: Matrix6::from_fn(|i, j| self.tracking_weight[i][j]),
            v_leg: Matrix3::from_fn(|i, j| self.force_weight[i][j]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        if self.qp_max_iterations == 0 {
            return Err(Error::config(
                "controller.qp_max_iterations",
                "must be positive",
            ));
        }
        if self.kp.iter().chain(&self.kd).any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::config("controller.kp", "gains must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Per-leg motor command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LegCommand {
    StanceTorque(LegTorque),
    SwingPosition {
        joint_angles: Vector3<f64>,
        kp: f64,
        kd: f64,
    },
}

/// Everything one controller tick produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub commands: [LegCommand; NUM_LEGS],
    /// Present when at least one leg is in stance.
    pub grf: Option<GrfSolution>,
    /// Swing legs' realized (workspace-clamped) foot targets in the world frame.
    pub swing: Vec<SwingCommand>,
}

impl ControlOutput {
    /// Contact force of each leg in the base frame; zero for swing legs.
    pub fn leg_forces(&self) -> [Vector3<f64>; NUM_LEGS] {
        let mut out = [Vector3::zeros(); NUM_LEGS];
        if let Some(sol) = &self.grf {
            for (i, &leg) in sol.legs.iter().enumerate() {
                out[leg] = sol.forces[i];
            }
        }
        out
    }
}

/// Inputs of one controller tick that change from tick to tick.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a> {
    /// Base state; `contact_flags` selects stance legs.
    pub state: &'a CentroidalState,
    pub joints: &'a JointState,
    pub phase: f64,
    /// World foot position at the start of each leg's current swing.
    pub liftoff: &'a [Vector3<f64>; NUM_LEGS],
    pub ground_height: f64,
}

/// Run the full leg controller once.
pub fn compute_leg_commands(
    model: &RobotModel,
    controller: &ControllerConfig,
    gait: &GaitConfig,
    input: &ControlInput<'_>,
    action: &CentroidalAction,
) -> Result<ControlOutput> {
    let stance_mask = input.state.contact_flags;
    let stance = stance_leg_command(
        model,
        input.state,
        input.joints,
        action,
        controller,
        &stance_mask,
    )?;
    let swing_legs: Vec<usize> = (0..NUM_LEGS).filter(|&i| !stance_mask[i]).collect();
    let swing = swing_leg_command(model, controller, gait, input, action, &swing_legs);

    let mut commands = [LegCommand::SwingPosition {
        joint_angles: Vector3::zeros(),
        kp: controller.swing_kp,
        kd: controller.swing_kd,
    }; NUM_LEGS];
    for (leg, torque) in &stance.commands {
        commands[*leg] = LegCommand::StanceTorque(*torque);
    }
    for cmd in &swing {
        commands[cmd.leg] = LegCommand::SwingPosition {
            joint_angles: cmd.joint_angles,
            kp: controller.swing_kp,
            kd: controller.swing_kd,
        };
    }
    Ok(ControlOutput {
        commands,
        grf: stance.solution,
        swing,
    })
}
