//! Stance leg control: CoM PD, GRF optimization and torque mapping.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};

use super::qp::solve_grf_qp;
use super::{CentroidalAction, ControllerConfig, GrfSolverKind, SolverWeights};
use crate::dynamics::{build_centroidal_dynamics, yaw_rotation, CentroidalDynamics, CentroidalState};
use crate::error::Result;
use crate::kinematics::{torque_from_grf, LegTorque};
use crate::model::{JointState, RobotModel, NUM_LEGS};

/// Tangential forces within this distance of the cone boundary are left
/// untouched, which makes clipping idempotent.
pub const CONE_TOLERANCE: f64 = 1e-12;

/// Tangential magnitudes below this are treated as zero.
const TANGENTIAL_EPS: f64 = 1e-9;

/// Desired base acceleration `[w_dot; p_ddot]` in the base frame.
///
/// The PD law runs in the heading (yaw-aligned) frame on the pose-ordered
/// vectors `[p, theta]` / `[v, w]`: the reference pose is the current pose with
/// zero roll and the reference velocity is the sagittal command. The result
/// is rotated into the base frame and reordered angular-first.
pub fn com_pd(
    state: &CentroidalState,
    action: &CentroidalAction,
    kp: &[f64; 6],
    kd: &[f64; 6],
) -> Vector6<f64> {
    let heading = yaw_rotation(state.yaw());
    let v = heading.transpose() * state.linear_velocity;
    let w = heading.transpose() * state.angular_velocity;
    let pose_err = [0.0, 0.0, 0.0, -state.orientation.x, 0.0, 0.0];
    let vel_ref = [action.v_x_ref, 0.0, action.v_z_ref, 0.0, action.omega_y_ref, 0.0];
    let vel = [v.x, v.y, v.z, w.x, w.y, w.z];
    let acc: [f64; 6] = std::array::from_fn(|i| kp[i] * pose_err[i] + kd[i] * (vel_ref[i] - vel[i]));

    let to_base = state.rotation().transpose() * heading;
    let lin = to_base * Vector3::new(acc[0], acc[1], acc[2]);
    let ang = to_base * Vector3::new(acc[3], acc[4], acc[5]);
    Vector6::new(ang.x, ang.y, ang.z, lin.x, lin.y, lin.z)
}

/// Normal matrix `A^T U A + V` and right-hand side `A^T U (acc_ref - g)`.
pub(crate) fn normal_equations(
    dynamics: &CentroidalDynamics,
    acc_ref: &Vector6<f64>,
    weights: &SolverWeights,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = dynamics.a.ncols();
    let ua = weights.u * &dynamics.a;
    let mut h = dynamics.a.transpose() * &ua;
    for k in 0..n / 3 {
        let mut block = h.fixed_view_mut::<3, 3>(3 * k, 3 * k);
        block += weights.v_leg;
    }
    let rhs = ua.transpose() * (acc_ref - dynamics.g);
    (h, rhs)
}

/// Unconstrained weighted least-squares forces
/// `(A^T U A + V)^-1 A^T U (acc_ref - g)`.
pub fn solve_grf_closed_form(
    dynamics: &CentroidalDynamics,
    acc_ref: &Vector6<f64>,
    weights: &SolverWeights,
) -> DVector<f64> {
    if dynamics.num_stance() == 0 {
        return DVector::zeros(0);
    }
    let (h, rhs) = normal_equations(dynamics, acc_ref, weights);
    h.cholesky()
        .expect("A^T U A + V is positive definite for V > 0")
        .solve(&rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedForce {
    pub force: Vector3<f64>,
    pub normal_clipped: bool,
    pub tangential_scaled: bool,
}

/// Clip the normal force into `[f_min, f_max]`, then scale the tangential
/// part onto the circular cone `|f_t| <= mu f_z` using the clipped normal.
pub fn clip_to_friction_cone(force: &Vector3<f64>, mu: f64, f_min: f64, f_max: f64) -> ClippedForce {
    let fz = force.z.clamp(f_min, f_max);
    let tangential = force.x.hypot(force.y);
    let limit = mu * fz;
    let (fx, fy, scaled) = if tangential < TANGENTIAL_EPS || tangential <= limit + CONE_TOLERANCE {
        (force.x, force.y, false)
    } else {
        let s = limit / tangential;
        (force.x * s, force.y * s, true)
    };
    ClippedForce {
        force: Vector3::new(fx, fy, fz),
        normal_clipped: fz != force.z,
        tangential_scaled: scaled,
    }
}

/// Result of the stance force optimization for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct GrfSolution {
    /// Stance legs in ascending order.
    pub legs: Vec<usize>,
    /// Applied force of each stance leg (base frame, N).
    pub forces: Vec<Vector3<f64>>,
    pub normal_clipped: Vec<bool>,
    pub tangential_scaled: Vec<bool>,
    /// Requested `[w_dot; p_ddot]`.
    pub desired_acceleration: Vector6<f64>,
    /// `A f + g` with the applied forces.
    pub achieved_acceleration: Vector6<f64>,
    pub solver: GrfSolverKind,
}

impl GrfSolution {
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.forces.len(),
            self.forces.iter().flat_map(|f| f.iter().copied()),
        )
    }

    pub fn any_clipped(&self) -> bool {
        self.normal_clipped.iter().chain(&self.tangential_scaled).any(|&c| c)
    }
}

/// Stance commands plus the force solution (None without stance legs).
#[derive(Debug, Clone, PartialEq)]
pub struct StanceOutput {
    pub commands: Vec<(usize, LegTorque)>,
    pub solution: Option<GrfSolution>,
}

/// Solve forces for already-built dynamics with the configured solver.
pub fn solve_stance_forces(
    model: &RobotModel,
    controller: &ControllerConfig,
    dynamics: &CentroidalDynamics,
    acc_ref: &Vector6<f64>,
) -> Result<GrfSolution> {
    let weights = controller.weights();
    let k = dynamics.num_stance();
    let (forces, normal_clipped, tangential_scaled) = match controller.grf_solver {
        GrfSolverKind::ClosedForm => {
            let raw = solve_grf_closed_form(dynamics, acc_ref, &weights);
            let mut forces = Vec::with_capacity(k);
            let mut nc = Vec::with_capacity(k);
            let mut ts = Vec::with_capacity(k);
            for i in 0..k {
                let f = Vector3::new(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
                let c = clip_to_friction_cone(&f, model.friction_mu, model.f_min, model.f_max);
                forces.push(c.force);
                nc.push(c.normal_clipped);
                ts.push(c.tangential_scaled);
            }
            (forces, nc, ts)
        }
        GrfSolverKind::Qp => {
            let sol = solve_grf_qp(
                dynamics,
                acc_ref,
                &weights,
                model.friction_mu,
                model.f_min,
                model.f_max,
                controller.qp_max_iterations,
            )?;
            let forces = (0..k)
                .map(|i| Vector3::new(sol.x[3 * i], sol.x[3 * i + 1], sol.x[3 * i + 2]))
                .collect();
            // Report which legs sit on a normal or friction bound.
            let mut nc = vec![false; k];
            let mut ts = vec![false; k];
            for &c in &sol.active {
                if c % 6 < 2 {
                    nc[c / 6] = true;
                } else {
                    ts[c / 6] = true;
                }
            }
            (forces, nc, ts)
        }
    };
    let stacked = DVector::from_iterator(3 * k, forces.iter().flat_map(|f: &Vector3<f64>| f.iter().copied()));
    Ok(GrfSolution {
        legs: dynamics.legs.clone(),
        achieved_acceleration: dynamics.acceleration(&stacked),
        forces,
        normal_clipped,
        tangential_scaled,
        desired_acceleration: *acc_ref,
        solver: controller.grf_solver,
    })
}

/// CoM PD, force optimization (clipped in closed-form mode) and `J^T f` for
/// every leg set in `stance_mask`.
pub fn stance_leg_command(
    model: &RobotModel,
    state: &CentroidalState,
    joints: &JointState,
    action: &CentroidalAction,
    controller: &ControllerConfig,
    stance_mask: &[bool; NUM_LEGS],
) -> Result<StanceOutput> {
    if !stance_mask.iter().any(|&s| s) {
        return Ok(StanceOutput {
            commands: Vec::new(),
            solution: None,
        });
    }
    let acc_ref = com_pd(state, action, &controller.kp, &controller.kd);
    let dynamics = build_centroidal_dynamics(model, state, stance_mask);
    let solution = solve_stance_forces(model, controller, &dynamics, &acc_ref)?;
    let commands = solution
        .legs
        .iter()
        .zip(&solution.forces)
        .map(|(&leg, f)| (leg, torque_from_grf(model, leg, &joints.angles[leg], f)))
        .collect();
    Ok(StanceOutput {
        commands,
        solution: Some(solution),
    })
}
