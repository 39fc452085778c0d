//! Leg kinematics: forward and inverse position maps, the foot Jacobian and
//! the force-to-torque map.
//!
//! Joint convention, per leg `(abduction, hip, knee)`:
//!
//! ```text
//! foot = hip_offset + Rx(abduction) * [x_p, side * l_abd, z_p]
//! x_p  = -l_thigh * sin(hip) - l_calf * sin(hip + knee)
//! z_p  = -l_thigh * cos(hip) - l_calf * cos(hip + knee)
//! ```
//!
//! so all-zero angles leave the leg hanging straight down, a positive hip
//! angle swings the foot backward, and the knee-backward branch has
//! `knee <= 0`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::{leg_side, RobotModel};

/// Clearance kept from the workspace boundary when clamping targets.
pub const WORKSPACE_MARGIN: f64 = 1e-6;

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_x_derivative(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

/// Foot position in the leg plane, before abduction.
fn leg_plane_foot(model: &RobotModel, leg: usize, q: &Vector3<f64>) -> Vector3<f64> {
    let l = &model.link_lengths;
    let (hip, knee) = (q[1], q[2]);
    Vector3::new(
        -l.thigh * hip.sin() - l.calf * (hip + knee).sin(),
        leg_side(leg) * l.hip_abduction,
        -l.thigh * hip.cos() - l.calf * (hip + knee).cos(),
    )
}

/// Foot position relative to the base origin, in the base frame.
pub fn forward_kinematics(model: &RobotModel, leg: usize, q: &Vector3<f64>) -> Vector3<f64> {
    model.hip_offset(leg) + rot_x(q[0]) * leg_plane_foot(model, leg, q)
}

/// `J[i][j] = d foot[i] / d q[j]`.
pub fn foot_jacobian(model: &RobotModel, leg: usize, q: &Vector3<f64>) -> Matrix3<f64> {
    let l = &model.link_lengths;
    let (hip, knee) = (q[1], q[2]);
    let w = leg_plane_foot(model, leg, q);
    let rx = rot_x(q[0]);
    let d_abd = rot_x_derivative(q[0]) * w;
    let d_hip = rx * Vector3::new(w.z, 0.0, -w.x);
    let d_knee = rx * Vector3::new(-l.calf * (hip + knee).cos(), 0.0, l.calf * (hip + knee).sin());
    Matrix3::from_columns(&[d_abd, d_hip, d_knee])
}

/// Solve the leg's joint angles for a base-frame foot target. With `clamp`
/// set, unreachable targets are pulled onto the workspace boundary and the
/// returned flag reports it; without it they produce `Unreachable`.
fn solve_leg(
    model: &RobotModel,
    leg: usize,
    target: &Vector3<f64>,
    clamp: bool,
) -> Result<(Vector3<f64>, bool)> {
    let l = &model.link_lengths;
    let unreachable = || Error::Unreachable {
        leg,
        target: [target.x, target.y, target.z],
    };
    if !(target.x.is_finite() && target.y.is_finite() && target.z.is_finite()) {
        return Err(unreachable());
    }
    let d = target - model.hip_offset(leg);
    let side_len = leg_side(leg) * l.hip_abduction;
    let mut clamped = false;

    // Abduction: rotate the leg plane so that its lateral coordinate equals
    // the abduction offset and the foot lies below the hip.
    let mut r_yz = d.y.hypot(d.z);
    if r_yz < l.hip_abduction {
        if !clamp {
            return Err(unreachable());
        }
        r_yz = l.hip_abduction;
        clamped = true;
    }
    let alpha = d.z.atan2(d.y);
    let beta = if r_yz > 0.0 {
        (side_len / r_yz).clamp(-1.0, 1.0).acos()
    } else {
        std::f64::consts::FRAC_PI_2
    };
    let abduction = wrap_angle(alpha + beta);
    let mut x_p = d.x;
    let mut z_p = -(r_yz * r_yz - l.hip_abduction * l.hip_abduction).max(0.0).sqrt();

    // Sagittal two-link problem.
    let max_len = l.thigh + l.calf;
    let min_len = (l.thigh - l.calf).abs();
    let mut dist = x_p.hypot(z_p);
    if dist > max_len || dist < min_len {
        if !clamp {
            // Tolerate round-off on the boundary itself.
            let tol = 1e-12 * max_len;
            if dist > max_len + tol || dist < min_len - tol {
                return Err(unreachable());
            }
        } else {
            let lo = min_len + WORKSPACE_MARGIN;
            let hi = max_len - WORKSPACE_MARGIN;
            let new_dist = dist.clamp(lo, hi);
            if dist > 0.0 {
                x_p *= new_dist / dist;
                z_p *= new_dist / dist;
            } else {
                z_p = -new_dist;
            }
            dist = new_dist;
            clamped = true;
        }
    }
    let cos_knee = ((dist * dist - l.thigh * l.thigh - l.calf * l.calf) / (2.0 * l.thigh * l.calf))
        .clamp(-1.0, 1.0);
    let knee = model.knee_branch.sign() * cos_knee.acos();
    let a = l.thigh + l.calf * knee.cos();
    let b = l.calf * knee.sin();
    let hip = wrap_angle((-x_p).atan2(-z_p) - b.atan2(a));
    Ok((Vector3::new(abduction, hip, knee), clamped))
}

/// Joint angles placing the foot at `target` (base frame).
pub fn inverse_kinematics(model: &RobotModel, leg: usize, target: &Vector3<f64>) -> Result<Vector3<f64>> {
    solve_leg(model, leg, target, false).map(|(q, _)| q)
}

/// Like [`inverse_kinematics`] but clamps the target into the reachable
/// workspace. Returns the angles and whether clamping occurred.
pub fn inverse_kinematics_clamped(
    model: &RobotModel,
    leg: usize,
    target: &Vector3<f64>,
) -> (Vector3<f64>, bool) {
    match solve_leg(model, leg, target, true) {
        Ok(sol) => sol,
        // Non-finite input: fall back to the nominal pose.
        Err(_) => (model.nominal_joint_angles(), true),
    }
}

/// Joint torques for a stance leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegTorque {
    pub torques: Vector3<f64>,
    /// Set when any joint hit `torque_limit`.
    pub saturated: bool,
}

/// `tau = J^T f`, clamped to the actuator limit. `grf` is the contact force
/// in the base frame, the same vector that enters the centroidal dynamics.
pub fn torque_from_grf(
    model: &RobotModel,
    leg: usize,
    q: &Vector3<f64>,
    grf: &Vector3<f64>,
) -> LegTorque {
    let raw = foot_jacobian(model, leg, q).transpose() * grf;
    let lim = model.torque_limit;
    let torques = raw.map(|t| t.clamp(-lim, lim));
    LegTorque {
        saturated: torques != raw,
        torques,
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}
