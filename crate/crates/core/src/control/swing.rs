//! Swing leg control.
//!
//! The reference foot path is a per-coordinate quadratic through the
//! lift-off point, the hip projected onto the ground (mid-swing) and the
//! Raibert landing point. All three knots sit on the ground; vertical
//! motion comes from the policy's residual.

use nalgebra::{Vector2, Vector3};

use super::{CentroidalAction, ControlInput, ControllerConfig};
use crate::dynamics::yaw_rotation;
use crate::gait::GaitConfig;
use crate::kinematics::{forward_kinematics, inverse_kinematics_clamped};
use crate::model::RobotModel;

/// `p_land = p_ref + v T_stance / 2`.
pub fn raibert_landing_target(hip_xy: &Vector2<f64>, v_com_xy: &Vector2<f64>, t_stance: f64) -> Vector2<f64> {
    hip_xy + v_com_xy * (0.5 * t_stance)
}

/// Quadratic through `(0, liftoff)`, `(0.5, air)` and `(1, land)`.
pub fn swing_reference(
    liftoff: &Vector3<f64>,
    air: &Vector3<f64>,
    land: &Vector3<f64>,
    s: f64,
) -> Vector3<f64> {
    // Lagrange basis on the nodes 0, 1/2, 1.
    let l0 = 2.0 * (s - 0.5) * (s - 1.0);
    let l1 = -4.0 * s * (s - 1.0);
    let l2 = 2.0 * s * (s - 0.5);
    liftoff * l0 + air * l1 + land * l2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingCommand {
    pub leg: usize,
    /// Swing progress used for this tick.
    pub progress: f64,
    /// Reference point before the residual (world).
    pub reference: Vector3<f64>,
    /// Requested target, reference plus residual (world).
    pub target: Vector3<f64>,
    /// Foot position reached after workspace clamping (world).
    pub realized: Vector3<f64>,
    pub joint_angles: Vector3<f64>,
    pub clamped: bool,
}

/// Foot targets and joint commands for the listed swing legs.
///
/// Legs that the gait already marks as stance but that have not touched
/// down are held at the end of their swing (`s = 1`).
pub fn swing_leg_command(
    model: &RobotModel,
    controller: &ControllerConfig,
    gait: &GaitConfig,
    input: &ControlInput<'_>,
    action: &CentroidalAction,
    legs: &[usize],
) -> Vec<SwingCommand> {
    let state = input.state;
    let rot = state.rotation();
    let heading = yaw_rotation(state.yaw());
    let v_xy = state.linear_velocity.xy();
    let f_step = gait.clamp_frequency(action.f_step);

    legs.iter()
        .map(|&leg| {
            let progress = gait.swing_progress(input.phase, leg).unwrap_or(1.0);
            let hip_world = state.position + rot * model.shoulder_offset(leg);
            let air = Vector3::new(hip_world.x, hip_world.y, input.ground_height);
            let t_stance = gait.stance_duration_after(input.phase, f_step, leg);
            let land_xy = raibert_landing_target(&hip_world.xy(), &v_xy, t_stance);
            let land = Vector3::new(land_xy.x, land_xy.y, input.ground_height);

            let reference = if controller.swing_reference {
                swing_reference(&input.liftoff[leg], &air, &land, progress)
            } else {
                air
            };
            let residual = if controller.swing_residuals {
                heading * action.swing_residuals[leg]
            } else {
                Vector3::zeros()
            };
            let target = reference + residual;
            let target_base = rot.transpose() * (target - state.position);
            let (joint_angles, clamped) = inverse_kinematics_clamped(model, leg, &target_base);
            let realized = if clamped {
                state.position + rot * forward_kinematics(model, leg, &joint_angles)
            } else {
                target
            };
            if clamped {
                log::trace!("leg {leg} swing target clamped into workspace");
            }
            SwingCommand {
                leg,
                progress,
                reference,
                target,
                realized,
                joint_angles,
                clamped,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CentroidalState;
    use crate::gait::GaitName;
    use crate::model::JointState;
    use approx::assert_abs_diff_eq;

    #[test]
    fn raibert_examples() {
        let p = raibert_landing_target(&Vector2::new(0.3, 0.1), &Vector2::new(1.0, 0.0), 0.3);
        assert_abs_diff_eq!(p, Vector2::new(0.45, 0.1), epsilon = 1e-15);
        let p0 = raibert_landing_target(&Vector2::new(0.3, 0.1), &Vector2::zeros(), 0.3);
        assert_eq!(p0, Vector2::new(0.3, 0.1));
        let v = Vector2::new(0.7, -0.2);
        let o1 = raibert_landing_target(&Vector2::zeros(), &v, 0.2);
        let o2 = raibert_landing_target(&Vector2::zeros(), &v, 0.4);
        assert_abs_diff_eq!(o2, o1 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_reference_knots() {
        let a = Vector3::new(0.1, -0.2, 0.0);
        let b = Vector3::new(0.3, -0.1, 0.1);
        let c = Vector3::new(0.6, 0.0, 0.0);
        assert_eq!(swing_reference(&a, &b, &c, 0.0), a);
        assert_eq!(swing_reference(&a, &b, &c, 0.5), b);
        assert_eq!(swing_reference(&a, &b, &c, 1.0), c);
        let z = swing_reference(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 0.1), &Vector3::zeros(), 0.25);
        assert_abs_diff_eq!(z.z, 0.075, epsilon = 1e-15);
        // Collinear, evenly spaced knots give a straight line.
        let m = (a + c) / 2.0;
        for s in [0.1, 0.33, 0.8] {
            assert_abs_diff_eq!(swing_reference(&a, &m, &c, s), a + (c - a) * s, epsilon = 1e-15);
        }
    }

    fn flight_state(model: &RobotModel) -> CentroidalState {
        let mut s = CentroidalState {
            position: Vector3::new(0.0, 0.0, 0.3),
            linear_velocity: Vector3::new(0.5, 0.0, 0.0),
            ..Default::default()
        };
        for leg in 0..4 {
            s.foot_positions_world[leg] = s.position + model.shoulder_offset(leg) - Vector3::new(0.0, 0.0, 0.3);
        }
        s
    }

    #[test]
    fn swing_end_lands_on_raibert_point() {
        let model = RobotModel::go1();
        let gait = GaitConfig::preset(GaitName::Pronking);
        let state = flight_state(&model);
        let liftoff = state.foot_positions_world;
        let joints = JointState::default();
        let input = ControlInput {
            state: &state,
            joints: &joints,
            phase: std::f64::consts::TAU - 1e-12,
            liftoff: &liftoff,
            ground_height: 0.0,
        };
        let action = CentroidalAction::hold(2.0);
        let cmds = swing_leg_command(&model, &ControllerConfig::default(), &gait, &input, &action, &[0, 1, 2, 3]);
        for c in &cmds {
            let hip = state.position + model.shoulder_offset(c.leg);
            // T_stance = 0.25 s at 2 Hz.
            let expect = Vector3::new(hip.x + 0.5 * 0.25 / 2.0, hip.y, 0.0);
            assert_abs_diff_eq!(c.reference, expect, epsilon = 1e-9);
            assert!(!c.clamped);
            assert_abs_diff_eq!(c.realized, c.target, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_raises_apex_and_flags_disable_it() {
        let model = RobotModel::go1();
        let gait = GaitConfig::preset(GaitName::Pronking);
        let state = flight_state(&model);
        let liftoff = state.foot_positions_world;
        let joints = JointState::default();
        let input = ControlInput {
            state: &state,
            joints: &joints,
            phase: 1.5 * std::f64::consts::PI,
            liftoff: &liftoff,
            ground_height: 0.0,
        };
        let mut action = CentroidalAction::hold(2.0);
        action.swing_residuals[0] = Vector3::new(0.0, 0.0, 0.05);
        let cfg = ControllerConfig::default();
        let cmd = swing_leg_command(&model, &cfg, &gait, &input, &action, &[0])[0];
        assert_abs_diff_eq!(cmd.progress, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.target - cmd.reference, Vector3::new(0.0, 0.0, 0.05), epsilon = 1e-15);

        let no_res = ControllerConfig {
            swing_residuals: false,
            ..cfg.clone()
        };
        let cmd = swing_leg_command(&model, &no_res, &gait, &input, &action, &[0])[0];
        assert_eq!(cmd.target, cmd.reference);

        let no_ref = ControllerConfig {
            swing_reference: false,
            ..cfg
        };
        let cmd = swing_leg_command(&model, &no_ref, &gait, &input, &action, &[0])[0];
        let hip = state.position + model.shoulder_offset(0);
        assert_abs_diff_eq!(cmd.target, Vector3::new(hip.x, hip.y, 0.05), epsilon = 1e-15);
    }

    #[test]
    fn unreachable_targets_are_clamped() {
        let model = RobotModel::go1();
        let gait = GaitConfig::preset(GaitName::Pronking);
        let mut state = flight_state(&model);
        state.position.z = 0.8;
        let liftoff = [Vector3::zeros(); 4];
        let joints = JointState::default();
        let input = ControlInput {
            state: &state,
            joints: &joints,
            phase: 4.0,
            liftoff: &liftoff,
            ground_height: 0.0,
        };
        let cmd = swing_leg_command(&model, &ControllerConfig::default(), &gait, &input, &CentroidalAction::hold(2.0), &[3])[0];
        assert!(cmd.clamped);
        assert!(cmd.realized.z > 0.3);
    }
}
