//! Centroidal state and the linear, time-varying dynamics map
//! `[w_dot; p_ddot] = A f + g` of a massless-leg rigid base.
//!
//! Accelerations and contact forces live in the base frame. Rows are ordered
//! angular first, then linear, everywhere in this module; the PD controller
//! converts from its pose-ordered `[p, theta]` vectors at the boundary.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};

use crate::model::{RobotModel, NUM_LEGS};

/// Largest admissible |pitch|; the Z-Y-X rate map is singular at pi/2.
pub const PITCH_GUARD: f64 = std::f64::consts::FRAC_PI_2 - 0.17;

/// Base pose, velocity and foot placement.
///
/// Orientation is Z-Y-X Euler `(roll, pitch, yaw)`. Both velocities are
/// expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidalState {
    pub position: Vector3<f64>,
    pub orientation: Vector3<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub foot_positions_world: [Vector3<f64>; NUM_LEGS],
    pub contact_flags: [bool; NUM_LEGS],
}

impl Default for CentroidalState {
    fn default() -> Self {
        CentroidalState {
            position: Vector3::zeros(),
            orientation: Vector3::zeros(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            foot_positions_world: [Vector3::zeros(); NUM_LEGS],
            contact_flags: [false; NUM_LEGS],
        }
    }
}

impl CentroidalState {
    /// Body-to-world rotation.
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_zyx(&self.orientation)
    }

    /// Foot position relative to the base, in the base frame.
    pub fn foot_in_base(&self, leg: usize) -> Vector3<f64> {
        self.rotation().transpose() * (self.foot_positions_world[leg] - self.position)
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.z
    }

    /// Projection of the body z axis on the world z axis.
    pub fn upright(&self) -> f64 {
        self.orientation.x.cos() * self.orientation.y.cos()
    }
}

/// `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rotation_zyx(rpy: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = rpy.x.sin_cos();
    let (sp, cp) = rpy.y.sin_cos();
    let (sy, cy) = rpy.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

pub fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Maps body angular velocity to Z-Y-X Euler angle rates.
pub fn euler_rate_map(rpy: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = rpy.x.sin_cos();
    let cp = rpy.y.cos();
    let tp = rpy.y.tan();
    Matrix3::new(
        1.0,
        sr * tp,
        cr * tp,
        0.0,
        cr,
        -sr,
        0.0,
        sr / cp,
        cr / cp,
    )
}

/// `[a]x b = a x b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Dynamics restricted to the stance legs.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidalDynamics {
    /// 6 x 3k map from stacked stance forces to `[w_dot; p_ddot]`.
    pub a: DMatrix<f64>,
    /// `[0; gravity in base frame]`.
    pub g: Vector6<f64>,
    /// Leg index of each 3-column block of `a`.
    pub legs: Vec<usize>,
}

impl CentroidalDynamics {
    pub fn num_stance(&self) -> usize {
        self.legs.len()
    }

    /// `A f + g`.
    pub fn acceleration(&self, forces: &DVector<f64>) -> Vector6<f64> {
        let mut acc = self.g;
        if !self.legs.is_empty() {
            acc += &self.a * forces;
        }
        acc
    }
}

/// Build `A` and `g` from base-frame foot vectors `r_i`, keeping only legs
/// with `stance_mask[i]` set.
pub fn build_from_base_feet(
    model: &RobotModel,
    rotation: &Matrix3<f64>,
    feet_base: &[Vector3<f64>; NUM_LEGS],
    stance_mask: &[bool; NUM_LEGS],
) -> CentroidalDynamics {
    let legs: Vec<usize> = (0..NUM_LEGS).filter(|&i| stance_mask[i]).collect();
    let inertia_inv = model
        .inertia()
        .try_inverse()
        .expect("validated inertia is invertible");
    let inv_mass = 1.0 / model.total_mass();
    let mut a = DMatrix::zeros(6, 3 * legs.len());
    for (col, &leg) in legs.iter().enumerate() {
        let top = inertia_inv * skew(&feet_base[leg]);
        a.fixed_view_mut::<3, 3>(0, 3 * col).copy_from(&top);
        a.fixed_view_mut::<3, 3>(3, 3 * col)
            .copy_from(&(Matrix3::identity() * inv_mass));
    }
    let gravity_base = rotation.transpose() * Vector3::new(0.0, 0.0, -model.gravity);
    let mut g = Vector6::zeros();
    g.fixed_rows_mut::<3>(3).copy_from(&gravity_base);
    CentroidalDynamics { a, g, legs }
}

/// Centroidal dynamics at `state` for the legs selected by `stance_mask`.
pub fn build_centroidal_dynamics(
    model: &RobotModel,
    state: &CentroidalState,
    stance_mask: &[bool; NUM_LEGS],
) -> CentroidalDynamics {
    let feet: [Vector3<f64>; NUM_LEGS] = std::array::from_fn(|i| state.foot_in_base(i));
    build_from_base_feet(model, &state.rotation(), &feet, stance_mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model_with_inertia() -> RobotModel {
        let mut m = RobotModel::go1();
        m.base_inertia = [[0.17, 0.0, 0.0], [0.0, 0.33, 0.0], [0.0, 0.0, 0.18]];
        m.mass = 12.0;
        m
    }

    #[test]
    fn single_foot_blocks() {
        let m = model_with_inertia();
        let mut feet = [Vector3::zeros(); 4];
        feet[0] = Vector3::new(0.0, 0.0, -0.3);
        let dyn_ = build_from_base_feet(&m, &Matrix3::identity(), &feet, &[true, false, false, false]);
        assert_eq!(dyn_.a.shape(), (6, 3));
        let expected_top = Matrix3::from_diagonal(&Vector3::new(1.0 / 0.17, 1.0 / 0.33, 1.0 / 0.18))
            * Matrix3::new(0.0, 0.3, 0.0, -0.3, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(
            dyn_.a.fixed_view::<3, 3>(0, 0).clone_owned(),
            expected_top,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            dyn_.a.fixed_view::<3, 3>(3, 0).clone_owned(),
            Matrix3::identity() / 12.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn no_stance_is_ballistic() {
        let m = RobotModel::go1();
        let dyn_ = build_centroidal_dynamics(&m, &CentroidalState::default(), &[false; 4]);
        assert_eq!(dyn_.a.shape(), (6, 0));
        assert_eq!(
            dyn_.g,
            Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, -9.81)
        );
        assert_eq!(dyn_.acceleration(&DVector::zeros(0)), dyn_.g);
    }

    #[test]
    fn gravity_follows_full_rotation() {
        let m = RobotModel::go1();
        for (r, p, y) in [(0.3, -0.5, 1.0), (-1.0, 0.9, -2.0), (0.0, 1.2, 3.0)] {
            let state = CentroidalState {
                orientation: Vector3::new(r, p, y),
                ..Default::default()
            };
            let dyn_ = build_centroidal_dynamics(&m, &state, &[false; 4]);
            // Rotating the base-frame gravity back must give world gravity.
            let back = state.rotation() * dyn_.g.fixed_rows::<3>(3);
            assert_abs_diff_eq!(back, Vector3::new(0.0, 0.0, -9.81), epsilon = 1e-12);
            // Independent check through axis-angle composition.
            let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), y)
                * nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), p)
                * nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), r);
            assert_abs_diff_eq!(*rot.matrix(), state.rotation(), epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetric_stance_has_no_net_torque_from_vertical_forces() {
        let m = RobotModel::go1();
        let feet: [Vector3<f64>; 4] =
            std::array::from_fn(|i| m.shoulder_offset(i) + Vector3::new(0.0, 0.0, -0.27));
        let dyn_ = build_from_base_feet(&m, &Matrix3::identity(), &feet, &[true; 4]);
        let f = DVector::from_iterator(12, (0..12).map(|i| if i % 3 == 2 { 30.0 } else { 0.0 }));
        let acc = dyn_.acceleration(&f);
        assert_abs_diff_eq!(acc.fixed_rows::<3>(0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn euler_rate_map_inverts_body_rate() {
        // Finite-difference the rotation along Euler rates and recover the
        // body angular velocity.
        let rpy = Vector3::new(0.2, -0.4, 0.7);
        let rates = Vector3::new(0.3, -1.1, 0.5);
        let h = 1e-7;
        let r0 = rotation_zyx(&(rpy - rates * h));
        let r1 = rotation_zyx(&(rpy + rates * h));
        let rdot = (r1 - r0) / (2.0 * h);
        let w_hat = rotation_zyx(&rpy).transpose() * rdot;
        let omega_body = Vector3::new(w_hat[(2, 1)], w_hat[(0, 2)], w_hat[(1, 0)]);
        assert_abs_diff_eq!(euler_rate_map(&rpy) * omega_body, rates, epsilon = 1e-6);
    }

    #[test]
    fn payload_scales_linear_blocks() {
        let m = RobotModel::go1();
        let heavy = m.with_payload(4.0);
        let feet = [Vector3::new(0.0, 0.0, -0.3); 4];
        let a0 = build_from_base_feet(&m, &Matrix3::identity(), &feet, &[true; 4]);
        let a1 = build_from_base_feet(&heavy, &Matrix3::identity(), &feet, &[true; 4]);
        assert_abs_diff_eq!(a1.a[(5, 2)], a0.a[(5, 2)] * 12.0 / 16.0, epsilon = 1e-15);
        assert_eq!(a0.g, a1.g);
    }
}
