//! Static robot parameters.
//!
//! Leg order is front-right, front-left, rear-right, rear-left. The base frame
//! has x forward, y left and z up. All defaults describe a Go1-sized robot and
//! can be overridden from the run config.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LEGS: usize = 4;
pub const LEG_NAMES: [&str; NUM_LEGS] = ["FR", "FL", "RR", "RL"];
pub const STANDARD_GRAVITY: f64 = 9.81;

/// +1 for left legs, -1 for right legs.
pub fn leg_side(leg: usize) -> f64 {
    if leg.is_multiple_of(2) {
        -1.0
    } else {
        1.0
    }
}

pub fn is_front(leg: usize) -> bool {
    leg < 2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkLengths {
    /// Lateral offset from the abduction axis to the leg plane (m).
    pub hip_abduction: f64,
    pub thigh: f64,
    pub calf: f64,
}

/// Which of the two sagittal IK solutions is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeBranch {
    /// Knee angle <= 0, knee points backward.
    Backward,
    /// Knee angle >= 0, knee points forward.
    Forward,
}

impl KneeBranch {
    pub fn sign(self) -> f64 {
        match self {
            KneeBranch::Backward => -1.0,
            KneeBranch::Forward => 1.0,
        }
    }
}

/// Mechanical joint ranges as `[min, max]` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub abduction: [f64; 2],
    pub hip: [f64; 2],
    pub knee: [f64; 2],
}

impl JointLimits {
    pub fn as_array(&self) -> [[f64; 2]; 3] {
        [self.abduction, self.hip, self.knee]
    }

    pub fn contains(&self, q: &Vector3<f64>) -> bool {
        self.as_array()
            .iter()
            .zip(q.iter())
            .all(|(lim, &v)| v >= lim[0] && v <= lim[1])
    }

    pub fn clamp(&self, q: &Vector3<f64>) -> Vector3<f64> {
        let lims = self.as_array();
        Vector3::from_fn(|i, _| q[i].clamp(lims[i][0], lims[i][1]))
    }

    /// The fully folded knee limit for the given branch.
    pub fn knee_fold_limit(&self, branch: KneeBranch) -> f64 {
        match branch {
            KneeBranch::Backward => self.knee[0],
            KneeBranch::Forward => self.knee[1],
        }
    }
}

/// Physical parameter set shared by every module. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotModel {
    /// Base mass without payload (kg).
    pub mass: f64,
    /// Base inertia in the body frame (kg m^2), row major.
    pub base_inertia: [[f64; 3]; 3],
    /// Abduction joint position of each leg in the base frame (m).
    pub hip_offsets: [[f64; 3]; NUM_LEGS],
    pub link_lengths: LinkLengths,
    pub friction_mu: f64,
    /// Per-leg normal force bounds (N).
    pub f_min: f64,
    pub f_max: f64,
    /// Symmetric per-joint torque bound (N m).
    pub torque_limit: f64,
    /// Extra mass rigidly attached at the CoM (kg).
    pub payload_mass: f64,
    pub knee_branch: KneeBranch,
    pub joint_limits: JointLimits,
    /// When set, validation requires left/right and front/rear symmetric hips.
    pub symmetric: bool,
    /// Magnitude of gravitational acceleration (m/s^2).
    pub gravity: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self::go1()
    }
}

impl RobotModel {
    pub fn go1() -> Self {
        let (hx, hy) = (0.1881, 0.04675);
        RobotModel {
            mass: 12.0,
            base_inertia: [[0.17, 0.0, 0.0], [0.0, 0.33, 0.0], [0.0, 0.0, 0.18]],
            hip_offsets: [
                [hx, -hy, 0.0],
                [hx, hy, 0.0],
                [-hx, -hy, 0.0],
                [-hx, hy, 0.0],
            ],
            link_lengths: LinkLengths {
                hip_abduction: 0.08,
                thigh: 0.213,
                calf: 0.213,
            },
            friction_mu: 0.6,
            f_min: 0.0,
            f_max: 120.0,
            torque_limit: 23.7,
            payload_mass: 0.0,
            knee_branch: KneeBranch::Backward,
            joint_limits: JointLimits {
                abduction: [-0.863, 0.863],
                hip: [-0.686, 4.501],
                knee: [-2.818, 0.0],
            },
            symmetric: true,
            gravity: STANDARD_GRAVITY,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass + self.payload_mass
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        let i = &self.base_inertia;
        Matrix3::new(
            i[0][0], i[0][1], i[0][2], i[1][0], i[1][1], i[1][2], i[2][0], i[2][1], i[2][2],
        )
    }

    pub fn hip_offset(&self, leg: usize) -> Vector3<f64> {
        Vector3::from(self.hip_offsets[leg])
    }

    /// Point of the leg plane directly level with the hip: the hip offset
    /// shifted laterally by the abduction link. A leg with zero joint angles
    /// hangs straight below this point.
    pub fn shoulder_offset(&self, leg: usize) -> Vector3<f64> {
        self.hip_offset(leg) + Vector3::new(0.0, leg_side(leg) * self.link_lengths.hip_abduction, 0.0)
    }

    /// Maximum reach of the thigh/calf chain.
    pub fn max_leg_length(&self) -> f64 {
        self.link_lengths.thigh + self.link_lengths.calf
    }

    /// Joint angles of the nominal standing pose (knee bent 2 * `hip`).
    pub fn nominal_joint_angles(&self) -> Vector3<f64> {
        let s = -self.knee_branch.sign();
        Vector3::new(0.0, s * 0.9, -s * 1.8)
    }

    /// Same model with `payload` kg added at the CoM. Inertia is unchanged.
    pub fn with_payload(&self, payload: f64) -> Self {
        let mut m = self.clone();
        m.payload_mass += payload;
        m
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, path: &str, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("robot.{path}"), msg))
            }
        };
        check(self.mass.is_finite() && self.mass > 0.0, "mass", "must be positive")?;
        check(
            self.payload_mass.is_finite() && self.payload_mass >= 0.0,
            "payload_mass",
            "must be non-negative",
        )?;
        let inertia = self.inertia();
        check(
            (inertia - inertia.transpose()).abs().max() <= 1e-12,
            "base_inertia",
            "must be symmetric",
        )?;
        check(
            inertia.cholesky().is_some(),
            "base_inertia",
            "must be positive definite",
        )?;
        check(self.friction_mu >= 0.0, "friction_mu", "must be non-negative")?;
        check(self.f_min >= 0.0, "f_min", "must be non-negative")?;
        check(self.f_min < self.f_max, "f_max", "must exceed f_min")?;
        check(self.torque_limit > 0.0, "torque_limit", "must be positive")?;
        check(self.gravity > 0.0, "gravity", "must be positive")?;
        let l = &self.link_lengths;
        check(
            l.thigh > 0.0 && l.calf > 0.0 && l.hip_abduction >= 0.0,
            "link_lengths",
            "thigh and calf must be positive, abduction non-negative",
        )?;
        for (name, lim) in [
            ("abduction", self.joint_limits.abduction),
            ("hip", self.joint_limits.hip),
            ("knee", self.joint_limits.knee),
        ] {
            check(
                lim[0] < lim[1],
                &format!("joint_limits.{name}"),
                "min must be below max",
            )?;
        }
        if self.symmetric {
            let h = &self.hip_offsets;
            let sym = |a: usize, b: usize, flip_x: bool, flip_y: bool| {
                let sx = if flip_x { -1.0 } else { 1.0 };
                let sy = if flip_y { -1.0 } else { 1.0 };
                (h[a][0] - sx * h[b][0]).abs() < 1e-12
                    && (h[a][1] - sy * h[b][1]).abs() < 1e-12
                    && (h[a][2] - h[b][2]).abs() < 1e-12
            };
            check(
                sym(0, 1, false, true) && sym(2, 3, false, true) && sym(0, 2, true, false),
                "hip_offsets",
                "must be left/right and front/rear symmetric when `symmetric` is set",
            )?;
        }
        Ok(())
    }
}

/// Apply an added payload to a model (see [`RobotModel::with_payload`]).
pub fn apply_payload(model: &RobotModel, payload: f64) -> Result<RobotModel> {
    if !(payload.is_finite() && payload >= 0.0) {
        return Err(Error::config("payload", "must be a non-negative number"));
    }
    Ok(model.with_payload(payload))
}

/// Per-leg joint angles and velocities, ordered (abduction, hip, knee).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    pub angles: [Vector3<f64>; NUM_LEGS],
    pub velocities: [Vector3<f64>; NUM_LEGS],
}
