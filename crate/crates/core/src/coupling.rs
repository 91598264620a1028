//! End effector, its zero-rest-length spring link to the rod tip, and grasping.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::body::{Body, Compliance, Wrench};
use crate::error::{Error, Result};
use crate::scene::SceneObject;
use crate::se3::{self, Pose, DEFAULT_ALPHA};
use crate::so3::{self, Vec3};

pub const DEFAULT_EEF_MASS: f64 = 1e-5;
pub const DEFAULT_EEF_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Translational stiffness (N/m).
    pub k_f: f64,
    /// Rotational stiffness (N m/rad).
    pub k_m: f64,
    pub c_f: f64,
    pub c_m: f64,
}

impl CouplingParams {
    /// Stiffnesses with critical damping for the given end-effector body.
    pub fn critical(k_f: f64, k_m: f64, mass: f64, inertia: f64) -> Self {
        Self { k_f, k_m, c_f: 2.0 * (k_f * mass).sqrt(), c_m: 2.0 * (k_m * inertia).sqrt() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_f > 0.0 && self.k_m > 0.0 && self.c_f >= 0.0 && self.c_m >= 0.0)
            || ![self.k_f, self.k_m, self.c_f, self.c_m].iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidConfig(format!("coupling needs k > 0 and c >= 0, got {self:?}")));
        }
        Ok(())
    }

    pub fn compliance(&self) -> Compliance {
        let id = Matrix3::identity();
        Compliance {
            linear_stiffness: id * self.k_f,
            linear_damping: id * self.c_f,
            angular_stiffness: id * self.k_m,
            angular_damping: id * self.c_m,
        }
    }
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self::critical(0.1, 10.0, DEFAULT_EEF_MASS, sphere_inertia(DEFAULT_EEF_MASS, DEFAULT_EEF_RADIUS))
    }
}

fn sphere_inertia(mass: f64, radius: f64) -> f64 {
    0.4 * mass * radius * radius
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndEffector {
    pub body: Body,
    pub radius: f64,
    pub gripper_open: bool,
    /// Id of the held object, if any.
    pub held_object: Option<usize>,
    /// Object pose in the end-effector frame while held.
    pub held_offset: Option<Pose>,
}

impl EndEffector {
    pub fn new(pose: Pose, mass: f64, radius: f64) -> Self {
        Self {
            body: Body::at_rest(pose, mass, Vec3::repeat(sphere_inertia(mass, radius))),
            radius,
            gripper_open: true,
            held_object: None,
            held_offset: None,
        }
    }

    pub fn pose(&self) -> Pose {
        self.body.pose
    }
}

/// Spring-damper wrench on the end effector from the rod tip. The rod
/// receives exactly the negation. `tip_velocity` is (linear, world angular).
pub fn coupling_wrench(tip: &Pose, tip_velocity: (Vec3, Vec3), eef: &Body, p: &CouplingParams) -> Wrench {
    let dx = eef.pose.translation - tip.translation;
    let dtheta = if eef.pose.rotation == tip.rotation {
        Vec3::zeros()
    } else {
        so3::log(&(eef.pose.rotation * tip.rotation.inverse()))
    };
    let dv = eef.linear_velocity - tip_velocity.0;
    let dw = eef.angular_velocity - tip_velocity.1;
    Wrench { force: -dx * p.k_f - dv * p.c_f, torque: -dtheta * p.k_m - dw * p.c_m }
}

/// Advances the end effector one substep. `compliance` carries the
/// linearized stiffness/damping of every load in `wrench` (coupling plus
/// contact) so that the light body stays stable at the rod timestep.
pub fn eef_step(eef: &mut EndEffector, wrench: &Wrench, compliance: &Compliance, gravity: &Vec3, dt: f64) -> Result<()> {
    eef.body.step_implicit(wrench, compliance, gravity, dt)
}

/// Applies a gripper command. Closing attaches the nearest graspable object
/// whose closest annotated grasp pose is within the success tolerances;
/// opening releases the held object with the end effector's velocity.
/// Returns the id of a newly attached object.
pub fn grasp_update(eef: &mut EndEffector, objects: &[SceneObject], bodies: &mut [Body], close: bool) -> Option<usize> {
    if !close {
        eef.gripper_open = true;
        if let (Some(id), Some(_)) = (eef.held_object.take(), eef.held_offset.take()) {
            if let Some(k) = objects.iter().position(|o| o.id == id) {
                let b = &mut bodies[k];
                b.linear_velocity = eef.body.velocity_at(&b.pose.translation);
                b.angular_velocity = eef.body.angular_velocity;
            }
        }
        return None;
    }
    if !eef.gripper_open {
        return None;
    }
    eef.gripper_open = false;
    let here = eef.pose();
    let mut order: Vec<usize> = (0..objects.len()).filter(|&k| !objects[k].is_obstacle).collect();
    order.sort_by(|&a, &b| {
        let da = (bodies[a].pose.translation - here.translation).norm();
        let db = (bodies[b].pose.translation - here.translation).norm();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    for k in order {
        let obj = &objects[k];
        let nearest = obj
            .grasp_poses
            .iter()
            .map(|g| se3::pose_log(&here, &bodies[k].pose.compose(g), DEFAULT_ALPHA))
            .min_by(|a, b| a.d.total_cmp(&b.d));
        if nearest.is_some_and(|diff| se3::success(&diff)) {
            eef.held_object = Some(obj.id);
            eef.held_offset = Some(here.inverse().compose(&bodies[k].pose));
            return Some(obj.id);
        }
    }
    None
}
