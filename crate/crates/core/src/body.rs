//! Rigid bodies: objects and the end effector share this state.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::se3::Pose;
use crate::so3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub pose: Pose,
    pub linear_velocity: Vec3,
    /// World frame.
    pub angular_velocity: Vec3,
    pub mass: f64,
    /// Principal moments about the body axes.
    pub inertia: Vec3,
}

/// Force and torque about the body center, world frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl std::ops::AddAssign for Wrench {
    fn add_assign(&mut self, o: Wrench) {
        self.force += o.force;
        self.torque += o.torque;
    }
}

impl std::ops::Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench { force: -self.force, torque: -self.torque }
    }
}

/// Linearized stiffness and damping of the loads on a body, used to step
/// stiff springs on light bodies without resolving their natural period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compliance {
    pub linear_stiffness: Matrix3<f64>,
    pub linear_damping: Matrix3<f64>,
    pub angular_stiffness: Matrix3<f64>,
    pub angular_damping: Matrix3<f64>,
}

impl Default for Compliance {
    fn default() -> Self {
        Self {
            linear_stiffness: Matrix3::zeros(),
            linear_damping: Matrix3::zeros(),
            angular_stiffness: Matrix3::zeros(),
            angular_damping: Matrix3::zeros(),
        }
    }
}

impl Body {
    pub fn at_rest(pose: Pose, mass: f64, inertia: Vec3) -> Self {
        Self { pose, linear_velocity: Vec3::zeros(), angular_velocity: Vec3::zeros(), mass, inertia }
    }

    pub fn velocity_at(&self, p: &Vec3) -> Vec3 {
        self.linear_velocity + self.angular_velocity.cross(&(p - self.pose.translation))
    }

    pub fn inertia_world(&self) -> Matrix3<f64> {
        let r = self.pose.rotation.to_rotation_matrix().into_inner();
        r * Matrix3::from_diagonal(&self.inertia) * r.transpose()
    }

    pub fn inverse_inertia_world(&self) -> Matrix3<f64> {
        let r = self.pose.rotation.to_rotation_matrix().into_inner();
        r * Matrix3::from_diagonal(&self.inertia.map(|i| 1.0 / i)) * r.transpose()
    }

    /// Inverse of the effective mass seen at world point `p` along unit `dir`.
    pub fn inverse_effective_mass(&self, p: &Vec3, dir: &Vec3) -> f64 {
        let arm = (p - self.pose.translation).cross(dir);
        1.0 / self.mass + arm.dot(&(self.inverse_inertia_world() * arm))
    }

    /// Semi-implicit Euler: velocities from the loads, then pose from the new velocities.
    pub fn step(&mut self, load: &Wrench, gravity: &Vec3, dt: f64) -> Result<()> {
        self.step_implicit(load, &Compliance::default(), gravity, dt)
    }

    /// Linearly implicit Euler:
    /// `(M + dt C + dt^2 K) v' = M v + dt F + dt C v`, and likewise for
    /// rotation. With `C = K = 0` this is plain semi-implicit Euler.
    pub fn step_implicit(&mut self, load: &Wrench, lin: &Compliance, gravity: &Vec3, dt: f64) -> Result<()> {
        let force = load.force + gravity * self.mass;
        let m = Matrix3::identity() * self.mass;
        let lhs = m + lin.linear_damping * dt + lin.linear_stiffness * (dt * dt);
        let rhs = m * self.linear_velocity + force * dt + lin.linear_damping * self.linear_velocity * dt;
        self.linear_velocity = solve(lhs, rhs)?;

        let inertia = self.inertia_world();
        let gyro = self.angular_velocity.cross(&(inertia * self.angular_velocity));
        let torque = load.torque - gyro;
        let lhs = inertia + lin.angular_damping * dt + lin.angular_stiffness * (dt * dt);
        let rhs = inertia * self.angular_velocity + torque * dt + lin.angular_damping * self.angular_velocity * dt;
        self.angular_velocity = solve(lhs, rhs)?;

        self.pose.translation += self.linear_velocity * dt;
        self.pose.rotation = so3::exp(&(self.angular_velocity * dt)) * self.pose.rotation;
        self.pose.rotation.renormalize_fast();
        self.check()
    }

    pub fn check(&self) -> Result<()> {
        let finite = self.pose.translation.iter().chain(self.linear_velocity.iter()).chain(self.angular_velocity.iter()).all(|c| c.is_finite());
        if !finite || self.linear_velocity.norm() > crate::rod::MAX_SPEED {
            return Err(Error::NumericBlowup(format!("rigid body speed {:.3e} m/s", self.linear_velocity.norm())));
        }
        Ok(())
    }
}

fn solve(lhs: Matrix3<f64>, rhs: Vec3) -> Result<Vec3> {
    lhs.lu().solve(&rhs).ok_or_else(|| Error::NumericBlowup("singular rigid-body system".into()))
}

/// Outer product `n n^T`.
pub fn outer(n: &Vec3) -> Matrix3<f64> {
    n * n.transpose()
}
