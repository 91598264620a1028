//! Tabletop scene description: primitive objects, container region, task.
//!
//! World frame: z up, table top at `z = TABLE_HEIGHT`, the arm mount hangs
//! above the table's back edge at the origin's xy and the table extends
//! forward along +y.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::Pose;
use crate::so3::{self, Quat, Vec3};

pub const TABLE_HEIGHT: f64 = 0.0;
pub const TABLE_X: [f64; 2] = [-0.6, 0.6];
pub const TABLE_Y: [f64; 2] = [0.08, 0.8];
/// Height of the rod mount above the table top.
pub const MOUNT_HEIGHT: f64 = 1.05;

pub fn mount_pose() -> Pose {
    // d3 points down, d1 along +x
    Pose::new(Vec3::new(0.0, 0.0, TABLE_HEIGHT + MOUNT_HEIGHT), so3::exp(&Vec3::new(std::f64::consts::PI, 0.0, 0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    /// Axis along the body z axis.
    Cylinder { radius: f64, half_height: f64 },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match *self {
            Shape::Box { half_extents } => half_extents.to_vec(),
            Shape::Sphere { radius } => vec![radius],
            Shape::Cylinder { radius, half_height } => vec![radius, half_height],
        };
        if dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            Ok(())
        } else {
            Err(Error::SceneInvalid(format!("shape dimensions must be positive: {self:?}")))
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Box { half_extents } => Vec3::from(half_extents).norm(),
            Shape::Sphere { radius } => radius,
            Shape::Cylinder { radius, half_height } => radius.hypot(half_height),
        }
    }

    /// Radius of the xy footprint when standing upright.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            Shape::Box { half_extents } => half_extents[0].hypot(half_extents[1]),
            Shape::Sphere { radius } => radius,
            Shape::Cylinder { radius, .. } => radius,
        }
    }

    /// Height of the center above the support plane when standing upright.
    pub fn rest_height(&self) -> f64 {
        match *self {
            Shape::Box { half_extents } => half_extents[2],
            Shape::Sphere { radius } => radius,
            Shape::Cylinder { half_height, .. } => half_height,
        }
    }

    /// Principal moments of inertia of the solid shape.
    pub fn inertia(&self, mass: f64) -> Vec3 {
        match *self {
            Shape::Box { half_extents: [a, b, c] } => {
                Vec3::new(b * b + c * c, a * a + c * c, a * a + b * b) * (mass / 3.0)
            }
            Shape::Sphere { radius } => Vec3::repeat(0.4 * mass * radius * radius),
            Shape::Cylinder { radius, half_height } => {
                let side = mass * (3.0 * radius * radius + 4.0 * half_height * half_height) / 12.0;
                Vec3::new(side, side, 0.5 * mass * radius * radius)
            }
        }
    }

    /// Signed distance and outward unit normal at a body-frame point.
    pub fn sdf(&self, p: &Vec3) -> (f64, Vec3) {
        match *self {
            Shape::Sphere { radius } => {
                let r = p.norm();
                let n = if r > 1e-15 { p / r } else { Vec3::z() };
                (r - radius, n)
            }
            Shape::Box { half_extents } => {
                let q = p.abs() - Vec3::from(half_extents);
                let sign = p.map(|c| if c < 0.0 { -1.0 } else { 1.0 });
                if q.iter().any(|c| *c > 0.0) {
                    let o = q.map(|c| c.max(0.0)).component_mul(&sign);
                    let d = o.norm();
                    (d, o / d)
                } else {
                    let axis = q.imax();
                    let mut n = Vec3::zeros();
                    n[axis] = sign[axis];
                    (q[axis], n)
                }
            }
            Shape::Cylinder { radius, half_height } => {
                let rho = p.xy().norm();
                let radial = if rho > 1e-15 { Vec3::new(p.x / rho, p.y / rho, 0.0) } else { Vec3::x() };
                let axial = Vec3::new(0.0, 0.0, if p.z < 0.0 { -1.0 } else { 1.0 });
                let q = (rho - radius, p.z.abs() - half_height);
                if q.0 > 0.0 || q.1 > 0.0 {
                    let (a, b) = (q.0.max(0.0), q.1.max(0.0));
                    let d = a.hypot(b);
                    (d, (radial * a + axial * b) / d)
                } else if q.0 > q.1 {
                    (q.0, radial)
                } else {
                    (q.1, axial)
                }
            }
        }
    }

    /// Body-frame contact probe points (zero radius) on the surface; a
    /// sphere is represented by its center with its radius instead.
    pub fn probes(&self) -> Vec<(Vec3, f64)> {
        match *self {
            Shape::Sphere { radius } => vec![(Vec3::zeros(), radius)],
            Shape::Box { half_extents: [a, b, c] } => {
                let mut pts = Vec::with_capacity(20);
                for sx in [-1.0, 0.0, 1.0] {
                    for sy in [-1.0, 0.0, 1.0] {
                        for sz in [-1.0, 0.0, 1.0] {
                            // corners and edge midpoints: exactly one zero or none
                            let zeros = [sx, sy, sz].iter().filter(|s| **s == 0.0).count();
                            if zeros <= 1 {
                                pts.push((Vec3::new(sx * a, sy * b, sz * c), 0.0));
                            }
                        }
                    }
                }
                pts
            }
            Shape::Cylinder { radius, half_height } => {
                let mut pts = Vec::with_capacity(16);
                for z in [-half_height, half_height] {
                    for k in 0..8 {
                        let t = std::f64::consts::TAU * k as f64 / 8.0;
                        pts.push((Vec3::new(radius * t.cos(), radius * t.sin(), z), 0.0));
                    }
                }
                pts
            }
        }
    }

    /// Dense surface samples used for overlap validation.
    pub fn surface_samples(&self, per_axis: usize) -> Vec<Vec3> {
        let m = per_axis.max(2);
        let lin = |k: usize| -1.0 + 2.0 * k as f64 / (m - 1) as f64;
        let mut out = Vec::new();
        match *self {
            Shape::Box { half_extents } => {
                let h = Vec3::from(half_extents);
                for axis in 0..3 {
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    for side in [-1.0, 1.0] {
                        for i in 0..m {
                            for j in 0..m {
                                let mut p = Vec3::zeros();
                                p[axis] = side * h[axis];
                                p[u] = lin(i) * h[u];
                                p[v] = lin(j) * h[v];
                                out.push(p);
                            }
                        }
                    }
                }
            }
            Shape::Sphere { radius } => {
                for i in 0..m {
                    let polar = std::f64::consts::PI * i as f64 / (m - 1) as f64;
                    for j in 0..2 * m {
                        let az = std::f64::consts::PI * j as f64 / m as f64;
                        out.push(radius * Vec3::new(polar.sin() * az.cos(), polar.sin() * az.sin(), polar.cos()));
                    }
                }
            }
            Shape::Cylinder { radius, half_height } => {
                for i in 0..m {
                    let z = lin(i) * half_height;
                    for j in 0..2 * m {
                        let az = std::f64::consts::PI * j as f64 / m as f64;
                        out.push(Vec3::new(radius * az.cos(), radius * az.sin(), z));
                        if i == 0 || i == m - 1 {
                            for k in 0..m {
                                let r = radius * k as f64 / m as f64;
                                out.push(Vec3::new(r * az.cos(), r * az.sin(), z));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// True when two posed shapes interpenetrate by more than `tolerance`.
pub fn shapes_overlap(a: &Shape, pa: &Pose, b: &Shape, pb: &Pose, tolerance: f64) -> bool {
    if (pa.translation - pb.translation).norm() > a.bounding_radius() + b.bounding_radius() + tolerance {
        return false;
    }
    let inside = |s: &Shape, ps: &Pose, other: &Shape, po: &Pose| {
        s.surface_samples(9).iter().any(|p| {
            let world = ps.transform_point(p);
            let local = po.inverse().transform_point(&world);
            other.sdf(&local).0 < -tolerance
        })
    };
    inside(a, pa, b, pb) || inside(b, pb, a, pa) || {
        let local = pb.inverse().transform_point(&pa.translation);
        b.sdf(&local).0 < -tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: usize,
    pub shape: Shape,
    pub pose: Pose,
    pub mass: f64,
    /// Candidate end-effector poses in the object's body frame.
    pub grasp_poses: Vec<Pose>,
    pub is_obstacle: bool,
}

impl SceneObject {
    pub fn world_grasp_poses(&self) -> impl Iterator<Item = Pose> + '_ {
        self.grasp_poses.iter().map(|g| self.pose.compose(g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Coll,
    Aln,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Clean,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub task: Task,
    pub randomized: bool,
    pub rng_seed: u64,
    pub objects: Vec<SceneObject>,
    /// Deposit region for COLL: an oriented box on the table.
    pub container_pose: Pose,
    pub container_half_extents: [f64; 3],
    pub target_object_id: usize,
    pub aln_goal_pose: Option<Pose>,
    pub instruction: String,
}

impl Scene {
    pub fn object(&self, id: usize) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn target(&self) -> Result<&SceneObject> {
        self.object(self.target_object_id)
            .ok_or_else(|| Error::SceneInvalid(format!("target object {} not found", self.target_object_id)))
    }

    /// Whether a world point lies inside the container region.
    pub fn in_container(&self, p: &Vec3) -> bool {
        let local = self.container_pose.inverse().transform_point(p);
        local.iter().zip(&self.container_half_extents).all(|(c, h)| c.abs() <= *h)
    }

    /// Structural checks: ids unique, target graspable, shapes valid,
    /// objects on the table and pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let target = self.target()?;
        if target.is_obstacle {
            return Err(Error::SceneInvalid(format!("target object {} is an obstacle", target.id)));
        }
        if self.task == Task::Aln && self.aln_goal_pose.is_none() {
            return Err(Error::SceneInvalid("ALN scene needs aln_goal_pose".into()));
        }
        if !self.container_half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return Err(Error::SceneInvalid("container half extents must be positive".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            o.shape.validate()?;
            if self.objects[..i].iter().any(|p| p.id == o.id) {
                return Err(Error::SceneInvalid(format!("duplicate object id {}", o.id)));
            }
            if !(o.mass > 0.0 && o.mass.is_finite()) {
                return Err(Error::SceneInvalid(format!("object {} mass must be positive", o.id)));
            }
            if !o.is_obstacle && o.grasp_poses.is_empty() {
                return Err(Error::SceneInvalid(format!("object {} has no grasp poses", o.id)));
            }
            let p = o.pose.translation;
            if p.x < TABLE_X[0] || p.x > TABLE_X[1] || p.y < TABLE_Y[0] || p.y > TABLE_Y[1] {
                return Err(Error::SceneInvalid(format!("object {} is off the table", o.id)));
            }
            if lowest_point(&o.shape, &o.pose) < TABLE_HEIGHT - 1e-6 {
                return Err(Error::SceneInvalid(format!("object {} penetrates the table", o.id)));
            }
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if shapes_overlap(&a.shape, &a.pose, &b.shape, &b.pose, 1e-6) {
                    return Err(Error::SceneInvalid(format!("objects {} and {} overlap", a.id, b.id)));
                }
            }
        }
        Ok(())
    }
}

/// Lowest world z over the shape's surface (exact for the three primitives).
pub fn lowest_point(shape: &Shape, pose: &Pose) -> f64 {
    let r = pose.rotation.to_rotation_matrix();
    let c = pose.translation.z;
    // z row of the rotation, i.e. world z of each body axis
    let row = Vec3::new(r[(2, 0)], r[(2, 1)], r[(2, 2)]);
    match *shape {
        Shape::Sphere { radius } => c - radius,
        Shape::Box { half_extents } => c - row.abs().dot(&Vec3::from(half_extents)),
        Shape::Cylinder { radius, half_height } => {
            c - row.z.abs() * half_height - radius * (1.0 - row.z * row.z).max(0.0).sqrt()
        }
    }
}

/// Upright pose with yaw `yaw` resting on the table at `(x, y)`.
pub fn resting_pose(shape: &Shape, x: f64, y: f64, yaw: f64) -> Pose {
    Pose::new(Vec3::new(x, y, TABLE_HEIGHT + shape.rest_height()), Quat::from_axis_angle(&Vec3::z_axis(), yaw))
}
