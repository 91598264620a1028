//! Penalty contact between table, objects, the end effector and rod nodes.
//!
//! Each contact is a probe sphere (center, radius) on one body tested
//! against the signed distance of a shape on the other body, or against the
//! table plane inside the table's footprint. Normal force is a spring-damper
//! clamped at zero; friction is Coulomb regularized with `tanh(|v_t| / v_eps)`.

use serde::{Deserialize, Serialize};

use crate::body::{outer, Body, Compliance, Wrench};
use crate::scene::{Shape, TABLE_X, TABLE_Y};
use crate::so3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Normal stiffness (N/m).
    pub stiffness: f64,
    /// Fraction of critical damping for the pair's reduced mass.
    pub damping_ratio: f64,
    pub friction: f64,
    /// Friction regularization speed (m/s).
    pub slip_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 1e4, damping_ratio: 1.0, friction: 0.5, slip_velocity: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table {
    pub height: f64,
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Table {
    pub fn with_height(height: f64) -> Self {
        Self { height, x: TABLE_X, y: TABLE_Y }
    }

    fn covers(&self, p: &Vec3) -> bool {
        p.x >= self.x[0] && p.x <= self.x[1] && p.y >= self.y[0] && p.y <= self.y[1]
    }
}

/// Kinematic view of the rod for contact purposes.
#[derive(Debug, Clone, Copy)]
pub struct RodNodes<'a> {
    pub positions: &'a [Vec3],
    pub velocities: &'a [Vec3],
    pub masses: &'a [f64],
    pub radius: f64,
}

/// Object as seen by the contact model.
#[derive(Debug, Clone, Copy)]
pub struct ContactObject<'a> {
    pub shape: &'a Shape,
    pub body: &'a Body,
    pub is_obstacle: bool,
    /// Held objects move kinematically with the end effector and are skipped.
    pub held: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactResult {
    pub objects: Vec<Wrench>,
    pub eef: Wrench,
    /// Linearized normal stiffness/damping acting on the end effector.
    pub eef_compliance: Compliance,
    pub rod_nodes: Vec<Vec3>,
    /// Normal force magnitudes, for diagnostics.
    pub normal_forces: Vec<f64>,
}

/// Point-like participant of a single contact.
#[derive(Clone, Copy)]
enum Side<'a> {
    Static,
    Rigid(&'a Body),
    Node { velocity: Vec3, mass: f64 },
}

impl Side<'_> {
    fn velocity_at(&self, p: &Vec3) -> Vec3 {
        match self {
            Side::Static => Vec3::zeros(),
            Side::Rigid(b) => b.velocity_at(p),
            Side::Node { velocity, .. } => *velocity,
        }
    }

    fn inverse_mass(&self, p: &Vec3, dir: &Vec3) -> f64 {
        match self {
            Side::Static => 0.0,
            Side::Rigid(b) => b.inverse_effective_mass(p, dir),
            Side::Node { mass, .. } => 1.0 / mass,
        }
    }
}

struct Hit {
    point: Vec3,
    /// Force on side A.
    force: Vec3,
    normal: Vec3,
    stiffness: f64,
    damping: f64,
}

/// Contact of a probe sphere on `a` against a surface with outward normal
/// `n` and signed distance `dist` from the probe center, surface on `b`.
fn resolve(center: &Vec3, radius: f64, dist: f64, n: &Vec3, a: Side, b: Side, params: &ContactParams, dt: f64) -> Option<Hit> {
    let depth = radius - dist;
    if depth <= 0.0 {
        return None;
    }
    let point = center - n * radius;
    let v_rel = a.velocity_at(&point) - b.velocity_at(&point);
    let inv_m = a.inverse_mass(&point, n) + b.inverse_mass(&point, n);
    let damping = if inv_m > 0.0 { params.damping_ratio * 2.0 * (params.stiffness / inv_m).sqrt() } else { 0.0 };
    let vn = v_rel.dot(n);
    let fn_ = (params.stiffness * depth - damping * vn).max(0.0);
    let mut force = n * fn_;
    let vt = v_rel - n * vn;
    let speed = vt.norm();
    if fn_ > 0.0 && speed > 0.0 && params.friction > 0.0 {
        let t = vt / speed;
        // keep the linearized friction damping mu Fn / v_eps within m_eff / dt
        let inv_mt = a.inverse_mass(&point, &t) + b.inverse_mass(&point, &t);
        let v_eps = if inv_mt > 0.0 { params.slip_velocity.max(params.friction * fn_ * dt * inv_mt) } else { params.slip_velocity };
        force -= t * (params.friction * fn_ * (speed / v_eps).tanh());
    }
    Some(Hit { point, force, normal: *n, stiffness: params.stiffness, damping })
}

fn table_hit(center: &Vec3, radius: f64, table: &Table, a: Side, params: &ContactParams, dt: f64) -> Option<Hit> {
    if !table.covers(center) {
        return None;
    }
    resolve(center, radius, center.z - table.height, &Vec3::z(), a, Side::Static, params, dt)
}

fn shape_hit(center: &Vec3, radius: f64, shape: &Shape, body: &Body, a: Side, params: &ContactParams, dt: f64) -> Option<Hit> {
    let local = body.pose.inverse().transform_point(center);
    let (dist, n_local) = shape.sdf(&local);
    if dist >= radius {
        return None;
    }
    let n = body.pose.rotation * n_local;
    resolve(center, radius, dist, &n, a, Side::Rigid(body), params, dt)
}

fn wrench_at(body: &Body, point: &Vec3, force: Vec3) -> Wrench {
    Wrench { force, torque: (point - body.pose.translation).cross(&force) }
}

/// Computes all contact loads for one substep. `eef_radius` is the radius
/// of the end-effector sphere; `rod` enables rod-node contact with the table
/// and obstacles.
#[allow(clippy::too_many_arguments)]
pub fn contact_forces(
    objects: &[ContactObject],
    eef: &Body,
    eef_radius: f64,
    rod: Option<RodNodes>,
    table: &Table,
    params: &ContactParams,
    dt: f64,
) -> ContactResult {
    let mut out = ContactResult {
        objects: vec![Wrench::default(); objects.len()],
        rod_nodes: vec![Vec3::zeros(); rod.map_or(0, |r| r.positions.len())],
        ..Default::default()
    };
    let probes: Vec<Vec<(Vec3, f64)>> = objects
        .iter()
        .map(|o| o.shape.probes().into_iter().map(|(p, r)| (o.body.pose.transform_point(&p), r)).collect())
        .collect();

    for (i, oi) in objects.iter().enumerate() {
        if oi.held {
            continue;
        }
        let a = Side::Rigid(oi.body);
        for (p, r) in &probes[i] {
            if let Some(h) = table_hit(p, *r, table, a, params, dt) {
                out.objects[i] += wrench_at(oi.body, &h.point, h.force);
                out.normal_forces.push(h.force.dot(&h.normal));
            }
        }
        for (j, oj) in objects.iter().enumerate().skip(i + 1) {
            if oj.held {
                continue;
            }
            let reach = oi.shape.bounding_radius() + oj.shape.bounding_radius();
            if (oi.body.pose.translation - oj.body.pose.translation).norm() > reach {
                continue;
            }
            let i_sphere = matches!(oi.shape, Shape::Sphere { .. });
            let j_sphere = matches!(oj.shape, Shape::Sphere { .. });
            let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2);
            if j_sphere {
                pairs.push((j, i));
            } else if i_sphere {
                pairs.push((i, j));
            } else {
                pairs.push((i, j));
                pairs.push((j, i));
            }
            for (pa, pb) in pairs {
                let (ba, bb) = (objects[pa].body, objects[pb].body);
                for (p, r) in &probes[pa] {
                    if let Some(h) = shape_hit(p, *r, objects[pb].shape, bb, Side::Rigid(ba), params, dt) {
                        out.objects[pa] += wrench_at(ba, &h.point, h.force);
                        out.objects[pb] += wrench_at(bb, &h.point, -h.force);
                        out.normal_forces.push(h.force.dot(&h.normal));
                    }
                }
            }
        }
    }

    let eef_center = eef.pose.translation;
    let eef_hit = |h: Hit, out: &mut ContactResult| {
        out.eef += wrench_at(eef, &h.point, h.force);
        let nn = outer(&h.normal);
        out.eef_compliance.linear_stiffness += nn * h.stiffness;
        out.eef_compliance.linear_damping += nn * h.damping;
        out.normal_forces.push(h.force.dot(&h.normal));
    };
    if let Some(h) = table_hit(&eef_center, eef_radius, table, Side::Rigid(eef), params, dt) {
        eef_hit(h, &mut out);
    }
    for (i, o) in objects.iter().enumerate() {
        if o.held || (eef_center - o.body.pose.translation).norm() > eef_radius + o.shape.bounding_radius() {
            continue;
        }
        if let Some(h) = shape_hit(&eef_center, eef_radius, o.shape, o.body, Side::Rigid(eef), params, dt) {
            out.objects[i] += wrench_at(o.body, &h.point, -h.force);
            eef_hit(h, &mut out);
        }
    }

    if let Some(rod) = rod {
        for (k, x) in rod.positions.iter().enumerate() {
            let a = Side::Node { velocity: rod.velocities[k], mass: rod.masses[k] };
            if let Some(h) = table_hit(x, rod.radius, table, a, params, dt) {
                out.rod_nodes[k] += h.force;
                out.normal_forces.push(h.force.dot(&h.normal));
            }
            for (i, o) in objects.iter().enumerate() {
                if !o.is_obstacle || o.held || (x - o.body.pose.translation).norm() > rod.radius + o.shape.bounding_radius() {
                    continue;
                }
                if let Some(h) = shape_hit(x, rod.radius, o.shape, o.body, a, params, dt) {
                    out.rod_nodes[k] += h.force;
                    out.objects[i] += wrench_at(o.body, &h.point, -h.force);
                    out.normal_forces.push(h.force.dot(&h.normal));
                }
            }
        }
    }
    out
}
