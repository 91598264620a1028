//! Scene generation and the rule-based waypoint planner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::DEFAULT_EEF_RADIUS;
use crate::error::{Error, Result};
use crate::scene::{mount_pose, resting_pose, Difficulty, Scene, SceneObject, Shape, Task, TABLE_HEIGHT, TABLE_X, TABLE_Y};
use crate::se3::Pose;
use crate::so3::{self, Quat, Vec3};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Axis-aligned table region in which object centers are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Default for Workspace {
    fn default() -> Self {
        Self { x: [-0.22, 0.22], y: [0.1, 0.36] }
    }
}

impl Workspace {
    /// Region grown by `margin` on every side, clipped to the table.
    pub fn expanded(&self, margin: f64) -> Self {
        Self {
            x: [(self.x[0] - margin).max(TABLE_X[0]), (self.x[1] + margin).min(TABLE_X[1])],
            y: [(self.y[0] - margin).max(TABLE_Y[0]), (self.y[1] + margin).min(TABLE_Y[1])],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x[0] <= self.x[1]
            && self.y[0] <= self.y[1]
            && self.x[0] >= TABLE_X[0]
            && self.x[1] <= TABLE_X[1]
            && self.y[0] >= TABLE_Y[0]
            && self.y[1] <= TABLE_Y[1];
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("workspace {self:?} must be a non-empty region of the table")))
        }
    }
}

pub const CONTAINER_HALF_EXTENTS: [f64; 3] = [0.06, 0.06, 0.06];
/// Minimum footprint gap between sampled items.
const PLACEMENT_GAP: f64 = 0.02;
pub const OBSTACLE_MARGIN: f64 = 0.15;

/// Planner constants. Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub rest_length: f64,
    pub eef_radius: f64,
    pub approach_offset: f64,
    pub lift_height: f64,
    pub clearance: f64,
    pub max_spacing: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            rest_length: 1.0,
            eef_radius: DEFAULT_EEF_RADIUS,
            approach_offset: 0.1,
            lift_height: 0.15,
            clearance: 0.1,
            max_spacing: 0.4,
        }
    }
}

impl PlannerConfig {
    pub fn reach_limit(&self) -> f64 {
        1.05 * self.rest_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Approach,
    Grasp,
    Lift,
    Transfer,
    Place,
    Release,
    Retract,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Grasp => "grasp",
            Phase::Lift => "lift",
            Phase::Transfer => "transfer",
            Phase::Place => "place",
            Phase::Release => "release",
            Phase::Retract => "retract",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub pose: Pose,
    /// Gripper state once this waypoint is reached: `true` is closed.
    pub gripper_closed: bool,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub waypoints: Vec<Waypoint>,
    /// Index into the target's grasp annotations used by the plan.
    pub grasp_index: usize,
}

impl WaypointPlan {
    /// Number of open-to-closed and closed-to-open gripper transitions.
    pub fn transitions(&self) -> (usize, usize) {
        let mut closes = 0;
        let mut opens = 0;
        let mut closed = false;
        for w in &self.waypoints {
            match (closed, w.gripper_closed) {
                (false, true) => closes += 1,
                (true, false) => opens += 1,
                _ => {}
            }
            closed = w.gripper_closed;
        }
        (closes, opens)
    }
}

/// Planar two-section constant-curvature shape reaching a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcShape {
    pub curvatures: [f64; 2],
    /// Tip tangent angle from the mount axis, toward the target azimuth.
    pub tip_angle: f64,
}

fn section(phi: f64, kappa: f64, s: f64) -> (f64, f64, f64) {
    let end = phi + kappa * s;
    if (kappa * s).abs() < 1e-9 {
        return (s * phi.sin(), s * phi.cos(), end);
    }
    ((phi.cos() - end.cos()) / kappa, (end.sin() - phi.sin()) / kappa, end)
}

fn arc_tip(k: [f64; 2], length: f64) -> (f64, f64, f64) {
    let half = 0.5 * length;
    let (h1, v1, p1) = section(0.0, k[0], half);
    let (h2, v2, p2) = section(p1, k[1], half);
    (h1 + h2, v1 + v2, p2)
}

/// Solves for the lowest-bending two-section arc of total `length` whose
/// tip sits at horizontal offset `h` and depth `v` below the mount.
pub fn solve_arc(h: f64, v: f64, length: f64) -> Option<ArcShape> {
    let mut best: Option<(f64, [f64; 2])> = None;
    for start in [[0.5, 0.5], [1.5, -1.0], [-1.0, 2.0], [3.0, -2.0], [-2.0, 4.0]] {
        let mut k = start;
        for _ in 0..60 {
            let (fh, fv, _) = arc_tip(k, length);
            let r = [fh - h, fv - v];
            if r[0].hypot(r[1]) < 1e-12 {
                break;
            }
            let eps = 1e-7;
            let mut jac = [[0.0; 2]; 2];
            for c in 0..2 {
                let mut kp = k;
                kp[c] += eps;
                let (ph, pv, _) = arc_tip(kp, length);
                jac[0][c] = (ph - fh) / eps;
                jac[1][c] = (pv - fv) / eps;
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det.abs() < 1e-14 {
                break;
            }
            let dk0 = (jac[1][1] * r[0] - jac[0][1] * r[1]) / det;
            let dk1 = (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det;
            let scale = (1.0 / dk0.hypot(dk1)).min(1.0);
            k = [k[0] - scale * dk0, k[1] - scale * dk1];
        }
        let (fh, fv, _) = arc_tip(k, length);
        if (fh - h).hypot(fv - v) < 1e-9 {
            let energy = k[0] * k[0] + k[1] * k[1];
            if best.is_none_or(|(e, _)| energy < e) {
                best = Some((energy, k));
            }
        }
    }
    best.map(|(_, k)| ArcShape { curvatures: k, tip_angle: arc_tip(k, length).2 })
}

/// Tip orientation of the relaxed arm reaching world point `p`, from the
/// two-section arc model. `None` when no arc reaches it.
pub fn natural_orientation(p: &Vec3, length: f64) -> Option<Quat> {
    let mount = mount_pose();
    let rel = p - mount.translation;
    let h = rel.x.hypot(rel.y);
    let v = -rel.z;
    let shape = solve_arc(h, v, length)?;
    let u = if h > 1e-12 { Vec3::new(rel.x / h, rel.y / h, 0.0) } else { Vec3::y() };
    let axis = Vec3::new(0.0, 0.0, -1.0).cross(&u);
    Some(so3::exp(&(axis * shape.tip_angle)) * mount.rotation)
}

/// Procedural grasp annotations in the object frame: top grasps for boxes
/// and cylinders, center grasps for spheres. The end-effector tool axis
/// (body z) points along the approach direction into the object; the
/// end-effector sphere touches the surface.
pub fn grasp_annotations(shape: &Shape, eef_radius: f64) -> Vec<Pose> {
    let tilts = [0.0, std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_3];
    let rolls = 4;
    let azimuths = 8;
    let mut out = Vec::new();
    for (ti, &tilt) in tilts.iter().enumerate() {
        let n_az = if ti == 0 { 1 } else { azimuths };
        for a in 0..n_az {
            let az = std::f64::consts::TAU * a as f64 / azimuths as f64;
            for r in 0..rolls {
                let roll = std::f64::consts::TAU * r as f64 / rolls as f64;
                let rot = Quat::from_axis_angle(&Vec3::z_axis(), az)
                    * Quat::from_axis_angle(&Vec3::y_axis(), -tilt)
                    * Quat::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)
                    * Quat::from_axis_angle(&Vec3::z_axis(), roll);
                let approach = rot * Vec3::z();
                let contact = match *shape {
                    Shape::Sphere { radius } => -approach * radius,
                    Shape::Box { half_extents } => Vec3::new(0.0, 0.0, half_extents[2]),
                    Shape::Cylinder { half_height, .. } => Vec3::new(0.0, 0.0, half_height),
                };
                out.push(Pose::new(contact - approach * eef_radius, rot));
            }
        }
    }
    out
}

fn sample_shape(rng: &mut ChaCha8Rng, obstacle: bool) -> Shape {
    let tall = if obstacle { 2.0 } else { 1.0 };
    match rng.random_range(0..3) {
        0 => Shape::Box {
            half_extents: [
                rng.random_range(0.02..0.035),
                rng.random_range(0.02..0.035),
                tall * rng.random_range(0.02..0.035),
            ],
        },
        1 => Shape::Cylinder { radius: rng.random_range(0.02..0.03), half_height: tall * rng.random_range(0.02..0.035) },
        _ => Shape::Sphere { radius: rng.random_range(0.025..0.035) },
    }
}

struct Footprint {
    x: f64,
    y: f64,
    r: f64,
}

fn place(
    rng: &mut ChaCha8Rng,
    ws: &Workspace,
    radius: f64,
    taken: &[Footprint],
    object: usize,
) -> Result<(f64, f64)> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let x = rng.random_range(ws.x[0]..=ws.x[1]);
        let y = rng.random_range(ws.y[0]..=ws.y[1]);
        let inside = x - radius >= ws.x[0] && x + radius <= ws.x[1] && y - radius >= ws.y[0] && y + radius <= ws.y[1];
        if inside && taken.iter().all(|f| (f.x - x).hypot(f.y - y) >= f.r + radius + PLACEMENT_GAP) {
            return Ok((x, y));
        }
    }
    Err(Error::PlacementFailed { object, attempts: MAX_PLACEMENT_ATTEMPTS })
}

/// Random scene on the default workspace.
pub fn generate_scene(task: Task, difficulty: Difficulty, seed: u64) -> Result<Scene> {
    generate_scene_in(task, difficulty, seed, &Workspace::default())
}

/// Samples the target, the container (or the ALN goal) and, for randomized
/// scenes, 2 to 5 obstacles, rejecting placements whose footprints overlap
/// or leave the region. Obstacles use the workspace grown by
/// [`OBSTACLE_MARGIN`].
pub fn generate_scene_in(task: Task, difficulty: Difficulty, seed: u64, ws: &Workspace) -> Result<Scene> {
    ws.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: Vec<Footprint> = Vec::new();
    let mut objects = Vec::new();

    let shape = sample_shape(&mut rng, false);
    let (x, y) = place(&mut rng, ws, shape.footprint_radius(), &taken, 0)?;
    let yaw = rng.random_range(0.0..std::f64::consts::TAU);
    taken.push(Footprint { x, y, r: shape.footprint_radius() });
    objects.push(SceneObject {
        id: 0,
        shape,
        pose: resting_pose(&shape, x, y, yaw),
        mass: rng.random_range(0.05..0.2),
        grasp_poses: grasp_annotations(&shape, DEFAULT_EEF_RADIUS),
        is_obstacle: false,
    });

    let he = CONTAINER_HALF_EXTENTS;
    let container_r = he[0].hypot(he[1]);
    let (cx, cy) = place(&mut rng, ws, container_r, &taken, 1)?;
    let cyaw = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
    taken.push(Footprint { x: cx, y: cy, r: container_r });
    let container_pose = Pose::new(Vec3::new(cx, cy, TABLE_HEIGHT + he[2]), Quat::from_axis_angle(&Vec3::z_axis(), cyaw));

    let aln_goal_pose = match task {
        Task::Aln => {
            let (gx, gy) = place(&mut rng, ws, shape.footprint_radius(), &taken, 0)?;
            let gyaw = rng.random_range(0.0..std::f64::consts::TAU);
            taken.push(Footprint { x: gx, y: gy, r: shape.footprint_radius() });
            Some(resting_pose(&shape, gx, gy, gyaw))
        }
        Task::Coll => None,
    };

    if difficulty == Difficulty::Randomized {
        let around = ws.expanded(OBSTACLE_MARGIN);
        let count = rng.random_range(2..=5);
        for id in 1..=count {
            let shape = sample_shape(&mut rng, true);
            let (x, y) = place(&mut rng, &around, shape.footprint_radius(), &taken, id)?;
            let yaw = rng.random_range(0.0..std::f64::consts::TAU);
            taken.push(Footprint { x, y, r: shape.footprint_radius() });
            objects.push(SceneObject {
                id,
                shape,
                pose: resting_pose(&shape, x, y, yaw),
                mass: rng.random_range(0.1..0.5),
                grasp_poses: Vec::new(),
                is_obstacle: true,
            });
        }
    }

    let verb = match task {
        Task::Coll => "coll: put object 0 into the container",
        Task::Aln => "aln: align object 0 with the goal pose",
    };
    let scene = Scene {
        task,
        randomized: difficulty == Difficulty::Randomized,
        rng_seed: seed,
        objects,
        container_pose,
        container_half_extents: he,
        target_object_id: 0,
        aln_goal_pose,
        instruction: verb.to_string(),
    };
    scene.validate()?;
    Ok(scene)
}

/// Index of the annotation whose world orientation is closest to the relaxed
/// arm's tip orientation at that point, among those whose grasp and approach
/// points are inside the reach sphere; ties keep the lower index.
fn choose_grasp(target: &SceneObject, cfg: &PlannerConfig) -> usize {
    let mount = mount_pose().translation;
    let mut best = (f64::INFINITY, 0);
    for (k, g) in target.world_grasp_poses().enumerate() {
        let approach = g.translation - g.rotation * Vec3::z() * cfg.approach_offset;
        let inside = [g.translation, approach].iter().all(|p| (p - mount).norm() <= cfg.reach_limit());
        let cost = match natural_orientation(&g.translation, cfg.rest_length) {
            Some(q) if inside => so3::angle(&(q.inverse() * g.rotation)),
            _ => f64::INFINITY,
        };
        if cost < best.0 {
            best = (cost, k);
        }
    }
    best.1
}

fn lifted(p: &Pose, dz: f64) -> Pose {
    Pose::new(p.translation + Vec3::new(0.0, 0.0, dz), p.rotation)
}

/// Transfer height for a carried segment from `a` to `b`: the higher of the
/// two endpoints and the top of every obstacle bounding sphere near the
/// straight path plus `clearance`.
fn transfer_height(scene: &Scene, a: &Vec3, b: &Vec3, corridor: f64, clearance: f64) -> f64 {
    let mut h = a.z.max(b.z);
    for o in scene.objects.iter().filter(|o| o.is_obstacle) {
        let c = o.pose.translation;
        let r = o.shape.bounding_radius();
        let ab = (b - a).xy();
        let t = if ab.norm_squared() > 0.0 { ((c - a).xy().dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        let closest = a.xy() + ab * t;
        if (c.xy() - closest).norm() <= r + corridor {
            h = h.max(c.z + r + clearance);
        }
    }
    h
}

/// Rule-based pick-and-place waypoints with default constants.
pub fn plan_waypoints(scene: &Scene) -> Result<WaypointPlan> {
    plan_waypoints_with(scene, &PlannerConfig::default())
}

pub fn plan_waypoints_with(scene: &Scene, cfg: &PlannerConfig) -> Result<WaypointPlan> {
    scene.validate()?;
    let target = scene.target()?;
    let grasp_index = choose_grasp(target, cfg);
    let grasp = target.pose.compose(&target.grasp_poses[grasp_index]);
    let approach_axis = grasp.rotation * Vec3::z();
    let back_off = |p: &Pose| Pose::new(p.translation - approach_axis * cfg.approach_offset, p.rotation);

    // object pose once placed; the grasp offset is carried rigidly
    let placed_object = match scene.task {
        Task::Coll => {
            let c = scene.container_pose.translation;
            let floor = c.z - scene.container_half_extents[2];
            Pose::new(Vec3::new(c.x, c.y, floor + target.shape.rest_height()), target.pose.rotation)
        }
        Task::Aln => scene.aln_goal_pose.ok_or_else(|| Error::SceneInvalid("ALN scene needs aln_goal_pose".into()))?,
    };
    let place = placed_object.compose(&target.grasp_poses[grasp_index]);
    let lift = lifted(&grasp, cfg.lift_height);
    let carried = target.shape.footprint_radius() + cfg.eef_radius;
    let height = transfer_height(scene, &lift.translation, &place.translation, carried, cfg.clearance).max(lift.translation.z);

    let mut key = vec![
        Waypoint { pose: back_off(&grasp), gripper_closed: false, phase: Phase::Approach },
        Waypoint { pose: grasp, gripper_closed: true, phase: Phase::Grasp },
        Waypoint { pose: lift, gripper_closed: true, phase: Phase::Lift },
    ];
    if height > lift.translation.z {
        key.push(Waypoint { pose: lifted(&lift, height - lift.translation.z), gripper_closed: true, phase: Phase::Transfer });
    }
    let above_place = lifted(&place, height - place.translation.z);
    key.push(Waypoint { pose: above_place, gripper_closed: true, phase: Phase::Transfer });
    key.push(Waypoint { pose: place, gripper_closed: true, phase: Phase::Place });
    key.push(Waypoint { pose: place, gripper_closed: false, phase: Phase::Release });
    key.push(Waypoint { pose: back_off(&place), gripper_closed: false, phase: Phase::Retract });

    // subdivide long hops; intermediate points take the destination's phase
    // and keep the gripper state of the departure point
    let mut waypoints: Vec<Waypoint> = Vec::with_capacity(key.len());
    for w in key {
        if let Some(prev) = waypoints.last().copied() {
            let gap = (w.pose.translation - prev.pose.translation).norm();
            let pieces = (gap / cfg.max_spacing).ceil() as usize;
            for k in 1..pieces {
                let t = k as f64 / pieces as f64;
                let p = prev.pose.translation.lerp(&w.pose.translation, t);
                let q = prev.pose.rotation.slerp(&w.pose.rotation, t);
                waypoints.push(Waypoint { pose: Pose::new(p, q), gripper_closed: prev.gripper_closed, phase: w.phase });
            }
        }
        waypoints.push(w);
    }

    let mount = mount_pose().translation;
    for (index, w) in waypoints.iter().enumerate() {
        let distance = (w.pose.translation - mount).norm();
        if distance > cfg.reach_limit() {
            return Err(Error::Unreachable { index, phase: w.phase.as_str().into(), distance, limit: cfg.reach_limit() });
        }
    }
    Ok(WaypointPlan { waypoints, grasp_index })
}
