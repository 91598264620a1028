//! Control-level environment: actions at the control rate, sub-stepped
//! rod/end-effector/object dynamics, observations and rewards.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::body::{Body, Wrench};
use crate::contact::{contact_forces, ContactObject, ContactParams, RodNodes, Table};
use crate::coupling::{coupling_wrench, eef_step, grasp_update, CouplingParams, EndEffector, DEFAULT_EEF_MASS, DEFAULT_EEF_RADIUS};
use crate::error::{Error, Result};
use crate::rod::{Rod, RodConfig};
use crate::scene::{mount_pose, Scene, SceneObject, TABLE_HEIGHT};
use crate::se3::{self, Pose, PoseDiff, RdParams, RsParams};
use crate::so3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub rod: RodConfig,
    pub substeps: usize,
    pub horizon: usize,
    pub obs_segments: usize,
    pub control_points: usize,
    pub tau_max: f64,
    pub alpha: f64,
    pub rd_params: RdParams,
    pub rs_params: RsParams,
    pub gravity: [f64; 3],
    pub coupling: CouplingParams,
    pub contact: ContactParams,
    pub eef_mass: f64,
    pub eef_radius: f64,
    /// Rod nodes collide with the table and obstacles.
    pub rod_contact: bool,
    /// Gravity acts on the rod itself, not only on rigid bodies.
    pub rod_gravity: bool,
    /// End the episode on the first successful step.
    pub terminate_on_success: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            rod: RodConfig::default(),
            substeps: 7,
            horizon: 1500,
            obs_segments: 8,
            control_points: 6,
            tau_max: 5.0,
            alpha: se3::DEFAULT_ALPHA,
            rd_params: RdParams::default(),
            rs_params: RsParams::default(),
            gravity: [0.0, 0.0, -9.81],
            coupling: CouplingParams::default(),
            contact: ContactParams::default(),
            eef_mass: DEFAULT_EEF_MASS,
            eef_radius: DEFAULT_EEF_RADIUS,
            rod_contact: true,
            rod_gravity: true,
            terminate_on_success: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.rod.validate()?;
        self.rd_params.validate()?;
        self.rs_params.validate()?;
        self.coupling.validate()?;
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.substeps == 0 {
            return bad("substeps must be >= 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if self.obs_segments == 0 || self.obs_segments > self.rod.n_elements {
            return bad("obs_segments must lie in 1..=n_elements");
        }
        if self.control_points < 2 || self.control_points > self.rod.n_elements {
            return bad("control_points must lie in 2..=n_elements");
        }
        if !(self.tau_max > 0.0 && self.alpha > 0.0 && self.eef_mass > 0.0 && self.eef_radius > 0.0) {
            return bad("tau_max, alpha, eef_mass and eef_radius must be positive");
        }
        Ok(())
    }

    /// Control rate in Hz.
    pub fn control_frequency(&self) -> f64 {
        1.0 / (self.substeps as f64 * self.rod.dt)
    }

    pub fn obs_dim(&self, n_objects: usize) -> usize {
        self.obs_segments * 6 + 7 + 7 * n_objects + 2
    }

    pub fn action_dim(&self) -> usize {
        self.control_points * 3 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Body-frame torques at the control points, base to tip (N m).
    pub torques: Vec<[f64; 3]>,
    /// `true` commands the gripper closed (S = 1).
    pub close_gripper: bool,
}

impl Action {
    pub fn zero(control_points: usize) -> Self {
        Self { torques: vec![[0.0; 3]; control_points], close_gripper: false }
    }

    /// Parses `M * 3` torques followed by the gripper entry (> 0.5 closes).
    pub fn from_flat(flat: &[f64], control_points: usize) -> Result<Self> {
        if flat.len() != control_points * 3 + 1 {
            return Err(Error::InvalidConfig(format!("flat action needs {} entries, got {}", control_points * 3 + 1, flat.len())));
        }
        Ok(Self {
            torques: flat[..control_points * 3].chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
            close_gripper: flat[control_points * 3] > 0.5,
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.torques.iter().flatten().copied().collect();
        out.push(if self.close_gripper { 1.0 } else { 0.0 });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub segment_positions: Vec<[f64; 3]>,
    pub segment_velocities: Vec<[f64; 3]>,
    pub eef_pose: Pose,
    pub target_pose: Option<Pose>,
    pub object_poses: Vec<Pose>,
    pub gripper_open: bool,
    pub step_index: usize,
}

impl Observation {
    /// Flat layout: segment positions and velocities, end-effector pose
    /// (xyz, wxyz), object poses, gripper flag, step index. The target is
    /// not included.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (p, v) in self.segment_positions.iter().zip(&self.segment_velocities) {
            out.extend_from_slice(p);
            out.extend_from_slice(v);
        }
        let mut push_pose = |p: &Pose| {
            out.extend(p.translation.iter());
            out.extend(p.wxyz());
        };
        push_pose(&self.eef_pose);
        for p in &self.object_poses {
            push_pose(p);
        }
        out.push(if self.gripper_open { 1.0 } else { 0.0 });
        out.push(self.step_index as f64);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Success,
    Horizon,
    Blowup,
}

impl DoneReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DoneReason::Success => "success",
            DoneReason::Horizon => "horizon",
            DoneReason::Blowup => "blowup",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
    pub diff: PoseDiff,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    rod: Rod,
    eef: EndEffector,
    objects: Vec<SceneObject>,
    bodies: Vec<Body>,
    target: Pose,
    d_prev: Option<f64>,
    step_index: usize,
    substep_count: u64,
    done: Option<DoneReason>,
    seed: u64,
    spline: Vec<Vec<f64>>,
    element_torques: Vec<Vec3>,
    node_forces: Vec<Vec3>,
    node_masses: Vec<f64>,
    last_link: Wrench,
}

impl Env {
    /// Environment with the rod hanging at rest and no objects.
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let rod = Rod::hanging(config.rod, mount_pose())?;
        let tip = rod.state.tip_pose();
        let n = config.rod.n_elements;
        let knots: Vec<f64> = (0..config.control_points).map(|j| j as f64 / (config.control_points - 1) as f64).collect();
        let centers: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let node_masses = rod.node_masses();
        Ok(Self {
            spline: natural_spline_weights(&knots, &centers),
            eef: EndEffector::new(tip, config.eef_mass, config.eef_radius),
            rod,
            objects: Vec::new(),
            bodies: Vec::new(),
            target: tip,
            d_prev: None,
            step_index: 0,
            substep_count: 0,
            done: None,
            seed: 0,
            element_torques: vec![Vec3::zeros(); n],
            node_forces: vec![Vec3::zeros(); n + 1],
            node_masses,
            last_link: Wrench::default(),
            config,
        })
    }

    /// Loads `scene` with the rod straight and vertical from the mount and
    /// the end effector on the tip. The target starts at the tip pose.
    pub fn reset(&mut self, scene: &Scene, seed: u64) -> Result<Observation> {
        scene.validate()?;
        self.reset_objects(&scene.objects, seed)
    }

    /// Reset with an explicit object list (possibly empty).
    pub fn reset_objects(&mut self, objects: &[SceneObject], seed: u64) -> Result<Observation> {
        let fresh = Env::new(self.config)?;
        *self = fresh;
        self.seed = seed;
        self.objects = objects.to_vec();
        self.bodies = objects.iter().map(|o| Body::at_rest(o.pose, o.mass, o.shape.inertia(o.mass))).collect();
        let arm_clear = self.rod.state.positions.iter().all(|x| {
            objects.iter().all(|o| {
                let local = o.pose.inverse().transform_point(x);
                o.shape.sdf(&local).0 > self.config.rod.radius
            })
        });
        if !arm_clear {
            return Err(Error::SceneInvalid("an object intersects the hanging arm".into()));
        }
        Ok(self.observation())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn rod(&self) -> &Rod {
        &self.rod
    }

    pub fn eef(&self) -> &EndEffector {
        &self.eef
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn target(&self) -> Pose {
        self.target
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn substep_count(&self) -> u64 {
        self.substep_count
    }

    pub fn done_reason(&self) -> Option<DoneReason> {
        self.done
    }

    /// Starts a new target segment; the first step after this has `Rs = 0`.
    pub fn set_target(&mut self, target: Pose) {
        self.target = target;
        self.d_prev = None;
    }

    pub fn set_terminate_on_success(&mut self, on: bool) {
        self.config.terminate_on_success = on;
    }

    pub fn set_rs_params(&mut self, rs: RsParams) {
        self.config.rs_params = rs;
    }

    pub fn pose_diff(&self) -> PoseDiff {
        se3::pose_log(&self.eef.pose(), &self.target, self.config.alpha)
    }

    pub fn body_pose(&self, id: usize) -> Option<Pose> {
        self.objects.iter().position(|o| o.id == id).map(|k| self.bodies[k].pose)
    }

    pub fn observation(&self) -> Observation {
        let n = self.config.rod.n_elements;
        let k = self.config.obs_segments;
        let idx = (0..k).map(|i| i * n / k);
        let s = &self.rod.state;
        Observation {
            segment_positions: idx.clone().map(|i| s.element_center(i).into()).collect(),
            segment_velocities: idx.map(|i| s.element_velocity(i).into()).collect(),
            eef_pose: self.eef.pose(),
            target_pose: Some(self.target),
            object_poses: self.bodies.iter().map(|b| b.pose).collect(),
            gripper_open: self.eef.gripper_open,
            step_index: self.step_index,
        }
    }

    /// Element torques (body frame) produced by `action` after clamping and
    /// spline interpolation from the control points.
    pub fn interpolate_torques(&self, action: &Action, out: &mut [Vec3]) -> Result<()> {
        let m = self.config.control_points;
        if action.torques.len() != m {
            return Err(Error::InvalidConfig(format!("action needs {m} control points, got {}", action.torques.len())));
        }
        let t_max = self.config.tau_max;
        let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-t_max, t_max) };
        let ctrl: Vec<Vec3> = action.torques.iter().map(|t| Vec3::new(clamp(t[0]), clamp(t[1]), clamp(t[2]))).collect();
        for (o, w) in out.iter_mut().zip(&self.spline) {
            let v: Vec3 = w.iter().zip(&ctrl).map(|(wj, c)| c * *wj).sum();
            *o = v.map(clamp);
        }
        Ok(())
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.done.is_some() {
            return Err(Error::EpisodeFinished);
        }
        let mut torques = std::mem::take(&mut self.element_torques);
        let res = self.interpolate_torques(action, &mut torques);
        self.element_torques = torques;
        res?;

        let snapshot = (self.rod.state.clone(), self.eef.clone(), self.bodies.clone());
        grasp_update(&mut self.eef, &self.objects, &mut self.bodies, action.close_gripper);
        let mut blowup = false;
        for _ in 0..self.config.substeps {
            match self.substep() {
                Ok(()) => {}
                Err(Error::NumericBlowup(_)) | Err(Error::DegenerateSegment { .. }) => {
                    blowup = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        self.step_index += 1;
        if blowup {
            self.rod.state = snapshot.0;
            self.eef = snapshot.1;
            self.bodies = snapshot.2;
            self.done = Some(DoneReason::Blowup);
            let diff = self.pose_diff();
            return Ok(StepResult {
                observation: self.observation(),
                reward: se3::reward_d(diff.d, &self.config.rd_params),
                done: true,
                done_reason: self.done,
                diff,
            });
        }

        let diff = self.pose_diff();
        let rs = match self.d_prev {
            Some(prev) => se3::reward_s(diff.d, prev, &self.config.rs_params),
            None => 0.0,
        };
        self.d_prev = Some(diff.d);
        let reward = se3::reward_d(diff.d, &self.config.rd_params) + rs;
        if self.config.terminate_on_success && se3::success(&diff) {
            self.done = Some(DoneReason::Success);
        } else if self.step_index >= self.config.horizon {
            self.done = Some(DoneReason::Horizon);
        }
        Ok(StepResult { observation: self.observation(), reward, done: self.done.is_some(), done_reason: self.done, diff })
    }

    /// Flat-array step for external RL loops: returns `(obs, reward, done)`.
    pub fn step_flat(&mut self, flat_action: &[f64]) -> Result<(Vec<f64>, f64, bool, StepResult)> {
        let action = Action::from_flat(flat_action, self.config.control_points)?;
        let r = self.step(&action)?;
        Ok((r.observation.to_flat(), r.reward, r.done, r))
    }

    fn substep(&mut self) -> Result<()> {
        let cfg = &self.config;
        let dt = cfg.rod.dt;
        let gravity = Vec3::from(cfg.gravity);
        let held = self.eef.held_object;

        let tip = self.rod.state.tip_pose();
        let tip_twist = self.rod.state.tip_twist();
        let contact_objects: Vec<ContactObject> = self
            .objects
            .iter()
            .zip(&self.bodies)
            .map(|(o, b)| ContactObject { shape: &o.shape, body: b, is_obstacle: o.is_obstacle, held: held == Some(o.id) })
            .collect();
        let rod_nodes = cfg.rod_contact.then_some(RodNodes {
            positions: &self.rod.state.positions,
            velocities: &self.rod.state.velocities,
            masses: &self.node_masses,
            radius: cfg.rod.radius,
        });
        let contacts = contact_forces(
            &contact_objects,
            &self.eef.body,
            self.eef.radius,
            rod_nodes,
            &Table::with_height(TABLE_HEIGHT),
            &cfg.contact,
            dt,
        );
        let link = coupling_wrench(&tip, tip_twist, &self.eef.body, &cfg.coupling);
        self.last_link = link;

        let mut eef_load = link;
        eef_load += contacts.eef;
        let mut compliance = cfg.coupling.compliance();
        compliance.linear_stiffness += contacts.eef_compliance.linear_stiffness;
        compliance.linear_damping += contacts.eef_compliance.linear_damping;
        eef_step(&mut self.eef, &eef_load, &compliance, &gravity, dt)?;

        let n = cfg.rod.n_elements;
        for (k, f) in self.node_forces.iter_mut().enumerate() {
            *f = if cfg.rod_gravity { gravity * self.node_masses[k] } else { Vec3::zeros() };
            if let Some(c) = contacts.rod_nodes.get(k) {
                *f += c;
            }
        }
        self.node_forces[n] -= link.force;
        let mut torques = self.element_torques.clone();
        let s = &self.rod.state;
        let stretch = (s.positions[n] - s.positions[n - 1]).norm() / s.rest_lengths[n - 1];
        // ext torques are scaled by the stretch inside the rod step; pre-divide so the reaction is exact
        torques[n - 1] += s.rotations[n - 1].inverse_transform_vector(&(-link.torque)) / stretch;
        self.rod.step(&self.node_forces, &torques)?;

        for (k, (o, b)) in self.objects.iter().zip(self.bodies.iter_mut()).enumerate() {
            if held == Some(o.id) {
                let offset = self.eef.held_offset.unwrap_or_else(Pose::identity);
                b.pose = self.eef.body.pose.compose(&offset);
                b.linear_velocity = self.eef.body.velocity_at(&b.pose.translation);
                b.angular_velocity = self.eef.body.angular_velocity;
            } else {
                b.step(&contacts.objects[k], &gravity, dt)?;
            }
        }
        self.substep_count += 1;
        Ok(())
    }

    /// Hash of the full dynamic state, for clone-isolation checks.
    pub fn state_fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let s = &self.rod.state;
        let mut put = |v: f64| v.to_bits().hash(&mut h);
        for x in s.positions.iter().chain(&s.velocities).chain(&s.angular_velocities) {
            x.iter().for_each(|c| put(*c));
        }
        for q in &s.rotations {
            q.coords.iter().for_each(|c| put(*c));
        }
        let e = &self.eef.body;
        for b in std::iter::once(e).chain(self.bodies.iter()) {
            b.pose.translation.iter().chain(b.pose.rotation.coords.iter()).for_each(|c| put(*c));
            b.linear_velocity.iter().chain(b.angular_velocity.iter()).for_each(|c| put(*c));
        }
        put(self.step_index as f64);
        h.finish()
    }

    /// Reward range bounds for the default arm: `[-5, 2 + beta]`.
    pub fn reward_bounds(&self) -> (f64, f64) {
        (-5.0, 2.0 + self.config.rs_params.beta)
    }

    pub fn node_forces_debug(&self) -> &[Vec3] {
        &self.node_forces
    }

    /// Coupling wrench on the end effector during the last substep.
    pub fn wrench_debug(&self) -> Wrench {
        self.last_link
    }
}

/// Weights `w[i][j]` such that the natural cubic spline through
/// `(knots[j], y[j])` evaluates to `sum_j w[i][j] y[j]` at `at[i]`.
pub fn natural_spline_weights(knots: &[f64], at: &[f64]) -> Vec<Vec<f64>> {
    let m = knots.len();
    let mut out = vec![vec![0.0; m]; at.len()];
    for j in 0..m {
        let mut y = vec![0.0; m];
        y[j] = 1.0;
        let second = spline_second_derivatives(knots, &y);
        for (i, &x) in at.iter().enumerate() {
            out[i][j] = spline_eval(knots, &y, &second, x);
        }
    }
    out
}

fn spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // tridiagonal system for interior second derivatives (Thomas algorithm)
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for i in 1..k {
        let lower = x[i + 1] - x[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    }
    m
}

fn spline_eval(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let n = x.len();
    let seg = (0..n - 1).find(|&i| t <= x[i + 1]).unwrap_or(n - 2);
    let h = x[seg + 1] - x[seg];
    let a = (x[seg + 1] - t) / h;
    let b = (t - x[seg]) / h;
    a * y[seg] + b * y[seg + 1] + ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * h * h / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_interpolates_knots_and_reproduces_lines() {
        let knots: Vec<f64> = (0..6).map(|j| j as f64 / 5.0).collect();
        let w = natural_spline_weights(&knots, &knots);
        for (i, row) in w.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let at: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).collect();
        let w = natural_spline_weights(&knots, &at);
        for (row, x) in w.iter().zip(&at) {
            let y: f64 = row.iter().zip(&knots).map(|(wj, k)| wj * (3.0 * k - 1.0)).sum();
            assert!((y - (3.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_dimensions() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.obs_dim(3), 8 * 6 + 7 + 21 + 2);
        assert_eq!(cfg.action_dim(), 19);
        let env = Env::new(cfg).unwrap();
        assert_eq!(env.observation().to_flat().len(), cfg.obs_dim(0));
        let a = Action::from_flat(&[0.5; 19], 6).unwrap();
        assert!(!a.close_gripper);
        assert_eq!(a.to_flat().len(), 19);
    }

    #[test]
    fn control_frequency_descriptor() {
        let cfg = EnvConfig::default();
        assert!((cfg.control_frequency() - 714.2857142857143).abs() < 1e-9);
        let slow = EnvConfig { substeps: 14, ..cfg };
        assert!((slow.control_frequency() - 357.14285714285717).abs() < 1e-9);
    }

    #[test]
    fn torques_are_clamped() {
        let env = Env::new(EnvConfig::default()).unwrap();
        let a = Action { torques: vec![[100.0, -100.0, 0.0]; 6], close_gripper: false };
        let mut out = vec![Vec3::zeros(); 40];
        env.interpolate_torques(&a, &mut out).unwrap();
        assert!(out.iter().all(|t| (t.x - 5.0).abs() < 1e-12 && (t.y + 5.0).abs() < 1e-12));
    }

    #[test]
    fn stepping_after_done_errors() {
        let cfg = EnvConfig { horizon: 2, ..Default::default() };
        let mut env = Env::new(cfg).unwrap();
        env.set_target(Pose::from_translation(Vec3::new(5.0, 0.0, 0.0)));
        let a = Action::zero(6);
        assert!(!env.step(&a).unwrap().done);
        let r = env.step(&a).unwrap();
        assert_eq!(r.done_reason, Some(DoneReason::Horizon));
        assert!(matches!(env.step(&a), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn substeps_are_counted() {
        let mut env = Env::new(EnvConfig::default()).unwrap();
        env.set_terminate_on_success(false);
        for _ in 0..3 {
            env.step(&Action::zero(6)).unwrap();
        }
        assert_eq!(env.substep_count(), 21);
    }
}
