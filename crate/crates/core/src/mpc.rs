//! Cross-entropy-method MPC that tracks end-effector waypoints with torque
//! commands, the plan rollout driver, and the reward-stability sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Action, DoneReason, Env, EnvConfig, StepResult};
use crate::error::{Error, Result};
use crate::planner::WaypointPlan;
use crate::scene::{Scene, Task};
use crate::se3::{self, Pose, PoseDiff, RsParams};
use crate::trajectory::{Gripper, RunConfigs, StepRecord, Trajectory, TrajectoryFooter, TrajectoryHeader, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon_steps: usize,
    pub n_samples: usize,
    pub n_elites: usize,
    pub n_iters: usize,
    /// Initial sampling std of each torque component (N m).
    pub noise_init: f64,
    /// AR(1) correlation of the sampling noise along the lookahead.
    pub noise_correlation: f64,
    pub waypoint_timeout: usize,
    pub settle_steps: usize,
    /// Worker threads for candidate rollouts; `None` uses rayon's default.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 30,
            n_samples: 24,
            n_elites: 8,
            n_iters: 3,
            noise_init: 1.0,
            noise_correlation: 1.0,
            waypoint_timeout: 300,
            settle_steps: 10,
            threads: None,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 || self.n_iters == 0 || self.n_elites == 0 || self.n_elites >= self.n_samples {
            return Err(Error::InvalidConfig("mpc needs horizon, iters > 0 and 0 < n_elites < n_samples".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_correlation) {
            return Err(Error::InvalidConfig("noise_correlation must lie in [0, 1]".into()));
        }
        if !(self.noise_init > 0.0) || self.settle_steps == 0 || self.waypoint_timeout == 0 {
            return Err(Error::InvalidConfig("mpc needs noise_init > 0, settle_steps > 0, timeout > 0".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Thread count from `--threads`, else `SOFTROD_THREADS`.
    pub fn with_threads(mut self, cli: Option<usize>) -> Self {
        self.threads = cli.or_else(|| std::env::var("SOFTROD_THREADS").ok().and_then(|v| v.parse().ok()));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub reached: bool,
    pub steps_used: usize,
    pub final_diff: PoseDiff,
    pub d_series: Vec<f64>,
    pub reward_sum: f64,
    pub done_reason: Option<DoneReason>,
}

/// Per-planning-step diagnostics: elite-mean score after each refit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanLog {
    pub elite_means: Vec<f64>,
}

/// Sampler state carried between planning steps (shifted warm start).
#[derive(Debug, Clone)]
pub struct Cem {
    cfg: MpcConfig,
    dim: usize,
    mean: Vec<f64>,
    rng: ChaCha8Rng,
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl Cem {
    pub fn new(cfg: MpcConfig, control_points: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let pool = match cfg.threads {
            Some(n) => Some(std::sync::Arc::new(
                rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::InvalidConfig(e.to_string()))?,
            )),
            None => None,
        };
        let dim = control_points * 3;
        Ok(Self { cfg, dim, mean: vec![0.0; dim * cfg.horizon_steps], rng: ChaCha8Rng::seed_from_u64(seed), pool })
    }

    /// Forget the warm start (new waypoint).
    pub fn reset_mean(&mut self) {
        self.mean.iter_mut().for_each(|m| *m = 0.0);
    }

    /// Chooses the next action for `env` without mutating it.
    pub fn plan(&mut self, env: &Env, close_gripper: bool, log: Option<&mut PlanLog>) -> Result<Action> {
        let h = self.cfg.horizon_steps;
        let len = self.dim * h;
        let tau_max = env.config().tau_max;
        let floor = 0.01 * self.cfg.noise_init;
        let mut mean = self.mean.clone();
        let mut std = vec![self.cfg.noise_init; len];
        let mut elites: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut elite_means = Vec::with_capacity(self.cfg.n_iters);

        for iter in 0..self.cfg.n_iters {
            let fresh = self.cfg.n_samples - if iter == 0 { 0 } else { elites.len() };
            let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(fresh);
            for k in 0..fresh {
                if iter == 0 && k == 0 {
                    candidates.push(mean.clone());
                    continue;
                }
                let rho = self.cfg.noise_correlation;
                let fresh_scale = (1.0 - rho * rho).sqrt();
                let mut z = vec![0.0; self.dim];
                let mut c = Vec::with_capacity(len);
                for t in 0..h {
                    for (d, zd) in z.iter_mut().enumerate() {
                        let e: f64 = StandardNormal.sample(&mut self.rng);
                        *zd = if t == 0 { e } else { rho * *zd + fresh_scale * e };
                        let j = t * self.dim + d;
                        c.push((mean[j] + std[j] * *zd).clamp(-tau_max, tau_max));
                    }
                }
                candidates.push(c);
            }
            let score = |c: &Vec<f64>| rollout_score(env, c, self.dim, h, close_gripper);
            let scores: Vec<f64> = match &self.pool {
                Some(p) => p.install(|| candidates.par_iter().map(score).collect()),
                None => candidates.par_iter().map(score).collect(),
            };
            let mut population: Vec<(f64, Vec<f64>)> = std::mem::take(&mut elites);
            population.extend(scores.into_iter().zip(candidates));
            // stable sort keeps ties in candidate order, so the reduction is deterministic
            population.sort_by(|a, b| b.0.total_cmp(&a.0));
            population.truncate(self.cfg.n_elites);
            elites = population;

            let ne = elites.len() as f64;
            elite_means.push(elites.iter().map(|e| e.0).sum::<f64>() / ne);
            for j in 0..len {
                let m = elites.iter().map(|e| e.1[j]).sum::<f64>() / ne;
                let v = elites.iter().map(|e| (e.1[j] - m).powi(2)).sum::<f64>() / ne;
                mean[j] = m;
                std[j] = v.sqrt().max(floor);
            }
        }

        let best = &elites[0].1;
        // shift the best sequence one step for the next warm start
        self.mean.clear();
        self.mean.extend_from_slice(&best[self.dim..]);
        self.mean.extend_from_slice(&best[len - self.dim..]);
        if let Some(log) = log {
            log.elite_means = elite_means;
        }
        Ok(action_at(best, 0, self.dim, close_gripper))
    }
}

fn action_at(seq: &[f64], t: usize, dim: usize, close_gripper: bool) -> Action {
    let s = &seq[t * dim..(t + 1) * dim];
    Action { torques: s.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(), close_gripper }
}

/// Cumulative reward of `seq` on a clone of `env`. Blowups score -inf.
fn rollout_score(env: &Env, seq: &[f64], dim: usize, h: usize, close_gripper: bool) -> f64 {
    let mut sim = env.clone();
    sim.set_terminate_on_success(false);
    let mut total = 0.0;
    for t in 0..h {
        match sim.step(&action_at(seq, t, dim, close_gripper)) {
            Ok(r) => {
                if r.done_reason == Some(DoneReason::Blowup) {
                    return f64::NEG_INFINITY;
                }
                total += r.reward;
                if r.done {
                    break;
                }
            }
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    total
}

/// Drives `env` toward `target` until `settle_steps` consecutive successful
/// steps, the timeout, or the end of the episode.
pub fn track_waypoint(env: &mut Env, target: Pose, close_gripper: bool, cfg: &MpcConfig, seed: u64) -> Result<TrackResult> {
    let mut cem = Cem::new(*cfg, env.config().control_points, seed)?;
    track_with(env, &mut cem, target, close_gripper, cfg, true, &mut |_, _| {})
}

/// Tracking loop shared by the executor entry points. With
/// `stop_on_settle = false` it runs the full timeout (stability sweeps).
pub fn track_with(
    env: &mut Env,
    cem: &mut Cem,
    target: Pose,
    close_gripper: bool,
    cfg: &MpcConfig,
    stop_on_settle: bool,
    on_step: &mut dyn FnMut(&Action, &StepResult),
) -> Result<TrackResult> {
    if env.done_reason().is_some() {
        return Err(Error::EpisodeFinished);
    }
    env.set_terminate_on_success(false);
    env.set_target(target);
    cem.reset_mean();
    let mut d_series = Vec::new();
    let mut reward_sum = 0.0;
    let mut streak = 0;
    let mut final_diff = env.pose_diff();
    let mut done_reason = None;
    for _ in 0..cfg.waypoint_timeout {
        let action = cem.plan(env, close_gripper, None)?;
        let r = env.step(&action)?;
        on_step(&action, &r);
        if r.done_reason == Some(DoneReason::Blowup) {
            return Err(Error::NumericBlowup(format!("live environment diverged at step {}", env.step_index())));
        }
        d_series.push(r.diff.d);
        reward_sum += r.reward;
        final_diff = r.diff;
        streak = if se3::success(&r.diff) { streak + 1 } else { 0 };
        if r.done {
            done_reason = r.done_reason;
            break;
        }
        if stop_on_settle && streak >= cfg.settle_steps {
            break;
        }
    }
    Ok(TrackResult {
        reached: streak >= cfg.settle_steps && se3::success(&final_diff),
        steps_used: d_series.len(),
        final_diff,
        d_series,
        reward_sum,
        done_reason,
    })
}

/// Task-level end-state check: the target's center inside the container
/// (COLL) or its pose within the success tolerances of the goal (ALN).
pub fn task_success(scene: &Scene, env: &Env) -> bool {
    let Some(pose) = env.body_pose(scene.target_object_id) else {
        return false;
    };
    match scene.task {
        Task::Coll => scene.in_container(&pose.translation),
        Task::Aln => scene.aln_goal_pose.is_some_and(|g| se3::success(&se3::pose_log(&pose, &g, env.config().alpha))),
    }
}

/// Tracks the plan's waypoints in order on a fresh environment, switching
/// the gripper with one extra step once a waypoint that changes it is
/// reached. Stops at the first unreached waypoint.
pub fn rollout_plan(
    scene: &Scene,
    plan: &WaypointPlan,
    env_cfg: &EnvConfig,
    cfg: &MpcConfig,
    seed: u64,
    created_utc: &str,
) -> Result<Trajectory> {
    let mut env = Env::new(*env_cfg)?;
    env.reset(scene, seed)?;
    let mut cem = Cem::new(*cfg, env_cfg.control_points, seed)?;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut closed = false;
    let mut failure: Option<String> = None;

    'plan: for (k, wp) in plan.waypoints.iter().enumerate() {
        let mut record = |action: &Action, r: &StepResult| {
            steps.push(StepRecord {
                t: r.observation.step_index - 1,
                action: action.to_flat(),
                observation: r.observation.clone(),
                reward: r.reward,
                d: r.diff.d,
                gripper: if r.observation.gripper_open { Gripper::Open } else { Gripper::Closed },
                phase_label: wp.phase,
            });
        };
        let result = match track_with(&mut env, &mut cem, wp.pose, closed, cfg, true, &mut record) {
            Ok(r) => r,
            Err(Error::NumericBlowup(_)) => {
                failure = Some("blowup".into());
                break;
            }
            Err(e) => return Err(e),
        };
        if result.done_reason == Some(DoneReason::Horizon) {
            failure = Some("horizon".into());
            break;
        }
        if !result.reached {
            failure = Some(format!("waypoint {} timeout", k + 1));
            break;
        }
        if wp.gripper_closed != closed {
            closed = wp.gripper_closed;
            let action = cem.plan(&env, closed, None)?;
            let r = env.step(&action)?;
            record(&action, &r);
            match r.done_reason {
                Some(DoneReason::Blowup) => {
                    failure = Some("blowup".into());
                    break 'plan;
                }
                Some(DoneReason::Horizon) => {
                    failure = Some("horizon".into());
                    break 'plan;
                }
                _ => {}
            }
        }
    }

    let success = failure.is_none() && task_success(scene, &env);
    let done_reason = match failure {
        Some(f) => f,
        None if success => "completed".into(),
        None => "end state check failed".into(),
    };
    let total_reward = steps.iter().map(|s| s.reward).sum();
    Ok(Trajectory {
        header: TrajectoryHeader {
            format_version: FORMAT_VERSION,
            scene: scene.clone(),
            configs: RunConfigs { env: *env_cfg, mpc: *cfg },
            seed,
            created_utc: created_utc.to_string(),
        },
        footer: TrajectoryFooter { success, done_reason, total_steps: steps.len(), total_reward },
        steps,
    })
}

/// Equilibrium end-effector poses under random constant torque profiles,
/// kept when the tip moved between `min_offset` and `max_offset` meters.
pub fn reaching_targets(config: &EnvConfig, count: usize, seed: u64, min_offset: f64, max_offset: f64) -> Result<Vec<Pose>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = *config;
    cfg.rod.damping = 20.0;
    cfg.terminate_on_success = false;
    cfg.horizon = usize::MAX;
    let start = Env::new(cfg)?;
    let home = start.eef().pose().translation;
    let settle = (1.5 / (cfg.substeps as f64 * cfg.rod.dt)).ceil() as usize;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 50 * count.max(1) {
            return Err(Error::PlacementFailed { object: out.len(), attempts });
        }
        let bend = rng.random_range(0.05..0.6);
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let (hx, hy) = (heading.cos(), heading.sin());
        let torques = (0..cfg.control_points)
            .map(|_| {
                let wobble: f64 = rng.random_range(0.6..1.4);
                [bend * wobble * hx, bend * wobble * hy, rng.random_range(-0.05..0.05)]
            })
            .collect();
        let action = Action { torques, close_gripper: false };
        let mut env = start.clone();
        let mut ok = true;
        for _ in 0..settle {
            match env.step(&action) {
                Ok(r) if r.done_reason == Some(DoneReason::Blowup) => {
                    ok = false;
                    break;
                }
                Ok(_) => {}
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        let pose = env.eef().pose();
        let offset = (pose.translation - home).norm();
        if ok && offset >= min_offset && offset <= max_offset {
            out.push(pose);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub beta: f64,
    pub big_d: f64,
    /// Final-window variance of d for each seed.
    pub variances: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

/// Final-window variance of each d-series per grid cell.
pub fn stability_report(cells: &[(RsParams, Vec<Vec<f64>>)], window: usize) -> Result<Vec<StabilityRow>> {
    cells
        .iter()
        .map(|(rs, runs)| {
            let variances = runs.iter().map(|s| se3::stability_variance(s, window)).collect::<Result<Vec<_>>>()?;
            Ok(StabilityRow { beta: rs.beta, big_d: rs.big_d, mean: mean(&variances), median: median(&variances), variances })
        })
        .collect()
}

pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut s = String::from("beta,D,runs,mean_variance,median_variance\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:.6e},{:.6e}\n", r.beta, r.big_d, r.variances.len(), r.mean, r.median));
    }
    s
}

/// Runs the stability protocol: for each seed a reaching target, tracked
/// for `steps` control steps under every `(beta, D)` cell with the same
/// sampler seed, then reduced by [`stability_report`].
pub fn stability_sweep(
    env_cfg: &EnvConfig,
    mpc: &MpcConfig,
    grid: &[RsParams],
    seeds: &[u64],
    steps: usize,
    window: usize,
) -> Result<Vec<StabilityRow>> {
    let mut cells: Vec<(RsParams, Vec<Vec<f64>>)> = grid.iter().map(|rs| (*rs, Vec::new())).collect();
    let run_cfg = MpcConfig { waypoint_timeout: steps, ..*mpc };
    for &seed in seeds {
        let target = reaching_targets(env_cfg, 1, seed, 0.1, 0.3)?[0];
        for (rs, runs) in cells.iter_mut() {
            let mut env = Env::new(EnvConfig { rs_params: *rs, horizon: usize::MAX, ..*env_cfg })?;
            let mut cem = Cem::new(run_cfg, env_cfg.control_points, seed)?;
            let r = track_with(&mut env, &mut cem, target, false, &run_cfg, false, &mut |_, _| {})?;
            runs.push(r.d_series);
        }
    }
    stability_report(&cells, window)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
