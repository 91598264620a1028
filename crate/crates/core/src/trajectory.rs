//! Recorded rollouts: a header, one record per control step, and a footer.

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation};
use crate::mpc::MpcConfig;
use crate::planner::Phase;
use crate::scene::Scene;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfigs {
    pub env: EnvConfig,
    pub mpc: MpcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format_version: u32,
    pub scene: Scene,
    pub configs: RunConfigs,
    pub seed: u64,
    /// RFC 3339 timestamp; the only field allowed to differ between reruns.
    pub created_utc: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gripper {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Flat action: control-point torques then the gripper command.
    pub action: Vec<f64>,
    pub observation: Observation,
    pub reward: f64,
    pub d: f64,
    pub gripper: Gripper,
    pub phase_label: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFooter {
    pub success: bool,
    /// `completed`, `waypoint <k> timeout` (1-based), `horizon`, `blowup`
    /// or `end state check failed`.
    pub done_reason: String,
    pub total_steps: usize,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub steps: Vec<StepRecord>,
    pub footer: TrajectoryFooter,
}
