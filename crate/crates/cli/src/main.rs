//! `softrod` command line: scene generation, plan rollouts, single-target
//! tracking, self-validation, reward-stability sweeps and plots.
//!
//! Exit codes: 0 success, 2 malformed input or other error, 3 task failure.
//! Errors are reported on stderr as one JSON line `{"error":KIND,"message":...}`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use softrod::env::{Env, EnvConfig};
use softrod::error::Error;
use softrod::io;
use softrod::mpc::{self, MpcConfig};
use softrod::planner::{self, Workspace};
use softrod::scene::{Difficulty, Task};

#[derive(Parser)]
#[command(name = "softrod", version, about = "Soft continuum arm simulator and pick-and-place trajectory generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Coll,
    Aln,
}

#[derive(Clone, Copy, ValueEnum)]
enum DifficultyArg {
    Clean,
    Randomized,
}

#[derive(clap::Args)]
struct MpcArgs {
    /// Candidate sequences per CEM iteration.
    #[arg(long)]
    mpc_samples: Option<usize>,
    /// Control steps allowed per waypoint.
    #[arg(long)]
    waypoint_timeout: Option<usize>,
    /// Worker threads for candidate rollouts (falls back to SOFTROD_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

impl MpcArgs {
    fn config(&self) -> MpcConfig {
        let mut cfg = MpcConfig::default().with_threads(self.threads);
        if let Some(n) = self.mpc_samples {
            cfg.n_samples = n;
            cfg.n_elites = cfg.n_elites.min(n.saturating_sub(1)).max(1);
        }
        if let Some(t) = self.waypoint_timeout {
            cfg.waypoint_timeout = t;
        }
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scene and write it as JSON.
    GenScene {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum)]
        difficulty: DifficultyArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Sampling region "x0,x1,y0,y1" in meters.
        #[arg(long)]
        workspace: Option<String>,
    },
    /// Plan waypoints for a scene, track them and write the trajectory.
    Rollout {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mpc: MpcArgs,
        /// Timestamp written to the header instead of the current time.
        #[arg(long)]
        created_utc: Option<String>,
    },
    /// Track one end-effector target from the hanging arm and write the d series.
    Track {
        /// "x,y,z,qw,qx,qy,qz"
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        mpc: MpcArgs,
    },
    /// Run the numerical self-checks.
    Validate,
    /// Final-window d variance for each (beta, D) cell of a grid file.
    Stability {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        /// Control steps tracked per run.
        #[arg(long, default_value_t = 1100)]
        steps: usize,
        /// Final window length in control steps.
        #[arg(long, default_value_t = 1000)]
        window: usize,
        #[command(flatten)]
        mpc: MpcArgs,
    },
    /// Rod-shadow SVG of a trajectory.
    Plot {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Outcome {
    Ok,
    TaskFailed,
}

fn parse_workspace(s: &str) -> Result<Workspace, Error> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad workspace value {p:?}"))))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format("workspace needs 4 finite numbers x0,x1,y0,y1".into()));
    }
    Ok(Workspace { x: [v[0], v[1]], y: [v[2], v[3]] })
}

fn now_utc() -> String {
    humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string()
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::GenScene { task, difficulty, seed, out, workspace } => {
            let task = match task {
                TaskArg::Coll => Task::Coll,
                TaskArg::Aln => Task::Aln,
            };
            let difficulty = match difficulty {
                DifficultyArg::Clean => Difficulty::Clean,
                DifficultyArg::Randomized => Difficulty::Randomized,
            };
            let ws = match workspace {
                Some(s) => parse_workspace(&s)?,
                None => Workspace::default(),
            };
            let scene = planner::generate_scene_in(task, difficulty, seed, &ws)?;
            io::write_scene(&out, &scene)?;
            Ok(Outcome::Ok)
        }
        Command::Rollout { scene, seed, out, mpc, created_utc } => {
            let scene = io::read_scene(&scene)?;
            let plan = planner::plan_waypoints(&scene)?;
            let cfg = mpc.config();
            let stamp = created_utc.unwrap_or_else(now_utc);
            let traj = mpc::rollout_plan(&scene, &plan, &EnvConfig::default(), &cfg, seed, &stamp)?;
            io::write_trajectory_file(&out, &traj)?;
            eprintln!(
                "{}",
                serde_json::json!({"success": traj.footer.success, "done_reason": traj.footer.done_reason, "steps": traj.footer.total_steps})
            );
            Ok(if traj.footer.success { Outcome::Ok } else { Outcome::TaskFailed })
        }
        Command::Track { target, seed, report, mpc } => {
            let target = io::parse_target(&target)?;
            let cfg = mpc.config();
            let mut env = Env::new(EnvConfig { horizon: usize::MAX, ..EnvConfig::default() })?;
            let mut rows = String::from("step,d,d_p,d_r,reward\n");
            let mut cem = mpc::Cem::new(cfg, env.config().control_points, seed)?;
            let r = mpc::track_with(&mut env, &mut cem, target, false, &cfg, true, &mut |_, s| {
                rows.push_str(&format!(
                    "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    s.observation.step_index,
                    s.diff.d,
                    s.diff.translation_norm(),
                    s.diff.rotation_norm(),
                    s.reward
                ));
            })?;
            std::fs::write(&report, rows)?;
            eprintln!("{}", serde_json::json!({"reached": r.reached, "steps": r.steps_used, "final_d": r.final_diff.d}));
            Ok(if r.reached { Outcome::Ok } else { Outcome::TaskFailed })
        }
        Command::Validate => {
            let checks = softrod::validate::run_all();
            for c in &checks {
                println!("{} {} value={:.3e} limit={:.1e} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.limit, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { Outcome::Ok } else { Outcome::TaskFailed })
        }
        Command::Stability { grid, seeds, out, steps, window, mpc } => {
            let grid = io::parse_grid(&std::fs::read_to_string(&grid)?)?;
            if seeds == 0 || window > steps {
                return Err(Error::InvalidConfig("need seeds >= 1 and window <= steps".into()));
            }
            let seed_list: Vec<u64> = (0..seeds as u64).collect();
            let rows = mpc::stability_sweep(&EnvConfig::default(), &mpc.config(), &grid, &seed_list, steps, window)?;
            std::fs::write(&out, mpc::stability_csv(&rows))?;
            Ok(Outcome::Ok)
        }
        Command::Plot { traj, out } => {
            let traj = io::read_trajectory_file(&traj)?;
            std::fs::write(&out, softrod::plot::render_svg(&traj))?;
            Ok(Outcome::Ok)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericBlowup(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
                eprintln!("{}", serde_json::json!({"error": "Usage", "message": first}));
                return ExitCode::from(2);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::TaskFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(exit_code(&e))
        }
    }
}
