//! Self-checks run by the `validate` command: cantilever deflection,
//! momentum conservation, SE(3) log/exp round trips and the reward table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::rod::{Rod, RodConfig, RodState};
use crate::se3::{self, Pose, RdParams};
use crate::so3::{self, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

/// Static tip deflection of a horizontal cantilever under a transverse tip
/// load, gravity off, settled with strong damping. Returns (measured, theory).
pub fn cantilever(config: &RodConfig, load: f64, seconds: f64) -> Result<(f64, f64)> {
    let cfg = RodConfig { damping: 20.0, ..*config };
    // clamped at the origin, growing along +x
    let base = Pose::new(Vec3::zeros(), so3::exp(&Vec3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0)));
    let mut rod = Rod::hanging(cfg, base)?;
    let n = cfg.n_elements;
    let mut force = vec![Vec3::zeros(); n + 1];
    force[n] = Vec3::new(0.0, 0.0, -load);
    let torque = vec![Vec3::zeros(); n];
    let steps = (seconds / cfg.dt).ceil() as usize;
    for _ in 0..steps {
        rod.step(&force, &torque)?;
    }
    let measured = -rod.state.positions[n].z;
    let ei = rod.material.bending_stiffness.x;
    Ok((measured, load * cfg.rest_length.powi(3) / (3.0 * ei)))
}

/// Largest linear and angular momentum change of a free, undamped, bent
/// and spinning rod over `steps` steps.
pub fn conservation(config: &RodConfig, steps: usize, seed: u64) -> Result<(f64, f64)> {
    let cfg = RodConfig { damping: 0.0, ..*config };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_elements;
    let sigma = vec![Vec3::zeros(); n];
    let kappa: Vec<Vec3> = (0..n - 1).map(|_| Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0)).collect();
    let mut state = RodState::from_strains(&cfg, Pose::identity(), &sigma, &kappa)?.unclamped();
    for v in state.velocities.iter_mut() {
        *v = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    }
    for w in state.angular_velocities.iter_mut() {
        *w = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    }
    let mut rod = Rod::new(cfg, state)?;
    let p0 = rod.state.linear_momentum(&rod.material);
    let l0 = rod.state.angular_momentum(&rod.material);
    let force = vec![Vec3::zeros(); n + 1];
    let torque = vec![Vec3::zeros(); n];
    let (mut dp, mut dl) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        rod.step(&force, &torque)?;
        dp = dp.max((rod.state.linear_momentum(&rod.material) - p0).norm());
        dl = dl.max((rod.state.angular_momentum(&rod.material) - l0).norm());
    }
    Ok((dp, dl))
}

/// Worst `exp(log(P))` error over random poses, rotation angles up to just
/// below pi.
pub fn log_exp_round_trip(count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let axis = if axis.norm() > 1e-6 { axis.normalize() } else { Vec3::x() };
        let angle = rng.random_range(0.0..std::f64::consts::PI - 1e-6);
        let t = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let p = Pose::new(t, so3::exp(&(axis * angle)));
        let (rho, omega) = se3::se3_log(&p);
        let q = se3::se3_exp(&rho, &omega);
        let err = (q.translation - p.translation).norm() + so3::angle(&(q.rotation.inverse() * p.rotation));
        worst = worst.max(err);
    }
    worst
}

/// `(d, expected, computed)` rows of the reference reward table.
pub fn reward_table() -> Vec<(f64, f64, f64)> {
    let p = RdParams::default();
    [(0.0, 2.0), (0.07, 0.43), (0.2, -0.2)].iter().map(|&(d, want)| (d, want, se3::reward_d(d, &p))).collect()
}

/// All checks with the default arm.
pub fn run_all() -> Vec<Check> {
    let cfg = RodConfig::default();
    let mut out = Vec::new();
    match cantilever(&cfg, 0.1, 3.0) {
        Ok((m, th)) => {
            let rel = (m - th).abs() / th;
            out.push(Check {
                name: "cantilever",
                passed: rel < 0.05,
                value: rel,
                limit: 0.05,
                detail: format!("tip deflection {m:.6e} m, Euler-Bernoulli {th:.6e} m"),
            })
        }
        Err(e) => out.push(Check { name: "cantilever", passed: false, value: f64::NAN, limit: 0.05, detail: e.to_string() }),
    }
    match conservation(&cfg, 1000, 7) {
        Ok((dp, dl)) => out.push(Check {
            name: "conservation",
            passed: dp < 1e-8 && dl < 1e-8,
            value: dp.max(dl),
            limit: 1e-8,
            detail: format!("linear drift {dp:.3e}, angular drift {dl:.3e}"),
        }),
        Err(e) => out.push(Check { name: "conservation", passed: false, value: f64::NAN, limit: 1e-8, detail: e.to_string() }),
    }
    let err = log_exp_round_trip(1000, 11);
    out.push(Check {
        name: "log_exp",
        passed: err < 1e-10,
        value: err,
        limit: 1e-10,
        detail: format!("worst round-trip error {err:.3e} over 1000 poses"),
    });
    let rows = reward_table();
    let worst = rows.iter().map(|(_, w, g)| (w - g).abs()).fold(0.0, f64::max);
    out.push(Check {
        name: "reward_table",
        passed: worst == 0.0,
        value: worst,
        limit: 0.0,
        detail: rows.iter().map(|(d, w, g)| format!("d={d}: {g} (expected {w})")).collect::<Vec<_>>().join("; "),
    });
    out
}
