//! File formats: canonical scene JSON, trajectory JSON Lines, the CLI
//! target and grid strings, and environment construction from a scene file.
//!
//! Canonical JSON: object keys sorted, no whitespace, integers verbatim and
//! every other number written as `{:.16e}` (17 significant digits), so a
//! write-read-write cycle reproduces the bytes.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{Env, EnvConfig};
use crate::error::{Error, Result};
use crate::scene::Scene;
use crate::se3::{Pose, RsParams};
use crate::trajectory::{StepRecord, Trajectory, TrajectoryFooter, TrajectoryHeader, FORMAT_VERSION};

fn write_number(out: &mut String, n: &serde_json::Number) {
    if n.is_u64() || n.is_i64() {
        out.push_str(&n.to_string());
    } else {
        let v = n.as_f64().unwrap_or(f64::NAN);
        out.push_str(&format!("{v:.16e}"));
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(out, &map[k]);
            }
            out.push('}');
        }
    }
}

/// Canonical single-line JSON for any serializable value. Non-finite floats
/// are rejected.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    check_finite(&v)?;
    let mut out = String::new();
    write_value(&mut out, &v);
    Ok(out)
}

fn check_finite(v: &Value) -> Result<()> {
    match v {
        Value::Null => Err(Error::Format("non-finite number or null in record".into())),
        Value::Array(items) => items.iter().try_for_each(check_finite),
        Value::Object(map) => map.values().filter(|x| !x.is_null()).try_for_each(check_finite),
        _ => Ok(()),
    }
}

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn scene_to_json(scene: &Scene) -> Result<String> {
    Ok(to_canonical_json(scene)? + "\n")
}

/// Parses and validates a scene document.
pub fn scene_from_json(text: &str) -> Result<Scene> {
    let scene: Scene = from_json(text).map_err(|e| Error::SceneInvalid(e.to_string()))?;
    scene.validate()?;
    Ok(scene)
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    scene_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    std::fs::write(path, scene_to_json(scene)?)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line {
    Header(TrajectoryHeader),
    Step(StepRecord),
    Footer(TrajectoryFooter),
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LineRef<'a> {
    Header(&'a TrajectoryHeader),
    Step(&'a StepRecord),
    Footer(&'a TrajectoryFooter),
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    writeln!(w, "{}", to_canonical_json(&LineRef::Header(&traj.header))?)?;
    for s in &traj.steps {
        writeln!(w, "{}", to_canonical_json(&LineRef::Step(s))?)?;
    }
    writeln!(w, "{}", to_canonical_json(&LineRef::Footer(&traj.footer))?)?;
    Ok(())
}

pub fn trajectory_to_string(traj: &Trajectory) -> Result<String> {
    let mut buf = Vec::new();
    write_trajectory(&mut buf, traj)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

/// Reads a trajectory, checking the record order, the format version,
/// strictly increasing step times and the footer step count.
pub fn read_trajectory<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut header = None;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut footer = None;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: String| Error::Format(format!("line {}: {what}", n + 1));
        if footer.is_some() {
            return Err(bad("record after footer".into()));
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        match rec {
            Line::Header(h) => {
                if header.is_some() {
                    return Err(bad("second header".into()));
                }
                if h.format_version != FORMAT_VERSION {
                    return Err(bad(format!("unsupported format_version {}, expected {FORMAT_VERSION}", h.format_version)));
                }
                header = Some(h);
            }
            Line::Step(s) => {
                if header.is_none() {
                    return Err(bad("step before header".into()));
                }
                if steps.last().is_some_and(|p| p.t >= s.t) {
                    return Err(bad(format!("step time {} not increasing", s.t)));
                }
                steps.push(s);
            }
            Line::Footer(f) => {
                if header.is_none() {
                    return Err(bad("footer before header".into()));
                }
                if f.total_steps != steps.len() {
                    return Err(bad(format!("footer total_steps {} but {} step records", f.total_steps, steps.len())));
                }
                footer = Some(f);
            }
        }
    }
    match (header, footer) {
        (Some(header), Some(footer)) => Ok(Trajectory { header, steps, footer }),
        (None, _) => Err(Error::Format("missing header".into())),
        (_, None) => Err(Error::Format("missing footer".into())),
    }
}

pub fn read_trajectory_file(path: &Path) -> Result<Trajectory> {
    read_trajectory(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_trajectory_file(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectory(&mut w, traj)?;
    w.flush()?;
    Ok(())
}

/// Parses `"x,y,z,qw,qx,qy,qz"`.
pub fn parse_target(s: &str) -> Result<Pose> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 7 {
        return Err(Error::Format(format!("target needs 7 comma-separated numbers, got {}", parts.len())));
    }
    let mut v = [0.0; 7];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| Error::Format(format!("not a number: {p:?}")))?;
    }
    Pose::from_parts([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
}

/// Parses a stability grid: one `beta,D` pair per line; blank lines and
/// lines starting with `#` are skipped, as is a `beta,D` header line.
pub fn parse_grid(text: &str) -> Result<Vec<RsParams>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (out.is_empty() && line.eq_ignore_ascii_case("beta,d")) {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("grid line {}: {what}", n + 1));
        let mut it = line.split(',').map(str::trim);
        let (Some(b), Some(d), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad("expected beta,D"));
        };
        let beta: f64 = b.parse().map_err(|_| bad("beta is not a number"))?;
        let big_d: f64 = d.parse().map_err(|_| bad("D is not a number"))?;
        if !beta.is_finite() || !big_d.is_finite() {
            return Err(bad("values must be finite"));
        }
        let rs = RsParams { beta, big_d };
        rs.validate().map_err(|e| bad(&e.to_string()))?;
        out.push(rs);
    }
    if out.is_empty() {
        return Err(Error::Format("grid has no cells".into()));
    }
    Ok(out)
}

/// Shape descriptors of an environment for external learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spaces {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: f64,
    pub action_high: f64,
    pub control_frequency: f64,
}

/// Loads a scene file, applies `overrides` (a JSON object merged key by key
/// into the default config) and returns the reset environment.
pub fn make_env(scene_path: &Path, overrides: &Value, seed: u64) -> Result<(Env, Scene, Spaces)> {
    let scene = read_scene(scene_path)?;
    let mut base = serde_json::to_value(EnvConfig::default())?;
    merge(&mut base, overrides)?;
    let config: EnvConfig = serde_json::from_value(base).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut env = Env::new(config)?;
    env.reset(&scene, seed)?;
    let spaces = Spaces {
        obs_dim: config.obs_dim(scene.objects.len()),
        action_dim: config.action_dim(),
        action_low: -config.tau_max,
        action_high: config.tau_max,
        control_frequency: config.control_frequency(),
    };
    Ok((env, scene, spaces))
}

fn merge(base: &mut Value, patch: &Value) -> Result<()> {
    match (base, patch) {
        (_, Value::Null) => Ok(()),
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() => merge(slot, v)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(Error::InvalidConfig(format!("unknown config key {k:?}"))),
                }
            }
            Ok(())
        }
        (_, other) => Err(Error::InvalidConfig(format!("config override must be an object, got {other}"))),
    }
}
