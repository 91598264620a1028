//! SVG rod-shadow figure: the arm centerline at evenly sampled steps of a
//! trajectory, drawn in a front (x-z) and a side (y-z) panel.

use std::fmt::Write;

use crate::scene::mount_pose;
use crate::trajectory::Trajectory;

pub const MAX_SHADOWS: usize = 50;

/// Indices of at most `max` evenly spaced steps, always including the last.
pub fn sample_steps(n: usize, max: usize) -> Vec<usize> {
    if n == 0 || max == 0 {
        return Vec::new();
    }
    if n <= max {
        return (0..n).collect();
    }
    let mut out: Vec<usize> = (0..max).map(|k| k * (n - 1) / (max - 1).max(1)).collect();
    out.dedup();
    out
}

pub fn render_svg(traj: &Trajectory) -> String {
    let panel = 360.0;
    let margin = 20.0;
    let (w, h) = (2.0 * panel + 3.0 * margin, panel + 2.0 * margin + 20.0);
    // world window: 1.2 m wide, from the table to just above the mount
    let span = 1.2;
    let mount = mount_pose().translation;
    let to_px = |panel_x0: f64, u: f64, z: f64| {
        let px = panel_x0 + (u + span / 2.0) / span * panel;
        let py = margin + 20.0 + (mount.z + 0.1 - z) / span * panel;
        (px, py)
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let picks = sample_steps(traj.steps.len(), MAX_SHADOWS);
    for (panel_idx, (label, axis)) in [("front x-z", 0usize), ("side y-z", 1usize)].into_iter().enumerate() {
        let x0 = margin + panel_idx as f64 * (panel + margin);
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#, margin + 10.0);
        let _ = writeln!(svg, r##"<rect x="{x0}" y="{}" width="{panel}" height="{panel}" fill="none" stroke="#999"/>"##, margin + 20.0);
        let (tx0, ty) = to_px(x0, -span / 2.0, 0.0);
        let (tx1, _) = to_px(x0, span / 2.0, 0.0);
        let _ = writeln!(svg, r##"<line x1="{tx0:.2}" y1="{ty:.2}" x2="{tx1:.2}" y2="{ty:.2}" stroke="#654" stroke-width="2"/>"##);
        for (k, &i) in picks.iter().enumerate() {
            let obs = &traj.steps[i].observation;
            let opacity = 0.15 + 0.85 * (k + 1) as f64 / picks.len() as f64;
            let mut pts = vec![to_px(x0, mount[axis], mount.z)];
            pts.extend(obs.segment_positions.iter().map(|p| to_px(x0, p[axis], p[2])));
            let e = obs.eef_pose.translation;
            pts.push(to_px(x0, e[axis], e.z));
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#1f5fa8" stroke-opacity="{opacity:.3}" stroke-width="2"/>"##,
                path.join(" ")
            );
        }
        if let Some(obs) = traj.steps.last().and_then(|s| s.observation.target_pose) {
            let (x, y) = to_px(x0, obs.translation[axis], obs.translation.z);
            let _ = writeln!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="#c33"/>"##);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_caps_and_keeps_ends() {
        assert_eq!(sample_steps(3, 50), vec![0, 1, 2]);
        let s = sample_steps(1500, 50);
        assert_eq!(s.len(), 50);
        assert_eq!((s[0], *s.last().unwrap()), (0, 1499));
        assert!(sample_steps(0, 50).is_empty());
    }
}
