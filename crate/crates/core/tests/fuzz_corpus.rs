//! Replays the checked-in fuzz corpus through the same parser entry points
//! the fuzz targets drive, with the same assertions.

use std::path::PathBuf;

use softrod::io;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

#[test]
fn scene_json_corpus() {
    let mut accepted = 0;
    for (name, data) in corpus("scene_json") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(scene) = io::scene_from_json(text) {
            accepted += 1;
            let once = io::scene_to_json(&scene).unwrap();
            assert_eq!(once, text, "{name} is not canonical");
            let _ = softrod::planner::plan_waypoints(&scene);
        }
    }
    assert_eq!(accepted, 2);
}

#[test]
fn trajectory_jsonl_corpus() {
    let mut accepted = 0;
    for (name, data) in corpus("trajectory_jsonl") {
        if let Ok(traj) = io::read_trajectory(&data[..]) {
            accepted += 1;
            assert_eq!(io::trajectory_to_string(&traj).unwrap().as_bytes(), &data[..], "{name}");
            let _ = softrod::plot::render_svg(&traj);
        }
    }
    assert_eq!(accepted, 1);
}

#[test]
fn target_string_corpus() {
    for (name, data) in corpus("target_string") {
        let pose = io::parse_target(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!((pose.rotation.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn grid_file_corpus() {
    for (name, data) in corpus("grid_file") {
        let cells = io::parse_grid(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cells.len() >= 2);
    }
}
