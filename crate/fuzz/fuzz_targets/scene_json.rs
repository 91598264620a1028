#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(scene) = softrod::io::scene_from_json(text) {
            // anything accepted must re-serialize to a fixed point
            let once = softrod::io::scene_to_json(&scene).unwrap();
            let again = softrod::io::scene_to_json(&softrod::io::scene_from_json(&once).unwrap()).unwrap();
            assert_eq!(once, again);
            let _ = softrod::planner::plan_waypoints(&scene);
        }
    }
});
