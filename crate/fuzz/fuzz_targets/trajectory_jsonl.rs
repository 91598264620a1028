#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(traj) = softrod::io::read_trajectory(data) {
        if let Ok(text) = softrod::io::trajectory_to_string(&traj) {
            let back = softrod::io::read_trajectory(text.as_bytes()).unwrap();
            assert_eq!(softrod::io::trajectory_to_string(&back).unwrap(), text);
        }
        let _ = softrod::plot::render_svg(&traj);
    }
});
