//! Emit the two scene views for one frame: the image plane with association
//! lines, and the bird's-eye view with truncated frustums.
//!
//! ```bash
//! cargo run --release --example scene_svg
//! ```

use radcam::cli::svg::{scene_bev_svg, scene_image_svg};
use radcam::scenesim::{generate_dataset, mark_uncertain, SimConfig};

fn main() {
    let cfg = SimConfig {
        frames: 1,
        objects_min: 5,
        objects_max: 9,
        ..SimConfig::default()
    };
    let mut frame = generate_dataset(&cfg, 31).unwrap().remove(0);
    frame = mark_uncertain(&frame, cfg.uncertain_depth_window);
    frame.labels_pos = frame.truth_pos.clone();

    let dir = std::env::temp_dir();
    let image_path = dir.join("radcam_scene_image.svg");
    let bev_path = dir.join("radcam_scene_bev.svg");
    std::fs::write(&image_path, scene_image_svg(&frame, None)).unwrap();
    std::fs::write(&bev_path, scene_bev_svg(&frame, None)).unwrap();
    println!(
        "{} associations ({} uncertain)\n{}\n{}",
        frame.labels_pos.len(),
        frame.labels_uncertain.len(),
        image_path.display(),
        bev_path.display()
    );
}
