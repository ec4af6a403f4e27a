//! Generate a small synthetic dataset and inspect what a frame contains.
//!
//! ```bash
//! cargo run --release --example generate_scenes
//! ```

use radcam::scenesim::{generate_dataset, mark_uncertain, SimConfig};

fn main() {
    let cfg = SimConfig {
        frames: 24,
        ..SimConfig::default()
    };
    let frames = generate_dataset(&cfg, 42).expect("valid default config");

    let pins: usize = frames.iter().map(|f| f.pins.len()).sum();
    let boxes: usize = frames.iter().map(|f| f.boxes.len()).sum();
    let truth: usize = frames.iter().map(|f| f.truth_pos.len()).sum();
    println!(
        "{} frames: {pins} pins, {boxes} boxes, {truth} truth associations",
        frames.len()
    );

    let marked = mark_uncertain(&frames[0], cfg.uncertain_depth_window);
    println!("\nframe 0 at t = {:.2} s (radar at {:.3} s):", marked.t_camera, marked.t_radar);
    for pin in &marked.pins {
        let ground = marked.pin_ground(pin).unwrap();
        println!(
            "  pin {:>5}  prob {:.2}  bev ({:6.1}, {:6.1}) m  depth {:6.1} m",
            pin.id, pin.obstacle_prob, pin.pos_x, pin.pos_y, ground.z
        );
    }
    for b in &marked.boxes {
        println!(
            "  box {:>5}  {:<10} center ({:6.1}, {:6.1}) px  {:4.0}x{:4.0} px",
            b.id,
            b.category.name(),
            b.center_x,
            b.center_y,
            b.width,
            b.height
        );
    }
    println!("  truth pairs:     {:?}", marked.truth_pos);
    println!("  uncertain pairs: {:?}", marked.labels_uncertain);
}
