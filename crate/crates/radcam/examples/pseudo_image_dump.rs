//! Build the 14-channel pseudo-image for one frame and dump a PNG contact
//! sheet of its channels.
//!
//! ```bash
//! cargo run --release --example pseudo_image_dump
//! ```

use radcam::encode::{build_pseudo_image, dump_contact_sheet, GridSpec, CHANNELS};
use radcam::scenesim::{generate_dataset, render_rgb, SimConfig};

fn main() {
    let cfg = SimConfig {
        frames: 1,
        objects_min: 5,
        objects_max: 8,
        ..SimConfig::default()
    };
    let frame = generate_dataset(&cfg, 123).unwrap().remove(0);
    let grid = GridSpec::default();
    let rgb = render_rgb(&frame, grid.grid_w, grid.grid_h);
    let img = build_pseudo_image(&frame, &grid, 0.5, &rgb).unwrap();

    println!(
        "{} channels on a {}x{} grid; {} pin anchors, {} box anchors",
        CHANNELS,
        grid.grid_w,
        grid.grid_h,
        img.pin_anchors.len(),
        img.box_anchors.len()
    );
    if !img.dropped_pins.is_empty() {
        println!("dropped pins (outside grid): {:?}", img.dropped_pins);
    }
    for note in &img.collisions {
        println!(
            "anchor collision: {:?} {} -> {:?}",
            note.kind, note.id, note.moved_to
        );
    }

    let out = std::env::temp_dir().join("radcam_contact_sheet.png");
    dump_contact_sheet(&img, &out).unwrap();
    println!("contact sheet -> {}", out.display());
}
