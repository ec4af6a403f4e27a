//! The rule-based teacher on clean and noisy scenes: raw association,
//! purification, and controlled corruption.
//!
//! ```bash
//! cargo run --release --example teacher_baseline
//! ```

use std::collections::BTreeSet;

use radcam::infereval::{evaluate_frames, Against};
use radcam::scenesim::{generate_dataset, SensorNoiseConfig, SimConfig};
use radcam::teacher::{teach_frames, TeacherConfig};

fn score(frames: &[radcam::scenesim::FrameRecord], labeled: &[radcam::scenesim::FrameRecord]) -> (f64, f64, f64) {
    let preds: Vec<(u64, BTreeSet<(i64, i64)>)> = labeled
        .iter()
        .map(|f| (f.frame_id, f.labels_pos.clone()))
        .collect();
    let r = evaluate_frames(&preds, frames, Against::Truth).unwrap();
    (r.precision, r.recall, r.f1)
}

fn main() {
    let teacher = TeacherConfig::default();

    let clean_cfg = SimConfig {
        frames: 60,
        noise: SensorNoiseConfig::none(),
        min_separation: 3.0,
        ..SimConfig::default()
    };
    let clean = generate_dataset(&clean_cfg, 5).unwrap();
    let (p, r, f1) = score(&clean, &teach_frames(&clean, &teacher, 5));
    println!("noiseless scenes:  {p:.3} / {r:.3} / {f1:.3} (P/R/F1)");

    let noisy_cfg = SimConfig {
        frames: 200,
        ..SimConfig::default()
    };
    let noisy = generate_dataset(&noisy_cfg, 9).unwrap();
    let (p, r, f1) = score(&noisy, &teach_frames(&noisy, &teacher, 9));
    println!("default noise:     {p:.3} / {r:.3} / {f1:.3}");

    // Corruption dials the teacher down to a target regime.
    let mut corrupted = teacher.clone();
    corrupted.corruption.enabled = true;
    corrupted.corruption.flip_prob = 0.3;
    let (p, r, f1) = score(&noisy, &teach_frames(&noisy, &corrupted, 9));
    println!("flip_prob = 0.30:  {p:.3} / {r:.3} / {f1:.3}");

    if let Some((flip, report)) =
        radcam::teacher::calibrate_flip_prob(&noisy, &teacher, 9, 0.75, 0.85)
    {
        println!(
            "calibrated flip_prob {:.3} lands the teacher at F1 {:.3}",
            flip, report.f1
        );
    }
}
