//! End-to-end miniature run: generate scenes, label them with the teacher,
//! train the association network on those (noisy) labels, and score both
//! against the simulator truth.
//!
//! Takes a couple of minutes on one CPU core.
//!
//! ```bash
//! cargo run --release --example train_and_eval
//! ```

use std::collections::BTreeSet;

use radcam::encode::GridSpec;
use radcam::infereval::{affinity, associate, evaluate_frames, Against};
use radcam::learn::{infer_embeddings, train, LossConfig, TrainConfig};
use radcam::nnet::{Network, NetworkConfig};
use radcam::scenesim::{generate_dataset, mark_uncertain, SimConfig};
use radcam::teacher::{teach_frames, TeacherConfig};

fn main() {
    let sim = SimConfig {
        frames: 120,
        ..SimConfig::default()
    };
    let frames = generate_dataset(&sim, 20).unwrap();
    let frames: Vec<_> = frames
        .iter()
        .map(|f| mark_uncertain(f, sim.uncertain_depth_window))
        .collect();
    let (train_raw, test_raw) = frames.split_at(100);
    let mut test: Vec<_> = test_raw.to_vec();
    for f in &mut test {
        f.labels_pos = f.truth_pos.clone();
    }

    // Teacher labels for the training split.
    let teacher_cfg = TeacherConfig::default();
    let labeled = teach_frames(train_raw, &teacher_cfg, 20);
    let teacher_on_test = teach_frames(&test, &teacher_cfg, 20);
    let teacher_preds: Vec<(u64, BTreeSet<(i64, i64)>)> = teacher_on_test
        .iter()
        .map(|f| (f.frame_id, f.labels_pos.clone()))
        .collect();
    let teacher_report = evaluate_frames(&teacher_preds, &test, Against::Truth).unwrap();

    // A small, fast network for the demo.
    let grid = GridSpec::new(96, 48, sim.sensors.img_w, sim.sensors.img_h);
    let mut net: Network<f32> = Network::new(NetworkConfig {
        base_channels: 8,
        out_channels: 8,
        weight_init_seed: 3,
        ..NetworkConfig::default()
    })
    .unwrap();
    let tcfg = TrainConfig {
        total_iters: 400,
        seed: 3,
        ..TrainConfig::default()
    };
    println!("training {} iterations on {} teacher-labeled frames...", tcfg.total_iters, labeled.len());
    let log = train(&mut net, &labeled, &grid, &LossConfig::default(), &tcfg).unwrap();
    let last = log.last().unwrap();
    println!(
        "final losses: pull {:.4}  push {:.4}  ord {:.4}",
        last.pull, last.push, last.ord
    );

    let threshold = 5.0;
    let embeddings = infer_embeddings(&net, &test, &grid, 0.5).unwrap();
    let student_preds: Vec<(u64, BTreeSet<(i64, i64)>)> = embeddings
        .iter()
        .map(|(id, emb)| (*id, associate(&affinity(emb), threshold).pairs))
        .collect();
    let student_report = evaluate_frames(&student_preds, &test, Against::Truth).unwrap();

    println!("\n{:<14} | Precision / Recall / F1", "Algorithm");
    println!("{:-<14}-+------------------------", "");
    for (name, r) in [("Rule-based", &teacher_report), ("Learning-based", &student_report)] {
        println!("{:<14} | {:.3} / {:.3} / {:.3}", name, r.precision, r.recall, r.f1);
    }
}
