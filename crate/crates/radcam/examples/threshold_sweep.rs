//! How the association threshold trades precision against recall for a
//! quickly trained model.
//!
//! ```bash
//! cargo run --release --example threshold_sweep
//! ```

use std::collections::BTreeSet;

use radcam::encode::GridSpec;
use radcam::infereval::{affinity, associate, evaluate_frames, Against};
use radcam::learn::{infer_embeddings, train, LossConfig, TrainConfig};
use radcam::nnet::{Network, NetworkConfig};
use radcam::scenesim::{generate_dataset, mark_uncertain, SimConfig};

fn main() {
    let sim = SimConfig {
        frames: 60,
        ..SimConfig::default()
    };
    let mut frames: Vec<_> = generate_dataset(&sim, 8)
        .unwrap()
        .iter()
        .map(|f| {
            let mut m = mark_uncertain(f, sim.uncertain_depth_window);
            m.labels_pos = m.truth_pos.clone();
            m
        })
        .collect();
    let test = frames.split_off(40);

    let grid = GridSpec::new(96, 48, sim.sensors.img_w, sim.sensors.img_h);
    let mut net: Network<f32> = Network::new(NetworkConfig {
        base_channels: 8,
        out_channels: 8,
        weight_init_seed: 1,
        ..NetworkConfig::default()
    })
    .unwrap();
    let tcfg = TrainConfig {
        total_iters: 300,
        seed: 1,
        ..TrainConfig::default()
    };
    train(&mut net, &frames, &grid, &LossConfig::default(), &tcfg).unwrap();

    let embeddings = infer_embeddings(&net, &test, &grid, 0.5).unwrap();
    println!("threshold  precision  recall  f1");
    for step in 0..=12 {
        let th = step as f64;
        let preds: Vec<(u64, BTreeSet<(i64, i64)>)> = embeddings
            .iter()
            .map(|(id, emb)| (*id, associate(&affinity(emb), th).pairs))
            .collect();
        let r = evaluate_frames(&preds, &test, Against::Truth).unwrap();
        println!("{th:9.1}  {:9.3}  {:6.3}  {:5.3}", r.precision, r.recall, r.f1);
    }
}
