use radcam::encode::GridSpec;
use radcam::infereval::{affinity, associate, evaluate_frames, Against};
use radcam::learn::{infer_embeddings, train, LossConfig, TrainConfig};
use radcam::nnet::{Network, NetworkConfig};
use radcam::scenesim::{generate_dataset, mark_uncertain, SimConfig};
use std::collections::BTreeSet;

fn main() {
    let objects_max: usize = std::env::var("OBJ_MAX").ok().and_then(|v| v.parse().ok()).unwrap_or(6);
    let x_max: f64 = std::env::var("X_MAX").ok().and_then(|v| v.parse().ok()).unwrap_or(55.0);
    let min_sep: f64 = std::env::var("MIN_SEP").ok().and_then(|v| v.parse().ok()).unwrap_or(2.5);
    let sim = SimConfig { frames: 360, x_min: 8.0, x_max, objects_max, min_separation: min_sep, ..SimConfig::default() };
    let frames = generate_dataset(&sim, 100).unwrap();
    let mut frames: Vec<_> = frames.iter().map(|f| {
        let mut m = mark_uncertain(f, 2.0);
        m.labels_pos = m.truth_pos.clone();
        m
    }).collect();
    let test = frames.split_off(280);

    let gw: usize = std::env::var("GW").ok().and_then(|v| v.parse().ok()).unwrap_or(128);
    let gh: usize = std::env::var("GH").ok().and_then(|v| v.parse().ok()).unwrap_or(64);
    let grid = GridSpec::new(gw, gh, sim.sensors.img_w, sim.sensors.img_h);
    let c: usize = std::env::var("CBASE").ok().and_then(|v| v.parse().ok()).unwrap_or(16);
    let mut net: Network<f32> = Network::new(NetworkConfig { base_channels: c, out_channels: c, weight_init_seed: 1, ..NetworkConfig::default() }).unwrap();
    let w_ord: f64 = std::env::var("W_ORD").ok().and_then(|v| v.parse().ok()).unwrap_or(2.0);
    let ratio: f64 = std::env::var("RATIO").ok().and_then(|v| v.parse().ok()).unwrap_or(1.0);
    let lcfg = LossConfig { w_ord, sample_ratio: ratio, ..LossConfig::default() };
    let iters: usize = std::env::var("ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(900);
    let tc = TrainConfig { total_iters: iters, seed: 1, ..TrainConfig::default() };
    let log = train(&mut net, &frames, &grid, &lcfg, &tc).unwrap();
    let last = log.last().unwrap();
    println!("final: pull {:.4} push {:.4}", last.pull, last.push);

    let emb = infer_embeddings(&net, &test, &grid, 0.5).unwrap();
    let preds: Vec<(u64, BTreeSet<(i64,i64)>)> = emb.iter().map(|(id, e)| (*id, associate(&affinity(e), 5.0).pairs)).collect();
    let r = evaluate_frames(&preds, &test, Against::Truth).unwrap();
    println!("test F1 {:.3} (P {:.3} R {:.3})", r.f1, r.precision, r.recall);

    // Failure anatomy: bucket missed truth pairs by pin depth.
    let mut missed = [0usize; 5];
    let mut totals = [0usize; 5];
    for (f, (_, pairs)) in test.iter().zip(&preds) {
        for (pid, bid) in &f.truth_pos {
            let pin = f.pin_by_id(*pid).unwrap();
            let z = f.pin_ground(pin).unwrap().z;
            let bucket = ((z / 20.0) as usize).min(4);
            totals[bucket] += 1;
            if !pairs.contains(&(*pid, *bid)) {
                missed[bucket] += 1;
            }
        }
    }
    for (i, (m, t)) in missed.iter().zip(&totals).enumerate() {
        println!("depth {:>3}-{:>3} m: {:>4}/{:<4} missed", i*20, (i+1)*20, m, t);
    }
    // Anatomy of misses: who stole the pin, and at what distance?
    let mut stolen_by_uncertain = 0usize;
    let mut stolen_by_other = 0usize;
    let mut over_threshold = 0usize;
    let mut no_anchor = 0usize;
    for (f, (_, e)) in test.iter().zip(&emb) {
        let aff = affinity(e);
        let cands = associate(&aff, f64::INFINITY);
        for (pid, bid) in &f.truth_pos {
            if preds.iter().find(|(id, _)| *id == f.frame_id).map(|(_, p)| p.contains(&(*pid, *bid))).unwrap_or(false) {
                continue;
            }
            if !e.pin_emb.contains_key(pid) || !e.box_emb.contains_key(bid) {
                no_anchor += 1;
                continue;
            }
            let pred_pair = cands.pairs.iter().find(|(p, _)| p == pid);
            match pred_pair {
                Some(&(p, b)) => {
                    let d = cands.scores[&(p, b)];
                    if d > 5.0 {
                        over_threshold += 1;
                    } else if f.labels_uncertain.contains(&(p, b)) {
                        stolen_by_uncertain += 1;
                    } else {
                        stolen_by_other += 1;
                    }
                }
                None => no_anchor += 1,
            }
        }
    }
    println!("misses: {} stolen by uncertain, {} stolen by wrong box, {} over threshold, {} unanchored",
        stolen_by_uncertain, stolen_by_other, over_threshold, no_anchor);
}
