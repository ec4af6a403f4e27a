//! The rule-based association baseline.
//!
//! It gates pin/box pairs by frustum containment and IPM depth agreement,
//! scores the survivors by normalized image-plane distance to the box
//! bottom-center, and greedily assigns each pin to its cheapest box. Its
//! purified output is the training supervision for the learned associator;
//! an optional corruption stage injects systematic errors so teacher quality
//! can be dialed to a target regime.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geom::{frustum, ipm_ground, project, PixelCoord};
use crate::rng::Rng;
use crate::scenesim::FrameRecord;

/// A set of (pin, box) assignments with the candidate costs that produced
/// them. `scores` keeps every gated candidate, not only the selected pairs,
/// so downstream filters can reason about margins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationSet {
    pub pairs: BTreeSet<(i64, i64)>,
    pub scores: BTreeMap<(i64, i64), f64>,
}

impl AssociationSet {
    pub fn from_pairs<I: IntoIterator<Item = (i64, i64)>>(iter: I) -> Self {
        AssociationSet {
            pairs: iter.into_iter().collect(),
            scores: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Each pin may appear at most once; boxes may repeat.
    pub fn satisfies_cardinality(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.pairs.iter().all(|(p, _)| seen.insert(*p))
    }

    /// Gated candidate costs for one pin, ascending.
    pub fn candidates_of(&self, pin_id: i64) -> Vec<(i64, f64)> {
        let mut v: Vec<(i64, f64)> = self
            .scores
            .range((pin_id, i64::MIN)..=(pin_id, i64::MAX))
            .map(|((_, b), c)| (*b, *c))
            .collect();
        v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        v
    }
}

/// Systematic error injection: inside the depth region, each teacher pair is
/// re-pointed to the adjacent wrong box with probability `flip_prob`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub enabled: bool,
    pub depth_min: f64,
    pub depth_max: f64,
    pub flip_prob: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            enabled: false,
            depth_min: 15.0,
            depth_max: 60.0,
            flip_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    /// Pins whose best candidate costs more than this stay unassociated.
    pub gate_cost_max: f64,
    /// Minimum cost margin to the pin's second-best candidate.
    pub purify_margin: f64,
    /// Elevation used when projecting pins for the image-plane cost; zero
    /// puts the pin on the object's ground line.
    pub assumed_height: f64,
    /// Candidate gate: |IPM box depth - pin depth| must be below this.
    pub depth_window: f64,
    /// Purify drops pairs whose pin has a lower obstacle probability.
    pub min_obstacle_prob: f64,
    pub corruption: CorruptionConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            gate_cost_max: 1.0,
            purify_margin: 0.15,
            assumed_height: 0.0,
            depth_window: 10.0,
            min_obstacle_prob: 0.3,
            corruption: CorruptionConfig::default(),
        }
    }
}

/// Projected pixel and ground depth of every pin, after temporal alignment.
fn pin_views(frame: &FrameRecord, assumed_height: f64) -> BTreeMap<i64, (PixelCoord, f64)> {
    let mut out = BTreeMap::new();
    for pin in &frame.pins {
        let Ok(cam) = frame.pin_camera(pin, assumed_height) else {
            continue;
        };
        let Ok(px) = project(cam, &frame.intrinsics) else {
            continue;
        };
        let Ok(ground) = frame.pin_ground(pin) else {
            continue;
        };
        out.insert(pin.id, (px, ground.z));
    }
    out
}

/// Greedy rule-based association: per pin, the cheapest gated candidate.
pub fn associate_rule_based(frame: &FrameRecord, cfg: &TeacherConfig) -> AssociationSet {
    let mut assoc = AssociationSet::default();
    if frame.pins.is_empty() || frame.boxes.is_empty() {
        return assoc;
    }
    let cam_h = frame.cam_height();
    let views = pin_views(frame, cfg.assumed_height);
    for b in &frame.boxes {
        let Ok(fr) = frustum(b, &frame.intrinsics, cam_h) else {
            continue;
        };
        let Ok(box_ground) = ipm_ground(
            PixelCoord {
                u: b.center_x,
                v: b.y_max(),
            },
            &frame.intrinsics,
            cam_h,
        ) else {
            continue;
        };
        for pin in &frame.pins {
            let Some((px, depth)) = views.get(&pin.id) else {
                continue;
            };
            let Ok(ground) = frame.pin_ground(pin) else {
                continue;
            };
            if !fr.contains(ground) {
                continue;
            }
            if (box_ground.z - depth).abs() >= cfg.depth_window {
                continue;
            }
            let cost =
                (px.u - b.center_x).abs() / b.width + (px.v - b.y_max()).abs() / b.height;
            assoc.scores.insert((pin.id, b.id), cost);
        }
    }
    for pin in &frame.pins {
        let cands = assoc.candidates_of(pin.id);
        if let Some((box_id, cost)) = cands.first() {
            if *cost <= cfg.gate_cost_max {
                assoc.pairs.insert((pin.id, *box_id));
            }
        }
    }
    assoc
}

/// Drops low-confidence pairs: cost margin to the pin's second-best
/// candidate below `purify_margin`, or pin obstacle probability below
/// `min_obstacle_prob`. Output pairs are a subset of the input; candidate
/// scores pass through untouched, which makes the filter idempotent.
pub fn purify(assoc: &AssociationSet, frame: &FrameRecord, cfg: &TeacherConfig) -> AssociationSet {
    let mut out = assoc.clone();
    out.pairs.retain(|(pin_id, box_id)| {
        if let Some(pin) = frame.pin_by_id(*pin_id) {
            if pin.obstacle_prob < cfg.min_obstacle_prob {
                return false;
            }
        }
        let cands = assoc.candidates_of(*pin_id);
        if cands.len() >= 2 {
            let best = cands
                .iter()
                .find(|(b, _)| b == box_id)
                .map(|(_, c)| *c)
                .unwrap_or(cands[0].1);
            let second = cands
                .iter()
                .find(|(b, _)| b != box_id)
                .map(|(_, c)| *c)
                .expect("len >= 2");
            if second - best < cfg.purify_margin {
                return false;
            }
        }
        true
    });
    out
}

/// Re-points pairs inside the configured depth region to the pin's next-best
/// candidate box with probability `flip_prob` (dropping the pair when no
/// alternative exists). Deterministic given the generator state.
pub fn corrupt(
    assoc: &AssociationSet,
    frame: &FrameRecord,
    cfg: &TeacherConfig,
    rng: &mut Rng,
) -> AssociationSet {
    let mut out = assoc.clone();
    if !cfg.corruption.enabled || cfg.corruption.flip_prob <= 0.0 {
        return out;
    }
    let c = &cfg.corruption;
    for (pin_id, box_id) in assoc.pairs.iter().copied().collect::<Vec<_>>() {
        let Some(pin) = frame.pin_by_id(pin_id) else {
            continue;
        };
        let Ok(ground) = frame.pin_ground(pin) else {
            continue;
        };
        if ground.z < c.depth_min || ground.z > c.depth_max {
            continue;
        }
        if !rng.bernoulli(c.flip_prob) {
            continue;
        }
        out.pairs.remove(&(pin_id, box_id));
        let adjacent = assoc
            .candidates_of(pin_id)
            .into_iter()
            .find(|(b, _)| *b != box_id);
        if let Some((other, _)) = adjacent {
            out.pairs.insert((pin_id, other));
        }
    }
    out
}

/// Runs the full teacher pipeline (associate, purify, optional corruption)
/// over a dataset and rewrites each frame's `labels_pos` with the result.
/// `truth_pos` and `labels_uncertain` pass through untouched.
pub fn teach_frames(frames: &[FrameRecord], cfg: &TeacherConfig, seed: u64) -> Vec<FrameRecord> {
    frames
        .iter()
        .map(|frame| {
            let assoc = associate_rule_based(frame, cfg);
            let assoc = purify(&assoc, frame, cfg);
            let assoc = if cfg.corruption.enabled {
                let mut rng = Rng::new(crate::rng::seed_for(seed, frame.frame_id));
                corrupt(&assoc, frame, cfg, &mut rng)
            } else {
                assoc
            };
            let mut out = frame.clone();
            out.labels_pos = assoc.pairs;
            out
        })
        .collect()
}

/// Sweeps corruption flip probabilities until the teacher's F1 against
/// `truth_pos` lands inside `[f1_lo, f1_hi]`; returns the probability and
/// the measured report. The sweep walks upward from zero, so it finds the
/// mildest corruption reaching the target regime.
pub fn calibrate_flip_prob(
    frames: &[FrameRecord],
    base: &TeacherConfig,
    seed: u64,
    f1_lo: f64,
    f1_hi: f64,
) -> Option<(f64, crate::infereval::EvalReport)> {
    let mut p = 0.0;
    while p <= 0.9 + 1e-9 {
        let mut cfg = base.clone();
        cfg.corruption.enabled = true;
        cfg.corruption.flip_prob = p;
        let labeled = teach_frames(frames, &cfg, seed);
        let preds: Vec<(u64, BTreeSet<(i64, i64)>)> = labeled
            .iter()
            .map(|f| (f.frame_id, f.labels_pos.clone()))
            .collect();
        let report =
            crate::infereval::evaluate_frames(&preds, frames, crate::infereval::Against::Truth)
                .expect("disjoint ground truth by construction");
        if report.f1 >= f1_lo && report.f1 <= f1_hi {
            return Some((p, report));
        }
        if report.f1 < f1_lo {
            // Already below the window; stronger corruption only hurts.
            return None;
        }
        p += 0.025;
    }
    None
}
