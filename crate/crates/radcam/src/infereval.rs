//! Affinity-matrix inference and uncertain-aware metrics.
//!
//! Inference: per radar pin, the box at the smallest embedding distance,
//! kept only below a threshold. Evaluation: precision/recall/F1 where
//! uncertain ground-truth pairs count as neither true nor false positives.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::EmbeddingSet;
use crate::scenesim::FrameRecord;
use crate::teacher::AssociationSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pair ({0}, {1}) appears in both positive and uncertain ground truth")]
    Overlap(i64, i64),
}

/// Euclidean distances between every pin and box representation.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    pub pin_ids: Vec<i64>,
    pub box_ids: Vec<i64>,
    /// Row-major `|pins| x |boxes|`.
    pub dist: Vec<f64>,
}

impl AffinityMatrix {
    pub fn at(&self, pin_idx: usize, box_idx: usize) -> f64 {
        self.dist[pin_idx * self.box_ids.len() + box_idx]
    }
}

/// Builds the affinity matrix; rows and columns are in ascending id order.
pub fn affinity(emb: &EmbeddingSet) -> AffinityMatrix {
    let pin_ids: Vec<i64> = emb.pin_emb.keys().copied().collect();
    let box_ids: Vec<i64> = emb.box_emb.keys().copied().collect();
    let mut dist = Vec::with_capacity(pin_ids.len() * box_ids.len());
    for p in &pin_ids {
        for b in &box_ids {
            dist.push(emb.distance(*p, *b).expect("ids from the same set"));
        }
    }
    AffinityMatrix {
        pin_ids,
        box_ids,
        dist,
    }
}

/// Per-pin argmin with threshold filtering. Ties break toward the lowest box
/// id; several pins may pick the same box; a pin appears at most once.
pub fn associate(aff: &AffinityMatrix, threshold: f64) -> AssociationSet {
    let mut out = AssociationSet::default();
    let nb = aff.box_ids.len();
    if nb == 0 {
        return out;
    }
    for (pi, pin_id) in aff.pin_ids.iter().enumerate() {
        let mut best: Option<(f64, i64)> = None;
        for (bi, box_id) in aff.box_ids.iter().enumerate() {
            let d = aff.at(pi, bi);
            let better = match best {
                None => true,
                Some((bd, bb)) => d < bd || (d == bd && *box_id < bb),
            };
            if better {
                best = Some((d, *box_id));
            }
        }
        if let Some((d, box_id)) = best {
            if d <= threshold {
                out.pairs.insert((*pin_id, box_id));
                out.scores.insert((*pin_id, box_id), d);
            }
        }
    }
    out
}

/// Counts for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub frame_id: u64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Micro-averaged report with a per-frame breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_frame: Vec<FrameCounts>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_frames(per_frame: Vec<FrameCounts>) -> EvalReport {
        let tp: usize = per_frame.iter().map(|c| c.tp).sum();
        let fp: usize = per_frame.iter().map(|c| c.fp).sum();
        let fn_: usize = per_frame.iter().map(|c| c.fn_).sum();
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            per_frame,
        }
    }
}

/// Classifies one frame's predictions: tp are predicted positives confirmed
/// by `gt_pos`; predictions inside `gt_unc` are excluded from both tp and
/// fp; fn are missed `gt_pos` pairs.
pub fn evaluate(
    frame_id: u64,
    pred: &BTreeSet<(i64, i64)>,
    gt_pos: &BTreeSet<(i64, i64)>,
    gt_unc: &BTreeSet<(i64, i64)>,
) -> Result<FrameCounts, EvalError> {
    if let Some((p, b)) = gt_pos.intersection(gt_unc).next() {
        return Err(EvalError::Overlap(*p, *b));
    }
    let tp = pred.intersection(gt_pos).count();
    let fp = pred
        .iter()
        .filter(|pair| !gt_pos.contains(pair) && !gt_unc.contains(pair))
        .count();
    let fn_ = gt_pos.difference(pred).count();
    Ok(FrameCounts {
        frame_id,
        tp,
        fp,
        fn_,
    })
}

/// Which ground truth to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Against {
    /// Simulator ground truth (`truth_pos`).
    Truth,
    /// Whatever labels the dataset carries (`labels_pos`).
    Labels,
}

/// Scores per-frame predictions over a dataset, micro-averaged.
pub fn evaluate_frames(
    preds: &[(u64, BTreeSet<(i64, i64)>)],
    frames: &[FrameRecord],
    against: Against,
) -> Result<EvalReport, EvalError> {
    let mut per_frame = Vec::with_capacity(frames.len());
    for frame in frames {
        let empty = BTreeSet::new();
        let pred = preds
            .iter()
            .find(|(id, _)| *id == frame.frame_id)
            .map(|(_, p)| p)
            .unwrap_or(&empty);
        let gt = match against {
            Against::Truth => &frame.truth_pos,
            Against::Labels => &frame.labels_pos,
        };
        per_frame.push(evaluate(frame.frame_id, pred, gt, &frame.labels_uncertain)?);
    }
    Ok(EvalReport::from_frames(per_frame))
}
