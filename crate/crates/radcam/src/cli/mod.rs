//! Command implementations behind the `radcam` binary: dataset generation,
//! teacher labeling, training, inference, evaluation, plotting, and sweeps.
//!
//! Every command is a pure function of (config, seed, inputs): outputs are
//! byte-identical across repeated runs, and the effective merged config is
//! written next to the outputs for provenance.

pub mod svg;

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encode::GridSpec;
use crate::infereval::{self, Against, EvalReport};
use crate::learn::{self, LossConfig, TrainConfig};
use crate::nnet::{checkpoint, Network, NetworkConfig};
use crate::scenesim::{
    generate_dataset, mark_uncertain, read_dataset, write_dataset, FrameRecord, SimConfig,
    SimError,
};
use crate::teacher::{self, TeacherConfig};

pub const PREDICTIONS_SCHEMA: &str = "radcam-pred/1";

/// Exit codes: 0 success, 2 config, 3 io/data, 4 divergence.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ConfigInvalid { .. } => CliError::Config(e.to_string()),
            SimError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<learn::LearnError> for CliError {
    fn from(e: learn::LearnError) -> Self {
        match e {
            learn::LearnError::Divergence { .. } => CliError::Divergence(e.to_string()),
            learn::LearnError::Config { .. } | learn::LearnError::EmptyDataset => {
                CliError::Config(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<crate::nnet::NnError> for CliError {
    fn from(e: crate::nnet::NnError) -> Self {
        match e {
            crate::nnet::NnError::Io { .. } => CliError::Io(e.to_string()),
            crate::nnet::NnError::Config { .. } => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_err<E: std::fmt::Display>(path: &Path, e: E) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Composite run configuration
// ---------------------------------------------------------------------------

/// Frame counts per split; splits are contiguous frame-id ranges.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_frames: usize,
    pub val_frames: usize,
    pub test_frames: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frames: 400,
            val_frames: 50,
            test_frames: 100,
        }
    }
}

/// Everything a run needs, loadable from one JSON file with flag overrides
/// applied on top.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub split: SplitConfig,
    pub sim: SimConfig,
    pub teacher: TeacherConfig,
    pub grid: GridSpec,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    /// Inference association threshold; defaults to the margin midpoint
    /// (m1 + m2) / 2.
    pub assoc_threshold: f64,
}

impl RunConfig {
    pub fn desk_default() -> Self {
        RunConfig {
            assoc_threshold: 5.0,
            ..RunConfig::default()
        }
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::desk_default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Writes the effective merged config next to the outputs.
    pub fn write_effective(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = out_dir.join("effective_config.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }
}

// ---------------------------------------------------------------------------
// Predictions file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PredHeader {
    schema: String,
    threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct PredCandidate {
    pin: i64,
    #[serde(rename = "box")]
    box_id: i64,
    dist: f64,
}

#[derive(Serialize, Deserialize)]
struct PredLine {
    frame_id: u64,
    candidates: Vec<PredCandidate>,
}

/// Per-frame argmin candidates with distances, plus the threshold the run
/// was configured with.
pub struct Predictions {
    pub threshold: f64,
    pub frames: Vec<(u64, Vec<(i64, i64, f64)>)>,
}

impl Predictions {
    /// Associations at a threshold: candidates with `dist <= threshold`.
    pub fn pairs_at(&self, threshold: f64) -> Vec<(u64, BTreeSet<(i64, i64)>)> {
        self.frames
            .iter()
            .map(|(id, cands)| {
                (
                    *id,
                    cands
                        .iter()
                        .filter(|(_, _, d)| *d <= threshold)
                        .map(|(p, b, _)| (*p, *b))
                        .collect(),
                )
            })
            .collect()
    }
}

pub fn write_predictions(preds: &Predictions, path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header = serde_json::to_string(&PredHeader {
        schema: PREDICTIONS_SCHEMA.into(),
        threshold: preds.threshold,
    })
    .expect("header serializes");
    writeln!(w, "{header}").map_err(|e| io_err(path, e))?;
    for (frame_id, cands) in &preds.frames {
        let line = PredLine {
            frame_id: *frame_id,
            candidates: cands
                .iter()
                .map(|(p, b, d)| PredCandidate {
                    pin: *p,
                    box_id: *b,
                    dist: *d,
                })
                .collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&line).expect("serializes"))
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Predictions, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty predictions file", path.display())))?
        .map_err(|e| io_err(path, e))?;
    let header: PredHeader = serde_json::from_str(&header_line)
        .map_err(|e| CliError::Data(format!("{}: bad header: {e}", path.display())))?;
    if header.schema != PREDICTIONS_SCHEMA {
        return Err(CliError::Data(format!(
            "{}: schema `{}`, expected `{PREDICTIONS_SCHEMA}`",
            path.display(),
            header.schema
        )));
    }
    let mut frames = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredLine = serde_json::from_str(&line).map_err(|e| {
            CliError::Data(format!("{}: line {}: {e}", path.display(), idx + 2))
        })?;
        frames.push((
            parsed.frame_id,
            parsed
                .candidates
                .into_iter()
                .map(|c| (c.pin, c.box_id, c.dist))
                .collect(),
        ));
    }
    Ok(Predictions {
        threshold: header.threshold,
        frames,
    })
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct ManifestSplit {
    pub name: String,
    pub path: String,
    pub frames: usize,
    pub first_frame_id: u64,
}

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub splits: Vec<ManifestSplit>,
}

/// Generates train/val/test splits (contiguous frame-id ranges), marks
/// uncertain pairs everywhere, copies truth into `labels_pos` on val/test,
/// and writes a manifest.
pub fn cmd_gen(config: &RunConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let counts = [
        ("train", config.split.train_frames),
        ("val", config.split.val_frames),
        ("test", config.split.test_frames),
    ];
    let total: usize = counts.iter().map(|(_, n)| n).sum();
    let mut sim = config.sim.clone();
    sim.frames = total;
    let frames = generate_dataset(&sim, config.seed)?;
    let delta = sim.uncertain_depth_window;
    let mut manifest = Manifest {
        seed: config.seed,
        splits: Vec::new(),
    };
    let mut offset = 0usize;
    for (name, n) in counts {
        let slice = &frames[offset..offset + n];
        let records: Vec<FrameRecord> = slice
            .iter()
            .map(|f| {
                let mut m = mark_uncertain(f, delta);
                if name != "train" {
                    // Clean ground truth on evaluation splits; the train
                    // split is labeled by the teacher.
                    m.labels_pos = m.truth_pos.clone();
                }
                m
            })
            .collect();
        let path = out_dir.join(format!("{name}.jsonl"));
        write_dataset(&records, &path)?;
        manifest.splits.push(ManifestSplit {
            name: name.to_string(),
            path: path.display().to_string(),
            frames: n,
            first_frame_id: offset as u64,
        });
        offset += n;
    }
    let manifest_path = out_dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("serializes") + "\n",
    )
    .map_err(|e| io_err(&manifest_path, e))?;
    config.write_effective(out_dir)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// teach
// ---------------------------------------------------------------------------

fn read_nonempty_dataset(path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    let frames = read_dataset(path)?;
    if frames.is_empty() {
        return Err(CliError::Config(format!(
            "EmptyDataset: {} holds no frames",
            path.display()
        )));
    }
    Ok(frames)
}

/// Runs the teacher over a dataset, writes the same schema with `labels_pos`
/// replaced by (purified, optionally corrupted) teacher output, and reports
/// the teacher's own quality against the simulator truth.
pub fn cmd_teach(
    dataset: &Path,
    config: &RunConfig,
    out: &Path,
) -> Result<EvalReport, CliError> {
    let frames = read_nonempty_dataset(dataset)?;
    let labeled = teacher::teach_frames(&frames, &config.teacher, config.seed);
    write_dataset(&labeled, out)?;
    let preds: Vec<(u64, BTreeSet<(i64, i64)>)> = labeled
        .iter()
        .map(|f| (f.frame_id, f.labels_pos.clone()))
        .collect();
    let report = infereval::evaluate_frames(&preds, &frames, Against::Truth)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let metrics_path = out.with_extension("metrics.json");
    fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&report).expect("serializes") + "\n",
    )
    .map_err(|e| io_err(&metrics_path, e))?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            config.write_effective(dir)?;
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainArtifacts {
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub final_loss: Option<f64>,
}

pub fn write_train_log(rows: &[learn::TrainRow], path: &Path) -> Result<(), CliError> {
    let mut text = String::from("iter,lr,pull,push,ord,total,seconds\n");
    for r in rows {
        text.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.4}\n",
            r.iter, r.lr, r.pull, r.push, r.ord, r.total, r.seconds
        ));
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Trains a fresh network on a labeled dataset; writes the final checkpoint,
/// the CSV training log, and the effective config.
pub fn cmd_train(dataset: &Path, config: &RunConfig, out_dir: &Path) -> Result<TrainArtifacts, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let frames = read_nonempty_dataset(dataset)?;
    let mut net: Network<f32> = Network::new(config.network.clone())?;
    let log = learn::train(&mut net, &frames, &config.grid, &config.loss, &config.train)?;
    let model_path = out_dir.join("model.json");
    checkpoint::save(&net, &model_path)?;
    let log_path = out_dir.join("train_log.csv");
    write_train_log(&log, &log_path)?;
    config.write_effective(out_dir)?;
    Ok(TrainArtifacts {
        model_path,
        log_path,
        final_loss: log.last().map(|r| r.total),
    })
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

/// Runs the checkpoint over a dataset and writes per-pin argmin candidates
/// with distances; `threshold` is recorded in the header and applied by
/// `eval` (and can be overridden there).
pub fn cmd_infer(
    dataset: &Path,
    model: &Path,
    config: &RunConfig,
    out: &Path,
) -> Result<Predictions, CliError> {
    let frames = read_nonempty_dataset(dataset)?;
    let net: Network<f32> = checkpoint::load(model)?;
    let embeddings = learn::infer_embeddings(
        &net,
        &frames,
        &config.grid,
        config.train.assumed_height,
    )?;
    let mut pred_frames = Vec::with_capacity(embeddings.len());
    for (frame_id, emb) in &embeddings {
        let aff = infereval::affinity(emb);
        // Unthresholded argmin candidates; the threshold is applied at
        // evaluation time.
        let cands = infereval::associate(&aff, f64::INFINITY);
        pred_frames.push((
            *frame_id,
            cands
                .pairs
                .iter()
                .map(|(p, b)| (*p, *b, cands.scores[&(*p, *b)]))
                .collect(),
        ));
    }
    let preds = Predictions {
        threshold: config.assoc_threshold,
        frames: pred_frames,
    };
    write_predictions(&preds, out)?;
    Ok(preds)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub struct EvalArtifacts {
    pub report: EvalReport,
    pub threshold: f64,
}

/// Scores predictions against a dataset. `threshold` overrides the value
/// recorded in the predictions file when given; `against` picks simulator
/// truth or the dataset's labels.
pub fn cmd_eval(
    dataset: &Path,
    predictions: &Path,
    against: Against,
    threshold: Option<f64>,
    out: &Path,
    per_frame_csv: Option<&Path>,
) -> Result<EvalArtifacts, CliError> {
    let frames = read_nonempty_dataset(dataset)?;
    let preds = read_predictions(predictions)?;
    let threshold = threshold.unwrap_or(preds.threshold);
    let pairs = preds.pairs_at(threshold);
    let report = infereval::evaluate_frames(&pairs, &frames, against)
        .map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(
        out,
        serde_json::to_string_pretty(&report).expect("serializes") + "\n",
    )
    .map_err(|e| io_err(out, e))?;
    if let Some(csv) = per_frame_csv {
        let mut text = String::from("frame_id,tp,fp,fn\n");
        for c in &report.per_frame {
            text.push_str(&format!("{},{},{},{}\n", c.frame_id, c.tp, c.fp, c.fn_));
        }
        fs::write(csv, text).map_err(|e| io_err(csv, e))?;
    }
    Ok(EvalArtifacts { report, threshold })
}

/// Two-row comparison in the Precision / Recall / F1 shape.
pub fn comparison_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<14} | Precision / Recall / F1\n", "Algorithm"));
    out.push_str(&format!("{:-<14}-+------------------------\n", ""));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<14} | {:.3} / {:.3} / {:.3}\n",
            name, r.precision, r.recall, r.f1
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

/// Scene views (image plane + BEV) for one frame, optionally overlaying
/// predictions.
pub fn cmd_plot_scene(
    dataset: &Path,
    frame_id: u64,
    predictions: Option<&Path>,
    threshold: Option<f64>,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let frames = read_nonempty_dataset(dataset)?;
    let frame = frames
        .iter()
        .find(|f| f.frame_id == frame_id)
        .ok_or_else(|| CliError::Data(format!("frame {frame_id} not in {}", dataset.display())))?;
    let pred_pairs: Option<BTreeSet<(i64, i64)>> = match predictions {
        None => None,
        Some(p) => {
            let preds = read_predictions(p)?;
            let th = threshold.unwrap_or(preds.threshold);
            preds
                .pairs_at(th)
                .into_iter()
                .find(|(id, _)| *id == frame_id)
                .map(|(_, pairs)| pairs)
        }
    };
    let image_path = out_dir.join(format!("frame_{frame_id}_image.svg"));
    fs::write(&image_path, svg::scene_image_svg(frame, pred_pairs.as_ref()))
        .map_err(|e| io_err(&image_path, e))?;
    let bev_path = out_dir.join(format!("frame_{frame_id}_bev.svg"));
    fs::write(&bev_path, svg::scene_bev_svg(frame, pred_pairs.as_ref()))
        .map_err(|e| io_err(&bev_path, e))?;
    Ok((image_path, bev_path))
}

pub fn read_train_log(path: &Path) -> Result<Vec<learn::TrainRow>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(CliError::Data(format!(
                "{}: line {}: expected 7 columns",
                path.display(),
                i + 1
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))
        };
        rows.push(learn::TrainRow {
            iter: parse(cols[0])? as usize,
            lr: parse(cols[1])?,
            pull: parse(cols[2])?,
            push: parse(cols[3])?,
            ord: parse(cols[4])?,
            total: parse(cols[5])?,
            seconds: parse(cols[6])?,
        });
    }
    Ok(rows)
}

pub fn cmd_plot_curves(log: &Path, out: &Path) -> Result<(), CliError> {
    let rows = read_train_log(log)?;
    fs::write(out, svg::curves_svg(&rows)).map_err(|e| io_err(out, e))
}

pub fn cmd_plot_sweep(csv: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(csv).map_err(|e| io_err(csv, e))?;
    let mut points = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 4 {
            continue;
        }
        let v: Result<Vec<f64>, _> = cols[..4].iter().map(|s| s.parse::<f64>()).collect();
        if let Ok(v) = v {
            points.push((v[0], v[1], v[2], v[3]));
        }
    }
    fs::write(out, svg::sweep_svg(&points)).map_err(|e| io_err(out, e))
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Threshold sweep over existing predictions: CSV of
/// `threshold,precision,recall,f1` rows.
pub fn cmd_sweep_threshold(
    dataset: &Path,
    predictions: &Path,
    against: Against,
    out: &Path,
) -> Result<(), CliError> {
    let frames = read_nonempty_dataset(dataset)?;
    let preds = read_predictions(predictions)?;
    let mut text = String::from("threshold,precision,recall,f1\n");
    let mut th = 0.0;
    while th <= 12.0 + 1e-9 {
        let pairs = preds.pairs_at(th);
        let report = infereval::evaluate_frames(&pairs, &frames, against)
            .map_err(|e| CliError::Data(e.to_string()))?;
        text.push_str(&format!(
            "{:.2},{:.6},{:.6},{:.6}\n",
            th, report.precision, report.recall, report.f1
        ));
        th += 0.5;
    }
    fs::write(out, text).map_err(|e| io_err(out, e))
}

/// Train/eval one configuration arm for the loss ablation sweeps.
#[allow(clippy::too_many_arguments)]
pub fn run_arm(
    train_frames: &[FrameRecord],
    test_frames: &[FrameRecord],
    config: &RunConfig,
    loss: &LossConfig,
    train_cfg: &TrainConfig,
) -> Result<EvalReport, CliError> {
    let mut net: Network<f32> = Network::new(NetworkConfig {
        weight_init_seed: train_cfg.seed,
        ..config.network.clone()
    })?;
    learn::train(&mut net, train_frames, &config.grid, loss, train_cfg)?;
    let embeddings =
        learn::infer_embeddings(&net, test_frames, &config.grid, train_cfg.assumed_height)?;
    let pairs: Vec<(u64, BTreeSet<(i64, i64)>)> = embeddings
        .iter()
        .map(|(id, emb)| {
            let aff = infereval::affinity(emb);
            (*id, infereval::associate(&aff, config.assoc_threshold).pairs)
        })
        .collect();
    infereval::evaluate_frames(&pairs, test_frames, Against::Labels)
        .map_err(|e| CliError::Data(e.to_string()))
}

/// Ablation sweep arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Negative sampling ratio, including the exhaustive "no sampling" arm.
    Ratio,
    /// Ordinal loss weight.
    OrdWeight,
}

/// Trains one network per arm per seed and writes
/// `arm,seed,precision,recall,f1` rows.
pub fn cmd_sweep_ablation(
    kind: SweepKind,
    train_dataset: &Path,
    test_dataset: &Path,
    config: &RunConfig,
    seeds: &[u64],
    out: &Path,
) -> Result<(), CliError> {
    let train_frames = read_nonempty_dataset(train_dataset)?;
    let test_frames = read_nonempty_dataset(test_dataset)?;
    let arms: Vec<(String, LossConfig)> = match kind {
        SweepKind::Ratio => vec![
            (
                "no-sampling".into(),
                LossConfig {
                    sample_all_negatives: true,
                    ..config.loss.clone()
                },
            ),
            (
                "1:1".into(),
                LossConfig {
                    sample_all_negatives: false,
                    sample_ratio: 1.0,
                    ..config.loss.clone()
                },
            ),
        ],
        SweepKind::OrdWeight => vec![
            (
                "w0".into(),
                LossConfig {
                    w_ord: 0.0,
                    ..config.loss.clone()
                },
            ),
            (
                "w2".into(),
                LossConfig {
                    w_ord: 2.0,
                    ..config.loss.clone()
                },
            ),
        ],
    };
    let mut text = String::from("arm,seed,precision,recall,f1\n");
    for (name, loss) in &arms {
        for seed in seeds {
            let tcfg = TrainConfig {
                seed: *seed,
                ..config.train.clone()
            };
            let report = run_arm(&train_frames, &test_frames, config, loss, &tcfg)?;
            text.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                name, seed, report.precision, report.recall, report.f1
            ));
        }
    }
    fs::write(out, text).map_err(|e| io_err(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::SensorNoiseConfig;

    fn tiny_config() -> RunConfig {
        let mut c = RunConfig::desk_default();
        c.split = SplitConfig {
            train_frames: 4,
            val_frames: 2,
            test_frames: 2,
        };
        c.sim.noise = SensorNoiseConfig::default();
        c
    }

    #[test]
    fn gen_writes_three_splits_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let manifest = cmd_gen(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.splits.len(), 3);
        for split in &manifest.splits {
            let frames = read_dataset(Path::new(&split.path)).unwrap();
            assert_eq!(frames.len(), split.frames);
            if split.name != "train" {
                for f in &frames {
                    assert_eq!(f.labels_pos, f.truth_pos);
                }
            } else {
                for f in &frames {
                    assert!(f.labels_pos.is_empty());
                }
            }
        }
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("effective_config.json").exists());
    }

    #[test]
    fn gen_is_byte_deterministic() {
        let cfg = tiny_config();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        cmd_gen(&cfg, d1.path()).unwrap();
        cmd_gen(&cfg, d2.path()).unwrap();
        for name in ["train.jsonl", "val.jsonl", "test.jsonl"] {
            assert_eq!(
                fs::read(d1.path().join(name)).unwrap(),
                fs::read(d2.path().join(name)).unwrap(),
                "{name} differs"
            );
        }
    }

    #[test]
    fn gen_zero_frames_split_is_valid_and_rejected_downstream() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.split.val_frames = 0;
        cmd_gen(&cfg, dir.path()).unwrap();
        let val = dir.path().join("val.jsonl");
        assert!(read_dataset(&val).unwrap().is_empty());
        let err = cmd_teach(&val, &cfg, &dir.path().join("out.jsonl")).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("EmptyDataset"));
    }

    #[test]
    fn teach_replaces_labels_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        cmd_gen(&cfg, dir.path()).unwrap();
        let out = dir.path().join("train_teacher.jsonl");
        let report = cmd_teach(&dir.path().join("train.jsonl"), &cfg, &out).unwrap();
        assert!(report.f1 > 0.5, "teacher f1 {}", report.f1);
        let labeled = read_dataset(&out).unwrap();
        assert!(labeled.iter().any(|f| !f.labels_pos.is_empty()));
        assert!(out.with_extension("metrics.json").exists());
    }

    #[test]
    fn predictions_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.jsonl");
        let preds = Predictions {
            threshold: 5.0,
            frames: vec![(0, vec![(1, 10, 0.5), (2, 20, 7.25)]), (1, vec![])],
        };
        write_predictions(&preds, &path).unwrap();
        let back = read_predictions(&path).unwrap();
        assert_eq!(back.threshold, 5.0);
        assert_eq!(back.frames, preds.frames);
        // Threshold filter.
        let pairs = back.pairs_at(5.0);
        assert_eq!(pairs[0].1.len(), 1);
        let pairs = back.pairs_at(0.0);
        assert_eq!(pairs[0].1.len(), 0);
    }

    #[test]
    fn comparison_table_shape() {
        let r = EvalReport::from_frames(vec![crate::infereval::FrameCounts {
            frame_id: 0,
            tp: 9,
            fp: 1,
            fn_: 3,
        }]);
        let table = comparison_table(&[("Rule-based", &r), ("Learning-based", &r)]);
        assert!(table.contains("Precision / Recall / F1"));
        assert!(table.contains("Rule-based"));
        assert!(table.contains("0.900 / 0.750"));
    }
}
