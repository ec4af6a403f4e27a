//! Dataset files: line-delimited JSON, one frame per line, behind a
//! versioned header. Floats are written with 17 significant digits so the
//! files are diff-able and round-trip bit-exactly.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FrameRecord, SimError};
use crate::geom::{BBox2D, CameraIntrinsics, Category, RadarPin, RigidTransform};

/// Header line identifying the on-disk schema.
pub const DATASET_SCHEMA: &str = "radcam/1";

fn io_err(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Wire structs (field names are part of the schema)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireHeader {
    schema: String,
}

#[derive(Serialize, Deserialize)]
struct WirePin {
    id: i64,
    prob: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

#[derive(Serialize, Deserialize)]
struct WireBox {
    id: i64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    cat: Category,
}

#[derive(Serialize, Deserialize)]
struct WireIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    img_w: f64,
    img_h: f64,
}

#[derive(Serialize, Deserialize)]
struct WireExtrinsics {
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct WireFrame {
    frame_id: u64,
    t_camera: f64,
    t_radar: f64,
    intrinsics: WireIntrinsics,
    extrinsics: WireExtrinsics,
    pins: Vec<WirePin>,
    boxes: Vec<WireBox>,
    labels_pos: Vec<(i64, i64)>,
    labels_uncertain: Vec<(i64, i64)>,
    truth_pos: Vec<(i64, i64)>,
}

impl From<&FrameRecord> for WireFrame {
    fn from(f: &FrameRecord) -> Self {
        WireFrame {
            frame_id: f.frame_id,
            t_camera: f.t_camera,
            t_radar: f.t_radar,
            intrinsics: WireIntrinsics {
                fx: f.intrinsics.fx,
                fy: f.intrinsics.fy,
                cx: f.intrinsics.cx,
                cy: f.intrinsics.cy,
                img_w: f.intrinsics.img_w,
                img_h: f.intrinsics.img_h,
            },
            extrinsics: WireExtrinsics {
                r: f.extrinsics.rotation,
                t: f.extrinsics.translation,
            },
            pins: f
                .pins
                .iter()
                .map(|p| WirePin {
                    id: p.id,
                    prob: p.obstacle_prob,
                    x: p.pos_x,
                    y: p.pos_y,
                    vx: p.vel_x,
                    vy: p.vel_y,
                })
                .collect(),
            boxes: f
                .boxes
                .iter()
                .map(|b| WireBox {
                    id: b.id,
                    cx: b.center_x,
                    cy: b.center_y,
                    w: b.width,
                    h: b.height,
                    cat: b.category,
                })
                .collect(),
            labels_pos: f.labels_pos.iter().copied().collect(),
            labels_uncertain: f.labels_uncertain.iter().copied().collect(),
            truth_pos: f.truth_pos.iter().copied().collect(),
        }
    }
}

impl WireFrame {
    fn into_record(self, line: usize) -> Result<FrameRecord, SimError> {
        let schema = |msg: String| SimError::Schema { line, msg };
        let intrinsics = CameraIntrinsics::new(
            self.intrinsics.fx,
            self.intrinsics.fy,
            self.intrinsics.cx,
            self.intrinsics.cy,
            self.intrinsics.img_w,
            self.intrinsics.img_h,
        )
        .map_err(|e| schema(format!("frame {}: {e}", self.frame_id)))?;
        let extrinsics = RigidTransform::new(self.extrinsics.r, self.extrinsics.t)
            .map_err(|e| schema(format!("frame {}: {e}", self.frame_id)))?;
        let pins = self
            .pins
            .iter()
            .map(|p| RadarPin::new(p.id, p.prob, p.x, p.y, p.vx, p.vy, self.t_radar))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| schema(format!("frame {}: {e}", self.frame_id)))?;
        let boxes = self
            .boxes
            .iter()
            .map(|b| BBox2D::new(b.id, b.cx, b.cy, b.w, b.h, b.cat))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| schema(format!("frame {}: {e}", self.frame_id)))?;
        let record = FrameRecord {
            frame_id: self.frame_id,
            t_camera: self.t_camera,
            t_radar: self.t_radar,
            intrinsics,
            extrinsics,
            pins,
            boxes,
            labels_pos: BTreeSet::from_iter(self.labels_pos),
            labels_uncertain: BTreeSet::from_iter(self.labels_uncertain),
            truth_pos: BTreeSet::from_iter(self.truth_pos),
        };
        record.validate().map_err(|e| match e {
            SimError::Schema { msg, .. } => SimError::Schema { line, msg },
            other => other,
        })?;
        Ok(record)
    }
}

// ---------------------------------------------------------------------------
// 17-significant-digit float formatting
// ---------------------------------------------------------------------------

/// serde_json formatter that writes every f64 with 17 significant digits
/// (`{:.16e}`), enough to reproduce the exact bit pattern on read.
struct Fixed17;

impl serde_json::ser::Formatter for Fixed17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        debug_assert!(value.is_finite());
        write!(writer, "{value:.16e}")
    }
}

/// One frame rendered as a single JSON line.
pub(crate) fn frame_to_json_line(frame: &FrameRecord) -> String {
    let wire = WireFrame::from(frame);
    let mut buf = Vec::with_capacity(1024);
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17);
    wire.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("json is utf-8")
}

// ---------------------------------------------------------------------------
// Read / write
// ---------------------------------------------------------------------------

/// Writes the dataset: a schema header line followed by one frame per line.
pub fn write_dataset(frames: &[FrameRecord], path: &Path) -> Result<(), SimError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header = serde_json::to_string(&WireHeader {
        schema: DATASET_SCHEMA.to_string(),
    })
    .expect("header serializes");
    writeln!(w, "{header}").map_err(|e| io_err(path, e))?;
    for frame in frames {
        writeln!(w, "{}", frame_to_json_line(frame)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a dataset written by [`write_dataset`]. Errors carry the 1-based
/// line number of the offending record.
pub fn read_dataset(path: &Path) -> Result<Vec<FrameRecord>, SimError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut frames = Vec::new();
    let mut lines = reader.lines().enumerate();
    let Some((_, header_line)) = lines.next() else {
        return Err(SimError::Schema {
            line: 1,
            msg: "empty file, expected schema header".into(),
        });
    };
    let header_line = header_line.map_err(|e| io_err(path, e))?;
    let header: WireHeader = serde_json::from_str(&header_line).map_err(|e| SimError::Schema {
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    if header.schema != DATASET_SCHEMA {
        return Err(SimError::Schema {
            line: 1,
            msg: format!("schema `{}`, expected `{DATASET_SCHEMA}`", header.schema),
        });
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireFrame = serde_json::from_str(&line).map_err(|e| SimError::Schema {
            line: line_no,
            msg: format!("bad frame record: {e}"),
        })?;
        frames.push(wire.into_record(line_no)?);
    }
    Ok(frames)
}
