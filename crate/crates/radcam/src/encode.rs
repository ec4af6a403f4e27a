//! Pseudo-image construction and representation extraction.
//!
//! A frame becomes a 14-channel raster: seven radar channels, four bounding
//! box channels, three RGB channels. Each detection writes its attributes at
//! exactly one anchor pixel and a small Gaussian blob on its heatmap channel;
//! after the network runs, the representation vector of each detection is
//! read back off the output feature map at that same anchor.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geom::project;
use crate::nnet::{Real, Tensor};
use crate::scenesim::FrameRecord;

/// Channel layout (fixed; part of the checkpoint contract).
pub const CH_PIN_ID: usize = 0;
pub const CH_PIN_PROB: usize = 1;
pub const CH_PIN_POS_X: usize = 2;
pub const CH_PIN_POS_Y: usize = 3;
pub const CH_PIN_VEL_X: usize = 4;
pub const CH_PIN_VEL_Y: usize = 5;
pub const CH_PIN_HEAT: usize = 6;
pub const CH_BOX_H: usize = 7;
pub const CH_BOX_W: usize = 8;
pub const CH_BOX_CAT: usize = 9;
pub const CH_BOX_HEAT: usize = 10;
pub const CH_RGB: usize = 11;
pub const CHANNELS: usize = 14;

/// Normalizers keeping the attribute channels O(1).
const POS_SCALE: f64 = 100.0;
const VEL_SCALE: f64 = 40.0;
const HEATMAP_SIGMA: f64 = 1.5;
const HEATMAP_RADIUS: i64 = 2;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("{what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: i64 },
}

/// Pseudo-image raster geometry and its mapping to full image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub grid_w: usize,
    pub grid_h: usize,
    pub img_w: f64,
    pub img_h: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            grid_w: 192,
            grid_h: 96,
            img_w: 1828.0,
            img_h: 948.0,
        }
    }
}

impl GridSpec {
    pub fn new(grid_w: usize, grid_h: usize, img_w: f64, img_h: f64) -> Self {
        GridSpec {
            grid_w,
            grid_h,
            img_w,
            img_h,
        }
    }

    pub fn scale_x(&self) -> f64 {
        self.grid_w as f64 / self.img_w
    }

    pub fn scale_y(&self) -> f64 {
        self.grid_h as f64 / self.img_h
    }

    /// Continuous (row, col) grid coordinates of a full-image pixel.
    pub fn to_grid(&self, u: f64, v: f64) -> (f64, f64) {
        (v * self.scale_y(), u * self.scale_x())
    }

    /// Grid spatial size must be divisible by 2^stages for the network.
    pub fn validate_for_stages(&self, stages: usize) -> Result<(), EncodeError> {
        let div = 1usize << stages;
        if self.grid_w % div != 0 || self.grid_h % div != 0 {
            return Err(EncodeError::ShapeMismatch {
                what: "grid",
                expected: format!("sides divisible by {div}"),
                actual: format!("{}x{}", self.grid_w, self.grid_h),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorKind {
    Pin,
    Box,
}

/// A rasterization event worth surfacing: an anchor collision that shifted
/// or dropped a detection.
#[derive(Debug, Clone)]
pub struct CollisionNote {
    pub kind: AnchorKind,
    pub id: i64,
    /// Final anchor, or None when no free pixel existed in the 3x3
    /// neighborhood and the detection was dropped.
    pub moved_to: Option<(usize, usize)>,
}

/// The 14-channel raster plus the anchor bookkeeping needed to read
/// representations back out.
pub struct PseudoImage {
    pub frame_id: u64,
    pub grid: GridSpec,
    /// Channel-major data: `CHANNELS * grid_h * grid_w`.
    pub data: Vec<f64>,
    pub pin_anchors: BTreeMap<i64, (usize, usize)>,
    pub box_anchors: BTreeMap<i64, (usize, usize)>,
    /// Pins that projected behind the camera or outside the grid.
    pub dropped_pins: Vec<i64>,
    pub collisions: Vec<CollisionNote>,
}

impl PseudoImage {
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.grid.grid_h * self.grid.grid_w;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            vec![CHANNELS, self.grid.grid_h, self.grid.grid_w],
            self.data.iter().map(|v| T::from_f64(*v)).collect(),
        )
        .expect("consistent raster")
    }
}

/// Deterministic offsets searched when two detections of the same kind round
/// to one pixel: the four edge neighbors, then the diagonals.
const SHIFT_OFFSETS: [(i64, i64); 8] = [
    (0, 1),
    (1, 0),
    (0, -1),
    (-1, 0),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

fn resolve_anchor(
    taken: &BTreeMap<(usize, usize), i64>,
    grid: &GridSpec,
    row: usize,
    col: usize,
) -> Option<(usize, usize)> {
    if !taken.contains_key(&(row, col)) {
        return Some((row, col));
    }
    for (dr, dc) in SHIFT_OFFSETS {
        let r = row as i64 + dr;
        let c = col as i64 + dc;
        if r < 0 || c < 0 || r >= grid.grid_h as i64 || c >= grid.grid_w as i64 {
            continue;
        }
        let cand = (r as usize, c as usize);
        if !taken.contains_key(&cand) {
            return Some(cand);
        }
    }
    None
}

fn splat_heatmap(plane: &mut [f64], grid: &GridSpec, row: usize, col: usize) {
    for dr in -HEATMAP_RADIUS..=HEATMAP_RADIUS {
        for dc in -HEATMAP_RADIUS..=HEATMAP_RADIUS {
            let r = row as i64 + dr;
            let c = col as i64 + dc;
            if r < 0 || c < 0 || r >= grid.grid_h as i64 || c >= grid.grid_w as i64 {
                continue;
            }
            let d2 = (dr * dr + dc * dc) as f64;
            let g = (-d2 / (2.0 * HEATMAP_SIGMA * HEATMAP_SIGMA)).exp();
            let cell = &mut plane[r as usize * grid.grid_w + c as usize];
            if g > *cell {
                *cell = g;
            }
        }
    }
}

/// Builds the pseudo-image for a frame. `rgb` is the rendered camera image
/// at grid resolution (see `scenesim::render_rgb`), channel-major RGB.
///
/// Pins that project behind the camera or outside the grid are dropped from
/// the anchor map (recorded in `dropped_pins`); box anchors are clamped to
/// the grid. Anchor collisions shift the later detection to the nearest free
/// pixel in a 3x3 neighborhood or drop it, recording a [`CollisionNote`].
pub fn build_pseudo_image(
    frame: &FrameRecord,
    grid: &GridSpec,
    assumed_height: f64,
    rgb: &[f64],
) -> Result<PseudoImage, EncodeError> {
    let plane = grid.grid_h * grid.grid_w;
    if rgb.len() != 3 * plane {
        return Err(EncodeError::ShapeMismatch {
            what: "rgb",
            expected: format!("{} values", 3 * plane),
            actual: format!("{}", rgb.len()),
        });
    }
    let mut img = PseudoImage {
        frame_id: frame.frame_id,
        grid: *grid,
        data: vec![0.0; CHANNELS * plane],
        pin_anchors: BTreeMap::new(),
        box_anchors: BTreeMap::new(),
        dropped_pins: Vec::new(),
        collisions: Vec::new(),
    };
    img.data[CH_RGB * plane..(CH_RGB + 3) * plane].copy_from_slice(rgb);

    let mut taken: BTreeMap<(usize, usize), i64> = BTreeMap::new();
    for pin in &frame.pins {
        let Ok(cam) = frame.pin_camera(pin, assumed_height) else {
            img.dropped_pins.push(pin.id);
            continue;
        };
        let Ok(px) = project(cam, &frame.intrinsics) else {
            img.dropped_pins.push(pin.id);
            continue;
        };
        let (gr, gc) = grid.to_grid(px.u, px.v);
        let (row, col) = (gr.round() as i64, gc.round() as i64);
        if row < 0 || col < 0 || row >= grid.grid_h as i64 || col >= grid.grid_w as i64 {
            img.dropped_pins.push(pin.id);
            continue;
        }
        let wanted = (row as usize, col as usize);
        let resolved = resolve_anchor(&taken, grid, wanted.0, wanted.1);
        if resolved != Some(wanted) {
            img.collisions.push(CollisionNote {
                kind: AnchorKind::Pin,
                id: pin.id,
                moved_to: resolved,
            });
        }
        let Some((row, col)) = resolved else {
            img.dropped_pins.push(pin.id);
            continue;
        };
        taken.insert((row, col), pin.id);
        img.pin_anchors.insert(pin.id, (row, col));

        let aligned = pin.align_temporal(frame.t_camera);
        let vel_cam = frame.extrinsics.rotate([aligned.vel_x, aligned.vel_y, 0.0]);
        let at = row * grid.grid_w + col;
        img.data[CH_PIN_ID * plane + at] = (pin.id.rem_euclid(256)) as f64 / 256.0;
        img.data[CH_PIN_PROB * plane + at] = pin.obstacle_prob;
        img.data[CH_PIN_POS_X * plane + at] = cam.x / POS_SCALE;
        img.data[CH_PIN_POS_Y * plane + at] = cam.z / POS_SCALE;
        img.data[CH_PIN_VEL_X * plane + at] = vel_cam[0] / VEL_SCALE;
        img.data[CH_PIN_VEL_Y * plane + at] = vel_cam[2] / VEL_SCALE;
        let (heat, rest) = {
            let (a, b) = img.data.split_at_mut((CH_PIN_HEAT + 1) * plane);
            (&mut a[CH_PIN_HEAT * plane..], b)
        };
        let _ = rest;
        splat_heatmap(heat, grid, row, col);
    }

    let mut taken: BTreeMap<(usize, usize), i64> = BTreeMap::new();
    for b in &frame.boxes {
        let (gr, gc) = grid.to_grid(b.center_x, b.center_y);
        // Boxes may be partially outside the image; clamp onto the grid.
        let row = (gr.round() as i64).clamp(0, grid.grid_h as i64 - 1) as usize;
        let col = (gc.round() as i64).clamp(0, grid.grid_w as i64 - 1) as usize;
        let resolved = resolve_anchor(&taken, grid, row, col);
        if resolved != Some((row, col)) {
            img.collisions.push(CollisionNote {
                kind: AnchorKind::Box,
                id: b.id,
                moved_to: resolved,
            });
        }
        let Some((row, col)) = resolved else { continue };
        taken.insert((row, col), b.id);
        img.box_anchors.insert(b.id, (row, col));
        let at = row * grid.grid_w + col;
        img.data[CH_BOX_H * plane + at] = b.height / grid.img_h;
        img.data[CH_BOX_W * plane + at] = b.width / grid.img_w;
        img.data[CH_BOX_CAT * plane + at] = b.category.index() as f64 / 9.0;
        let heat = &mut img.data[CH_BOX_HEAT * plane..(CH_BOX_HEAT + 1) * plane];
        splat_heatmap(heat, grid, row, col);
    }
    Ok(img)
}

/// Learned representation vectors keyed by detection identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub pin_emb: BTreeMap<i64, Vec<f64>>,
    pub box_emb: BTreeMap<i64, Vec<f64>>,
    /// Length of every vector.
    pub dim: usize,
}

impl EmbeddingSet {
    pub fn distance(&self, pin_id: i64, box_id: i64) -> Option<f64> {
        let p = self.pin_emb.get(&pin_id)?;
        let b = self.box_emb.get(&box_id)?;
        Some(
            p.iter()
                .zip(b)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt(),
        )
    }
}

/// Reads representation vectors off a raw channel-major feature map:
/// pins from the first D/2 channels, boxes from the second half (or the full
/// D channels for both when `shared` is set).
pub fn extract_embeddings_raw(
    featmap: &[f64],
    d: usize,
    pseudo: &PseudoImage,
    shared: bool,
) -> Result<EmbeddingSet, EncodeError> {
    let (h, w) = (pseudo.grid.grid_h, pseudo.grid.grid_w);
    if featmap.len() != d * h * w {
        return Err(EncodeError::ShapeMismatch {
            what: "featmap",
            expected: format!("{} values ({d}x{h}x{w})", d * h * w),
            actual: format!("{}", featmap.len()),
        });
    }
    if d % 2 != 0 {
        return Err(EncodeError::ShapeMismatch {
            what: "featmap",
            expected: "even channel count".into(),
            actual: format!("{d}"),
        });
    }
    let plane = h * w;
    let read = |anchor: (usize, usize), c0: usize, c1: usize| -> Vec<f64> {
        (c0..c1)
            .map(|c| featmap[c * plane + anchor.0 * w + anchor.1])
            .collect()
    };
    let (pin_range, box_range) = if shared {
        ((0, d), (0, d))
    } else {
        ((0, d / 2), (d / 2, d))
    };
    Ok(EmbeddingSet {
        pin_emb: pseudo
            .pin_anchors
            .iter()
            .map(|(id, a)| (*id, read(*a, pin_range.0, pin_range.1)))
            .collect(),
        box_emb: pseudo
            .box_anchors
            .iter()
            .map(|(id, a)| (*id, read(*a, box_range.0, box_range.1)))
            .collect(),
        dim: if shared { d } else { d / 2 },
    })
}

/// Tensor front end over [`extract_embeddings_raw`].
pub fn extract_embeddings<T: Real>(
    featmap: &Tensor<T>,
    pseudo: &PseudoImage,
    shared: bool,
) -> Result<EmbeddingSet, EncodeError> {
    let shape = featmap.shape();
    if shape.len() != 3 || shape[1] != pseudo.grid.grid_h || shape[2] != pseudo.grid.grid_w {
        return Err(EncodeError::ShapeMismatch {
            what: "featmap",
            expected: format!("[D, {}, {}]", pseudo.grid.grid_h, pseudo.grid.grid_w),
            actual: format!("{shape:?}"),
        });
    }
    let data: Vec<f64> = featmap.data().iter().map(|v| v.to_f64()).collect();
    extract_embeddings_raw(&data, shape[0], pseudo, shared)
}

/// Dumps the 14 channels (plus an RGB composite) as a PNG contact sheet,
/// 4 tiles per row, one pixel per grid cell, values clamped to [0, 1].
pub fn dump_contact_sheet(pseudo: &PseudoImage, path: &std::path::Path) -> std::io::Result<()> {
    let (gw, gh) = (pseudo.grid.grid_w, pseudo.grid.grid_h);
    let cols = 4usize;
    let tiles = CHANNELS + 1;
    let rows = tiles.div_ceil(cols);
    let margin = 2usize;
    let sheet_w = cols * (gw + margin) + margin;
    let sheet_h = rows * (gh + margin) + margin;
    let mut rgb = vec![32u8; sheet_w * sheet_h * 3];
    let byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for tile in 0..tiles {
        let tx = margin + (tile % cols) * (gw + margin);
        let ty = margin + (tile / cols) * (gh + margin);
        for y in 0..gh {
            for x in 0..gw {
                let at = ((ty + y) * sheet_w + tx + x) * 3;
                if tile < CHANNELS {
                    let v = byte(pseudo.channel(tile)[y * gw + x]);
                    rgb[at] = v;
                    rgb[at + 1] = v;
                    rgb[at + 2] = v;
                } else {
                    rgb[at] = byte(pseudo.channel(CH_RGB)[y * gw + x]);
                    rgb[at + 1] = byte(pseudo.channel(CH_RGB + 1)[y * gw + x]);
                    rgb[at + 2] = byte(pseudo.channel(CH_RGB + 2)[y * gw + x]);
                }
            }
        }
    }
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), sheet_w as u32, sheet_h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&rgb)?;
    Ok(())
}
