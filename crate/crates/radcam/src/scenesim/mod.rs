//! Synthetic driving frames: objects, radar pins, bounding boxes, and
//! ground-truth plus uncertain association labels.
//!
//! Frames are generated independently, each from `seed_for(global_seed,
//! frame_id)`, so parallel generation is byte-identical to serial.

mod io;

pub use io::{read_dataset, write_dataset, DATASET_SCHEMA};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    frustum, project, BBox2D, CamPoint3, CameraIntrinsics, Category, GeomError, GroundPoint,
    RadarPin, RigidTransform,
};
use crate::rng::{seed_for, Rng};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config field `{field}`: {why}")]
    ConfigInvalid { field: &'static str, why: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

// ---------------------------------------------------------------------------
// Scene objects
// ---------------------------------------------------------------------------

/// A movable object in the scene, in radar BEV coordinates at the camera
/// timestamp.
#[derive(Debug, Clone)]
pub struct SceneObject {
    pub id: i64,
    /// BEV center (meters, x forward / y left).
    pub center: (f64, f64),
    /// BEV velocity (m/s).
    pub velocity: (f64, f64),
    /// Length x width x height (meters).
    pub size: (f64, f64, f64),
    pub category: Category,
}

/// (length, width, height) in meters.
fn category_size(cat: Category) -> (f64, f64, f64) {
    match cat {
        Category::Sedan => (4.6, 1.8, 1.5),
        Category::Suv => (4.9, 1.95, 1.75),
        Category::Truck => (9.0, 2.5, 3.2),
        Category::Bus => (11.5, 2.55, 3.1),
        Category::Bicycle => (1.8, 0.6, 1.7),
        Category::Tricycle => (2.6, 1.2, 1.6),
        Category::Motorcycle => (2.1, 0.8, 1.5),
        Category::Person => (0.5, 0.6, 1.7),
        Category::Unknown => (3.5, 1.8, 1.8),
    }
}

fn category_speed_cap(cat: Category) -> f64 {
    match cat {
        Category::Sedan | Category::Suv | Category::Motorcycle => 25.0,
        Category::Truck => 22.0,
        Category::Bus => 20.0,
        Category::Bicycle => 6.0,
        Category::Tricycle => 8.0,
        Category::Person => 1.8,
        Category::Unknown => 15.0,
    }
}

/// Objects longer than this may reflect more than one radar pin.
pub const MULTI_PIN_LENGTH: f64 = 6.0;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Sensor imperfections injected by the simulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoiseConfig {
    /// Gaussian sigma on pin BEV positions (meters).
    pub pin_pos_sigma: f64,
    /// Gaussian sigma on pin BEV velocities (m/s).
    pub pin_vel_sigma: f64,
    /// Probability that an object pin is not reported.
    pub pin_dropout_prob: f64,
    /// Mean clutter pins per frame from static structures.
    pub clutter_rate: f64,
    /// Gaussian sigma on box center and size (pixels).
    pub bbox_jitter_sigma: f64,
    /// Probability that an object box is not reported.
    pub bbox_dropout_prob: f64,
    /// Mean false boxes per frame.
    pub bbox_false_rate: f64,
    /// Upper bound on pins per object longer than [`MULTI_PIN_LENGTH`].
    pub pins_per_large_object_max: usize,
    /// Radar frames lag the camera by this much (seconds).
    pub radar_camera_time_offset: f64,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        SensorNoiseConfig {
            pin_pos_sigma: 0.15,
            pin_vel_sigma: 0.1,
            pin_dropout_prob: 0.04,
            clutter_rate: 1.5,
            bbox_jitter_sigma: 2.0,
            bbox_dropout_prob: 0.04,
            bbox_false_rate: 0.15,
            pins_per_large_object_max: 3,
            radar_camera_time_offset: 0.025,
        }
    }
}

impl SensorNoiseConfig {
    /// Everything clean: one pin per object, no jitter, no clutter.
    pub fn none() -> Self {
        SensorNoiseConfig {
            pin_pos_sigma: 0.0,
            pin_vel_sigma: 0.0,
            pin_dropout_prob: 0.0,
            clutter_rate: 0.0,
            bbox_jitter_sigma: 0.0,
            bbox_dropout_prob: 0.0,
            bbox_false_rate: 0.0,
            pins_per_large_object_max: 1,
            radar_camera_time_offset: 0.025,
        }
    }
}

/// Physical sensor layout; the defaults mirror a front camera at 10 Hz with a
/// 52 degree FOV over a 1828x948 image, and a 120 degree front radar at 20 Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSpec {
    pub img_w: f64,
    pub img_h: f64,
    pub camera_fov_deg: f64,
    pub radar_fov_deg: f64,
    pub camera_hz: f64,
    pub radar_hz: f64,
    /// Camera height above the ground plane (meters).
    pub cam_height: f64,
    /// Camera longitudinal offset behind the radar origin (meters).
    pub cam_setback: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            img_w: 1828.0,
            img_h: 948.0,
            camera_fov_deg: 52.0,
            radar_fov_deg: 120.0,
            camera_hz: 10.0,
            radar_hz: 20.0,
            cam_height: 1.5,
            cam_setback: 1.5,
        }
    }
}

impl SensorSpec {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics, GeomError> {
        CameraIntrinsics::from_fov(self.img_w, self.img_h, self.camera_fov_deg)
    }

    pub fn extrinsics(&self) -> RigidTransform {
        RigidTransform::standard_mount(self.cam_height, self.cam_setback)
    }
}

/// Full generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub frames: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    /// Forward placement range (meters).
    pub x_min: f64,
    pub x_max: f64,
    /// Hard cap on |lateral| placement (meters).
    pub lateral_max: f64,
    /// Minimum BEV distance between object centers (meters).
    pub min_separation: f64,
    /// Sampling weights over [`Category::ALL`].
    pub category_weights: [f64; 9],
    pub noise: SensorNoiseConfig,
    pub sensors: SensorSpec,
    /// Depth window for marking plausible-but-dubious pairs uncertain (meters).
    pub uncertain_depth_window: f64,
    /// Frames per contiguous sequence; splits never cut a sequence.
    pub seq_len: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            frames: 100,
            objects_min: 2,
            objects_max: 12,
            x_min: 6.0,
            x_max: 80.0,
            lateral_max: 12.0,
            min_separation: 2.5,
            category_weights: [0.40, 0.22, 0.10, 0.05, 0.05, 0.02, 0.05, 0.08, 0.03],
            noise: SensorNoiseConfig::default(),
            sensors: SensorSpec::default(),
            uncertain_depth_window: 2.0,
            seq_len: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &'static str, why: String| Err(SimError::ConfigInvalid { field, why });
        if self.objects_min < 1 || self.objects_min > self.objects_max {
            return bad(
                "objects_min",
                format!("range {}..={} invalid", self.objects_min, self.objects_max),
            );
        }
        if !(self.x_min > 0.0 && self.x_min < self.x_max) {
            return bad("x_min", format!("range {}..{} invalid", self.x_min, self.x_max));
        }
        if self.min_separation < 0.0 {
            return bad("min_separation", format!("{} < 0", self.min_separation));
        }
        if self.seq_len == 0 {
            return bad("seq_len", "must be >= 1".into());
        }
        let wsum: f64 = self.category_weights.iter().sum();
        if self.category_weights.iter().any(|w| *w < 0.0) || wsum <= 0.0 {
            return bad("category_weights", "must be nonnegative with positive sum".into());
        }
        for (field, p) in [
            ("pin_dropout_prob", self.noise.pin_dropout_prob),
            ("bbox_dropout_prob", self.noise.bbox_dropout_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(field, format!("{p} outside [0, 1]"));
            }
        }
        for (field, s) in [
            ("pin_pos_sigma", self.noise.pin_pos_sigma),
            ("pin_vel_sigma", self.noise.pin_vel_sigma),
            ("clutter_rate", self.noise.clutter_rate),
            ("bbox_jitter_sigma", self.noise.bbox_jitter_sigma),
            ("bbox_false_rate", self.noise.bbox_false_rate),
        ] {
            if s < 0.0 || !s.is_finite() {
                return bad(field, format!("{s} must be finite and >= 0"));
            }
        }
        if self.noise.pins_per_large_object_max < 1 {
            return bad("pins_per_large_object_max", "must be >= 1".into());
        }
        if self.uncertain_depth_window < 0.0 {
            return bad("uncertain_depth_window", "must be >= 0".into());
        }
        self.sensors.intrinsics().map_err(|e| SimError::ConfigInvalid {
            field: "sensors",
            why: e.to_string(),
        })?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Frame record
// ---------------------------------------------------------------------------

/// One time-aligned radar + camera frame with association labels.
///
/// `truth_pos` is the simulator's ground truth; `labels_pos` is whatever the
/// downstream consumer trains or evaluates against (clean truth on test
/// splits, teacher output on train splits).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub t_camera: f64,
    pub t_radar: f64,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: RigidTransform,
    pub pins: Vec<RadarPin>,
    pub boxes: Vec<BBox2D>,
    pub labels_pos: BTreeSet<(i64, i64)>,
    pub labels_uncertain: BTreeSet<(i64, i64)>,
    pub truth_pos: BTreeSet<(i64, i64)>,
}

impl FrameRecord {
    pub fn pin_by_id(&self, id: i64) -> Option<&RadarPin> {
        self.pins.iter().find(|p| p.id == id)
    }

    pub fn box_by_id(&self, id: i64) -> Option<&BBox2D> {
        self.boxes.iter().find(|b| b.id == id)
    }

    /// Camera height above ground, read off the standard level mount.
    pub fn cam_height(&self) -> f64 {
        self.extrinsics.translation[1]
    }

    /// Pin moved to the camera timestamp and lifted into camera coordinates.
    pub fn pin_camera(&self, pin: &RadarPin, assumed_height: f64) -> Result<CamPoint3, GeomError> {
        pin.align_temporal(self.t_camera)
            .to_camera(&self.extrinsics, assumed_height)
    }

    /// BEV ground position of the pin in camera-aligned coordinates.
    pub fn pin_ground(&self, pin: &RadarPin) -> Result<GroundPoint, GeomError> {
        let c = self.pin_camera(pin, 0.0)?;
        Ok(GroundPoint { x: c.x, z: c.z })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let pin_ids: BTreeSet<i64> = self.pins.iter().map(|p| p.id).collect();
        let box_ids: BTreeSet<i64> = self.boxes.iter().map(|b| b.id).collect();
        if pin_ids.len() != self.pins.len() || box_ids.len() != self.boxes.len() {
            return Err(SimError::Schema {
                line: 0,
                msg: format!("frame {}: duplicate detection ids", self.frame_id),
            });
        }
        for (name, set) in [
            ("labels_pos", &self.labels_pos),
            ("labels_uncertain", &self.labels_uncertain),
            ("truth_pos", &self.truth_pos),
        ] {
            for (p, b) in set {
                if !pin_ids.contains(p) || !box_ids.contains(b) {
                    return Err(SimError::Schema {
                        line: 0,
                        msg: format!(
                            "frame {}: {name} pair ({p}, {b}) references a missing id",
                            self.frame_id
                        ),
                    });
                }
            }
        }
        if self.labels_pos.intersection(&self.labels_uncertain).next().is_some() {
            return Err(SimError::Schema {
                line: 0,
                msg: format!(
                    "frame {}: labels_pos and labels_uncertain overlap",
                    self.frame_id
                ),
            });
        }
        let mut seen = BTreeSet::new();
        for (p, _) in &self.truth_pos {
            if !seen.insert(*p) {
                return Err(SimError::Schema {
                    line: 0,
                    msg: format!("frame {}: pin {p} appears twice in truth_pos", self.frame_id),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

fn draw_unique_id(rng: &mut Rng, used: &mut BTreeSet<i64>) -> i64 {
    loop {
        let id = rng.below(100_000) as i64;
        if used.insert(id) {
            return id;
        }
    }
}

fn sample_objects(cfg: &SimConfig, rng: &mut Rng) -> Vec<SceneObject> {
    let n = cfg.objects_min + rng.below(cfg.objects_max - cfg.objects_min + 1);
    let half_fov = (cfg.sensors.camera_fov_deg.to_radians() / 2.0).tan();
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n);
    for i in 0..n {
        let category = Category::ALL[rng.pick_weighted(&cfg.category_weights)];
        let (l0, w0, h0) = category_size(category);
        let scale = 1.0 + 0.06 * rng.normal();
        let size = (l0 * scale.max(0.7), w0 * scale.max(0.7), h0 * scale.max(0.7));
        let mut placed = None;
        for _ in 0..40 {
            let x = rng.range(cfg.x_min, cfg.x_max);
            // Keep the whole footprint inside the camera FOV cone.
            let y_span = (x * half_fov - size.1).min(cfg.lateral_max);
            if y_span <= 0.0 {
                continue;
            }
            let y = rng.range(-y_span, y_span);
            let ok = objects.iter().all(|o| {
                let dx = o.center.0 - x;
                let dy = o.center.1 - y;
                (dx * dx + dy * dy).sqrt() >= cfg.min_separation
            });
            if ok {
                placed = Some((x, y));
                break;
            }
        }
        let Some((x, y)) = placed else { continue };
        let cap = category_speed_cap(category);
        let vx = cap * rng.range(-0.4, 1.0);
        let vy = 0.3 * rng.normal();
        objects.push(SceneObject {
            id: i as i64,
            center: (x, y),
            velocity: (vx, vy),
            size,
            category,
        });
    }
    objects
}

/// Tight 2D box from projecting the eight corners of the object's 3D box.
fn project_object_box(
    obj: &SceneObject,
    k: &CameraIntrinsics,
    tf: &RigidTransform,
) -> Option<(f64, f64, f64, f64)> {
    let (l, w, h) = obj.size;
    let (cx, cy) = obj.center;
    let mut u_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for dx in [-l / 2.0, l / 2.0] {
        for dy in [-w / 2.0, w / 2.0] {
            for dz in [0.0, h] {
                let p = tf.apply([cx + dx, cy + dy, dz]);
                let cam = CamPoint3 {
                    x: p[0],
                    y: p[1],
                    z: p[2],
                };
                let px = project(cam, k).ok()?;
                u_min = u_min.min(px.u);
                u_max = u_max.max(px.u);
                v_min = v_min.min(px.v);
                v_max = v_max.max(px.v);
            }
        }
    }
    Some((u_min, u_max, v_min, v_max))
}

/// Deterministically generates one frame from `seed_for(global_seed, frame_id)`.
pub fn generate_frame(cfg: &SimConfig, global_seed: u64, frame_id: u64) -> FrameRecord {
    let mut rng = Rng::new(seed_for(global_seed, frame_id));
    let k = cfg.sensors.intrinsics().expect("validated config");
    let tf = cfg.sensors.extrinsics();
    let t_camera = frame_id as f64 / cfg.sensors.camera_hz;
    let t_radar = t_camera - cfg.noise.radar_camera_time_offset;
    let noise = &cfg.noise;

    let objects = sample_objects(cfg, &mut rng);

    let mut pins: Vec<RadarPin> = Vec::new();
    let mut boxes: Vec<BBox2D> = Vec::new();
    let mut truth_pos: BTreeSet<(i64, i64)> = BTreeSet::new();
    let mut used_pin_ids = BTreeSet::new();
    let mut used_box_ids = BTreeSet::new();

    for obj in &objects {
        let (l, w, _h) = obj.size;
        let dt_radar = t_radar - t_camera;
        // Object BEV center at the radar timestamp.
        let rx = obj.center.0 + obj.velocity.0 * dt_radar;
        let ry = obj.center.1 + obj.velocity.1 * dt_radar;

        // Reflections: near face first, plus side returns for long vehicles.
        let mut reflections = vec![(rx - l / 2.0, ry)];
        if l > MULTI_PIN_LENGTH && noise.pins_per_large_object_max > 1 {
            let extra = rng.below(noise.pins_per_large_object_max);
            for _ in 0..extra {
                let along = rng.range(0.0, 0.6 * l);
                let side = if rng.bernoulli(0.5) { w / 2.0 } else { -w / 2.0 };
                reflections.push((rx - l / 2.0 + along, ry + side));
            }
        }

        let mut object_pins: Vec<i64> = Vec::new();
        for (px0, py0) in reflections {
            if rng.bernoulli(noise.pin_dropout_prob) {
                // The dropout draw must happen before the noise draws so that
                // per-pin stream usage stays aligned; noise draws below.
                continue;
            }
            let px = px0 + noise.pin_pos_sigma * rng.normal();
            let py = py0 + noise.pin_pos_sigma * rng.normal();
            let vx = obj.velocity.0 + noise.pin_vel_sigma * rng.normal();
            let vy = obj.velocity.1 + noise.pin_vel_sigma * rng.normal();
            let prob = rng.range(0.75, 1.0);
            let id = draw_unique_id(&mut rng, &mut used_pin_ids);
            if let Ok(pin) = RadarPin::new(id, prob, px, py, vx, vy, t_radar) {
                pins.push(pin);
                object_pins.push(id);
            }
        }

        // Camera box.
        if rng.bernoulli(noise.bbox_dropout_prob) {
            continue;
        }
        let Some((u_min, u_max, v_min, v_max)) = project_object_box(obj, &k, &tf) else {
            continue;
        };
        let j = noise.bbox_jitter_sigma;
        let bcx = (u_min + u_max) / 2.0 + j * rng.normal();
        let bcy = (v_min + v_max) / 2.0 + j * rng.normal();
        let bw = (u_max - u_min + j * rng.normal()).max(2.0);
        let bh = (v_max - v_min + j * rng.normal()).max(2.0);
        let id = draw_unique_id(&mut rng, &mut used_box_ids);
        let Ok(bbox) = BBox2D::new(id, bcx, bcy, bw, bh, obj.category) else {
            continue;
        };
        if !bbox.intersects_image(&k) {
            continue;
        }
        boxes.push(bbox);
        for pin_id in object_pins {
            truth_pos.insert((pin_id, id));
        }
    }

    // Clutter pins from static structures: roadside posts and overhead spans.
    let n_clutter = rng.poisson(noise.clutter_rate);
    for _ in 0..n_clutter {
        let overhead = rng.bernoulli(0.4);
        let (px, py) = if overhead {
            (rng.range(20.0, 90.0), rng.range(-8.0, 8.0))
        } else {
            let side = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            (rng.range(8.0, 90.0), side * rng.range(6.0, 15.0))
        };
        let vx = 0.3 * rng.normal();
        let vy = 0.3 * rng.normal();
        let prob = rng.range(0.05, 0.4);
        let id = draw_unique_id(&mut rng, &mut used_pin_ids);
        if let Ok(pin) = RadarPin::new(id, prob, px, py, vx, vy, t_radar) {
            pins.push(pin);
        }
    }

    // False boxes at plausible scale for their fake depth.
    let n_false = rng.poisson(noise.bbox_false_rate);
    for _ in 0..n_false {
        let cat = Category::ALL[rng.below(Category::ALL.len())];
        let (_, w0, h0) = category_size(cat);
        let z = rng.range(10.0, 70.0);
        let bw = (k.fx * w0 / z).max(2.0);
        let bh = (k.fy * h0 / z).max(2.0);
        let u = rng.range(0.1, 0.9) * k.img_w;
        let v_bottom = k.cy + k.fy * cfg.sensors.cam_height / z + 3.0 * rng.normal();
        let id = draw_unique_id(&mut rng, &mut used_box_ids);
        if let Ok(bbox) = BBox2D::new(id, u, v_bottom - bh / 2.0, bw, bh, cat) {
            if bbox.intersects_image(&k) {
                boxes.push(bbox);
            }
        }
    }

    pins.sort_by_key(|p| p.id);
    boxes.sort_by_key(|b| b.id);

    FrameRecord {
        frame_id,
        t_camera,
        t_radar,
        intrinsics: k,
        extrinsics: tf,
        pins,
        boxes,
        labels_pos: BTreeSet::new(),
        labels_uncertain: BTreeSet::new(),
        truth_pos,
    }
}

/// Generates `cfg.frames` records, deterministic in `(cfg, seed)`.
pub fn generate_dataset(cfg: &SimConfig, seed: u64) -> Result<Vec<FrameRecord>, SimError> {
    cfg.validate()?;
    Ok((0..cfg.frames as u64)
        .map(|frame_id| generate_frame(cfg, seed, frame_id))
        .collect())
}

/// Marks plausible-but-dubious non-truth pairs as uncertain: the pin lies in
/// the box's frustum and its depth is within `depth_window` of one of the
/// box's truth partners.
pub fn mark_uncertain(frame: &FrameRecord, depth_window: f64) -> FrameRecord {
    let mut out = frame.clone();
    out.labels_uncertain.clear();
    if depth_window <= 0.0 {
        return out;
    }
    let cam_h = frame.cam_height();
    let pin_grounds: Vec<(i64, GroundPoint)> = frame
        .pins
        .iter()
        .filter_map(|p| frame.pin_ground(p).ok().map(|g| (p.id, g)))
        .collect();
    for b in &frame.boxes {
        let partners: Vec<f64> = frame
            .truth_pos
            .iter()
            .filter(|(_, bid)| *bid == b.id)
            .filter_map(|(pid, _)| {
                frame
                    .pin_by_id(*pid)
                    .and_then(|p| frame.pin_ground(p).ok().map(|g| g.z))
            })
            .collect();
        if partners.is_empty() {
            continue;
        }
        let Ok(fr) = frustum(b, &frame.intrinsics, cam_h) else {
            continue;
        };
        for (pid, g) in &pin_grounds {
            if frame.truth_pos.contains(&(*pid, b.id)) {
                continue;
            }
            if !fr.contains(*g) {
                continue;
            }
            if partners.iter().any(|pz| (g.z - pz).abs() < depth_window) {
                out.labels_uncertain.insert((*pid, b.id));
            }
        }
    }
    // Truth pairs are never uncertain.
    out.labels_uncertain = out
        .labels_uncertain
        .difference(&out.truth_pos)
        .copied()
        .collect();
    out
}

// ---------------------------------------------------------------------------
// RGB rendering
// ---------------------------------------------------------------------------

/// HSV to RGB, all components in [0, 1].
fn hsv(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h = (h.fract() + 1.0).fract() * 6.0;
    let i = h.floor();
    let f = h - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as usize % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Flat shading that stands in for real appearance: each instance gets a
/// distinctive hue from its detection id (golden-ratio spaced) with a small
/// category tint, so object interiors are locally tellable apart the way
/// real vehicles are.
fn instance_color(bx: &BBox2D) -> (f64, f64, f64) {
    let hue = (bx.id as f64) * 0.618_033_988_749_894_9;
    let sat = 0.55 + 0.05 * (bx.category.index() as f64 / 8.0);
    let val = 0.55 + 0.35 * (((bx.id as f64) * 0.754_877_666).fract());
    hsv(hue, sat, val)
}

/// Flat-shaded rectangles over a horizon gradient with converging lane
/// markings, rasterized straight at grid resolution. Returns
/// `3 * grid_h * grid_w` values in [0, 1], channel-major (R, then G, then B).
pub fn render_rgb(frame: &FrameRecord, grid_w: usize, grid_h: usize) -> Vec<f64> {
    let mut img = vec![0.0f64; 3 * grid_h * grid_w];
    let plane = grid_h * grid_w;
    let k = &frame.intrinsics;
    let horizon = (k.cy / k.img_h * grid_h as f64).round() as isize;
    for row in 0..grid_h {
        let (r, g, b) = if (row as isize) < horizon {
            let t = row as f64 / horizon.max(1) as f64;
            (0.50 + 0.20 * t, 0.65 + 0.12 * t, 0.85 + 0.04 * t)
        } else {
            let t = (row as isize - horizon).max(0) as f64 / (grid_h as f64);
            (0.42 - 0.12 * t, 0.42 - 0.12 * t, 0.44 - 0.12 * t)
        };
        for col in 0..grid_w {
            img[row * grid_w + col] = r;
            img[plane + row * grid_w + col] = g;
            img[2 * plane + row * grid_w + col] = b;
        }
    }
    // Lane markings on the ground plane: bright lines converging to the
    // vanishing point give the image horizontal structure.
    let cam_h = frame.extrinsics.translation[1].max(0.1);
    let sx = grid_w as f64 / k.img_w;
    let sy = grid_h as f64 / k.img_h;
    for lane in [-5.25, -1.75, 1.75, 5.25] {
        let mut z = 4.0;
        while z < 120.0 {
            let p = frame.extrinsics.apply([z, lane, 0.0]);
            if let Ok(px) = project(
                CamPoint3 {
                    x: p[0],
                    y: cam_h,
                    z: p[2],
                },
                k,
            ) {
                let col = (px.u * sx).round() as isize;
                let row = (px.v * sy).round() as isize;
                if row >= 0 && row < grid_h as isize && col >= 0 && col < grid_w as isize {
                    let at = row as usize * grid_w + col as usize;
                    img[at] = 0.85;
                    img[plane + at] = 0.85;
                    img[2 * plane + at] = 0.75;
                }
            }
            z *= 1.06;
        }
    }
    // Painter's order: boxes with higher bottom edges (farther) first.
    let mut order: Vec<&BBox2D> = frame.boxes.iter().collect();
    order.sort_by(|a, b| a
        .y_max()
        .partial_cmp(&b.y_max())
        .unwrap()
        .then(a.id.cmp(&b.id)));
    for bx in order {
        let (r, g, b) = instance_color(bx);
        let c0 = ((bx.x_min() * sx).floor().max(0.0)) as usize;
        let c1 = ((bx.x_max() * sx).ceil().min(grid_w as f64)) as usize;
        let r0 = ((bx.y_min() * sy).floor().max(0.0)) as usize;
        let r1 = ((bx.y_max() * sy).ceil().min(grid_h as f64)) as usize;
        for row in r0..r1 {
            for col in c0..c1 {
                img[row * grid_w + col] = r;
                img[plane + row * grid_w + col] = g;
                img[2 * plane + row * grid_w + col] = b;
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless_single() -> SimConfig {
        SimConfig {
            frames: 1,
            objects_min: 1,
            objects_max: 1,
            noise: SensorNoiseConfig::none(),
            ..SimConfig::default()
        }
    }

    #[test]
    fn noiseless_single_object() {
        let frames = generate_dataset(&noiseless_single(), 7).unwrap();
        let f = &frames[0];
        assert_eq!(f.pins.len(), 1);
        assert_eq!(f.boxes.len(), 1);
        assert_eq!(
            f.truth_pos.iter().copied().collect::<Vec<_>>(),
            vec![(f.pins[0].id, f.boxes[0].id)]
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SimConfig {
            frames: 20,
            ..SimConfig::default()
        };
        let a = generate_dataset(&cfg, 123).unwrap();
        let b = generate_dataset(&cfg, 123).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&cfg, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frames_valid() {
        let cfg = SimConfig {
            frames: 50,
            ..SimConfig::default()
        };
        for f in generate_dataset(&cfg, 5).unwrap() {
            f.validate().unwrap();
        }
    }

    #[test]
    fn clutter_rate_mean() {
        let cfg = SimConfig {
            frames: 1000,
            objects_min: 1,
            objects_max: 1,
            noise: SensorNoiseConfig {
                clutter_rate: 3.0,
                pin_dropout_prob: 0.0,
                pins_per_large_object_max: 1,
                bbox_false_rate: 0.0,
                ..SensorNoiseConfig::default()
            },
            ..SimConfig::default()
        };
        let frames = generate_dataset(&cfg, 9).unwrap();
        let clutter_total: usize = frames.iter().map(|f| f.pins.len() - 1).sum();
        let mean = clutter_total as f64 / frames.len() as f64;
        assert!((mean - 3.0).abs() < 0.2, "mean clutter {mean}");
    }

    #[test]
    fn noiseless_pins_inside_truth_frustums() {
        let cfg = SimConfig {
            frames: 40,
            noise: SensorNoiseConfig::none(),
            ..SimConfig::default()
        };
        for f in generate_dataset(&cfg, 11).unwrap() {
            for (pid, bid) in &f.truth_pos {
                let pin = f.pin_by_id(*pid).unwrap();
                let bx = f.box_by_id(*bid).unwrap();
                let fr = frustum(bx, &f.intrinsics, f.cam_height()).unwrap();
                let g = f.pin_ground(pin).unwrap();
                assert!(fr.contains(g), "frame {} pin {pid} box {bid}", f.frame_id);
            }
        }
    }

    #[test]
    fn noiseless_ordinal_property_across_objects() {
        let cfg = SimConfig {
            frames: 60,
            noise: SensorNoiseConfig::none(),
            ..SimConfig::default()
        };
        for f in generate_dataset(&cfg, 13).unwrap() {
            let entries: Vec<(f64, f64)> = f
                .truth_pos
                .iter()
                .map(|(pid, bid)| {
                    let pin = f.pin_by_id(*pid).unwrap();
                    let bx = f.box_by_id(*bid).unwrap();
                    (f.pin_ground(pin).unwrap().z, bx.y_max())
                })
                .collect();
            for i in 0..entries.len() {
                for j in (i + 1)..entries.len() {
                    let (di, yi) = entries[i];
                    let (dj, yj) = entries[j];
                    if (di - dj).abs() > 1e-9 {
                        assert_eq!(
                            di > dj,
                            yi < yj,
                            "frame {}: d {di} vs {dj}, y_max {yi} vs {yj}",
                            f.frame_id
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn multi_pin_only_for_long_objects() {
        let cfg = SimConfig {
            frames: 200,
            ..SimConfig::default()
        };
        for f in generate_dataset(&cfg, 17).unwrap() {
            let mut per_box = std::collections::BTreeMap::new();
            for (pid, bid) in &f.truth_pos {
                per_box.entry(*bid).or_insert_with(Vec::new).push(*pid);
            }
            for (bid, pids) in per_box {
                if pids.len() > 1 {
                    let bx = f.box_by_id(bid).unwrap();
                    assert!(
                        matches!(bx.category, Category::Truck | Category::Bus),
                        "multi-pin category {:?}",
                        bx.category
                    );
                }
            }
        }
    }

    #[test]
    fn category_distribution_matches_weights() {
        let mut cfg = SimConfig {
            frames: 1500,
            objects_min: 6,
            objects_max: 10,
            noise: SensorNoiseConfig {
                bbox_dropout_prob: 0.0,
                bbox_false_rate: 0.0,
                bbox_jitter_sigma: 0.0,
                ..SensorNoiseConfig::default()
            },
            ..SimConfig::default()
        };
        cfg.min_separation = 1.0; // keep placement rejections rare
        let frames = generate_dataset(&cfg, 21).unwrap();
        let mut counts = [0usize; 9];
        let mut total = 0usize;
        for f in &frames {
            for b in &f.boxes {
                counts[b.category.index()] += 1;
                total += 1;
            }
        }
        assert!(total >= 10_000, "need >= 1e4 objects, got {total}");
        let wsum: f64 = cfg.category_weights.iter().sum();
        for (i, c) in counts.iter().enumerate() {
            let p = cfg.category_weights[i] / wsum;
            let expect = p * total as f64;
            let sigma = (total as f64 * p * (1.0 - p)).sqrt();
            assert!(
                ((*c as f64) - expect).abs() <= 3.0 * sigma,
                "category {i}: {c} vs {expect:.0} +/- {sigma:.0}"
            );
        }
    }

    #[test]
    fn mark_uncertain_inline_objects() {
        // Hand-build two in-line objects 0.5 m apart in depth: the cross
        // pairs fall inside each other's frustums within the window.
        let cfg = SimConfig {
            frames: 1,
            objects_min: 2,
            objects_max: 2,
            noise: SensorNoiseConfig::none(),
            ..SimConfig::default()
        };
        let mut f = generate_frame(&cfg, 3, 0);
        // Rebuild with two synthetic objects directly.
        let k = f.intrinsics;
        let tf = f.extrinsics;
        let mk_obj = |id: i64, x: f64| {
            let obj = SceneObject {
                id,
                center: (x, 0.0),
                velocity: (0.0, 0.0),
                size: (4.6, 1.8, 1.5),
                category: Category::Sedan,
            };
            let (u0, u1, v0, v1) = project_object_box(&obj, &k, &tf).unwrap();
            (
                RadarPin::new(id, 0.9, x - 2.3, 0.0, 0.0, 0.0, f.t_radar).unwrap(),
                BBox2D::new(
                    id + 100,
                    (u0 + u1) / 2.0,
                    (v0 + v1) / 2.0,
                    u1 - u0,
                    v1 - v0,
                    Category::Sedan,
                )
                .unwrap(),
            )
        };
        let (p1, b1) = mk_obj(1, 30.0);
        let (p2, b2) = mk_obj(2, 30.5);
        f.pins = vec![p1, p2];
        f.boxes = vec![b1, b2];
        f.truth_pos = [(1, 101), (2, 102)].into_iter().collect();
        let marked = mark_uncertain(&f, 2.0);
        assert!(marked.labels_uncertain.contains(&(1, 102)));
        assert!(marked.labels_uncertain.contains(&(2, 101)));
        // Far-apart objects produce no uncertainty.
        let (p3, b3) = mk_obj(3, 70.0);
        f.pins = vec![f.pins[0], p3];
        f.boxes = vec![f.boxes[0], b3];
        f.truth_pos = [(1, 101), (3, 103)].into_iter().collect();
        let marked = mark_uncertain(&f, 2.0);
        assert!(marked.labels_uncertain.is_empty());
        // Zero window: always empty.
        let marked = mark_uncertain(&f, 0.0);
        assert!(marked.labels_uncertain.is_empty());
    }

    #[test]
    fn render_rgb_in_unit_range() {
        let cfg = SimConfig {
            frames: 3,
            ..SimConfig::default()
        };
        for f in generate_dataset(&cfg, 31).unwrap() {
            let img = render_rgb(&f, 96, 48);
            assert_eq!(img.len(), 3 * 48 * 96);
            assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn config_rejects_bad_fields() {
        let mut cfg = SimConfig::default();
        cfg.noise.pin_dropout_prob = 1.5;
        assert!(matches!(
            cfg.validate(),
            Err(SimError::ConfigInvalid { field: "pin_dropout_prob", .. })
        ));
        let mut cfg = SimConfig::default();
        cfg.objects_min = 0;
        assert!(cfg.validate().is_err());
    }
}
