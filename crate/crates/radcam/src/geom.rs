//! Coordinate systems, pinhole projection, inverse projective mapping,
//! bounding-box frustums, and constant-velocity motion compensation.
//!
//! Conventions, used everywhere in this crate:
//! - camera frame: X right, Y down, Z forward (depth);
//! - radar frame: x forward, y left, implicit z up;
//! - the fixed axis relabeling between the two lives inside
//!   [`RigidTransform`] construction;
//! - pixel coordinates are continuous; rasterization belongs to `encode`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Elevation (meters above ground) assumed when lifting a bird's-eye-view
/// radar pin to 3D; pins carry no elevation of their own.
pub const DEFAULT_ASSUMED_HEIGHT: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("point is behind the camera (Z = {z})")]
    BehindCamera { z: f64 },
    #[error("pixel ray does not meet the ground (v = {v}, horizon at {horizon})")]
    AboveHorizon { v: f64, horizon: f64 },
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },
}

fn ensure_finite(what: &'static str, values: &[f64]) -> Result<(), GeomError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeomError::Invalid {
            what,
            why: "non-finite component".into(),
        })
    }
}

// ---------------------------------------------------------------------------
// Camera intrinsics
// ---------------------------------------------------------------------------

/// Pinhole intrinsics plus the image size they were calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub img_w: f64,
    pub img_h: f64,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        img_w: f64,
        img_h: f64,
    ) -> Result<Self, GeomError> {
        ensure_finite("intrinsics", &[fx, fy, cx, cy, img_w, img_h])?;
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeomError::Invalid {
                what: "intrinsics",
                why: format!("focal lengths must be positive (fx={fx}, fy={fy})"),
            });
        }
        if !(0.0 < cx && cx < img_w && 0.0 < cy && cy < img_h) {
            return Err(GeomError::Invalid {
                what: "intrinsics",
                why: format!("principal point ({cx}, {cy}) outside {img_w}x{img_h} image"),
            });
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            img_w,
            img_h,
        })
    }

    /// Intrinsics from a horizontal field of view, principal point at the
    /// image center, square pixels.
    pub fn from_fov(img_w: f64, img_h: f64, fov_x_deg: f64) -> Result<Self, GeomError> {
        let half = (fov_x_deg.to_radians() / 2.0).tan();
        if half <= 0.0 {
            return Err(GeomError::Invalid {
                what: "intrinsics",
                why: format!("bad field of view {fov_x_deg} deg"),
            });
        }
        let f = img_w / 2.0 / half;
        CameraIntrinsics::new(f, f, img_w / 2.0, img_h / 2.0, img_w, img_h)
    }

    pub fn contains(&self, px: PixelCoord) -> bool {
        px.u >= 0.0 && px.u < self.img_w && px.v >= 0.0 && px.v < self.img_h
    }
}

// ---------------------------------------------------------------------------
// Rigid transform (radar -> camera)
// ---------------------------------------------------------------------------

/// Fixed relabeling from the radar axes (x fwd, y left, z up) to the camera
/// axes (X right, Y down, Z forward).
const RADAR_TO_CAMERA_AXES: [[f64; 3]; 3] = [
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0],
];

const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Maps radar coordinates to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Row-major 3x3 rotation, radar -> camera (includes the axis relabeling).
    pub rotation: [[f64; 3]; 3],
    /// Translation in camera coordinates (meters).
    pub translation: [f64; 3],
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

impl RigidTransform {
    /// Validates orthonormality and a +1 determinant before accepting.
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self, GeomError> {
        for row in &rotation {
            ensure_finite("rigid transform", row)?;
        }
        ensure_finite("rigid transform", &translation)?;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > ORTHONORMALITY_TOL {
                    return Err(GeomError::Invalid {
                        what: "rigid transform",
                        why: format!("rotation not orthonormal (col {i}·col {j} = {dot})"),
                    });
                }
            }
        }
        let det = det3(&rotation);
        if (det - 1.0).abs() > ORTHONORMALITY_TOL {
            return Err(GeomError::Invalid {
                what: "rigid transform",
                why: format!("rotation determinant {det} != +1"),
            });
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    /// The pure axis relabeling: no extra rotation, zero translation.
    pub fn axes_only() -> Self {
        RigidTransform {
            rotation: RADAR_TO_CAMERA_AXES,
            translation: [0.0, 0.0, 0.0],
        }
    }

    /// Composes an extra camera-frame rotation and translation with the
    /// fixed axis relabeling: `p_cam = extra_rotation · relabel(p_radar) + translation`.
    pub fn from_mount(
        extra_rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    ) -> Result<Self, GeomError> {
        RigidTransform::new(
            mat_mul(&extra_rotation, &RADAR_TO_CAMERA_AXES),
            translation,
        )
    }

    /// Standard mounting: level camera `cam_height` meters above the ground
    /// plane and `cam_setback` meters behind the radar origin.
    pub fn standard_mount(cam_height: f64, cam_setback: f64) -> Self {
        RigidTransform {
            rotation: RADAR_TO_CAMERA_AXES,
            translation: [0.0, cam_height, cam_setback],
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// Rotates a vector (no translation), e.g. a velocity.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }
}

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

/// One object-level radar detection in the bird's-eye view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPin {
    pub id: i64,
    /// Probability that the pin corresponds to a real obstacle.
    pub obstacle_prob: f64,
    /// BEV position, radar frame (meters); x points forward.
    pub pos_x: f64,
    pub pos_y: f64,
    /// BEV velocity, radar frame (m/s).
    pub vel_x: f64,
    pub vel_y: f64,
    /// Measurement timestamp (seconds).
    pub t: f64,
}

impl RadarPin {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: i64,
        obstacle_prob: f64,
        pos_x: f64,
        pos_y: f64,
        vel_x: f64,
        vel_y: f64,
        t: f64,
    ) -> Result<Self, GeomError> {
        ensure_finite("radar pin", &[obstacle_prob, pos_x, pos_y, vel_x, vel_y, t])?;
        if !(0.0..=1.0).contains(&obstacle_prob) {
            return Err(GeomError::Invalid {
                what: "radar pin",
                why: format!("obstacle_prob {obstacle_prob} outside [0, 1]"),
            });
        }
        if pos_x <= 0.0 {
            return Err(GeomError::Invalid {
                what: "radar pin",
                why: format!("pos_x {pos_x} not in front of the radar"),
            });
        }
        Ok(RadarPin {
            id,
            obstacle_prob,
            pos_x,
            pos_y,
            vel_x,
            vel_y,
            t,
        })
    }

    /// Moves the pin to `t_target` under the constant-velocity assumption.
    /// Velocity, id and probability are unchanged.
    pub fn align_temporal(&self, t_target: f64) -> RadarPin {
        let dt = t_target - self.t;
        RadarPin {
            pos_x: self.pos_x + self.vel_x * dt,
            pos_y: self.pos_y + self.vel_y * dt,
            t: t_target,
            ..*self
        }
    }

    /// Lifts the BEV pin to 3D at `assumed_height` above ground and maps it
    /// into camera coordinates.
    pub fn to_camera(
        &self,
        tf: &RigidTransform,
        assumed_height: f64,
    ) -> Result<CamPoint3, GeomError> {
        let p = tf.apply([self.pos_x, self.pos_y, assumed_height]);
        let cam = CamPoint3 {
            x: p[0],
            y: p[1],
            z: p[2],
        };
        if cam.z <= 0.0 {
            return Err(GeomError::BehindCamera { z: cam.z });
        }
        Ok(cam)
    }
}

/// Object categories reported by the camera detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Sedan,
    Suv,
    Truck,
    Bus,
    Bicycle,
    Tricycle,
    Motorcycle,
    Person,
    Unknown,
}

pub const CATEGORY_COUNT: usize = 9;

impl Category {
    pub const ALL: [Category; CATEGORY_COUNT] = [
        Category::Sedan,
        Category::Suv,
        Category::Truck,
        Category::Bus,
        Category::Bicycle,
        Category::Tricycle,
        Category::Motorcycle,
        Category::Person,
        Category::Unknown,
    ];

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Sedan => "sedan",
            Category::Suv => "suv",
            Category::Truck => "truck",
            Category::Bus => "bus",
            Category::Bicycle => "bicycle",
            Category::Tricycle => "tricycle",
            Category::Motorcycle => "motorcycle",
            Category::Person => "person",
            Category::Unknown => "unknown",
        }
    }
}

/// One 2D camera detection in the image plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub id: i64,
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
    pub category: Category,
}

impl BBox2D {
    pub fn new(
        id: i64,
        center_x: f64,
        center_y: f64,
        width: f64,
        height: f64,
        category: Category,
    ) -> Result<Self, GeomError> {
        ensure_finite("bounding box", &[center_x, center_y, width, height])?;
        if width <= 0.0 || height <= 0.0 {
            return Err(GeomError::Invalid {
                what: "bounding box",
                why: format!("non-positive size {width}x{height}"),
            });
        }
        Ok(BBox2D {
            id,
            center_x,
            center_y,
            width,
            height,
            category,
        })
    }

    /// Bottom edge of the box: the image-plane proxy for object depth.
    pub fn y_max(&self) -> f64 {
        self.center_y + self.height / 2.0
    }

    pub fn y_min(&self) -> f64 {
        self.center_y - self.height / 2.0
    }

    pub fn x_min(&self) -> f64 {
        self.center_x - self.width / 2.0
    }

    pub fn x_max(&self) -> f64 {
        self.center_x + self.width / 2.0
    }

    pub fn intersects_image(&self, k: &CameraIntrinsics) -> bool {
        self.x_max() > 0.0 && self.x_min() < k.img_w && self.y_max() > 0.0 && self.y_min() < k.img_h
    }
}

// ---------------------------------------------------------------------------
// Projection and inverse projective mapping
// ---------------------------------------------------------------------------

/// A point in camera coordinates; `z` is the depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamPoint3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CamPoint3 {
    pub fn depth(&self) -> f64 {
        self.z
    }
}

/// Continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

/// A point on the ground plane in camera-aligned BEV coordinates:
/// `x` right, `z` forward, both in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPoint {
    pub x: f64,
    pub z: f64,
}

impl GroundPoint {
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.z * self.z).sqrt()
    }
}

/// Pinhole projection. Whether the result lands inside the image is the
/// caller's concern (`CameraIntrinsics::contains`), not an error.
pub fn project(p: CamPoint3, k: &CameraIntrinsics) -> Result<PixelCoord, GeomError> {
    if p.z <= 0.0 {
        return Err(GeomError::BehindCamera { z: p.z });
    }
    Ok(PixelCoord {
        u: k.fx * p.x / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
    })
}

/// Intersects the back-projected pixel ray with the ground plane, for a level
/// camera `cam_height` meters above it. Inverse of [`project`] for ground
/// points.
pub fn ipm_ground(
    px: PixelCoord,
    k: &CameraIntrinsics,
    cam_height: f64,
) -> Result<GroundPoint, GeomError> {
    let dir_y = (px.v - k.cy) / k.fy;
    if dir_y <= 0.0 {
        return Err(GeomError::AboveHorizon {
            v: px.v,
            horizon: k.cy,
        });
    }
    let z = cam_height / dir_y;
    let x = z * (px.u - k.cx) / k.fx;
    Ok(GroundPoint { x, z })
}

// ---------------------------------------------------------------------------
// Frustums
// ---------------------------------------------------------------------------

/// Frustum truncation widths (meters): the footprint of a plausibly matched
/// vehicle lies between these.
pub const FRUSTUM_NEAR_WIDTH: f64 = 1.0;
pub const FRUSTUM_FAR_WIDTH: f64 = 5.0;
/// Range cap applied when materializing the truncated polygon; keeps
/// degenerate (near-zero-width) frustums from producing unbounded shapes.
pub const FRUSTUM_MAX_RANGE: f64 = 150.0;

/// BEV wedge spanned by the back-projections of a bounding box's side edges.
#[derive(Debug, Clone, Copy)]
pub struct Frustum {
    /// Unit direction of the ray through the left box edge, (x, z).
    pub dir_left: (f64, f64),
    /// Unit direction of the ray through the right box edge, (x, z).
    pub dir_right: (f64, f64),
}

fn cross2(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

impl Frustum {
    /// True when the BEV point lies inside the untruncated wedge.
    pub fn contains(&self, p: GroundPoint) -> bool {
        if p.z <= 0.0 {
            return false;
        }
        let q = (p.x, p.z);
        // dir_left sits at smaller x than dir_right, so the point must be
        // counterclockwise of the right ray and clockwise of the left ray.
        cross2(self.dir_left, q) <= 0.0 && cross2(self.dir_right, q) >= 0.0
    }

    /// Angular spread between the side rays, expressed as the chord length
    /// between the unit directions; frustum width at ray parameter `s` is
    /// `s * spread`.
    pub fn spread(&self) -> f64 {
        let dx = self.dir_left.0 - self.dir_right.0;
        let dz = self.dir_left.1 - self.dir_right.1;
        (dx * dx + dz * dz).sqrt()
    }

    /// Truncated quadrilateral between the widths of
    /// [`FRUSTUM_NEAR_WIDTH`] and [`FRUSTUM_FAR_WIDTH`], capped at
    /// [`FRUSTUM_MAX_RANGE`]. Vertices in order: near-left, far-left,
    /// far-right, near-right.
    pub fn polygon(&self) -> [GroundPoint; 4] {
        let spread = self.spread();
        let (s_near, s_far) = if spread <= f64::EPSILON {
            (FRUSTUM_MAX_RANGE, FRUSTUM_MAX_RANGE)
        } else {
            (
                (FRUSTUM_NEAR_WIDTH / spread).min(FRUSTUM_MAX_RANGE),
                (FRUSTUM_FAR_WIDTH / spread).min(FRUSTUM_MAX_RANGE),
            )
        };
        let at = |d: (f64, f64), s: f64| GroundPoint {
            x: d.0 * s,
            z: d.1 * s,
        };
        [
            at(self.dir_left, s_near),
            at(self.dir_left, s_far),
            at(self.dir_right, s_far),
            at(self.dir_right, s_near),
        ]
    }

    pub fn polygon_area(&self) -> f64 {
        let poly = self.polygon();
        let mut area = 0.0;
        for i in 0..4 {
            let a = poly[i];
            let b = poly[(i + 1) % 4];
            area += a.x * b.z - b.x * a.z;
        }
        area.abs() / 2.0
    }
}

/// Back-projects the box's side edges (at its bottom corners) onto the
/// ground plane and returns the wedge between them.
pub fn frustum(b: &BBox2D, k: &CameraIntrinsics, cam_height: f64) -> Result<Frustum, GeomError> {
    let v = b.y_max();
    let left = ipm_ground(PixelCoord { u: b.x_min(), v }, k, cam_height)?;
    let right = ipm_ground(PixelCoord { u: b.x_max(), v }, k, cam_height)?;
    let unit = |g: GroundPoint| {
        let n = g.range();
        (g.x / n, g.z / n)
    };
    Ok(Frustum {
        dir_left: unit(left),
        dir_right: unit(right),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_k() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 914.0, 474.0, 1828.0, 948.0).unwrap()
    }

    fn pin(pos_x: f64, pos_y: f64, vel_x: f64, vel_y: f64, t: f64) -> RadarPin {
        RadarPin::new(1, 0.9, pos_x, pos_y, vel_x, vel_y, t).unwrap()
    }

    #[test]
    fn align_identity_at_same_time() {
        let p = pin(10.0, 0.0, 5.0, 0.0, 0.0).align_temporal(0.0);
        assert_eq!(p.pos_x, 10.0);
    }

    #[test]
    fn align_forward() {
        let p = pin(10.0, 0.0, 5.0, 0.0, 0.0).align_temporal(0.02);
        assert!((p.pos_x - 10.1).abs() < 1e-12);
        assert_eq!(p.t, 0.02);
        assert_eq!(p.vel_x, 5.0);
    }

    #[test]
    fn align_backward() {
        let p = pin(10.0, 0.0, 5.0, 0.0, 0.02).align_temporal(0.0);
        assert!((p.pos_x - 9.9).abs() < 1e-12);
    }

    #[test]
    fn to_camera_axes_only() {
        let tf = RigidTransform::axes_only();
        let c = pin(10.0, 0.0, 0.0, 0.0, 0.0).to_camera(&tf, 0.0).unwrap();
        assert_eq!((c.x, c.y, c.z), (0.0, 0.0, 10.0));
    }

    #[test]
    fn to_camera_with_translation() {
        let tf = RigidTransform::from_mount(
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0, 0.0, 1.0],
        )
        .unwrap();
        let c = pin(10.0, 0.0, 0.0, 0.0, 0.0).to_camera(&tf, 0.0).unwrap();
        assert_eq!(c.z, 11.0);
    }

    #[test]
    fn to_camera_behind_rejected() {
        let tf = RigidTransform::from_mount(
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0, 0.0, -20.0],
        )
        .unwrap();
        let err = pin(10.0, 0.0, 0.0, 0.0, 0.0).to_camera(&tf, 0.0);
        assert!(matches!(err, Err(GeomError::BehindCamera { .. })));
    }

    #[test]
    fn project_principal_point() {
        let px = project(
            CamPoint3 {
                x: 0.0,
                y: 0.0,
                z: 10.0,
            },
            &test_k(),
        )
        .unwrap();
        assert_eq!((px.u, px.v), (914.0, 474.0));
    }

    #[test]
    fn project_lateral_offset() {
        let k = test_k();
        let px = project(
            CamPoint3 {
                x: 2.0,
                y: 0.0,
                z: 10.0,
            },
            &k,
        )
        .unwrap();
        assert_eq!((px.u, px.v), (1114.0, 474.0));
        let px2 = project(
            CamPoint3 {
                x: 2.0,
                y: 0.0,
                z: 20.0,
            },
            &k,
        )
        .unwrap();
        assert_eq!((px2.u, px2.v), (1014.0, 474.0));
    }

    #[test]
    fn project_behind_camera() {
        let r = project(
            CamPoint3 {
                x: 0.0,
                y: 0.0,
                z: -1.0,
            },
            &test_k(),
        );
        assert!(matches!(r, Err(GeomError::BehindCamera { .. })));
    }

    #[test]
    fn ipm_roundtrip_on_ground() {
        let k = test_k();
        let h = 1.5;
        let ground = CamPoint3 {
            x: 3.0,
            y: h,
            z: 25.0,
        };
        let px = project(ground, &k).unwrap();
        let back = ipm_ground(px, &k, h).unwrap();
        assert!((back.x - ground.x).abs() < 1e-9);
        assert!((back.z - ground.z).abs() < 1e-9);
    }

    #[test]
    fn ipm_above_horizon() {
        let k = test_k();
        let r = ipm_ground(
            PixelCoord {
                u: k.cx,
                v: k.cy,
            },
            &k,
            1.5,
        );
        assert!(matches!(r, Err(GeomError::AboveHorizon { .. })));
    }

    #[test]
    fn ipm_constructed_depth() {
        let k = test_k();
        let h = 1.5;
        // Forward-construct the pixel row that a 30 m ground point lands on.
        let px = project(
            CamPoint3 {
                x: 0.0,
                y: h,
                z: 30.0,
            },
            &k,
        )
        .unwrap();
        let g = ipm_ground(px, &k, h).unwrap();
        assert!((g.z - 30.0).abs() < 1e-6);
    }

    #[test]
    fn frustum_contains_object_ground_point() {
        let k = test_k();
        let h = 1.5;
        // A 2 m wide object with its near face 20 m out, centered 1 m right.
        let z = 20.0;
        let corners = [
            CamPoint3 { x: 0.0, y: h, z },
            CamPoint3 { x: 2.0, y: h, z },
        ];
        let pxs: Vec<PixelCoord> = corners.iter().map(|c| project(*c, &k).unwrap()).collect();
        let b = BBox2D::new(
            0,
            (pxs[0].u + pxs[1].u) / 2.0,
            pxs[0].v - 20.0,
            pxs[1].u - pxs[0].u,
            40.0,
        // category irrelevant here
            Category::Sedan,
        )
        .unwrap();
        let f = frustum(&b, &k, h).unwrap();
        assert!(f.contains(GroundPoint { x: 1.0, z }));
        assert!(!f.contains(GroundPoint { x: 6.0, z }));
        assert!(!f.contains(GroundPoint { x: 1.0, z: -5.0 }));
    }

    #[test]
    fn frustum_width_matches_ipm_span() {
        let k = test_k();
        let h = 1.5;
        // Centered box spanning +/-100 px whose bottom edge back-projects to
        // 20 m ground distance.
        let v = project(
            CamPoint3 {
                x: 0.0,
                y: h,
                z: 20.0,
            },
            &k,
        )
        .unwrap()
        .v;
        let b = BBox2D::new(0, k.cx, v - 30.0, 200.0, 60.0, Category::Sedan).unwrap();
        let f = frustum(&b, &k, h).unwrap();
        let left = ipm_ground(PixelCoord { u: k.cx - 100.0, v }, &k, h).unwrap();
        let right = ipm_ground(PixelCoord { u: k.cx + 100.0, v }, &k, h).unwrap();
        let span = right.x - left.x;
        // Width of the wedge at the ground distance of the bottom edge.
        let s = (left.range() + right.range()) / 2.0;
        let width = f.spread() * s;
        assert!(
            (width - span).abs() < 1e-6,
            "width {width} vs span {span}"
        );
    }

    #[test]
    fn frustum_degenerates_with_box_width() {
        let k = test_k();
        let h = 1.5;
        let v = k.cy + 100.0;
        let wide = frustum(
            &BBox2D::new(0, k.cx, v - 10.0, 200.0, 20.0, Category::Sedan).unwrap(),
            &k,
            h,
        )
        .unwrap();
        let narrow = frustum(
            &BBox2D::new(0, k.cx, v - 10.0, 1e-6, 20.0, Category::Sedan).unwrap(),
            &k,
            h,
        )
        .unwrap();
        assert!(narrow.polygon_area() < 1e-6);
        assert!(wide.polygon_area() > narrow.polygon_area());
    }

    #[test]
    fn frustum_above_horizon_rejected() {
        let k = test_k();
        let b = BBox2D::new(0, k.cx, k.cy - 50.0, 100.0, 40.0, Category::Sedan).unwrap();
        assert!(matches!(
            frustum(&b, &k, 1.5),
            Err(GeomError::AboveHorizon { .. })
        ));
    }

    #[test]
    fn rigid_transform_rejects_non_orthonormal() {
        let r = RigidTransform::new(
            [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
        );
        assert!(r.is_err());
    }

    #[test]
    fn rigid_transform_rejects_reflection() {
        let r = RigidTransform::new(
            [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
        );
        assert!(r.is_err());
    }

    #[test]
    fn pin_constructor_guards() {
        assert!(RadarPin::new(0, 1.5, 10.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(RadarPin::new(0, 0.5, -1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(RadarPin::new(0, 0.5, f64::NAN, 0.0, 0.0, 0.0, 0.0).is_err());
    }
}
