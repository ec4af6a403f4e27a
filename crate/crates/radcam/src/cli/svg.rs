//! Deterministic SVG rendering: image-plane scene views with association
//! lines, BEV views with truncated frustums, training curves, and threshold
//! sweeps. Everything is emitted with fixed-precision coordinates so
//! identical inputs give identical bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::geom::{ipm_ground, project, Category, PixelCoord, DEFAULT_ASSUMED_HEIGHT};
use crate::learn::TrainRow;
use crate::scenesim::FrameRecord;

fn category_stroke(cat: Category) -> &'static str {
    match cat {
        Category::Sedan => "#c03434",
        Category::Suv => "#3465c0",
        Category::Truck => "#c08522",
        Category::Bus => "#b8a722",
        Category::Bicycle => "#3e9e3e",
        Category::Tricycle => "#8e44ad",
        Category::Motorcycle => "#2aa8a8",
        Category::Person => "#d06080",
        Category::Unknown => "#808080",
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(w: f64, h: f64, view_w: f64, view_h: f64) -> Svg {
        let mut body = String::new();
        let _ = write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" \
             viewBox=\"0 0 {view_w:.2} {view_h:.2}\">\n"
        );
        body.push_str(
            "<style>\n\
             .pos{stroke:#d62728;stroke-width:3;fill:none}\n\
             .uncertain{stroke:#ff7f0e;stroke-width:3;stroke-dasharray:8 5;fill:none}\n\
             .fp{stroke:#2ca02c;stroke-width:3;fill:none}\n\
             .fn{stroke:#000000;stroke-width:3;stroke-dasharray:3 4;fill:none}\n\
             .grid{stroke:#d8d8d8;stroke-width:1}\n\
             .frustum{fill:#8ab6d6;fill-opacity:0.25;stroke:#5a86a6;stroke-width:1}\n\
             .pin{fill:#1f77b4;stroke:#ffffff;stroke-width:1}\n\
             .label{font-family:monospace;font-size:16px;fill:#202020}\n\
             .curve{fill:none;stroke-width:2}\n\
             </style>\n",
        );
        Svg { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, class: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" class=\"{class}\"/>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" style=\"{style}\"/>"
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, class_or_style: (&str, &str)) {
        let (class, style) = class_or_style;
        let _ = writeln!(
            self.body,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" class=\"{class}\" style=\"{style}\"/>"
        );
    }

    fn polygon(&mut self, pts: &[(f64, f64)], class: &str) {
        let mut s = String::new();
        for (x, y) in pts {
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            "<polygon points=\"{}\" class=\"{class}\"/>",
            s.trim_end()
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let mut s = String::new();
        for (x, y) in pts {
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" class=\"curve\" style=\"stroke:{stroke}\"/>",
            s.trim_end()
        );
    }

    fn text(&mut self, x: f64, y: f64, content: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" class=\"label\">{content}</text>"
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Classifies one association line for styling.
fn line_class(
    pair: (i64, i64),
    truth: &BTreeSet<(i64, i64)>,
    uncertain: &BTreeSet<(i64, i64)>,
) -> &'static str {
    if truth.contains(&pair) {
        "pos"
    } else if uncertain.contains(&pair) {
        "uncertain"
    } else {
        "fp"
    }
}

/// Image-plane view: boxes, projected pins, and association lines. Without
/// predictions the frame's own labels are drawn (positives solid, uncertain
/// dashed); with predictions the lines are styled true-positive /
/// false-positive / uncertain, and missed truth pairs are added dashed
/// black.
pub fn scene_image_svg(frame: &FrameRecord, predictions: Option<&BTreeSet<(i64, i64)>>) -> String {
    let k = &frame.intrinsics;
    let mut svg = Svg::new(k.img_w / 2.0, k.img_h / 2.0, k.img_w, k.img_h);
    svg.rect(0.0, 0.0, k.img_w, k.img_h, "fill:#f2f5f8");
    svg.line(0.0, k.cy, k.img_w, k.cy, "grid");

    let mut pin_px = std::collections::BTreeMap::new();
    for pin in &frame.pins {
        let Ok(cam) = frame.pin_camera(pin, DEFAULT_ASSUMED_HEIGHT) else {
            continue;
        };
        let Ok(px) = project(cam, k) else { continue };
        pin_px.insert(pin.id, px);
    }
    for b in &frame.boxes {
        svg.rect(
            b.x_min(),
            b.y_min(),
            b.width,
            b.height,
            &format!("fill:none;stroke:{};stroke-width:3", category_stroke(b.category)),
        );
        svg.text(b.x_min() + 4.0, b.y_min() - 5.0, &format!("b{}", b.id));
    }

    let lines: Vec<((i64, i64), &'static str)> = match predictions {
        None => frame
            .labels_pos
            .iter()
            .map(|p| (*p, "pos"))
            .chain(frame.labels_uncertain.iter().map(|p| (*p, "uncertain")))
            .collect(),
        Some(pred) => {
            let mut v: Vec<((i64, i64), &'static str)> = pred
                .iter()
                .map(|p| (*p, line_class(*p, &frame.labels_pos, &frame.labels_uncertain)))
                .collect();
            for missed in frame.labels_pos.difference(pred) {
                v.push((*missed, "fn"));
            }
            v
        }
    };
    for ((pin_id, box_id), class) in lines {
        let (Some(px), Some(b)) = (pin_px.get(&pin_id), frame.box_by_id(box_id)) else {
            continue;
        };
        svg.line(px.u, px.v, b.center_x, b.y_max(), class);
    }
    for pin in &frame.pins {
        if let Some(px) = pin_px.get(&pin.id) {
            svg.circle(px.u, px.v, 8.0, ("pin", ""));
            svg.text(px.u + 10.0, px.v + 5.0, &format!("p{}", pin.id));
        }
    }
    svg.finish()
}

const BEV_X_HALF: f64 = 40.0;
const BEV_Z_MAX: f64 = 100.0;
const BEV_SCALE: f64 = 6.0;

fn bev_point(x: f64, z: f64) -> (f64, f64) {
    ((x + BEV_X_HALF) * BEV_SCALE, (BEV_Z_MAX - z) * BEV_SCALE)
}

/// Bird's-eye view: a 10 m grid, truncated frustums, pins as dots, boxes as
/// circles at the IPM estimate of their center, and association lines.
pub fn scene_bev_svg(frame: &FrameRecord, predictions: Option<&BTreeSet<(i64, i64)>>) -> String {
    let w = 2.0 * BEV_X_HALF * BEV_SCALE;
    let h = BEV_Z_MAX * BEV_SCALE;
    let mut svg = Svg::new(w, h, w, h);
    svg.rect(0.0, 0.0, w, h, "fill:#fbfbf8");
    // 10-meter grid.
    let mut gx = -BEV_X_HALF;
    while gx <= BEV_X_HALF {
        let (x0, _) = bev_point(gx, 0.0);
        svg.line(x0, 0.0, x0, h, "grid");
        gx += 10.0;
    }
    let mut gz = 0.0;
    while gz <= BEV_Z_MAX {
        let (_, y0) = bev_point(0.0, gz);
        svg.line(0.0, y0, w, y0, "grid");
        gz += 10.0;
    }

    let cam_h = frame.cam_height();
    let mut box_pos = std::collections::BTreeMap::new();
    for b in &frame.boxes {
        if let Ok(fr) = crate::geom::frustum(b, &frame.intrinsics, cam_h) {
            let poly: Vec<(f64, f64)> = fr
                .polygon()
                .iter()
                .map(|g| bev_point(g.x, g.z))
                .collect();
            svg.polygon(&poly, "frustum");
        }
        // Rough BEV reference for the box: IPM from its center, falling back
        // to the bottom edge when the center sits above the horizon.
        let ground = ipm_ground(
            PixelCoord {
                u: b.center_x,
                v: b.center_y,
            },
            &frame.intrinsics,
            cam_h,
        )
        .or_else(|_| {
            ipm_ground(
                PixelCoord {
                    u: b.center_x,
                    v: b.y_max(),
                },
                &frame.intrinsics,
                cam_h,
            )
        });
        if let Ok(g) = ground {
            box_pos.insert(b.id, bev_point(g.x, g.z));
        }
    }
    let mut pin_pos = std::collections::BTreeMap::new();
    for pin in &frame.pins {
        if let Ok(g) = frame.pin_ground(pin) {
            pin_pos.insert(pin.id, bev_point(g.x, g.z));
        }
    }

    let lines: Vec<((i64, i64), &'static str)> = match predictions {
        None => frame
            .labels_pos
            .iter()
            .map(|p| (*p, "pos"))
            .chain(frame.labels_uncertain.iter().map(|p| (*p, "uncertain")))
            .collect(),
        Some(pred) => pred
            .iter()
            .map(|p| (*p, line_class(*p, &frame.labels_pos, &frame.labels_uncertain)))
            .collect(),
    };
    for ((pin_id, box_id), class) in lines {
        let (Some((x1, y1)), Some((x2, y2))) = (pin_pos.get(&pin_id), box_pos.get(&box_id))
        else {
            continue;
        };
        svg.line(*x1, *y1, *x2, *y2, class);
    }
    for b in &frame.boxes {
        if let Some((x, y)) = box_pos.get(&b.id) {
            svg.circle(
                *x,
                *y,
                8.0,
                ("", &format!("fill:{}", category_stroke(b.category))),
            );
        }
    }
    for (_, (x, y)) in &pin_pos {
        svg.circle(*x, *y, 4.0, ("pin", ""));
    }
    svg.finish()
}

/// Loss curves over iterations: pull, push, ordinal, total.
pub fn curves_svg(rows: &[TrainRow]) -> String {
    let (w, h, pad) = (900.0, 420.0, 50.0);
    let mut svg = Svg::new(w, h, w, h);
    svg.rect(0.0, 0.0, w, h, "fill:#ffffff");
    if rows.is_empty() {
        svg.text(pad, h / 2.0, "empty log");
        return svg.finish();
    }
    let max_iter = rows.last().map(|r| r.iter).unwrap_or(1).max(1) as f64;
    let max_y = rows
        .iter()
        .flat_map(|r| [r.pull, r.push, r.ord, r.total])
        .fold(1e-9, f64::max);
    let sx = |it: f64| pad + (w - 2.0 * pad) * it / max_iter;
    let sy = |v: f64| h - pad - (h - 2.0 * pad) * (v / max_y);
    svg.line(pad, h - pad, w - pad, h - pad, "grid");
    svg.line(pad, pad, pad, h - pad, "grid");
    let series: [(&str, &str, fn(&TrainRow) -> f64); 4] = [
        ("pull", "#d62728", |r| r.pull),
        ("push", "#1f77b4", |r| r.push),
        ("ord", "#ff7f0e", |r| r.ord),
        ("total", "#202020", |r| r.total),
    ];
    for (i, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (sx(r.iter as f64), sy(get(r)))).collect();
        svg.polyline(&pts, color);
        svg.text(pad + 120.0 * i as f64, pad / 2.0, name);
        svg.line(
            pad + 120.0 * i as f64 - 24.0,
            pad / 2.0 - 5.0,
            pad + 120.0 * i as f64 - 4.0,
            pad / 2.0 - 5.0,
            "grid",
        );
    }
    svg.text(w - pad - 60.0, h - pad + 30.0, &format!("iter {max_iter:.0}"));
    svg.text(pad, pad - 10.0, &format!("max {max_y:.3}"));
    svg.finish()
}

/// Precision / recall / F1 against the association threshold.
pub fn sweep_svg(points: &[(f64, f64, f64, f64)]) -> String {
    let (w, h, pad) = (900.0, 420.0, 50.0);
    let mut svg = Svg::new(w, h, w, h);
    svg.rect(0.0, 0.0, w, h, "fill:#ffffff");
    if points.is_empty() {
        svg.text(pad, h / 2.0, "empty sweep");
        return svg.finish();
    }
    let max_x = points.iter().map(|p| p.0).fold(1e-9, f64::max);
    let sx = |t: f64| pad + (w - 2.0 * pad) * t / max_x;
    let sy = |v: f64| h - pad - (h - 2.0 * pad) * v;
    svg.line(pad, h - pad, w - pad, h - pad, "grid");
    svg.line(pad, pad, pad, h - pad, "grid");
    let series: [(&str, &str, usize); 3] = [
        ("precision", "#1f77b4", 1),
        ("recall", "#2ca02c", 2),
        ("f1", "#d62728", 3),
    ];
    for (i, (name, color, idx)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .map(|p| {
                let v = match idx {
                    1 => p.1,
                    2 => p.2,
                    _ => p.3,
                };
                (sx(p.0), sy(v))
            })
            .collect();
        svg.polyline(&pts, color);
        svg.text(pad + 140.0 * i as f64, pad / 2.0, name);
    }
    svg.text(w - pad - 100.0, h - pad + 30.0, &format!("threshold {max_x:.1}"));
    svg.finish()
}
