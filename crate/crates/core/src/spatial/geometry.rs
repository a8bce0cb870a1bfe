//! Oriented, sheared boxes and convex-polygon overlap.
//!
//! A box maps canonical coordinates `(u, v) ∈ [−½, ½]²` to image coordinates
//! by `p = c + H·R(θ)·(w·u, h·v)` where `R` is the rotation by `θ` and
//! `H = [[1, tan φx], [tan φy, 1]]` is applied after it. Image coordinates are
//! continuous with pixel `(col, row)` covering `[col, col+1) × [row, row+1)`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeom {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// Degrees.
    pub theta: f64,
    /// Degrees.
    pub phi_x: f64,
    /// Degrees.
    pub phi_y: f64,
}

impl BoxGeom {
    pub fn axis_aligned(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            x,
            y,
            w,
            h,
            theta: 0.0,
            phi_x: 0.0,
            phi_y: 0.0,
        }
    }

    /// Same pose with both sides multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w: self.w * k,
            h: self.h * k,
            ..*self
        }
    }

    /// The 2×2 matrix `H·R(θ)` as `[a, b, c, d]` (row-major).
    pub fn linear_part(&self) -> [f64; 4] {
        let (s, c) = self.theta.to_radians().sin_cos();
        let tx = self.phi_x.to_radians().tan();
        let ty = self.phi_y.to_radians().tan();
        // R = [[c, −s], [s, c]]
        [c + tx * s, -s + tx * c, ty * c + s, -ty * s + c]
    }

    /// Image point of canonical coordinates `(u, v)`.
    #[inline]
    pub fn map(&self, u: f64, v: f64) -> (f64, f64) {
        let [a, b, c, d] = self.linear_part();
        let (pu, pv) = (self.w * u, self.h * v);
        (self.x + a * pu + b * pv, self.y + c * pu + d * pv)
    }

    /// Canonical coordinates of an image point, or `None` for a singular map.
    pub fn inverse(&self, px: f64, py: f64) -> Option<(f64, f64)> {
        let [a, b, c, d] = self.linear_part();
        let det = a * d - b * c;
        if det.abs() < 1e-12 || self.w == 0.0 || self.h == 0.0 {
            return None;
        }
        let (dx, dy) = (px - self.x, py - self.y);
        let pu = (d * dx - b * dy) / det;
        let pv = (-c * dx + a * dy) / det;
        Some((pu / self.w, pv / self.h))
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            self.map(-0.5, -0.5),
            self.map(0.5, -0.5),
            self.map(0.5, 0.5),
            self.map(-0.5, 0.5),
        ]
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.corners()).abs()
    }

    /// Axis-aligned bounding rectangle `(x_min, y_min, x_max, y_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let cs = self.corners();
        let mut b = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for (x, y) in cs {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }

    /// Whether the box overlaps the frame rectangle `[0, width] × [0, height]`
    /// with positive area.
    pub fn intersects_frame(&self, width: usize, height: usize) -> bool {
        let frame = [
            (0.0, 0.0),
            (width as f64, 0.0),
            (width as f64, height as f64),
            (0.0, height as f64),
        ];
        intersection_area(&self.corners(), &frame) > 0.0
    }

    /// Whether all four corners lie inside `[0, width] × [0, height]`.
    pub fn inside_frame(&self, width: usize, height: usize) -> bool {
        let (x0, y0, x1, y1) = self.bounds();
        x0 >= 0.0 && y0 >= 0.0 && x1 <= width as f64 && y1 <= height as f64
    }
}

/// Signed shoelace area (positive for counter-clockwise in a y-up frame).
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s
}

fn oriented(poly: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = poly.to_vec();
    if polygon_area(&p) < 0.0 {
        p.reverse();
    }
    p
}

/// Area of the intersection of two convex polygons (Sutherland–Hodgman).
pub fn intersection_area(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut out = oriented(a);
    let clip = oriented(b);
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (ax, ay) = clip[i];
        let (bx, by) = clip[(i + 1) % clip.len()];
        let side = |(px, py): (f64, f64)| (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(cross_point(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(cross_point(prev, cur, sp, sc));
            }
        }
    }
    if out.len() < 3 {
        0.0
    } else {
        polygon_area(&out).abs()
    }
}

fn cross_point(p: (f64, f64), q: (f64, f64), sp: f64, sq: f64) -> (f64, f64) {
    let t = sp / (sp - sq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoxGeom, b: &BoxGeom) -> f64 {
    let inter = intersection_area(&a.corners(), &b.corners());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
