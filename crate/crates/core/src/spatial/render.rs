//! Anti-aliased rendering of filled shapes through a [`BoxGeom`].

use serde::{Deserialize, Serialize};

use super::geometry::BoxGeom;
use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Disk,
}

impl Shape {
    pub const ALL: [Shape; 2] = [Shape::Square, Shape::Disk];

    pub fn tag(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Disk => "disk",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "square" => Ok(Shape::Square),
            "disk" => Ok(Shape::Disk),
            other => Err(Error::param("tag", format!("unknown shape `{other}`"))),
        }
    }

    /// Membership test in canonical coordinates.
    #[inline]
    pub fn contains(self, u: f64, v: f64) -> bool {
        match self {
            Shape::Square => u.abs() <= 0.5 && v.abs() <= 0.5,
            Shape::Disk => u * u + v * v <= 0.25,
        }
    }
}

/// Blends `shape` into `frame` with the given foreground intensity. Each
/// pixel's coverage is estimated on a `supersample × supersample` grid.
pub fn render_shape(
    frame: &mut Frame,
    shape: Shape,
    geom: &BoxGeom,
    intensity: f64,
    supersample: usize,
) {
    let ss = supersample.max(1);
    let (x0, y0, x1, y1) = geom.bounds();
    let w = frame.width() as i64;
    let h = frame.height() as i64;
    let cx0 = (x0.floor() as i64).clamp(0, w);
    let cx1 = (x1.ceil() as i64).clamp(0, w);
    let cy0 = (y0.floor() as i64).clamp(0, h);
    let cy1 = (y1.ceil() as i64).clamp(0, h);
    let step = 1.0 / ss as f64;
    let total = (ss * ss) as f64;
    for r in cy0..cy1 {
        for c in cx0..cx1 {
            let mut hits = 0usize;
            for i in 0..ss {
                for j in 0..ss {
                    let px = c as f64 + (j as f64 + 0.5) * step;
                    let py = r as f64 + (i as f64 + 0.5) * step;
                    if let Some((u, v)) = geom.inverse(px, py) {
                        if shape.contains(u, v) {
                            hits += 1;
                        }
                    }
                }
            }
            if hits > 0 {
                let cover = hits as f64 / total;
                let (cu, ru) = (c as usize, r as usize);
                let old = frame.get(cu, ru);
                frame.set(
                    cu,
                    ru,
                    (old * (1.0 - cover) + intensity * cover).clamp(0.0, 1.0),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_square_covers_exact_pixels() {
        let mut f = Frame::zeros(10, 10);
        render_shape(
            &mut f,
            Shape::Square,
            &BoxGeom::axis_aligned(5.0, 5.0, 4.0, 4.0),
            1.0,
            4,
        );
        let sum: f64 = f.pixels().iter().sum();
        assert!((sum - 16.0).abs() < 1e-12);
        assert_eq!(f.get(3, 3), 1.0);
        assert_eq!(f.get(2, 3), 0.0);
    }

    #[test]
    fn disk_area_close_to_pi_r_squared() {
        let mut f = Frame::zeros(32, 32);
        render_shape(
            &mut f,
            Shape::Disk,
            &BoxGeom::axis_aligned(16.0, 16.0, 20.0, 20.0),
            1.0,
            8,
        );
        let sum: f64 = f.pixels().iter().sum();
        let want = std::f64::consts::PI * 100.0;
        assert!((sum - want).abs() / want < 0.01, "{sum}");
    }

    #[test]
    fn tags_round_trip() {
        for s in Shape::ALL {
            assert_eq!(Shape::from_tag(s.tag()).unwrap(), s);
        }
        assert!(Shape::from_tag("triangle").is_err());
    }
}
