//! Region proposals over a scale/stride grid and the rotated, sheared
//! region search that yields one [`SpatialTuple`] per frame.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::geometry::BoxGeom;
use super::net::{ConvNet, Workspace, BACKGROUND};
use crate::error::{Error, Result};
use crate::frame::Frame;

/// Per-frame record `{tag, p, x, y, h, w, θ, φx, φy}`. Angles in degrees,
/// positions and sizes in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialTuple {
    pub tag: String,
    pub p: f64,
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub w: f64,
    pub theta: f64,
    pub phi_x: f64,
    pub phi_y: f64,
}

impl SpatialTuple {
    pub fn geom(&self) -> BoxGeom {
        BoxGeom {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
            theta: self.theta,
            phi_x: self.phi_x,
            phi_y: self.phi_y,
        }
    }

    pub fn from_geom(tag: impl Into<String>, p: f64, g: &BoxGeom) -> Self {
        Self {
            tag: tag.into(),
            p,
            x: g.x,
            y: g.y,
            h: g.h,
            w: g.w,
            theta: g.theta,
            phi_x: g.phi_x,
            phi_y: g.phi_y,
        }
    }

    pub fn is_background(&self) -> bool {
        self.tag == BACKGROUND
    }

    /// The seven motion variables in the order x, y, h, w, θ, φx, φy.
    pub fn motion(&self) -> [f64; 7] {
        [
            self.x, self.y, self.h, self.w, self.theta, self.phi_x, self.phi_y,
        ]
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", format!("{} outside [0, 1]", self.p)));
        }
        if !(self.h > 0.0 && self.w > 0.0) {
            return Err(Error::param("h/w", "must be positive"));
        }
        if !self.geom().intersects_frame(width, height) {
            return Err(Error::Degenerate("tuple box lies outside the frame".into()));
        }
        Ok(())
    }
}

pub const MOTION_VARIABLES: [&str; 7] = ["x", "y", "h", "w", "theta", "phi_x", "phi_y"];

#[derive(Serialize, Deserialize)]
struct TupleRow {
    frame: usize,
    tag: String,
    p: f64,
    x: f64,
    y: f64,
    h: f64,
    w: f64,
    theta: f64,
    phi_x: f64,
    phi_y: f64,
}

/// CSV with header `frame,tag,p,x,y,h,w,theta,phi_x,phi_y`; the frame column
/// is the position in `tuples`.
pub fn write_tuples_csv<W: Write>(w: W, tuples: &[SpatialTuple]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (frame, t) in tuples.iter().enumerate() {
        wr.serialize(TupleRow {
            frame,
            tag: t.tag.clone(),
            p: t.p,
            x: t.x,
            y: t.y,
            h: t.h,
            w: t.w,
            theta: t.theta,
            phi_x: t.phi_x,
            phi_y: t.phi_y,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_tuples_csv<R: Read>(r: R) -> Result<Vec<SpatialTuple>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    let want = [
        "frame", "tag", "p", "x", "y", "h", "w", "theta", "phi_x", "phi_y",
    ];
    if header.iter().ne(want.iter().copied()) {
        return Err(Error::Format {
            format: "tuple CSV",
            reason: format!("expected header {}", want.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<TupleRow>().enumerate() {
        let row = row?;
        if row.frame != i {
            return Err(Error::Format {
                format: "tuple CSV",
                reason: format!("row {i} has frame index {}", row.frame),
            });
        }
        out.push(SpatialTuple {
            tag: row.tag,
            p: row.p,
            x: row.x,
            y: row.y,
            h: row.h,
            w: row.w,
            theta: row.theta,
            phi_x: row.phi_x,
            phi_y: row.phi_y,
        });
    }
    Ok(out)
}

/// Discretization of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchGrid {
    /// Square box sides in pixels, ascending.
    pub scales: Vec<usize>,
    pub stride: usize,
    /// Rotation grid in degrees.
    pub thetas: Vec<f64>,
    /// Shared grid for both skew angles, in degrees.
    pub phis: Vec<f64>,
    /// Chebyshev radius around the prior centre, in pixels.
    pub prior_radius: f64,
    /// Scale steps allowed either side of the prior's scale.
    pub prior_scale_steps: usize,
    /// Minimum probability for declaring a non-background tag.
    pub threshold: f64,
    /// Standard deviation in degrees of a zero-mean Gaussian prior on both
    /// skews, added to the log-odds when ranking poses. Opposite skews
    /// `(a, −a)` equal a scaled rotation by `−a`, so without a prior the
    /// rotation estimate is ambiguous. `None` ranks by log-odds alone.
    #[serde(default)]
    pub skew_prior_std: Option<f64>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            scales: vec![8, 12, 16, 24, 32],
            stride: 4,
            thetas: (-3..=3).map(|k| 15.0 * k as f64).collect(),
            phis: (-2..=2).map(|k| 10.0 * k as f64).collect(),
            prior_radius: 8.0,
            prior_scale_steps: 1,
            threshold: 0.5,
            skew_prior_std: Some(10.0),
        }
    }
}

impl SearchGrid {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|&s| s < 2) {
            return Err(Error::param(
                "scales",
                "need at least one scale of 2 px or more",
            ));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("scales", "must be strictly ascending"));
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        if self.thetas.is_empty() || self.phis.is_empty() {
            return Err(Error::param("thetas/phis", "grids must be nonempty"));
        }
        if self.phis.iter().any(|p| p.abs() >= 45.0) {
            return Err(Error::param(
                "phis",
                "skew angles must stay below 45 degrees",
            ));
        }
        if self.prior_radius.is_nan() || self.prior_radius < 0.0 {
            return Err(Error::param("prior_radius", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::param("threshold", "must lie in [0, 1]"));
        }
        if let Some(sd) = self.skew_prior_std {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::param("skew_prior_std", "must be positive"));
            }
        }
        Ok(())
    }

    /// Ranking key of a pose: log-odds plus the log skew prior.
    pub fn rank(&self, log_odds: f64, phi_x: f64, phi_y: f64) -> f64 {
        match self.skew_prior_std {
            Some(sd) => log_odds - (phi_x * phi_x + phi_y * phi_y) / (2.0 * sd * sd),
            None => log_odds,
        }
    }

    pub fn transforms_per_box(&self) -> usize {
        self.thetas.len() * self.phis.len() * self.phis.len()
    }

    /// Index of the scale closest (in log ratio) to a box of `w × h`.
    pub fn nearest_scale(&self, w: f64, h: f64) -> usize {
        let size = (w * h).sqrt().max(1e-9);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &s) in self.scales.iter().enumerate() {
            let d = (size / s as f64).ln().abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Number of stride positions for a scale on a `width × height` frame.
    pub fn grid_count(&self, width: usize, height: usize, scale: usize) -> usize {
        if scale > width || scale > height {
            return 0;
        }
        ((width - scale) / self.stride + 1) * ((height - scale) / self.stride + 1)
    }
}

/// An axis-aligned candidate box before rotation/skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// Index into [`SearchGrid::scales`]; `None` for the full-frame fallback.
    pub scale: Option<usize>,
}

impl Candidate {
    pub fn geom(&self, theta: f64, phi_x: f64, phi_y: f64) -> BoxGeom {
        BoxGeom {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
            theta,
            phi_x,
            phi_y,
        }
    }
}

fn full_grid(width: usize, height: usize, grid: &SearchGrid) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (si, &s) in grid.scales.iter().enumerate() {
        if s > width || s > height {
            continue;
        }
        for y0 in (0..=height - s).step_by(grid.stride) {
            for x0 in (0..=width - s).step_by(grid.stride) {
                out.push(Candidate {
                    x: x0 as f64 + s as f64 / 2.0,
                    y: y0 as f64 + s as f64 / 2.0,
                    w: s as f64,
                    h: s as f64,
                    scale: Some(si),
                });
            }
        }
    }
    if out.is_empty() {
        out.push(Candidate {
            x: width as f64 / 2.0,
            y: height as f64 / 2.0,
            w: width as f64,
            h: height as f64,
            scale: None,
        });
    }
    out
}

/// Candidate boxes for a frame. Without a prior: every scale that fits, at
/// every stride position, in scale/row/column order. With a prior: the
/// order-preserving subset whose centre lies within `prior_radius`
/// (Chebyshev) of the prior centre and whose scale is within
/// `prior_scale_steps` of the prior's. Falls back to the full grid if that
/// subset is empty.
pub fn propose_regions(
    width: usize,
    height: usize,
    grid: &SearchGrid,
    prior: Option<&SpatialTuple>,
) -> Vec<Candidate> {
    let full = full_grid(width.max(1), height.max(1), grid);
    let Some(prior) = prior else {
        return full;
    };
    let ps = grid.nearest_scale(prior.w, prior.h) as i64;
    let steps = grid.prior_scale_steps as i64;
    let near: Vec<Candidate> = full
        .iter()
        .copied()
        .filter(|c| {
            c.scale.is_some_and(|s| (s as i64 - ps).abs() <= steps)
                && (c.x - prior.x).abs() <= grid.prior_radius
                && (c.y - prior.y).abs() <= grid.prior_radius
        })
        .collect();
    if near.is_empty() {
        log::debug!("prior window holds no candidates, using the full grid");
        full
    } else {
        near
    }
}

/// Samples the `size × size` classifier grid of a box: cell `(i, j)` reads
/// the frame bilinearly at the image of canonical point
/// `((i + ½)/size − ½, (j + ½)/size − ½)`.
pub fn sample_patch(frame: &Frame, geom: &BoxGeom, size: usize, out: &mut Vec<f64>) {
    let [a, b, c, d] = geom.linear_part();
    out.clear();
    let inv = 1.0 / size as f64;
    for j in 0..size {
        let pv = geom.h * ((j as f64 + 0.5) * inv - 0.5);
        for i in 0..size {
            let pu = geom.w * ((i as f64 + 0.5) * inv - 0.5);
            let x = geom.x + a * pu + b * pv;
            let y = geom.y + c * pu + d * pv;
            out.push(frame.sample_bilinear(x, y));
        }
    }
}

/// Classifier input for a box: the box widened by `context` of its side on
/// every side, sampled on a `size × size` grid.
pub fn sample_region(frame: &Frame, geom: &BoxGeom, size: usize, context: f64, out: &mut Vec<f64>) {
    sample_patch(frame, &geom.scaled(1.0 + 2.0 * context), size, out);
}

/// Reusable scratch space for repeated scoring.
#[derive(Debug, Default)]
pub struct Scorer {
    ws: Workspace,
    patch: Vec<f64>,
}

/// Score of one box: the best non-background class, its probability and
/// its log-odds (the ranking key, monotone in `p`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionScore {
    pub class: usize,
    pub p: f64,
    pub log_odds: f64,
}

impl Scorer {
    pub fn score(&mut self, net: &ConvNet, frame: &Frame, geom: &BoxGeom) -> RegionScore {
        sample_region(
            frame,
            geom,
            net.input_size(),
            net.context(),
            &mut self.patch,
        );
        let bg = net.background_index();
        let probs = net
            .probabilities_with(&self.patch, &mut self.ws)
            .expect("patch sampled at the classifier input size");
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (i, &p) in probs.iter().enumerate() {
            if Some(i) != bg && p > best.1 {
                best = (i, p);
            }
        }
        RegionScore {
            class: best.0,
            p: best.1,
            log_odds: self.ws.log_odds(best.0),
        }
    }
}

/// Scores one rotated, sheared region: returns the best non-background tag
/// and its probability.
pub fn score_region(net: &ConvNet, frame: &Frame, geom: &BoxGeom) -> Result<(String, f64)> {
    if geom.w < 2.0 || geom.h < 2.0 {
        return Err(Error::Degenerate(format!(
            "box {}x{} is smaller than 2 px",
            geom.w, geom.h
        )));
    }
    if !geom.intersects_frame(frame.width(), frame.height()) {
        return Err(Error::Degenerate("box does not intersect the frame".into()));
    }
    let s = Scorer::default().score(net, frame, geom);
    Ok((net.classes[s.class].clone(), s.p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub tuple: SpatialTuple,
    /// Classifier forward passes spent on this frame.
    pub evaluations: usize,
    /// Boxes that were searched, in evaluation order.
    pub candidates: Vec<Candidate>,
}

/// Searches candidate boxes × rotation × skew grids for the best
/// non-background pose, ranked by [`SearchGrid::rank`] (log-odds keep
/// saturated probabilities ordered; the first maximum wins). Below the grid
/// threshold the background tag is returned with the best box, and `p`
/// still holds that pose's non-background probability.
pub fn extract_tuple(
    net: &ConvNet,
    frame: &Frame,
    prior: Option<&SpatialTuple>,
    grid: &SearchGrid,
) -> Result<Extraction> {
    grid.validate()?;
    let candidates = propose_regions(frame.width(), frame.height(), grid, prior);
    let mut scorer = Scorer::default();
    let mut best: Option<(f64, RegionScore, BoxGeom)> = None;
    let mut evaluations = 0;
    for cand in &candidates {
        for &theta in &grid.thetas {
            for &phi_x in &grid.phis {
                for &phi_y in &grid.phis {
                    let g = cand.geom(theta, phi_x, phi_y);
                    let s = scorer.score(net, frame, &g);
                    evaluations += 1;
                    let key = grid.rank(s.log_odds, phi_x, phi_y);
                    if best.as_ref().is_none_or(|b| key > b.0) {
                        best = Some((key, s, g));
                    }
                }
            }
        }
    }
    let (_, s, g) = best.expect("proposal list is never empty");
    let p = s.p;
    let tag = if p >= grid.threshold {
        net.classes[s.class].clone()
    } else {
        BACKGROUND.to_string()
    };
    Ok(Extraction {
        tuple: SpatialTuple::from_geom(tag, p, &g),
        evaluations,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_counts() {
        let g = SearchGrid::default();
        assert_eq!(g.transforms_per_box(), 175);
        assert_eq!(
            propose_regions(64, 64, &g, None).len(),
            225 + 196 + 169 + 121 + 81
        );
    }

    #[test]
    fn tiny_frame_gets_full_frame_box() {
        let c = propose_regions(5, 6, &SearchGrid::default(), None);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].w, c[0].h, c[0].scale), (5.0, 6.0, None));
    }

    #[test]
    fn csv_round_trip() {
        let t = vec![
            SpatialTuple::from_geom("square", 0.9, &BoxGeom::axis_aligned(1.5, 2.0, 8.0, 8.0)),
            SpatialTuple::from_geom(BACKGROUND, 0.1, &BoxGeom::axis_aligned(4.0, 4.0, 8.0, 8.0)),
        ];
        let mut buf = Vec::new();
        write_tuples_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame,tag,p,x,y,h,w,theta,phi_x,phi_y\n0,square,0.9,"));
        assert_eq!(read_tuples_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn degenerate_box_rejected() {
        let net = ConvNet::zeros(vec![BACKGROUND.into(), "square".into()]).unwrap();
        let f = Frame::zeros(16, 16);
        assert!(score_region(&net, &f, &BoxGeom::axis_aligned(8.0, 8.0, 1.5, 8.0)).is_err());
        assert!(score_region(&net, &f, &BoxGeom::axis_aligned(-30.0, 8.0, 8.0, 8.0)).is_err());
    }
}
