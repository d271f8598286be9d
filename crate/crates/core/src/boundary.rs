//! Pupillary and limbic circle fitting on coarse masks with a two-pass
//! circular Hough transform.
//!
//! An edge point votes for centre `c` at radius `r` iff its distance to `c`
//! rounds to `r`. The limbic pass searches every centre inside the bounding
//! box of the edge set; the pupil pass searches centres within a margin of the
//! fitted limbic centre. Scores are 3×3 box sums over the centre plane; the
//! raw (unsmoothed) count of the winning cell is what the vote threshold
//! checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Circle { cx, cy, r }
    }

    pub fn center_distance(&self, other: &Circle) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCircles {
    pub pupil: Circle,
    pub limbic: Circle,
    pub pupil_votes: u32,
    pub limbic_votes: u32,
}

impl BoundaryCircles {
    /// Circles with no accumulator provenance (ground truth, hand-made).
    pub fn from_circles(pupil: Circle, limbic: Circle) -> Self {
        BoundaryCircles {
            pupil,
            limbic,
            pupil_votes: 0,
            limbic_votes: 0,
        }
    }

    /// Pupil strictly smaller and contained within the limbic circle, up to
    /// `slack` pixels.
    pub fn is_valid(&self, slack: f64) -> bool {
        self.pupil.r > 0.0
            && self.pupil.r < self.limbic.r
            && self.pupil.center_distance(&self.limbic) + self.pupil.r < self.limbic.r + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMethod {
    MaskBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    pub pupil_r_range: [u32; 2],
    pub limbic_r_range: [u32; 2],
    pub radius_step: u32,
    /// Absolute pupil-centre search margin in pixels; when absent the margin
    /// is `center_search_fraction` of the fitted limbic radius.
    pub center_search_margin: Option<u32>,
    pub center_search_fraction: f64,
    /// Accepted cells need edge support (edges whose rounded distance lies
    /// within one radius bin of the cell's) ≥ this fraction of 2πr.
    pub min_vote_fraction: f64,
    pub containment_slack: f64,
    /// Upper bound on pupil radius relative to the fitted limbic radius.
    pub max_pupil_ratio: f64,
    pub edge_method: EdgeMethod,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig {
            pupil_r_range: [16, 90],
            limbic_r_range: [60, 180],
            radius_step: 1,
            center_search_margin: None,
            center_search_fraction: 0.15,
            min_vote_fraction: 0.3,
            containment_slack: 2.0,
            max_pupil_ratio: 0.8,
            edge_method: EdgeMethod::MaskBoundary,
        }
    }
}

impl HoughConfig {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let max_r = width.min(height) / 2;
        for (name, [lo, hi]) in [("pupil", self.pupil_r_range), ("limbic", self.limbic_r_range)] {
            if lo < 4 || hi < lo || hi > max_r {
                return Err(Error::Config(format!(
                    "{name} radius range [{lo}, {hi}] must satisfy 4 <= min <= max <= {max_r}"
                )));
            }
        }
        if self.radius_step == 0 {
            return Err(Error::Config("radius_step must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_vote_fraction) {
            return Err(Error::Config("min_vote_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn radii(&self, [lo, hi]: [u32; 2]) -> impl Iterator<Item = u32> {
        (lo..=hi).step_by(self.radius_step as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeSet {
    pub width: u32,
    pub height: u32,
    pub points: Vec<(u32, u32)>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Inner boundary of the mask: true pixels with at least one false (or
/// out-of-frame) 4-neighbour, in raster order.
pub fn mask_edges(mask: &BinaryMask) -> EdgeSet {
    let mut points = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as i64, y as i64);
            if !mask.get_signed(xi - 1, yi)
                || !mask.get_signed(xi + 1, yi)
                || !mask.get_signed(xi, yi - 1)
                || !mask.get_signed(xi, yi + 1)
            {
                points.push((x, y));
            }
        }
    }
    EdgeSet {
        width: mask.width,
        height: mask.height,
        points,
    }
}

/// Offsets whose Euclidean length rounds to `r`.
pub(crate) fn ring_offsets(r: u32) -> Vec<(i32, i32)> {
    let r = r as i64;
    let lo = (2 * r - 1) * (2 * r - 1);
    let hi = (2 * r + 1) * (2 * r + 1);
    let mut out = Vec::new();
    for dy in -(r + 1)..=(r + 1) {
        for dx in -(r + 1)..=(r + 1) {
            let d4 = 4 * (dx * dx + dy * dy);
            if d4 >= lo && d4 < hi {
                out.push((dx as i32, dy as i32));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cx: i64,
    pub cy: i64,
    pub r: u32,
    /// 3×3 box-summed accumulator value.
    pub score: u32,
    /// Unsmoothed accumulator value at the cell.
    pub votes: u32,
    /// Raw votes summed over radii `r - 1 ..= r + 1` at the cell.
    pub support: u32,
}

impl Candidate {
    fn circle(&self) -> Circle {
        Circle::new(self.cx as f64, self.cy as f64, self.r as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub edge_count: usize,
    pub limbic_candidates: Vec<Candidate>,
    pub pupil_candidates: Vec<Candidate>,
}

/// Rectangular centre region `[x0, x1] × [y0, y1]` (inclusive).
#[derive(Debug, Clone, Copy)]
struct Region {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Region {
    fn width(&self) -> usize {
        (self.x1 - self.x0 + 1) as usize
    }

    fn height(&self) -> usize {
        (self.y1 - self.y0 + 1) as usize
    }

    fn grow(&self, by: i64) -> Region {
        Region {
            x0: self.x0 - by,
            y0: self.y0 - by,
            x1: self.x1 + by,
            y1: self.y1 + by,
        }
    }
}

/// Raw vote plane for one radius over `region`.
fn vote_plane(points: &[(u32, u32)], offsets: &[(i32, i32)], region: Region, plane: &mut Vec<u32>) {
    let w = region.width();
    plane.clear();
    plane.resize(w * region.height(), 0);
    for &(ex, ey) in points {
        for &(dx, dy) in offsets {
            let cx = ex as i64 - dx as i64;
            let cy = ey as i64 - dy as i64;
            if cx < region.x0 || cx > region.x1 || cy < region.y0 || cy > region.y1 {
                continue;
            }
            plane[(cy - region.y0) as usize * w + (cx - region.x0) as usize] += 1;
        }
    }
}

/// 3×3 box sum with zero padding.
fn box3(plane: &[u32], w: usize, h: usize, out: &mut Vec<u32>) {
    let mut rows = vec![0u32; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut s = row[x];
            if x > 0 {
                s += row[x - 1];
            }
            if x + 1 < w {
                s += row[x + 1];
            }
            rows[y * w + x] = s;
        }
    }
    out.clear();
    out.resize(w * h, 0);
    for y in 0..h {
        for x in 0..w {
            let mut s = rows[y * w + x];
            if y > 0 {
                s += rows[(y - 1) * w + x];
            }
            if y + 1 < h {
                s += rows[(y + 1) * w + x];
            }
            out[y * w + x] = s;
        }
    }
}

/// Edge points voting for the cell's centre at radius `r - 1`, `r` or `r + 1`.
/// A boundary at a sub-pixel radius splits its votes across adjacent bins,
/// so the acceptance test uses this band rather than the single cell.
fn support(edges: &EdgeSet, cx: i64, cy: i64, r: u32) -> u32 {
    let r = r as i64;
    edges
        .points
        .iter()
        .filter(|&&(x, y)| {
            let d = ((x as i64 - cx) as f64).hypot((y as i64 - cy) as f64).round() as i64;
            (d - r).abs() <= 1
        })
        .count() as u32
}

fn perimeter_threshold(r: u32, fraction: f64) -> f64 {
    fraction * std::f64::consts::TAU * r as f64
}

const DIAGNOSTIC_CANDIDATES: usize = 5;

fn push_top(list: &mut Vec<Candidate>, c: Candidate) {
    list.push(c);
    list.sort_by(|a, b| b.score.cmp(&a.score).then(a.r.cmp(&b.r)));
    list.truncate(DIAGNOSTIC_CANDIDATES);
}

fn fit_limbic(edges: &EdgeSet, config: &HoughConfig, diag: &mut FitDiagnostics) -> Option<Candidate> {
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(x, y) in &edges.points {
        x0 = x0.min(x as i64);
        y0 = y0.min(y as i64);
        x1 = x1.max(x as i64);
        y1 = y1.max(y as i64);
    }
    let region = Region { x0, y0, x1, y1 };
    // accumulate one cell wider so the box filter sees true neighbours
    let padded = region.grow(1);
    let (pw, ph) = (padded.width(), padded.height());

    let mut plane = Vec::new();
    let mut smooth = Vec::new();
    let mut best: Option<Candidate> = None;
    for r in config.radii(config.limbic_r_range) {
        vote_plane(&edges.points, &ring_offsets(r), padded, &mut plane);
        box3(&plane, pw, ph, &mut smooth);
        let mut plane_best: Option<Candidate> = None;
        for y in 1..ph - 1 {
            for x in 1..pw - 1 {
                let s = smooth[y * pw + x];
                if plane_best.map_or(s > 0, |b| s > b.score) {
                    plane_best = Some(Candidate {
                        cx: padded.x0 + x as i64,
                        cy: padded.y0 + y as i64,
                        r,
                        score: s,
                        votes: plane[y * pw + x],
                        support: 0,
                    });
                }
            }
        }
        if let Some(pb) = plane_best {
            push_top(&mut diag.limbic_candidates, pb);
            // ascending radius + strict comparison: ties keep the smaller radius
            if best.map_or(true, |b| pb.score > b.score) {
                best = Some(pb);
            }
        }
    }
    best
}

fn fit_pupil(
    edges: &EdgeSet,
    limbic: &Candidate,
    config: &HoughConfig,
    diag: &mut FitDiagnostics,
) -> Option<Candidate> {
    let margin = config
        .center_search_margin
        .map(f64::from)
        .unwrap_or(config.center_search_fraction * limbic.r as f64)
        .max(0.0);
    let m = margin.floor() as i64;
    let region = Region {
        x0: limbic.cx - m,
        y0: limbic.cy - m,
        x1: limbic.cx + m,
        y1: limbic.cy + m,
    };
    let padded = region.grow(1);
    let (pw, ph) = (padded.width(), padded.height());
    let r_cap = config.max_pupil_ratio * limbic.r as f64;

    let mut plane = Vec::new();
    let mut smooth = Vec::new();
    let mut cells = Vec::new();
    for r in config.radii(config.pupil_r_range) {
        if r >= limbic.r || r as f64 > r_cap {
            break;
        }
        vote_plane(&edges.points, &ring_offsets(r), padded, &mut plane);
        box3(&plane, pw, ph, &mut smooth);
        for y in 1..ph - 1 {
            for x in 1..pw - 1 {
                let (cx, cy) = (padded.x0 + x as i64, padded.y0 + y as i64);
                let (dx, dy) = ((cx - limbic.cx) as f64, (cy - limbic.cy) as f64);
                if dx.hypot(dy) > margin || smooth[y * pw + x] == 0 {
                    continue;
                }
                cells.push(Candidate {
                    cx,
                    cy,
                    r,
                    score: smooth[y * pw + x],
                    votes: plane[y * pw + x],
                    support: 0,
                });
            }
        }
    }
    // cells were pushed in (radius, raster) order; a stable sort keeps that as the tie rule
    cells.sort_by(|a, b| b.score.cmp(&a.score));
    diag.pupil_candidates = cells.iter().take(DIAGNOSTIC_CANDIDATES).copied().collect();
    let limbic_circle = limbic.circle();
    cells.into_iter().find_map(|mut c| {
        c.support = support(edges, c.cx, c.cy, c.r);
        (c.support as f64 >= perimeter_threshold(c.r, config.min_vote_fraction)
            && BoundaryCircles::from_circles(c.circle(), limbic_circle).is_valid(config.containment_slack))
        .then_some(c)
    })
}

/// Fits the limbic circle, then the pupil circle near the limbic centre.
pub fn fit_circles(edges: &EdgeSet, config: &HoughConfig) -> Result<BoundaryCircles> {
    fit_circles_with_diagnostics(edges, config).map(|(c, _)| c)
}

pub fn fit_circles_with_diagnostics(
    edges: &EdgeSet,
    config: &HoughConfig,
) -> Result<(BoundaryCircles, FitDiagnostics)> {
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    config.validate(edges.width, edges.height)?;
    let mut diag = FitDiagnostics {
        edge_count: edges.len(),
        ..Default::default()
    };
    let fail = |reason: String, diag: FitDiagnostics| Error::FitFailure {
        reason,
        diagnostics: Box::new(diag),
    };

    let Some(mut limbic) = fit_limbic(edges, config, &mut diag) else {
        return Err(fail("no limbic votes".into(), diag));
    };
    limbic.support = support(edges, limbic.cx, limbic.cy, limbic.r);
    let needed = perimeter_threshold(limbic.r, config.min_vote_fraction);
    if (limbic.support as f64) < needed {
        return Err(fail(
            format!("limbic cell has {} supporting edges, needs {needed:.1}", limbic.support),
            diag,
        ));
    }
    let Some(pupil) = fit_pupil(edges, &limbic, config, &mut diag) else {
        return Err(fail("no pupil cell satisfies vote and containment constraints".into(), diag));
    };
    Ok((
        BoundaryCircles {
            pupil: pupil.circle(),
            limbic: limbic.circle(),
            pupil_votes: pupil.votes,
            limbic_votes: limbic.votes,
        },
        diag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::MaskSemantics;

    fn annulus(w: u32, h: u32, cx: f64, cy: f64, r_in: f64, r_out: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, MaskSemantics::Coarse, |x, y| {
            let d = (x as f64 - cx).hypot(y as f64 - cy);
            d > r_in && d <= r_out
        })
    }

    #[test]
    fn ring_offsets_cover_annulus_of_width_one() {
        for r in [4u32, 10, 45, 110] {
            let ri = r as i64 + 1;
            let brute = (-ri..=ri)
                .flat_map(|dy| (-ri..=ri).map(move |dx| (dx, dy)))
                .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64).sqrt().round() as u32 == r)
                .count();
            assert_eq!(ring_offsets(r).len(), brute);
            if r >= 45 {
                let expected = std::f64::consts::TAU * r as f64;
                let n = brute as f64;
                assert!((n - expected).abs() / expected < 0.05, "r={r}: {n} vs {expected}");
            }
        }
    }

    #[test]
    fn annulus_edges_lie_on_two_circles() {
        let m = annulus(320, 240, 160.0, 120.0, 40.0, 100.0);
        let e = mask_edges(&m);
        assert!(!e.is_empty());
        for &(x, y) in &e.points {
            let d = (x as f64 - 160.0).hypot(y as f64 - 120.0);
            assert!((d - 40.0).abs() <= 1.0 || (d - 100.0).abs() <= 1.0, "({x},{y}) at {d}");
        }
        let inner = e.points.iter().filter(|&&(x, y)| (x as f64 - 160.0).hypot(y as f64 - 120.0) < 70.0).count();
        assert!(inner > 200 && e.len() - inner > 500);
    }

    #[test]
    fn all_true_edges_are_the_frame() {
        let m = BinaryMask::new_filled(80, 70, true, MaskSemantics::Coarse);
        let e = mask_edges(&m);
        assert_eq!(e.len(), 2 * 80 + 2 * 70 - 4);
        assert!(e.points.iter().all(|&(x, y)| x == 0 || y == 0 || x == 79 || y == 69));
    }

    #[test]
    fn single_pixel_is_its_own_edge() {
        let mut m = BinaryMask::new_filled(64, 64, false, MaskSemantics::Coarse);
        m.set(10, 20, true);
        assert_eq!(mask_edges(&m).points, vec![(10, 20)]);
        assert!(mask_edges(&BinaryMask::new_filled(64, 64, false, MaskSemantics::Coarse)).is_empty());
    }

    #[test]
    fn recovers_concentric_annulus() {
        let m = annulus(640, 480, 320.0, 240.0, 45.0, 110.0);
        let c = fit_circles(&mask_edges(&m), &HoughConfig::default()).unwrap();
        assert!((c.limbic.cx - 320.0).abs() <= 2.0 && (c.limbic.cy - 240.0).abs() <= 2.0);
        assert!((c.limbic.r - 110.0).abs() <= 2.0, "{c:?}");
        assert!((c.pupil.cx - 320.0).abs() <= 2.0 && (c.pupil.cy - 240.0).abs() <= 2.0);
        assert!((c.pupil.r - 45.0).abs() <= 2.0, "{c:?}");
        assert!(c.is_valid(2.0));
    }

    #[test]
    fn frame_only_edges_fail() {
        let m = BinaryMask::new_filled(640, 480, true, MaskSemantics::Coarse);
        assert!(matches!(
            fit_circles(&mask_edges(&m), &HoughConfig::default()),
            Err(Error::FitFailure { .. })
        ));
    }

    #[test]
    fn empty_edges_error() {
        let e = EdgeSet {
            width: 640,
            height: 480,
            points: vec![],
        };
        assert!(matches!(fit_circles(&e, &HoughConfig::default()), Err(Error::NoEdges)));
    }

    #[test]
    fn deleting_edges_never_increases_votes() {
        let m = annulus(200, 200, 100.0, 100.0, 20.0, 60.0);
        let e = mask_edges(&m);
        let region = Region { x0: 80, y0: 80, x1: 120, y1: 120 };
        let fewer: Vec<_> = e.points.iter().copied().step_by(3).collect();
        for r in [20u32, 40, 60] {
            let off = ring_offsets(r);
            let (mut a, mut b) = (Vec::new(), Vec::new());
            vote_plane(&e.points, &off, region, &mut a);
            vote_plane(&fewer, &off, region, &mut b);
            assert!(a.iter().zip(&b).all(|(x, y)| y <= x));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = HoughConfig::default();
        assert!(c.validate(640, 480).is_ok());
        c.pupil_r_range = [2, 40];
        assert!(c.validate(640, 480).is_err());
        c = HoughConfig::default();
        c.limbic_r_range = [60, 300];
        assert!(c.validate(640, 480).is_err());
    }
}
