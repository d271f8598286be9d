//! Pluggable segmenters and mask post-processing.
//!
//! Boundary fitting only ever sees a [`MaskPair`], so masks predicted by an
//! external model (file-backed) and masks computed by the built-in classical
//! baseline are interchangeable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{load_mask, BinaryMask, IrisImage, MaskSemantics, SampleRecord};
use crate::morphology;
use crate::normalization::bilinear;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub coarse: BinaryMask,
    pub fine: BinaryMask,
    /// Set when no fine mask was available and `fine` is a copy of `coarse`.
    pub fine_defaulted: bool,
}

/// Parameters of the intensity/radial-gradient baseline segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalParams {
    /// Pixels darker than this are pupil candidates.
    pub pupil_threshold: u8,
    /// Number of radial rays cast from the pupil centroid.
    pub rays: usize,
    /// Half-window (px) of the radial step detector.
    pub step_window: usize,
    /// Minimum mean-intensity jump (8-bit levels) accepted as a limbic edge.
    pub min_step: f64,
    /// Circular median window (in rays) applied to the limbic radius profile.
    pub smooth_rays: usize,
}

impl Default for ClassicalParams {
    fn default() -> Self {
        ClassicalParams {
            pupil_threshold: 60,
            rays: 256,
            step_window: 4,
            min_step: 20.0,
            smooth_rays: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmenterKind {
    FileBacked,
    ClassicalBaseline(ClassicalParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Segmenter {
    #[serde(flatten)]
    pub kind: SegmenterKind,
    pub open_radius: u32,
    pub close_radius: u32,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter {
            kind: SegmenterKind::FileBacked,
            open_radius: 2,
            close_radius: 4,
        }
    }
}

impl Segmenter {
    pub fn file_backed() -> Self {
        Segmenter::default()
    }

    pub fn classical() -> Self {
        Segmenter {
            kind: SegmenterKind::ClassicalBaseline(ClassicalParams::default()),
            ..Segmenter::default()
        }
    }

    /// Produces cleaned full-resolution masks for one sample. Relative mask
    /// paths in `record` are resolved against `base_dir`.
    pub fn segment(&self, image: &IrisImage, record: &SampleRecord, base_dir: &Path) -> Result<MaskPair> {
        let (coarse, fine) = match &self.kind {
            SegmenterKind::FileBacked => {
                let coarse_path = record
                    .coarse_mask_path
                    .as_ref()
                    .ok_or_else(|| Error::MissingMask(record.sample_id.clone()))?;
                let (coarse, _) = load_mask(
                    &resolve(base_dir, coarse_path),
                    image.width,
                    image.height,
                    MaskSemantics::Coarse,
                )?;
                let fine = match &record.fine_mask_path {
                    Some(p) => Some(
                        load_mask(&resolve(base_dir, p), image.width, image.height, MaskSemantics::Fine)?.0,
                    ),
                    None => None,
                };
                (coarse, fine)
            }
            SegmenterKind::ClassicalBaseline(params) => {
                let coarse = classical_coarse(image, params, self.open_radius, self.close_radius)
                    .ok_or_else(|| Error::SegmentationFailure(record.sample_id.clone()))?;
                (coarse, None)
            }
        };

        let coarse = cleanup_mask(&coarse, self.open_radius, self.close_radius);
        if coarse.is_empty() {
            return Err(Error::SegmentationFailure(record.sample_id.clone()));
        }
        let (fine, fine_defaulted) = match fine {
            // Fine masks may legitimately be fragmented by decay; only speckle is removed.
            Some(f) => (morphology::open(&f, self.open_radius), false),
            None => (coarse.clone().with_semantics(MaskSemantics::Fine), true),
        };
        Ok(MaskPair {
            coarse,
            fine,
            fine_defaulted,
        })
    }
}

fn resolve(base: &Path, p: &Path) -> std::path::PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Opening, then closing, then retention of the largest 4-connected
/// component.
pub fn cleanup_mask(mask: &BinaryMask, open_radius: u32, close_radius: u32) -> BinaryMask {
    if mask.is_empty() {
        return mask.clone();
    }
    let opened = morphology::open(mask, open_radius);
    let closed = morphology::close(&opened, close_radius);
    morphology::largest_component(&closed)
}

fn circular_median(values: &[Option<f64>], window: usize) -> Vec<f64> {
    let n = values.len();
    let valid: Vec<f64> = values.iter().flatten().copied().collect();
    let global = median(&valid).unwrap_or(0.0);
    let half = window / 2;
    (0..n)
        .map(|i| {
            let local: Vec<f64> = (0..=2 * half)
                .filter_map(|k| values[(i + n + k - half) % n])
                .collect();
            median(&local).unwrap_or(global)
        })
        .collect()
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Some(s[s.len() / 2])
}

/// Pupil by dark thresholding, limbic boundary by the strongest outward
/// intensity step along rays cast from the pupil centroid.
fn classical_coarse(
    image: &IrisImage,
    params: &ClassicalParams,
    open_radius: u32,
    close_radius: u32,
) -> Option<BinaryMask> {
    let dark = BinaryMask::from_fn(image.width, image.height, MaskSemantics::Coarse, |x, y| {
        image.get(x, y) < params.pupil_threshold
    });
    let pupil = cleanup_mask(&dark, open_radius.max(1), close_radius);
    if pupil.is_empty() {
        return None;
    }
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..pupil.height {
        for x in 0..pupil.width {
            if pupil.get(x, y) {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    let pupil_r = (n as f64 / std::f64::consts::PI).sqrt();

    let k = params.step_window.max(1);
    let r_start = pupil_r + (2 * k) as f64 + 2.0;
    // rays stop at the frame edge
    let r_end = (image.width as f64).hypot(image.height as f64);

    let rays = params.rays.max(8);
    let mut radii = Vec::with_capacity(rays);
    for i in 0..rays {
        let theta = std::f64::consts::TAU * i as f64 / rays as f64;
        let (dx, dy) = (theta.cos(), -theta.sin());
        let mut profile = Vec::new();
        let mut r = pupil_r + 1.0;
        while r < r_end {
            match bilinear(image, cx + r * dx, cy + r * dy) {
                Some(v) => profile.push((r, v * 255.0)),
                None => break,
            }
            r += 1.0;
        }
        let mut best: Option<(f64, f64)> = None;
        for j in k..profile.len().saturating_sub(k) {
            if profile[j].0 < r_start {
                continue;
            }
            let inner: f64 = profile[j - k..j].iter().map(|p| p.1).sum::<f64>() / k as f64;
            let outer: f64 = profile[j + 1..=j + k].iter().map(|p| p.1).sum::<f64>() / k as f64;
            let step = outer - inner;
            if step >= params.min_step && best.map_or(true, |(s, _)| step > s) {
                best = Some((step, profile[j].0));
            }
        }
        radii.push(best.map(|(_, r)| r));
    }
    if radii.iter().all(Option::is_none) {
        return None;
    }
    let limbic = circular_median(&radii, params.smooth_rays.max(1));

    let mask = BinaryMask::from_fn(image.width, image.height, MaskSemantics::Coarse, |x, y| {
        if pupil.get(x, y) {
            return false;
        }
        let dx = x as f64 - cx;
        let dy = cy - y as f64;
        let d = dx.hypot(dy);
        if d <= pupil_r {
            return false;
        }
        let t = dy.atan2(dx).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * rays as f64;
        let i0 = t.floor() as usize % rays;
        let i1 = (i0 + 1) % rays;
        let f = t - t.floor();
        d <= limbic[i0] * (1.0 - f) + limbic[i1] * f
    });
    Some(mask)
}
