//! Synthetic iris datasets with known ground truth and a parametric
//! post-mortem decay model.
//!
//! Identity texture is defined in the annulus's own polar frame, so pupil
//! size, boundary displacement and eye rotation never change the identity
//! signal. Decay acts on the two axes the pipeline sees: the masks (erosion
//! of usable texture, boundary deformation) and the photometry (noise,
//! contrast loss).

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryCircles, Circle};
use crate::error::{Error, Result};
use crate::manifest::{save_image, write_manifest, write_mask, BinaryMask, Eye, IrisImage, Manifest, MaskSemantics, SampleRecord};

const PUPIL_LEVEL: f64 = 15.0;
const IRIS_LEVEL: f64 = 110.0;
const IRIS_AMPLITUDE: f64 = 45.0;
const SCLERA_LEVEL: f64 = 215.0;
const SKIN_LEVEL: f64 = 165.0;
const CLOUDY_LEVEL: f64 = 150.0;
const SENSOR_NOISE: f64 = 3.0;
const NOISE_CELL: usize = 6;

/// Deterministic 64-bit mix of two values (SplitMix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureParams {
    pub components: usize,
    /// Angular wavelength band, in pixels of a `reference_width`-column
    /// polar rectangle.
    pub min_angular_wavelength: f64,
    pub max_angular_wavelength: f64,
    pub reference_width: f64,
    /// Radial frequency band in cycles across the annulus.
    pub max_radial_cycles: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        TextureParams {
            components: 48,
            min_angular_wavelength: 12.0,
            max_angular_wavelength: 48.0,
            reference_width: 512.0,
            max_radial_cycles: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureComponent {
    /// Whole cycles per revolution, so the pattern is periodic in θ.
    pub angular_cycles: u32,
    pub radial_cycles: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIdentity {
    pub seed: u64,
    pub components: Vec<TextureComponent>,
}

impl SyntheticIdentity {
    pub fn from_seed(seed: u64, params: &TextureParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = (params.reference_width / params.max_angular_wavelength).ceil() as u32;
        let hi = (params.reference_width / params.min_angular_wavelength).floor() as u32;
        let components = (0..params.components.max(1))
            .map(|_| TextureComponent {
                angular_cycles: rng.gen_range(lo..=hi.max(lo)),
                radial_cycles: rng.gen_range(-params.max_radial_cycles..=params.max_radial_cycles),
                phase: rng.gen_range(0.0..TAU),
            })
            .collect();
        SyntheticIdentity { seed, components }
    }

    /// Texture value in [-1, 1] at radial fraction `rho` and angle `theta`.
    pub fn value(&self, rho: f64, theta: f64) -> f64 {
        let sum: f64 = self
            .components
            .iter()
            .map(|c| (c.angular_cycles as f64 * theta + TAU * c.radial_cycles * rho + c.phase).cos())
            .sum();
        let z = sum / (self.components.len() as f64 / 2.0).sqrt();
        (z / 2.5).clamp(-1.0, 1.0)
    }
}

/// Decay effects derived from a level in [0, 1]; all are null at level 0
/// and non-decreasing in level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    pub level: f64,
    /// Fraction of the coarse iris area removed from the fine mask.
    pub erosion_fraction: f64,
    /// σ (intensity levels) of additive Gaussian noise correlated over
    /// `NOISE_CELL` pixels, so it lands in the encoder's frequency band.
    pub noise_sigma: f64,
    /// Amplitude (px) of the sinusoidal boundary deformation.
    pub deformation: f64,
    /// Multiplier on texture contrast.
    pub contrast: f64,
}

impl DecaySpec {
    pub fn from_level(level: f64) -> Self {
        let l = level.clamp(0.0, 1.0);
        DecaySpec {
            level: l,
            erosion_fraction: 0.8 * l,
            noise_sigma: 20.0 * l,
            deformation: 2.0 * l,
            contrast: 1.0 - 0.6 * l,
        }
    }

    pub fn none() -> Self {
        DecaySpec::from_level(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub eyelids: bool,
    /// Eye rotation is drawn as a whole number of these steps (radians)...
    pub rotation_step: f64,
    pub max_rotation_steps: i32,
    /// ...plus uniform jitter within ± this many radians.
    pub rotation_jitter: f64,
    /// When set, the fine mask keeps only this fraction of the coarse area
    /// (mask-only occlusion; the image is untouched).
    pub occlusion_keep: Option<f64>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            eyelids: true,
            rotation_step: TAU / 32.0,
            max_rotation_steps: 2,
            rotation_jitter: 0.5_f64.to_radians(),
            occlusion_keep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSample {
    pub image: IrisImage,
    pub coarse: BinaryMask,
    pub fine: BinaryMask,
    pub circles: BoundaryCircles,
    pub rotation: f64,
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Gaussian noise on a `NOISE_CELL` lattice, bilinearly upsampled and
/// rescaled to standard deviation `sigma`.
fn correlated_noise(w: usize, h: usize, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![0.0; w * h];
    }
    let (gw, gh) = (w / NOISE_CELL + 2, h / NOISE_CELL + 2);
    let grid: Vec<f64> = (0..gw * gh).map(|_| gaussian(rng)).collect();
    let mut field = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / NOISE_CELL as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / NOISE_CELL as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |xx: usize, yy: usize| grid[yy * gw + xx];
            let top = g(x0, y0) * (1.0 - tx) + g(x0 + 1, y0) * tx;
            let bottom = g(x0, y0 + 1) * (1.0 - tx) + g(x0 + 1, y0 + 1) * tx;
            field.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    field.iter().map(|v| (v - mean) / sd * sigma).collect()
}

struct Boundary {
    circle: Circle,
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Boundary {
    fn radius(&self, t: f64) -> f64 {
        self.circle.r + self.amp * (self.freq * t + self.phase).sin()
    }

    fn radius_d(&self, t: f64) -> f64 {
        self.amp * self.freq * (self.freq * t + self.phase).cos()
    }

    fn point(&self, t: f64) -> (f64, f64) {
        let r = self.radius(t);
        (self.circle.cx + r * t.cos(), self.circle.cy - r * t.sin())
    }

    fn point_d(&self, t: f64) -> (f64, f64) {
        let (r, rd) = (self.radius(t), self.radius_d(t));
        (rd * t.cos() - r * t.sin(), -rd * t.sin() - r * t.cos())
    }
}

/// Inverts the two-boundary rubber-sheet map: finds `(rho, theta)` whose
/// interpolated point is `(x, y)`.
fn polar_coords(pupil: &Boundary, limbic: &Boundary, x: f64, y: f64) -> (f64, f64) {
    let mut t = (pupil.circle.cy - y).atan2(x - pupil.circle.cx);
    let d = (x - pupil.circle.cx).hypot(y - pupil.circle.cy);
    let mut rho = (d - pupil.circle.r) / (limbic.circle.r - pupil.circle.r);
    for _ in 0..8 {
        let (px, py) = pupil.point(t);
        let (lx, ly) = limbic.point(t);
        let fx = (1.0 - rho) * px + rho * lx - x;
        let fy = (1.0 - rho) * py + rho * ly - y;
        let (dpx, dpy) = pupil.point_d(t);
        let (dlx, dly) = limbic.point_d(t);
        // Jacobian columns: d/drho, d/dtheta
        let (a, c) = (lx - px, ly - py);
        let (b, d) = ((1.0 - rho) * dpx + rho * dlx, (1.0 - rho) * dpy + rho * dly);
        let det = a * d - b * c;
        if det.abs() < 1e-12 {
            break;
        }
        rho -= (d * fx - b * fy) / det;
        t -= (-c * fx + a * fy) / det;
        if fx.abs() + fy.abs() < 1e-9 {
            break;
        }
    }
    (rho, t.rem_euclid(TAU))
}

/// Removes random discs from `fine` (restricted to `coarse`) until at most
/// `keep` of the coarse area remains. Returns the removed-pixel map.
fn erode_blobs(coarse: &BinaryMask, keep: f64, rng: &mut impl Rng) -> Vec<bool> {
    let total = coarse.count();
    let target_removed = ((1.0 - keep.clamp(0.0, 1.0)) * total as f64).ceil() as usize;
    let mut removed = vec![false; coarse.bits.len()];
    if target_removed == 0 {
        return removed;
    }
    let pixels: Vec<usize> = coarse.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    let w = coarse.width as i64;
    let h = coarse.height as i64;
    let mut count = 0usize;
    while count < target_removed {
        let c = pixels[rng.gen_range(0..pixels.len())];
        let (cx, cy) = ((c as i64) % w, (c as i64) / w);
        let r: f64 = rng.gen_range(8.0..24.0);
        let ri = r.ceil() as i64;
        for y in (cy - ri).max(0)..=(cy + ri).min(h - 1) {
            for x in (cx - ri).max(0)..=(cx + ri).min(w - 1) {
                let i = (y * w + x) as usize;
                if coarse.bits[i] && !removed[i] && (((x - cx).pow(2) + (y - cy).pow(2)) as f64) <= r * r {
                    removed[i] = true;
                    count += 1;
                }
            }
        }
    }
    removed
}

/// Renders one eye image with its coarse and fine ground-truth masks.
pub fn render_sample(
    identity: &SyntheticIdentity,
    circles: &BoundaryCircles,
    width: u32,
    height: u32,
    decay: &DecaySpec,
    rng_seed: u64,
    opts: &RenderOptions,
) -> Result<RenderedSample> {
    if !circles.is_valid(0.0) {
        return Err(Error::InvalidArgument("ground-truth circles violate containment".into()));
    }
    let l = &circles.limbic;
    if l.cx - l.r < 1.0 || l.cy - l.r < 1.0 || l.cx + l.r > width as f64 - 2.0 || l.cy + l.r > height as f64 - 2.0 {
        return Err(Error::InvalidArgument("limbic circle leaves the frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let steps = rng.gen_range(-opts.max_rotation_steps..=opts.max_rotation_steps.max(-opts.max_rotation_steps));
    let rotation = steps as f64 * opts.rotation_step + rng.gen_range(-1.0..=1.0) * opts.rotation_jitter;

    let pupil_b = Boundary {
        circle: circles.pupil,
        amp: decay.deformation * 0.5,
        freq: 5.0,
        phase: rng.gen_range(0.0..TAU),
    };
    let limbic_b = Boundary {
        circle: circles.limbic,
        amp: decay.deformation,
        freq: 7.0,
        phase: rng.gen_range(0.0..TAU),
    };

    // eyelids: upper occludes y < top(x), lower occludes y > bottom(x)
    let upper_reach: f64 = rng.gen_range(0.6..0.95);
    let lower_reach: f64 = rng.gen_range(0.8..1.05);
    let lid_curv = 1.0 / (2.0 * rng.gen_range(250.0..400.0));
    let lid_phase: f64 = rng.gen_range(0.0..TAU);
    let (lcx, lcy, lr) = (l.cx, l.cy, l.r);
    let in_lid = |x: f64, y: f64| -> Option<bool> {
        if !opts.eyelids {
            return None;
        }
        let dx = x - lcx;
        if y < lcy - upper_reach * lr + lid_curv * dx * dx {
            Some(true)
        } else if y > lcy + lower_reach * lr - lid_curv * dx * dx {
            Some(false)
        } else {
            None
        }
    };

    let (w, h) = (width as usize, height as usize);
    let mut level = vec![SCLERA_LEVEL; w * h];
    let mut coarse = BinaryMask::new_filled(width, height, false, MaskSemantics::Coarse);
    let reach = l.r + decay.deformation + 2.0;
    let (x0, x1) = ((l.cx - reach).floor().max(0.0) as usize, ((l.cx + reach).ceil() as usize).min(w - 1));
    let (y0, y1) = ((l.cy - reach).floor().max(0.0) as usize, ((l.cy + reach).ceil() as usize).min(h - 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (rho, theta) = polar_coords(&pupil_b, &limbic_b, x as f64, y as f64);
            let i = y * w + x;
            if rho < 0.0 {
                level[i] = PUPIL_LEVEL;
            } else if rho <= 1.0 {
                let t = identity.value(rho, (theta - rotation).rem_euclid(TAU));
                level[i] = IRIS_LEVEL + IRIS_AMPLITUDE * decay.contrast * t;
                coarse.bits[i] = true;
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if let Some(upper) = in_lid(x as f64, y as f64) {
                let i = y * w + x;
                // gentle shading so the lids are not perfectly flat
                let shade = 6.0 * ((x as f64) / 40.0 + lid_phase + if upper { 0.0 } else { PI }).sin();
                level[i] = SKIN_LEVEL + shade;
                coarse.bits[i] = false;
            }
        }
    }

    let mut fine_bits = coarse.bits.clone();
    if decay.erosion_fraction > 0.0 {
        let removed = erode_blobs(&coarse, 1.0 - decay.erosion_fraction, &mut rng);
        for (i, r) in removed.into_iter().enumerate() {
            if r {
                fine_bits[i] = false;
                level[i] = CLOUDY_LEVEL + 10.0 * gaussian(&mut rng);
            }
        }
    }
    if let Some(keep) = opts.occlusion_keep {
        let fine_now = BinaryMask {
            bits: fine_bits.clone(),
            ..coarse.clone()
        };
        let coarse_area = coarse.count() as f64;
        let relative = if fine_now.count() > 0 {
            (keep * coarse_area / fine_now.count() as f64).min(1.0)
        } else {
            1.0
        };
        let removed = erode_blobs(&fine_now, relative, &mut rng);
        for (i, r) in removed.into_iter().enumerate() {
            if r {
                fine_bits[i] = false;
            }
        }
    }

    let field = correlated_noise(w, h, decay.noise_sigma, &mut rng);
    let pixels = level
        .iter()
        .zip(&field)
        .map(|(&v, &n)| (v + n + SENSOR_NOISE * gaussian(&mut rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    let fine = BinaryMask {
        width,
        height,
        bits: fine_bits,
        semantics: MaskSemantics::Fine,
    };
    Ok(RenderedSample {
        image: IrisImage::new(width, height, pixels)?,
        coarse,
        fine,
        circles: BoundaryCircles::from_circles(circles.pupil, circles.limbic),
        rotation,
    })
}

/// Hours → decay level; serialized as a JSON object keyed by hours.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySchedule(pub Vec<(f64, f64)>);

impl DecaySchedule {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("decay schedule is empty".into()));
        }
        if points.iter().any(|&(h, l)| !(h >= 0.0) || !(0.0..=1.0).contains(&l)) {
            return Err(Error::InvalidArgument("schedule hours must be >= 0 and levels in [0, 1]".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(DecaySchedule(points))
    }

    /// Schedule point assigned to 0-based session `s` of `sessions`.
    pub fn for_session(&self, s: u32, sessions: u32) -> (f64, f64) {
        let m = self.0.len();
        let idx = ((s as usize * m) / sessions.max(1) as usize).min(m - 1);
        self.0[idx]
    }
}

impl Serialize for DecaySchedule {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = ser.serialize_map(Some(self.0.len()))?;
        for (h, l) in &self.0 {
            map.serialize_entry(&h.to_string(), l)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for DecaySchedule {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(de)?;
        let points = raw
            .into_iter()
            .map(|(k, v)| {
                k.trim_end_matches('h')
                    .parse::<f64>()
                    .map(|h| (h, v))
                    .map_err(|_| serde::de::Error::custom(format!("bad schedule hour `{k}`")))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        DecaySchedule::new(points).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    /// Fraction of samples (chosen deterministically) that get occluded.
    pub fraction: f64,
    /// Coarse-area fraction left in their fine masks.
    pub keep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_identities: u32,
    pub sessions: u32,
    pub decay_schedule: DecaySchedule,
    pub base_seed: u64,
    pub width: u32,
    pub height: u32,
    pub pupil_radius: [f64; 2],
    pub limbic_radius: [f64; 2],
    /// Max per-session displacement (px) of the limbic centre from the frame centre.
    pub center_jitter: f64,
    /// Max pupil-centre offset (px) from the limbic centre.
    pub pupil_offset: f64,
    pub texture: TextureParams,
    pub render: RenderOptions,
    pub occlusion: Option<OcclusionConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_identities: 20,
            sessions: 5,
            decay_schedule: DecaySchedule(vec![(0.0, 0.0)]),
            base_seed: 1,
            width: 640,
            height: 480,
            pupil_radius: [30.0, 55.0],
            limbic_radius: [100.0, 125.0],
            center_jitter: 20.0,
            pupil_offset: 4.0,
            texture: TextureParams::default(),
            render: RenderOptions::default(),
            occlusion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    pub sample_id: String,
    pub identity: u32,
    pub pupil: Circle,
    pub limbic: Circle,
    pub decay_level: f64,
    pub rotation: f64,
    pub occluded: bool,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: Manifest,
    pub truth: Vec<SampleTruth>,
    pub manifest_path: PathBuf,
}

pub struct SamplePlan {
    pub record: SampleRecord,
    pub identity: u32,
    pub circles: BoundaryCircles,
    pub decay: DecaySpec,
    pub seed: u64,
    pub occluded: bool,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_identities < 2 || self.sessions < 1 {
            return Err(Error::InvalidArgument("need >= 2 identities and >= 1 session".into()));
        }
        if self.pupil_radius[1] >= self.limbic_radius[0] {
            return Err(Error::InvalidArgument("pupil radii must stay below limbic radii".into()));
        }
        Ok(())
    }

    pub fn identity(&self, i: u32) -> SyntheticIdentity {
        SyntheticIdentity::from_seed(mix_seed(self.base_seed, 0x1D_0000 + i as u64), &self.texture)
    }

    /// Per-sample parameters, in manifest order (identity-major).
    pub fn plan(&self) -> Result<Vec<SamplePlan>> {
        self.validate()?;
        let total = (self.n_identities * self.sessions) as usize;
        let n_occluded = self.occlusion.as_ref().map_or(0, |o| (o.fraction * total as f64).round() as usize);
        let mut plans = Vec::with_capacity(total);
        for i in 0..self.n_identities {
            for s in 0..self.sessions {
                let index = (i * self.sessions + s) as usize;
                let seed = mix_seed(self.base_seed, index as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC1C1E));
                let cx = self.width as f64 / 2.0 + rng.gen_range(-1.0..=1.0) * self.center_jitter;
                let cy = self.height as f64 / 2.0 + rng.gen_range(-1.0..=1.0) * self.center_jitter;
                let lr = rng.gen_range(self.limbic_radius[0]..=self.limbic_radius[1]);
                let pr = rng.gen_range(self.pupil_radius[0]..=self.pupil_radius[1]);
                let off_r = rng.gen_range(0.0..=self.pupil_offset);
                let off_t = rng.gen_range(0.0..TAU);
                let circles = BoundaryCircles::from_circles(
                    Circle::new(cx + off_r * off_t.cos(), cy + off_r * off_t.sin(), pr),
                    Circle::new(cx, cy, lr),
                );
                let (hours, level) = self.decay_schedule.for_session(s, self.sessions);
                let sample_id = format!("id{i:03}_s{}", s + 1);
                // spread occluded samples evenly over the dataset
                let occluded = n_occluded > 0 && (index * n_occluded) / total != ((index + 1) * n_occluded) / total;
                plans.push(SamplePlan {
                    record: SampleRecord {
                        sample_id: sample_id.clone(),
                        subject_id: format!("subj{:03}", i / 2),
                        eye: if i % 2 == 0 { Eye::Left } else { Eye::Right },
                        capture_hours: hours,
                        session_index: s + 1,
                        image_path: PathBuf::from(format!("images/{sample_id}.png")),
                        coarse_mask_path: Some(PathBuf::from(format!("masks/{sample_id}_coarse.png"))),
                        fine_mask_path: Some(PathBuf::from(format!("masks/{sample_id}_fine.png"))),
                    },
                    identity: i,
                    circles,
                    decay: DecaySpec::from_level(level),
                    seed,
                    occluded,
                });
            }
        }
        Ok(plans)
    }

    pub fn render_plan(&self, plan: &SamplePlan, identity: &SyntheticIdentity) -> Result<RenderedSample> {
        let mut opts = self.render.clone();
        if plan.occluded {
            opts.occlusion_keep = self.occlusion.as_ref().map(|o| o.keep);
        }
        render_sample(identity, &plan.circles, self.width, self.height, &plan.decay, plan.seed, &opts)
    }
}

/// Renders and writes the whole dataset under `out_dir`: `images/`,
/// `masks/`, `manifest.csv`, `truth.json` and `synth_config.json`.
pub fn gen_dataset(out_dir: &Path, config: &SynthConfig) -> Result<SynthDataset> {
    let plans = config.plan()?;
    let identities: Vec<SyntheticIdentity> = (0..config.n_identities).map(|i| config.identity(i)).collect();
    for sub in ["images", "masks"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let truth = plans
        .par_iter()
        .map(|p| -> Result<SampleTruth> {
            let r = config.render_plan(p, &identities[p.identity as usize])?;
            let rec = &p.record;
            save_image(&out_dir.join(&rec.image_path), &r.image)?;
            write_mask(&out_dir.join(rec.coarse_mask_path.as_ref().unwrap()), &r.coarse)?;
            write_mask(&out_dir.join(rec.fine_mask_path.as_ref().unwrap()), &r.fine)?;
            Ok(SampleTruth {
                sample_id: rec.sample_id.clone(),
                identity: p.identity,
                pupil: r.circles.pupil,
                limbic: r.circles.limbic,
                decay_level: p.decay.level,
                rotation: r.rotation,
                occluded: p.occluded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<SampleRecord> = plans.into_iter().map(|p| p.record).collect();
    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&manifest_path, &records)?;
    let write_json = |name: &str, value: &serde_json::Value| -> Result<()> {
        let p = out_dir.join(name);
        let text = serde_json::to_string_pretty(value).expect("json values serialize");
        std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
    };
    write_json("truth.json", &serde_json::to_value(&truth).expect("serializable"))?;
    write_json("synth_config.json", &serde_json::to_value(config).expect("serializable"))?;
    Ok(SynthDataset {
        manifest: Manifest::new(records, out_dir)?,
        truth,
        manifest_path,
    })
}

pub fn load_truth(path: &Path) -> Result<Vec<SampleTruth>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circles(cx: f64, cy: f64, pr: f64, lr: f64) -> BoundaryCircles {
        BoundaryCircles::from_circles(Circle::new(cx, cy, pr), Circle::new(cx, cy, lr))
    }

    #[test]
    fn decay_level_zero_is_null() {
        let d = DecaySpec::from_level(0.0);
        assert_eq!((d.erosion_fraction, d.noise_sigma, d.deformation, d.contrast), (0.0, 0.0, 0.0, 1.0));
        let mut prev = d;
        for i in 1..=10 {
            let d = DecaySpec::from_level(i as f64 / 10.0);
            assert!(d.erosion_fraction >= prev.erosion_fraction);
            assert!(d.noise_sigma >= prev.noise_sigma);
            assert!(d.deformation >= prev.deformation);
            assert!(d.contrast <= prev.contrast);
            prev = d;
        }
    }

    #[test]
    fn identity_is_a_function_of_seed() {
        let p = TextureParams::default();
        assert_eq!(SyntheticIdentity::from_seed(5, &p), SyntheticIdentity::from_seed(5, &p));
        assert_ne!(SyntheticIdentity::from_seed(5, &p), SyntheticIdentity::from_seed(6, &p));
    }

    #[test]
    fn polar_inverse_recovers_forward_map() {
        let pupil = Boundary {
            circle: Circle::new(300.0, 240.0, 40.0),
            amp: 1.5,
            freq: 3.0,
            phase: 0.3,
        };
        let limbic = Boundary {
            circle: Circle::new(304.0, 238.0, 110.0),
            amp: 3.0,
            freq: 4.0,
            phase: 1.1,
        };
        for &(rho, t) in &[(0.1, 0.2), (0.5, 2.0), (0.9, 4.5), (0.0, 6.0), (1.0, 3.1)] {
            let (px, py) = pupil.point(t);
            let (lx, ly) = limbic.point(t);
            let (x, y) = ((1.0 - rho) * px + rho * lx, (1.0 - rho) * py + rho * ly);
            let (r2, t2) = polar_coords(&pupil, &limbic, x, y);
            assert!((r2 - rho).abs() < 1e-6 && (t2 - t).abs() < 1e-6, "{rho},{t} -> {r2},{t2}");
        }
    }

    #[test]
    fn render_respects_intensity_bands() {
        let id = SyntheticIdentity::from_seed(1, &TextureParams::default());
        let c = circles(320.0, 240.0, 40.0, 100.0);
        let opts = RenderOptions {
            eyelids: false,
            ..RenderOptions::default()
        };
        let r = render_sample(&id, &c, 640, 480, &DecaySpec::none(), 3, &opts).unwrap();
        let px = |x: u32, y: u32| r.image.get(x, y);
        assert!(px(320, 240) <= 30);
        assert!(px(10, 10) >= 200);
        assert!(r.coarse.get(390, 240));
        assert!(!r.coarse.get(320, 240));
        assert_eq!(r.coarse, r.fine.clone().with_semantics(MaskSemantics::Coarse));
    }

    #[test]
    fn full_decay_erodes_fine_mask() {
        let id = SyntheticIdentity::from_seed(1, &TextureParams::default());
        let c = circles(320.0, 240.0, 40.0, 110.0);
        let opts = RenderOptions::default();
        let r0 = render_sample(&id, &c, 640, 480, &DecaySpec::none(), 3, &opts).unwrap();
        let r1 = render_sample(&id, &c, 640, 480, &DecaySpec::from_level(1.0), 3, &opts).unwrap();
        assert!((r1.fine.count() as f64) <= 0.25 * r0.fine.count() as f64);
    }

    #[test]
    fn occlusion_keeps_requested_fraction() {
        let id = SyntheticIdentity::from_seed(1, &TextureParams::default());
        let c = circles(320.0, 240.0, 40.0, 110.0);
        let opts = RenderOptions {
            occlusion_keep: Some(0.35),
            ..RenderOptions::default()
        };
        let r = render_sample(&id, &c, 640, 480, &DecaySpec::none(), 3, &opts).unwrap();
        let frac = r.fine.count() as f64 / r.coarse.count() as f64;
        assert!(frac <= 0.35 && frac > 0.25, "{frac}");
    }

    #[test]
    fn schedule_json_is_a_map() {
        let s = DecaySchedule::new(vec![(24.0, 0.2), (0.0, 0.0)]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"0":0.0,"24":0.2}"#);
        let back: DecaySchedule = serde_json::from_str(r#"{"24h": 0.2, "0": 0}"#).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.for_session(0, 5), (0.0, 0.0));
        assert_eq!(s.for_session(4, 5), (24.0, 0.2));
    }

    #[test]
    fn plan_counts_and_ordering() {
        let cfg = SynthConfig::default();
        let plans = cfg.plan().unwrap();
        assert_eq!(plans.len(), 100);
        let recs: Vec<SampleRecord> = plans.iter().map(|p| p.record.clone()).collect();
        assert!(Manifest::new(recs, "").is_ok());
        let occl = SynthConfig {
            occlusion: Some(OcclusionConfig { fraction: 0.3, keep: 0.35 }),
            ..SynthConfig::default()
        };
        assert_eq!(occl.plan().unwrap().iter().filter(|p| p.occluded).count(), 30);
    }
}
