//! Rubber-sheet unwrapping of the iris annulus into a polar rectangle.
//!
//! Row `i` sits at radial fraction `(i + 0.5) / H` between the pupillary
//! (row 0 side) and limbic (row H-1 side) circles; column `j` sits at angle
//! `2πj / W`, measured from the positive x axis and counter-clockwise as seen
//! on screen (image y grows downward, so a point at angle θ is
//! `(cx + r cos θ, cy - r sin θ)`). The two circles need not be concentric:
//! each boundary point is taken relative to its own centre and the sample
//! point interpolates linearly between them.

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryCircles;
use crate::error::{Error, Result};
use crate::manifest::{BinaryMask, IrisImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarSize {
    /// Radial resolution (rows).
    pub height: usize,
    /// Angular resolution (columns).
    pub width: usize,
}

impl Default for PolarSize {
    fn default() -> Self {
        PolarSize {
            height: 64,
            width: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIris {
    pub height: usize,
    pub width: usize,
    /// Row-major intensities in [0, 1].
    pub texture: Vec<f64>,
    pub mask: Vec<bool>,
}

impl NormalizedIris {
    pub fn new(height: usize, width: usize, texture: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if texture.len() != height * width || mask.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "polar buffers must hold {height}x{width} entries"
            )));
        }
        Ok(NormalizedIris {
            height,
            width,
            texture,
            mask,
        })
    }

    #[inline]
    pub fn texture_at(&self, row: usize, col: usize) -> f64 {
        self.texture[row * self.width + col]
    }

    #[inline]
    pub fn mask_at(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn mask_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&b| b).count() as f64 / self.mask.len() as f64
    }

    /// Circularly rolls columns: `out[c] = in[c - k]`.
    pub fn roll_columns(&self, k: i64) -> NormalizedIris {
        let w = self.width as i64;
        let mut texture = vec![0.0; self.texture.len()];
        let mut mask = vec![false; self.mask.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                let src = (c as i64 - k).rem_euclid(w) as usize;
                texture[r * self.width + c] = self.texture[r * self.width + src];
                mask[r * self.width + c] = self.mask[r * self.width + src];
            }
        }
        NormalizedIris {
            height: self.height,
            width: self.width,
            texture,
            mask,
        }
    }
}

/// Bilinear intensity at a sub-pixel position, scaled to [0, 1]; `None`
/// outside `[0, w-1] × [0, h-1]`.
pub fn bilinear(image: &IrisImage, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (image.width as f64, image.height as f64);
    if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
        return None;
    }
    let x0 = (x.floor() as u32).min(image.width - 1);
    let y0 = (y.floor() as u32).min(image.height - 1);
    let x1 = (x0 + 1).min(image.width - 1);
    let y1 = (y0 + 1).min(image.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |x, y| image.get(x, y) as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    Some((top * (1.0 - fy) + bottom * fy) / 255.0)
}

/// Image-plane point for polar cell `(row, col)`.
pub fn sample_point(circles: &BoundaryCircles, size: PolarSize, row: usize, col: usize) -> (f64, f64) {
    let theta = std::f64::consts::TAU * col as f64 / size.width as f64;
    let rho = (row as f64 + 0.5) / size.height as f64;
    let (s, c) = theta.sin_cos();
    let p = &circles.pupil;
    let l = &circles.limbic;
    let px = p.cx + p.r * c;
    let py = p.cy - p.r * s;
    let lx = l.cx + l.r * c;
    let ly = l.cy - l.r * s;
    ((1.0 - rho) * px + rho * lx, (1.0 - rho) * py + rho * ly)
}

fn check_size(size: PolarSize) -> Result<()> {
    if size.height == 0 || size.width == 0 {
        return Err(Error::Config("polar dimensions must be positive".into()));
    }
    Ok(())
}

/// Texture component of the rubber sheet plus the in-bounds map: cells whose
/// sample point falls outside the image hold 0 and `false`.
pub fn rubber_sheet(image: &IrisImage, circles: &BoundaryCircles, size: PolarSize) -> Result<(Vec<f64>, Vec<bool>)> {
    check_size(size)?;
    let mut texture = Vec::with_capacity(size.height * size.width);
    let mut inside = Vec::with_capacity(size.height * size.width);
    for row in 0..size.height {
        for col in 0..size.width {
            let (x, y) = sample_point(circles, size, row, col);
            match bilinear(image, x, y) {
                Some(v) => {
                    texture.push(v);
                    inside.push(true);
                }
                None => {
                    texture.push(0.0);
                    inside.push(false);
                }
            }
        }
    }
    Ok((texture, inside))
}

/// Nearest-neighbour sampling of the fine mask on the rubber-sheet grid.
pub fn normalize_mask(fine_mask: &BinaryMask, circles: &BoundaryCircles, size: PolarSize) -> Result<Vec<bool>> {
    check_size(size)?;
    let mut out = Vec::with_capacity(size.height * size.width);
    for row in 0..size.height {
        for col in 0..size.width {
            let (x, y) = sample_point(circles, size, row, col);
            out.push(fine_mask.get_signed(x.round() as i64, y.round() as i64));
        }
    }
    Ok(out)
}

/// Full normalization: texture, and a mask that is the fine mask restricted
/// to in-bounds samples.
pub fn normalize(
    image: &IrisImage,
    fine_mask: &BinaryMask,
    circles: &BoundaryCircles,
    size: PolarSize,
) -> Result<NormalizedIris> {
    if (fine_mask.width, fine_mask.height) != (image.width, image.height) {
        return Err(Error::InvalidArgument("mask and image dimensions differ".into()));
    }
    let (texture, inside) = rubber_sheet(image, circles, size)?;
    let mask = normalize_mask(fine_mask, circles, size)?
        .into_iter()
        .zip(inside)
        .map(|(m, i)| m && i)
        .collect();
    NormalizedIris::new(size.height, size.width, texture, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Circle;
    use crate::manifest::MaskSemantics;

    fn radial_image(f: impl Fn(f64) -> u8) -> IrisImage {
        let (w, h) = (320u32, 240u32);
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                px.push(f((x as f64 - 160.0).hypot(y as f64 - 120.0)));
            }
        }
        IrisImage::new(w, h, px).unwrap()
    }

    fn concentric(p: f64, l: f64) -> BoundaryCircles {
        BoundaryCircles::from_circles(Circle::new(160.0, 120.0, p), Circle::new(160.0, 120.0, l))
    }

    #[test]
    fn radial_image_gives_angularly_constant_columns() {
        // stepwise radial function, constant across each ring band
        let img = radial_image(|r| ((r / 8.0).floor() as u32 * 20 % 256) as u8);
        let size = PolarSize { height: 16, width: 64 };
        let (tex, inside) = rubber_sheet(&img, &concentric(30.0, 90.0), size).unwrap();
        assert!(inside.iter().all(|&b| b));
        for row in 0..size.height {
            // rows sampled mid-band avoid the step discontinuities
            let band = &tex[row * size.width..(row + 1) * size.width];
            let spread = band.iter().cloned().fold(f64::MIN, f64::max) - band.iter().cloned().fold(f64::MAX, f64::min);
            let rho = (row as f64 + 0.5) / 16.0;
            let r = 30.0 + rho * 60.0;
            if (r / 8.0 - (r / 8.0).round()).abs() > 0.2 {
                assert!(spread < 1e-9, "row {row} spread {spread}");
            }
        }
    }

    #[test]
    fn smooth_radial_image_columns_match() {
        let img = radial_image(|r| (r * 1.5).min(255.0) as u8);
        let size = PolarSize { height: 8, width: 32 };
        let (tex, _) = rubber_sheet(&img, &concentric(20.0, 100.0), size).unwrap();
        for row in 0..8 {
            let band = &tex[row * 32..(row + 1) * 32];
            for v in band {
                assert!((v - band[0]).abs() < 2.0 / 255.0);
            }
        }
    }

    #[test]
    fn all_true_mask_stays_true_and_all_false_stays_false() {
        let size = PolarSize { height: 16, width: 64 };
        let c = concentric(30.0, 90.0);
        let t = BinaryMask::new_filled(320, 240, true, MaskSemantics::Fine);
        assert!(normalize_mask(&t, &c, size).unwrap().iter().all(|&b| b));
        let f = BinaryMask::new_filled(320, 240, false, MaskSemantics::Fine);
        assert!(normalize_mask(&f, &c, size).unwrap().iter().all(|&b| !b));
    }

    #[test]
    fn out_of_bounds_samples_are_zero_and_masked() {
        let img = radial_image(|_| 200);
        let mask = BinaryMask::new_filled(320, 240, true, MaskSemantics::Fine);
        // limbic circle pokes past the left edge
        let c = BoundaryCircles::from_circles(Circle::new(60.0, 120.0, 20.0), Circle::new(60.0, 120.0, 90.0));
        let n = normalize(&img, &mask, &c, PolarSize { height: 16, width: 64 }).unwrap();
        let mut saw_outside = false;
        for (t, m) in n.texture.iter().zip(&n.mask) {
            if !m {
                saw_outside = true;
                assert_eq!(*t, 0.0);
            }
        }
        assert!(saw_outside);
    }

    #[test]
    fn theta_quarter_turn_points_up() {
        let c = concentric(10.0, 50.0);
        let (x, y) = sample_point(&c, PolarSize { height: 4, width: 8 }, 3, 2);
        assert!((x - 160.0).abs() < 1e-9);
        assert!(y < 120.0);
    }

    #[test]
    fn roll_columns_wraps() {
        let n = NormalizedIris::new(1, 4, vec![0.0, 1.0, 2.0, 3.0], vec![true, false, true, true]).unwrap();
        let r = n.roll_columns(1);
        assert_eq!(r.texture, vec![3.0, 0.0, 1.0, 2.0]);
        assert_eq!(r.mask, vec![true, true, false, true]);
        assert_eq!(n.roll_columns(-3), r);
    }
}
