//! Binary morphology with disc structuring elements and connected components.
//!
//! Pixels outside the frame are ignored by both erosion and dilation, so an
//! all-true mask is a fixed point of opening and closing.

use crate::manifest::BinaryMask;

/// Half-widths of a disc of radius `r`, indexed by `dy + r`.
fn disc_spans(r: u32) -> Vec<i64> {
    let r = r as i64;
    (-r..=r)
        .map(|dy| (((r * r - dy * dy) as f64).sqrt()).floor() as i64)
        .collect()
}

fn row_prefix(mask: &BinaryMask) -> Vec<u32> {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let mut p = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        let out = &mut p[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            out[x + 1] = out[x] + row[x] as u32;
        }
    }
    p
}

#[derive(Clone, Copy)]
enum Op {
    Erode,
    Dilate,
}

fn apply(mask: &BinaryMask, radius: u32, op: Op) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let w = mask.width as i64;
    let h = mask.height as i64;
    let spans = disc_spans(radius);
    let prefix = row_prefix(mask);
    let stride = (w + 1) as usize;
    let r = radius as i64;
    let mut bits = vec![false; mask.bits.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = matches!(op, Op::Erode);
            for (k, &half) in spans.iter().enumerate() {
                let yy = y + k as i64 - r;
                if yy < 0 || yy >= h {
                    continue;
                }
                let lo = (x - half).max(0);
                let hi = (x + half).min(w - 1);
                let base = yy as usize * stride;
                let count = prefix[base + hi as usize + 1] - prefix[base + lo as usize];
                match op {
                    Op::Dilate if count > 0 => {
                        acc = true;
                        break;
                    }
                    Op::Erode if count as i64 != hi - lo + 1 => {
                        acc = false;
                        break;
                    }
                    _ => {}
                }
            }
            bits[(y * w + x) as usize] = acc;
        }
    }
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits,
        semantics: mask.semantics,
    }
}

pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    apply(mask, radius, Op::Erode)
}

pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    apply(mask, radius, Op::Dilate)
}

pub fn open(mask: &BinaryMask, radius: u32) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

pub fn close(mask: &BinaryMask, radius: u32) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

/// Labels 4-connected components of the true set. Returns per-pixel labels
/// (0 = background) and component sizes indexed by `label - 1`, in raster
/// order of first pixel.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest 4-connected component; ties go to the component
/// found first in raster order.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (labels, sizes) = label_components(mask);
    let Some(best) = sizes
        .iter()
        .enumerate()
        .fold(None::<(usize, usize)>, |acc, (i, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i as u32 + 1)
    else {
        return mask.clone();
    };
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits: labels.iter().map(|&l| l == best).collect(),
        semantics: mask.semantics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::MaskSemantics;

    fn disc(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, MaskSemantics::Coarse, |x, y| {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            dx * dx + dy * dy <= r * r
        })
    }

    // brute-force oracle: direct neighbourhood scan
    fn dilate_naive(m: &BinaryMask, r: u32) -> BinaryMask {
        let r = r as i64;
        BinaryMask::from_fn(m.width, m.height, m.semantics, |x, y| {
            (-r..=r).any(|dy| {
                (-r..=r).any(|dx| dx * dx + dy * dy <= r * r && m.get_signed(x as i64 + dx, y as i64 + dy))
            })
        })
    }

    #[test]
    fn dilation_matches_naive_scan() {
        let mut m = BinaryMask::new_filled(40, 30, false, MaskSemantics::Coarse);
        for (x, y) in [(3, 4), (20, 15), (39, 29), (0, 0), (25, 2)] {
            m.set(x, y, true);
        }
        for r in 0..5 {
            assert_eq!(dilate(&m, r), dilate_naive(&m, r), "radius {r}");
        }
    }

    #[test]
    fn all_true_is_fixed_point() {
        let m = BinaryMask::new_filled(20, 20, true, MaskSemantics::Coarse);
        assert_eq!(open(&m, 3), m);
        assert_eq!(close(&m, 3), m);
    }

    #[test]
    fn opening_removes_isolated_pixels() {
        let mut m = disc(64, 64, 32.0, 32.0, 15.0);
        m.set(2, 2, true);
        m.set(60, 5, true);
        let o = open(&m, 1);
        assert!(!o.get(2, 2) && !o.get(60, 5));
        assert!(o.get(32, 32));
    }

    #[test]
    fn components_are_four_connected() {
        let mut m = BinaryMask::new_filled(4, 4, false, MaskSemantics::Coarse);
        m.set(0, 0, true);
        m.set(1, 1, true); // diagonal neighbour only
        let (_, sizes) = label_components(&m);
        assert_eq!(sizes, vec![1, 1]);
    }
}
