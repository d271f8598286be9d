//! Masked fractional Hamming distance with rotation compensation, and
//! bit-count score normalization.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::encoding::IrisCode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Fractional Hamming distance at the best shift; `None` when no shift
    /// had any commonly unmasked bit.
    pub hd_raw: Option<f64>,
    pub best_shift: i32,
    /// Commonly unmasked bits at `best_shift`.
    pub n: u32,
    pub hd_norm: Option<f64>,
}

impl MatchResult {
    pub fn no_overlap() -> Self {
        MatchResult {
            hd_raw: None,
            best_shift: 0,
            n: 0,
            hd_norm: None,
        }
    }

    pub fn is_no_overlap(&self) -> bool {
        self.hd_raw.is_none()
    }
}

/// Typical number of commonly unmasked bits between different irises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormContext {
    pub n_typical: f64,
}

impl NormContext {
    pub fn new(n_typical: f64, code_bits: usize) -> Result<Self> {
        if !(n_typical > 0.0) || n_typical > code_bits as f64 {
            return Err(Error::InvalidArgument(format!(
                "typical bit count {n_typical} must lie in (0, {code_bits}]"
            )));
        }
        Ok(NormContext { n_typical })
    }
}

fn check_comparable(a: &IrisCode, b: &IrisCode) -> Result<()> {
    if a.fingerprint != b.fingerprint {
        return Err(Error::FingerprintMismatch(a.fingerprint, b.fingerprint));
    }
    if a.grid_columns() != b.grid_columns() || a.bits_per_column() != b.bits_per_column() {
        return Err(Error::CodeGeometry(format!(
            "{}x{} vs {}x{} bits",
            a.grid_columns(),
            a.bits_per_column(),
            b.grid_columns(),
            b.bits_per_column()
        )));
    }
    Ok(())
}

/// Disagreeing and commonly unmasked bit counts with `b` rotated by `shift`
/// grid columns (`b'[col j] = b[col j - shift]`).
#[inline]
fn counts_at_shift(a: &IrisCode, b: &IrisCode, shift: i64) -> (u32, u32) {
    let cols = a.grid_columns();
    let wpc = a.words_per_column();
    let (ca, ma) = (a.code_words(), a.mask_words());
    let (cb, mb) = (b.code_words(), b.mask_words());
    let mut diff = 0u32;
    let mut common = 0u32;
    let s = shift.rem_euclid(cols as i64) as usize;
    for j in 0..cols {
        let src = if j >= s { j - s } else { j + cols - s };
        let (ia, ib) = (j * wpc, src * wpc);
        for w in 0..wpc {
            let m = ma[ia + w] & mb[ib + w];
            common += m.count_ones();
            diff += ((ca[ia + w] ^ cb[ib + w]) & m).count_ones();
        }
    }
    (diff, common)
}

/// Fractional Hamming distance at one shift; `None` when no bit is commonly
/// unmasked.
pub fn hamming_at_shift(a: &IrisCode, b: &IrisCode, shift: i64) -> Result<(Option<f64>, u32)> {
    check_comparable(a, b)?;
    let (diff, n) = counts_at_shift(a, b, shift);
    Ok(((n > 0).then(|| diff as f64 / n as f64), n))
}

/// Shifts in preference order: 0, -1, +1, -2, +2, ...
fn shift_order(max_shift: u32) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_shift as i64).flat_map(|s| [-s, s]))
}

/// Minimum Hamming distance over shifts in `[-max_shift, max_shift]`. Ties go
/// to the smaller |shift|, then to the negative shift.
pub fn match_codes(a: &IrisCode, b: &IrisCode, max_shift: u32) -> Result<MatchResult> {
    check_comparable(a, b)?;
    let mut best: Option<(u32, u32, i64)> = None;
    for s in shift_order(max_shift) {
        let (diff, n) = counts_at_shift(a, b, s);
        if n == 0 {
            continue;
        }
        // exact comparison of diff/n fractions
        let better = match best {
            None => true,
            Some((bd, bn, _)) => (diff as u64 * bn as u64).cmp(&(bd as u64 * n as u64)) == Ordering::Less,
        };
        if better {
            best = Some((diff, n, s));
        }
    }
    Ok(match best {
        None => MatchResult::no_overlap(),
        Some((diff, n, s)) => MatchResult {
            hd_raw: Some(diff as f64 / n as f64),
            best_shift: s as i32,
            n,
            hd_norm: None,
        },
    })
}

/// `0.5 - (0.5 - hd_raw) * sqrt(n / N)`, unclamped. Returns `hd_raw`
/// unchanged when `n == N`.
pub fn normalize_score(hd_raw: f64, n: u32, ctx: &NormContext) -> Result<f64> {
    if n == 0 {
        return Err(Error::UndefinedScore);
    }
    if !(ctx.n_typical > 0.0) {
        return Err(Error::InvalidArgument("typical bit count must be positive".into()));
    }
    if n as f64 == ctx.n_typical {
        return Ok(hd_raw);
    }
    Ok(0.5 - (0.5 - hd_raw) * (n as f64 / ctx.n_typical).sqrt())
}

/// Mean commonly-unmasked bit count over impostor comparisons.
pub fn estimate_n(impostor_results: &[MatchResult]) -> Result<NormContext> {
    if impostor_results.is_empty() {
        return Err(Error::EmptyImpostorSet);
    }
    if impostor_results.iter().any(|r| r.n == 0) {
        return Err(Error::InvalidArgument("impostor results must all have n > 0".into()));
    }
    let sum: u64 = impostor_results.iter().map(|r| r.n as u64).sum();
    Ok(NormContext {
        n_typical: sum as f64 / impostor_results.len() as f64,
    })
}
