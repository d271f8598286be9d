//! Gabor phase encoding of normalized irises into bit-packed codes.
//!
//! Every application point on a `grid_rows × grid_columns` lattice over the
//! polar rectangle is filtered by every complex kernel of the bank; the sign
//! of the real and imaginary responses gives two code bits. The polar
//! rectangle is a cylinder: kernel windows wrap around in the angular
//! direction and clamp at the radial edges.
//!
//! Bits are laid out column-major: grid column `j` owns a contiguous block
//! of `grid_rows * filters * 2` bits ordered `(row, filter, re/im)`. Internally
//! each column block is padded to whole `u64` words so that a rotation by
//! whole grid columns is a pure re-indexing of words.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::normalization::{NormalizedIris, PolarSize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborSpec {
    /// Carrier wavelength in polar pixels.
    pub wavelength: f64,
    /// Carrier orientation in radians; 0 runs along the angular axis.
    pub orientation: f64,
    /// Envelope σ along the carrier direction.
    pub sigma_x: f64,
    /// Envelope σ across the carrier direction.
    pub sigma_y: f64,
    /// Explicit `[rows, cols]` kernel size (odd); derived from 2σ when absent.
    #[serde(default)]
    pub kernel_size: Option<[usize; 2]>,
}

impl GaborSpec {
    /// Angular-axis filter with σ = λ/2 along the carrier and λ/4 across it.
    pub fn angular(wavelength: f64) -> Self {
        GaborSpec {
            wavelength,
            orientation: 0.0,
            sigma_x: wavelength / 2.0,
            sigma_y: wavelength / 4.0,
            kernel_size: None,
        }
    }

    fn half_extent(&self) -> (usize, usize) {
        if let Some([rows, cols]) = self.kernel_size {
            return (rows / 2, cols / 2);
        }
        let (s, c) = self.orientation.sin_cos();
        let rows = 2.0 * ((self.sigma_x * s).powi(2) + (self.sigma_y * c).powi(2)).sqrt();
        let cols = 2.0 * ((self.sigma_x * c).powi(2) + (self.sigma_y * s).powi(2)).sqrt();
        (rows.ceil() as usize, cols.ceil() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterBankConfig {
    pub filters: Vec<GaborSpec>,
    pub grid_rows: usize,
    pub grid_columns: usize,
    /// Minimum fraction of unmasked pixels under a kernel window for its bit
    /// pair to count as valid.
    pub coverage_threshold: f64,
}

impl Default for FilterBankConfig {
    fn default() -> Self {
        FilterBankConfig {
            filters: [18.0, 27.0, 36.0].into_iter().map(GaborSpec::angular).collect(),
            grid_rows: 8,
            grid_columns: 32,
            coverage_threshold: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub spec: GaborSpec,
    pub half_rows: usize,
    pub half_cols: usize,
    /// Row-major `(2*half_rows+1) × (2*half_cols+1)` even (real) part.
    pub even: Vec<f64>,
    /// Odd (imaginary) part, same layout.
    pub odd: Vec<f64>,
}

impl Kernel {
    pub fn rows(&self) -> usize {
        2 * self.half_rows + 1
    }

    pub fn cols(&self) -> usize {
        2 * self.half_cols + 1
    }

    fn build(spec: &GaborSpec) -> Kernel {
        let (hr, hc) = spec.half_extent();
        let (s, c) = spec.orientation.sin_cos();
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for u in -(hr as i64)..=hr as i64 {
            for v in -(hc as i64)..=hc as i64 {
                let (u, v) = (u as f64, v as f64);
                let xr = v * c + u * s;
                let yr = -v * s + u * c;
                let env = (-(xr * xr) / (2.0 * spec.sigma_x.powi(2)) - (yr * yr) / (2.0 * spec.sigma_y.powi(2))).exp();
                let phase = std::f64::consts::TAU * xr / spec.wavelength;
                even.push(env * phase.cos());
                odd.push(env * phase.sin());
            }
        }
        let mean = even.iter().sum::<f64>() / even.len() as f64;
        even.iter_mut().for_each(|e| *e -= mean);
        Kernel {
            spec: spec.clone(),
            half_rows: hr,
            half_cols: hc,
            even,
            odd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub config: FilterBankConfig,
    pub polar: PolarSize,
    pub kernels: Vec<Kernel>,
    /// `(row, col)` application points in grid-column-major order.
    pub points: Vec<(usize, usize)>,
    pub fingerprint: u64,
}

impl FilterBank {
    pub fn code_bits(&self) -> usize {
        self.kernels.len() * self.points.len() * 2
    }

    pub fn bits_per_column(&self) -> usize {
        self.config.grid_rows * self.kernels.len() * 2
    }
}

/// 64-bit stable hash over the canonical JSON encoding of `value`.
pub fn fingerprint_of<T: Serialize>(value: &T) -> u64 {
    let json = serde_json::to_vec(value).expect("config types serialize infallibly");
    let digest = Sha256::digest(&json);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn build_filter_bank(config: &FilterBankConfig, polar: PolarSize) -> Result<FilterBank> {
    if config.filters.is_empty() {
        return Err(Error::Config("filter bank is empty".into()));
    }
    if config.grid_rows == 0 || config.grid_columns == 0 {
        return Err(Error::Config("application grid must be non-empty".into()));
    }
    if polar.width % config.grid_columns != 0 {
        return Err(Error::Config(format!(
            "polar width {} is not a multiple of {} grid columns",
            polar.width, config.grid_columns
        )));
    }
    if config.grid_rows > polar.height {
        return Err(Error::Config("more grid rows than polar rows".into()));
    }
    if !(0.0..=1.0).contains(&config.coverage_threshold) {
        return Err(Error::Config("coverage_threshold must lie in [0, 1]".into()));
    }
    let mut kernels = Vec::with_capacity(config.filters.len());
    for spec in &config.filters {
        if !(spec.wavelength > 0.0) {
            return Err(Error::Config(format!("wavelength must be positive, got {}", spec.wavelength)));
        }
        if !(spec.sigma_x > 0.0 && spec.sigma_y > 0.0) {
            return Err(Error::Config("gaussian envelope widths must be positive".into()));
        }
        if let Some([r, c]) = spec.kernel_size {
            if r % 2 == 0 || c % 2 == 0 {
                return Err(Error::Config("explicit kernel sizes must be odd".into()));
            }
        }
        let k = Kernel::build(spec);
        if k.rows() > polar.height || k.cols() > polar.width {
            return Err(Error::Config(format!(
                "kernel {}x{} (wavelength {}) exceeds polar size {}x{}",
                k.rows(),
                k.cols(),
                spec.wavelength,
                polar.height,
                polar.width
            )));
        }
        kernels.push(k);
    }
    let step = polar.width / config.grid_columns;
    let mut points = Vec::with_capacity(config.grid_rows * config.grid_columns);
    for j in 0..config.grid_columns {
        for i in 0..config.grid_rows {
            let row = ((2 * i + 1) * polar.height) / (2 * config.grid_rows);
            points.push((row, j * step));
        }
    }
    let fingerprint = fingerprint_of(&(config, polar));
    Ok(FilterBank {
        config: config.clone(),
        polar,
        kernels,
        points,
        fingerprint,
    })
}

/// Bit-packed phase code plus validity mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisCode {
    pub sample_id: String,
    pub fingerprint: u64,
    grid_columns: usize,
    bits_per_column: usize,
    words_per_column: usize,
    code: Vec<u64>,
    mask: Vec<u64>,
}

impl IrisCode {
    pub fn zeros(sample_id: impl Into<String>, fingerprint: u64, grid_columns: usize, bits_per_column: usize) -> Self {
        let words_per_column = bits_per_column.div_ceil(64).max(1);
        IrisCode {
            sample_id: sample_id.into(),
            fingerprint,
            grid_columns,
            bits_per_column,
            words_per_column,
            code: vec![0; grid_columns * words_per_column],
            mask: vec![0; grid_columns * words_per_column],
        }
    }

    /// Builds a code from logical bit vectors (column-major layout).
    pub fn from_bits(
        sample_id: impl Into<String>,
        fingerprint: u64,
        grid_columns: usize,
        code: &[bool],
        mask: &[bool],
    ) -> Result<Self> {
        if grid_columns == 0 || code.len() != mask.len() || code.len() % grid_columns != 0 {
            return Err(Error::CodeGeometry(format!(
                "{} code bits / {} mask bits do not split into {grid_columns} columns",
                code.len(),
                mask.len()
            )));
        }
        let mut out = IrisCode::zeros(sample_id, fingerprint, grid_columns, code.len() / grid_columns);
        for (i, (&c, &m)) in code.iter().zip(mask).enumerate() {
            out.set(i, c, m);
        }
        Ok(out)
    }

    pub fn bit_len(&self) -> usize {
        self.grid_columns * self.bits_per_column
    }

    pub fn grid_columns(&self) -> usize {
        self.grid_columns
    }

    pub fn bits_per_column(&self) -> usize {
        self.bits_per_column
    }

    pub(crate) fn words_per_column(&self) -> usize {
        self.words_per_column
    }

    pub(crate) fn code_words(&self) -> &[u64] {
        &self.code
    }

    pub(crate) fn mask_words(&self) -> &[u64] {
        &self.mask
    }

    #[inline]
    fn locate(&self, bit: usize) -> (usize, u64) {
        let col = bit / self.bits_per_column;
        let within = bit % self.bits_per_column;
        (col * self.words_per_column + within / 64, 1u64 << (within % 64))
    }

    pub fn set(&mut self, bit: usize, code: bool, mask: bool) {
        let (w, m) = self.locate(bit);
        if code {
            self.code[w] |= m;
        } else {
            self.code[w] &= !m;
        }
        if mask {
            self.mask[w] |= m;
        } else {
            self.mask[w] &= !m;
        }
    }

    pub fn code_bit(&self, bit: usize) -> bool {
        let (w, m) = self.locate(bit);
        self.code[w] & m != 0
    }

    pub fn mask_bit(&self, bit: usize) -> bool {
        let (w, m) = self.locate(bit);
        self.mask[w] & m != 0
    }

    pub fn mask_count(&self) -> u32 {
        self.mask.iter().map(|w| w.count_ones()).sum()
    }

    pub fn code_vec(&self) -> Vec<bool> {
        (0..self.bit_len()).map(|i| self.code_bit(i)).collect()
    }

    pub fn mask_vec(&self) -> Vec<bool> {
        (0..self.bit_len()).map(|i| self.mask_bit(i)).collect()
    }

    /// Circular shift by whole grid columns: `out[col j] = in[col j - k]`.
    pub fn shift_columns(&self, k: i64) -> IrisCode {
        let mut out = self.clone();
        let c = self.grid_columns as i64;
        let wpc = self.words_per_column;
        for j in 0..self.grid_columns {
            let src = (j as i64 - k).rem_euclid(c) as usize;
            out.code[j * wpc..(j + 1) * wpc].copy_from_slice(&self.code[src * wpc..(src + 1) * wpc]);
            out.mask[j * wpc..(j + 1) * wpc].copy_from_slice(&self.mask[src * wpc..(src + 1) * wpc]);
        }
        out
    }

    /// Bitwise complement of the code bits; mask unchanged.
    pub fn complement(&self) -> IrisCode {
        let mut out = self.clone();
        for i in 0..self.bit_len() {
            let (w, m) = self.locate(i);
            out.code[w] ^= m;
        }
        out
    }

    pub fn with_mask(&self, mask: &[bool]) -> Result<IrisCode> {
        IrisCode::from_bits(self.sample_id.clone(), self.fingerprint, self.grid_columns, &self.code_vec(), mask)
    }
}

/// Filters the normalized iris at every application point.
pub fn encode(norm: &NormalizedIris, bank: &FilterBank, sample_id: &str) -> Result<IrisCode> {
    if norm.height != bank.polar.height || norm.width != bank.polar.width {
        return Err(Error::CodeGeometry(format!(
            "normalized iris is {}x{}, bank expects {}x{}",
            norm.height, norm.width, bank.polar.height, bank.polar.width
        )));
    }
    let (h, w) = (norm.height as i64, norm.width as i64);
    let n_filters = bank.kernels.len();
    let mut code = IrisCode::zeros(sample_id, bank.fingerprint, bank.config.grid_columns, bank.bits_per_column());
    for (p, &(row, col)) in bank.points.iter().enumerate() {
        for (f, k) in bank.kernels.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            let mut covered = 0usize;
            let mut idx = 0;
            for u in -(k.half_rows as i64)..=k.half_rows as i64 {
                let rr = (row as i64 + u).clamp(0, h - 1) as usize;
                let tex_row = &norm.texture[rr * norm.width..(rr + 1) * norm.width];
                let mask_row = &norm.mask[rr * norm.width..(rr + 1) * norm.width];
                for v in -(k.half_cols as i64)..=k.half_cols as i64 {
                    let cc = (col as i64 + v).rem_euclid(w) as usize;
                    let t = tex_row[cc];
                    re += k.even[idx] * t;
                    im += k.odd[idx] * t;
                    covered += mask_row[cc] as usize;
                    idx += 1;
                }
            }
            let valid = covered as f64 >= bank.config.coverage_threshold * k.even.len() as f64;
            let bit = 2 * (p * n_filters + f);
            code.set(bit, re >= 0.0, valid);
            code.set(bit + 1, im >= 0.0, valid);
        }
    }
    Ok(code)
}

const MAGIC: &[u8; 4] = b"IRCD";
const VERSION: u8 = 1;

fn pack(bits: impl Iterator<Item = bool>, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.div_ceil(8)];
    for (i, b) in bits.enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

impl IrisCode {
    /// Serializes as: magic `IRCD`, version byte, fingerprint (u64 LE), bit
    /// length (u32 LE), code bytes, mask bytes (LSB-first, padded to a byte),
    /// sample id (u32 LE length + UTF-8), grid column count (u32 LE).
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.bit_len();
        let mut out = Vec::with_capacity(4 + 1 + 8 + 4 + 2 * n.div_ceil(8) + 8 + self.sample_id.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend(pack((0..n).map(|i| self.code_bit(i)), n));
        out.extend(pack((0..n).map(|i| self.mask_bit(i)), n));
        out.extend_from_slice(&(self.sample_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.sample_id.as_bytes());
        out.extend_from_slice(&(self.grid_columns as u32).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<IrisCode> {
        let mut r = bytes;
        let bad = |m: &str| Error::CodeFormat(m.to_string());
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(bad("truncated file"));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = take(1)?[0];
        if version != VERSION {
            return Err(Error::CodeFormat(format!("unsupported version {version}")));
        }
        let fingerprint = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let nb = n.div_ceil(8);
        let code_bytes = take(nb)?.to_vec();
        let mask_bytes = take(nb)?.to_vec();
        let id_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let sample_id = String::from_utf8(take(id_len)?.to_vec()).map_err(|_| bad("sample id is not UTF-8"))?;
        let grid_columns = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let unpack = |b: &[u8]| (0..n).map(|i| b[i / 8] >> (i % 8) & 1 == 1).collect::<Vec<_>>();
        IrisCode::from_bits(sample_id, fingerprint, grid_columns, &unpack(&code_bytes), &unpack(&mask_bytes))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<IrisCode> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::CodeFormat(e.to_string()))?;
        IrisCode::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<IrisCode> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        IrisCode::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> FilterBank {
        build_filter_bank(&FilterBankConfig::default(), PolarSize::default()).unwrap()
    }

    fn textured(h: usize, w: usize, seed: u64) -> NormalizedIris {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let texture = (0..h * w).map(|_| rng.gen::<f64>()).collect();
        NormalizedIris::new(h, w, texture, vec![true; h * w]).unwrap()
    }

    #[test]
    fn default_bank_geometry() {
        let b = bank();
        assert_eq!(b.kernels.len(), 3);
        assert_eq!(b.points.len(), 256);
        assert_eq!(b.code_bits(), 1536);
        assert_eq!(b.fingerprint, bank().fingerprint);
    }

    #[test]
    fn even_kernels_have_zero_dc() {
        for k in &bank().kernels {
            let l1: f64 = k.even.iter().map(|v| v.abs()).sum();
            assert!(k.even.iter().sum::<f64>().abs() / l1 < 1e-6);
            let odd_l1: f64 = k.odd.iter().map(|v| v.abs()).sum();
            assert!(k.odd.iter().sum::<f64>().abs() / odd_l1 < 1e-9);
        }
    }

    #[test]
    fn one_wavelength_changes_fingerprint() {
        let mut c = FilterBankConfig::default();
        c.filters[1].wavelength = 28.0;
        let other = build_filter_bank(&c, PolarSize::default()).unwrap();
        assert_ne!(other.fingerprint, bank().fingerprint);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = FilterBankConfig::default();
        c.filters[0].wavelength = 0.0;
        assert!(build_filter_bank(&c, PolarSize::default()).is_err());
        let c = FilterBankConfig::default();
        assert!(build_filter_bank(&c, PolarSize { height: 16, width: 512 }).is_err());
        assert!(build_filter_bank(&c, PolarSize { height: 64, width: 500 }).is_err());
    }

    #[test]
    fn all_masked_input_gives_empty_mask() {
        let mut n = textured(64, 512, 1);
        n.mask.iter_mut().for_each(|m| *m = false);
        let code = encode(&n, &bank(), "x").unwrap();
        assert_eq!(code.mask_count(), 0);
    }

    #[test]
    fn encode_is_deterministic() {
        let n = textured(64, 512, 2);
        let b = bank();
        assert_eq!(encode(&n, &b, "x").unwrap(), encode(&n, &b, "x").unwrap());
    }

    #[test]
    fn matched_grating_gives_constant_real_bits() {
        // W = 576 = 32 grid columns × 18 px, so every application point sits at the grating crest
        let polar = PolarSize { height: 64, width: 576 };
        let mut cfg = FilterBankConfig::default();
        cfg.filters = vec![GaborSpec::angular(18.0)];
        let b = build_filter_bank(&cfg, polar).unwrap();
        let texture = (0..64 * 576)
            .map(|i| 0.5 + 0.4 * (std::f64::consts::TAU * (i % 576) as f64 / 18.0).cos())
            .collect();
        let n = NormalizedIris::new(64, 576, texture, vec![true; 64 * 576]).unwrap();
        let code = encode(&n, &b, "g").unwrap();
        for p in 0..b.points.len() {
            assert!(code.code_bit(2 * p), "re bit at point {p}");
        }
        assert_eq!(code.mask_count() as usize, code.bit_len());
    }

    #[test]
    fn file_format_roundtrip_and_layout() {
        let n = textured(64, 512, 3);
        let code = encode(&n, &bank(), "sample-7").unwrap();
        let bytes = code.to_bytes();
        assert_eq!(&bytes[..4], b"IRCD");
        assert_eq!(bytes[4], 1);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 1536);
        assert_eq!(bytes.len(), 17 + 192 * 2 + 4 + 8 + 4);
        assert_eq!(IrisCode::from_bytes(&bytes).unwrap(), code);
        assert!(IrisCode::from_bytes(&bytes[..20]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(IrisCode::from_bytes(&bad).is_err());
    }

    #[test]
    fn shift_columns_composes() {
        let code = encode(&textured(64, 512, 4), &bank(), "s").unwrap();
        assert_eq!(code.shift_columns(3).shift_columns(-3), code);
        assert_eq!(code.shift_columns(32), code);
    }
}
