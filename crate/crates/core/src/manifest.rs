//! Dataset manifest schema and loaders for images and mask files.
//!
//! A manifest is a UTF-8 CSV with the header
//! `sample_id,subject_id,eye,capture_hours,session_index,image_path,coarse_mask_path,fine_mask_path`.
//! Paths are relative to the directory holding the manifest; an empty mask
//! path means the mask is absent.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 8] = [
    "sample_id",
    "subject_id",
    "eye",
    "capture_hours",
    "session_index",
    "image_path",
    "coarse_mask_path",
    "fine_mask_path",
];

/// Smallest accepted image side.
pub const MIN_IMAGE_SIDE: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::Left => "left",
            Eye::Right => "right",
        })
    }
}

impl std::str::FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Eye::Left),
            "right" | "r" => Ok(Eye::Right),
            other => Err(format!("unknown eye `{other}`")),
        }
    }
}

/// One captured eye image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub eye: Eye,
    /// Hours since death; 0 for ante-mortem data.
    pub capture_hours: f64,
    /// 1-based acquisition session ordinal.
    pub session_index: u32,
    pub image_path: PathBuf,
    pub coarse_mask_path: Option<PathBuf>,
    pub fine_mask_path: Option<PathBuf>,
}

impl SampleRecord {
    /// Identity key used for genuine/impostor labelling.
    pub fn identity(&self) -> (&str, Eye) {
        (&self.subject_id, self.eye)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifestWarning {
    MissingFile { sample_id: String, path: PathBuf },
}

impl fmt::Display for ManifestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestWarning::MissingFile { sample_id, path } => {
                write!(f, "{sample_id}: missing file {}", path.display())
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
    pub warnings: Vec<ManifestWarning>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    sample_id: String,
    subject_id: String,
    eye: String,
    capture_hours: f64,
    session_index: u32,
    image_path: String,
    #[serde(default)]
    coarse_mask_path: String,
    #[serde(default)]
    fine_mask_path: String,
}

fn opt_path(s: &str) -> Option<PathBuf> {
    let s = s.trim();
    (!s.is_empty()).then(|| PathBuf::from(s))
}

impl Manifest {
    pub fn new(records: Vec<SampleRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Manifest {
            records,
            base_dir: base_dir.into(),
            warnings: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn index(&self) -> HashMap<&str, &SampleRecord> {
        self.records
            .iter()
            .map(|r| (r.sample_id.as_str(), r))
            .collect()
    }

    /// Keeps records matching `keep`, preserving order.
    pub fn filtered(&self, keep: impl Fn(&SampleRecord) -> bool) -> Manifest {
        Manifest {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            base_dir: self.base_dir.clone(),
            warnings: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId(r.sample_id.clone()));
            }
            if !(r.capture_hours >= 0.0) || !r.capture_hours.is_finite() {
                return Err(Error::InvalidRecord {
                    sample_id: r.sample_id.clone(),
                    message: format!("capture_hours must be finite and >= 0, got {}", r.capture_hours),
                });
            }
            if r.session_index == 0 {
                return Err(Error::InvalidRecord {
                    sample_id: r.sample_id.clone(),
                    message: "session_index must be positive".into(),
                });
            }
        }
        // session ordering must agree with capture time per (subject, eye)
        let mut groups: HashMap<(&str, Eye), Vec<&SampleRecord>> = HashMap::new();
        for r in &self.records {
            groups.entry(r.identity()).or_default().push(r);
        }
        for recs in groups.values() {
            for a in recs {
                for b in recs {
                    if a.session_index > b.session_index && a.capture_hours < b.capture_hours {
                        return Err(Error::InvalidRecord {
                            sample_id: a.sample_id.clone(),
                            message: format!(
                                "session {} captured at {}h precedes session {} of `{}` at {}h",
                                a.session_index, a.capture_hours, b.session_index, b.sample_id, b.capture_hours
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn collect_missing(&mut self) {
        let mut warnings = Vec::new();
        for r in &self.records {
            let paths = std::iter::once(Some(&r.image_path))
                .chain([r.coarse_mask_path.as_ref(), r.fine_mask_path.as_ref()])
                .flatten();
            for p in paths {
                if !self.resolve(p).exists() {
                    warnings.push(ManifestWarning::MissingFile {
                        sample_id: r.sample_id.clone(),
                        path: p.clone(),
                    });
                }
            }
        }
        self.warnings = warnings;
    }
}

/// Parses a manifest CSV. Missing referenced files are reported in
/// `Manifest::warnings`, not as errors.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut manifest = parse_manifest(&text, base_dir)?;
    manifest.collect_missing();
    Ok(manifest)
}

pub fn parse_manifest(text: &str, base_dir: PathBuf) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::ManifestParse {
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != MANIFEST_HEADER {
        return Err(Error::ManifestParse {
            line: 1,
            message: format!("expected header `{}`, got `{}`", MANIFEST_HEADER.join(","), got.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in reader.deserialize::<RawRow>() {
        let row = row.map_err(|e| Error::ManifestParse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let eye = row.eye.parse::<Eye>().map_err(|message| Error::InvalidRecord {
            sample_id: row.sample_id.clone(),
            message,
        })?;
        records.push(SampleRecord {
            sample_id: row.sample_id,
            subject_id: row.subject_id,
            eye,
            capture_hours: row.capture_hours,
            session_index: row.session_index,
            image_path: PathBuf::from(row.image_path),
            coarse_mask_path: opt_path(&row.coarse_mask_path),
            fine_mask_path: opt_path(&row.fine_mask_path),
        });
    }
    Manifest::new(records, base_dir)
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn manifest_to_csv(records: &[SampleRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
    w.write_record(MANIFEST_HEADER).map_err(to_err)?;
    for r in records {
        w.write_record([
            r.sample_id.clone(),
            r.subject_id.clone(),
            r.eye.to_string(),
            r.capture_hours.to_string(),
            r.session_index.to_string(),
            r.image_path.to_string_lossy().into_owned(),
            path_str(&r.coarse_mask_path),
            path_str(&r.fine_mask_path),
        ])
        .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    std::fs::write(path, manifest_to_csv(records)?).map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl IrisImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::InvalidImage(format!(
                "image {width}x{height} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
            )));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidImage(format!(
                "pixel buffer has {} entries, expected {}",
                pixels.len(),
                width as usize * height as usize
            )));
        }
        Ok(IrisImage {
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSemantics {
    /// Whole iris region between the boundaries, minus eyelids.
    Coarse,
    /// Usable texture only.
    Fine,
}

/// Per-pixel iris map, row-major; `true` = iris.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
    pub semantics: MaskSemantics,
}

impl BinaryMask {
    pub fn new_filled(width: u32, height: u32, value: bool, semantics: MaskSemantics) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
            semantics,
        }
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        semantics: MaskSemantics,
        f: impl Fn(u32, u32) -> bool,
    ) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask {
            width,
            height,
            bits,
            semantics,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    /// Bounds-checked read; outside the frame reads as `false`.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u64) < self.width as u64
            && (y as u64) < self.height as u64
            && self.get(x as u32, y as u32)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn true_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    pub fn with_semantics(mut self, semantics: MaskSemantics) -> Self {
        self.semantics = semantics;
        self
    }

    /// Nearest-neighbour resampling to `width`×`height`.
    pub fn resized(&self, width: u32, height: u32) -> BinaryMask {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let xs: Vec<u32> = (0..width)
            .map(|x| ((x as u64 * self.width as u64) / width as u64) as u32)
            .collect();
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let sy = ((y as u64 * self.height as u64) / height as u64) as u32;
            bits.extend(xs.iter().map(|&sx| self.get(sx, sy)));
        }
        BinaryMask {
            width,
            height,
            bits,
            semantics: self.semantics,
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }
}

pub fn load_image(path: &Path) -> Result<IrisImage> {
    let gray = open_gray(path)?;
    let (w, h) = gray.dimensions();
    IrisImage::new(w, h, gray.into_raw())
}

pub fn save_image(path: &Path, image: &IrisImage) -> Result<()> {
    let gray = GrayImage::from_raw(image.width, image.height, image.pixels.clone())
        .ok_or_else(|| Error::InvalidImage("pixel buffer size mismatch".into()))?;
    save_gray(path, &gray)
}

fn open_gray(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.into_luma8())
}

pub(crate) fn save_gray(path: &Path, gray: &GrayImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    gray.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskWarning {
    ZeroArea,
}

/// Loads an 8-bit mask (true iff value > 127) and resamples it to the target
/// size with nearest-neighbour indexing.
pub fn load_mask(
    path: &Path,
    target_width: u32,
    target_height: u32,
    semantics: MaskSemantics,
) -> Result<(BinaryMask, Option<MaskWarning>)> {
    let gray = open_gray(path)?;
    let (w, h) = gray.dimensions();
    let native = BinaryMask {
        width: w,
        height: h,
        bits: gray.as_raw().iter().map(|&v| v > 127).collect(),
        semantics,
    };
    let mask = native.resized(target_width, target_height);
    let warning = mask.is_empty().then_some(MaskWarning::ZeroArea);
    Ok((mask, warning))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    save_gray(path, &mask.to_gray())
}
