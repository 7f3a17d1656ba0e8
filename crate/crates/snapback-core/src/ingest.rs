//! Manifest loading, image decoding, deterministic 512x512 preprocessing,
//! and stratified train/test splitting.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::raster::{RasterImage, PREPROCESSED_SIDE};

/// One labeled dataset entry. Label 0 = human-captured, 1 = AI-generated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    pub label: u8,
}

/// A manifest row that failed validation, with its 1-based line number.
#[derive(Debug, Clone)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    pub rejected: Vec<RejectedRow>,
}

/// Load a two-column CSV manifest (`file_name,label`, UTF-8, header row).
///
/// Rows with a label outside {0,1} or a duplicate id are rejected and
/// reported with their line number; zero valid rows is a fatal error.
/// Ids are derived from the file basename (extension stripped). Input order
/// is preserved.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;

    {
        let headers = reader.headers()?;
        if headers.len() < 2 || headers.get(0) != Some("file_name") || headers.get(1) != Some("label") {
            return Err(Error::SchemaMismatch(format!(
                "manifest header must be `file_name,label`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let row = row?;
        let Some(file_name) = row.get(0).map(str::trim).filter(|s| !s.is_empty()) else {
            rejected.push(RejectedRow {
                line,
                reason: "missing file_name".into(),
            });
            continue;
        };
        let label = match row.get(1).map(str::trim) {
            Some("0") => 0u8,
            Some("1") => 1u8,
            other => {
                rejected.push(RejectedRow {
                    line,
                    reason: format!("label {:?} not in {{0,1}}", other.unwrap_or("")),
                });
                continue;
            }
        };
        let path = PathBuf::from(file_name);
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file_name.to_string());
        if !seen_ids.insert(id.clone()) {
            rejected.push(RejectedRow {
                line,
                reason: format!("duplicate id `{}`", id),
            });
            continue;
        }
        records.push(ImageRecord { id, path, label });
    }

    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "zero valid rows in manifest {}",
            path.display()
        )));
    }
    Ok(Manifest { records, rejected })
}

/// Decode and preprocess one image: shorter side resized to 512 with
/// bilinear interpolation (aspect preserved), center-cropped to 512x512,
/// intensities scaled to [0,1]. Grayscale inputs are replicated to RGB.
pub fn load_and_preprocess(record: &ImageRecord, root: Option<&Path>) -> Result<RasterImage> {
    let path = match root {
        Some(root) if record.path.is_relative() => root.join(&record.path),
        _ => record.path.clone(),
    };
    let img = image::open(&path).map_err(|e| Error::ImageDecode {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(Error::ImageDecode {
            path,
            reason: "zero-area image".into(),
        });
    }
    Ok(preprocess(&RasterImage::from_rgb8(&rgb)))
}

/// Geometry half of `load_and_preprocess`, exposed for in-memory inputs.
pub fn preprocess(raster: &RasterImage) -> RasterImage {
    let (h, w) = (raster.height(), raster.width());
    let side = PREPROCESSED_SIDE;
    let resized = if h == side && w == side {
        raster.clone()
    } else if h <= w {
        let new_w = ((w as f64) * (side as f64) / (h as f64)).round() as usize;
        raster.resize_bilinear(side, new_w.max(side))
    } else {
        let new_h = ((h as f64) * (side as f64) / (w as f64)).round() as usize;
        raster.resize_bilinear(new_h.max(side), side)
    };
    resized
        .center_crop(side, side)
        .expect("resize guarantees both sides >= 512")
}

/// Deterministic stratified split. Per-label test proportions land within
/// one item of `test_fraction`; train and test partition the input.
pub fn stratified_split(
    records: &[ImageRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let mut by_label: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in records.iter().enumerate() {
        by_label[r.label as usize].push(i);
    }
    for (label, idx) in by_label.iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::TooFewPerClass {
                label: label as u8,
                count: idx.len(),
            });
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut test_idx: HashSet<usize> = HashSet::new();
    for idx in &by_label {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        let n_test = ((idx.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.clamp(1, idx.len() - 1);
        test_idx.extend(shuffled.into_iter().take(n_test));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((train, test))
}
