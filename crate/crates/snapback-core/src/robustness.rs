//! The six augmentation conditions and the per-condition AUROC harness.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::featurize;
use crate::metrics::{metric_curve, PerceptualProvider};
use crate::model::{auroc, ModelBundle};
use crate::pipeline::PipelineImage;
use crate::raster::{RasterImage, PREPROCESSED_SIDE};
use crate::reconstruct::{
    reconstruct_all, ReconstructionBackend, ReconstructionParams, StrengthSchedule,
};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentationKind {
    Raw,
    Jpeg60,
    Webp60,
    Blur,
    Noise,
    Screenshot,
}

/// One augmentation condition with its parameters. Defaults express exactly
/// the six evaluated conditions: raw, JPEG-60, WebP-60, Gaussian blur
/// (sigma 1.2), additive Gaussian noise (sigma 6.0 in 8-bit units), and
/// simulated screenshot resampling (downscale to 320 px, upsample back).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    pub quality: u8,
    pub blur_sigma: f64,
    /// Noise sigma in 8-bit intensity units; divided by 255 internally.
    pub noise_sigma: f64,
    pub screenshot_size: usize,
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind) -> Self {
        Self {
            kind,
            quality: 60,
            blur_sigma: 1.2,
            noise_sigma: 6.0,
            screenshot_size: 320,
        }
    }

    pub fn six_conditions() -> Vec<Self> {
        [
            AugmentationKind::Raw,
            AugmentationKind::Jpeg60,
            AugmentationKind::Webp60,
            AugmentationKind::Blur,
            AugmentationKind::Noise,
            AugmentationKind::Screenshot,
        ]
        .into_iter()
        .map(Self::new)
        .collect()
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            AugmentationKind::Raw => "raw",
            AugmentationKind::Jpeg60 => "jpeg60",
            AugmentationKind::Webp60 => "webp60",
            AugmentationKind::Blur => "blur",
            AugmentationKind::Noise => "noise",
            AugmentationKind::Screenshot => "screenshot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let kind = match s {
            "raw" => AugmentationKind::Raw,
            "jpeg60" => AugmentationKind::Jpeg60,
            "webp60" => AugmentationKind::Webp60,
            "blur" => AugmentationKind::Blur,
            "noise" => AugmentationKind::Noise,
            "screenshot" => AugmentationKind::Screenshot,
            _ => return None,
        };
        Some(Self::new(kind))
    }
}

fn jpeg_roundtrip(image: &RasterImage, quality: u8) -> Result<RasterImage> {
    let rgb = image.to_rgb8();
    let mut buf = Vec::new();
    let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality);
    rgb.write_with_encoder(encoder)
        .map_err(|e| Error::BackendInit(format!("jpeg encoder unavailable: {e}")))?;
    let decoded = image::load_from_memory(&buf)
        .map_err(|e| Error::BackendInit(format!("jpeg decoder unavailable: {e}")))?;
    Ok(RasterImage::from_rgb8(&decoded.to_rgb8()))
}

fn webp_roundtrip(image: &RasterImage, quality: u8) -> Result<RasterImage> {
    let rgb = image.to_rgb8();
    let encoder = webp::Encoder::from_rgb(rgb.as_raw(), rgb.width(), rgb.height());
    let bytes = encoder.encode(f32::from(quality));
    let decoded = webp::Decoder::new(&bytes)
        .decode()
        .ok_or_else(|| Error::BackendInit("webp decoder unavailable".into()))?;
    let dynamic = decoded.to_image();
    Ok(RasterImage::from_rgb8(&dynamic.to_rgb8()))
}

/// Apply one augmentation condition. Output is always 512x512x3 in [0,1];
/// `raw` is bit-identical to the input.
pub fn augment(image: &RasterImage, spec: &AugmentationSpec, seed: u64) -> Result<RasterImage> {
    if !image.is_preprocessed() {
        return Err(Error::InvalidInput("augmentation input must be 512x512".into()));
    }
    match spec.kind {
        AugmentationKind::Raw => Ok(image.clone()),
        AugmentationKind::Jpeg60 => jpeg_roundtrip(image, spec.quality),
        AugmentationKind::Webp60 => webp_roundtrip(image, spec.quality),
        AugmentationKind::Blur => Ok(image.gaussian_blur(spec.blur_sigma)),
        AugmentationKind::Noise => {
            let sigma = spec.noise_sigma / 255.0;
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::InvalidInput(format!("bad noise sigma: {e}")))?;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut out = image.clone();
            for v in out.data_mut() {
                *v = (*v + normal.sample(&mut rng) as f32).clamp(0.0, 1.0);
            }
            Ok(out)
        }
        AugmentationKind::Screenshot => {
            let side = spec.screenshot_size;
            let down = image.resize_bilinear(side, side);
            Ok(down.resize_bilinear(PREPROCESSED_SIDE, PREPROCESSED_SIDE))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub condition: String,
    pub auroc: f64,
    pub n_evaluated: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["condition", "auroc", "n_evaluated", "n_failed"])?;
        for r in &self.rows {
            w.write_record([
                r.condition.clone(),
                r.auroc.to_string(),
                r.n_evaluated.to_string(),
                r.n_failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn condition_seed(run_seed: u64, condition: &str, source_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(condition.as_bytes());
    h.update([0]);
    h.update(source_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// For each condition: augment every image, re-run reconstruction and
/// feature extraction, score with the fixed bundle (no refitting), and
/// report AUROC. Failed images are excluded from that condition and counted.
#[allow(clippy::too_many_arguments)]
pub fn robustness_eval(
    images: &[PipelineImage],
    bundle: &ModelBundle,
    backend: &dyn ReconstructionBackend,
    provider: &dyn PerceptualProvider,
    schedule: &StrengthSchedule,
    params: &ReconstructionParams,
    specs: &[AugmentationSpec],
    seed: u64,
) -> Result<RobustnessReport> {
    let mut report = RobustnessReport::default();
    for spec in specs {
        let condition = spec.label();
        let scored: Vec<Result<Option<(f64, u8)>>> = images
            .par_iter()
            .map(|img| {
                let augmented = match augment(
                    &img.raster,
                    spec,
                    condition_seed(seed, condition, &img.id),
                ) {
                    Ok(a) => a,
                    Err(Error::BackendInit(e)) => return Err(Error::BackendInit(e)),
                    Err(_) => return Ok(None),
                };
                let set = match reconstruct_all(backend, &img.id, &augmented, schedule, params) {
                    Ok(s) => s,
                    Err(Error::BackendInit(e)) => return Err(Error::BackendInit(e)),
                    Err(_) => return Ok(None),
                };
                let curve = metric_curve(&augmented, &set, provider, Some(img.label))?;
                let features = featurize(&curve, crate::metrics::DEFAULT_SSIM_TAU);
                let proba = bundle.predict_proba(&features.values)?;
                Ok(Some((proba, img.label)))
            })
            .collect();

        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let mut n_failed = 0usize;
        for s in scored {
            match s? {
                Some((p, l)) => {
                    scores.push(p);
                    labels.push(l);
                }
                None => n_failed += 1,
            }
        }
        let auc = auroc(&scores, &labels)?;
        report.rows.push(RobustnessRow {
            condition: condition.to_string(),
            auroc: auc,
            n_evaluated: scores.len(),
            n_failed,
        });
    }
    Ok(report)
}
