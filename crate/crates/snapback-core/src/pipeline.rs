//! End-to-end feature extraction: reconstruction (with caching) -> metric
//! curves -> 15-feature rows, parallel across images.

use rayon::prelude::*;

use crate::cache::ReconCache;
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureMatrix, FeatureRow};
use crate::ingest::{load_and_preprocess, ImageRecord};
use crate::metrics::{metric_curve, PerceptualProvider};
use crate::raster::RasterImage;
use crate::reconstruct::{
    ReconstructionBackend, ReconstructionParams, ReconstructionSet, StrengthSchedule,
};

/// A preprocessed image ready for reconstruction.
#[derive(Debug, Clone)]
pub struct PipelineImage {
    pub id: String,
    pub label: u8,
    pub raster: RasterImage,
}

#[derive(Debug, Clone)]
pub struct ExtractFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub matrix: FeatureMatrix,
    pub failures: Vec<ExtractFailure>,
}

pub struct ExtractConfig<'a> {
    pub backend: &'a dyn ReconstructionBackend,
    pub provider: &'a dyn PerceptualProvider,
    pub schedule: &'a StrengthSchedule,
    pub params: &'a ReconstructionParams,
    pub cache: Option<&'a ReconCache>,
    pub ssim_tau: f64,
}

/// Reconstruct one image across the schedule, consulting the cache first.
/// Per-strength inference failures become missing outputs and are reported.
fn reconstruct_cached(
    cfg: &ExtractConfig,
    id: &str,
    raster: &RasterImage,
    failures: &mut Vec<ExtractFailure>,
) -> Result<ReconstructionSet> {
    let mut outputs = Vec::with_capacity(cfg.schedule.len());
    for &s in cfg.schedule.strengths() {
        if let Some(cache) = cfg.cache {
            if let Some(hit) = cache.get(id, s, cfg.params) {
                outputs.push((s, Some(hit)));
                continue;
            }
        }
        match cfg.backend.reconstruct(id, raster, s, cfg.params) {
            Ok(mut out) => {
                out.quantize_u16();
                if let Some(cache) = cfg.cache {
                    cache.put(id, s, cfg.params, &out)?;
                }
                outputs.push((s, Some(out)));
            }
            Err(Error::BackendInit(e)) => return Err(Error::BackendInit(e)),
            Err(e) => {
                failures.push(ExtractFailure {
                    id: id.to_string(),
                    reason: format!("strength {s}: {e}"),
                });
                outputs.push((s, None));
            }
        }
    }
    Ok(ReconstructionSet {
        source_id: id.to_string(),
        outputs,
        params: cfg.params.clone(),
    })
}

/// Extract features for in-memory preprocessed images.
pub fn extract_from_images(images: &[PipelineImage], cfg: &ExtractConfig) -> Result<ExtractOutcome> {
    cfg.params.validate()?;
    let results: Vec<Result<(FeatureRow, Vec<ExtractFailure>)>> = images
        .par_iter()
        .map(|img| {
            let mut failures = Vec::new();
            let set = reconstruct_cached(cfg, &img.id, &img.raster, &mut failures)?;
            let curve = metric_curve(&img.raster, &set, cfg.provider, Some(img.label))?;
            let row = FeatureRow {
                id: img.id.clone(),
                label: img.label,
                features: featurize(&curve, cfg.ssim_tau),
            };
            Ok((row, failures))
        })
        .collect();

    let mut matrix = FeatureMatrix::default();
    let mut failures = Vec::new();
    for r in results {
        let (row, fails) = r?;
        matrix.rows.push(row);
        failures.extend(fails);
    }
    Ok(ExtractOutcome { matrix, failures })
}

/// Extract features straight from manifest records, decoding and
/// preprocessing each image. Undecodable images are skipped and reported.
pub fn extract_from_records(
    records: &[ImageRecord],
    root: Option<&std::path::Path>,
    cfg: &ExtractConfig,
) -> Result<ExtractOutcome> {
    let loaded: Vec<std::result::Result<PipelineImage, ExtractFailure>> = records
        .par_iter()
        .map(|rec| match load_and_preprocess(rec, root) {
            Ok(raster) => Ok(PipelineImage {
                id: rec.id.clone(),
                label: rec.label,
                raster,
            }),
            Err(e) => Err(ExtractFailure {
                id: rec.id.clone(),
                reason: e.to_string(),
            }),
        })
        .collect();

    let mut images = Vec::new();
    let mut failures = Vec::new();
    for l in loaded {
        match l {
            Ok(img) => images.push(img),
            Err(f) => failures.push(f),
        }
    }
    let mut outcome = extract_from_images(&images, cfg)?;
    outcome.failures.extend(failures);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::ReconCache;
    use crate::features::save_features;
    use crate::metrics::SurrogateProvider;
    use crate::reconstruct::{DegradationProfile, MockBackend};
    use crate::synth::gen_corpus;

    fn small_corpus(n: usize) -> (Vec<PipelineImage>, MockBackend) {
        let (images, profiles) = gen_corpus(n, 11);
        let backend = MockBackend::with_profiles(profiles, DegradationProfile::Smooth);
        (images, backend)
    }

    #[test]
    fn extract_produces_one_row_per_image() {
        let (images, backend) = small_corpus(6);
        let schedule = StrengthSchedule::default();
        let params = ReconstructionParams::default();
        let cfg = ExtractConfig {
            backend: &backend,
            provider: &SurrogateProvider,
            schedule: &schedule,
            params: &params,
            cache: None,
            ssim_tau: 0.8,
        };
        let out = extract_from_images(&images, &cfg).unwrap();
        assert_eq!(out.matrix.rows.len(), 6);
        assert!(out.failures.is_empty());
        for row in &out.matrix.rows {
            assert!(row.features.values.iter().all(|v| v.is_some()));
        }
    }

    #[test]
    fn rerun_with_cache_is_identical_and_cache_backed() {
        let (images, backend) = small_corpus(4);
        let dir = tempfile::tempdir().unwrap();
        let cache = ReconCache::new(dir.path());
        let schedule = StrengthSchedule::default();
        let params = ReconstructionParams::default();
        let cfg = ExtractConfig {
            backend: &backend,
            provider: &SurrogateProvider,
            schedule: &schedule,
            params: &params,
            cache: Some(&cache),
            ssim_tau: 0.8,
        };
        let first = extract_from_images(&images, &cfg).unwrap();
        let second = extract_from_images(&images, &cfg).unwrap();
        assert_eq!(first.matrix, second.matrix);

        // a second run against a backend that always fails must succeed via
        // cache hits alone
        struct FailingBackend;
        impl ReconstructionBackend for FailingBackend {
            fn id(&self) -> &str {
                "mock-smooth"
            }
            fn reconstruct(
                &self,
                source_id: &str,
                _image: &RasterImage,
                strength: f64,
                _params: &ReconstructionParams,
            ) -> crate::Result<RasterImage> {
                Err(Error::Inference {
                    source_id: source_id.into(),
                    strength,
                    reason: "backend should not be called".into(),
                })
            }
        }
        let cfg_cached = ExtractConfig {
            backend: &FailingBackend,
            ..cfg
        };
        let third = extract_from_images(&images, &cfg_cached).unwrap();
        assert!(third.failures.is_empty());
        assert_eq!(first.matrix, third.matrix);

        let f = tempfile::NamedTempFile::new().unwrap();
        save_features(&first.matrix, f.path()).unwrap();
    }

    #[test]
    fn per_strength_failure_becomes_missing_features() {
        struct FlakyBackend;
        impl ReconstructionBackend for FlakyBackend {
            fn id(&self) -> &str {
                "flaky"
            }
            fn reconstruct(
                &self,
                source_id: &str,
                image: &RasterImage,
                strength: f64,
                params: &ReconstructionParams,
            ) -> crate::Result<RasterImage> {
                if strength == 0.30 {
                    return Err(Error::Inference {
                        source_id: source_id.into(),
                        strength,
                        reason: "simulated".into(),
                    });
                }
                crate::reconstruct::mock_reconstruct(
                    image,
                    strength,
                    params.seed,
                    DegradationProfile::Smooth,
                )
            }
        }
        let (images, _) = small_corpus(2);
        let schedule = StrengthSchedule::default();
        let params = ReconstructionParams::default();
        let cfg = ExtractConfig {
            backend: &FlakyBackend,
            provider: &SurrogateProvider,
            schedule: &schedule,
            params: &params,
            cache: None,
            ssim_tau: 0.8,
        };
        let out = extract_from_images(&images, &cfg).unwrap();
        assert_eq!(out.failures.len(), 2);
        for row in &out.matrix.rows {
            assert!(row.features.get("lpips_0.30").is_none());
            assert!(row.features.get("lpips_0.15").is_some());
        }
    }
}
