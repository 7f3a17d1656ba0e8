//! Backend and perceptual-provider resolution from config ids.

use std::collections::HashMap;

use snapback_core::error::Error as CoreError;
use snapback_core::ingest::ImageRecord;
use snapback_core::metrics::{PerceptualProvider, SurrogateProvider};
use snapback_core::raster::RasterImage;
use snapback_core::reconstruct::{
    DegradationProfile, MockBackend, ReconstructionBackend, ReconstructionParams,
};

/// Adapter slot for out-of-process diffusion engines (model id
/// "stable-diffusion-v1.5", DDIM, half precision). Reconstructions are
/// resolved through the cache; anything missing is reported so the driver
/// can emit a batch request file for the external engine.
pub struct CacheOnlyBackend {
    id: String,
}

impl ReconstructionBackend for CacheOnlyBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn reconstruct(
        &self,
        source_id: &str,
        _image: &RasterImage,
        strength: f64,
        _params: &ReconstructionParams,
    ) -> snapback_core::Result<RasterImage> {
        Err(CoreError::Inference {
            source_id: source_id.into(),
            strength,
            reason: format!(
                "no cached reconstruction for backend `{}`; run the external engine on the pending request file",
                self.id
            ),
        })
    }
}

/// Resolve a backend id. `mock-smooth` and `mock-abrupt` apply one profile
/// everywhere; `mock-labelwise` maps label 0 to the abrupt profile and
/// label 1 to smooth (the synthetic end-to-end experiment); `sd-v1.5` is
/// the cache-backed external adapter.
pub fn resolve_backend(
    id: &str,
    records: &[ImageRecord],
) -> Result<Box<dyn ReconstructionBackend>, CoreError> {
    match id {
        "mock-smooth" => Ok(Box::new(MockBackend::uniform(DegradationProfile::Smooth))),
        "mock-abrupt" => Ok(Box::new(MockBackend::uniform(DegradationProfile::Abrupt))),
        "mock-labelwise" => {
            let profiles: HashMap<String, DegradationProfile> = records
                .iter()
                .map(|r| {
                    let p = if r.label == 0 {
                        DegradationProfile::Abrupt
                    } else {
                        DegradationProfile::Smooth
                    };
                    (r.id.clone(), p)
                })
                .collect();
            Ok(Box::new(MockBackend::with_profiles(
                profiles,
                DegradationProfile::Smooth,
            )))
        }
        "sd-v1.5" => Ok(Box::new(CacheOnlyBackend { id: id.to_string() })),
        other => Err(CoreError::BackendInit(format!(
            "unknown backend `{other}` (expected mock-smooth, mock-abrupt, mock-labelwise, or sd-v1.5)"
        ))),
    }
}

pub fn resolve_provider(id: &str) -> Result<Box<dyn PerceptualProvider>, CoreError> {
    match id {
        "surrogate" => Ok(Box::new(SurrogateProvider)),
        other => Err(CoreError::BackendInit(format!(
            "unknown perceptual provider `{other}` (expected surrogate)"
        ))),
    }
}
