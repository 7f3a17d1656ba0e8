//! Diffusion snap-back forensics.
//!
//! Classifies images as human-captured or AI-generated by measuring how a
//! diffusion img2img reconstructor degrades them across increasing noise
//! strengths. The pipeline extracts 15 interpretable reconstruction-dynamics
//! features (12 point-wise LPIPS/SSIM/PSNR values over the strength schedule
//! plus AUC-LPIPS, delta-LP, and knee-step) and scores them with a calibrated
//! l2-regularized logistic regression.

pub mod batch;
pub mod cache;
pub mod error;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod raster;
pub mod reconstruct;
pub mod robustness;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, FeatureRow, FeatureVector, FEATURE_NAMES};
pub use ingest::ImageRecord;
pub use metrics::{MetricCurve, MetricTriple, PerceptualProvider, SurrogateProvider};
pub use model::{EvalReport, ModelBundle};
pub use raster::RasterImage;
pub use reconstruct::{
    DegradationProfile, MockBackend, ReconstructionBackend, ReconstructionParams,
    ReconstructionSet, StrengthSchedule,
};
pub use robustness::{AugmentationKind, AugmentationSpec};
