//! Multi-strength img2img reconstruction: the backend contract, the batch
//! runner, and a deterministic mock backend for tests and dry runs.
//!
//! Each strength restarts from the original image; strengths are never
//! chained. Backend outputs are snapped to the 16-bit grid before metrics or
//! caching so that cached PNGs reproduce in-memory rasters bit-exactly.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// The paper's reconstruction strengths.
pub const DEFAULT_STRENGTHS: [f64; 4] = [0.15, 0.30, 0.60, 0.90];

/// Ordered, strictly increasing strengths in (0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthSchedule {
    strengths: Vec<f64>,
}

impl StrengthSchedule {
    pub fn new(strengths: Vec<f64>) -> Result<Self> {
        if strengths.is_empty() {
            return Err(Error::InvalidInput("empty strength schedule".into()));
        }
        for w in strengths.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(format!(
                    "strengths must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if strengths.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::InvalidInput("strengths must lie in (0,1]".into()));
        }
        Ok(Self { strengths })
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }
}

impl Default for StrengthSchedule {
    fn default() -> Self {
        Self {
            strengths: DEFAULT_STRENGTHS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionParams {
    pub total_steps: u32,
    pub guidance_scale: f64,
    pub seed: u64,
    pub backend_id: String,
    pub prompt: String,
}

impl Default for ReconstructionParams {
    fn default() -> Self {
        Self {
            total_steps: 50,
            guidance_scale: 1.0,
            seed: 0,
            backend_id: "mock-smooth".into(),
            prompt: String::new(),
        }
    }
}

impl ReconstructionParams {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 1 {
            return Err(Error::InvalidInput("total_steps must be >= 1".into()));
        }
        if self.guidance_scale <= 0.0 {
            return Err(Error::InvalidInput("guidance_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Effective denoising steps under the standard img2img convention.
pub fn effective_steps(strength: f64, total_steps: u32) -> u32 {
    (strength * f64::from(total_steps)).round() as u32
}

/// Reconstructions of one source image across a schedule. A `None` output is
/// a recorded per-strength failure; downstream metrics become missing values.
#[derive(Debug, Clone)]
pub struct ReconstructionSet {
    pub source_id: String,
    pub outputs: Vec<(f64, Option<RasterImage>)>,
    pub params: ReconstructionParams,
}

impl ReconstructionSet {
    pub fn output_at(&self, strength: f64) -> Option<&RasterImage> {
        self.outputs
            .iter()
            .find(|(s, _)| *s == strength)
            .and_then(|(_, r)| r.as_ref())
    }

    pub fn failed_strengths(&self) -> Vec<f64> {
        self.outputs
            .iter()
            .filter(|(_, r)| r.is_none())
            .map(|(s, _)| *s)
            .collect()
    }
}

/// The reconstruction backend contract.
///
/// Determinism: fixed (image, strength, seed, params) must reproduce the
/// output, bit-exact for the mock backend; for real diffusion engines the
/// contract is determinism up to the inference runtime's guarantees.
pub trait ReconstructionBackend: Sync {
    fn id(&self) -> &str;

    fn reconstruct(
        &self,
        source_id: &str,
        image: &RasterImage,
        strength: f64,
        params: &ReconstructionParams,
    ) -> Result<RasterImage>;
}

/// Run one image through every schedule strength independently. Per-strength
/// inference failures become missing entries; backend-init errors abort.
pub fn reconstruct_all(
    backend: &dyn ReconstructionBackend,
    source_id: &str,
    image: &RasterImage,
    schedule: &StrengthSchedule,
    params: &ReconstructionParams,
) -> Result<ReconstructionSet> {
    params.validate()?;
    if !image.is_preprocessed() {
        return Err(Error::InvalidInput(format!(
            "reconstruction input must be 512x512, got {}x{}",
            image.height(),
            image.width()
        )));
    }
    let mut outputs = Vec::with_capacity(schedule.len());
    for &s in schedule.strengths() {
        match backend.reconstruct(source_id, image, s, params) {
            Ok(mut out) => {
                if !out.same_shape(image) {
                    return Err(Error::DimensionMismatch(format!(
                        "backend returned {}x{} for a {}x{} input",
                        out.height(),
                        out.width(),
                        image.height(),
                        image.width()
                    )));
                }
                out.quantize_u16();
                outputs.push((s, Some(out)));
            }
            Err(Error::BackendInit(e)) => return Err(Error::BackendInit(e)),
            Err(_) => outputs.push((s, None)),
        }
    }
    Ok(ReconstructionSet {
        source_id: source_id.to_string(),
        outputs,
        params: params.clone(),
    })
}

/// Degradation profile of the mock backend's noise-mix curve.
///
/// `Smooth` mimics on-manifold (AI-generated) behavior: gentle, nearly linear
/// degradation across the whole schedule. `Abrupt` mimics off-manifold
/// (human-captured) behavior: it tracks the smooth ramp closely up to
/// strength 0.6 and then collapses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DegradationProfile {
    Smooth,
    Abrupt,
}

impl DegradationProfile {
    /// Noise mixing weight alpha(s) in [0,1).
    pub fn noise_mix(self, strength: f64) -> f64 {
        match self {
            DegradationProfile::Smooth => 0.12 * strength,
            DegradationProfile::Abrupt => 0.1 * strength + 0.5 * (strength - 0.6).max(0.0),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "smooth" => Some(DegradationProfile::Smooth),
            "abrupt" => Some(DegradationProfile::Abrupt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DegradationProfile::Smooth => "smooth",
            DegradationProfile::Abrupt => "abrupt",
        }
    }
}

/// Blur radius of the mock backend, monotone in strength.
fn mock_blur_sigma(strength: f64) -> f64 {
    0.8 * strength
}

/// Deterministic stand-in for the diffusion engine:
/// `(1 - alpha(s)) * blur(image, sigma(s)) + alpha(s) * uniform_noise`,
/// clipped to [0,1]. Identity in the strength -> 0 limit.
pub fn mock_reconstruct(
    image: &RasterImage,
    strength: f64,
    seed: u64,
    profile: DegradationProfile,
) -> Result<RasterImage> {
    if !(strength > 0.0 && strength <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "strength must be in (0,1], got {strength}"
        )));
    }
    let alpha = profile.noise_mix(strength);
    let mut out = image.gaussian_blur(mock_blur_sigma(strength));
    let mut rng = ChaCha20Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ strength.to_bits(),
    );
    for v in out.data_mut() {
        let n: f32 = rng.gen_range(0.0..1.0);
        *v = ((1.0 - alpha as f32) * *v + alpha as f32 * n).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Mock backend with a per-image profile map.
///
/// The per-image noise seed is derived from the run seed and the source id so
/// two images never share a noise realization while runs stay reproducible.
pub struct MockBackend {
    profiles: HashMap<String, DegradationProfile>,
    default_profile: DegradationProfile,
    id: String,
}

impl MockBackend {
    pub fn uniform(profile: DegradationProfile) -> Self {
        Self {
            profiles: HashMap::new(),
            default_profile: profile,
            id: format!("mock-{}", profile.name()),
        }
    }

    /// Profile chosen per image; used to build mixed synthetic corpora.
    pub fn with_profiles(
        profiles: HashMap<String, DegradationProfile>,
        default_profile: DegradationProfile,
    ) -> Self {
        Self {
            profiles,
            default_profile,
            id: "mock-mapped".into(),
        }
    }

    fn profile_for(&self, source_id: &str) -> DegradationProfile {
        self.profiles
            .get(source_id)
            .copied()
            .unwrap_or(self.default_profile)
    }

    fn image_seed(source_id: &str, run_seed: u64) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(run_seed.to_le_bytes());
        h.update(source_id.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }
}

impl ReconstructionBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn reconstruct(
        &self,
        source_id: &str,
        image: &RasterImage,
        strength: f64,
        params: &ReconstructionParams,
    ) -> Result<RasterImage> {
        let seed = Self::image_seed(source_id, params.seed);
        mock_reconstruct(image, strength, seed, self.profile_for(source_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ssim;

    fn test_image() -> RasterImage {
        crate::synth::gen_image(99)
    }

    #[test]
    fn schedule_default_matches_paper_strengths() {
        let s = StrengthSchedule::default();
        assert_eq!(s.strengths(), &[0.15, 0.30, 0.60, 0.90]);
    }

    #[test]
    fn schedule_rejects_unsorted_and_out_of_range() {
        assert!(StrengthSchedule::new(vec![0.3, 0.2]).is_err());
        assert!(StrengthSchedule::new(vec![0.0, 0.5]).is_err());
        assert!(StrengthSchedule::new(vec![0.5, 1.2]).is_err());
        assert!(StrengthSchedule::new(vec![]).is_err());
    }

    #[test]
    fn effective_steps_convention() {
        // round(0.15 * 50) = round(7.5) = 8
        assert_eq!(effective_steps(0.15, 50), 8);
        assert_eq!(effective_steps(0.30, 50), 15);
        assert_eq!(effective_steps(0.60, 50), 30);
        assert_eq!(effective_steps(0.90, 50), 45);
    }

    #[test]
    fn mock_is_deterministic() {
        let img = test_image();
        let a = mock_reconstruct(&img, 0.6, 7, DegradationProfile::Smooth).unwrap();
        let b = mock_reconstruct(&img, 0.6, 7, DegradationProfile::Smooth).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mock_seed_changes_output() {
        let img = test_image();
        let a = mock_reconstruct(&img, 0.6, 7, DegradationProfile::Smooth).unwrap();
        let b = mock_reconstruct(&img, 0.6, 8, DegradationProfile::Smooth).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn mock_low_strength_stays_close_to_input() {
        let img = test_image();
        let out = mock_reconstruct(&img, 0.01, 7, DegradationProfile::Smooth).unwrap();
        let max_dev = img
            .data()
            .iter()
            .zip(out.data())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        // alpha(0.01) ~ 0.001 and sigma(0.01) ~ 0.008, so deviation is tiny.
        assert!(max_dev < 0.05, "max deviation {max_dev}");
    }

    #[test]
    fn abrupt_profile_collapses_before_smooth() {
        // Knee comparison: first scheduled strength with SSIM < 0.8.
        let img = test_image();
        let knee = |profile: DegradationProfile| {
            for &s in &DEFAULT_STRENGTHS {
                let r = mock_reconstruct(&img, s, 5, profile).unwrap();
                if ssim(&img, &r).unwrap() < 0.8 {
                    return s;
                }
            }
            1.0
        };
        let abrupt = knee(DegradationProfile::Abrupt);
        let smooth = knee(DegradationProfile::Smooth);
        assert!(
            abrupt < smooth,
            "abrupt knee {abrupt} should precede smooth knee {smooth}"
        );
    }

    #[test]
    fn reconstruct_all_covers_schedule() {
        let backend = MockBackend::uniform(DegradationProfile::Smooth);
        let img = test_image();
        let set = reconstruct_all(
            &backend,
            "img0",
            &img,
            &StrengthSchedule::default(),
            &ReconstructionParams::default(),
        )
        .unwrap();
        assert_eq!(set.outputs.len(), 4);
        assert!(set.failed_strengths().is_empty());
        for (_, out) in &set.outputs {
            let out = out.as_ref().unwrap();
            assert!(out.is_preprocessed());
            assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn reconstruct_all_single_strength_matches_mock() {
        let backend = MockBackend::uniform(DegradationProfile::Smooth);
        let img = test_image();
        let params = ReconstructionParams::default();
        let set = reconstruct_all(
            &backend,
            "img0",
            &img,
            &StrengthSchedule::new(vec![0.5]).unwrap(),
            &params,
        )
        .unwrap();
        let mut expected = mock_reconstruct(
            &img,
            0.5,
            MockBackend::image_seed("img0", params.seed),
            DegradationProfile::Smooth,
        )
        .unwrap();
        expected.quantize_u16();
        assert_eq!(set.output_at(0.5).unwrap(), &expected);
    }

    #[test]
    fn strength_independence() {
        let backend = MockBackend::uniform(DegradationProfile::Abrupt);
        let img = test_image();
        let params = ReconstructionParams::default();
        let full = reconstruct_all(&backend, "x", &img, &StrengthSchedule::default(), &params).unwrap();
        let only = reconstruct_all(
            &backend,
            "x",
            &img,
            &StrengthSchedule::new(vec![0.60]).unwrap(),
            &params,
        )
        .unwrap();
        assert_eq!(full.output_at(0.60), only.output_at(0.60));
    }
}
