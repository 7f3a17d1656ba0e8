//! Perceptual similarity metrics between an original raster and its
//! reconstructions: PSNR, single-scale SSIM, and a pluggable perceptual
//! distance (LPIPS seam).

use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::reconstruct::ReconstructionSet;

/// Zero-MSE PSNR cap; also the upper bound so the feature matrix never
/// carries infinities. Interacts with standardization downstream.
pub const PSNR_CAP_DB: f64 = 100.0;

/// SSIM knee threshold used by the knee-step feature.
pub const DEFAULT_SSIM_TAU: f64 = 0.80;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTriple {
    pub lpips: f64,
    pub ssim: f64,
    pub psnr: f64,
}

/// Per-strength metric triples for one image; the raw snap-back signal.
#[derive(Debug, Clone)]
pub struct MetricCurve {
    pub source_id: String,
    pub label: Option<u8>,
    /// One entry per schedule strength, in schedule order. `None` marks a
    /// failed reconstruction whose features go through imputation.
    pub points: Vec<(f64, Option<MetricTriple>)>,
}

impl MetricCurve {
    pub fn triple_at(&self, strength: f64) -> Option<&MetricTriple> {
        self.points
            .iter()
            .find(|(s, _)| *s == strength)
            .and_then(|(_, t)| t.as_ref())
    }

    pub fn valid_points(&self) -> impl Iterator<Item = (f64, &MetricTriple)> {
        self.points
            .iter()
            .filter_map(|(s, t)| t.as_ref().map(|t| (*s, t)))
    }
}

fn check_same_shape(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB, MAX = 1.0, MSE over all pixels and
/// channels jointly. Capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_same_shape(a, b)?;
    let mut sum = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = f64::from(x) - f64::from(y);
        sum += d * d;
    }
    let mse = sum / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Separable valid-region Gaussian filter over a single plane.
/// Output is (h - win + 1) x (w - win + 1).
fn gaussian_filter_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let ow = w - win + 1;
    let oh = h - win + 1;
    // horizontal
    let mut tmp = vec![0.0f64; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * plane[y * w + x + k];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // vertical
    let mut out = vec![0.0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn ssim_window_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Classic single-scale SSIM on BT.601 luminance: 11x11 Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.0, valid-region
/// convolution, mean over the SSIM map.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_same_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let la = a.luminance();
    let lb = b.luminance();
    let kernel = ssim_window_kernel();

    let mu_a = gaussian_filter_valid(&la, h, w, &kernel);
    let mu_b = gaussian_filter_valid(&lb, h, w, &kernel);
    let laa: Vec<f64> = la.iter().map(|v| v * v).collect();
    let lbb: Vec<f64> = lb.iter().map(|v| v * v).collect();
    let lab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x * y).collect();
    let mu_aa = gaussian_filter_valid(&laa, h, w, &kernel);
    let mu_bb = gaussian_filter_valid(&lbb, h, w, &kernel);
    let mu_ab = gaussian_filter_valid(&lab, h, w, &kernel);

    let c1 = SSIM_K1 * SSIM_K1; // (K1 * L)^2 with L = 1
    let c2 = SSIM_K2 * SSIM_K2;
    let mut sum = 0.0f64;
    for i in 0..mu_a.len() {
        let ma = mu_a[i];
        let mb = mu_b[i];
        let va = mu_aa[i] - ma * ma;
        let vb = mu_bb[i] - mb * mb;
        let cov = mu_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        sum += num / den;
    }
    Ok(sum / mu_a.len() as f64)
}

/// Pluggable perceptual distance. The reference implementation is the learned
/// metric with a convolutional backbone and pretrained weights; the surrogate
/// below keeps the pipeline dependency-free and deterministic.
pub trait PerceptualProvider: Sync {
    fn id(&self) -> &str;
    fn distance(&self, a: &RasterImage, b: &RasterImage) -> Result<f64>;
}

/// Test provider: 1 - SSIM on 4x-downsampled images, clamped at 0.
/// Deterministic, symmetric, zero at identity, monotone in visible
/// degradation.
pub struct SurrogateProvider;

impl PerceptualProvider for SurrogateProvider {
    fn id(&self) -> &str {
        "surrogate"
    }

    fn distance(&self, a: &RasterImage, b: &RasterImage) -> Result<f64> {
        check_same_shape(a, b)?;
        let da = a.resize_bilinear(a.height() / 4, a.width() / 4);
        let db = b.resize_bilinear(b.height() / 4, b.width() / 4);
        Ok((1.0 - ssim(&da, &db)?).max(0.0))
    }
}

pub fn perceptual_distance(
    a: &RasterImage,
    b: &RasterImage,
    provider: &dyn PerceptualProvider,
) -> Result<f64> {
    provider.distance(a, b)
}

/// Compute the per-strength metric triples between an original and its
/// reconstruction set. Missing reconstructions yield missing triples.
pub fn metric_curve(
    original: &RasterImage,
    recon: &ReconstructionSet,
    provider: &dyn PerceptualProvider,
    label: Option<u8>,
) -> Result<MetricCurve> {
    let mut points = Vec::with_capacity(recon.outputs.len());
    for (s, out) in &recon.outputs {
        match out {
            Some(r) => points.push((
                *s,
                Some(MetricTriple {
                    lpips: provider.distance(original, r)?,
                    ssim: ssim(original, r)?,
                    psnr: psnr(original, r)?,
                }),
            )),
            None => points.push((*s, None)),
        }
    }
    Ok(MetricCurve {
        source_id: recon.source_id.clone(),
        label,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::ReconstructionParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_pair(seed: u64, h: usize, w: usize) -> (RasterImage, RasterImage) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = RasterImage::from_fn(h, w, |_, _, _| rng.gen_range(0.0..1.0));
        let b = RasterImage::from_fn(h, w, |_, _, _| rng.gen_range(0.0..1.0));
        (a, b)
    }

    #[test]
    fn psnr_identity_hits_cap() {
        let (a, _) = random_pair(1, 32, 32);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn psnr_uniform_offset_is_20db() {
        // a in [0, 0.9], b = a + 0.1 -> MSE = 0.01 -> 10*log10(1/0.01) = 20.
        // Tolerance accounts for f32 pixel storage (~6e-8 per value, which
        // shifts the dB result by a few 1e-6).
        let a = RasterImage::from_fn(16, 16, |y, x, c| ((y * 16 + x + c) % 10) as f32 / 10.0 * 0.9);
        let b = RasterImage::from_fn(16, 16, |y, x, c| {
            ((y * 16 + x + c) % 10) as f32 / 10.0 * 0.9 + 0.1
        });
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 5e-5);
    }

    #[test]
    fn psnr_black_vs_white_is_zero() {
        let a = RasterImage::filled(8, 8, 0.0);
        let b = RasterImage::filled(8, 8, 1.0);
        assert!((psnr(&a, &b).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_dimension_mismatch_errors() {
        let a = RasterImage::filled(8, 8, 0.5);
        let b = RasterImage::filled(8, 9, 0.5);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let base = crate::synth::gen_image(3);
        let mut prev = f64::INFINITY;
        for &amp in &[0.02f32, 0.05, 0.1] {
            let mut rng = ChaCha20Rng::seed_from_u64(11);
            let noisy = RasterImage::from_fn(512, 512, |y, x, c| {
                base.get(y, x, c) + rng.gen_range(-amp..amp)
            });
            let p = psnr(&base, &noisy).unwrap();
            assert!(p < prev, "psnr {p} not below {prev} at amplitude {amp}");
            prev = p;
        }
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let img = crate::synth::gen_image(5);
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
    }

    #[test]
    fn ssim_and_psnr_are_symmetric() {
        for seed in 0..10 {
            let (a, b) = random_pair(seed, 48, 40);
            assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        }
    }

    #[test]
    fn ssim_range_on_random_pairs() {
        for seed in 0..20 {
            let (a, b) = random_pair(100 + seed, 32, 32);
            let v = ssim(&a, &b).unwrap();
            assert!((-1.0..=1.0).contains(&v), "ssim {v} out of range");
        }
    }

    #[test]
    fn ssim_checkerboard_vs_flat_is_low() {
        let flat = RasterImage::filled(64, 64, 0.5);
        let check = RasterImage::from_fn(64, 64, |y, x, _| {
            if (y + x) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        });
        let v = ssim(&flat, &check).unwrap();
        let reference = reference_ssim(&flat, &check);
        assert!(v < 0.2, "ssim {v} should be < 0.2");
        assert!((v - reference).abs() < 1e-9, "separable {v} vs direct {reference}");
    }

    #[test]
    fn ssim_matches_direct_windowed_oracle() {
        for seed in 0..5 {
            let (a, b) = random_pair(seed, 24, 31);
            let fast = ssim(&a, &b).unwrap();
            let slow = reference_ssim(&a, &b);
            assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        }
    }

    #[test]
    fn ssim_too_small_image_errors() {
        let a = RasterImage::filled(8, 8, 0.5);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn surrogate_identity_is_zero_and_symmetric() {
        let img = crate::synth::gen_image(6);
        let p = SurrogateProvider;
        assert_eq!(p.distance(&img, &img).unwrap(), 0.0);
        let (a, b) = random_pair(77, 128, 128);
        assert_eq!(p.distance(&a, &b).unwrap(), p.distance(&b, &a).unwrap());
    }

    #[test]
    fn surrogate_monotone_in_degradation() {
        let img = crate::synth::gen_image(8);
        let p = SurrogateProvider;
        let mild = crate::reconstruct::mock_reconstruct(&img, 0.15, 4, crate::DegradationProfile::Abrupt).unwrap();
        let heavy = crate::reconstruct::mock_reconstruct(&img, 0.90, 4, crate::DegradationProfile::Abrupt).unwrap();
        assert!(p.distance(&img, &heavy).unwrap() > p.distance(&img, &mild).unwrap());
    }

    #[test]
    fn metric_curve_identity_set() {
        let img = crate::synth::gen_image(9);
        let set = ReconstructionSet {
            source_id: "x".into(),
            outputs: vec![
                (0.15, Some(img.clone())),
                (0.30, Some(img.clone())),
                (0.60, None),
                (0.90, Some(img.clone())),
            ],
            params: ReconstructionParams::default(),
        };
        let curve = metric_curve(&img, &set, &SurrogateProvider, Some(1)).unwrap();
        assert_eq!(curve.points.len(), 4);
        assert_eq!(curve.valid_points().count(), 3);
        for (_, t) in curve.valid_points() {
            assert_eq!(t.ssim, 1.0);
            assert_eq!(t.lpips, 0.0);
            assert_eq!(t.psnr, 100.0);
        }
        assert!(curve.triple_at(0.60).is_none());
    }

    /// Independent SSIM oracle: direct 2-D windowed computation, no
    /// separability, no shared filtering code.
    fn reference_ssim(a: &RasterImage, b: &RasterImage) -> f64 {
        let (h, w) = (a.height(), a.width());
        let la = a.luminance();
        let lb = b.luminance();
        let win = 11usize;
        let sigma = 1.5f64;
        let mut kernel2d = vec![0.0f64; win * win];
        let half = (win / 2) as f64;
        let mut ksum = 0.0;
        for ky in 0..win {
            for kx in 0..win {
                let dy = ky as f64 - half;
                let dx = kx as f64 - half;
                let v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
                kernel2d[ky * win + kx] = v;
                ksum += v;
            }
        }
        for v in &mut kernel2d {
            *v /= ksum;
        }
        let c1 = 0.01f64 * 0.01;
        let c2 = 0.03f64 * 0.03;
        let mut total = 0.0;
        let mut count = 0usize;
        for y in 0..=(h - win) {
            for x in 0..=(w - win) {
                let (mut ma, mut mb, mut maa, mut mbb, mut mab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for ky in 0..win {
                    for kx in 0..win {
                        let k = kernel2d[ky * win + kx];
                        let va = la[(y + ky) * w + x + kx];
                        let vb = lb[(y + ky) * w + x + kx];
                        ma += k * va;
                        mb += k * vb;
                        maa += k * va * va;
                        mbb += k * vb * vb;
                        mab += k * va * vb;
                    }
                }
                let va = maa - ma * ma;
                let vb = mbb - mb * mb;
                let cov = mab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }
}
