//! Seeded synthetic image corpus for end-to-end tests and demo runs.
//!
//! Image content is drawn purely from the per-image seed; the class label
//! only selects which mock degradation profile is applied at reconstruction
//! time. Raw pixel statistics are therefore independent of the label by
//! construction, which the pixel-baseline sanity check relies on.

use std::collections::HashMap;
use std::f32::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::pipeline::PipelineImage;
use crate::raster::{RasterImage, PREPROCESSED_SIDE};
use crate::reconstruct::DegradationProfile;

/// One 512x512 textured raster: oriented sinusoidal gratings at mid
/// frequencies over a broad gradient. Mid frequencies keep local variance in
/// every SSIM window while surviving moderate blur.
pub fn gen_image(seed: u64) -> RasterImage {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xD1F5_5EED);
    let side = PREPROCESSED_SIDE;

    struct Grating {
        fy: f32,
        fx: f32,
        phase: f32,
        amp: f32,
    }
    let gratings: Vec<Grating> = (0..3)
        .map(|_| {
            let wavelength: f32 = rng.gen_range(8.0..24.0);
            let theta: f32 = rng.gen_range(0.0..TAU);
            Grating {
                fy: theta.sin() / wavelength,
                fx: theta.cos() / wavelength,
                phase: rng.gen_range(0.0..TAU),
                amp: rng.gen_range(0.08..0.16),
            }
        })
        .collect();
    let grad_amp: f32 = rng.gen_range(0.05..0.15);
    let grad_dir: f32 = rng.gen_range(0.0..TAU);
    let channel_gain: [f32; 3] = [
        rng.gen_range(0.85..1.0),
        rng.gen_range(0.85..1.0),
        rng.gen_range(0.85..1.0),
    ];

    let mut img = RasterImage::from_fn(side, side, |y, x, c| {
        let yf = y as f32;
        let xf = x as f32;
        let mut v = 0.5
            + grad_amp
                * ((yf * grad_dir.sin() + xf * grad_dir.cos()) / side as f32 - 0.5);
        for g in &gratings {
            v += g.amp * (TAU * (g.fy * yf + g.fx * xf) + g.phase).sin();
        }
        0.5 + (v - 0.5) * channel_gain[c]
    });
    img.quantize_u16();
    img
}

/// Balanced corpus of `n` images with alternating labels. Label 0
/// (human-captured stand-in) maps to the abrupt profile, label 1
/// (AI-generated stand-in) to the smooth profile.
pub fn gen_corpus(n: usize, seed: u64) -> (Vec<PipelineImage>, HashMap<String, DegradationProfile>) {
    let mut images = Vec::with_capacity(n);
    let mut profiles = HashMap::with_capacity(n);
    for i in 0..n {
        let id = format!("synth-{i:04}");
        let label = (i % 2) as u8;
        let profile = if label == 0 {
            DegradationProfile::Abrupt
        } else {
            DegradationProfile::Smooth
        };
        profiles.insert(id.clone(), profile);
        images.push(PipelineImage {
            id,
            label,
            raster: gen_image(seed.wrapping_add(i as u64).wrapping_mul(0x100_0193)),
        });
    }
    (images, profiles)
}
