//! The universal image currency: H×W×3 real intensities in [0,1].
//!
//! Every stage of the pipeline (preprocessing, reconstruction, metrics,
//! augmentation) consumes and produces `RasterImage`. Geometry helpers used
//! by several modules (bilinear resize, separable Gaussian blur) live here so
//! all callers share one resampling convention.

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Side length every preprocessed raster must have.
pub const PREPROCESSED_SIDE: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    /// Row-major, channel-last; length = height * width * 3.
    data: Vec<f32>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("zero-area raster".into()));
        }
        if data.len() != height * width * CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for {}x{}x3, got {}",
                height * width * CHANNELS,
                height,
                width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    /// Build from a per-(row, col, channel) generator, values clamped to [0,1].
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn is_preprocessed(&self) -> bool {
        self.height == PREPROCESSED_SIDE && self.width == PREPROCESSED_SIDE
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Snap every value to the 16-bit grid, so a lossless 16-bit PNG
    /// round-trip reproduces the raster bit-exactly.
    pub fn quantize_u16(&mut self) {
        for v in &mut self.data {
            let q = (f64::from(v.clamp(0.0, 1.0)) * 65535.0).round();
            *v = (q / 65535.0) as f32;
        }
    }

    /// BT.601 luminance plane.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(CHANNELS)
            .map(|px| 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
            .collect()
    }

    /// Bilinear resample to the given size (half-pixel-center convention,
    /// edges clamped).
    pub fn resize_bilinear(&self, new_height: usize, new_width: usize) -> Self {
        if new_height == self.height && new_width == self.width {
            return self.clone();
        }
        let sy = self.height as f64 / new_height as f64;
        let sx = self.width as f64 / new_width as f64;
        let mut data = Vec::with_capacity(new_height * new_width * CHANNELS);
        for y in 0..new_height {
            let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = src_y.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let fy = src_y - y0 as f64;
            for x in 0..new_width {
                let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = src_x.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let fx = src_x - x0 as f64;
                for c in 0..CHANNELS {
                    let tl = f64::from(self.get(y0, x0, c));
                    let tr = f64::from(self.get(y0, x1, c));
                    let bl = f64::from(self.get(y1, x0, c));
                    let br = f64::from(self.get(y1, x1, c));
                    let top = tl + (tr - tl) * fx;
                    let bot = bl + (br - bl) * fx;
                    data.push((top + (bot - top) * fy) as f32);
                }
            }
        }
        Self {
            height: new_height,
            width: new_width,
            data,
        }
    }

    pub fn center_crop(&self, crop_height: usize, crop_width: usize) -> Result<Self> {
        if crop_height > self.height || crop_width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "cannot crop {}x{} out of {}x{}",
                crop_height, crop_width, self.height, self.width
            )));
        }
        let y0 = (self.height - crop_height) / 2;
        let x0 = (self.width - crop_width) / 2;
        let mut data = Vec::with_capacity(crop_height * crop_width * CHANNELS);
        for y in 0..crop_height {
            let row = (y0 + y) * self.width + x0;
            data.extend_from_slice(&self.data[row * CHANNELS..(row + crop_width) * CHANNELS]);
        }
        Ok(Self {
            height: crop_height,
            width: crop_width,
            data,
        })
    }

    /// Separable Gaussian blur, kernel truncated at 3σ, edges replicated.
    /// σ ≤ 0 is the identity.
    pub fn gaussian_blur(&self, sigma: f64) -> Self {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let radius = kernel.len() / 2;
        let (h, w) = (self.height, self.width);

        // Horizontal pass into an f64 scratch buffer.
        let mut tmp = vec![0.0f64; h * w * CHANNELS];
        for y in 0..h {
            for x in 0..w {
                for c in 0..CHANNELS {
                    let mut acc = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        let sx = (x as isize + k as isize - radius as isize).clamp(0, w as isize - 1) as usize;
                        acc += kv * f64::from(self.get(y, sx, c));
                    }
                    tmp[(y * w + x) * CHANNELS + c] = acc;
                }
            }
        }
        // Vertical pass.
        let mut data = vec![0.0f32; h * w * CHANNELS];
        for y in 0..h {
            for x in 0..w {
                for c in 0..CHANNELS {
                    let mut acc = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        let sy = (y as isize + k as isize - radius as isize).clamp(0, h as isize - 1) as usize;
                        acc += kv * tmp[(sy * w + x) * CHANNELS + c];
                    }
                    data[(y * w + x) * CHANNELS + c] = acc as f32;
                }
            }
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let px = [
                    (f64::from(self.get(y, x, 0).clamp(0.0, 1.0)) * 255.0).round() as u8,
                    (f64::from(self.get(y, x, 1).clamp(0.0, 1.0)) * 255.0).round() as u8,
                    (f64::from(self.get(y, x, 2).clamp(0.0, 1.0)) * 255.0).round() as u8,
                ];
                img.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        img
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = Vec::with_capacity(h * w * CHANNELS);
        for px in img.pixels() {
            data.push(f32::from(px[0]) / 255.0);
            data.push(f32::from(px[1]) / 255.0);
            data.push(f32::from(px[2]) / 255.0);
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }

    pub fn to_rgb16(&self) -> image::ImageBuffer<image::Rgb<u16>, Vec<u16>> {
        let mut img = image::ImageBuffer::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let px = [
                    (f64::from(self.get(y, x, 0).clamp(0.0, 1.0)) * 65535.0).round() as u16,
                    (f64::from(self.get(y, x, 1).clamp(0.0, 1.0)) * 65535.0).round() as u16,
                    (f64::from(self.get(y, x, 2).clamp(0.0, 1.0)) * 65535.0).round() as u16,
                ];
                img.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        img
    }

    pub fn from_rgb16(img: &image::ImageBuffer<image::Rgb<u16>, Vec<u16>>) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = Vec::with_capacity(h * w * CHANNELS);
        for px in img.pixels() {
            data.push((f64::from(px[0]) / 65535.0) as f32);
            data.push((f64::from(px[1]) / 65535.0) as f32);
            data.push((f64::from(px[2]) / 65535.0) as f32);
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }
}

/// Normalized 1-D Gaussian kernel truncated at 3σ (radius = ceil(3σ)).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for i in 0..=(2 * radius) {
        let d = i as f64 - radius as f64;
        kernel.push((-d * d / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_makes_png16_roundtrip_exact() {
        let mut r = RasterImage::from_fn(8, 8, |y, x, c| (y * 64 + x * 7 + c) as f32 / 1000.0);
        r.quantize_u16();
        let back = RasterImage::from_rgb16(&r.to_rgb16());
        assert_eq!(r, back);
    }

    #[test]
    fn resize_identity_shape() {
        let r = RasterImage::filled(16, 16, 0.25);
        let out = r.resize_bilinear(16, 16);
        assert_eq!(out, r);
    }

    #[test]
    fn resize_preserves_constant() {
        let r = RasterImage::filled(64, 48, 0.5);
        let out = r.resize_bilinear(32, 24);
        for &v in out.data() {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn center_crop_picks_middle() {
        let r = RasterImage::from_fn(4, 4, |y, x, _| if (1..3).contains(&y) && (1..3).contains(&x) { 1.0 } else { 0.0 });
        let c = r.center_crop(2, 2).unwrap();
        assert!(c.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn blur_zero_sigma_is_identity() {
        let r = RasterImage::from_fn(8, 8, |y, x, c| ((y + x + c) % 3) as f32 / 2.0);
        assert_eq!(r.gaussian_blur(0.0), r);
    }

    #[test]
    fn blur_preserves_mean_roughly() {
        let r = RasterImage::from_fn(32, 32, |y, x, _| ((y * 31 + x * 17) % 97) as f32 / 96.0);
        let b = r.gaussian_blur(1.5);
        let mean = |im: &RasterImage| im.data().iter().map(|&v| f64::from(v)).sum::<f64>() / im.data().len() as f64;
        assert!((mean(&r) - mean(&b)).abs() < 0.01);
    }
}
