//! Reconstruction cache: lossless 16-bit PNGs keyed by everything that can
//! change a reconstruction.
//!
//! Layout: `<root>/<source_id>/s<strength>_<keyhash>.png`. Writers go
//! through a temp file and an atomic rename so concurrent producers cannot
//! leave torn entries; a corrupt entry reads as a miss and is overwritten by
//! the next put.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::raster::RasterImage;
use crate::reconstruct::ReconstructionParams;

pub struct ReconCache {
    root: PathBuf,
}

impl ReconCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn key_hash(source_id: &str, strength: f64, params: &ReconstructionParams) -> String {
        let mut h = Sha256::new();
        h.update(source_id.as_bytes());
        h.update([0]);
        h.update(strength.to_bits().to_le_bytes());
        h.update(params.total_steps.to_le_bytes());
        h.update(params.guidance_scale.to_bits().to_le_bytes());
        h.update(params.seed.to_le_bytes());
        h.update(params.backend_id.as_bytes());
        h.update([0]);
        h.update(params.prompt.as_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn entry_path(&self, source_id: &str, strength: f64, params: &ReconstructionParams) -> PathBuf {
        let hash = Self::key_hash(source_id, strength, params);
        self.root
            .join(source_id)
            .join(format!("s{strength}_{hash}.png"))
    }

    /// A hit returns the raster bit-identical to what was put (rasters are
    /// quantized to the 16-bit grid before caching).
    pub fn get(
        &self,
        source_id: &str,
        strength: f64,
        params: &ReconstructionParams,
    ) -> Option<RasterImage> {
        let path = self.entry_path(source_id, strength, params);
        let img = image::open(&path).ok()?;
        match img {
            image::DynamicImage::ImageRgb16(buf) => Some(RasterImage::from_rgb16(&buf)),
            other => Some(RasterImage::from_rgb16(&other.to_rgb16())),
        }
    }

    pub fn put(
        &self,
        source_id: &str,
        strength: f64,
        params: &ReconstructionParams,
        image: &RasterImage,
    ) -> Result<()> {
        let path = self.entry_path(source_id, strength, params);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        image
            .to_rgb16()
            .save_with_format(&tmp, image::ImageFormat::Png)
            .map_err(|e| crate::error::Error::Io(std::io::Error::other(e.to_string())))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}
