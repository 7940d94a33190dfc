//! Frame images stored as one PNG per frame under a directory per clip.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;

use crate::annotations::DatasetId;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// `<root>/<dataset>/<clip_id>/<frame_idx:06>.png`
pub fn frame_path(root: &Path, dataset: DatasetId, clip_id: &str, frame_idx: u32) -> PathBuf {
    root.join(dataset.as_str()).join(clip_id).join(format!("{frame_idx:06}.png"))
}

pub trait FrameSource {
    fn frame(&self, dataset: DatasetId, clip_id: &str, frame_idx: u32) -> Result<RgbImage>;
}

/// Frames read from disk.
pub struct FrameDir {
    pub root: PathBuf,
}

impl FrameSource for FrameDir {
    fn frame(&self, dataset: DatasetId, clip_id: &str, frame_idx: u32) -> Result<RgbImage> {
        let p = frame_path(&self.root, dataset, clip_id, frame_idx);
        let img = image::open(&p).map_err(|e| Error::validation(format!("cannot read frame {}: {e}", p.display())))?;
        Ok(img.to_rgb8())
    }
}

/// Frames held in memory, keyed like the on-disk layout.
#[derive(Default)]
pub struct FrameStore {
    frames: HashMap<(DatasetId, String, u32), RgbImage>,
}

impl FrameStore {
    pub fn insert(&mut self, dataset: DatasetId, clip_id: &str, frame_idx: u32, img: RgbImage) {
        self.frames.insert((dataset, clip_id.to_string(), frame_idx), img);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl FrameSource for FrameStore {
    fn frame(&self, dataset: DatasetId, clip_id: &str, frame_idx: u32) -> Result<RgbImage> {
        self.frames
            .get(&(dataset, clip_id.to_string(), frame_idx))
            .cloned()
            .ok_or_else(|| Error::validation(format!("missing frame {dataset}/{clip_id}/{frame_idx}")))
    }
}

pub fn save_frame(root: &Path, dataset: DatasetId, clip_id: &str, frame_idx: u32, img: &RgbImage) -> Result<()> {
    let p = frame_path(root, dataset, clip_id, frame_idx);
    if let Some(dir) = p.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(&p)?;
    Ok(())
}

/// CHW floats in [0,1].
pub fn to_chw(img: &RgbImage) -> Vec<f32> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut out = vec![0.0f32; 3 * w * h];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[c * w * h + y as usize * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    out
}

/// Frame resized to `size x size`, CHW in [0,1].
pub fn frame_tensor(img: &RgbImage, size: usize) -> Vec<f32> {
    if img.width() as usize == size && img.height() as usize == size {
        return to_chw(img);
    }
    to_chw(&imageops::resize(img, size as u32, size as u32, FilterType::Triangle))
}

/// Head crop resized to `size x size`, CHW in [0,1]. The box is clamped to
/// the image and widened to at least one pixel.
pub fn head_crop(img: &RgbImage, head: &BBox, size: usize) -> Vec<f32> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = (head.xmin * w).floor().clamp(0.0, w - 1.0) as u32;
    let y0 = (head.ymin * h).floor().clamp(0.0, h - 1.0) as u32;
    let x1 = ((head.xmax * w).ceil() as u32).clamp(x0 + 1, img.width());
    let y1 = ((head.ymax * h).ceil() as u32).clamp(y0 + 1, img.height());
    let crop = imageops::crop_imm(img, x0, y0, x1 - x0, y1 - y0).to_image();
    to_chw(&imageops::resize(&crop, size as u32, size as u32, FilterType::Triangle))
}
