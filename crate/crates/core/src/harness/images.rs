use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// Overlay colors indexed by class: background is left transparent.
pub const CLASS_COLORS: [Option<[u8; 3]>; 4] = [None, Some([128, 0, 128]), Some([255, 165, 0]), Some([255, 255, 255])];

/// Magnitude of a `2 x H x W` channel buffer scaled to 8 bits by its maximum.
pub fn magnitude_u8(channels: &[f32], height: usize, width: usize) -> Vec<u8> {
    let n = height * width;
    let mag: Vec<f32> = (0..n).map(|p| channels[p].hypot(channels[n + p])).collect();
    let peak = mag.iter().copied().fold(0.0f32, f32::max);
    mag.iter().map(|&m| if peak > 0.0 { (255.0 * m / peak).round() as u8 } else { 0 }).collect()
}

pub fn save_gray(path: &Path, pixels: &[u8], height: usize, width: usize) -> Result<()> {
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| Luma([pixels[y as usize * width + x as usize]]));
    img.save(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: std::io::Error::other(e) })
}

/// Gray background with CSF, GM and WM painted in their class colors.
pub fn overlay(gray: &[u8], labels: &[u8], height: usize, width: usize) -> RgbImage {
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let p = y as usize * width + x as usize;
        match CLASS_COLORS.get(labels[p] as usize).copied().flatten() {
            Some(c) => Rgb(c),
            None => Rgb([gray[p]; 3]),
        }
    })
}

pub fn save_overlay(path: &Path, gray: &[u8], labels: &[u8], height: usize, width: usize) -> Result<()> {
    overlay(gray, labels, height, width)
        .save(path)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: std::io::Error::other(e) })
}
