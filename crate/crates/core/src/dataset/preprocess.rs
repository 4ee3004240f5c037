use serde::{Deserialize, Serialize};

use super::demo::FRAME_IMAGE_SIZE;
use crate::error::{domain, Result};
use crate::image::RgbImage;

/// Square crop window in source pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    pub fn square(x: u32, y: u32, size: u32) -> Self {
        Self {
            x,
            y,
            width: size,
            height: size,
        }
    }

    /// Largest centered square of a `width` x `height` image.
    pub fn centered(width: u32, height: u32) -> Self {
        let size = width.min(height);
        Self::square((width - size) / 2, (height - size) / 2, size)
    }
}

/// Crop, bilinear resize to 256x256, then optionally mirror left-right.
pub fn preprocess_image(raw: &RgbImage, crop: CropRect, flip_horizontal: bool) -> Result<RgbImage> {
    if crop.width != crop.height || crop.width == 0 {
        return Err(domain(format!("crop must be a non-empty square, got {}x{}", crop.width, crop.height)));
    }
    if crop.x as u64 + crop.width as u64 > raw.width() as u64 || crop.y as u64 + crop.height as u64 > raw.height() as u64 {
        return Err(domain(format!(
            "crop {}x{} at ({}, {}) exceeds {}x{} image",
            crop.width,
            crop.height,
            crop.x,
            crop.y,
            raw.width(),
            raw.height()
        )));
    }
    let out = resize_bilinear(raw, crop, FRAME_IMAGE_SIZE);
    Ok(if flip_horizontal { flip_horizontal_image(&out) } else { out })
}

/// Half-pixel-centered bilinear sampling with edge clamping. Weights are
/// quantized to 1/256 and blended in integers.
fn resize_bilinear(src: &RgbImage, crop: CropRect, size: u32) -> RgbImage {
    let scale = crop.width as f64 / size as f64;
    let max = crop.width as f64 - 1.0;
    // per-axis source index pairs and weights are the same for x and y
    let taps: Vec<(u32, u32, u32)> = (0..size)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor();
            let i1 = (i0 + 1.0).min(max);
            (i0 as u32, i1 as u32, ((s - i0) * 256.0).round() as u32)
        })
        .collect();
    let raw = src.as_raw();
    let stride = src.width() as usize * 3;
    let at = |x: u32, y: u32| (crop.y + y) as usize * stride + (crop.x + x) as usize * 3;
    let mut out = RgbImage::new(size, size);
    for (dy, &(y0, y1, fy)) in taps.iter().enumerate() {
        let row = out.row_mut(dy as u32);
        for (pixel, &(x0, x1, fx)) in row.chunks_exact_mut(3).zip(taps.iter()) {
            let (i00, i10, i01, i11) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
            for k in 0..3 {
                let top = raw[i00 + k] as u32 * (256 - fx) + raw[i10 + k] as u32 * fx;
                let bottom = raw[i01 + k] as u32 * (256 - fx) + raw[i11 + k] as u32 * fx;
                pixel[k] = ((top * (256 - fy) + bottom * fy + (1 << 15)) >> 16) as u8;
            }
        }
    }
    out
}

pub fn flip_horizontal_image(img: &RgbImage) -> RgbImage {
    let mut out = img.clone();
    let stride = img.width() as usize * 3;
    for y in 0..img.height() {
        let src = &img.as_raw()[y as usize * stride..(y as usize + 1) * stride];
        for (dst, px) in out.row_mut(y).chunks_exact_mut(3).zip(src.chunks_exact(3).rev()) {
            dst.copy_from_slice(px);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stays_uniform() {
        let raw = RgbImage::filled(640, 480, [12, 200, 77]);
        let out = preprocess_image(&raw, CropRect::centered(640, 480), false).unwrap();
        assert_eq!(out, RgbImage::filled(256, 256, [12, 200, 77]));
    }

    #[test]
    fn default_crop_is_centered_480() {
        assert_eq!(CropRect::centered(640, 480), CropRect::square(80, 0, 480));
    }

    #[test]
    fn double_flip_is_identity() {
        let mut raw = RgbImage::new(640, 480);
        for i in 0..200 {
            raw.put((i * 37) % 640, (i * 11) % 480, [i as u8, 255 - i as u8, 9]);
        }
        let once = preprocess_image(&raw, CropRect::centered(640, 480), true).unwrap();
        assert_eq!(flip_horizontal_image(&once).as_raw(), preprocess_image(&raw, CropRect::centered(640, 480), false).unwrap().as_raw());
        assert_eq!(flip_horizontal_image(&flip_horizontal_image(&once)), once);
    }

    #[test]
    fn left_edge_pixel_moves_right() {
        let mut raw = RgbImage::new(640, 480);
        let crop = CropRect::centered(640, 480);
        raw.put(crop.x, 240, [255, 255, 255]);
        let plain = preprocess_image(&raw, crop, false).unwrap();
        let flipped = preprocess_image(&raw, crop, true).unwrap();
        // 480 -> 256 puts source column 0 at weight 144/256 into output column 0
        let row = 128;
        assert_eq!(plain.get(0, row), flipped.get(255, row));
        assert!(flipped.get(255, row)[0] > 0);
        assert_eq!(flipped.get(0, row), [0, 0, 0]);
    }

    #[test]
    fn bad_crops_rejected() {
        let raw = RgbImage::new(640, 480);
        assert!(preprocess_image(&raw, CropRect { x: 0, y: 0, width: 400, height: 300 }, false).is_err());
        assert!(preprocess_image(&raw, CropRect::square(200, 0, 480), false).is_err());
    }
}
