//! The two-camera rig: render, crop, downsample and mirror the wrist view.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::arm::ArmSpec;
use crate::dataset::{preprocess_image, CropRect};
use crate::error::Result;
use crate::image::RgbImage;
use crate::sim::{
    render_background, render_view_over, CameraAttachment, CameraSpec, RenderStyle, WorldState, IMAGE_HEIGHT,
    IMAGE_WIDTH,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub third: CameraSpec,
    pub wrist: CameraSpec,
    pub third_crop: CropRect,
    pub wrist_crop: CropRect,
    #[serde(skip)]
    backgrounds: BackgroundCache,
}

/// Table layers of world-fixed cameras, keyed by the camera they were drawn for.
#[derive(Debug, Clone, Default)]
struct BackgroundCache(Arc<Mutex<Vec<(CameraSpec, RgbImage)>>>);

impl PartialEq for BackgroundCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl BackgroundCache {
    fn get(&self, camera: &CameraSpec, style: &RenderStyle) -> RgbImage {
        let draw = || render_background(&camera.extrinsic.to_transform(), &camera.intrinsics, style);
        if camera.attachment != CameraAttachment::WorldFixed || *style != RenderStyle::default() {
            return draw();
        }
        let mut cache = self.0.lock().unwrap_or_else(|p| p.into_inner());
        if let Some((_, img)) = cache.iter().find(|(c, _)| c == camera) {
            return img.clone();
        }
        let img = draw();
        cache.push((*camera, img.clone()));
        img
    }
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            third: CameraSpec::default_third_person(),
            wrist: CameraSpec::default_wrist(),
            third_crop: CropRect::centered(IMAGE_WIDTH, IMAGE_HEIGHT),
            wrist_crop: CropRect::centered(IMAGE_WIDTH, IMAGE_HEIGHT),
            backgrounds: BackgroundCache::default(),
        }
    }
}

/// Native-resolution views, before preprocessing.
pub struct RawViews {
    pub third: RgbImage,
    pub wrist: RgbImage,
}

impl CameraRig {
    pub fn render_raw(&self, world: &WorldState, arm: &ArmSpec) -> Result<RawViews> {
        let style = RenderStyle::default();
        let view = |camera: &CameraSpec| -> Result<RgbImage> {
            let background = match camera.attachment {
                CameraAttachment::WorldFixed => self.backgrounds.get(camera, &style),
                CameraAttachment::WristMounted => {
                    render_background(&camera.world_transform(world, arm)?, &camera.intrinsics, &style)
                }
            };
            render_view_over(background, world, arm, camera, &style)
        };
        Ok(RawViews {
            third: view(&self.third)?,
            wrist: view(&self.wrist)?,
        })
    }

    /// 256x256 third-person and (mirrored) wrist images.
    pub fn capture(&self, world: &WorldState, arm: &ArmSpec) -> Result<(RgbImage, RgbImage)> {
        let raw = self.render_raw(world, arm)?;
        Ok((
            preprocess_image(&raw.third, self.third_crop, false)?,
            preprocess_image(&raw.wrist, self.wrist_crop, true)?,
        ))
    }
}
