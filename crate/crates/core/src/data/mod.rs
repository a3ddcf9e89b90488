//! Dataset ingestion, splitting, preprocessing and augmentation.

mod augment;
mod batch;
mod clahe;
mod io;
mod split;
mod via;

pub use augment::{augment, AugmentConfig, AugmentParams};
pub use batch::{
    normalize_image, resize_bilinear, resize_mask_nearest, to_batch, Normalization, Preprocess,
};
pub use clahe::{clahe_gray, clahe_rgb, global_equalize, ClaheConfig};
pub use io::{
    load_dataset, load_manifest, load_via_dataset, read_mask, read_rgb, write_mask, Manifest, ManifestEntry,
};
pub use split::{split, DatasetSplit, SplitName};
pub use via::{rasterize_via, ViaRegion, ViaShape};

use image::{GrayImage, RgbImage};

use crate::error::{data_err, Result};

/// Largest valid class index in a mask.
pub const MAX_CLASS: u8 = 2;

/// An RGB image with its per-pixel class mask (0 background, 1 bioink,
/// 2 nozzle).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub id: String,
    pub image: RgbImage,
    pub mask: GrayImage,
}

impl LabeledFrame {
    pub fn new(id: impl Into<String>, image: RgbImage, mask: GrayImage) -> Result<Self> {
        let frame = LabeledFrame {
            id: id.into(),
            image,
            mask,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image.dimensions() != self.mask.dimensions() {
            return Err(data_err!(
                "{}: image is {:?} but mask is {:?}",
                self.id,
                self.image.dimensions(),
                self.mask.dimensions()
            ));
        }
        if let Some(bad) = self.mask.as_raw().iter().find(|&&v| v > MAX_CLASS) {
            return Err(data_err!("{}: mask value {bad} is not a class index", self.id));
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}
