use image::{GrayImage, Luma, Rgb, RgbImage};
use rayon::prelude::*;

use super::clahe::{clahe_rgb, ClaheConfig};
use super::LabeledFrame;
use crate::error::{data_err, Result};
use crate::tensor::{Shape, Tensor4};

/// Per-channel standardization applied after scaling u8 to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalization {
    pub const IMAGENET: Normalization = Normalization {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };
}

impl Default for Normalization {
    fn default() -> Self {
        Self::IMAGENET
    }
}

/// Everything between a raw frame and the network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    /// Square side the network sees.
    pub size: u32,
    pub clahe: Option<ClaheConfig>,
    pub norm: Normalization,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess {
            size: 256,
            clahe: Some(ClaheConfig::default()),
            norm: Normalization::IMAGENET,
        }
    }
}

impl Preprocess {
    pub fn with_size(size: u32) -> Self {
        Preprocess {
            size,
            ..Default::default()
        }
    }

    /// Resize, then optional CLAHE.
    pub fn prepare_image(&self, img: &RgbImage) -> RgbImage {
        let resized = resize_bilinear(img, self.size, self.size);
        match &self.clahe {
            Some(cfg) => clahe_rgb(&resized, cfg),
            None => resized,
        }
    }

    /// Full image path into a `(1, 3, size, size)` tensor.
    pub fn image_tensor(&self, img: &RgbImage) -> Tensor4<f32> {
        let data = normalize_image(&self.prepare_image(img), &self.norm);
        let s = self.size as usize;
        Tensor4::from_vec(Shape { n: 1, c: 3, h: s, w: s }, data).expect("normalized plane size")
    }
}

/// Half-pixel-centre bilinear resize with edge clamping.
pub fn resize_bilinear(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    let (sw, sh) = img.dimensions();
    if (sw, sh) == (width, height) {
        return img.clone();
    }
    let sx = f64::from(sw) / f64::from(width);
    let sy = f64::from(sh) / f64::from(height);
    let axis = |o: u32, scale: f64, n: u32| {
        let f = ((f64::from(o) + 0.5) * scale - 0.5).clamp(0.0, f64::from(n - 1));
        let i0 = f.floor() as u32;
        (i0, (i0 + 1).min(n - 1), f - f64::from(i0))
    };
    RgbImage::from_fn(width, height, |x, y| {
        let (x0, x1, a) = axis(x, sx, sw);
        let (y0, y1, b) = axis(y, sy, sh);
        let p = |i, j| img.get_pixel(i, j).0;
        let (p00, p10, p01, p11) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
        let mut out = [0u8; 3];
        for c in 0..3 {
            let v = (1.0 - b) * ((1.0 - a) * f64::from(p00[c]) + a * f64::from(p10[c]))
                + b * ((1.0 - a) * f64::from(p01[c]) + a * f64::from(p11[c]));
            out[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        Rgb(out)
    })
}

/// Nearest-neighbour resize: output pixel centre maps to the source pixel it
/// falls in.
pub fn resize_mask_nearest(mask: &GrayImage, width: u32, height: u32) -> GrayImage {
    let (sw, sh) = mask.dimensions();
    if (sw, sh) == (width, height) {
        return mask.clone();
    }
    let pick = |o: u32, src: u32, dst: u32| {
        let f = (f64::from(o) + 0.5) * f64::from(src) / f64::from(dst);
        (f.floor() as u32).min(src - 1)
    };
    GrayImage::from_fn(width, height, |x, y| {
        Luma([mask.get_pixel(pick(x, sw, width), pick(y, sh, height))[0]])
    })
}

/// Planar RGB floats `(v/255 − mean_c) / std_c`, channel-major.
pub fn normalize_image(img: &RgbImage, norm: &Normalization) -> Vec<f32> {
    let plane = (img.width() * img.height()) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = (f32::from(px[c]) / 255.0 - norm.mean[c]) / norm.std[c];
        }
    }
    out
}

/// Stacks frames into `(n, 3, size, size)` plus masks flattened in
/// `(n, h, w)` order.
pub fn to_batch(frames: &[LabeledFrame], pre: &Preprocess) -> Result<(Tensor4<f32>, Vec<u8>)> {
    if frames.is_empty() {
        return Err(data_err!("cannot batch zero frames"));
    }
    let s = pre.size as usize;
    let parts: Vec<(Vec<f32>, Vec<u8>)> = frames
        .par_iter()
        .map(|f| {
            let img = normalize_image(&pre.prepare_image(&f.image), &pre.norm);
            let mask = resize_mask_nearest(&f.mask, pre.size, pre.size).into_raw();
            (img, mask)
        })
        .collect();
    let mut data = Vec::with_capacity(frames.len() * 3 * s * s);
    let mut masks = Vec::with_capacity(frames.len() * s * s);
    for (img, mask) in parts {
        data.extend_from_slice(&img);
        masks.extend_from_slice(&mask);
    }
    let shape = Shape::new(frames.len(), 3, s, s)?;
    Ok((Tensor4::from_vec(shape, data)?, masks))
}
