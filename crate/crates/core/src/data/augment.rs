use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;

use super::LabeledFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub hflip_prob: f64,
    /// Rotation range in degrees, inclusive.
    pub rot_deg_range: (f64, f64),
    /// Additive brightness shift drawn from `±brightness_delta` (fraction of
    /// full scale).
    pub brightness_delta: f64,
    pub contrast_range: (f64, f64),
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip_prob: 0.5,
            rot_deg_range: (-15.0, 15.0),
            brightness_delta: 0.2,
            contrast_range: (0.8, 1.2),
            enabled: true,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            enabled: false,
            ..Default::default()
        }
    }
}

/// One concrete draw of augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub angle_deg: f64,
    pub brightness: f64,
    pub contrast: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        hflip: false,
        angle_deg: 0.0,
        brightness: 0.0,
        contrast: 1.0,
    };

    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        if !cfg.enabled {
            return Self::IDENTITY;
        }
        let hflip = rng.random::<f64>() < cfg.hflip_prob;
        let (lo, hi) = cfg.rot_deg_range;
        let angle_deg = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let brightness = if cfg.brightness_delta > 0.0 {
            rng.random_range(-cfg.brightness_delta..=cfg.brightness_delta)
        } else {
            0.0
        };
        let (clo, chi) = cfg.contrast_range;
        let contrast = if chi > clo { rng.random_range(clo..=chi) } else { clo };
        AugmentParams {
            hflip,
            angle_deg,
            brightness,
            contrast,
        }
    }

    /// Geometric ops hit image and mask alike; photometric ops only the
    /// image. Masks rotate with nearest-neighbour sampling and fill with
    /// class 0, so they stay valid.
    pub fn apply(&self, frame: &LabeledFrame) -> LabeledFrame {
        let mut image = frame.image.clone();
        let mut mask = frame.mask.clone();
        if self.hflip {
            image::imageops::flip_horizontal_in_place(&mut image);
            image::imageops::flip_horizontal_in_place(&mut mask);
        }
        if self.angle_deg != 0.0 {
            image = rotate_rgb(&image, self.angle_deg);
            mask = rotate_mask(&mask, self.angle_deg);
        }
        if self.brightness != 0.0 || self.contrast != 1.0 {
            photometric(&mut image, self.brightness, self.contrast);
        }
        LabeledFrame {
            id: frame.id.clone(),
            image,
            mask,
        }
    }
}

pub fn augment<R: Rng + ?Sized>(frame: &LabeledFrame, cfg: &AugmentConfig, rng: &mut R) -> LabeledFrame {
    AugmentParams::sample(cfg, rng).apply(frame)
}

/// Source position (continuous, pixel centres at `i + ½`) that output pixel
/// `(x, y)` reads from when rotating by `angle_deg` about the image centre.
pub(crate) fn rotation_source(x: u32, y: u32, w: u32, h: u32, angle_deg: f64) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = (f64::from(w) / 2.0, f64::from(h) / 2.0);
    let (dx, dy) = (f64::from(x) + 0.5 - cx, f64::from(y) + 0.5 - cy);
    (c * dx + s * dy + cx, -s * dx + c * dy + cy)
}

fn rotate_mask(mask: &GrayImage, angle_deg: f64) -> GrayImage {
    let (w, h) = mask.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let (sx, sy) = rotation_source(x, y, w, h, angle_deg);
        let (i, j) = (sx.floor(), sy.floor());
        if i < 0.0 || j < 0.0 || i >= f64::from(w) || j >= f64::from(h) {
            Luma([0])
        } else {
            *mask.get_pixel(i as u32, j as u32)
        }
    })
}

fn rotate_rgb(img: &RgbImage, angle_deg: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let tap = |i: i64, j: i64, ch: usize| -> f64 {
        if i < 0 || j < 0 || i >= i64::from(w) || j >= i64::from(h) {
            0.0
        } else {
            f64::from(img.get_pixel(i as u32, j as u32)[ch])
        }
    };
    RgbImage::from_fn(w, h, |x, y| {
        let (sx, sy) = rotation_source(x, y, w, h, angle_deg);
        let (u, v) = (sx - 0.5, sy - 0.5);
        let (i0, j0) = (u.floor(), v.floor());
        let (a, b) = (u - i0, v - j0);
        let (i0, j0) = (i0 as i64, j0 as i64);
        let mut px = [0u8; 3];
        for (ch, out) in px.iter_mut().enumerate() {
            let val = (1.0 - b) * ((1.0 - a) * tap(i0, j0, ch) + a * tap(i0 + 1, j0, ch))
                + b * ((1.0 - a) * tap(i0, j0 + 1, ch) + a * tap(i0 + 1, j0 + 1, ch));
            *out = val.round().clamp(0.0, 255.0) as u8;
        }
        Rgb(px)
    })
}

/// `v' = (v − mean)·contrast + mean + brightness·255`, with `mean` the
/// image's mean intensity.
fn photometric(img: &mut RgbImage, brightness: f64, contrast: f64) {
    let raw = img.as_raw();
    let mean = raw.iter().map(|&v| f64::from(v)).sum::<f64>() / raw.len().max(1) as f64;
    let shift = brightness * 255.0;
    for v in img.iter_mut() {
        let t = (f64::from(*v) - mean) * contrast + mean + shift;
        *v = t.round().clamp(0.0, 255.0) as u8;
    }
}
