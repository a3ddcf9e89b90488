//! Contrast-limited adaptive histogram equalization.
//!
//! The image is cut into a grid of tiles (reflect-padded on the right and
//! bottom when the grid does not divide it). Each tile gets a lookup table
//! from its histogram, clipped at `clip_limit × area / 256` with the excess
//! spread evenly over all 256 bins, then equalized as
//! `round(255 · (cdf(v) − cdf_min) / (area − cdf_min))`. A tile whose
//! histogram has a single occupied bin keeps the identity mapping. Each
//! output pixel blends the tables of the four nearest tile centres
//! bilinearly.

use image::{GrayImage, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheConfig {
    /// Tile grid `(columns, rows)`.
    pub tiles: (u32, u32),
    /// Multiple of the uniform bin height; `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        ClaheConfig {
            tiles: (8, 8),
            clip_limit: 2.0,
        }
    }
}

fn reflect(i: i64, n: u32) -> u32 {
    let n = i64::from(n);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as u32
}

fn tile_lut(hist: &[u32; 256], area: u32, clip_limit: f64) -> [u8; 256] {
    let mut identity = [0u8; 256];
    for (i, v) in identity.iter_mut().enumerate() {
        *v = i as u8;
    }
    if hist.iter().filter(|&&c| c > 0).count() <= 1 {
        return identity;
    }
    let area_f = f64::from(area);
    let mut h: Vec<f64> = hist.iter().map(|&c| f64::from(c)).collect();
    if clip_limit.is_finite() {
        let limit = (clip_limit * area_f / 256.0).max(1.0);
        let mut excess = 0.0;
        for c in h.iter_mut() {
            if *c > limit {
                excess += *c - limit;
                *c = limit;
            }
        }
        let share = excess / 256.0;
        for c in h.iter_mut() {
            *c += share;
        }
    }
    let cdf_min = h.iter().copied().find(|&c| c > 0.0).unwrap_or(0.0);
    let den = area_f - cdf_min;
    if den <= 0.0 {
        return identity;
    }
    let mut lut = [0u8; 256];
    let mut cdf = 0.0;
    for (v, &c) in h.iter().enumerate() {
        cdf += c;
        lut[v] = (((cdf - cdf_min) * 255.0) / den).round().clamp(0.0, 255.0) as u8;
    }
    lut
}

pub fn clahe_gray(img: &GrayImage, cfg: &ClaheConfig) -> GrayImage {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return img.clone();
    }
    let (tx, ty) = (cfg.tiles.0.clamp(1, w), cfg.tiles.1.clamp(1, h));
    let tw = w.div_ceil(tx);
    let th = h.div_ceil(ty);
    let area = tw * th;

    let mut luts = vec![[0u8; 256]; (tx * ty) as usize];
    for j in 0..ty {
        for i in 0..tx {
            let mut hist = [0u32; 256];
            for y in j * th..(j + 1) * th {
                let sy = reflect(i64::from(y), h);
                for x in i * tw..(i + 1) * tw {
                    let sx = reflect(i64::from(x), w);
                    hist[usize::from(img.get_pixel(sx, sy)[0])] += 1;
                }
            }
            luts[(j * tx + i) as usize] = tile_lut(&hist, area, cfg.clip_limit);
        }
    }

    // Neighbouring tile indices and blend weight along one axis.
    let axis = |p: u32, size: u32, count: u32| {
        let f = (f64::from(p) + 0.5) / f64::from(size) - 0.5;
        let lo = f.floor();
        let a = f - lo;
        let clamp = |t: f64| t.clamp(0.0, f64::from(count - 1)) as u32;
        (clamp(lo), clamp(lo + 1.0), a)
    };

    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        let (y1, y2, ay) = axis(y, th, ty);
        for x in 0..w {
            let (x1, x2, ax) = axis(x, tw, tx);
            let v = usize::from(img.get_pixel(x, y)[0]);
            let l = |i: u32, j: u32| f64::from(luts[(j * tx + i) as usize][v]);
            let top = (1.0 - ax) * l(x1, y1) + ax * l(x2, y1);
            let bottom = (1.0 - ax) * l(x1, y2) + ax * l(x2, y2);
            let r = (1.0 - ay) * top + ay * bottom;
            out.put_pixel(x, y, image::Luma([r.round().clamp(0.0, 255.0) as u8]));
        }
    }
    out
}

/// Plain histogram equalization: one tile, no clipping.
pub fn global_equalize(img: &GrayImage) -> GrayImage {
    clahe_gray(
        img,
        &ClaheConfig {
            tiles: (1, 1),
            clip_limit: f64::INFINITY,
        },
    )
}

fn luma(p: &[u8; 3]) -> u8 {
    (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Equalizes the luma channel and rescales RGB by the luma ratio.
pub fn clahe_rgb(img: &RgbImage, cfg: &ClaheConfig) -> RgbImage {
    let (w, h) = img.dimensions();
    let y = GrayImage::from_fn(w, h, |x, yy| image::Luma([luma(&img.get_pixel(x, yy).0)]));
    let eq = clahe_gray(&y, cfg);
    let mut out = img.clone();
    for ((px, yv), ev) in out.pixels_mut().zip(y.pixels()).zip(eq.pixels()) {
        let (yv, ev) = (yv[0], ev[0]);
        if yv == ev {
            continue;
        }
        if yv == 0 {
            px.0 = [ev; 3];
            continue;
        }
        let ratio = f64::from(ev) / f64::from(yv);
        for c in px.0.iter_mut() {
            *c = (f64::from(*c) * ratio).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    /// Independent global-equalization oracle in integer arithmetic.
    fn he_oracle(img: &GrayImage) -> Vec<u8> {
        let mut hist = [0u64; 256];
        for p in img.pixels() {
            hist[usize::from(p[0])] += 1;
        }
        let n: u64 = hist.iter().sum();
        let cdf_min = *hist.iter().find(|&&c| c > 0).unwrap();
        let mut cdf = [0u64; 256];
        let mut acc = 0;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            cdf[v] = acc;
        }
        img.pixels()
            .map(|p| {
                let num = (cdf[usize::from(p[0])] - cdf_min) * 255;
                let den = n - cdf_min;
                ((2 * num + den) / (2 * den)) as u8
            })
            .collect()
    }

    #[test]
    fn constant_image_is_unchanged() {
        for v in [0u8, 1, 77, 128, 254, 255] {
            let img = GrayImage::from_pixel(37, 23, Luma([v]));
            let out = clahe_gray(&img, &ClaheConfig::default());
            assert!(out.pixels().all(|p| p[0].abs_diff(v) <= 1), "value {v}");
        }
    }

    #[test]
    fn two_level_image_spreads_to_extremes() {
        let img = GrayImage::from_fn(16, 16, |x, _| Luma([if x < 8 { 50 } else { 200 }]));
        let cfg = ClaheConfig {
            tiles: (1, 1),
            clip_limit: 1e6,
        };
        let out = clahe_gray(&img, &cfg);
        assert_eq!(out.as_raw(), &he_oracle(&img));
        assert_eq!(out.get_pixel(0, 0)[0], 0);
        assert_eq!(out.get_pixel(15, 0)[0], 255);
    }

    #[test]
    fn infinite_clip_single_tile_is_global_equalization() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let img = GrayImage::from_fn(24, 20, |_, _| Luma([rng.random_range(40..180)]));
        let cfg = ClaheConfig {
            tiles: (1, 1),
            clip_limit: f64::INFINITY,
        };
        assert_eq!(clahe_gray(&img, &cfg).as_raw(), &he_oracle(&img));
        assert_eq!(global_equalize(&img).as_raw(), &he_oracle(&img));
    }

    #[test]
    fn clipping_limits_contrast_gain() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let img = GrayImage::from_fn(64, 64, |_, _| Luma([rng.random_range(100..110)]));
        let spread = |g: &GrayImage| {
            let (lo, hi) = g.pixels().fold((255, 0), |(lo, hi), p| (p[0].min(lo), p[0].max(hi)));
            hi - lo
        };
        let weak = clahe_gray(&img, &ClaheConfig { tiles: (4, 4), clip_limit: 1.5 });
        let strong = clahe_gray(&img, &ClaheConfig { tiles: (4, 4), clip_limit: 40.0 });
        assert!(spread(&weak) < spread(&strong));
        assert!(spread(&img) < spread(&strong));
    }

    #[test]
    fn rgb_constant_and_indivisible_grid() {
        let img = RgbImage::from_pixel(30, 17, image::Rgb([120, 60, 30]));
        assert_eq!(clahe_rgb(&img, &ClaheConfig::default()), img);
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(7, 1), 0);
    }
}
