//! Procedural bioprinting scenes with exact masks: textured background, a
//! curved extruded ink trace, and a tapered nozzle drawn on top.
//!
//! Geometry and photometrics come from separate random streams, so two
//! difficulty tiers with the same seed share every shape and differ only in
//! colour, noise and lighting.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, write_mask, LabeledFrame, Manifest, ManifestEntry};
use crate::error::{data_err, Error, Result};
use crate::raster::{point_in_polygon, polyline_distance};
use crate::seed::rng_for_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(data_err!("unknown difficulty '{other}' (easy, medium, hard)")),
        }
    }
}

/// Nozzle hanging from the top edge down to `tip`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NozzleSpec {
    /// Bottom centre of the nozzle, in pixels.
    pub tip: (f64, f64),
    /// Width at the tip, in pixels.
    pub width: f64,
    /// Half-angle by which the body widens going up, in degrees.
    pub taper_deg: f64,
    pub gray: u8,
}

impl NozzleSpec {
    /// Body trapezoid and the narrower dispensing tip below it.
    pub fn polygons(&self) -> [Vec<(f64, f64)>; 2] {
        let (tx, ty) = self.tip;
        let half = self.width / 2.0;
        let tip_len = (self.width * 0.6).min(ty * 0.3);
        let neck = ty - tip_len;
        let grow = neck * self.taper_deg.to_radians().tan();
        let body = vec![
            (tx - half - grow, 0.0),
            (tx + half + grow, 0.0),
            (tx + half, neck),
            (tx - half, neck),
        ];
        let tip = vec![
            (tx - half * 0.55, neck),
            (tx + half * 0.55, neck),
            (tx + half * 0.4, ty),
            (tx - half * 0.4, ty),
        ];
        [body, tip]
    }

    fn contains(&self, p: (f64, f64)) -> bool {
        self.polygons()
            .iter()
            .any(|poly| point_in_polygon(p.0, p.1, poly))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InkSpec {
    /// Control points of the quadratic B-spline path.
    pub points: Vec<(f64, f64)>,
    pub thickness: f64,
    pub color: [u8; 3],
    pub opacity: f64,
}

impl InkSpec {
    /// Flattened spline: straight to the first midpoint, a quadratic Bézier
    /// through every interior control point, straight to the end.
    pub fn polyline(&self) -> Vec<(f64, f64)> {
        let p = &self.points;
        if p.len() < 3 {
            return p.clone();
        }
        const STEPS: usize = 12;
        let mid = |a: (f64, f64), b: (f64, f64)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        let mut out = vec![p[0]];
        for i in 1..p.len() - 1 {
            let a = if i == 1 { p[0] } else { mid(p[i - 1], p[i]) };
            let c = if i == p.len() - 2 { p[i + 1] } else { mid(p[i], p[i + 1]) };
            let b = p[i];
            for s in 1..=STEPS {
                let t = s as f64 / STEPS as f64;
                let u = 1.0 - t;
                out.push((
                    u * u * a.0 + 2.0 * u * t * b.0 + t * t * c.0,
                    u * u * a.1 + 2.0 * u * t * b.1 + t * t * c.1,
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub base: [u8; 3],
    /// Standard deviation of per-pixel Gaussian noise, in u8 levels.
    pub noise: f64,
    /// Brightness change across the full width and height, in u8 levels.
    pub gradient: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub image_size: u32,
    pub nozzle: Option<NozzleSpec>,
    pub ink: Option<InkSpec>,
    pub background: BackgroundSpec,
    /// Seeds the background noise.
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let s = f64::from(self.image_size);
        if self.image_size == 0 {
            return Err(data_err!("scene image_size must be positive"));
        }
        let inside = |(x, y): (f64, f64)| (0.0..=s).contains(&x) && (0.0..=s).contains(&y);
        if let Some(n) = &self.nozzle {
            if !n.polygons().iter().flatten().all(|&p| inside(p)) {
                return Err(data_err!("nozzle geometry leaves the frame"));
            }
        }
        if let Some(ink) = &self.ink {
            if ink.thickness < 1.0 {
                return Err(data_err!("ink thickness {} is below 1 px", ink.thickness));
            }
            if !ink.points.iter().all(|&p| inside(p)) {
                return Err(data_err!("ink path leaves the frame"));
            }
        }
        Ok(())
    }

    /// Randomized scene `index` of a dataset.
    pub fn random(image_size: u32, difficulty: Difficulty, seed: u64, index: u64) -> SceneConfig {
        let mut geo = rng_for_indexed(seed, "synth-geometry", index);
        let mut photo = rng_for_indexed(seed, "synth-photometric", index);
        let s = f64::from(image_size);

        let tip = (geo.random_range(0.3..0.7) * s, geo.random_range(0.3..0.5) * s);
        let width = geo.random_range(0.08..0.13) * s;
        let taper_deg = geo.random_range(4.0..12.0);

        // Serpentine path leaving the tip and wandering across the bed.
        let margin = 0.06 * s;
        let clamp = |v: f64| v.clamp(margin, s - margin);
        let mut points = vec![(tip.0, clamp(tip.1 + 0.02 * s))];
        let turns = geo.random_range(3..=5);
        let mut dir = if geo.random::<bool>() { 1.0 } else { -1.0 };
        let mut y = points[0].1;
        for _ in 0..turns {
            y = clamp(y + geo.random_range(0.06..0.16) * s);
            let x = clamp(s / 2.0 + dir * geo.random_range(0.15..0.42) * s);
            points.push((x, y));
            dir = -dir;
        }
        let thickness = (geo.random_range(0.03..0.05) * s).max(1.0);

        let base_level: f64 = photo.random_range(150.0..205.0);
        let tint = [
            photo.random_range(-12.0..12.0),
            photo.random_range(-12.0..12.0),
            photo.random_range(-12.0..12.0),
        ];
        let base = tint.map(|t: f64| (base_level + t).clamp(0.0, 255.0) as u8);
        let nozzle_gray = photo.random_range(85..125);
        let (ink_color, opacity, noise, grad) = match difficulty {
            Difficulty::Easy => {
                let c = [
                    photo.random_range(20..70),
                    photo.random_range(50..110),
                    photo.random_range(150..220),
                ];
                (c, 1.0, 0.0, (0.0, 0.0))
            }
            Difficulty::Medium => {
                let c = [
                    photo.random_range(40..100),
                    photo.random_range(80..140),
                    photo.random_range(150..210),
                ];
                let g = (photo.random_range(-30.0..30.0), photo.random_range(-30.0..30.0));
                (c, 0.85, 6.0, g)
            }
            Difficulty::Hard => {
                let shift: [f64; 3] = [
                    photo.random_range(-35.0..-15.0),
                    photo.random_range(-25.0..-5.0),
                    photo.random_range(5.0..25.0),
                ];
                let c = [0, 1, 2].map(|i| (f64::from(base[i]) + shift[i]).clamp(0.0, 255.0) as u8);
                let g = (photo.random_range(-40.0..40.0), photo.random_range(-40.0..40.0));
                (c, 0.7, 10.0, g)
            }
        };

        SceneConfig {
            image_size,
            nozzle: Some(NozzleSpec {
                tip,
                width,
                taper_deg,
                gray: nozzle_gray,
            }),
            ink: Some(InkSpec {
                points,
                thickness,
                color: ink_color,
                opacity,
            }),
            background: BackgroundSpec {
                base,
                noise,
                gradient: grad,
            },
            seed: photo.random(),
        }
    }
}

/// A generated frame plus the scene it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub frame: LabeledFrame,
    pub config: SceneConfig,
}

const SUB: u32 = 4;

/// Fraction of a pixel's `SUB × SUB` sub-samples for which `inside` holds.
fn coverage(x: u32, y: u32, inside: impl Fn((f64, f64)) -> bool) -> f64 {
    let mut hits = 0;
    for j in 0..SUB {
        for i in 0..SUB {
            let p = (
                f64::from(x) + (f64::from(i) + 0.5) / f64::from(SUB),
                f64::from(y) + (f64::from(j) + 0.5) / f64::from(SUB),
            );
            if inside(p) {
                hits += 1;
            }
        }
    }
    f64::from(hits) / f64::from(SUB * SUB)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Renders a scene. The mask uses pixel-centre membership; the image
/// anti-aliases shape edges.
pub fn generate(config: &SceneConfig) -> Result<SynthFrame> {
    config.validate()?;
    let size = config.image_size;
    let s = f64::from(size);
    let bg = &config.background;
    let mut noise_rng = rng_for_indexed(config.seed, "synth-noise", 0);
    let normal = Normal::new(0.0, bg.noise.max(0.0)).map_err(|e| Error::Internal(e.to_string()))?;

    let ink_line = config.ink.as_ref().map(|ink| (ink, ink.polyline()));
    let mut image = RgbImage::new(size, size);
    let mut mask = GrayImage::new(size, size);

    for y in 0..size {
        for x in 0..size {
            let centre = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            let light = bg.gradient.0 * (centre.0 / s - 0.5) + bg.gradient.1 * (centre.1 / s - 0.5);
            let n = if bg.noise > 0.0 { normal.sample(&mut noise_rng) } else { 0.0 };
            let mut px = bg.base.map(|c| f64::from(c) + light + n);
            let mut class = 0u8;

            if let Some((ink, line)) = &ink_line {
                let r = ink.thickness / 2.0;
                let d = polyline_distance(centre, line);
                if d <= r {
                    class = 1;
                }
                let cov = if d <= r - 0.75 {
                    1.0
                } else if d >= r + 0.75 {
                    0.0
                } else {
                    coverage(x, y, |p| polyline_distance(p, line) <= r)
                };
                let a = cov * ink.opacity;
                for c in 0..3 {
                    px[c] = lerp(px[c], f64::from(ink.color[c]) + light * 0.5, a);
                }
            }

            if let Some(noz) = &config.nozzle {
                let inside = noz.contains(centre);
                if inside {
                    class = 2;
                }
                let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                    .map(|(dx, dy)| noz.contains((f64::from(x) + dx, f64::from(y) + dy)));
                let cov = if corners.iter().all(|&c| c == inside) {
                    if inside {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    coverage(x, y, |p| noz.contains(p))
                };
                if cov > 0.0 {
                    // Cylindrical shading across the nozzle.
                    let u = ((centre.0 - noz.tip.0) / (noz.width * 1.5)).clamp(-1.0, 1.0);
                    let shade = f64::from(noz.gray) * (0.75 + 0.45 * (1.0 - u * u));
                    for v in px.iter_mut() {
                        *v = lerp(*v, shade, cov);
                    }
                }
            }

            image.put_pixel(x, y, Rgb(px.map(|v| v.round().clamp(0.0, 255.0) as u8)));
            mask.put_pixel(x, y, Luma([class]));
        }
    }
    let frame = LabeledFrame::new(format!("scene_{:016x}", config.seed), image, mask)?;
    Ok(SynthFrame {
        frame,
        config: config.clone(),
    })
}

pub fn frame_id(index: usize) -> String {
    format!("frame_{index:04}")
}

/// `n` random scenes; frame `i` has id `frame_{i:04}`.
pub fn generate_dataset(n: usize, difficulty: Difficulty, seed: u64, image_size: u32) -> Result<Vec<SynthFrame>> {
    if n == 0 {
        return Err(data_err!("synthetic dataset needs at least one frame"));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = SceneConfig::random(image_size, difficulty, seed, i as u64);
            let mut f = generate(&cfg)?;
            f.frame.id = frame_id(i);
            Ok(f)
        })
        .collect()
}

/// Writes `images/`, `masks/`, `scenes.jsonl` and `manifest.tsv` under
/// `out`. Frames are assigned to splits when there are enough of them.
pub fn write_dataset(
    frames: &[SynthFrame],
    out: &Path,
    difficulty: Difficulty,
    seed: u64,
) -> Result<Manifest> {
    for sub in ["images", "masks"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let ids: Vec<&str> = frames.iter().map(|f| f.frame.id.as_str()).collect();
    let assignment = if ids.len() >= 10 { Some(split(&ids, seed)?) } else { None };

    frames.par_iter().try_for_each(|f| -> Result<()> {
        let id = &f.frame.id;
        let img_path = out.join("images").join(format!("{id}.png"));
        f.frame
            .image
            .save_with_format(&img_path, image::ImageFormat::Png)
            .map_err(|e| Error::image(&img_path, e))?;
        write_mask(&out.join("masks").join(format!("{id}.png")), &f.frame.mask)
    })?;

    let mut scenes = String::new();
    for f in frames {
        let line = serde_json::json!({ "id": f.frame.id, "scene": f.config });
        scenes.push_str(&line.to_string());
        scenes.push('\n');
    }
    let scenes_path = out.join("scenes.jsonl");
    fs::write(&scenes_path, scenes).map_err(|e| Error::io(&scenes_path, e))?;

    let size = frames.first().map(|f| f.config.image_size).unwrap_or(0);
    let manifest = Manifest {
        meta: vec![
            ("source".into(), "synthetic".into()),
            ("difficulty".into(), difficulty.as_str().into()),
            ("seed".into(), seed.to_string()),
            ("frames".into(), frames.len().to_string()),
            ("image_size".into(), size.to_string()),
        ],
        entries: frames
            .iter()
            .map(|f| {
                let id = f.frame.id.clone();
                ManifestEntry {
                    image: format!("images/{id}.png").into(),
                    mask: format!("masks/{id}.png").into(),
                    split: assignment.as_ref().and_then(|a| a.of(&id)),
                    id,
                }
            })
            .collect(),
        root: out.to_path_buf(),
    };
    manifest.save(&out.join("manifest.tsv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::fill_polygon;

    fn plain(size: u32) -> SceneConfig {
        SceneConfig {
            image_size: size,
            nozzle: None,
            ink: None,
            background: BackgroundSpec {
                base: [180, 180, 180],
                noise: 0.0,
                gradient: (0.0, 0.0),
            },
            seed: 1,
        }
    }

    #[test]
    fn background_only_mask_is_zero() {
        let f = generate(&plain(24)).unwrap();
        assert!(f.frame.mask.as_raw().iter().all(|&v| v == 0));
        assert!(f.frame.image.pixels().all(|p| p.0 == [180, 180, 180]));
    }

    #[test]
    fn nozzle_mask_matches_point_in_polygon() {
        let mut cfg = plain(48);
        let noz = NozzleSpec {
            tip: (21.3, 30.0),
            width: 9.0,
            taper_deg: 10.0,
            gray: 100,
        };
        cfg.nozzle = Some(noz.clone());
        let f = generate(&cfg).unwrap();
        let mut oracle = GrayImage::new(48, 48);
        for poly in noz.polygons() {
            fill_polygon(&mut oracle, &poly, 2);
        }
        assert_eq!(f.frame.mask, oracle);
    }

    #[test]
    fn deterministic_and_tiers_share_geometry() {
        let a = SceneConfig::random(64, Difficulty::Easy, 9, 3);
        let b = SceneConfig::random(64, Difficulty::Easy, 9, 3);
        assert_eq!(generate(&a).unwrap(), generate(&b).unwrap());
        let h = SceneConfig::random(64, Difficulty::Hard, 9, 3);
        assert_eq!(a.nozzle.as_ref().unwrap().tip, h.nozzle.as_ref().unwrap().tip);
        assert_eq!(a.ink.as_ref().unwrap().points, h.ink.as_ref().unwrap().points);
        let (fa, fh) = (generate(&a).unwrap(), generate(&h).unwrap());
        assert_eq!(fa.frame.mask, fh.frame.mask);
        assert_ne!(fa.frame.image, fh.frame.image);
    }

    #[test]
    fn random_scenes_validate_at_many_sizes() {
        for size in [32, 64, 96, 256] {
            for i in 0..20 {
                SceneConfig::random(size, Difficulty::Medium, 5, i).validate().unwrap();
            }
        }
        let mut bad = plain(16);
        bad.ink = Some(InkSpec {
            points: vec![(1.0, 1.0), (5.0, 5.0)],
            thickness: 0.5,
            color: [0, 0, 0],
            opacity: 1.0,
        });
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn easy_ink_pixels_are_labelled_ink() {
        let cfg = SceneConfig::random(64, Difficulty::Easy, 2, 0);
        let f = generate(&cfg).unwrap();
        let ink = cfg.ink.unwrap().color;
        let mut seen = 0;
        for (x, y, p) in f.frame.image.enumerate_pixels() {
            if p.0 == ink {
                seen += 1;
                assert_eq!(f.frame.mask.get_pixel(x, y)[0], 1, "({x},{y})");
            }
        }
        assert!(seen > 20);
    }
}
