//! File-level ingestion: image + index-mask directories, VIA projects, and
//! the canonical dataset manifest.
//!
//! Manifest format (UTF-8 text, tab-separated, paths relative to the
//! manifest's directory):
//!
//! ```text
//! # biolite-manifest v1
//! # key=value            (any number of metadata lines)
//! id  image  mask  split
//! frame_0000  images/frame_0000.png  masks/frame_0000.png  train
//! ```
//!
//! `split` is one of `train`, `val`, `test` or `-`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::split::SplitName;
use super::via::{parse_via, rasterize_via};
use super::LabeledFrame;
use crate::error::{data_err, Error, Result};

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];
const MANIFEST_MAGIC: &str = "# biolite-manifest v1";
const COLUMNS: &str = "id\timage\tmask\tsplit";

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::image(path, other),
    })
}

/// Reads any supported image as 8-bit RGB.
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(open_image(path)?.to_rgb8())
}

/// Reads a single-channel 8-bit mask of raw class indices.
pub fn read_mask(path: &Path) -> Result<GrayImage> {
    match open_image(path)? {
        DynamicImage::ImageLuma8(m) => Ok(m),
        other => Err(data_err!(
            "{}: mask must be 8-bit single-channel, found {:?}",
            path.display(),
            other.color()
        )),
    }
}

pub fn write_mask(path: &Path, mask: &GrayImage) -> Result<()> {
    mask.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

fn image_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| IMAGE_EXTS.contains(&e.as_str())) {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| data_err!("non-UTF-8 file name {}", path.display()))?
            .to_string();
        out.push((id, path));
    }
    out.sort();
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(data_err!("two images share the id {}", w[0].0));
    }
    Ok(out)
}

/// Pairs every image in `image_dir` with `<id>.png` in `mask_dir`. Frames
/// come back sorted by id.
pub fn load_dataset(image_dir: &Path, mask_dir: &Path) -> Result<Vec<LabeledFrame>> {
    let mut frames = Vec::new();
    for (id, path) in image_files(image_dir)? {
        let mask_path = mask_dir.join(format!("{id}.png"));
        if !mask_path.is_file() {
            return Err(data_err!("{id}: missing mask {}", mask_path.display()));
        }
        let image = open_image(&path)?.to_rgb8();
        let mask = read_mask(&mask_path)?;
        frames.push(LabeledFrame::new(id, image, mask)?);
    }
    Ok(frames)
}

/// Images in `image_dir` with masks rasterized from a VIA project export.
pub fn load_via_dataset(image_dir: &Path, via_json: &Path) -> Result<Vec<LabeledFrame>> {
    let text = fs::read_to_string(via_json).map_err(|e| Error::io(via_json, e))?;
    let records = parse_via(&text)?;
    let mut frames = Vec::new();
    for (id, path) in image_files(image_dir)? {
        let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        let regions = records
            .get(file_name)
            .ok_or_else(|| data_err!("{id}: no VIA record for {file_name}"))?;
        let image = open_image(&path)?.to_rgb8();
        let mask = rasterize_via(regions, image.width(), image.height())?;
        frames.push(LabeledFrame::new(id, image, mask)?);
    }
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub split: Option<SplitName>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    /// `key=value` metadata, in file order.
    pub meta: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative paths resolve against.
    pub root: PathBuf,
}

impl Manifest {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(MANIFEST_MAGIC);
        s.push('\n');
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s.push_str(COLUMNS);
        s.push('\n');
        for e in &self.entries {
            let split = e.split.map(|s| s.as_str()).unwrap_or("-");
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.id,
                e.image.display(),
                e.mask.display(),
                split
            ));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Manifest> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(MANIFEST_MAGIC) {
            return Err(data_err!("not a dataset manifest (missing '{MANIFEST_MAGIC}')"));
        }
        let mut m = Manifest {
            root,
            ..Default::default()
        };
        for (no, line) in lines.enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line == COLUMNS {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    m.meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(data_err!("manifest line {}: expected 4 columns", no + 2));
            }
            let split = match cols[3] {
                "-" => None,
                s => Some(SplitName::parse(s)?),
            };
            m.entries.push(ManifestEntry {
                id: cols[0].to_string(),
                image: PathBuf::from(cols[1]),
                mask: PathBuf::from(cols[2]),
                split,
            });
        }
        Ok(m)
    }

    pub fn ids(&self, split: Option<SplitName>) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| split.is_none() || e.split == split)
            .map(|e| e.id.as_str())
            .collect()
    }

    /// Loads the frames of one split (all frames for `None`), sorted by id.
    pub fn load_frames(&self, split: Option<SplitName>) -> Result<Vec<LabeledFrame>> {
        let mut frames = Vec::new();
        for e in self
            .entries
            .iter()
            .filter(|e| split.is_none() || e.split == split)
        {
            let image_path = self.root.join(&e.image);
            let mask_path = self.root.join(&e.mask);
            if !mask_path.is_file() {
                return Err(data_err!("{}: missing mask {}", e.id, mask_path.display()));
            }
            let image = open_image(&image_path)?.to_rgb8();
            let mask = read_mask(&mask_path)?;
            frames.push(LabeledFrame::new(e.id.clone(), image, mask)?);
        }
        frames.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(frames)
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Manifest::parse(&text, root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Luma, Rgb};

    fn write_pair(dir: &Path, id: &str, mask_value: u8) {
        let img = RgbImage::from_pixel(4, 3, Rgb([10, 20, 30]));
        img.save(dir.join("images").join(format!("{id}.png"))).unwrap();
        let mask = GrayImage::from_pixel(4, 3, Luma([mask_value]));
        write_mask(&dir.join("masks").join(format!("{id}.png")), &mask).unwrap();
    }

    fn layout() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("images")).unwrap();
        fs::create_dir(dir.path().join("masks")).unwrap();
        dir
    }

    #[test]
    fn loads_matched_pairs_in_id_order() {
        let dir = layout();
        for id in ["c", "a", "b"] {
            write_pair(dir.path(), id, 1);
        }
        let frames = load_dataset(&dir.path().join("images"), &dir.path().join("masks")).unwrap();
        let ids: Vec<_> = frames.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn bad_mask_value_names_the_frame() {
        let dir = layout();
        write_pair(dir.path(), "ok", 2);
        write_pair(dir.path(), "broken", 5);
        let err = load_dataset(&dir.path().join("images"), &dir.path().join("masks")).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Data);
        assert!(err.to_string().contains("broken"), "{err}");
    }

    #[test]
    fn missing_mask_names_the_frame() {
        let dir = layout();
        write_pair(dir.path(), "one", 0);
        RgbImage::new(2, 2).save(dir.path().join("images/lonely.png")).unwrap();
        let err = load_dataset(&dir.path().join("images"), &dir.path().join("masks")).unwrap_err();
        assert!(err.to_string().contains("lonely"), "{err}");
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            meta: vec![("difficulty".into(), "hard".into()), ("seed".into(), "3".into())],
            entries: vec![
                ManifestEntry {
                    id: "f0".into(),
                    image: "images/f0.png".into(),
                    mask: "masks/f0.png".into(),
                    split: Some(SplitName::Train),
                },
                ManifestEntry {
                    id: "f1".into(),
                    image: "images/f1.png".into(),
                    mask: "masks/f1.png".into(),
                    split: None,
                },
            ],
            root: PathBuf::from("/data"),
        };
        let back = Manifest::parse(&m.render(), PathBuf::from("/data")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.meta_value("difficulty"), Some("hard"));
        assert!(Manifest::parse("id\timage\n", PathBuf::new()).is_err());
    }
}
