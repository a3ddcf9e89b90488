//! VIA (VGG Image Annotator) polygon annotations.

use std::collections::HashMap;

use image::GrayImage;
use serde_json::Value;

use crate::error::{data_err, Result};
use crate::raster::point_in_polygon;

#[derive(Debug, Clone, PartialEq)]
pub enum ViaShape {
    Polygon(Vec<(f64, f64)>),
    Rect { x: f64, y: f64, width: f64, height: f64 },
}

impl ViaShape {
    fn vertices(&self) -> Vec<(f64, f64)> {
        match self {
            ViaShape::Polygon(p) => p.clone(),
            ViaShape::Rect { x, y, width, height } => vec![
                (*x, *y),
                (x + width, *y),
                (x + width, y + height),
                (*x, y + height),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViaRegion {
    pub shape: ViaShape,
    pub label: String,
}

/// Class index for an annotation label.
pub fn label_class(label: &str) -> Result<u8> {
    match label.trim().to_ascii_lowercase().as_str() {
        "background" => Ok(0),
        "bioink" | "ink" => Ok(1),
        "nozzle" => Ok(2),
        other => Err(data_err!("unknown annotation label '{other}'")),
    }
}

/// Rasterizes regions to an index mask. Classes are painted in order
/// background, bioink, nozzle, so nozzle wins wherever it overlaps ink.
/// Each polygon uses the even-odd rule on pixel centres.
pub fn rasterize_via(regions: &[ViaRegion], width: u32, height: u32) -> Result<GrayImage> {
    let mut by_class: [Vec<Vec<(f64, f64)>>; 3] = Default::default();
    for r in regions {
        let class = label_class(&r.label)?;
        by_class[usize::from(class)].push(r.shape.vertices());
    }
    let mut mask = GrayImage::new(width, height);
    for (class, polys) in by_class.iter().enumerate() {
        for poly in polys {
            for (x, y, px) in mask.enumerate_pixels_mut() {
                if point_in_polygon(f64::from(x) + 0.5, f64::from(y) + 0.5, poly) {
                    px.0[0] = class as u8;
                }
            }
        }
    }
    Ok(mask)
}

fn number_list(v: &Value, key: &str) -> Result<Vec<f64>> {
    v.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| data_err!("polygon without '{key}'"))?
        .iter()
        .map(|n| n.as_f64().ok_or_else(|| data_err!("non-numeric entry in '{key}'")))
        .collect()
}

fn parse_shape(attrs: &Value) -> Result<ViaShape> {
    let name = attrs.get("name").and_then(Value::as_str).unwrap_or("");
    match name {
        "polygon" => {
            let xs = number_list(attrs, "all_points_x")?;
            let ys = number_list(attrs, "all_points_y")?;
            if xs.len() != ys.len() || xs.len() < 3 {
                return Err(data_err!("polygon needs matching x/y lists of at least 3 points"));
            }
            Ok(ViaShape::Polygon(xs.into_iter().zip(ys).collect()))
        }
        "rect" => {
            let get = |k: &str| {
                attrs
                    .get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| data_err!("rect without '{k}'"))
            };
            Ok(ViaShape::Rect {
                x: get("x")?,
                y: get("y")?,
                width: get("width")?,
                height: get("height")?,
            })
        }
        other => Err(data_err!("unsupported VIA shape '{other}'")),
    }
}

/// Label from `region_attributes`: the first of `class`, `label`, `type`,
/// `name`, else the only attribute. Checkbox/dropdown objects resolve to
/// their selected key.
fn parse_label(attrs: &Value) -> Result<String> {
    let obj = attrs
        .as_object()
        .ok_or_else(|| data_err!("region_attributes is not an object"))?;
    let pick = ["class", "label", "type", "name"]
        .iter()
        .find_map(|k| obj.get(*k))
        .or_else(|| (obj.len() == 1).then(|| obj.values().next()).flatten())
        .ok_or_else(|| data_err!("region has no class attribute"))?;
    match pick {
        Value::String(s) => Ok(s.clone()),
        Value::Object(m) => m
            .iter()
            .find(|(_, v)| v.as_bool() == Some(true))
            .map(|(k, _)| k.clone())
            .ok_or_else(|| data_err!("region class object has no selected entry")),
        other => Err(data_err!("unsupported region class value {other}")),
    }
}

/// Parses a VIA project (`_via_img_metadata`) or annotation export into
/// regions keyed by image file name.
pub(crate) fn parse_via(text: &str) -> Result<HashMap<String, Vec<ViaRegion>>> {
    let root: Value = serde_json::from_str(text).map_err(|e| data_err!("invalid VIA JSON: {e}"))?;
    let records = root.get("_via_img_metadata").unwrap_or(&root);
    let records = records
        .as_object()
        .ok_or_else(|| data_err!("VIA JSON root is not an object"))?;
    let mut out = HashMap::new();
    for rec in records.values() {
        let Some(filename) = rec.get("filename").and_then(Value::as_str) else {
            continue;
        };
        let regions: Vec<&Value> = match rec.get("regions") {
            Some(Value::Array(a)) => a.iter().collect(),
            Some(Value::Object(m)) => m.values().collect(),
            None | Some(Value::Null) => Vec::new(),
            Some(_) => return Err(data_err!("{filename}: malformed regions")),
        };
        let mut parsed = Vec::with_capacity(regions.len());
        for r in regions {
            let shape = parse_shape(
                r.get("shape_attributes")
                    .ok_or_else(|| data_err!("{filename}: region without shape_attributes"))?,
            )?;
            let label = parse_label(r.get("region_attributes").unwrap_or(&Value::Null))
                .map_err(|e| data_err!("{filename}: {e}"))?;
            parsed.push(ViaRegion { shape, label });
        }
        out.insert(filename.to_string(), parsed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(label: &str, pts: &[(f64, f64)]) -> ViaRegion {
        ViaRegion {
            shape: ViaShape::Polygon(pts.to_vec()),
            label: label.into(),
        }
    }

    #[test]
    fn empty_annotation_is_background() {
        let m = rasterize_via(&[], 5, 4).unwrap();
        assert!(m.as_raw().iter().all(|&v| v == 0));
    }

    #[test]
    fn nozzle_wins_overlaps_regardless_of_order() {
        let ink = poly("bioink", &[(0.0, 0.0), (6.0, 0.0), (6.0, 6.0), (0.0, 6.0)]);
        let noz = poly("nozzle", &[(3.0, 3.0), (8.0, 3.0), (8.0, 8.0), (3.0, 8.0)]);
        for regions in [vec![ink.clone(), noz.clone()], vec![noz, ink]] {
            let m = rasterize_via(&regions, 8, 8).unwrap();
            assert_eq!(m.get_pixel(4, 4)[0], 2);
            assert_eq!(m.get_pixel(1, 1)[0], 1);
            assert_eq!(m.get_pixel(7, 7)[0], 2);
        }
    }

    #[test]
    fn unknown_label_is_rejected() {
        let r = poly("filament", &[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)]);
        assert!(rasterize_via(&[r], 4, 4).is_err());
    }

    #[test]
    fn parses_project_and_export_layouts() {
        let export = r#"{"img1.png12": {"filename": "img1.png", "size": 12, "regions": [
            {"shape_attributes": {"name": "polygon", "all_points_x": [1,4,4,1], "all_points_y": [1,1,4,4]},
             "region_attributes": {"class": "nozzle"}},
            {"shape_attributes": {"name": "rect", "x": 0, "y": 0, "width": 2, "height": 2},
             "region_attributes": {"type": {"bioink": true}}}
        ], "file_attributes": {}}}"#;
        let recs = parse_via(export).unwrap();
        let regions = &recs["img1.png"];
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[1].label, "bioink");

        let project = format!(r#"{{"_via_settings": {{}}, "_via_img_metadata": {export}}}"#);
        assert_eq!(parse_via(&project).unwrap(), recs);

        let v1 = r#"{"a.jpg": {"filename": "a.jpg", "regions": {"0": {"shape_attributes": {"name": "polygon", "all_points_x": [0,3,3], "all_points_y": [0,0,3]}, "region_attributes": {"label": "ink"}}}}}"#;
        assert_eq!(parse_via(v1).unwrap()["a.jpg"][0].label, "ink");
        assert!(parse_via("[1, 2]").is_err());
    }
}
