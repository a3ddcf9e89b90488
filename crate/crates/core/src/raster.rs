//! Pixel-centre rasterization shared by annotation ingestion and the scene
//! generator. Pixel `(x, y)` is covered when its centre `(x + ½, y + ½)` is
//! inside the shape.

use image::GrayImage;

/// Even-odd rule, half-open in `y` so shared edges are not double counted.
pub fn point_in_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) {
            let x_cross = xi + (py - yi) * (xj - xi) / (yj - yi);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn bbox(poly: &[(f64, f64)], w: u32, h: u32) -> Option<(u32, u32, u32, u32)> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in poly {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let clamp = |v: f64, hi: u32| v.floor().clamp(0.0, f64::from(hi)) as u32;
    let (x0, y0) = (clamp(x0 - 1.0, w), clamp(y0 - 1.0, h));
    let (x1, y1) = (clamp(x1 + 1.0, w), clamp(y1 + 1.0, h));
    (x0 < x1 && y0 < y1).then_some((x0, y0, x1, y1))
}

/// Sets every covered pixel of `mask` to `value`; returns how many were set.
pub fn fill_polygon(mask: &mut GrayImage, poly: &[(f64, f64)], value: u8) -> usize {
    let (w, h) = mask.dimensions();
    let Some((x0, y0, x1, y1)) = bbox(poly, w, h) else {
        return 0;
    };
    let mut count = 0;
    for y in y0..y1 {
        for x in x0..x1 {
            if point_in_polygon(f64::from(x) + 0.5, f64::from(y) + 0.5, poly) {
                mask.put_pixel(x, y, image::Luma([value]));
                count += 1;
            }
        }
    }
    count
}

/// Distance from `p` to segment `a`–`b`.
pub fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Distance from `p` to a polyline (round joins and caps).
pub fn polyline_distance(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => segment_distance(p, line[0], line[0]),
        _ => line
            .windows(2)
            .map(|s| segment_distance(p, s[0], s[1]))
            .fold(f64::INFINITY, f64::min),
    }
}
