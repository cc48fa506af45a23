//! Integer line rasterization onto RGB images, with clipping.

use quadmark::imgproc::RgbImage;

pub const GREEN: [u8; 3] = [0, 255, 0];
pub const RED: [u8; 3] = [255, 0, 0];
pub const BLUE: [u8; 3] = [0, 0, 255];
pub const YELLOW: [u8; 3] = [255, 255, 0];

/// Draw a line between two continuous image points: Liang-Barsky clip to the
/// image rectangle, then Bresenham between the rounded endpoints.
pub fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
    let w = img.width() as f64;
    let h = img.height() as f64;
    let Some(((x0, y0), (x1, y1))) = clip_segment(a, b, w, h) else {
        return;
    };
    // continuous -> pixel index: the pixel whose center is nearest
    let to_px =
        |c: f64, limit: usize| -> i64 { ((c - 0.5).round() as i64).clamp(0, limit as i64 - 1) };
    bresenham(
        img,
        to_px(x0, img.width()),
        to_px(y0, img.height()),
        to_px(x1, img.width()),
        to_px(y1, img.height()),
        color,
    );
}

fn clip_segment(a: (f64, f64), b: (f64, f64), w: f64, h: f64) -> Option<((f64, f64), (f64, f64))> {
    if !(a.0.is_finite() && a.1.is_finite() && b.0.is_finite() && b.1.is_finite()) {
        return None;
    }
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.0),    // left: x >= 0
        (dx, w - a.0), // right: x <= w
        (-dy, a.1),    // top: y >= 0
        (dy, h - a.1), // bottom: y <= h
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return None;
                }
                t1 = t1.min(r);
            }
        }
    }
    Some((
        (a.0 + t0 * dx, a.1 + t0 * dy),
        (a.0 + t1 * dx, a.1 + t1 * dy),
    ))
}

fn bresenham(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set_pixel(x as usize, y as usize, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}
