//! Corner-ness computation, local-maxima extraction and assembly of 4-corner
//! marker candidates from labeled components.
//!
//! Coordinate convention used throughout: pixel `(x, y)` covers the unit
//! square `[x, x+1) x [y, y+1)`, so its center sits at continuous coordinates
//! `(x + 0.5, y + 0.5)`. Subpixel corner positions and quad vertices are
//! continuous coordinates under this convention.

use thiserror::Error;

use crate::imgproc::{GrayImage, LabelMap};

#[derive(Debug, Error, PartialEq)]
pub enum CornersError {
    #[error("image {width}x{height} too small, need at least 3x3")]
    ImageTooSmall { width: usize, height: usize },
}

/// Per-pixel corner-ness responses, same dimensions as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct CornernessMap {
    width: usize,
    height: usize,
    response: Vec<f64>,
}

impl CornernessMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.response[y * self.width + x]
    }

    pub fn from_raw(width: usize, height: usize, response: Vec<f64>) -> Option<Self> {
        if response.len() == width * height {
            Some(CornernessMap {
                width,
                height,
                response,
            })
        } else {
            None
        }
    }
}

/// A corner at subpixel position with its corner-ness response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub response: f64,
}

/// Four ordered marker-candidate corners in continuous image coordinates.
///
/// Vertices run counter-clockwise (positive shoelace in x-right/y-down image
/// axes), starting from the vertex with the smallest `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quad {
    pub vertices: [[f64; 2]; 4],
    pub component_label: u32,
}

/// Why a component produced no quad.
#[derive(Debug, Clone, PartialEq)]
pub enum SkipReason {
    NotEnoughCorners { found: usize },
    NonConvex,
    VerticesTooClose,
}

/// A component the extractor looked at but rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedComponent {
    pub component_label: u32,
    pub reason: SkipReason,
}

/// Quads plus diagnostics for the components that yielded none.
#[derive(Debug, Clone, Default)]
pub struct QuadExtraction {
    pub quads: Vec<Quad>,
    pub skipped: Vec<SkippedComponent>,
}

/// Harris corner-ness: Sobel 3x3 gradients, structure tensor smoothed with a
/// Gaussian of the given sigma (kernel truncated at three sigma), response
/// `det(M) - k * trace(M)^2`. Border pixels whose kernels would overflow the
/// image carry response 0.
pub fn harris_response(
    img: &GrayImage,
    window_sigma: f64,
    k: f64,
) -> Result<CornernessMap, CornersError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(CornersError::ImageTooSmall {
            width: w,
            height: h,
        });
    }

    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: i64, dy: i64| -> f64 {
                img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize) as f64
            };
            gx[y * w + x] =
                (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[y * w + x] =
                (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }

    let mut xx = vec![0.0f64; w * h];
    let mut yy = vec![0.0f64; w * h];
    let mut xy = vec![0.0f64; w * h];
    for i in 0..w * h {
        xx[i] = gx[i] * gx[i];
        yy[i] = gy[i] * gy[i];
        xy[i] = gx[i] * gy[i];
    }

    let kernel = gaussian_kernel(window_sigma);
    let radius = kernel.len() / 2;
    let margin = 1 + radius;

    let sxx = smooth_valid(&xx, w, h, &kernel, 1);
    let syy = smooth_valid(&yy, w, h, &kernel, 1);
    let sxy = smooth_valid(&xy, w, h, &kernel, 1);

    let mut response = vec![0.0f64; w * h];
    if w > 2 * margin && h > 2 * margin {
        for y in margin..h - margin {
            for x in margin..w - margin {
                let i = y * w + x;
                let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
                let trace = sxx[i] + syy[i];
                response[i] = det - k * trace * trace;
            }
        }
    }
    Ok(CornernessMap {
        width: w,
        height: h,
        response,
    })
}

/// Normalized Gaussian taps over `[-ceil(3 sigma), +ceil(3 sigma)]`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable convolution evaluated only where the kernel (and the `inset`
/// ring of invalid gradient pixels) fits entirely inside the image.
fn smooth_valid(src: &[f64], w: usize, h: usize, kernel: &[f64], inset: usize) -> Vec<f64> {
    let radius = kernel.len() / 2;
    let mut tmp = vec![0.0f64; w * h];
    // horizontal pass over rows that have valid gradients
    for y in inset..h.saturating_sub(inset) {
        for x in (inset + radius)..w.saturating_sub(inset + radius) {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * src[y * w + x + t - radius];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in (inset + radius)..h.saturating_sub(inset + radius) {
        for x in (inset + radius)..w.saturating_sub(inset + radius) {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + t - radius) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Non-maximum suppression over a Chebyshev neighborhood followed by per-axis
/// quadratic subpixel refinement.
///
/// A pixel survives when its response reaches `min_response`, is positive,
/// and strictly exceeds every neighbor within `radius`; equal responses are
/// resolved in favor of the row-major earlier pixel. Survivors are refined by
/// a 1D parabola fit in x and y (offsets clamped to half a pixel) and
/// reported in descending response order.
pub fn local_maxima(map: &CornernessMap, radius: usize, min_response: f64) -> Vec<Corner> {
    let radius = radius.max(1);
    let (w, h) = (map.width, map.height);
    let mut out = Vec::new();
    for y in 0..h {
        'pixel: for x in 0..w {
            let r = map.response[y * w + x];
            if r < min_response || r <= 0.0 {
                continue;
            }
            let y_lo = y.saturating_sub(radius);
            let y_hi = (y + radius).min(h - 1);
            let x_lo = x.saturating_sub(radius);
            let x_hi = (x + radius).min(w - 1);
            for ny in y_lo..=y_hi {
                for nx in x_lo..=x_hi {
                    if nx == x && ny == y {
                        continue;
                    }
                    let nr = map.response[ny * w + nx];
                    if nr > r || (nr == r && (ny, nx) < (y, x)) {
                        continue 'pixel;
                    }
                }
            }
            let dx = if x >= 1 && x + 1 < w {
                parabola_offset(map.response[y * w + x - 1], r, map.response[y * w + x + 1])
            } else {
                0.0
            };
            let dy = if y >= 1 && y + 1 < h {
                parabola_offset(
                    map.response[(y - 1) * w + x],
                    r,
                    map.response[(y + 1) * w + x],
                )
            } else {
                0.0
            };
            out.push(Corner {
                x: x as f64 + 0.5 + dx,
                y: y as f64 + 0.5 + dy,
                response: r,
            });
        }
    }
    out.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
    });
    out
}

/// Vertex offset of the parabola through `(-1, f0), (0, f1), (1, f2)`,
/// clamped to half a pixel.
fn parabola_offset(f0: f64, f1: f64, f2: f64) -> f64 {
    let denom = f0 - 2.0 * f1 + f2;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (f0 - f2) / denom).clamp(-0.5, 0.5)
}

/// Group corners by component and assemble one candidate quad per component
/// whose area lies within `[min_area, max_area]`.
///
/// A corner belongs to a component when it falls inside the component's
/// bounding box inflated by two pixels and its nearest labeled pixel within
/// two pixels carries that label. Among the assigned corners, the four
/// spanning the largest quadrilateral on their convex hull become the quad;
/// picking extremal corners keeps the strong interior junctions of the
/// marker pattern from displacing the outline corners, which respond much
/// more weakly.
pub fn extract_quads(
    labels: &LabelMap,
    corners: &[Corner],
    min_area: usize,
    max_area: usize,
) -> QuadExtraction {
    let mut result = QuadExtraction::default();
    let eligible: Vec<&crate::imgproc::Component> = labels
        .components
        .iter()
        .filter(|c| c.area >= min_area && c.area <= max_area)
        .collect();
    if eligible.is_empty() {
        return result;
    }

    // Assign each corner to at most one component label.
    let mut assigned: Vec<Option<u32>> = Vec::with_capacity(corners.len());
    for c in corners {
        assigned.push(nearest_label_within(labels, c.x, c.y, 2.0));
    }

    for comp in eligible {
        let (x0, y0, x1, y1) = comp.bbox;
        let (bx0, by0) = (x0 as f64 - 2.0, y0 as f64 - 2.0);
        let (bx1, by1) = (x1 as f64 + 3.0, y1 as f64 + 3.0);
        let cands: Vec<&Corner> = corners
            .iter()
            .zip(&assigned)
            .filter(|(c, a)| {
                **a == Some(comp.label) && c.x >= bx0 && c.x <= bx1 && c.y >= by0 && c.y <= by1
            })
            .map(|(c, _)| c)
            .collect();
        if cands.len() < 4 {
            result.skipped.push(SkippedComponent {
                component_label: comp.label,
                reason: SkipReason::NotEnoughCorners { found: cands.len() },
            });
            continue;
        }
        let pts: Vec<[f64; 2]> = cands.iter().map(|c| [c.x, c.y]).collect();
        let mut hull = convex_hull(&pts);
        // bound the quadrilateral search; keep the most extremal hull points
        if hull.len() > 24 {
            let cx = hull.iter().map(|p| p[0]).sum::<f64>() / hull.len() as f64;
            let cy = hull.iter().map(|p| p[1]).sum::<f64>() / hull.len() as f64;
            let mut by_dist: Vec<(f64, [f64; 2])> = hull
                .iter()
                .map(|p| (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)), *p))
                .collect();
            by_dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let keep: Vec<[f64; 2]> = by_dist.iter().take(24).map(|(_, p)| *p).collect();
            hull = convex_hull(&keep);
        }
        if hull.len() < 4 {
            result.skipped.push(SkippedComponent {
                component_label: comp.label,
                reason: SkipReason::NonConvex,
            });
            continue;
        }
        let four = largest_quad_on_hull(&hull);
        let vertices = order_ccw_from_top(four);
        match validate_quad(&vertices) {
            Ok(()) => result.quads.push(Quad {
                vertices,
                component_label: comp.label,
            }),
            Err(reason) => result.skipped.push(SkippedComponent {
                component_label: comp.label,
                reason,
            }),
        }
    }
    result
}

/// Label of the closest labeled pixel within `max_dist` of the continuous
/// position, or `None`. Pixel centers are at `(px + 0.5, py + 0.5)`.
fn nearest_label_within(labels: &LabelMap, x: f64, y: f64, max_dist: f64) -> Option<u32> {
    let (w, h) = (labels.width(), labels.height());
    let reach = max_dist.ceil() as i64 + 1;
    let cx = (x - 0.5).round() as i64;
    let cy = (y - 0.5).round() as i64;
    let mut best: Option<(f64, u32)> = None;
    for py in (cy - reach).max(0)..=(cy + reach).min(h as i64 - 1) {
        for px in (cx - reach).max(0)..=(cx + reach).min(w as i64 - 1) {
            let l = labels.label_at(px as usize, py as usize);
            if l == 0 {
                continue;
            }
            let dx = px as f64 + 0.5 - x;
            let dy = py as f64 + 0.5 - y;
            let d2 = dx * dx + dy * dy;
            if d2 <= max_dist * max_dist && best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, l));
            }
        }
    }
    best.map(|(_, l)| l)
}

/// Andrew monotone chain; returns hull vertices in counter-clockwise order
/// (positive shoelace), strictly convex corners only.
fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut sorted: Vec<[f64; 2]> = pts.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    if sorted.len() < 3 {
        return sorted;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| -> f64 {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &sorted {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in sorted.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Choose the 4 hull vertices (hull order preserved) spanning the largest
/// quadrilateral. Brute force; candidate counts are capped upstream.
fn largest_quad_on_hull(hull: &[[f64; 2]]) -> [[f64; 2]; 4] {
    let n = hull.len();
    let mut best = ([0usize, 1, 2, 3.min(n - 1)], f64::NEG_INFINITY);
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                for l in (k + 1)..n {
                    let quad = [hull[i], hull[j], hull[k], hull[l]];
                    let area = shoelace(&quad);
                    if area > best.1 {
                        best = ([i, j, k, l], area);
                    }
                }
            }
        }
    }
    let [i, j, k, l] = best.0;
    [hull[i], hull[j], hull[k], hull[l]]
}

fn shoelace(pts: &[[f64; 2]; 4]) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let a = pts[i];
        let b = pts[(i + 1) % 4];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc / 2.0
}

/// Sort four points counter-clockwise around their centroid and rotate the
/// cycle to start at the smallest `(y, x)` vertex.
pub(crate) fn order_ccw_from_top(mut pts: [[f64; 2]; 4]) -> [[f64; 2]; 4] {
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    pts.sort_by(|a, b| {
        let aa = (a[1] - cy).atan2(a[0] - cx);
        let ab = (b[1] - cy).atan2(b[0] - cx);
        aa.partial_cmp(&ab).unwrap()
    });
    let mut start = 0;
    for i in 1..4 {
        if (pts[i][1], pts[i][0]) < (pts[start][1], pts[start][0]) {
            start = i;
        }
    }
    [
        pts[start],
        pts[(start + 1) % 4],
        pts[(start + 2) % 4],
        pts[(start + 3) % 4],
    ]
}

pub(crate) fn validate_quad(v: &[[f64; 2]; 4]) -> Result<(), SkipReason> {
    for i in 0..4 {
        for j in (i + 1)..4 {
            let d = ((v[i][0] - v[j][0]).powi(2) + (v[i][1] - v[j][1]).powi(2)).sqrt();
            if d <= 2.0 {
                return Err(SkipReason::VerticesTooClose);
            }
        }
    }
    for i in 0..4 {
        let a = v[i];
        let b = v[(i + 1) % 4];
        let c = v[(i + 2) % 4];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross <= 0.0 {
            return Err(SkipReason::NonConvex);
        }
    }
    Ok(())
}

/// Refine quad vertices by intersecting lines fitted to the intensity edges
/// along each side.
///
/// For every side, gradient-centroid edge crossings are sampled along the
/// middle 60% of the segment and a total-least-squares line fitted through
/// them; adjacent lines intersect in the refined corners. Falls back to the
/// input vertex (or the whole input quad) whenever a side offers too little
/// contrast, an intersection is ill-conditioned, a vertex would move more
/// than 3 px, or the refined quad fails validation.
pub fn refine_quad(img: &GrayImage, quad: &Quad) -> Quad {
    let v = &quad.vertices;
    let mut lines: Vec<Option<([f64; 2], [f64; 2])>> = Vec::with_capacity(4);
    for i in 0..4 {
        lines.push(fit_edge_line(img, v[i], v[(i + 1) % 4]));
    }
    let mut refined = *v;
    for i in 0..4 {
        // vertex i joins side (i-1) -> i
        let prev = lines[(i + 3) % 4];
        let next = lines[i];
        if let (Some(l1), Some(l2)) = (prev, next) {
            if let Some(p) = intersect_lines(l1, l2) {
                let d = ((p[0] - v[i][0]).powi(2) + (p[1] - v[i][1]).powi(2)).sqrt();
                if d <= 3.0 {
                    refined[i] = p;
                }
            }
        }
    }
    let ordered = order_ccw_from_top(refined);
    if validate_quad(&ordered).is_ok() {
        Quad {
            vertices: ordered,
            component_label: quad.component_label,
        }
    } else {
        quad.clone()
    }
}

/// Intersection of two `(point, direction)` lines, `None` when near-parallel.
fn intersect_lines(l1: ([f64; 2], [f64; 2]), l2: ([f64; 2], [f64; 2])) -> Option<[f64; 2]> {
    let ((p1, d1), (p2, d2)) = (l1, l2);
    let denom = d1[0] * d2[1] - d1[1] * d2[0];
    if denom.abs() < 1e-6 {
        return None;
    }
    let dx = p2[0] - p1[0];
    let dy = p2[1] - p1[1];
    let s = (dx * d2[1] - dy * d2[0]) / denom;
    Some([p1[0] + s * d1[0], p1[1] + s * d1[1]])
}

/// Fit a line `(point, unit direction)` to edge crossings along the segment.
fn fit_edge_line(img: &GrayImage, a: [f64; 2], b: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if len < 8.0 {
        return None;
    }
    let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    let normal = [dir[1], -dir[0]];
    let samples = (len / 4.0).clamp(4.0, 16.0) as usize;
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(samples);
    for s in 0..samples {
        let t = 0.2 + 0.6 * s as f64 / (samples - 1).max(1) as f64;
        let m = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        if let Some(offset) = edge_crossing_offset(img, m, normal) {
            pts.push([m[0] + offset * normal[0], m[1] + offset * normal[1]]);
        }
    }
    if pts.len() < samples.div_ceil(2).max(3) {
        return None;
    }
    // total least squares through the centroid
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &pts {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(([cx, cy], [theta.cos(), theta.sin()]))
}

/// Subpixel offset of the strongest intensity edge along `normal` through
/// `m`, from the centroid of absolute intensity differences. `None` when the
/// profile leaves the image or carries no contrast.
fn edge_crossing_offset(img: &GrayImage, m: [f64; 2], normal: [f64; 2]) -> Option<f64> {
    const HALF_SPAN: f64 = 3.0;
    const STEP: f64 = 0.5;
    let steps = (2.0 * HALF_SPAN / STEP) as usize; // 12 intervals, 13 taps
    let mut taps = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = -HALF_SPAN + i as f64 * STEP;
        let x = m[0] + t * normal[0];
        let y = m[1] + t * normal[1];
        taps.push(img.sample_bilinear(x, y, None)?);
    }
    let mut weight_sum = 0.0;
    let mut weighted_t = 0.0;
    let mut max_diff: f64 = 0.0;
    for i in 0..steps {
        let g = (taps[i + 1] - taps[i]).abs();
        let t_mid = -HALF_SPAN + (i as f64 + 0.5) * STEP;
        weight_sum += g;
        weighted_t += g * t_mid;
        max_diff = max_diff.max(g);
    }
    if max_diff < 8.0 || weight_sum <= 0.0 {
        return None;
    }
    Some(weighted_t / weight_sum)
}
