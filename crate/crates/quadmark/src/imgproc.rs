//! Raster preprocessing: grayscale conversion, thresholding and connected
//! component labeling with per-component statistics.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImgprocError {
    /// Every pixel has the same value; no threshold separates anything.
    /// Carries that value so callers may still binarize with it.
    #[error("degenerate histogram: all pixels equal {0}")]
    DegenerateHistogram(u8),
}

/// 8-bit RGB image, row-major interleaved triples.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1);
        RgbImage {
            width,
            height,
            data: vec![0; 3 * width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        if width >= 1 && height >= 1 && data.len() == 3 * width * height {
            Some(RgbImage {
                width,
                height,
                data,
            })
        } else {
            None
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1);
        GrayImage {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1);
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        if width >= 1 && height >= 1 && data.len() == width * height {
            Some(GrayImage {
                width,
                height,
                data,
            })
        } else {
            None
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous coordinates; pixel `(x, y)` has its
    /// center at `(x + 0.5, y + 0.5)`. Taps outside the image read as
    /// `outside` when given, otherwise the sample is rejected.
    pub fn sample_bilinear(&self, u: f64, v: f64, outside: Option<f64>) -> Option<f64> {
        let fx = u - 0.5;
        let fy = v - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let wx = fx - x0;
        let wy = fy - y0;
        let mut acc = 0.0;
        for (dy, wyv) in [(0i64, 1.0 - wy), (1, wy)] {
            for (dx, wxv) in [(0i64, 1.0 - wx), (1, wx)] {
                let px = x0 as i64 + dx;
                let py = y0 as i64 + dy;
                let tap = if px >= 0
                    && py >= 0
                    && (px as usize) < self.width
                    && (py as usize) < self.height
                {
                    self.get(px as usize, py as usize) as f64
                } else {
                    outside?
                };
                acc += wxv * wyv * tap;
            }
        }
        Some(acc)
    }
}

/// Image of {0, 1} values: 0 black, 1 white.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryImage {
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        if width >= 1 && height >= 1 && data.len() == width * height && data.iter().all(|&v| v <= 1)
        {
            Some(BinaryImage {
                width,
                height,
                data,
            })
        } else {
            None
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// 4- or 8-neighborhood adjacency for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Pixel-count, bounding-box and centroid statistics of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
    /// Mean of member pixel indices.
    pub centroid: (f64, f64),
}

/// Dense labeling of the foreground pixels: 0 is background, components are
/// numbered 1..=N in row-major first-touch order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    pub components: Vec<Component>,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// BT.601 luma with exact round-half-up, computed in integer arithmetic:
/// `(299 R + 587 G + 114 B + 500) / 1000`.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let mut data = Vec::with_capacity(img.width * img.height);
    for px in img.data.chunks_exact(3) {
        let luma = (299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32 + 500) / 1000;
        data.push(luma.min(255) as u8);
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Binarize: values below `t` go black (0), values at or above go white (1).
pub fn threshold(img: &GrayImage, t: u8) -> BinaryImage {
    let data = img.data.iter().map(|&v| u8::from(v >= t)).collect();
    BinaryImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Threshold maximizing the between-class variance of the 256-bin histogram,
/// ties resolved toward the smaller value.
pub fn otsu_threshold(img: &GrayImage) -> Result<u8, ImgprocError> {
    let mut hist = [0u64; 256];
    for &v in &img.data {
        hist[v as usize] += 1;
    }
    if let Some(only) = single_occupied_bin(&hist) {
        return Err(ImgprocError::DegenerateHistogram(only));
    }
    let total: u64 = img.data.len() as u64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &n)| v as f64 * n as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_score = f64::NEG_INFINITY;
    let mut w0: u64 = 0; // pixels strictly below t
    let mut sum0: f64 = 0.0;
    for t in 0..=255usize {
        if t > 0 {
            w0 += hist[t - 1];
            sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        }
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mu0 = sum0 / w0 as f64;
        let mu1 = (total_sum - sum0) / w1 as f64;
        let score = w0 as f64 * w1 as f64 * (mu0 - mu1) * (mu0 - mu1);
        if score > best_score {
            best_score = score;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

fn single_occupied_bin(hist: &[u64; 256]) -> Option<u8> {
    let mut found = None;
    for (v, &n) in hist.iter().enumerate() {
        if n > 0 {
            if found.is_some() {
                return None;
            }
            found = Some(v as u8);
        }
    }
    found
}

/// Two-pass union-find labeling of all pixels equal to `foreground`.
/// Labels are renumbered densely in row-major first-touch order, so the
/// output is reproducible byte for byte.
pub fn label_components(bin: &BinaryImage, foreground: u8, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (bin.width, bin.height);
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0]; // index 0 unused (background)

    let find = |parent: &mut Vec<u32>, mut i: u32| -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    };

    // Pass 1: provisional labels, merging with already-visited neighbors.
    for y in 0..h {
        for x in 0..w {
            if bin.data[y * w + x] != foreground {
                continue;
            }
            let mut neighbor_roots = [0u32; 4];
            let mut n_count = 0;
            let mut consider = |px: i64, py: i64, parent: &mut Vec<u32>| {
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    let l = provisional[py as usize * w + px as usize];
                    if l != 0 {
                        neighbor_roots[n_count] = find(parent, l);
                        n_count += 1;
                    }
                }
            };
            let (xi, yi) = (x as i64, y as i64);
            consider(xi - 1, yi, &mut parent);
            consider(xi, yi - 1, &mut parent);
            if connectivity == Connectivity::Eight {
                consider(xi - 1, yi - 1, &mut parent);
                consider(xi + 1, yi - 1, &mut parent);
            }
            let label = if n_count == 0 {
                let fresh = parent.len() as u32;
                parent.push(fresh);
                fresh
            } else {
                let mut min = neighbor_roots[0];
                for &r in &neighbor_roots[1..n_count] {
                    if r < min {
                        min = r;
                    }
                }
                for &r in &neighbor_roots[..n_count] {
                    if r != min {
                        parent[r as usize] = min;
                    }
                }
                min
            };
            provisional[y * w + x] = label;
        }
    }

    // Pass 2: resolve roots, renumber densely, gather statistics.
    let mut dense_of_root: Vec<u32> = vec![0; parent.len()];
    let mut labels = vec![0u32; w * h];
    let mut components: Vec<Component> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = provisional[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l);
            let dense = if dense_of_root[root as usize] == 0 {
                let next = components.len() as u32 + 1;
                dense_of_root[root as usize] = next;
                components.push(Component {
                    label: next,
                    area: 0,
                    bbox: (x, y, x, y),
                    centroid: (0.0, 0.0),
                });
                sums.push((0.0, 0.0));
                next
            } else {
                dense_of_root[root as usize]
            };
            labels[y * w + x] = dense;
            let comp = &mut components[dense as usize - 1];
            comp.area += 1;
            comp.bbox.0 = comp.bbox.0.min(x);
            comp.bbox.1 = comp.bbox.1.min(y);
            comp.bbox.2 = comp.bbox.2.max(x);
            comp.bbox.3 = comp.bbox.3.max(y);
            let s = &mut sums[dense as usize - 1];
            s.0 += x as f64;
            s.1 += y as f64;
        }
    }
    for (comp, s) in components.iter_mut().zip(&sums) {
        comp.centroid = (s.0 / comp.area as f64, s.1 / comp.area as f64);
    }
    LabelMap {
        width: w,
        height: h,
        labels,
        components,
    }
}
