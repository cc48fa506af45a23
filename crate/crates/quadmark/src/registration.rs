//! Projective rectification of marker candidates and identification against a
//! template library.
//!
//! A detected quad is warped back to a canonical square, discretized into a
//! bit grid, and compared against every library template under all four
//! quarter-turn placements. The winning rotation index feeds the pose stage,
//! which uses it to pair quad vertices with canonical marker corners.

use thiserror::Error;

use crate::corners::Quad;
use crate::imgproc::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("grid too fine: {cells} cells over {pixels} px leaves cells under 4 px")]
    GridTooFine { cells: usize, pixels: usize },
    #[error("code grid {code} does not match library grid {library}")]
    GridMismatch { code: usize, library: usize },
}

/// 3x3 plane-to-plane projective map, defined up to scale.
/// Normalized so `h[2][2] = 1` whenever that entry is representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub h: [[f64; 3]; 3],
}

impl Homography {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let h = &self.h;
        let u = h[0][0] * x + h[0][1] * y + h[0][2];
        let v = h[1][0] * x + h[1][1] * y + h[1][2];
        let w = h[2][0] * x + h[2][1] * y + h[2][2];
        (u / w, v / w)
    }

    fn normalized(mut self) -> Self {
        let s = self.h[2][2];
        if s.abs() > 1e-12 {
            for row in self.h.iter_mut() {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        self
    }
}

/// Binary identity of a marker: a `G x G` bit grid whose outermost ring is
/// all zeros (the black border).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerTemplate {
    pub id: u32,
    pub grid: usize,
    /// Row-major bits, 0 black / 1 white, length `grid * grid`.
    pub cells: Vec<u8>,
}

impl MarkerTemplate {
    pub fn cell(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.grid + col]
    }

    /// Grid rotated by one quarter turn counter-clockwise.
    pub fn rotated_ccw(&self) -> MarkerTemplate {
        MarkerTemplate {
            id: self.id,
            grid: self.grid,
            cells: rotate_ccw(&self.cells, self.grid),
        }
    }
}

/// Bit grid extracted from a rectified image region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerCode {
    pub grid: usize,
    pub bits: Vec<u8>,
}

/// Identification outcome: which template matched, how many quarter-turn
/// rotations (counter-clockwise) were applied to the template, and at what
/// Hamming distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchResult {
    pub marker_id: u32,
    pub rotation_index: u8,
    pub hamming: u32,
}

pub(crate) fn rotate_ccw(cells: &[u8], g: usize) -> Vec<u8> {
    let mut out = vec![0u8; g * g];
    for r in 0..g {
        for c in 0..g {
            out[r * g + c] = cells[c * g + (g - 1 - r)];
        }
    }
    out
}

fn hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(x, y)| u32::from(x != y)).sum()
}

/// Exact four-point homography mapping `src[i]` onto `dst[i]`.
///
/// Points are conditioned first (centroid to the origin, mean distance
/// sqrt(2)) and the result denormalized, so the linear solve stays well
/// behaved for pixel-scale inputs.
pub fn homography_dlt(
    src: &[[f64; 2]; 4],
    dst: &[[f64; 2]; 4],
) -> Result<Homography, RegistrationError> {
    check_no_collinear_triple(src)?;
    check_no_collinear_triple(dst)?;
    let (src_n, t_src) = normalize_points(src);
    let (dst_n, t_dst) = normalize_points(dst);

    // 8x8 system for the normalized homography with h[2][2] fixed at 1.
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = (src_n[i][0], src_n[i][1]);
        let (u, v) = (dst_n[i][0], dst_n[i][1]);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
    }
    let h8 = solve_8x8(&mut a).ok_or(RegistrationError::DegenerateConfiguration(
        "singular correspondence system",
    ))?;
    let hn = Homography {
        h: [
            [h8[0], h8[1], h8[2]],
            [h8[3], h8[4], h8[5]],
            [h8[6], h8[7], 1.0],
        ],
    };
    // Denormalize: H = T_dst^-1 * Hn * T_src.
    let h = mat_mul(&mat_mul(&invert_similarity(&t_dst), &hn.h), &t_src);
    let out = Homography { h }.normalized();
    if det3(&out.h).abs() <= 1e-12 {
        return Err(RegistrationError::DegenerateConfiguration(
            "homography is singular",
        ));
    }
    Ok(out)
}

fn check_no_collinear_triple(pts: &[[f64; 2]; 4]) -> Result<(), RegistrationError> {
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let scale = (max_x - min_x).max(max_y - min_y).max(1e-30);
    for i in 0..4 {
        for j in (i + 1)..4 {
            for k in (j + 1)..4 {
                let cross = (pts[j][0] - pts[i][0]) * (pts[k][1] - pts[i][1])
                    - (pts[j][1] - pts[i][1]) * (pts[k][0] - pts[i][0]);
                if cross.abs() <= 1e-9 * scale * scale {
                    return Err(RegistrationError::DegenerateConfiguration(
                        "three points are collinear",
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Similarity transform taking the points to centroid 0, mean norm sqrt(2).
/// Returns the transformed points and the 3x3 transform itself.
fn normalize_points(pts: &[[f64; 2]; 4]) -> ([[f64; 2]; 4], [[f64; 3]; 3]) {
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    let mean_dist = pts
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / 4.0;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    let mut out = [[0.0; 2]; 4];
    for (o, p) in out.iter_mut().zip(pts) {
        o[0] = (p[0] - cx) * s;
        o[1] = (p[1] - cy) * s;
    }
    let t = [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]];
    (out, t)
}

fn invert_similarity(t: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let s = t[0][0];
    [
        [1.0 / s, 0.0, -t[0][2] / s],
        [0.0, 1.0 / s, -t[1][2] / s],
        [0.0, 0.0, 1.0],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Gaussian elimination with partial pivoting on the 8x9 augmented system.
#[allow(clippy::needless_range_loop)]
fn solve_8x8(a: &mut [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let mut pivot = col;
        for row in (col + 1)..8 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in (col + 1)..8 {
            let f = a[row][col] / a[col][col];
            for c in col..9 {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    let mut h = [0.0f64; 8];
    for row in (0..8).rev() {
        let mut sum = a[row][8];
        for c in (row + 1)..8 {
            sum -= a[row][c] * h[c];
        }
        h[row] = sum / a[row][row];
    }
    Some(h)
}

/// Warp the quad interior back to an `n x n` canonical square.
///
/// The homography maps square corners `(0,0), (n,0), (n,n), (0,n)` onto the
/// quad vertices; each output pixel samples the source bilinearly at the
/// image of its center. Samples falling outside the source read as 255.
pub fn rectify(img: &GrayImage, quad: &Quad, n: usize) -> Result<GrayImage, RegistrationError> {
    assert!(n >= 1);
    let nf = n as f64;
    let square = [[0.0, 0.0], [nf, 0.0], [nf, nf], [0.0, nf]];
    let h = homography_dlt(&square, &quad.vertices)?;
    let mut out = GrayImage::new(n, n);
    for y in 0..n {
        for x in 0..n {
            let (u, v) = h.apply(x as f64 + 0.5, y as f64 + 0.5);
            let s = img
                .sample_bilinear(u, v, Some(255.0))
                .expect("outside taps substituted");
            out.set(x, y, s.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

/// Discretize a rectified marker image into a `g x g` bit grid by cell mean:
/// a cell reads 1 when its mean intensity is at least 128.
pub fn decode_code(rect: &GrayImage, g: usize) -> Result<MarkerCode, RegistrationError> {
    let n = rect.width();
    if g == 0 || n / g < 4 {
        return Err(RegistrationError::GridTooFine {
            cells: g,
            pixels: n,
        });
    }
    let mut bits = vec![0u8; g * g];
    for row in 0..g {
        let y0 = row * n / g;
        let y1 = (row + 1) * n / g;
        for col in 0..g {
            let x0 = col * n / g;
            let x1 = (col + 1) * n / g;
            let mut sum: u64 = 0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += rect.get(x, y) as u64;
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as u64;
            bits[row * g + col] = u8::from(sum >= 128 * count);
        }
    }
    Ok(MarkerCode { grid: g, bits })
}

/// Compare a code against every template under rotation indices 0..4 and
/// return the best match at Hamming distance `tau` or less.
///
/// The rotation is applied to the template, so `rotation_index` counts the
/// counter-clockwise quarter turns that bring the stored template onto the
/// observed code. Libraries are validated to be rotation-distinct at load
/// time, which makes the minimum unique.
pub fn match_template(
    code: &MarkerCode,
    library: &[MarkerTemplate],
    tau: u32,
) -> Result<Option<MatchResult>, RegistrationError> {
    let mut best: Option<MatchResult> = None;
    for template in library {
        if template.grid != code.grid {
            return Err(RegistrationError::GridMismatch {
                code: code.grid,
                library: template.grid,
            });
        }
        let mut cells = template.cells.clone();
        for rotation_index in 0..4u8 {
            if rotation_index > 0 {
                cells = rotate_ccw(&cells, template.grid);
            }
            let d = hamming(&code.bits, &cells);
            if best.is_none_or(|b| d < b.hamming) {
                best = Some(MatchResult {
                    marker_id: template.id,
                    rotation_index,
                    hamming: d,
                });
            }
        }
    }
    Ok(best.filter(|b| b.hamming <= tau))
}
