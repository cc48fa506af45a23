//! Ground-truth scene renderer: a marker at a known pose drawn through a
//! pinhole camera into a grayscale image, with optional seeded Gaussian
//! noise. The round-trip tests drive the whole detection pipeline against
//! images produced here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::imgproc::GrayImage;
use crate::pose::{CameraIntrinsics, MarkerGeometry};
use crate::registration::MarkerTemplate;

/// Intensity of black marker cells; keeps thresholding nontrivial.
pub const INK_LEVEL: u8 = 20;
/// Intensity of white marker cells.
pub const PAPER_LEVEL: u8 = 235;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("point is behind the camera (z = {z:.4})")]
    BehindCamera { z: f64 },
    #[error("marker projects outside the image or too close to its border")]
    MarkerOutOfFrame,
    #[error("projected marker area {area:.1} px^2 is below the minimum of 400")]
    MarkerTooSmall { area: f64 },
}

/// A marker placement to render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePose {
    /// Marker frame into camera frame; depth must be positive.
    pub pose: Pose,
    pub template_id: u32,
    /// Intensity of everything that is not marker.
    pub background_level: u8,
    /// Standard deviation of the additive Gaussian noise, in intensity units.
    pub noise_sigma: f64,
}

/// Pinhole projection of a camera-space point to continuous pixel
/// coordinates: `u = fx x / z + cx`, `v = fy y / z + cy`.
pub fn project_point(cam: &CameraIntrinsics, p: Vec3) -> Result<(f64, f64), SynthError> {
    if p.z <= 1e-9 {
        return Err(SynthError::BehindCamera { z: p.z });
    }
    Ok((cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy))
}

/// Render the marker into a fresh image.
///
/// Every pixel touched by the projected quad is sampled 2x2 supersampled:
/// each subsample maps back to the marker plane through the analytic inverse
/// of `K [r1 r2 t]` and reads the template cell under it (0 bits paint
/// [`INK_LEVEL`], 1 bits [`PAPER_LEVEL`]). With `noise_sigma > 0`, seeded
/// Gaussian noise is added to the whole image and clamped to `[0, 255]`;
/// the output is byte-reproducible for a fixed seed.
#[allow(clippy::needless_range_loop)]
pub fn render_marker(
    scene: &ScenePose,
    template: &MarkerTemplate,
    geom: &MarkerGeometry,
    cam: &CameraIntrinsics,
    seed: u64,
) -> Result<GrayImage, SynthError> {
    let corners = geom.canonical_corners();
    let mut projected = [[0.0f64; 2]; 4];
    for (px, c) in projected.iter_mut().zip(corners) {
        let (u, v) = project_point(cam, scene.pose.transform_point(c))?;
        *px = [u, v];
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    if projected
        .iter()
        .any(|p| p[0] < 2.0 || p[1] < 2.0 || p[0] > w - 2.0 || p[1] > h - 2.0)
    {
        return Err(SynthError::MarkerOutOfFrame);
    }
    let area = shoelace_abs(&projected);
    if area < 400.0 {
        return Err(SynthError::MarkerTooSmall { area });
    }

    // Forward map: marker plane (x, y, 1) -> pixel homogeneous, P = K [r1 r2 t].
    let r = &scene.pose.rotation.m;
    let t = scene.pose.translation;
    let mut p = [
        [r[0][0], r[0][1], t.x],
        [r[1][0], r[1][1], t.y],
        [r[2][0], r[2][1], t.z],
    ];
    for j in 0..3 {
        p[0][j] = cam.fx * p[0][j] + cam.cx * p[2][j];
        p[1][j] = cam.fy * p[1][j] + cam.cy * p[2][j];
    }
    let p_inv = invert3(&p).ok_or(SynthError::MarkerOutOfFrame)?;

    let mut img = GrayImage::filled(cam.width, cam.height, scene.background_level);
    let half = geom.side / 2.0;
    let g = template.grid;
    let cell_size = geom.side / g as f64;

    let x_lo = projected
        .iter()
        .map(|p| p[0])
        .fold(f64::MAX, f64::min)
        .floor()
        .max(0.0) as usize;
    let x_hi = (projected
        .iter()
        .map(|p| p[0])
        .fold(f64::MIN, f64::max)
        .ceil() as usize)
        .min(cam.width - 1);
    let y_lo = projected
        .iter()
        .map(|p| p[1])
        .fold(f64::MAX, f64::min)
        .floor()
        .max(0.0) as usize;
    let y_hi = (projected
        .iter()
        .map(|p| p[1])
        .fold(f64::MIN, f64::max)
        .ceil() as usize)
        .min(cam.height - 1);

    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let mut acc = 0.0f64;
            for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                let u = x as f64 + ox;
                let v = y as f64 + oy;
                let mx = p_inv[0][0] * u + p_inv[0][1] * v + p_inv[0][2];
                let my = p_inv[1][0] * u + p_inv[1][1] * v + p_inv[1][2];
                let mw = p_inv[2][0] * u + p_inv[2][1] * v + p_inv[2][2];
                let (mx, my) = (mx / mw, my / mw);
                acc += if mx.abs() <= half && my.abs() <= half {
                    let col = (((mx + half) / cell_size) as usize).min(g - 1);
                    let row = (((my + half) / cell_size) as usize).min(g - 1);
                    if template.cell(row, col) == 1 {
                        PAPER_LEVEL as f64
                    } else {
                        INK_LEVEL as f64
                    }
                } else {
                    scene.background_level as f64
                };
            }
            img.set(x, y, (acc / 4.0).round() as u8);
        }
    }

    if scene.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (img.width(), img.height());
        for y in 0..h {
            for x in 0..w {
                let n = gaussian_sample(&mut rng) * scene.noise_sigma;
                let v = (img.get(x, y) as f64 + n).round().clamp(0.0, 255.0);
                img.set(x, y, v as u8);
            }
        }
    }
    Ok(img)
}

/// One standard normal draw via Box-Muller.
fn gaussian_sample(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = loop {
        let u = rng.random::<f64>();
        if u > 1e-12 {
            break u;
        }
    };
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn shoelace_abs(pts: &[[f64; 2]; 4]) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let a = pts[i];
        let b = pts[(i + 1) % 4];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    (acc / 2.0).abs()
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv = 1.0 / det;
    Some([
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv,
        ],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;
    use crate::synth;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 800.0,
            fy: 800.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    fn test_template() -> MarkerTemplate {
        let rows = [
            "00000000", "01100110", "00011010", "01010010", "00100110", "01101010", "00010100",
            "00000000",
        ];
        MarkerTemplate {
            id: 3,
            grid: 8,
            cells: rows.concat().bytes().map(|b| b - b'0').collect(),
        }
    }

    fn frontoparallel_scene() -> ScenePose {
        ScenePose {
            pose: Pose::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, 1.0)),
            template_id: 3,
            background_level: 230,
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn project_point_examples() {
        assert_eq!(
            project_point(&cam(), Vec3::new(0.0, 0.0, 1.0)).unwrap(),
            (320.0, 240.0)
        );
        assert_eq!(
            project_point(&cam(), Vec3::new(0.1, 0.0, 1.0)).unwrap(),
            (400.0, 240.0)
        );
        assert!(matches!(
            project_point(&cam(), Vec3::new(0.0, 0.0, -1.0)),
            Err(SynthError::BehindCamera { .. })
        ));
    }

    #[test]
    fn frontoparallel_marker_covers_expected_block() {
        let img = render_marker(
            &frontoparallel_scene(),
            &test_template(),
            &MarkerGeometry::new(0.1),
            &cam(),
            0,
        )
        .unwrap();
        // the dark quad must span pixels 280..=359 in x and 200..=279 in y
        assert!(img.get(280, 240) < 128);
        assert!(img.get(359, 240) < 128);
        assert!(img.get(279, 240) > 128);
        assert!(img.get(360, 240) > 128);
        assert!(img.get(320, 200) < 128);
        assert!(img.get(320, 279) < 128);
        assert!(img.get(320, 199) > 128);
        assert!(img.get(320, 280) > 128);
        assert_eq!(img.get(0, 0), 230);
    }

    #[test]
    fn render_is_deterministic_and_noise_depends_on_seed_only() {
        let geom = MarkerGeometry::new(0.1);
        let mut scene = frontoparallel_scene();
        scene.noise_sigma = 4.0;
        let a = render_marker(&scene, &test_template(), &geom, &cam(), 42).unwrap();
        let b = render_marker(&scene, &test_template(), &geom, &cam(), 42).unwrap();
        assert_eq!(a, b);
        let c = render_marker(&scene, &test_template(), &geom, &cam(), 43).unwrap();
        assert_ne!(a, c);

        // with zero noise the seed is irrelevant
        scene.noise_sigma = 0.0;
        let d = render_marker(&scene, &test_template(), &geom, &cam(), 1).unwrap();
        let e = render_marker(&scene, &test_template(), &geom, &cam(), 2).unwrap();
        assert_eq!(d, e);
    }

    #[test]
    fn render_rejects_bad_placements() {
        let geom = MarkerGeometry::new(0.1);
        let mut scene = frontoparallel_scene();
        scene.pose = Pose::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, -1.0));
        assert!(matches!(
            render_marker(&scene, &test_template(), &geom, &cam(), 0),
            Err(SynthError::BehindCamera { .. })
        ));

        scene.pose = Pose::new(Mat3::IDENTITY, Vec3::new(0.5, 0.0, 1.0));
        assert!(matches!(
            render_marker(&scene, &test_template(), &geom, &cam(), 0),
            Err(SynthError::MarkerOutOfFrame)
        ));

        scene.pose = Pose::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, 5.0));
        assert!(matches!(
            render_marker(&scene, &test_template(), &geom, &cam(), 0),
            Err(SynthError::MarkerTooSmall { .. })
        ));
    }

    #[test]
    fn rendered_cells_carry_the_template_pattern() {
        let img = render_marker(
            &frontoparallel_scene(),
            &test_template(),
            &MarkerGeometry::new(0.1),
            &cam(),
            0,
        )
        .unwrap();
        let t = test_template();
        // cell centers: 80 px marker, 10 px cells starting at (280, 200)
        for row in 0..8 {
            for col in 0..8 {
                let x = 280 + col * 10 + 5;
                let y = 200 + row * 10 + 5;
                let want = if t.cell(row, col) == 1 {
                    synth::PAPER_LEVEL
                } else {
                    synth::INK_LEVEL
                };
                assert_eq!(img.get(x, y), want, "cell ({row},{col})");
            }
        }
    }
}
