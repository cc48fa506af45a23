//! Marker pose recovery and tracking.
//!
//! A matched quad is back-projected through the camera model into a
//! camera-space triangle (planar homography decomposition against the known
//! marker side length). The pose itself is then read off by aligning the
//! coordinate frames built on the reference triangle (canonical marker
//! corners) and on the measured triangle, anchored the same way. On exact
//! data the frame-alignment pose and the decomposition pose coincide, and any
//! anchor choice gives the same answer.
//!
//! Camera convention: x right, y down, z forward (in front of the camera),
//! pixels `u = fx * x / z + cx`, `v = fy * y / z + cy` in the continuous
//! coordinates of the [`crate::corners`] module.

use std::collections::VecDeque;

use thiserror::Error;

use crate::corners::Quad;
use crate::geometry::{
    axis_angle_from_rotation, build_frame, frame_rotation, rodrigues, AnchorChoice, GeometryError,
    Mat3, Pose, Triangle, Vec3,
};
use crate::registration::{MatchResult, RegistrationError};

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error("marker lies behind the camera for every sign choice")]
    BehindCamera,
    #[error("pose history is empty")]
    EmptyHistory,
    #[error("timestamps must be strictly increasing")]
    NonmonotonicTimestamps,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Pinhole camera parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), PoseError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(PoseError::InvalidIntrinsics(
                "focal lengths must be positive",
            ));
        }
        if !(self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite())
        {
            return Err(PoseError::InvalidIntrinsics("parameters must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(PoseError::InvalidIntrinsics(
                "image dimensions must be positive",
            ));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64) {
            return Err(PoseError::InvalidIntrinsics(
                "principal point x outside image",
            ));
        }
        if !(0.0 <= self.cy && self.cy < self.height as f64) {
            return Err(PoseError::InvalidIntrinsics(
                "principal point y outside image",
            ));
        }
        Ok(())
    }
}

/// Physical marker dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerGeometry {
    /// Side length in meters.
    pub side: f64,
}

impl MarkerGeometry {
    pub fn new(side: f64) -> Self {
        assert!(side > 0.0);
        MarkerGeometry { side }
    }

    /// Marker-frame corners on the z = 0 plane, counter-clockwise as seen
    /// from +z, starting at `(-s/2, -s/2, 0)`.
    pub fn canonical_corners(&self) -> [Vec3; 4] {
        let h = self.side / 2.0;
        [
            Vec3::new(-h, -h, 0.0),
            Vec3::new(h, -h, 0.0),
            Vec3::new(h, h, 0.0),
            Vec3::new(-h, h, 0.0),
        ]
    }

    /// xy coordinates of the canonical corners (marker plane).
    pub fn canonical_corners_2d(&self) -> [[f64; 2]; 4] {
        let h = self.side / 2.0;
        [[-h, -h], [h, -h], [h, h], [-h, h]]
    }
}

/// A fully identified marker observation with its recovered pose.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerDetection {
    pub quad: Quad,
    pub match_result: MatchResult,
    /// Marker frame into camera frame.
    pub pose: Pose,
    /// RMS distance between the quad corners and the canonical corners
    /// projected through the recovered pose, in pixels.
    pub reprojection_rms: f64,
}

/// Quad vertices reordered so that entry `i` observes canonical corner `i`.
///
/// `rotation_index` counts the quarter turns applied to the template during
/// matching; the same cyclic shift pairs each canonical corner with the quad
/// vertex that images it.
pub fn ordered_quad_pixels(quad: &Quad, m: &MatchResult) -> [[f64; 2]; 4] {
    let r = m.rotation_index as usize;
    let v = &quad.vertices;
    [
        v[(4 - r) % 4],
        v[(1 + 4 - r) % 4],
        v[(2 + 4 - r) % 4],
        v[(3 + 4 - r) % 4],
    ]
}

/// Recover an initial pose and the camera-space triangle of canonical
/// corners 0..2 by decomposing the marker-plane-to-image homography.
///
/// With `K^-1 H = [g1 g2 g3]`, the scale is `2 / (|g1| + |g2|)` with its sign
/// fixed by requiring every corner depth positive; the rotation candidate
/// `[s*g1, s*g2, (s*g1)x(s*g2)]` is projected to the nearest rotation in the
/// Frobenius norm and the translation is `s * g3`.
pub fn backproject_marker(
    quad: &Quad,
    m: &MatchResult,
    cam: &CameraIntrinsics,
    geom: &MarkerGeometry,
) -> Result<(Pose, Triangle), PoseError> {
    cam.validate()?;
    let pixels = ordered_quad_pixels(quad, m);
    let plane = geom.canonical_corners_2d();
    let h = crate::registration::homography_dlt(&plane, &pixels)?;

    // columns of K^-1 H
    let g = |j: usize| -> Vec3 {
        Vec3::new(
            (h.h[0][j] - cam.cx * h.h[2][j]) / cam.fx,
            (h.h[1][j] - cam.cy * h.h[2][j]) / cam.fy,
            h.h[2][j],
        )
    };
    let (g1, g2, g3) = (g(0), g(1), g(2));
    let lambda = 2.0 / (g1.norm() + g2.norm());
    let corners = geom.canonical_corners();

    for sign in [1.0, -1.0] {
        let s = sign * lambda;
        let r1 = g1 * s;
        let r2 = g2 * s;
        let r3 = r1.cross(r2);
        let rot = Mat3::from_cols(r1, r2, r3).nearest_rotation();
        let t = g3 * s;
        let pose = Pose::new(rot, t);
        if corners.iter().all(|&c| pose.transform_point(c).z > 0.0) {
            let measured = Triangle::new(
                pose.transform_point(corners[0]),
                pose.transform_point(corners[1]),
                pose.transform_point(corners[2]),
            );
            return Ok((pose, measured));
        }
    }
    Err(PoseError::BehindCamera)
}

/// Rigid transform carrying the reference triangle onto the measured one.
///
/// Both triangles get a frame built with the same anchor; the rotation is the
/// product of the measured orientation matrix with the inverse of the
/// reference one, and the translation is the difference of the frame origins
/// after rotation. Placing the rotation center at the frame origin means no
/// extra displacement term appears.
pub fn estimate_pose(
    reference: &Triangle,
    measured: &Triangle,
    anchor: AnchorChoice,
) -> Result<Pose, PoseError> {
    let fa = build_frame(reference, anchor)?;
    let fb = build_frame(measured, anchor)?;
    let rotation = frame_rotation(&fa, &fb);
    let translation = fb.origin - rotation * fa.origin;
    Ok(Pose::new(rotation, translation))
}

/// Full per-marker pose recovery: back-project the quad, then realign via
/// triangle frames. Returns the detection with its reprojection residual.
pub fn marker_pose(
    quad: &Quad,
    m: &MatchResult,
    cam: &CameraIntrinsics,
    geom: &MarkerGeometry,
    anchor: AnchorChoice,
) -> Result<MarkerDetection, PoseError> {
    let (_pose_h, measured) = backproject_marker(quad, m, cam, geom)?;
    let corners = geom.canonical_corners();
    let reference = Triangle::new(corners[0], corners[1], corners[2]);
    let pose = estimate_pose(&reference, &measured, anchor)?;

    let pixels = ordered_quad_pixels(quad, m);
    let mut sq_sum = 0.0;
    for (c, px) in corners.iter().zip(&pixels) {
        let p = pose.transform_point(*c);
        if p.z <= 1e-9 {
            return Err(PoseError::BehindCamera);
        }
        let u = cam.fx * p.x / p.z + cam.cx;
        let v = cam.fy * p.y / p.z + cam.cy;
        sq_sum += (u - px[0]).powi(2) + (v - px[1]).powi(2);
    }
    Ok(MarkerDetection {
        quad: quad.clone(),
        match_result: *m,
        pose,
        reprojection_rms: (sq_sum / 4.0).sqrt(),
    })
}

/// Linear pose extrapolation from timestamped history.
///
/// One entry holds its pose. With two or more, the translation continues
/// linearly from the last two entries and the rotation advances by scaling
/// the rotation vector of the last relative rotation.
pub fn extrapolate_pose(history: &[(f64, Pose)], t_query: f64) -> Result<Pose, PoseError> {
    if history.is_empty() {
        return Err(PoseError::EmptyHistory);
    }
    for w in history.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(PoseError::NonmonotonicTimestamps);
        }
    }
    let (t_last, last) = *history.last().unwrap();
    if t_query < t_last {
        return Err(PoseError::NonmonotonicTimestamps);
    }
    if history.len() == 1 {
        return Ok(last);
    }
    let (t_prev, prev) = history[history.len() - 2];
    let alpha = (t_query - t_last) / (t_last - t_prev);

    let translation = last.translation + (last.translation - prev.translation) * alpha;
    let delta = last.rotation * prev.rotation.transpose();
    let (axis, angle) = axis_angle_from_rotation(&delta)?;
    let rotation = rodrigues(axis * (angle * alpha)) * last.rotation;
    Ok(Pose::new(rotation, translation))
}

/// Track lifecycle state of one marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    Coasting,
    Lost,
}

impl TrackStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackStatus::Tracked => "Tracked",
            TrackStatus::Coasting => "Coasting",
            TrackStatus::Lost => "Lost",
        }
    }
}

/// Per-marker tracking state: a short ring of timestamped measured poses plus
/// the coasting counter. Single-owner mutable; one writer per marker id.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub marker_id: u32,
    history: VecDeque<(f64, Pose)>,
    pub frames_coasted: u32,
    pub status: TrackStatus,
    max_coast: u32,
}

/// Measured poses retained for extrapolation and diagnostics.
const HISTORY_CAPACITY: usize = 3;

impl TrackState {
    pub fn new(marker_id: u32, max_coast: u32) -> Self {
        TrackState {
            marker_id,
            history: VecDeque::with_capacity(HISTORY_CAPACITY + 1),
            frames_coasted: 0,
            status: TrackStatus::Lost,
            max_coast,
        }
    }

    pub fn history(&self) -> impl Iterator<Item = &(f64, Pose)> {
        self.history.iter()
    }

    /// Advance the track by one frame.
    ///
    /// A detection resets the coast counter and becomes the emitted pose (the
    /// measurement buffer restarts when the track was Lost). A miss emits an
    /// extrapolated pose while fewer than `max_coast` consecutive misses have
    /// accumulated; at the `max_coast`-th miss the track goes Lost and emits
    /// nothing.
    pub fn update(
        &mut self,
        detection: Option<&MarkerDetection>,
        timestamp: f64,
    ) -> Result<Option<Pose>, PoseError> {
        if let Some(&(t_last, _)) = self.history.back() {
            if timestamp <= t_last {
                return Err(PoseError::NonmonotonicTimestamps);
            }
        }
        match detection {
            Some(det) => {
                if self.status == TrackStatus::Lost {
                    self.history.clear();
                }
                self.history.push_back((timestamp, det.pose));
                while self.history.len() > HISTORY_CAPACITY {
                    self.history.pop_front();
                }
                self.frames_coasted = 0;
                self.status = TrackStatus::Tracked;
                Ok(Some(det.pose))
            }
            None => {
                if self.history.is_empty() {
                    self.status = TrackStatus::Lost;
                    return Ok(None);
                }
                self.frames_coasted += 1;
                if self.frames_coasted < self.max_coast {
                    self.status = TrackStatus::Coasting;
                    let history: Vec<(f64, Pose)> = self.history.iter().copied().collect();
                    let pose = extrapolate_pose(&history, timestamp)?;
                    Ok(Some(pose))
                } else {
                    self.status = TrackStatus::Lost;
                    Ok(None)
                }
            }
        }
    }
}
