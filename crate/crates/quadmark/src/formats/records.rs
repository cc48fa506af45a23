//! JSON detection and pose records.
//!
//! Struct fields are declared in alphabetical order so serialization emits
//! sorted keys; together with serde_json's deterministic float formatting the
//! output is byte-stable for identical inputs, and floats round-trip exactly.

use serde::{Deserialize, Serialize};

use crate::geometry::{theta_from_pose, GeometryError, Mat3, Pose, Vec3};
use crate::pose::{MarkerDetection, TrackStatus};

/// One identified marker in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    /// Quad vertices in detection order, continuous pixel coordinates.
    pub corners: [[f64; 2]; 4],
    pub frame: u64,
    pub hamming: u32,
    pub marker_id: u32,
    /// Quarter turns applied to the template during matching.
    pub rotation: u8,
}

impl DetectionRecord {
    pub fn new(frame: u64, det: &MarkerDetection) -> Self {
        DetectionRecord {
            corners: det.quad.vertices,
            frame,
            hamming: det.match_result.hamming,
            marker_id: det.match_result.marker_id,
            rotation: det.match_result.rotation_index,
        }
    }
}

/// One marker pose in one frame, including the packed 4x4 form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: u64,
    pub marker_id: u32,
    pub reprojection_rms: f64,
    /// Row-major 3x3 rotation, marker frame into camera frame.
    pub rotation_matrix: [f64; 9],
    /// "Tracked", "Coasting" or "Lost".
    pub status: String,
    /// Row-major 4x4 packed pose (skew rotation-vector block, translation
    /// column, zero bottom row).
    pub theta: [f64; 16],
    pub translation: [f64; 3],
}

impl PoseRecord {
    pub fn from_pose(
        frame: u64,
        marker_id: u32,
        status: TrackStatus,
        pose: &Pose,
        reprojection_rms: f64,
    ) -> Result<Self, GeometryError> {
        let theta = theta_from_pose(pose)?;
        let r = &pose.rotation.m;
        Ok(PoseRecord {
            frame,
            marker_id,
            reprojection_rms,
            rotation_matrix: [
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ],
            status: status.as_str().to_string(),
            theta: theta.to_flat(),
            translation: [pose.translation.x, pose.translation.y, pose.translation.z],
        })
    }

    /// Marker placed at the origin with identity orientation; stands in for
    /// the pose fields of a record whose track just went Lost.
    pub fn lost(frame: u64, marker_id: u32) -> Self {
        PoseRecord {
            frame,
            marker_id,
            reprojection_rms: 0.0,
            rotation_matrix: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            status: TrackStatus::Lost.as_str().to_string(),
            theta: [0.0; 16],
            translation: [0.0; 3],
        }
    }

    pub fn pose(&self) -> Pose {
        let m = &self.rotation_matrix;
        Pose::new(
            Mat3::from_rows([m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]),
            Vec3::new(
                self.translation[0],
                self.translation[1],
                self.translation[2],
            ),
        )
    }
}
