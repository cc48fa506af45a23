//! Bit-exact parsers and writers: PGM/PPM images, the `ARTPL` marker template
//! library, camera configuration JSON, and detection/pose JSON records.
//!
//! Every parser rejects trailing garbage and reports 1-based line or byte
//! positions in its errors.

mod netpbm;
mod records;
mod templates;

pub use netpbm::{read_pgm, read_ppm, write_pgm, write_ppm};
pub use records::{DetectionRecord, PoseRecord};
pub use templates::{
    demo_library, parse_template_library, validate_library, write_template_library,
};

use thiserror::Error;

use crate::pose::CameraIntrinsics;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("byte {byte}: bad magic, expected {expected}")]
    BadMagic { byte: usize, expected: &'static str },
    #[error("{context} at {position}: {message}")]
    MalformedHeader {
        context: &'static str,
        position: String,
        message: String,
    },
    #[error("byte {byte}: unsupported maxval {value}, only up to 255")]
    UnsupportedMaxval { byte: usize, value: u64 },
    #[error("truncated pixel data: expected {expected} bytes, got {got}")]
    TruncatedData { expected: usize, got: usize },
    #[error("byte {byte}: trailing garbage after pixel data")]
    TrailingData { byte: usize },
    #[error("line {line}: pixel value {value} exceeds maxval {maxval}")]
    ValueOutOfRange {
        line: usize,
        value: u64,
        maxval: u64,
    },
    #[error("line {line}: {message}")]
    TemplateSyntax { line: usize, message: String },
    #[error("line {line}: duplicate marker id {id}")]
    DuplicateId { line: usize, id: u32 },
    #[error("line {line}: grid size {found} differs from {expected} used before")]
    MixedGridSize {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: marker {id} border cell ({row},{col}) must be 0")]
    BorderViolation {
        line: usize,
        id: u32,
        row: usize,
        col: usize,
    },
    #[error("markers {id_a} and {id_b} collide at rotation {rotation} (hamming {hamming} <= {threshold})")]
    RotationCollision {
        id_a: u32,
        id_b: u32,
        rotation: u8,
        hamming: u32,
        threshold: u32,
    },
    #[error("camera config: {0}")]
    InvalidCamera(String),
    #[error("json: {0}")]
    Json(String),
}

/// Parse and validate a camera configuration JSON object
/// (`{"fx", "fy", "cx", "cy", "width", "height"}`).
pub fn read_camera_config(text: &str) -> Result<CameraIntrinsics, FormatError> {
    let cam: CameraIntrinsics =
        serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    cam.validate()
        .map_err(|e| FormatError::InvalidCamera(e.to_string()))?;
    Ok(cam)
}

/// Serialize a camera configuration.
pub fn write_camera_config(cam: &CameraIntrinsics) -> String {
    serde_json::to_string(cam).expect("camera intrinsics always serialize")
}
