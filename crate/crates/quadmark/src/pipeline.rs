//! End-to-end detection: grayscale in, identified marker quads out.
//!
//! Stage order: threshold (fixed or automatic), connected components, Harris
//! corner-ness, non-maximum suppression, per-component quad assembly,
//! optional edge-based corner refinement, rectification, code decoding and
//! template matching.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corners::{
    extract_quads, harris_response, local_maxima, refine_quad, CornersError, Quad,
};
use crate::geometry::AnchorChoice;
use crate::imgproc::{label_components, otsu_threshold, threshold, Connectivity, GrayImage};
use crate::registration::{decode_code, match_template, rectify, MarkerTemplate, MatchResult};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Corners(#[from] CornersError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Fixed threshold or automatic selection per image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    Auto,
    Fixed(u8),
}

impl Serialize for ThresholdMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdMode::Auto => s.serialize_str("auto"),
            ThresholdMode::Fixed(v) => s.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Num(u64),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) if s == "auto" => Ok(ThresholdMode::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "threshold must be \"auto\" or 0..=255, got \"{s}\""
            ))),
            Raw::Num(n) if n <= 255 => Ok(ThresholdMode::Fixed(n as u8)),
            Raw::Num(n) => Err(serde::de::Error::custom(format!(
                "threshold {n} out of range 0..=255"
            ))),
        }
    }
}

impl std::str::FromStr for ThresholdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            Ok(ThresholdMode::Auto)
        } else {
            s.parse::<u8>()
                .map(ThresholdMode::Fixed)
                .map_err(|_| format!("threshold must be \"auto\" or 0..=255, got \"{s}\""))
        }
    }
}

/// Every knob of the detection and pose pipeline, with documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Binarization threshold; automatic selection by default.
    pub threshold: ThresholdMode,
    /// Component adjacency; markers are dark 8-connected blobs by default.
    pub connectivity: Connectivity,
    /// Smallest component area considered, px^2.
    pub min_area: usize,
    /// Largest component area considered; a quarter of the image when unset.
    pub max_area: Option<usize>,
    /// Harris trace weight.
    pub harris_k: f64,
    /// Gaussian window sigma for the structure tensor, px.
    pub window_sigma: f64,
    /// Chebyshev suppression radius for corner maxima, px.
    pub nms_radius: usize,
    /// Minimum Harris response for a corner candidate.
    pub min_response: f64,
    /// Side of the rectified marker image, px.
    pub rectify_size: usize,
    /// Template grid size; must match the loaded library.
    pub grid: usize,
    /// Maximum accepted Hamming distance.
    pub tau: u32,
    /// Triangle anchor used for pose frames.
    pub anchor: AnchorChoice,
    /// Consecutive misses tolerated before a track is declared lost.
    pub max_coast: u32,
    /// Marker side length, meters.
    pub marker_side: f64,
    /// Refine quad corners from image edges after extraction.
    pub refine_corners: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: ThresholdMode::Auto,
            connectivity: Connectivity::Eight,
            min_area: 64,
            max_area: None,
            harris_k: 0.04,
            window_sigma: 1.0,
            nms_radius: 3,
            // calibrated against the synthetic sweep: true marker corners at
            // desk scale respond above 1e9, noise maxima stay below 1e6
            min_response: 1e7,
            rectify_size: 64,
            grid: 8,
            tau: 0,
            anchor: AnchorChoice::Vertex(0, 1),
            max_coast: 5,
            marker_side: 0.1,
            refine_corners: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, library: &[MarkerTemplate]) -> Result<(), PipelineError> {
        if let Some(t) = library.first() {
            if t.grid != self.grid {
                return Err(PipelineError::Config(format!(
                    "configured grid {} does not match library grid {}",
                    self.grid, t.grid
                )));
            }
        }
        if self.grid < 4 {
            return Err(PipelineError::Config("grid must be at least 4".into()));
        }
        if self.rectify_size < 4 * self.grid {
            return Err(PipelineError::Config(format!(
                "rectify size {} leaves cells under 4 px for grid {}",
                self.rectify_size, self.grid
            )));
        }
        if self.nms_radius == 0 {
            return Err(PipelineError::Config(
                "nms radius must be at least 1".into(),
            ));
        }
        if !self.window_sigma.is_finite() || self.window_sigma <= 0.0 {
            return Err(PipelineError::Config(
                "window sigma must be positive".into(),
            ));
        }
        if !self.marker_side.is_finite() || self.marker_side <= 0.0 {
            return Err(PipelineError::Config("marker side must be positive".into()));
        }
        Ok(())
    }
}

/// An identified marker candidate: the quad that produced it and the library
/// match.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedMarker {
    pub quad: Quad,
    pub match_result: MatchResult,
}

/// Run detection on one grayscale frame.
///
/// Components that fail quad assembly or whose code matches nothing are
/// skipped silently; the result lists each identified marker once per quad,
/// in component order.
pub fn detect_markers(
    gray: &GrayImage,
    library: &[MarkerTemplate],
    cfg: &PipelineConfig,
) -> Result<Vec<DetectedMarker>, PipelineError> {
    cfg.validate(library)?;
    let t = match cfg.threshold {
        ThresholdMode::Fixed(v) => v,
        ThresholdMode::Auto => otsu_threshold(gray).unwrap_or_else(|e| match e {
            crate::imgproc::ImgprocError::DegenerateHistogram(v) => v,
        }),
    };
    let bin = threshold(gray, t);
    let labels = label_components(&bin, 0, cfg.connectivity);
    if labels.components.is_empty() {
        return Ok(Vec::new());
    }
    let map = harris_response(gray, cfg.window_sigma, cfg.harris_k)?;
    let corners = local_maxima(&map, cfg.nms_radius, cfg.min_response);
    let max_area = cfg.max_area.unwrap_or(gray.width() * gray.height() / 4);
    let extraction = extract_quads(&labels, &corners, cfg.min_area, max_area);

    let mut out = Vec::new();
    for quad in extraction.quads {
        let quad = if cfg.refine_corners {
            refine_quad(gray, &quad)
        } else {
            quad
        };
        let rect = match rectify(gray, &quad, cfg.rectify_size) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let code = match decode_code(&rect, cfg.grid) {
            Ok(c) => c,
            Err(_) => continue,
        };
        if let Ok(Some(m)) = match_template(&code, library, cfg.tau) {
            out.push(DetectedMarker {
                quad,
                match_result: m,
            });
        }
    }
    Ok(out)
}
