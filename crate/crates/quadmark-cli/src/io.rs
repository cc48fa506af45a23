//! Shared I/O helpers: error-to-exit-code mapping, image sniffing, and the
//! config/library/camera loaders used by several subcommands.

use std::path::{Path, PathBuf};

use quadmark::formats::{self, FormatError};
use quadmark::geometry::AnchorChoice;
use quadmark::imgproc::{to_grayscale, GrayImage, RgbImage};
use quadmark::pipeline::PipelineConfig;
use quadmark::pose::CameraIntrinsics;
use quadmark::registration::MarkerTemplate;

/// Usage errors exit 3, input/environment errors exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
}

impl CliError {
    pub fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::input(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::input(path, e))
}

/// Emit to the given path or stdout.
pub fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub enum LoadedImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl LoadedImage {
    pub fn into_gray(self) -> GrayImage {
        match self {
            LoadedImage::Gray(g) => g,
            LoadedImage::Rgb(rgb) => to_grayscale(&rgb),
        }
    }

    pub fn into_rgb(self) -> RgbImage {
        match self {
            LoadedImage::Rgb(rgb) => rgb,
            LoadedImage::Gray(g) => {
                let mut data = Vec::with_capacity(3 * g.width() * g.height());
                for &v in g.data() {
                    data.extend_from_slice(&[v, v, v]);
                }
                RgbImage::from_raw(g.width(), g.height(), data).expect("sizes match")
            }
        }
    }
}

/// Load a PGM or PPM image, deciding by magic number.
pub fn read_image(path: &Path) -> Result<LoadedImage, CliError> {
    let bytes = read_file(path)?;
    let loaded = match bytes.get(..2) {
        Some(b"P5") | Some(b"P2") => {
            LoadedImage::Gray(formats::read_pgm(&bytes).map_err(|e| CliError::input(path, e))?)
        }
        Some(b"P6") => {
            LoadedImage::Rgb(formats::read_ppm(&bytes).map_err(|e| CliError::input(path, e))?)
        }
        _ => {
            return Err(CliError::input(
                path,
                "unrecognized image magic, expected P2/P5/P6",
            ));
        }
    };
    Ok(loaded)
}

pub fn read_library(path: &Path) -> Result<Vec<MarkerTemplate>, CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::input(path, "template library is not valid UTF-8"))?;
    formats::parse_template_library(&text).map_err(|e| CliError::input(path, e))
}

pub fn read_camera(path: &Path) -> Result<CameraIntrinsics, CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::input(path, "camera config is not valid UTF-8"))?;
    formats::read_camera_config(&text).map_err(|e| CliError::input(path, e))
}

pub fn read_config(path: Option<&PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let bytes = read_file(p)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::input(p, "config is not valid UTF-8"))?;
            serde_json::from_str(&text).map_err(|e| CliError::input(p, e))
        }
    }
}

/// Named anchor presets accepted by `--anchor`.
pub fn parse_anchor(name: &str) -> Result<AnchorChoice, CliError> {
    match name {
        "vertex01" => Ok(AnchorChoice::Vertex(0, 1)),
        "vertex12" => Ok(AnchorChoice::Vertex(1, 2)),
        "centroid0" => Ok(AnchorChoice::Centroid(0)),
        "edge02" => Ok(AnchorChoice::EdgeMidpoint(0, 2)),
        other => Err(CliError::Usage(format!(
            "unknown anchor preset '{other}' (expected vertex01, vertex12, centroid0 or edge02)"
        ))),
    }
}
