//! Detection, identification and 6-DoF pose recovery of square black-and-white
//! fiducial markers, with pose extrapolation across detection dropouts.
//!
//! The pipeline stages are:
//!
//! 1. **imgproc** – grayscale conversion, (auto-)thresholding, connected
//!    component labeling with statistics.
//! 2. **corners** – Harris corner-ness map, non-maximum suppression, assembly
//!    of 4-corner marker candidates per component.
//! 3. **registration** – projective rectification of each candidate quad and
//!    identification against a rotation-distinct template library.
//! 4. **pose** – back-projection of the quad into a camera-space triangle,
//!    triangle-frame alignment, and linear pose extrapolation for tracking.
//! 5. **synth** – pinhole renderer used as the ground-truth oracle in tests.
//! 6. **formats** – bit-exact PGM/PPM, template-library and JSON record I/O.
//!
//! [`pipeline`] wires stages 1-3 together behind a single configuration.

pub mod corners;
pub mod formats;
pub mod geometry;
pub mod imgproc;
pub mod pipeline;
pub mod pose;
pub mod registration;
pub mod synth;
