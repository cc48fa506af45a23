//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use quadmark::formats::{DetectionRecord, PoseRecord};
use quadmark::geometry::{rodrigues, Pose, Vec3};
use quadmark::imgproc::Connectivity;
use quadmark::pipeline::{detect_markers, PipelineConfig, ThresholdMode};
use quadmark::pose::{marker_pose, CameraIntrinsics, MarkerGeometry, TrackState, TrackStatus};
use quadmark::registration::MatchResult;
use quadmark::synth::{project_point, render_marker, ScenePose};

use crate::draw;
use crate::io::{
    self, parse_anchor, read_camera, read_config, read_image, read_library, write_file,
    write_output, CliError,
};

/// Pipeline flags shared by detect and track; each overrides the config file.
#[derive(Args, Debug)]
pub struct PipelineFlags {
    /// Binarization threshold: "auto" or a fixed 0..=255 value.
    #[arg(long)]
    threshold: Option<String>,
    /// Component connectivity: 4 or 8.
    #[arg(long)]
    connectivity: Option<u8>,
    /// Minimum component area in px^2.
    #[arg(long)]
    min_area: Option<usize>,
    /// Maximum component area in px^2 (default: image area / 4).
    #[arg(long)]
    max_area: Option<usize>,
    /// Harris trace weight k.
    #[arg(long)]
    harris_k: Option<f64>,
    /// Gaussian window sigma for the structure tensor.
    #[arg(long)]
    window_sigma: Option<f64>,
    /// Non-maximum suppression radius in px.
    #[arg(long)]
    nms_radius: Option<usize>,
    /// Minimum corner response.
    #[arg(long)]
    min_response: Option<f64>,
    /// Rectified marker image side in px.
    #[arg(long)]
    rectify_size: Option<usize>,
    /// Template grid size.
    #[arg(long)]
    grid: Option<usize>,
    /// Maximum accepted Hamming distance.
    #[arg(long)]
    tau: Option<u32>,
    /// Disable edge-based quad corner refinement.
    #[arg(long)]
    no_refine: bool,
}

impl PipelineFlags {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<(), CliError> {
        if let Some(t) = &self.threshold {
            cfg.threshold = t.parse::<ThresholdMode>().map_err(CliError::Usage)?;
        }
        match self.connectivity {
            None => {}
            Some(4) => cfg.connectivity = Connectivity::Four,
            Some(8) => cfg.connectivity = Connectivity::Eight,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "connectivity must be 4 or 8, got {other}"
                )));
            }
        }
        if let Some(v) = self.min_area {
            cfg.min_area = v;
        }
        if let Some(v) = self.max_area {
            cfg.max_area = Some(v);
        }
        if let Some(v) = self.harris_k {
            cfg.harris_k = v;
        }
        if let Some(v) = self.window_sigma {
            cfg.window_sigma = v;
        }
        if let Some(v) = self.nms_radius {
            cfg.nms_radius = v;
        }
        if let Some(v) = self.min_response {
            cfg.min_response = v;
        }
        if let Some(v) = self.rectify_size {
            cfg.rectify_size = v;
        }
        if let Some(v) = self.grid {
            cfg.grid = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if self.no_refine {
            cfg.refine_corners = false;
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Input image (PGM or PPM).
    #[arg(long)]
    input: PathBuf,
    /// Marker template library file.
    #[arg(long)]
    templates: PathBuf,
    /// Pipeline configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path for the detection record array (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: PipelineFlags,
}

pub fn detect(args: DetectArgs) -> Result<(), CliError> {
    let library = read_library(&args.templates)?;
    let mut cfg = read_config(args.config.as_ref())?;
    args.flags.apply(&mut cfg)?;
    let gray = read_image(&args.input)?.into_gray();
    let found =
        detect_markers(&gray, &library, &cfg).map_err(|e| CliError::Input(e.to_string()))?;
    let records: Vec<DetectionRecord> = found
        .iter()
        .map(|d| DetectionRecord {
            corners: d.quad.vertices,
            frame: 0,
            hamming: d.match_result.hamming,
            marker_id: d.match_result.marker_id,
            rotation: d.match_result.rotation_index,
        })
        .collect();
    write_output(
        args.out.as_ref(),
        &serde_json::to_string(&records).expect("records serialize"),
    )
}

#[derive(Args, Debug)]
pub struct PoseArgs {
    /// Detection record array produced by `detect`.
    #[arg(long)]
    detections: PathBuf,
    /// Camera configuration JSON.
    #[arg(long)]
    camera: PathBuf,
    /// Marker side length in meters.
    #[arg(long)]
    marker_size: f64,
    /// Triangle anchor preset: vertex01, vertex12, centroid0 or edge02.
    #[arg(long, default_value = "vertex01")]
    anchor: String,
    /// Output path for the pose record array (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn pose(args: PoseArgs) -> Result<(), CliError> {
    let anchor = parse_anchor(&args.anchor)?;
    if !args.marker_size.is_finite() || args.marker_size <= 0.0 {
        return Err(CliError::Usage("marker size must be positive".into()));
    }
    let cam = read_camera(&args.camera)?;
    let bytes = io::read_file(&args.detections)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::input(&args.detections, "detections file is not valid UTF-8"))?;
    let records: Vec<DetectionRecord> =
        serde_json::from_str(&text).map_err(|e| CliError::input(&args.detections, e))?;
    let geom = MarkerGeometry::new(args.marker_size);

    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let det = marker_pose(
            &quadmark::corners::Quad {
                vertices: rec.corners,
                component_label: 0,
            },
            &MatchResult {
                marker_id: rec.marker_id,
                rotation_index: rec.rotation,
                hamming: rec.hamming,
            },
            &cam,
            &geom,
            anchor,
        )
        .map_err(|e| CliError::Input(format!("detection record {i}: {e}")))?;
        out.push(
            PoseRecord::from_pose(
                rec.frame,
                rec.marker_id,
                TrackStatus::Tracked,
                &det.pose,
                det.reprojection_rms,
            )
            .map_err(|e| CliError::Input(format!("detection record {i}: {e}")))?,
        );
    }
    write_output(
        args.out.as_ref(),
        &serde_json::to_string(&out).expect("records serialize"),
    )
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Frame images in playback order (PGM or PPM).
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Marker template library file.
    #[arg(long)]
    templates: PathBuf,
    /// Camera configuration JSON.
    #[arg(long)]
    camera: PathBuf,
    /// Marker side length in meters.
    #[arg(long)]
    marker_size: f64,
    /// Consecutive misses tolerated before a track is lost.
    #[arg(long)]
    coast: Option<u32>,
    /// Comma-separated frame timestamps (default 0,1,2,...).
    #[arg(long)]
    timestamps: Option<String>,
    /// Pipeline configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Triangle anchor preset.
    #[arg(long, default_value = "vertex01")]
    anchor: String,
    /// Output path for the pose record array (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: PipelineFlags,
}

pub fn track(args: TrackArgs) -> Result<(), CliError> {
    let anchor = parse_anchor(&args.anchor)?;
    if !args.marker_size.is_finite() || args.marker_size <= 0.0 {
        return Err(CliError::Usage("marker size must be positive".into()));
    }
    let library = read_library(&args.templates)?;
    let cam = read_camera(&args.camera)?;
    let mut cfg = read_config(args.config.as_ref())?;
    args.flags.apply(&mut cfg)?;
    if let Some(c) = args.coast {
        cfg.max_coast = c;
    }
    cfg.marker_side = args.marker_size;
    let geom = MarkerGeometry::new(args.marker_size);

    let timestamps: Vec<f64> = match &args.timestamps {
        None => (0..args.inputs.len()).map(|i| i as f64).collect(),
        Some(list) => {
            let parsed: Result<Vec<f64>, _> =
                list.split(',').map(str::trim).map(str::parse).collect();
            parsed.map_err(|e| CliError::Usage(format!("bad timestamp list: {e}")))?
        }
    };
    if timestamps.len() != args.inputs.len() {
        return Err(CliError::Usage(format!(
            "{} timestamps for {} frames",
            timestamps.len(),
            args.inputs.len()
        )));
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage(
            "timestamps must be strictly increasing".into(),
        ));
    }

    let mut states: BTreeMap<u32, TrackState> = BTreeMap::new();
    let mut records: Vec<PoseRecord> = Vec::new();
    for (frame_idx, (path, &t)) in args.inputs.iter().zip(&timestamps).enumerate() {
        let gray = read_image(path)?.into_gray();
        let found = detect_markers(&gray, &library, &cfg)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;

        // best detection per marker id: lowest hamming, then reprojection rms
        let mut best: BTreeMap<u32, quadmark::pose::MarkerDetection> = BTreeMap::new();
        for d in &found {
            let det = marker_pose(&d.quad, &d.match_result, &cam, &geom, anchor)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let id = d.match_result.marker_id;
            let better = match best.get(&id) {
                None => true,
                Some(cur) => {
                    (det.match_result.hamming, det.reprojection_rms)
                        < (cur.match_result.hamming, cur.reprojection_rms)
                }
            };
            if better {
                best.insert(id, det);
            }
        }
        for id in best.keys() {
            states
                .entry(*id)
                .or_insert_with(|| TrackState::new(*id, cfg.max_coast));
        }

        let frame = frame_idx as u64;
        for (id, state) in states.iter_mut() {
            let was_lost = state.status == TrackStatus::Lost;
            let emitted = state
                .update(best.get(id), t)
                .map_err(|e| CliError::Input(format!("frame {frame}: {e}")))?;
            match emitted {
                Some(pose) => {
                    let rms = best.get(id).map_or(0.0, |d| d.reprojection_rms);
                    records.push(
                        PoseRecord::from_pose(frame, *id, state.status, &pose, rms)
                            .map_err(|e| CliError::Input(format!("frame {frame}: {e}")))?,
                    );
                }
                None => {
                    // emit the Lost transition once
                    if !was_lost && state.status == TrackStatus::Lost {
                        records.push(PoseRecord::lost(frame, *id));
                    }
                }
            }
        }
    }
    write_output(
        args.out.as_ref(),
        &serde_json::to_string(&records).expect("records serialize"),
    )
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Marker id to render, looked up in the template library.
    #[arg(long)]
    template: u32,
    /// Marker template library file.
    #[arg(long)]
    templates: PathBuf,
    /// Pose as "rx,ry,rz,tx,ty,tz": rotation vector (radians) + translation
    /// (meters), marker frame into camera frame.
    #[arg(long)]
    pose: String,
    /// Camera configuration JSON.
    #[arg(long)]
    camera: PathBuf,
    /// Marker side length in meters.
    #[arg(long)]
    marker_size: f64,
    /// Gaussian noise standard deviation in intensity units.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Background intensity.
    #[arg(long, default_value_t = 230)]
    background: u8,
    /// Output PGM path.
    #[arg(long)]
    out: PathBuf,
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let parts: Result<Vec<f64>, _> = args
        .pose
        .split(',')
        .map(str::trim)
        .map(str::parse)
        .collect();
    let parts = parts.map_err(|e| CliError::Usage(format!("bad pose: {e}")))?;
    if parts.len() != 6 {
        return Err(CliError::Usage(format!(
            "pose needs 6 comma-separated numbers, got {}",
            parts.len()
        )));
    }
    if !args.marker_size.is_finite() || args.marker_size <= 0.0 {
        return Err(CliError::Usage("marker size must be positive".into()));
    }
    let library = read_library(&args.templates)?;
    let template = library
        .iter()
        .find(|t| t.id == args.template)
        .ok_or_else(|| {
            CliError::Input(format!(
                "{}: no marker with id {}",
                args.templates.display(),
                args.template
            ))
        })?;
    let cam = read_camera(&args.camera)?;
    let pose = Pose::new(
        rodrigues(Vec3::new(parts[0], parts[1], parts[2])),
        Vec3::new(parts[3], parts[4], parts[5]),
    );
    let scene = ScenePose {
        pose,
        template_id: args.template,
        background_level: args.background,
        noise_sigma: args.noise,
    };
    let geom = MarkerGeometry::new(args.marker_size);
    let img = render_marker(&scene, template, &geom, &cam, args.seed)
        .map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&args.out, &quadmark::formats::write_pgm(&img))
}

#[derive(Args, Debug)]
pub struct OverlayArgs {
    /// Scene image to draw over (PGM or PPM).
    #[arg(long)]
    input: PathBuf,
    /// Pose record array produced by `pose` or `track`.
    #[arg(long)]
    poses: PathBuf,
    /// Camera configuration JSON.
    #[arg(long)]
    camera: PathBuf,
    /// Marker side length in meters (outline size, axis length).
    #[arg(long)]
    marker_size: f64,
    /// Wireframe cube side in meters (defaults to the marker size).
    #[arg(long)]
    cube_size: Option<f64>,
    /// Output PPM path.
    #[arg(long)]
    out: PathBuf,
}

pub fn overlay(args: OverlayArgs) -> Result<(), CliError> {
    if !args.marker_size.is_finite() || args.marker_size <= 0.0 {
        return Err(CliError::Usage("marker size must be positive".into()));
    }
    let cube = args.cube_size.unwrap_or(args.marker_size);
    if !cube.is_finite() || cube <= 0.0 {
        return Err(CliError::Usage("cube size must be positive".into()));
    }
    let cam = read_camera(&args.camera)?;
    let mut img = read_image(&args.input)?.into_rgb();
    let bytes = io::read_file(&args.poses)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::input(&args.poses, "poses file is not valid UTF-8"))?;
    let records: Vec<PoseRecord> =
        serde_json::from_str(&text).map_err(|e| CliError::input(&args.poses, e))?;

    let geom = MarkerGeometry::new(args.marker_size);
    for (i, rec) in records.iter().enumerate() {
        if rec.translation[2] <= 0.0 {
            eprintln!("warning: pose record {i}: nonpositive depth, skipped");
            continue;
        }
        let pose = rec.pose();
        if !pose.rotation.is_rotation(1e-3) {
            eprintln!("warning: pose record {i}: rotation matrix fails orthonormality, skipped");
            continue;
        }
        draw_marker_overlay(&mut img, &cam, &pose, &geom, cube);
    }
    write_file(&args.out, &quadmark::formats::write_ppm(&img))
}

fn draw_marker_overlay(
    img: &mut quadmark::imgproc::RgbImage,
    cam: &CameraIntrinsics,
    pose: &Pose,
    geom: &MarkerGeometry,
    cube: f64,
) {
    let mut segment = |a: Vec3, b: Vec3, color: [u8; 3]| {
        let pa = project_point(cam, pose.transform_point(a));
        let pb = project_point(cam, pose.transform_point(b));
        if let (Ok(pa), Ok(pb)) = (pa, pb) {
            draw::draw_line(img, pa, pb, color);
        }
    };

    // marker outline
    let c = geom.canonical_corners();
    for i in 0..4 {
        segment(c[i], c[(i + 1) % 4], draw::GREEN);
    }

    // axis triad of the marker frame, each axis one side length long
    let s = geom.side;
    segment(Vec3::ZERO, Vec3::new(s, 0.0, 0.0), draw::RED);
    segment(Vec3::ZERO, Vec3::new(0.0, s, 0.0), draw::GREEN);
    segment(Vec3::ZERO, Vec3::new(0.0, 0.0, s), draw::BLUE);

    // wireframe cube standing on the marker plane, rising toward the camera
    let h = cube / 2.0;
    let base = [
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    ];
    let top: Vec<Vec3> = base
        .iter()
        .map(|p| *p + Vec3::new(0.0, 0.0, -cube))
        .collect();
    for i in 0..4 {
        segment(base[i], base[(i + 1) % 4], draw::YELLOW);
        segment(top[i], top[(i + 1) % 4], draw::YELLOW);
        segment(base[i], top[i], draw::YELLOW);
    }
}
