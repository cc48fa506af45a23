//! Batch tools around the marker pipeline: detect markers in images, recover
//! poses, track across frame sequences, render synthetic scenes and draw
//! wireframe overlays.
//!
//! Exit codes: 0 success, 2 input/environment error, 3 usage error.

mod commands;
mod draw;
mod io;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub use io::CliError;

#[derive(Parser)]
#[command(
    name = "quadmark",
    version,
    about = "Square fiducial marker detection, pose and overlay tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect and identify markers in one image, emitting detection records.
    Detect(commands::DetectArgs),
    /// Recover 6-DoF poses from detection records.
    Pose(commands::PoseArgs),
    /// Detect and track markers across an ordered frame sequence.
    Track(commands::TrackArgs),
    /// Render a synthetic marker scene to a PGM image.
    Synth(commands::SynthArgs),
    /// Draw marker outlines, axis triads and wireframe cubes over an image.
    Overlay(commands::OverlayArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    3
                }
            };
        }
    };
    let result = match cli.command {
        Command::Detect(args) => commands::detect(args),
        Command::Pose(args) => commands::pose(args),
        Command::Track(args) => commands::track(args),
        Command::Synth(args) => commands::synth(args),
        Command::Overlay(args) => commands::overlay(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            3
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
