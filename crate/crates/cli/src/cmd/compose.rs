//! `exoforge compose`: batch-composite robot renders over inpainted
//! backgrounds wherever both the device mask and the robot mask agree.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use exoforge_core::maskcompose::{compose_episode, discover_frames, EpisodeDirs};

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::print_status;

#[derive(Args, Serialize)]
pub struct ComposeArgs {
    /// Directory of inpainted background frames (%06d.png).
    #[arg(long)]
    pub background: PathBuf,
    /// Directory of rendered robot frames (%06d.png).
    #[arg(long)]
    pub robot: PathBuf,
    /// Directory of device masks (%06d.png or .pgm).
    #[arg(long)]
    pub exo_mask: PathBuf,
    /// Directory of robot masks (%06d.png or .pgm).
    #[arg(long)]
    pub robot_mask: PathBuf,
    /// Output directory for composited frames.
    #[arg(long)]
    pub out: PathBuf,
    /// Inclusive frame range `start..end`; defaults to every background
    /// frame.
    #[arg(long)]
    pub frames: Option<String>,
    /// Optional JSON file for the per-frame report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_frame_range(text: &str) -> Result<Vec<u32>, CliError> {
    let (start, end) = text
        .split_once("..")
        .ok_or_else(|| CliError::msg("flag", format!("`{text}` is not start..end")))?;
    let start: u32 = start
        .trim()
        .parse()
        .map_err(|e| CliError::msg("flag", format!("`{start}`: {e}")))?;
    let end: u32 = end
        .trim()
        .parse()
        .map_err(|e| CliError::msg("flag", format!("`{end}`: {e}")))?;
    if end < start {
        return Err(CliError::msg("flag", format!("empty frame range `{text}`")));
    }
    Ok((start..=end).collect())
}

pub fn run(args: ComposeArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("compose", &args);
    for dir in [&args.background, &args.robot, &args.exo_mask, &args.robot_mask] {
        manifest.input_dir(dir)?;
    }

    let frames = match &args.frames {
        Some(text) => parse_frame_range(text)?,
        None => discover_frames(&args.background).ctx("input")?,
    };
    if frames.is_empty() {
        return Err(CliError::msg("input", "no frames to compose"));
    }

    let dirs = EpisodeDirs {
        background: &args.background,
        robot: &args.robot,
        exo_mask: &args.exo_mask,
        robot_mask: &args.robot_mask,
        out: &args.out,
    };
    let report = compose_episode(&dirs, &frames).ctx("compose")?;

    if let Some(report_path) = &args.report {
        let text = serde_json::to_string_pretty(&report).ctx("json")?;
        std::fs::write(report_path, text + "\n")
            .map_err(|e| CliError::msg("io", format!("{}: {e}", report_path.display())))?;
    }
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "compose",
        "out": args.out,
        "manifest": manifest_path,
        "requested": frames.len(),
        "composed": report.composed.len(),
        "issues": report.issues,
    }));
    Ok(())
}
