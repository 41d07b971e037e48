//! `exoforge align`: build a camera-clock episode from per-channel logs.
//! Every non-camera channel is latency-corrected, then interpolated onto
//! camera capture timestamps; frames outside any channel's span are
//! dropped and counted.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use exoforge_core::timeline::{
    align_to_camera, correct_capture_times, downsample, write_episode_jsonl, AlignmentInput,
    Channel, LatencyConfig, Series, WristSample,
};

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::{
    print_status, read_jsonl, read_wrist_csv, CameraRecord, DecodedRecord, TactileRecord,
};

#[derive(Args, Serialize)]
pub struct AlignArgs {
    /// Camera frame log (JSONL: t_receive_ns, image_ref).
    #[arg(long)]
    pub camera: PathBuf,
    /// Decoded encoder log (JSONL from `exoforge decode`).
    #[arg(long)]
    pub encoder: PathBuf,
    /// Optional tactile log (JSONL: t_receive_ns, values).
    #[arg(long)]
    pub tactile: Option<PathBuf>,
    /// Wrist pose log (CSV: t_receive_ns,px_mm,py_mm,pz_mm,qw,qx,qy,qz).
    #[arg(long)]
    pub wrist: PathBuf,
    /// Per-channel latency configuration JSON.
    #[arg(long)]
    pub latency: PathBuf,
    /// Camera recording rate stored in the episode metadata.
    #[arg(long, default_value_t = 45.0)]
    pub fps: f64,
    /// Keep every k-th frame after alignment.
    #[arg(long, default_value_t = 1)]
    pub downsample: u32,
    /// Output episode JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

fn series_from<T, R>(
    records: Vec<R>,
    what: &str,
    time_of: impl Fn(&R) -> i64,
    value_of: impl Fn(R) -> T,
) -> Result<Series<T>, CliError> {
    let times: Vec<i64> = records.iter().map(&time_of).collect();
    let values: Vec<T> = records.into_iter().map(value_of).collect();
    Series::new(times, values).map_err(|e| CliError::msg("input", format!("{what}: {e}")))
}

fn wrist_series(rows: Vec<crate::records::WristRow>) -> Result<Series<WristSample>, CliError> {
    series_from(rows, "wrist", |r| r.t_receive_ns, |r| WristSample {
        position_mm: [r.px_mm, r.py_mm, r.pz_mm],
        quat_wxyz: [r.qw, r.qx, r.qy, r.qz],
    })
}

pub fn run(args: AlignArgs) -> Result<(), CliError> {
    if !(args.fps > 0.0) {
        return Err(CliError::msg("flag", format!("fps must be positive, got {}", args.fps)));
    }
    let mut manifest = ManifestBuilder::new("align", &args);
    for path in [&args.camera, &args.encoder, &args.wrist, &args.latency] {
        manifest.input_file(path)?;
    }
    if let Some(tac) = &args.tactile {
        manifest.input_file(tac)?;
    }

    let latency_text = std::fs::read_to_string(&args.latency)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.latency.display())))?;
    let latency: LatencyConfig = serde_json::from_str(&latency_text)
        .map_err(|e| CliError::msg("parse", format!("{}: {e}", args.latency.display())))?;

    let camera_records: Vec<CameraRecord> = read_jsonl(&args.camera)?;
    let encoder_records: Vec<DecodedRecord> = read_jsonl(&args.encoder)?;
    let wrist_rows = read_wrist_csv(&args.wrist)?;

    let camera = series_from(camera_records, "camera", |r| r.t_receive_ns, |r| r.image_ref)?;
    let encoder = series_from(
        encoder_records,
        "encoder",
        |r| r.t_receive_ns,
        |r| r.joint_angles_deg,
    )?;
    let wrist = wrist_series(wrist_rows)?;
    // Orientation rows must be unit quaternions for interpolation; reject
    // degenerate ones here rather than mid-slerp.
    for (i, sample) in wrist.values().iter().enumerate() {
        let [w, x, y, z] = sample.quat_wxyz;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !(norm > 1e-6) {
            return Err(CliError::msg(
                "input",
                format!("wrist row {i}: quaternion norm {norm} too small"),
            ));
        }
    }

    let camera = correct_capture_times(&camera, Channel::Camera, &latency).ctx("input")?;
    let encoder = correct_capture_times(&encoder, Channel::Encoder, &latency).ctx("input")?;
    let wrist = correct_capture_times(&wrist, Channel::WristPose, &latency).ctx("input")?;
    let tactile = match &args.tactile {
        Some(path) => {
            let records: Vec<TactileRecord> = read_jsonl(path)?;
            let series = series_from(records, "tactile", |r| r.t_receive_ns, |r| r.values)?;
            Some(correct_capture_times(&series, Channel::Tactile, &latency).ctx("input")?)
        }
        None => None,
    };

    let input = AlignmentInput {
        camera: &camera,
        encoder: &encoder,
        tactile: tactile.as_ref(),
        wrist: &wrist,
    };
    let (episode, report) = align_to_camera(&input, args.fps).ctx("align")?;
    let episode = if args.downsample > 1 {
        downsample(&episode, args.downsample).ctx("align")?
    } else {
        episode
    };

    let file = std::fs::File::create(&args.out)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.out.display())))?;
    write_episode_jsonl(std::io::BufWriter::new(file), &episode).ctx("io")?;
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "align",
        "out": args.out,
        "manifest": manifest_path,
        "frames": episode.frames.len(),
        "emitted": report.emitted,
        "dropped": report.dropped,
        "downsample_factor": episode.meta.downsample_factor,
    }));
    Ok(())
}
