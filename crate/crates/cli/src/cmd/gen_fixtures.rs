//! `exoforge gen-fixtures`: write a self-contained demo bundle every
//! other command can run against offline: hand models, workspace clouds,
//! calibration pairs, per-channel sensor logs, an action log, and a tiny
//! compositing episode. All content is analytic, so reruns are
//! byte-identical.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use exoforge_core::calibmap::{write_calib_csv, CalibPair};
use exoforge_core::image::{GrayImage, Rgb, RgbImage};
use exoforge_core::kinemodel::save_hand_model;
use exoforge_core::synth::{bundled_hand, hysteresis_loop, BUNDLED_HAND_NAMES};
use exoforge_core::timeline::{Channel, LatencyConfig};
use exoforge_core::workspace::{sample_workspace, save_pose_set_csv, SamplingScheme};
use exoforge_core::{actionexec, designopt};

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::{
    print_status, write_jsonl, write_wrist_csv, CameraRecord, DecodedRecord, TactileRecord,
    WristRow,
};

#[derive(Args, Serialize)]
pub struct GenFixturesArgs {
    /// Output directory for the bundle.
    #[arg(long)]
    pub out: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::msg("io", format!("{}: {e}", path.display()))
}

fn ns(seconds: f64) -> i64 {
    (seconds * 1e9).round() as i64
}

fn write_hands(dir: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for name in BUNDLED_HAND_NAMES {
        let hand = bundled_hand(name).ctx("fixture")?;
        let path = dir.join(format!("{name}.hand"));
        save_hand_model(&path, &hand).ctx("io")?;
        written.push(path);
    }
    Ok(())
}

fn write_workspaces(out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let toy = bundled_hand("toy2f").ctx("fixture")?;
    let index = toy.finger("index").expect("bundled toy2f has an index");

    // The optimization target comes from a deterministic in-bounds
    // perturbation of the template, so a demo `optimize` run has real
    // work to do and a recoverable optimum near score zero.
    let template = designopt::DesignTemplate::from_finger(index);
    let nominal = template.params_from_finger(index, 0.2).ctx("fixture")?;
    let shifted: Vec<f64> = nominal
        .flatten()
        .iter()
        .zip(nominal.flat_bounds())
        .map(|(&v, b)| b.clamp(v + 0.35 * b.width()))
        .collect();
    let truth = template
        .instantiate(&nominal.with_flat(&shifted))
        .ctx("fixture")?;
    let (robot_ws, _) = sample_workspace(
        &truth,
        &SamplingScheme::Grid {
            per_dof: vec![12, 12],
        },
    )
    .ctx("fixture")?;
    let robot_path = out.join("robot_ws.csv");
    save_pose_set_csv(&robot_path, &robot_ws).ctx("io")?;
    written.push(robot_path);

    let inspire = bundled_hand("inspire_like").ctx("fixture")?;
    let fourbar = inspire.finger("index").expect("bundled inspire has an index");
    let (target, _) = sample_workspace(fourbar, &SamplingScheme::Grid { per_dof: vec![64] })
        .ctx("fixture")?;
    let target_path = out.join("target_fourbar.csv");
    save_pose_set_csv(&target_path, &target).ctx("io")?;
    written.push(target_path);
    Ok(())
}

fn write_optimizer_config(out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    // Small demo search; candidate sampling matches the target grid so a
    // full parameter recovery scores exactly zero.
    let cfg = designopt::OptimizerConfig {
        population: 16,
        generations: 60,
        seed: 7,
        sampling: SamplingScheme::Grid {
            per_dof: vec![12, 12],
        },
        early_stop_tolerance: Some(36.0),
        ..designopt::OptimizerConfig::default()
    };
    let path = out.join("optimizer.json");
    let text = serde_json::to_string_pretty(&cfg).ctx("json")?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

fn write_calibration(out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    // Offset both loops so the opening branch stays above motor zero.
    let offset = |mut pairs: Vec<CalibPair>, shift: f64| {
        for p in &mut pairs {
            p.motor_value += shift;
        }
        pairs
    };
    let mut groups: BTreeMap<String, Vec<CalibPair>> = BTreeMap::new();
    groups.insert("j0".into(), offset(hysteresis_loop(30, 1.5, 400.0, 20.0), 120.0));
    groups.insert("j1".into(), offset(hysteresis_loop(30, 1.2, 350.0, 14.0), 150.0));
    let path = out.join("calib.csv");
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    write_calib_csv(file, &groups).ctx("io")?;
    written.push(path);
    Ok(())
}

fn write_latency(out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut sensor_ns = BTreeMap::new();
    sensor_ns.insert(Channel::Camera, ns(0.080));
    sensor_ns.insert(Channel::Encoder, ns(0.002));
    sensor_ns.insert(Channel::Tactile, ns(0.005));
    sensor_ns.insert(Channel::WristPose, ns(0.001));
    let cfg = LatencyConfig {
        sensor_ns,
        display_ns: ns(0.033),
    };
    let path = out.join("latency.json");
    let text = serde_json::to_string_pretty(&cfg).ctx("json")?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

/// Sensor logs over a 4 s take: encoders at 125 Hz, tactile at 60 Hz,
/// wrist at 100 Hz, camera frames at 45 fps over the middle 2 s, so every
/// camera capture time stays bracketed after latency correction.
fn write_channel_logs(out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let camera: Vec<CameraRecord> = (0..91)
        .map(|i| CameraRecord {
            t_receive_ns: ns(0.5) + ns(i as f64 / 45.0),
            image_ref: Some(format!("{i:06}.png")),
        })
        .collect();
    let camera_path = out.join("camera.jsonl");
    write_jsonl(&camera_path, &camera)?;
    written.push(camera_path);

    let encoder: Vec<DecodedRecord> = (0..501)
        .map(|i| {
            let t = i as f64 / 125.0;
            DecodedRecord {
                t_receive_ns: ns(t),
                joint_angles_deg: (0..6)
                    .map(|k| 40.0 + 25.0 * (TAU * (0.25 * t + 0.1 * k as f64)).sin())
                    .collect(),
                supply_raw: 3300,
                channels_raw: None,
                tactile: None,
            }
        })
        .collect();
    let encoder_path = out.join("encoder.jsonl");
    write_jsonl(&encoder_path, &encoder)?;
    written.push(encoder_path);

    let tactile: Vec<TactileRecord> = (0..241)
        .map(|i| {
            let t = i as f64 / 60.0;
            TactileRecord {
                t_receive_ns: ns(t),
                values: (0..3)
                    .map(|k| (0.8 + 0.6 * (TAU * (0.5 * t + 0.3 * k as f64)).cos()).max(0.0))
                    .collect(),
            }
        })
        .collect();
    let tactile_path = out.join("tactile.jsonl");
    write_jsonl(&tactile_path, &tactile)?;
    written.push(tactile_path);

    let wrist: Vec<WristRow> = (0..401)
        .map(|i| {
            let t = i as f64 / 100.0;
            let yaw = 0.3 * (TAU * 0.2 * t).sin();
            WristRow {
                t_receive_ns: ns(t),
                px_mm: 300.0 + 40.0 * (TAU * 0.25 * t).cos(),
                py_mm: 120.0 + 40.0 * (TAU * 0.25 * t).sin(),
                pz_mm: 250.0 + 10.0 * t,
                qw: (yaw / 2.0).cos(),
                qx: 0.0,
                qy: 0.0,
                qz: (yaw / 2.0).sin(),
            }
        })
        .collect();
    let wrist_path = out.join("wrist.csv");
    write_wrist_csv(&wrist_path, &wrist)?;
    written.push(wrist_path);
    Ok(())
}

/// Two full 16-step prediction horizons of relative actions for the
/// 6-motor hand, with gentle wrist drift.
fn write_actions(out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let frames: Vec<actionexec::ActionFrame> = (0..32)
        .map(|i| {
            let phase = TAU * i as f64 / 32.0;
            actionexec::ActionFrame {
                ee_delta: [
                    0.8 * phase.cos(),
                    0.8 * phase.sin(),
                    0.1,
                    0.0,
                    0.0,
                    0.01 * phase.cos(),
                ],
                hand: (0..6).map(|k| 6.0 * (phase + 0.4 * k as f64).sin()).collect(),
                hand_mode: actionexec::HandActionMode::Relative,
            }
        })
        .collect();
    let path = out.join("actions.jsonl");
    write_jsonl(&path, &frames)?;
    written.push(path);
    Ok(())
}

fn write_compose_episode(out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    const W: u32 = 32;
    const H: u32 = 24;
    let root = out.join("compose");
    for sub in ["background", "robot", "exo_mask", "robot_mask"] {
        std::fs::create_dir_all(root.join(sub)).map_err(io_err(&root))?;
    }
    for frame in 0u32..3 {
        let background = RgbImage::from_fn(W, H, |x, _| {
            Rgb([(8 * x) as u8, 40 + 20 * frame as u8, 160])
        });
        let robot = RgbImage::from_fn(W, H, |_, y| Rgb([200, (10 * y) as u8, 30]));
        // Device silhouette: a disk wandering right; robot silhouette: a
        // fixed box. Their overlap moves across frames.
        let (cx, cy, r2) = (9.0 + 4.0 * frame as f64, 12.0, 49.0);
        let exo_mask = GrayImage::from_fn(W, H, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            exoforge_core::image::Luma([if dx * dx + dy * dy <= r2 { 255 } else { 0 }])
        });
        let robot_mask = GrayImage::from_fn(W, H, |x, y| {
            exoforge_core::image::Luma([if (6..26).contains(&x) && (6..18).contains(&y) {
                255
            } else {
                0
            }])
        });
        let name = format!("{frame:06}.png");
        background
            .save(root.join("background").join(&name))
            .ctx("io")?;
        robot.save(root.join("robot").join(&name)).ctx("io")?;
        exo_mask.save(root.join("exo_mask").join(&name)).ctx("io")?;
        robot_mask
            .save(root.join("robot_mask").join(&name))
            .ctx("io")?;
    }
    written.push(root);
    Ok(())
}

pub fn run(args: GenFixturesArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("gen-fixtures", &args);
    if let Some(s) = seed {
        manifest.seed(s);
    }
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;

    let mut written: Vec<PathBuf> = Vec::new();
    write_hands(&args.out.join("hands"), &mut written)?;
    write_workspaces(&args.out, &mut written)?;
    write_optimizer_config(&args.out, &mut written)?;
    write_calibration(&args.out, &mut written)?;
    write_latency(&args.out, &mut written)?;
    write_channel_logs(&args.out, &mut written)?;
    write_actions(&args.out, &mut written)?;
    write_compose_episode(&args.out, &mut written)?;
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "gen-fixtures",
        "out": args.out,
        "manifest": manifest_path,
        "files": written,
    }));
    Ok(())
}
