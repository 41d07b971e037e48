//! `exoforge decode`: parse a raw sensor byte stream into per-packet JSONL
//! records with joint angles in degrees, plus stream diagnostics.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use exoforge_core::sensorstream::{encoder_angle, frame_stream};

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::{print_status, write_jsonl, DecodedRecord};

#[derive(Args, Serialize)]
pub struct DecodeArgs {
    /// Raw byte stream file.
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL, one record per recovered packet.
    #[arg(long)]
    pub out: PathBuf,
    /// Nominal packet rate used to synthesize receive timestamps.
    #[arg(long, default_value_t = 125.0)]
    pub rate_hz: f64,
    /// Receive timestamp of the first packet, nanoseconds.
    #[arg(long, default_value_t = 0)]
    pub t0_ns: i64,
    /// Optional JSON file for the stream diagnostics.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn run(args: DecodeArgs) -> Result<(), CliError> {
    if !(args.rate_hz > 0.0) {
        return Err(CliError::msg(
            "flag",
            format!("rate must be positive, got {}", args.rate_hz),
        ));
    }
    let mut manifest = ManifestBuilder::new("decode", &args);
    manifest.input_file(&args.input)?;

    let bytes = std::fs::read(&args.input)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.input.display())))?;
    let (packets, diag) = frame_stream(&bytes);

    let records: Vec<DecodedRecord> = packets
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t_receive_ns =
                args.t0_ns + ((i as f64 / args.rate_hz) * 1e9).round() as i64;
            let joint_angles_deg = p
                .channels
                .iter()
                .map(|&raw| encoder_angle(raw, p.supply_raw))
                .collect::<Result<Vec<f64>, _>>()
                .ctx("decode")?;
            Ok(DecodedRecord {
                t_receive_ns,
                joint_angles_deg,
                supply_raw: p.supply_raw,
                channels_raw: Some(p.channels.clone()),
                tactile: None,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_jsonl(&args.out, &records)?;

    let diag_json = serde_json::to_value(&diag).ctx("json")?;
    if let Some(report_path) = &args.report {
        let text = serde_json::to_string_pretty(&diag_json).ctx("json")?;
        std::fs::write(report_path, text + "\n")
            .map_err(|e| CliError::msg("io", format!("{}: {e}", report_path.display())))?;
    }
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "decode",
        "out": args.out,
        "manifest": manifest_path,
        "packets": records.len(),
        "diagnostics": diag_json,
    }));
    Ok(())
}
