//! `exoforge calibrate`: fit per-joint encoder-angle → motor-command
//! tables from paired recordings, one table per joint column in the CSV.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use exoforge_core::calibmap::{fit_calibration, load_calib_csv, tables_to_json, ModelKind};
use exoforge_core::interval::Interval;

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::print_status;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFlag {
    /// Least-squares polynomial of the given degree.
    Polynomial,
    /// Monotone piecewise-linear map on uniform knots.
    MonotonePwl,
}

#[derive(Args, Serialize)]
pub struct CalibrateArgs {
    /// Paired recordings CSV: joint,encoder_angle_rad,motor_value,direction.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Model family to fit.
    #[arg(long, value_enum, default_value_t = ModelFlag::Polynomial)]
    pub model: ModelFlag,
    /// Polynomial degree.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// Knot count for the piecewise-linear model.
    #[arg(long, default_value_t = 8)]
    pub knots: usize,
    /// Lowest admissible motor command.
    #[arg(long, default_value_t = 0.0)]
    pub motor_lo: f64,
    /// Highest admissible motor command.
    #[arg(long, default_value_t = 1000.0)]
    pub motor_hi: f64,
    /// Output calibration tables JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: CalibrateArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("calibrate", &args);
    manifest.input_file(&args.pairs)?;

    let kind = match args.model {
        ModelFlag::Polynomial => ModelKind::Polynomial {
            degree: args.degree,
        },
        ModelFlag::MonotonePwl => ModelKind::MonotonePiecewiseLinear { knots: args.knots },
    };
    let motor_range = Interval::new(args.motor_lo, args.motor_hi);
    if !(args.motor_lo < args.motor_hi) {
        return Err(CliError::msg(
            "flag",
            format!("motor range [{}, {}] is empty", args.motor_lo, args.motor_hi),
        ));
    }

    let groups = load_calib_csv(&args.pairs).ctx("input")?;
    if groups.is_empty() {
        return Err(CliError::msg("input", "no calibration pairs in file"));
    }
    let mut tables = Vec::with_capacity(groups.len());
    for (joint, pairs) in &groups {
        let table = fit_calibration(joint, pairs, kind, motor_range)
            .map_err(|e| CliError::msg("fit", format!("joint `{joint}`: {e}")))?;
        tables.push(table);
    }

    let text = tables_to_json(&tables).ctx("json")?;
    std::fs::write(&args.out, text)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.out.display())))?;
    let manifest_path = manifest.write_for_output(&args.out)?;

    let rms: Vec<serde_json::Value> = tables
        .iter()
        .map(|t| {
            serde_json::json!({
                "joint": t.joint,
                "residual_rms": t.residuals.get("shared").map(|r| r.rms),
            })
        })
        .collect();
    print_status(serde_json::json!({
        "command": "calibrate",
        "out": args.out,
        "manifest": manifest_path,
        "joints": tables.len(),
        "fits": rms,
    }));
    Ok(())
}
