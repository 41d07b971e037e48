//! `exoforge fit-linkage`: fit a one-input four-bar (optionally behind a
//! swing joint) whose fingertip workspace matches a sampled target cloud.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use exoforge_core::kinemodel::{load_hand_model, to_hand_json, Branch, HandModel};
use exoforge_core::workspace::{fit_equivalent_linkage, load_pose_set_csv};

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::{parse_float_list, print_status};

use super::optimize::{load_optimizer_config, pick_finger, write_history_csv};

#[derive(Args, Serialize)]
pub struct FitLinkageArgs {
    /// Target fingertip workspace (pose-set CSV). For swing fits the first
    /// configuration column must be the swing value.
    #[arg(long)]
    pub target: PathBuf,
    /// Hand model file holding the template finger (four-bar or swing
    /// four-bar).
    #[arg(long)]
    pub hand: PathBuf,
    /// Template finger; defaults to the model's first finger.
    #[arg(long)]
    pub finger: Option<String>,
    /// Comma-separated swing input values (radians) to fit one shared
    /// linkage across; omit for a single-linkage fit.
    #[arg(long)]
    pub swing_values: Option<String>,
    /// Optimizer configuration JSON; library defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output fit JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-generation best-score history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

pub fn run(args: FitLinkageArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("fit-linkage", &args);
    manifest.input_file(&args.target)?;
    manifest.input_file(&args.hand)?;
    if let Some(cfg_path) = &args.config {
        manifest.input_file(cfg_path)?;
    }

    let target = load_pose_set_csv(&args.target).ctx("input")?;
    let hand = load_hand_model(&args.hand).ctx("input")?;
    let finger = pick_finger(&hand, args.finger.as_deref())?;
    let swings = args
        .swing_values
        .as_deref()
        .map(parse_float_list)
        .transpose()?;
    let cfg = load_optimizer_config(args.config.as_ref(), seed)?;
    manifest.seed(cfg.seed);

    let fit = fit_equivalent_linkage(&target, finger, swings.as_deref(), &cfg).ctx("fit")?;

    let fitted_hand = HandModel {
        name: format!("{}_fitted", hand.name),
        fingers: vec![fit.mechanism.clone()],
    };
    let hand_json: serde_json::Value =
        serde_json::from_str(&to_hand_json(&fitted_hand)).ctx("json")?;
    let l = &fit.linkage;
    let out_json = serde_json::json!({
        "template": finger.name,
        "seed": cfg.seed,
        "score": fit.score,
        "linkage": {
            "ground_mm": l.ground_mm,
            "crank_mm": l.crank_mm,
            "coupler_mm": l.coupler_mm,
            "rocker_mm": l.rocker_mm,
            "coupler_point_mm": [l.coupler_point.x, l.coupler_point.y],
            "branch": match l.branch {
                Branch::Positive => "positive",
                Branch::Negative => "negative",
            },
            "input_min_deg": l.input_limits.min.to_degrees(),
            "input_max_deg": l.input_limits.max.to_degrees(),
        },
        "per_swing": fit.per_swing,
        "fitted_hand": hand_json,
    });
    let text = serde_json::to_string_pretty(&out_json).ctx("json")?;
    std::fs::write(&args.out, text + "\n")
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.out.display())))?;

    if let Some(history_path) = &args.history {
        write_history_csv(history_path, &fit.history)?;
    }
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "fit-linkage",
        "out": args.out,
        "manifest": manifest_path,
        "score": fit.score,
        "partitions": fit.per_swing.len(),
    }));
    Ok(())
}
