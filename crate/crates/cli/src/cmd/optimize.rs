//! `exoforge optimize`: search exoskeleton design parameters so the
//! finger's fingertip workspace matches a target robot workspace.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use exoforge_core::designopt::{optimize_design, DesignTemplate, OptimizerConfig};
use exoforge_core::kinemodel::{load_hand_model, to_hand_json, HandModel};
use exoforge_core::workspace::load_pose_set_csv;

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::print_status;

#[derive(Args, Serialize)]
pub struct OptimizeArgs {
    /// Hand model file holding the exoskeleton template finger.
    #[arg(long)]
    pub hand: PathBuf,
    /// Finger to optimize; defaults to the model's first finger.
    #[arg(long)]
    pub finger: Option<String>,
    /// Target robot fingertip workspace (pose-set CSV).
    #[arg(long)]
    pub robot_ws: PathBuf,
    /// Optimizer configuration JSON; library defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output design JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-generation best-score history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

pub fn load_optimizer_config(
    path: Option<&PathBuf>,
    seed: Option<u64>,
) -> Result<OptimizerConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::msg("io", format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::msg("parse", format!("{}: {e}", p.display())))?
        }
        None => OptimizerConfig::default(),
    };
    // The global flag outranks the config file; the config seed still
    // applies when the flag is absent.
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn pick_finger<'a>(
    hand: &'a HandModel,
    name: Option<&str>,
) -> Result<&'a exoforge_core::kinemodel::FingerMechanism, CliError> {
    match name {
        Some(n) => hand
            .finger(n)
            .ok_or_else(|| CliError::msg("input", format!("hand `{}` has no finger `{n}`", hand.name))),
        None => hand
            .fingers
            .first()
            .ok_or_else(|| CliError::msg("input", format!("hand `{}` has no fingers", hand.name))),
    }
}

pub fn write_history_csv(
    path: &PathBuf,
    history: &[exoforge_core::designopt::GenerationRecord],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
    w.write_record(["generation", "best_S", "coverage", "subset"])
        .ctx("io")?;
    for rec in history {
        w.write_record([
            rec.generation.to_string(),
            format!("{:.17e}", rec.best_score),
            format!("{:.17e}", rec.coverage_term),
            format!("{:.17e}", rec.subset_term),
        ])
        .ctx("io")?;
    }
    w.flush().ctx("io")?;
    Ok(())
}

pub fn run(args: OptimizeArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("optimize", &args);
    manifest.input_file(&args.hand)?;
    manifest.input_file(&args.robot_ws)?;
    if let Some(cfg_path) = &args.config {
        manifest.input_file(cfg_path)?;
    }

    let hand = load_hand_model(&args.hand).ctx("input")?;
    let finger = pick_finger(&hand, args.finger.as_deref())?;
    let robot_ws = load_pose_set_csv(&args.robot_ws).ctx("input")?;
    let cfg = load_optimizer_config(args.config.as_ref(), seed)?;
    manifest.seed(cfg.seed);

    let template = DesignTemplate::from_finger(finger);
    let p0 = template.params_from_finger(finger, 0.2).ctx("input")?;
    let outcome = optimize_design(&template, &p0, &robot_ws, &cfg).ctx("optimize")?;

    let optimized = template.instantiate(&outcome.best).ctx("optimize")?;
    let mut out_hand = hand.clone();
    if let Some(slot) = out_hand.fingers.iter_mut().find(|f| f.name == finger.name) {
        *slot = optimized;
    }
    let hand_json: serde_json::Value =
        serde_json::from_str(&to_hand_json(&out_hand)).ctx("json")?;

    let design = serde_json::json!({
        "template": template.name,
        "finger": finger.name,
        "seed": cfg.seed,
        "params": outcome.best,
        "score": outcome.report.score,
        "coverage_term": outcome.report.coverage_term,
        "subset_term": outcome.report.subset_term,
        "report": outcome.report,
        "evaluations": outcome.evaluations,
        "optimized_hand": hand_json,
    });
    let text = serde_json::to_string_pretty(&design).ctx("json")?;
    std::fs::write(&args.out, text + "\n")
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.out.display())))?;

    if let Some(history_path) = &args.history {
        write_history_csv(history_path, &outcome.history)?;
    }
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "optimize",
        "out": args.out,
        "manifest": manifest_path,
        "score": outcome.report.score,
        "coverage_term": outcome.report.coverage_term,
        "subset_term": outcome.report.subset_term,
        "robot_samples": outcome.report.robot_samples,
        "exo_samples": outcome.report.exo_samples,
        "evaluations": outcome.evaluations,
    }));
    Ok(())
}
