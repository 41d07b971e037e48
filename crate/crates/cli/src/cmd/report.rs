//! `exoforge report`: summarize artifacts from the other commands into
//! one JSON document plus an optional long-format CSV of plottable series
//! (optimization history, calibration residuals, episode drop counts).

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use exoforge_core::calibmap::tables_from_json;
use exoforge_core::maskcompose::ComposeReport;
use exoforge_core::timeline::read_episode_jsonl;

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::print_status;

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// Design JSON from `exoforge optimize`.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// History CSV from `exoforge optimize` / `exoforge fit-linkage`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Calibration tables JSON from `exoforge calibrate`.
    #[arg(long)]
    pub tables: Option<PathBuf>,
    /// Episode JSONL from `exoforge align`.
    #[arg(long)]
    pub episode: Option<PathBuf>,
    /// Per-frame report JSON from `exoforge compose`.
    #[arg(long)]
    pub compose_report: Option<PathBuf>,
    /// Output summary JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional long-format series CSV (columns: series,key,value).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// One row of the long-format series CSV.
struct SeriesRow {
    series: String,
    key: String,
    value: f64,
}

fn read_text(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))
}

fn summarize_design(
    path: &PathBuf,
    rows: &mut Vec<SeriesRow>,
) -> Result<serde_json::Value, CliError> {
    let design: serde_json::Value = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::msg("parse", format!("{}: {e}", path.display())))?;
    let mut summary = serde_json::Map::new();
    for key in ["finger", "seed", "score", "coverage_term", "subset_term", "evaluations"] {
        if let Some(v) = design.get(key) {
            summary.insert(key.to_string(), v.clone());
            if let Some(x) = v.as_f64() {
                rows.push(SeriesRow {
                    series: "design".into(),
                    key: key.into(),
                    value: x,
                });
            }
        }
    }
    Ok(serde_json::Value::Object(summary))
}

fn summarize_history(
    path: &PathBuf,
    rows: &mut Vec<SeriesRow>,
) -> Result<serde_json::Value, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
    let mut generations = 0usize;
    let mut first_score = None;
    let mut last_score = None;
    for record in reader.records() {
        let record = record.ctx("parse")?;
        let generation = record
            .get(0)
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| CliError::msg("parse", format!("{}: bad generation", path.display())))?;
        let score = record
            .get(1)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| CliError::msg("parse", format!("{}: bad score", path.display())))?;
        rows.push(SeriesRow {
            series: "history.best_S".into(),
            key: generation.to_string(),
            value: score,
        });
        if first_score.is_none() {
            first_score = Some(score);
        }
        last_score = Some(score);
        generations += 1;
    }
    Ok(serde_json::json!({
        "generations": generations,
        "first_score": first_score,
        "final_score": last_score,
    }))
}

fn summarize_tables(
    path: &PathBuf,
    rows: &mut Vec<SeriesRow>,
) -> Result<serde_json::Value, CliError> {
    let tables = tables_from_json(&read_text(path)?)
        .map_err(|e| CliError::msg("parse", format!("{}: {e}", path.display())))?;
    let mut joints = Vec::new();
    for table in &tables {
        let mut residuals = serde_json::Map::new();
        for (group, r) in &table.residuals {
            residuals.insert(
                group.clone(),
                serde_json::json!({ "pairs": r.pairs, "rms": r.rms }),
            );
            rows.push(SeriesRow {
                series: format!("calibration.rms.{}", table.joint),
                key: group.clone(),
                value: r.rms,
            });
        }
        joints.push(serde_json::json!({
            "joint": table.joint,
            "residuals": residuals,
        }));
    }
    Ok(serde_json::json!({ "joints": joints }))
}

fn summarize_episode(
    path: &PathBuf,
    rows: &mut Vec<SeriesRow>,
) -> Result<serde_json::Value, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
    let episode = read_episode_jsonl(std::io::BufReader::new(file))
        .map_err(|e| CliError::msg("parse", format!("{}: {e}", path.display())))?;
    let frames = episode.frames.len();
    let span_s = match (episode.frames.first(), episode.frames.last()) {
        (Some(first), Some(last)) => (last.t_capture_ns - first.t_capture_ns) as f64 / 1e9,
        _ => 0.0,
    };
    rows.push(SeriesRow {
        series: "episode".into(),
        key: "frames".into(),
        value: frames as f64,
    });
    Ok(serde_json::json!({
        "frames": frames,
        "span_s": span_s,
        "recorded_fps": episode.meta.recorded_fps,
        "downsample_factor": episode.meta.downsample_factor,
    }))
}

fn summarize_compose(
    path: &PathBuf,
    rows: &mut Vec<SeriesRow>,
) -> Result<serde_json::Value, CliError> {
    let report: ComposeReport = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::msg("parse", format!("{}: {e}", path.display())))?;
    rows.push(SeriesRow {
        series: "compose".into(),
        key: "composed".into(),
        value: report.composed.len() as f64,
    });
    rows.push(SeriesRow {
        series: "compose".into(),
        key: "issues".into(),
        value: report.issues.len() as f64,
    });
    Ok(serde_json::json!({
        "composed": report.composed.len(),
        "issues": report.issues,
    }))
}

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("report", &args);
    let mut sections = serde_json::Map::new();
    let mut rows: Vec<SeriesRow> = Vec::new();

    let mut any = false;
    if let Some(path) = &args.design {
        manifest.input_file(path)?;
        sections.insert("design".into(), summarize_design(path, &mut rows)?);
        any = true;
    }
    if let Some(path) = &args.history {
        manifest.input_file(path)?;
        sections.insert("history".into(), summarize_history(path, &mut rows)?);
        any = true;
    }
    if let Some(path) = &args.tables {
        manifest.input_file(path)?;
        sections.insert("calibration".into(), summarize_tables(path, &mut rows)?);
        any = true;
    }
    if let Some(path) = &args.episode {
        manifest.input_file(path)?;
        sections.insert("episode".into(), summarize_episode(path, &mut rows)?);
        any = true;
    }
    if let Some(path) = &args.compose_report {
        manifest.input_file(path)?;
        sections.insert("compose".into(), summarize_compose(path, &mut rows)?);
        any = true;
    }
    if !any {
        return Err(CliError::msg("flag", "no artifacts given; nothing to report"));
    }

    let summary = serde_json::Value::Object(sections);
    let text = serde_json::to_string_pretty(&summary).ctx("json")?;
    std::fs::write(&args.out, text + "\n")
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.out.display())))?;

    if let Some(csv_path) = &args.csv {
        let mut w = csv::Writer::from_path(csv_path)
            .map_err(|e| CliError::msg("io", format!("{}: {e}", csv_path.display())))?;
        w.write_record(["series", "key", "value"]).ctx("io")?;
        for row in &rows {
            w.write_record([&row.series, &row.key, &format!("{:.17e}", row.value)])
                .ctx("io")?;
        }
        w.flush().ctx("io")?;
    }
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "report",
        "out": args.out,
        "manifest": manifest_path,
        "sections": summary.as_object().map(|m| m.keys().cloned().collect::<Vec<_>>()),
        "series_rows": rows.len(),
    }));
    Ok(())
}
