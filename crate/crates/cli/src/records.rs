//! Shared line-record formats for the JSONL and CSV files the commands
//! exchange, plus small I/O helpers.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::err::{CliError, Ctx};

/// One decoded sensor packet with a synthesized receive timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedRecord {
    pub t_receive_ns: i64,
    pub joint_angles_deg: Vec<f64>,
    pub supply_raw: u16,
    /// Raw channel readings, kept so calibration and round-trip checks
    /// can work from the same file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels_raw: Option<Vec<u16>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tactile: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub t_receive_ns: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileRecord {
    pub t_receive_ns: i64,
    pub values: Vec<f64>,
}

/// Wrist pose CSV row: position in millimeters, orientation quaternion in
/// (w,x,y,z) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WristRow {
    pub t_receive_ns: i64,
    pub px_mm: f64,
    pub py_mm: f64,
    pub pz_mm: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

/// Ground-truth packet record written by the stream generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketTruth {
    pub channels: Vec<u16>,
    pub supply_raw: u16,
}

/// One dense motor command tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub t_ns: i64,
    pub motors: Vec<f64>,
}

/// One wrist pose command tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WristCommandRecord {
    pub t_ns: i64,
    pub position_mm: [f64; 3],
    pub quat_wxyz: [f64; 4],
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.ctx("io")?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            CliError::msg(
                "parse",
                format!("{} line {}: {e}", path.display(), i + 1),
            )
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).ctx("json")?;
        w.write_all(b"\n").ctx("io")?;
    }
    w.flush().ctx("io")?;
    Ok(())
}

pub fn read_wrist_csv(path: &Path) -> Result<Vec<WristRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<WristRow>().enumerate() {
        rows.push(record.map_err(|e| {
            CliError::msg(
                "parse",
                format!("{} row {}: {e}", path.display(), i + 2),
            )
        })?);
    }
    Ok(rows)
}

pub fn write_wrist_csv(path: &Path, rows: &[WristRow]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", path.display())))?;
    for row in rows {
        writer.serialize(row).ctx("io")?;
    }
    writer.flush().ctx("io")?;
    Ok(())
}

/// Parse comma-separated floats, as used by list-valued flags.
pub fn parse_float_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| CliError::msg("flag", format!("`{part}`: {e}")))
        })
        .collect()
}

/// Print one machine-readable status line to stdout.
pub fn print_status(value: serde_json::Value) {
    println!("{value}");
}
