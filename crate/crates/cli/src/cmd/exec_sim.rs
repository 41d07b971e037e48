//! `exoforge exec-sim`: replay a policy action log into dense motor and
//! wrist command streams, under either virtual-motor or hardware-read
//! hand control.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use exoforge_core::actionexec::{
    interpolate_commands, resolve_hand, resolve_wrist, window_actions, ActionFrame,
    HandControlMode, HorizonPolicy, VirtualMotorState, WristPose,
};
use exoforge_core::interval::Interval;
use exoforge_core::synth::bundled_hand;

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::{
    parse_float_list, print_status, read_jsonl, write_jsonl, CommandRecord, WristCommandRecord,
};

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeFlag {
    /// Relative hand actions accumulate onto software state; hardware
    /// reads are ignored after initialization.
    Virtual,
    /// Relative hand actions accumulate onto simulated hardware reads
    /// (each read returns the previous command).
    Hardware,
}

#[derive(Args, Serialize)]
pub struct ExecSimArgs {
    /// Policy action log (JSONL: ee_delta, hand, hand_mode).
    #[arg(long)]
    pub actions: PathBuf,
    /// Hand control mode for relative actions.
    #[arg(long, value_enum, default_value_t = ModeFlag::Virtual)]
    pub mode: ModeFlag,
    /// Bundled hand name; checks the motor count and sets the default
    /// command rate for that hardware.
    #[arg(long)]
    pub hand: Option<String>,
    /// Initial motor readings, comma-separated; defaults to mid-range.
    #[arg(long)]
    pub init: Option<String>,
    /// Lowest admissible motor command.
    #[arg(long, default_value_t = 0.0)]
    pub motor_lo: f64,
    /// Highest admissible motor command.
    #[arg(long, default_value_t = 1000.0)]
    pub motor_hi: f64,
    /// Policy output rate.
    #[arg(long, default_value_t = 10.0)]
    pub policy_rate_hz: f64,
    /// Motor command rate; defaults to the hand's rate, else the policy
    /// rate.
    #[arg(long)]
    pub rate_hz: Option<f64>,
    /// Replay through receding-horizon windows instead of executing every
    /// frame.
    #[arg(long)]
    pub windowed: bool,
    /// Predicted horizon length per window.
    #[arg(long, default_value_t = 16)]
    pub predict: usize,
    /// Executed prefix per window.
    #[arg(long, default_value_t = 8)]
    pub execute: usize,
    /// Output motor command JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional wrist command JSONL at the policy rate.
    #[arg(long)]
    pub wrist_out: Option<PathBuf>,
}

fn hand_command_rate(name: &str) -> Result<f64, CliError> {
    // Rates are tied to the bundled hardware profiles.
    let policy = match name {
        "inspire_like" => HorizonPolicy::inspire_like_hand(),
        "xhand_like" => HorizonPolicy::xhand_like_hand(),
        _ => HorizonPolicy {
            command_rate_hz: HorizonPolicy::arm().policy_rate_hz,
            ..HorizonPolicy::arm()
        },
    };
    Ok(policy.command_rate_hz)
}

/// Frames to execute, in order. Windowed replay takes the executed prefix
/// of each full prediction horizon; a final short window executes whole.
fn executed_frames<'a>(
    actions: &'a [ActionFrame],
    windowed: bool,
    policy: &HorizonPolicy,
) -> Result<Vec<&'a ActionFrame>, CliError> {
    if !windowed {
        return Ok(actions.iter().collect());
    }
    policy.validate().ctx("flag")?;
    let mut out = Vec::new();
    let mut i = 0;
    while i < actions.len() {
        let remaining = &actions[i..];
        if remaining.len() >= policy.predict {
            let executed = window_actions(&remaining[..policy.predict], policy).ctx("exec")?;
            out.extend(executed.iter());
            i += executed.len();
        } else {
            out.extend(remaining.iter());
            i = actions.len();
        }
    }
    Ok(out)
}

pub fn run(args: ExecSimArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("exec-sim", &args);
    manifest.input_file(&args.actions)?;

    let actions: Vec<ActionFrame> = read_jsonl(&args.actions)?;
    if actions.is_empty() {
        return Err(CliError::msg("input", "action log is empty"));
    }
    let dofs = actions[0].hand.len();
    if dofs == 0 {
        return Err(CliError::msg("input", "action frames have no motors"));
    }
    if let Some(name) = &args.hand {
        let hand = bundled_hand(name).ctx("flag")?;
        if hand.total_dofs() != dofs {
            return Err(CliError::msg(
                "input",
                format!(
                    "hand `{name}` has {} motors but actions carry {dofs}",
                    hand.total_dofs()
                ),
            ));
        }
    }
    if !(args.motor_lo < args.motor_hi) {
        return Err(CliError::msg(
            "flag",
            format!("motor range [{}, {}] is empty", args.motor_lo, args.motor_hi),
        ));
    }

    let command_rate = match (args.rate_hz, &args.hand) {
        (Some(rate), _) => rate,
        (None, Some(name)) => hand_command_rate(name)?,
        (None, None) => args.policy_rate_hz,
    };
    let policy = HorizonPolicy {
        predict: args.predict,
        execute: args.execute,
        policy_rate_hz: args.policy_rate_hz,
        command_rate_hz: command_rate,
    };
    policy.validate().ctx("flag")?;

    let range = Interval::new(args.motor_lo, args.motor_hi);
    let init = match &args.init {
        Some(text) => {
            let values = parse_float_list(text)?;
            if values.len() != dofs {
                return Err(CliError::msg(
                    "flag",
                    format!("--init has {} values, actions carry {dofs}", values.len()),
                ));
            }
            values
        }
        None => vec![range.midpoint(); dofs],
    };

    let frames = executed_frames(&actions, args.windowed, &policy)?;
    let mode = match args.mode {
        ModeFlag::Virtual => HandControlMode::Virtual,
        ModeFlag::Hardware => HandControlMode::Hardware,
    };

    let mut vstate = VirtualMotorState::uninitialized(dofs, range);
    let mut last_read = init;
    let mut wrist = WristPose::identity();
    let mut hand_steps: Vec<Vec<f64>> = Vec::with_capacity(frames.len());
    let mut wrist_steps: Vec<WristPose> = Vec::with_capacity(frames.len());
    for (step, frame) in frames.iter().enumerate() {
        // Simulated hardware is drift-free: each read returns the last
        // command. Virtual control only ever consumes the first read.
        let read = match mode {
            HandControlMode::Hardware => Some(last_read.as_slice()),
            HandControlMode::Virtual if step == 0 => Some(last_read.as_slice()),
            HandControlMode::Virtual => None,
        };
        let command = resolve_hand(frame, &mut vstate, read, mode).ctx("exec")?;
        last_read = command.clone();
        wrist = resolve_wrist(&wrist, &frame.ee_delta);
        hand_steps.push(command);
        wrist_steps.push(wrist.clone());
    }

    let dense = interpolate_commands(&hand_steps, policy.policy_rate_hz, policy.command_rate_hz)
        .ctx("exec")?;
    let commands: Vec<CommandRecord> = dense
        .into_iter()
        .enumerate()
        .map(|(j, motors)| CommandRecord {
            t_ns: ((j as f64 / policy.command_rate_hz) * 1e9).round() as i64,
            motors,
        })
        .collect();
    write_jsonl(&args.out, &commands)?;

    if let Some(wrist_path) = &args.wrist_out {
        let rows: Vec<WristCommandRecord> = wrist_steps
            .iter()
            .enumerate()
            .map(|(i, pose)| {
                let q = pose.orientation.quaternion();
                WristCommandRecord {
                    t_ns: ((i as f64 / policy.policy_rate_hz) * 1e9).round() as i64,
                    position_mm: [pose.position_mm.x, pose.position_mm.y, pose.position_mm.z],
                    quat_wxyz: [q.w, q.i, q.j, q.k],
                }
            })
            .collect();
        write_jsonl(wrist_path, &rows)?;
    }
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "exec-sim",
        "out": args.out,
        "manifest": manifest_path,
        "input_frames": actions.len(),
        "executed_frames": frames.len(),
        "command_ticks": commands.len(),
        "command_rate_hz": policy.command_rate_hz,
    }));
    Ok(())
}
