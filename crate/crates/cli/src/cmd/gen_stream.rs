//! `exoforge gen-stream`: emit a synthetic sensor byte stream (wire
//! format, garbage gaps, optional corrupted packets) plus the ground
//! truth of packets a decoder should recover.

use std::path::PathBuf;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use exoforge_core::sensorstream::EncoderPacket;
use exoforge_core::synth::garbage_bytes;

use crate::err::{CliError, Ctx};
use crate::manifest::ManifestBuilder;
use crate::records::{print_status, write_jsonl, PacketTruth};

#[derive(Args, Serialize)]
pub struct GenStreamArgs {
    /// Packet count.
    #[arg(long, default_value_t = 100)]
    pub packets: usize,
    /// Channels per packet.
    #[arg(long, default_value_t = 6)]
    pub channels: usize,
    /// How many packets to corrupt by one payload byte.
    #[arg(long, default_value_t = 0)]
    pub corrupt: usize,
    /// Maximum garbage bytes inserted around packets.
    #[arg(long, default_value_t = 8)]
    pub max_gap: usize,
    /// Output byte stream file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional ground-truth JSONL (surviving packets, stream order).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

pub fn run(args: GenStreamArgs, seed: Option<u64>) -> Result<(), CliError> {
    if args.packets == 0 {
        return Err(CliError::msg("flag", "need at least one packet"));
    }
    if !(1..=16).contains(&args.channels) {
        return Err(CliError::msg(
            "flag",
            format!("channels must be in 1..=16, got {}", args.channels),
        ));
    }
    if args.corrupt > args.packets {
        return Err(CliError::msg(
            "flag",
            format!(
                "cannot corrupt {} of {} packets",
                args.corrupt, args.packets
            ),
        ));
    }

    let seed = seed.unwrap_or(0);
    let mut manifest = ManifestBuilder::new("gen-stream", &args);
    manifest.seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let corrupt_at = rand::seq::index::sample(&mut rng, args.packets, args.corrupt);
    let mut corrupted = vec![false; args.packets];
    for idx in corrupt_at.iter() {
        corrupted[idx] = true;
    }

    let mut stream = Vec::new();
    let mut truth = Vec::new();
    for is_corrupt in &corrupted {
        let gap = rng.random_range(0..=args.max_gap);
        stream.extend(garbage_bytes(&mut rng, gap));

        // 12-bit readings keep every payload high byte below the header
        // bytes, so packets can never alias a packet start.
        let packet = EncoderPacket {
            channels: (0..args.channels)
                .map(|_| rng.random_range(0..=0x0FFF_u16))
                .collect(),
            supply_raw: rng.random_range(1500..=4095),
        };
        let mut bytes = packet.encode().ctx("fixture")?;
        if *is_corrupt {
            // One changed byte shifts the sum by a nonzero amount mod 256,
            // so the checksum always catches it; drawing the replacement
            // from the garbage alphabet keeps false headers impossible.
            let at = rng.random_range(3..bytes.len());
            let new = loop {
                let candidate = garbage_bytes(&mut rng, 1)[0];
                if candidate != bytes[at] {
                    break candidate;
                }
            };
            bytes[at] = new;
        } else {
            truth.push(PacketTruth {
                channels: packet.channels.clone(),
                supply_raw: packet.supply_raw,
            });
        }
        stream.extend(bytes);
    }
    let tail = rng.random_range(0..=args.max_gap);
    stream.extend(garbage_bytes(&mut rng, tail));

    std::fs::write(&args.out, &stream)
        .map_err(|e| CliError::msg("io", format!("{}: {e}", args.out.display())))?;
    if let Some(truth_path) = &args.truth {
        write_jsonl(truth_path, &truth)?;
    }
    let manifest_path = manifest.write_for_output(&args.out)?;

    print_status(serde_json::json!({
        "command": "gen-stream",
        "out": args.out,
        "manifest": manifest_path,
        "bytes": stream.len(),
        "packets": args.packets,
        "corrupted": args.corrupt,
        "recoverable": truth.len(),
    }));
    Ok(())
}
