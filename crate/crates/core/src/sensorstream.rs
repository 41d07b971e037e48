//! Wire-format decoding for the exoskeleton's sensor stream and the analog
//! conversion formulas for encoder angles, FSR force, and tactile frames.
//!
//! Packet layout (canonical fixture format): 2-byte header `0xAA 0x55`,
//! 1-byte channel count N, N little-endian u16 channel readings, one
//! little-endian u16 supply reading, and a 1-byte checksum chosen so the
//! whole packet sums to 0 mod 256.
//!
//! `FrameDecoder` is single-consumer and stateful (one instance per
//! stream); the conversion functions are pure and thread-safe.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PACKET_HEADER: [u8; 2] = [0xAA, 0x55];

/// Bytes in a packet besides the channel payload: header, count, supply,
/// checksum.
const PACKET_OVERHEAD: usize = 6;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("supply reading is zero; cannot normalize")]
    ZeroSupply,
    #[error("ADC voltage {v_adc} exceeds supply voltage {v_supply}")]
    InvalidReading { v_adc: f64, v_supply: f64 },
    #[error("tactile frame length mismatch: expected {expected} bytes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("packet has {got} channels; at most 255 fit the count byte")]
    TooManyChannels { got: usize },
}

/// One decoded sensor packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderPacket {
    pub channels: Vec<u16>,
    pub supply_raw: u16,
}

impl EncoderPacket {
    /// Serialize to wire bytes, including the sum-complement checksum.
    pub fn encode(&self) -> Result<Vec<u8>, SensorError> {
        if self.channels.len() > 255 {
            return Err(SensorError::TooManyChannels {
                got: self.channels.len(),
            });
        }
        let mut out = Vec::with_capacity(PACKET_OVERHEAD + 2 * self.channels.len());
        out.extend_from_slice(&PACKET_HEADER);
        out.push(self.channels.len() as u8);
        for &ch in &self.channels {
            out.extend_from_slice(&ch.to_le_bytes());
        }
        out.extend_from_slice(&self.supply_raw.to_le_bytes());
        let sum: u32 = out.iter().map(|&b| b as u32).sum();
        out.push((256 - (sum % 256) as u16) as u8);
        Ok(out)
    }
}

/// A contiguous run of stream bytes that produced no packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptSpan {
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDiagnostics {
    pub packets: usize,
    pub checksum_mismatches: usize,
    /// Header seen but the stream ended before the packet completed.
    pub truncated_packets: usize,
    /// Complete, checksum-valid candidates rejected for a zero supply.
    pub zero_supply_packets: usize,
    pub skipped_bytes: u64,
    pub corrupt_spans: Vec<CorruptSpan>,
}

/// Stateful resynchronizing decoder. Feeding a stream in arbitrary chunk
/// splits yields exactly the packets and diagnostics of one contiguous
/// feed; incomplete candidates are held across `push` calls.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    /// Stream offset of `buf[0]`.
    base: u64,
    /// Open garbage run as (start offset, length).
    skip_run: Option<(u64, u64)>,
    diag: StreamDiagnostics,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    fn mark_skipped(&mut self, offset: u64) {
        self.diag.skipped_bytes += 1;
        match &mut self.skip_run {
            Some((start, len)) if *start + *len == offset => *len += 1,
            Some(run) => {
                self.diag.corrupt_spans.push(CorruptSpan {
                    offset: run.0,
                    len: run.1,
                });
                self.skip_run = Some((offset, 1));
            }
            None => self.skip_run = Some((offset, 1)),
        }
    }

    fn close_skip_run(&mut self) {
        if let Some((offset, len)) = self.skip_run.take() {
            self.diag.corrupt_spans.push(CorruptSpan { offset, len });
        }
    }

    /// Feed more bytes; returns packets completed by this chunk.
    pub fn push(&mut self, bytes: &[u8]) -> Vec<EncoderPacket> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut i = 0usize;
        loop {
            let remaining = self.buf.len() - i;
            if remaining == 0 {
                break;
            }
            if self.buf[i] != PACKET_HEADER[0] {
                self.mark_skipped(self.base + i as u64);
                i += 1;
                continue;
            }
            // A lone leading header byte may complete later.
            if remaining < 2 {
                break;
            }
            if self.buf[i + 1] != PACKET_HEADER[1] {
                self.mark_skipped(self.base + i as u64);
                i += 1;
                continue;
            }
            if remaining < 3 {
                break;
            }
            let n = self.buf[i + 2] as usize;
            let total = PACKET_OVERHEAD + 2 * n;
            if remaining < total {
                break;
            }
            let span = &self.buf[i..i + total];
            let sum: u32 = span.iter().map(|&b| b as u32).sum();
            if sum % 256 != 0 {
                self.diag.checksum_mismatches += 1;
                self.mark_skipped(self.base + i as u64);
                i += 1;
                continue;
            }
            let channels: Vec<u16> = (0..n)
                .map(|c| u16::from_le_bytes([span[3 + 2 * c], span[4 + 2 * c]]))
                .collect();
            let supply_raw = u16::from_le_bytes([span[3 + 2 * n], span[4 + 2 * n]]);
            if supply_raw == 0 {
                self.diag.zero_supply_packets += 1;
                self.mark_skipped(self.base + i as u64);
                i += 1;
                continue;
            }
            self.close_skip_run();
            out.push(EncoderPacket {
                channels,
                supply_raw,
            });
            self.diag.packets += 1;
            i += total;
        }
        self.base += i as u64;
        self.buf.drain(..i);
        out
    }

    pub fn diagnostics(&self) -> &StreamDiagnostics {
        &self.diag
    }

    /// Declare end of stream: classifies any held partial candidate as
    /// truncated and closes the open garbage run.
    pub fn finish(mut self) -> StreamDiagnostics {
        if !self.buf.is_empty() {
            if self.buf.len() >= 2 && self.buf[..2] == PACKET_HEADER {
                self.diag.truncated_packets += 1;
            }
            for k in 0..self.buf.len() {
                self.mark_skipped(self.base + k as u64);
            }
        }
        self.close_skip_run();
        self.diag
    }
}

/// One-shot decode of a complete byte stream.
pub fn frame_stream(bytes: &[u8]) -> (Vec<EncoderPacket>, StreamDiagnostics) {
    let mut decoder = FrameDecoder::new();
    let packets = decoder.push(bytes);
    (packets, decoder.finish())
}

/// ADC scale description for converting raw counts to volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcParams {
    pub full_scale: u32,
    pub supply_nominal_volts: f64,
}

impl Default for AdcParams {
    /// 12-bit converter with a 3.3 V nominal supply.
    fn default() -> Self {
        Self {
            full_scale: 4095,
            supply_nominal_volts: 3.3,
        }
    }
}

impl AdcParams {
    pub fn counts_to_volts(&self, raw: u16) -> f64 {
        raw as f64 / self.full_scale as f64 * self.supply_nominal_volts
    }
}

/// Supply-normalized encoder angle in degrees. The ADC full scale cancels
/// because both readings share it, which also makes the angle immune to
/// supply drift.
pub fn encoder_angle(raw: u16, supply_raw: u16) -> Result<f64, SensorError> {
    if supply_raw == 0 {
        return Err(SensorError::ZeroSupply);
    }
    Ok(encoder_angle_unquantized(raw as f64, supply_raw as f64)?)
}

/// Real-valued form of the angle normalization, for property checks free
/// of integer quantization.
pub fn encoder_angle_unquantized(raw: f64, supply: f64) -> Result<f64, SensorError> {
    if supply == 0.0 {
        return Err(SensorError::ZeroSupply);
    }
    Ok(raw / supply * 360.0)
}

/// FSR force conversion result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceReading {
    pub force: f64,
    /// True when the ADC reading fell below one count of the supply; the
    /// force is reported as the +infinity sentinel.
    pub saturated_low: bool,
}

/// Force from an FSR voltage divider: F = k(V_supply/V_ADC - 1). Readings
/// at or below one 12-bit ADC count of the supply saturate to +infinity.
pub fn fsr_force(v_adc: f64, v_supply: f64, k: f64) -> Result<ForceReading, SensorError> {
    if v_adc > v_supply {
        return Err(SensorError::InvalidReading { v_adc, v_supply });
    }
    let epsilon = v_supply / 4096.0;
    if v_adc <= epsilon {
        return Ok(ForceReading {
            force: f64::INFINITY,
            saturated_low: true,
        });
    }
    Ok(ForceReading {
        force: k * (v_supply / v_adc - 1.0),
        saturated_low: false,
    })
}

pub const MAGNET_ARRAY_POINTS: usize = 120;
/// Fixed-point scale of the magnet-array wire format: raw i16 times this
/// scale gives force units.
pub const MAGNET_FORCE_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TactileKind {
    FsrScalar,
    MagnetArray,
}

/// One decoded tactile frame. Timestamps ride on the enclosing stream
/// record, not the frame itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TactileFrame {
    FsrScalar { raw: u16 },
    /// Exactly 120 three-axis force vectors.
    MagnetArray { forces: Vec<[f64; 3]> },
}

/// Parse a tactile frame. FsrScalar is one little-endian u16; MagnetArray
/// is 120 x 3 little-endian i16 raw values at `MAGNET_FORCE_SCALE`.
pub fn decode_tactile(bytes: &[u8], kind: TactileKind) -> Result<TactileFrame, SensorError> {
    match kind {
        TactileKind::FsrScalar => {
            if bytes.len() != 2 {
                return Err(SensorError::LengthMismatch {
                    expected: 2,
                    got: bytes.len(),
                });
            }
            Ok(TactileFrame::FsrScalar {
                raw: u16::from_le_bytes([bytes[0], bytes[1]]),
            })
        }
        TactileKind::MagnetArray => {
            let expected = MAGNET_ARRAY_POINTS * 3 * 2;
            if bytes.len() != expected {
                return Err(SensorError::LengthMismatch {
                    expected,
                    got: bytes.len(),
                });
            }
            let forces = (0..MAGNET_ARRAY_POINTS)
                .map(|p| {
                    let mut v = [0.0; 3];
                    for (axis, value) in v.iter_mut().enumerate() {
                        let at = (p * 3 + axis) * 2;
                        let raw = i16::from_le_bytes([bytes[at], bytes[at + 1]]);
                        *value = raw as f64 * MAGNET_FORCE_SCALE;
                    }
                    v
                })
                .collect();
            Ok(TactileFrame::MagnetArray { forces })
        }
    }
}

/// Serialize a tactile frame to wire bytes. MagnetArray forces are
/// quantized to the nearest i16 step of `MAGNET_FORCE_SCALE`, saturating
/// at the i16 range.
pub fn encode_tactile(frame: &TactileFrame) -> Result<Vec<u8>, SensorError> {
    match frame {
        TactileFrame::FsrScalar { raw } => Ok(raw.to_le_bytes().to_vec()),
        TactileFrame::MagnetArray { forces } => {
            if forces.len() != MAGNET_ARRAY_POINTS {
                return Err(SensorError::LengthMismatch {
                    expected: MAGNET_ARRAY_POINTS,
                    got: forces.len(),
                });
            }
            let mut out = Vec::with_capacity(MAGNET_ARRAY_POINTS * 6);
            for point in forces {
                for &axis in point {
                    let raw = (axis / MAGNET_FORCE_SCALE).round();
                    let raw = raw.clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                    out.extend_from_slice(&raw.to_le_bytes());
                }
            }
            Ok(out)
        }
    }
}
