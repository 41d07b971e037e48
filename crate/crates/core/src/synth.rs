//! Deterministic generators for demo data: bundled hand models, random
//! solvable linkages, and synthetic sensor logs. Everything here is seeded;
//! given the same seed the output is identical across runs and platforms.

use nalgebra::Vector2;
use rand::Rng;

use crate::calibmap::{CalibPair, Direction};
use crate::kinemodel::{
    parse_hand_model, transform_from_parts, Branch, FourBarLinkage, HandModel, JointLimits,
    ModelFileError, RigidTransform,
};
use crate::sensorstream::{EncoderPacket, PACKET_HEADER};

const TOY2F: &str = include_str!("../fixtures/toy2f.hand");
const INSPIRE_LIKE: &str = include_str!("../fixtures/inspire_like.hand");
const XHAND_LIKE: &str = include_str!("../fixtures/xhand_like.hand");

/// Names accepted by [`bundled_hand`].
pub const BUNDLED_HAND_NAMES: [&str; 3] = ["toy2f", "inspire_like", "xhand_like"];

/// Parse one of the hand models shipped with the crate:
///
/// * `toy2f`: two planar serial fingers, for quick tests,
/// * `inspire_like`: four one-input four-bar fingers plus a two-input
///   swing + four-bar thumb (6 actuated DoFs),
/// * `xhand_like`: five serial fingers totalling 12 actuated DoFs.
pub fn bundled_hand(name: &str) -> Result<HandModel, ModelFileError> {
    let text = match name {
        "toy2f" => TOY2F,
        "inspire_like" => INSPIRE_LIKE,
        "xhand_like" => XHAND_LIKE,
        other => {
            return Err(ModelFileError::Validation {
                field: "name".into(),
                message: format!(
                    "unknown bundled hand `{other}`; available: {}",
                    BUNDLED_HAND_NAMES.join(", ")
                ),
            })
        }
    };
    parse_hand_model(text)
}

/// Fixed linkage used across unit tests: solvable at every crank angle.
pub fn demo_fourbar() -> FourBarLinkage {
    FourBarLinkage {
        ground_mm: 40.0,
        crank_mm: 15.0,
        coupler_mm: 38.0,
        rocker_mm: 28.0,
        coupler_point: Vector2::new(45.0, 8.0),
        branch: Branch::Positive,
        input_limits: JointLimits::new(0.2, 1.8),
        base_pose: RigidTransform::identity(),
    }
}

/// Draw a random four-bar linkage that closes at every crank angle.
///
/// Crank reach from the rocker pivot spans `[ground - crank, ground + crank]`
/// over a full revolution; the coupler and rocker are sized so that
/// `|coupler - rocker|` sits well below the low end and `coupler + rocker`
/// well above the high end, which makes every input angle solvable on both
/// branches.
pub fn random_solvable_fourbar<R: Rng + ?Sized>(rng: &mut R) -> FourBarLinkage {
    let ground: f64 = rng.random_range(25.0..60.0);
    let crank: f64 = ground * rng.random_range(0.2..0.6);
    let d_min = ground - crank;
    let d_max = ground + crank;

    let sum = d_max * rng.random_range(1.1..1.5);
    let diff = d_min * rng.random_range(0.0..0.7);
    let coupler = (sum + diff) / 2.0;
    let rocker = (sum - diff) / 2.0;

    let lo = rng.random_range(-std::f64::consts::PI..0.0);
    let span = rng.random_range(1.0..4.5);
    let coupler_point = Vector2::new(
        coupler * rng.random_range(0.3..1.4),
        coupler * rng.random_range(-0.35..0.35),
    );
    let branch = if rng.random_range(0..2) == 0 {
        Branch::Positive
    } else {
        Branch::Negative
    };
    FourBarLinkage {
        ground_mm: ground,
        crank_mm: crank,
        coupler_mm: coupler,
        rocker_mm: rocker,
        coupler_point,
        branch,
        input_limits: JointLimits::new(lo, lo + span),
        base_pose: random_transform(rng, 30.0),
    }
}

/// Random rigid transform with translation bounded by `max_offset_mm`.
pub fn random_transform<R: Rng + ?Sized>(rng: &mut R, max_offset_mm: f64) -> RigidTransform {
    let t = [
        rng.random_range(-max_offset_mm..max_offset_mm),
        rng.random_range(-max_offset_mm..max_offset_mm),
        rng.random_range(-max_offset_mm..max_offset_mm),
    ];
    let rpy = [
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.random_range(-1.5..1.5),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    ];
    transform_from_parts(t, rpy)
}

/// Random sensor packet: up to 16 channels of 12-bit readings and a
/// nonzero 12-bit supply. The 12-bit ceiling keeps every u16 high byte at
/// or below 0x0F, so payload bytes can never alias the packet header.
pub fn random_encoder_packet<R: Rng + ?Sized>(rng: &mut R) -> EncoderPacket {
    let n = rng.random_range(1..=16);
    EncoderPacket {
        channels: (0..n).map(|_| rng.random_range(0..=0x0FFF)).collect(),
        supply_raw: rng.random_range(1500..=4095),
    }
}

/// Random filler bytes whose alphabet excludes both header bytes, so
/// garbage runs cannot fake a packet start.
pub fn garbage_bytes<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<u8> {
    (0..len)
        .map(|_| loop {
            let b: u8 = rng.random();
            if b != PACKET_HEADER[0] && b != PACKET_HEADER[1] {
                break b;
            }
        })
        .collect()
}

/// Closing/opening calibration sweep around a linear backbone with a
/// fixed hysteresis separation: the closing branch reads `width/2` above
/// the backbone, the opening branch `width/2` below.
pub fn hysteresis_loop(
    samples_per_branch: usize,
    angle_span_rad: f64,
    motor_per_rad: f64,
    width: f64,
) -> Vec<CalibPair> {
    let n = samples_per_branch.max(2);
    let backbone = |x: f64| motor_per_rad * x;
    let mut pairs = Vec::with_capacity(2 * n);
    for i in 0..n {
        let x = angle_span_rad * i as f64 / (n - 1) as f64;
        pairs.push(CalibPair {
            encoder_angle: x,
            motor_value: backbone(x) + width / 2.0,
            direction: Direction::Closing,
        });
    }
    for i in (0..n).rev() {
        let x = angle_span_rad * i as f64 / (n - 1) as f64;
        pairs.push(CalibPair {
            encoder_angle: x,
            motor_value: backbone(x) - width / 2.0,
            direction: Direction::Opening,
        });
    }
    pairs
}
