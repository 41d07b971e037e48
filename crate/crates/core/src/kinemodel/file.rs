//! Reading and writing hand description files (`.hand`, JSON).
//!
//! File values use degrees and millimeters; the in-memory model uses
//! radians and millimeters. Conversion happens only here.

use std::path::Path;

use nalgebra::{Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;

use super::{
    Branch, DesignBounds, FingerMechanism, FourBarLinkage, HandModel, JointLimits,
    KinematicsError, Mechanism, RevoluteJoint, RigidTransform, SerialChain, SwingFourBar,
    transform_from_parts,
};

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("failed to read hand file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid model field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("mechanism check failed for finger `{finger}`: {source}")]
    Mechanism {
        finger: String,
        source: KinematicsError,
    },
}

impl ModelFileError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformDto {
    #[serde(default)]
    xyz_mm: [f64; 3],
    #[serde(default)]
    rpy_deg: [f64; 3],
}

impl TransformDto {
    fn to_transform(&self) -> RigidTransform {
        transform_from_parts(self.xyz_mm, self.rpy_deg.map(f64::to_radians))
    }

    fn from_transform(t: &RigidTransform) -> Self {
        let (r, p, y) = t.rotation.euler_angles();
        Self {
            xyz_mm: [t.translation.x, t.translation.y, t.translation.z],
            rpy_deg: [r.to_degrees(), p.to_degrees(), y.to_degrees()],
        }
    }

    fn is_identity_default(&self) -> bool {
        self.xyz_mm == [0.0; 3] && self.rpy_deg == [0.0; 3]
    }
}

impl Default for TransformDto {
    fn default() -> Self {
        Self {
            xyz_mm: [0.0; 3],
            rpy_deg: [0.0; 3],
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JointDto {
    #[serde(default)]
    origin: TransformDto,
    axis: [f64; 3],
    limits_deg: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum MechanismDto {
    Serial {
        joints: Vec<JointDto>,
        #[serde(default)]
        tip_offset: TransformDto,
    },
    Fourbar(FourBarDto),
    SwingFourbar {
        swing: JointDto,
        linkage: FourBarDto,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct FourBarDto {
    ground_mm: f64,
    crank_mm: f64,
    coupler_mm: f64,
    rocker_mm: f64,
    coupler_point_mm: [f64; 2],
    branch: Branch,
    input_limits_deg: [f64; 2],
    #[serde(default, skip_serializing_if = "TransformDto::is_identity_default")]
    base_pose: TransformDto,
}

#[derive(Debug, Serialize, Deserialize)]
struct DesignDto {
    /// Per movable anchor, three `[lo, hi]` axis ranges, mm.
    anchor_bounds_mm: Vec<[[f64; 2]; 3]>,
    /// Per link length, `[lo, hi]`, mm.
    length_bounds_mm: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FingerDto {
    name: String,
    mechanism: MechanismDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design: Option<DesignDto>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HandDto {
    name: String,
    fingers: Vec<FingerDto>,
}

fn limits_from_deg(field: &str, deg: [f64; 2]) -> Result<JointLimits, ModelFileError> {
    if !(deg[0] < deg[1]) {
        return Err(ModelFileError::field(
            field,
            format!("limits must satisfy min < max, got [{}, {}]", deg[0], deg[1]),
        ));
    }
    Ok(JointLimits::new(deg[0].to_radians(), deg[1].to_radians()))
}

fn joint_from_dto(field: &str, dto: &JointDto) -> Result<RevoluteJoint, ModelFileError> {
    let axis = Vector3::new(dto.axis[0], dto.axis[1], dto.axis[2]);
    if axis.norm() < 1e-12 {
        return Err(ModelFileError::field(
            format!("{field}.axis"),
            "axis must be nonzero",
        ));
    }
    Ok(RevoluteJoint {
        origin: dto.origin.to_transform(),
        axis: Unit::new_normalize(axis),
        limits: limits_from_deg(&format!("{field}.limits_deg"), dto.limits_deg)?,
    })
}

fn fourbar_from_dto(field: &str, dto: &FourBarDto) -> Result<FourBarLinkage, ModelFileError> {
    for (name, len) in [
        ("ground_mm", dto.ground_mm),
        ("crank_mm", dto.crank_mm),
        ("coupler_mm", dto.coupler_mm),
        ("rocker_mm", dto.rocker_mm),
    ] {
        if !(len > 0.0) || !len.is_finite() {
            return Err(ModelFileError::field(
                format!("{field}.{name}"),
                format!("link length must be positive and finite, got {len}"),
            ));
        }
    }
    Ok(FourBarLinkage {
        ground_mm: dto.ground_mm,
        crank_mm: dto.crank_mm,
        coupler_mm: dto.coupler_mm,
        rocker_mm: dto.rocker_mm,
        coupler_point: Vector2::new(dto.coupler_point_mm[0], dto.coupler_point_mm[1]),
        branch: dto.branch,
        input_limits: limits_from_deg(&format!("{field}.input_limits_deg"), dto.input_limits_deg)?,
        base_pose: dto.base_pose.to_transform(),
    })
}

fn interval_checked(field: &str, pair: [f64; 2]) -> Result<Interval, ModelFileError> {
    if !(pair[0] <= pair[1]) {
        return Err(ModelFileError::field(
            field,
            format!("bound must satisfy lo <= hi, got [{}, {}]", pair[0], pair[1]),
        ));
    }
    Ok(Interval::new(pair[0], pair[1]))
}

fn design_from_dto(field: &str, dto: &DesignDto) -> Result<DesignBounds, ModelFileError> {
    let mut anchors = Vec::with_capacity(dto.anchor_bounds_mm.len());
    for (i, triple) in dto.anchor_bounds_mm.iter().enumerate() {
        let mut axes = [Interval::point(0.0); 3];
        for (k, pair) in triple.iter().enumerate() {
            axes[k] = interval_checked(&format!("{field}.anchor_bounds_mm[{i}][{k}]"), *pair)?;
        }
        anchors.push(axes);
    }
    let mut lengths = Vec::with_capacity(dto.length_bounds_mm.len());
    for (i, pair) in dto.length_bounds_mm.iter().enumerate() {
        lengths.push(interval_checked(
            &format!("{field}.length_bounds_mm[{i}]"),
            *pair,
        )?);
    }
    Ok(DesignBounds { anchors, lengths })
}

fn finger_from_dto(dto: &FingerDto) -> Result<FingerMechanism, ModelFileError> {
    let field = format!("fingers.{}", dto.name);
    if dto.name.is_empty() {
        return Err(ModelFileError::field("fingers.name", "name must be nonempty"));
    }
    let mech = match &dto.mechanism {
        MechanismDto::Serial { joints, tip_offset } => {
            let mut js = Vec::with_capacity(joints.len());
            for (i, j) in joints.iter().enumerate() {
                js.push(joint_from_dto(&format!("{field}.joints[{i}]"), j)?);
            }
            Mechanism::Serial(SerialChain::new(js, tip_offset.to_transform()))
        }
        MechanismDto::Fourbar(fb) => Mechanism::FourBar(fourbar_from_dto(&field, fb)?),
        MechanismDto::SwingFourbar { swing, linkage } => Mechanism::SwingFourBar(SwingFourBar {
            swing: joint_from_dto(&format!("{field}.swing"), swing)?,
            linkage: fourbar_from_dto(&format!("{field}.linkage"), linkage)?,
        }),
    };
    let mut finger = FingerMechanism::new(dto.name.clone(), mech);
    if let Some(d) = &dto.design {
        finger.design_bounds = Some(design_from_dto(&format!("{field}.design"), d)?);
    }
    finger.validate().map_err(|source| ModelFileError::Mechanism {
        finger: dto.name.clone(),
        source,
    })?;
    Ok(finger)
}

fn finger_to_dto(finger: &FingerMechanism) -> FingerDto {
    let joint_to_dto = |j: &RevoluteJoint| JointDto {
        origin: TransformDto::from_transform(&j.origin),
        axis: [j.axis.x, j.axis.y, j.axis.z],
        limits_deg: [j.limits.min.to_degrees(), j.limits.max.to_degrees()],
    };
    let fourbar_to_dto = |l: &FourBarLinkage| FourBarDto {
        ground_mm: l.ground_mm,
        crank_mm: l.crank_mm,
        coupler_mm: l.coupler_mm,
        rocker_mm: l.rocker_mm,
        coupler_point_mm: [l.coupler_point.x, l.coupler_point.y],
        branch: l.branch,
        input_limits_deg: [
            l.input_limits.min.to_degrees(),
            l.input_limits.max.to_degrees(),
        ],
        base_pose: TransformDto::from_transform(&l.base_pose),
    };
    let mechanism = match &finger.mech {
        Mechanism::Serial(c) => MechanismDto::Serial {
            joints: c.joints.iter().map(joint_to_dto).collect(),
            tip_offset: TransformDto::from_transform(&c.tip_offset),
        },
        Mechanism::FourBar(l) => MechanismDto::Fourbar(fourbar_to_dto(l)),
        Mechanism::SwingFourBar(s) => MechanismDto::SwingFourbar {
            swing: joint_to_dto(&s.swing),
            linkage: fourbar_to_dto(&s.linkage),
        },
    };
    let design = finger.design_bounds.as_ref().map(|b| DesignDto {
        anchor_bounds_mm: b
            .anchors
            .iter()
            .map(|axes| axes.map(|iv| [iv.lo, iv.hi]))
            .collect(),
        length_bounds_mm: b.lengths.iter().map(|iv| [iv.lo, iv.hi]).collect(),
    });
    FingerDto {
        name: finger.name.clone(),
        mechanism,
        design,
    }
}

/// Parse a hand model from JSON text.
pub fn parse_hand_model(text: &str) -> Result<HandModel, ModelFileError> {
    let dto: HandDto = serde_json::from_str(text).map_err(|e| ModelFileError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    if dto.name.is_empty() {
        return Err(ModelFileError::field("name", "hand name must be nonempty"));
    }
    let mut fingers = Vec::with_capacity(dto.fingers.len());
    for f in &dto.fingers {
        if fingers
            .iter()
            .any(|g: &FingerMechanism| g.name == f.name)
        {
            return Err(ModelFileError::field(
                "fingers.name",
                format!("duplicate finger name `{}`", f.name),
            ));
        }
        fingers.push(finger_from_dto(f)?);
    }
    Ok(HandModel {
        name: dto.name,
        fingers,
    })
}

/// Load a hand model from a `.hand` JSON file.
pub fn load_hand_model(path: impl AsRef<Path>) -> Result<HandModel, ModelFileError> {
    parse_hand_model(&std::fs::read_to_string(path)?)
}

/// Serialize a hand model to pretty JSON.
pub fn to_hand_json(model: &HandModel) -> String {
    let dto = HandDto {
        name: model.name.clone(),
        fingers: model.fingers.iter().map(finger_to_dto).collect(),
    };
    serde_json::to_string_pretty(&dto).expect("hand DTOs always serialize")
}

/// Write a hand model to a `.hand` JSON file.
pub fn save_hand_model(path: impl AsRef<Path>, model: &HandModel) -> Result<(), ModelFileError> {
    std::fs::write(path, to_hand_json(model) + "\n")?;
    Ok(())
}
