//! Domain types and forward kinematics for robot-hand and exoskeleton finger
//! mechanisms.
//!
//! Three mechanism kinds are supported: open serial chains of revolute
//! joints, closed-loop planar four-bar linkages (the one-input equivalent
//! used for underactuated fingers), and a swing revolute joint carrying a
//! four-bar (the two-input thumb arrangement).
//!
//! All types are immutable after construction and forward kinematics is a
//! pure function, so everything here is safe to evaluate concurrently.

mod file;
mod fourbar;

pub use file::{load_hand_model, parse_hand_model, save_hand_model, to_hand_json, ModelFileError};
pub use fourbar::{Branch, FourBarJoints, FourBarLinkage, FOURBAR_CLOSURE_EPS_MM};

use nalgebra::{Isometry3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::interval::Interval;

/// Rigid transform (rotation + translation, millimeters).
pub type RigidTransform = Isometry3<f64>;

/// Errors raised by forward kinematics and mechanism validation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint}: angle {angle} outside limits [{min}, {max}]")]
    JointLimitViolation {
        joint: usize,
        angle: f64,
        min: f64,
        max: f64,
    },
    #[error("configuration has {got} angles, mechanism has {expected} DoFs")]
    DofMismatch { expected: usize, got: usize },
    #[error("four-bar loop closure unsolvable at input angle {input_angle}")]
    LoopClosureFailure { input_angle: f64 },
    #[error("selected four-bar branch vanishes inside the input range near angle {near_angle}")]
    BranchDiscontinuity { near_angle: f64 },
}

/// Fingertip pose: position plus the distal-link axis direction.
///
/// Twist about the distal axis is deliberately not represented; it is
/// irrelevant to fingertip contact geometry and dropping it keeps the
/// workspace metric well-defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Position in the flange frame, millimeters.
    pub position: Vector3<f64>,
    /// Unit direction of the distal link axis.
    pub direction: Unit<Vector3<f64>>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            position,
            direction: Unit::new_normalize(direction),
        }
    }

    /// Apply a rigid transform to this pose (position and direction both).
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            position: (t * nalgebra::Point3::from(self.position)).coords,
            direction: Unit::new_unchecked(t.rotation * self.direction.into_inner()),
        }
        .into_normalized()
    }

    fn into_normalized(mut self) -> Self {
        self.direction = Unit::new_normalize(self.direction.into_inner());
        self
    }
}

impl Pose {
    /// `transformed` keeps `position` as a `Vector3`; helper for the point form.
    pub fn position_point(&self) -> nalgebra::Point3<f64> {
        nalgebra::Point3::from(self.position)
    }
}

/// Joint angle limits in radians, `min < max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub min: f64,
    pub max: f64,
}

impl JointLimits {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.min && angle <= self.max
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.min, self.max)
    }

    pub fn as_interval(&self) -> Interval {
        Interval::new(self.min, self.max)
    }
}

/// Revolute joint: fixed origin transform from the parent frame, a rotation
/// axis in the joint frame, and angle limits.
#[derive(Debug, Clone, PartialEq)]
pub struct RevoluteJoint {
    pub origin: RigidTransform,
    pub axis: Unit<Vector3<f64>>,
    pub limits: JointLimits,
}

impl RevoluteJoint {
    pub fn new(origin: RigidTransform, axis: Vector3<f64>, limits: JointLimits) -> Self {
        Self {
            origin,
            axis: Unit::new_normalize(axis),
            limits,
        }
    }

    /// Transform contributed by this joint at the given angle.
    pub fn transform(&self, angle: f64) -> RigidTransform {
        self.origin * RigidTransform::rotation(self.axis.into_inner() * angle)
    }
}

/// Open chain of revolute joints with a rigid fingertip offset after the
/// last link. The fingertip direction is the tip frame's x-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialChain {
    pub joints: Vec<RevoluteJoint>,
    pub tip_offset: RigidTransform,
}

impl SerialChain {
    pub fn new(joints: Vec<RevoluteJoint>, tip_offset: RigidTransform) -> Self {
        Self { joints, tip_offset }
    }

    pub fn dofs(&self) -> usize {
        self.joints.len()
    }

    /// Forward kinematics at the given joint angles.
    pub fn fk(&self, angles: &[f64]) -> Result<Pose, KinematicsError> {
        if angles.len() != self.joints.len() {
            return Err(KinematicsError::DofMismatch {
                expected: self.joints.len(),
                got: angles.len(),
            });
        }
        let mut t = RigidTransform::identity();
        for (i, (joint, &angle)) in self.joints.iter().zip(angles).enumerate() {
            if !joint.limits.contains(angle) {
                return Err(KinematicsError::JointLimitViolation {
                    joint: i,
                    angle,
                    min: joint.limits.min,
                    max: joint.limits.max,
                });
            }
            t *= joint.transform(angle);
        }
        t *= self.tip_offset;
        Ok(Pose {
            position: t.translation.vector,
            direction: Unit::new_unchecked(t.rotation * Vector3::x()),
        })
    }
}

/// Swing revolute joint carrying a four-bar linkage; the thumb arrangement
/// with two independent inputs (swing angle, four-bar input angle).
#[derive(Debug, Clone, PartialEq)]
pub struct SwingFourBar {
    pub swing: RevoluteJoint,
    pub linkage: FourBarLinkage,
}

impl SwingFourBar {
    /// FK with `angles = [swing, fourbar_input]`: the swing rotation is
    /// applied first, then the four-bar is solved in the rotated frame.
    pub fn fk(&self, swing_angle: f64, input_angle: f64) -> Result<Pose, KinematicsError> {
        if !self.swing.limits.contains(swing_angle) {
            return Err(KinematicsError::JointLimitViolation {
                joint: 0,
                angle: swing_angle,
                min: self.swing.limits.min,
                max: self.swing.limits.max,
            });
        }
        let swing_t = self.swing.transform(swing_angle);
        let local = self.linkage.fk(input_angle)?;
        Ok(local.transformed(&swing_t))
    }
}

/// Mechanism kind behind a finger.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    Serial(SerialChain),
    FourBar(FourBarLinkage),
    SwingFourBar(SwingFourBar),
}

/// Optimization bounds attached to a finger in a hand description file:
/// per-anchor axis intervals and per-length intervals, matching the design
/// template layout for the finger's mechanism kind.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DesignBounds {
    pub anchors: Vec<[Interval; 3]>,
    pub lengths: Vec<Interval>,
}

/// A named finger mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerMechanism {
    pub name: String,
    pub mech: Mechanism,
    /// Wearability bounds for design optimization, when the hand file
    /// declares them.
    pub design_bounds: Option<DesignBounds>,
}

impl FingerMechanism {
    pub fn new(name: impl Into<String>, mech: Mechanism) -> Self {
        Self {
            name: name.into(),
            mech,
            design_bounds: None,
        }
    }

    /// Number of independent input angles.
    pub fn dofs(&self) -> usize {
        match &self.mech {
            Mechanism::Serial(c) => c.dofs(),
            Mechanism::FourBar(_) => 1,
            Mechanism::SwingFourBar(_) => 2,
        }
    }

    /// Limits of each input angle, in input order.
    pub fn joint_limits(&self) -> Vec<JointLimits> {
        match &self.mech {
            Mechanism::Serial(c) => c.joints.iter().map(|j| j.limits).collect(),
            Mechanism::FourBar(l) => vec![l.input_limits],
            Mechanism::SwingFourBar(s) => vec![s.swing.limits, s.linkage.input_limits],
        }
    }

    /// Fingertip forward kinematics at the given input angles.
    pub fn fk(&self, angles: &[f64]) -> Result<Pose, KinematicsError> {
        let expected = self.dofs();
        if angles.len() != expected {
            return Err(KinematicsError::DofMismatch {
                expected,
                got: angles.len(),
            });
        }
        match &self.mech {
            Mechanism::Serial(c) => c.fk(angles),
            Mechanism::FourBar(l) => {
                if !l.input_limits.contains(angles[0]) {
                    return Err(KinematicsError::JointLimitViolation {
                        joint: 0,
                        angle: angles[0],
                        min: l.input_limits.min,
                        max: l.input_limits.max,
                    });
                }
                l.fk(angles[0])
            }
            Mechanism::SwingFourBar(s) => {
                if !s.linkage.input_limits.contains(angles[1]) {
                    return Err(KinematicsError::JointLimitViolation {
                        joint: 1,
                        angle: angles[1],
                        min: s.linkage.input_limits.min,
                        max: s.linkage.input_limits.max,
                    });
                }
                s.fk(angles[0], angles[1])
            }
        }
    }

    /// Return a copy with `t` applied to the mechanism's base; FK output
    /// transforms covariantly.
    pub fn with_base_transform(&self, t: &RigidTransform) -> Self {
        let mech = match &self.mech {
            Mechanism::Serial(c) => {
                let mut c = c.clone();
                if let Some(first) = c.joints.first_mut() {
                    first.origin = t * first.origin;
                } else {
                    c.tip_offset = t * c.tip_offset;
                }
                Mechanism::Serial(c)
            }
            Mechanism::FourBar(l) => {
                let mut l = l.clone();
                l.base_pose = t * l.base_pose;
                Mechanism::FourBar(l)
            }
            Mechanism::SwingFourBar(s) => {
                let mut s = s.clone();
                s.swing.origin = t * s.swing.origin;
                Mechanism::SwingFourBar(s)
            }
        };
        Self {
            name: self.name.clone(),
            mech,
            design_bounds: self.design_bounds.clone(),
        }
    }

    /// Validate mechanism invariants (limit ordering, four-bar solvability
    /// across the input range).
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (i, lim) in self.joint_limits().iter().enumerate() {
            if !(lim.min < lim.max) {
                return Err(KinematicsError::JointLimitViolation {
                    joint: i,
                    angle: lim.min,
                    min: lim.min,
                    max: lim.max,
                });
            }
        }
        match &self.mech {
            Mechanism::FourBar(l) => l.validate_range(64),
            Mechanism::SwingFourBar(s) => s.linkage.validate_range(64),
            Mechanism::Serial(_) => Ok(()),
        }
    }
}

/// A named set of finger mechanisms rooted at the wrist/flange frame (the
/// flange frame is the identity).
#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub name: String,
    pub fingers: Vec<FingerMechanism>,
}

impl HandModel {
    pub fn finger(&self, name: &str) -> Option<&FingerMechanism> {
        self.fingers.iter().find(|f| f.name == name)
    }

    /// Total actuated DoFs across all fingers.
    pub fn total_dofs(&self) -> usize {
        self.fingers.iter().map(|f| f.dofs()).sum()
    }
}

/// Convenience: build a rigid transform from translation (mm) and
/// roll-pitch-yaw (radians).
pub fn transform_from_parts(translation_mm: [f64; 3], rpy: [f64; 3]) -> RigidTransform {
    Isometry3::from_parts(
        nalgebra::Translation3::new(translation_mm[0], translation_mm[1], translation_mm[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn one_joint_chain() -> SerialChain {
        SerialChain::new(
            vec![RevoluteJoint::new(
                RigidTransform::identity(),
                Vector3::z(),
                JointLimits::new(-PI, PI),
            )],
            transform_from_parts([100.0, 0.0, 0.0], [0.0; 3]),
        )
    }

    #[test]
    fn fk_serial_identity_configuration() {
        let chain = one_joint_chain();
        let pose = chain.fk(&[0.0]).unwrap();
        assert_relative_eq!(pose.position, Vector3::new(100.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(
            pose.direction.into_inner(),
            Vector3::new(1.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn fk_serial_quarter_turn() {
        let chain = one_joint_chain();
        let pose = chain.fk(&[FRAC_PI_2]).unwrap();
        assert_relative_eq!(pose.position, Vector3::new(0.0, 100.0, 0.0), epsilon = 1e-9);
        assert_relative_eq!(
            pose.direction.into_inner(),
            Vector3::new(0.0, 1.0, 0.0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn fk_serial_limit_violation() {
        let chain = SerialChain::new(
            vec![RevoluteJoint::new(
                RigidTransform::identity(),
                Vector3::z(),
                JointLimits::new(0.0, 1.0),
            )],
            RigidTransform::identity(),
        );
        match chain.fk(&[1.5]) {
            Err(KinematicsError::JointLimitViolation { joint: 0, .. }) => {}
            other => panic!("expected limit violation, got {other:?}"),
        }
    }

    // Independent oracle: hand-rolled 4x4 homogeneous matrix composition,
    // no nalgebra isometries involved.
    mod matoracle {
        pub type Mat4 = [[f64; 4]; 4];

        pub fn identity() -> Mat4 {
            let mut m = [[0.0; 4]; 4];
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            m
        }

        pub fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
            let mut out = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            out
        }

        pub fn translation(x: f64, y: f64, z: f64) -> Mat4 {
            let mut m = identity();
            m[0][3] = x;
            m[1][3] = y;
            m[2][3] = z;
            m
        }

        pub fn rot_z(theta: f64) -> Mat4 {
            let (s, c) = theta.sin_cos();
            let mut m = identity();
            m[0][0] = c;
            m[0][1] = -s;
            m[1][0] = s;
            m[1][1] = c;
            m
        }
    }

    #[test]
    fn fk_serial_matches_matrix_product_oracle() {
        use matoracle::*;
        // Planar 3-joint chain, z axes, links along x.
        let links = [60.0, 40.0, 25.0];
        let mut joints = Vec::new();
        for (i, _) in links.iter().enumerate() {
            let origin = if i == 0 {
                RigidTransform::identity()
            } else {
                transform_from_parts([links[i - 1], 0.0, 0.0], [0.0; 3])
            };
            joints.push(RevoluteJoint::new(
                origin,
                Vector3::z(),
                JointLimits::new(-PI, PI),
            ));
        }
        let chain = SerialChain::new(joints, transform_from_parts([links[2], 0.0, 0.0], [0.0; 3]));

        let configs = [
            [0.3, -0.7, 1.1],
            [1.2, 0.4, -0.9],
            [-2.0, 2.0, 0.5],
            [0.0, 0.0, 0.0],
        ];
        for theta in configs {
            let pose = chain.fk(&theta).unwrap();

            let mut m = identity();
            for i in 0..3 {
                if i > 0 {
                    m = mul(&m, &translation(links[i - 1], 0.0, 0.0));
                }
                m = mul(&m, &rot_z(theta[i]));
            }
            m = mul(&m, &translation(links[2], 0.0, 0.0));

            assert_relative_eq!(pose.position.x, m[0][3], epsilon = 1e-9);
            assert_relative_eq!(pose.position.y, m[1][3], epsilon = 1e-9);
            assert_relative_eq!(pose.position.z, m[2][3], epsilon = 1e-9);
            // Direction is the rotated x-axis, i.e. the first matrix column.
            assert_relative_eq!(pose.direction.x, m[0][0], epsilon = 1e-9);
            assert_relative_eq!(pose.direction.y, m[1][0], epsilon = 1e-9);
            assert_relative_eq!(pose.direction.z, m[2][0], epsilon = 1e-9);
        }
    }

    #[test]
    fn fk_serial_zero_config_composes_origins_only() {
        let j1 = transform_from_parts([10.0, 2.0, -3.0], [0.1, 0.2, 0.3]);
        let j2 = transform_from_parts([30.0, 0.0, 5.0], [-0.2, 0.1, 0.4]);
        let tip = transform_from_parts([20.0, 1.0, 0.0], [0.0, 0.3, -0.1]);
        let chain = SerialChain::new(
            vec![
                RevoluteJoint::new(j1, Vector3::z(), JointLimits::new(-1.0, 1.0)),
                RevoluteJoint::new(j2, Vector3::y(), JointLimits::new(-1.0, 1.0)),
            ],
            tip,
        );
        let pose = chain.fk(&[0.0, 0.0]).unwrap();
        let composed = j1 * j2 * tip;
        assert_relative_eq!(pose.position, composed.translation.vector, epsilon = 1e-12);
        assert_relative_eq!(
            pose.direction.into_inner(),
            composed.rotation * Vector3::x(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn fk_is_deterministic() {
        let chain = one_joint_chain();
        let a = chain.fk(&[0.734]).unwrap();
        let b = chain.fk(&[0.734]).unwrap();
        assert_eq!(a.position, b.position);
        assert_eq!(a.direction.into_inner(), b.direction.into_inner());
    }

    #[test]
    fn fk_transforms_covariantly_under_base_transform() {
        let linkage = crate::synth::demo_fourbar();
        let chain_finger = FingerMechanism::new(
            "serial",
            Mechanism::Serial(SerialChain::new(
                vec![
                    RevoluteJoint::new(
                        transform_from_parts([5.0, 1.0, 0.0], [0.0, 0.0, 0.2]),
                        Vector3::z(),
                        JointLimits::new(-1.0, 1.5),
                    ),
                    RevoluteJoint::new(
                        transform_from_parts([40.0, 0.0, 0.0], [0.0; 3]),
                        Vector3::z(),
                        JointLimits::new(-1.0, 1.5),
                    ),
                ],
                transform_from_parts([30.0, 0.0, 0.0], [0.0; 3]),
            )),
        );
        let fourbar_finger = FingerMechanism::new("fb", Mechanism::FourBar(linkage));

        let t = transform_from_parts([12.0, -7.0, 3.0], [0.4, -0.2, 1.1]);
        for (finger, theta) in [
            (&chain_finger, vec![0.3, 0.8]),
            (&fourbar_finger, vec![1.2]),
        ] {
            let moved = finger.with_base_transform(&t);
            let base = finger.fk(&theta).unwrap();
            let via_mech = moved.fk(&theta).unwrap();
            let via_pose = base.transformed(&t);
            assert_relative_eq!(via_mech.position, via_pose.position, epsilon = 1e-9);
            assert_relative_eq!(
                via_mech.direction.into_inner(),
                via_pose.direction.into_inner(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn swing_zero_matches_plain_fourbar() {
        let linkage = crate::synth::demo_fourbar();
        let swing = SwingFourBar {
            swing: RevoluteJoint::new(
                RigidTransform::identity(),
                Vector3::x(),
                JointLimits::new(-PI, PI),
            ),
            linkage: linkage.clone(),
        };
        let theta_in = 1.0;
        let a = swing.fk(0.0, theta_in).unwrap();
        let b = linkage.fk(theta_in).unwrap();
        assert_relative_eq!(a.position, b.position, epsilon = 1e-12);
        assert_relative_eq!(
            a.direction.into_inner(),
            b.direction.into_inner(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn swing_pi_rotates_output_about_swing_axis() {
        let linkage = crate::synth::demo_fourbar();
        let swing = SwingFourBar {
            swing: RevoluteJoint::new(
                RigidTransform::identity(),
                Vector3::x(),
                JointLimits::new(-2.0 * PI, 2.0 * PI),
            ),
            linkage: linkage.clone(),
        };
        let theta_in = 0.9;
        let rotated = swing.fk(PI, theta_in).unwrap();
        let base = linkage.fk(theta_in).unwrap();
        let rot = RigidTransform::rotation(Vector3::x() * PI);
        let expected = base.transformed(&rot);
        assert_relative_eq!(rotated.position, expected.position, epsilon = 1e-9);
        assert_relative_eq!(
            rotated.direction.into_inner(),
            expected.direction.into_inner(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn swing_composition_oracle() {
        // fk(swing, input) must equal the explicit swing transform composed
        // with the plain four-bar pose, for arbitrary angles.
        let linkage = crate::synth::demo_fourbar();
        let origin = transform_from_parts([4.0, -2.0, 7.0], [0.2, 0.0, -0.4]);
        let swing = SwingFourBar {
            swing: RevoluteJoint::new(origin, Vector3::y(), JointLimits::new(-PI, PI)),
            linkage: linkage.clone(),
        };
        for (s, b) in [(0.4, 0.8), (-1.2, 1.3), (2.0, 1.05), (-0.3, 0.95)] {
            let got = swing.fk(s, b).unwrap();
            let t = origin * RigidTransform::rotation(Vector3::y() * s);
            let expected = linkage.fk(b).unwrap().transformed(&t);
            assert_relative_eq!(got.position, expected.position, epsilon = 1e-9);
            assert_relative_eq!(
                got.direction.into_inner(),
                expected.direction.into_inner(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn dof_mismatch_is_reported() {
        let finger = FingerMechanism::new("f", Mechanism::FourBar(crate::synth::demo_fourbar()));
        assert!(matches!(
            finger.fk(&[0.1, 0.2]),
            Err(KinematicsError::DofMismatch {
                expected: 1,
                got: 2
            })
        ));
    }
}
