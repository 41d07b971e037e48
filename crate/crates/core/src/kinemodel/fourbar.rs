//! Planar four-bar linkage with an analytic loop-closure solve.
//!
//! Geometry and conventions, all in the linkage plane (the x-y plane of the
//! linkage base frame, millimeters):
//!
//! * ground pivots `O1 = (0, 0)` and `O2 = (ground, 0)`,
//! * crank of length `crank` driven at `O1` by the input angle, so its
//!   moving pivot is `A = crank * (cos th, sin th)`,
//! * coupler of length `coupler` from `A` to the rocker pivot `B`,
//! * rocker of length `rocker` from `O2` to `B`.
//!
//! For a given input angle the loop closes where the circle of radius
//! `coupler` around `A` meets the circle of radius `rocker` around `O2`;
//! there are generically two intersections, selected by [`Branch`]. The
//! fingertip is a point rigidly attached to the coupler, expressed in the
//! coupler frame (origin `A`, x-axis toward `B`), and the fingertip
//! direction is that frame's x-axis. `base_pose` places the whole linkage
//! plane in 3D.

use nalgebra::{Point3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{JointLimits, KinematicsError, Pose, RigidTransform};

/// Margin (mm) kept away from the singular stretched/folded configurations;
/// inside the margin the solve is rejected rather than returning a near
/// tangent intersection with an ill-conditioned perpendicular component.
pub const FOURBAR_CLOSURE_EPS_MM: f64 = 1e-6;

/// Which of the two circle intersections closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Intersection on the +90 degree side of the `A -> O2` segment.
    Positive,
    /// Intersection on the -90 degree side.
    Negative,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }
}

/// In-plane joint positions of one solved configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourBarJoints {
    /// Crank ground pivot (always the origin).
    pub o1: Vector2<f64>,
    /// Rocker ground pivot.
    pub o2: Vector2<f64>,
    /// Crank tip / coupler proximal pivot.
    pub a: Vector2<f64>,
    /// Rocker tip / coupler distal pivot.
    pub b: Vector2<f64>,
}

impl FourBarJoints {
    /// Largest absolute deviation of the three moving bar lengths from
    /// their nominal values; zero for an exact closure.
    pub fn closure_residual(&self, linkage: &FourBarLinkage) -> f64 {
        let crank_err = ((self.a - self.o1).norm() - linkage.crank_mm).abs();
        let coupler_err = ((self.b - self.a).norm() - linkage.coupler_mm).abs();
        let rocker_err = ((self.b - self.o2).norm() - linkage.rocker_mm).abs();
        crank_err.max(coupler_err).max(rocker_err)
    }
}

/// One-input closed-loop linkage; see the module docs for conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct FourBarLinkage {
    /// Distance between the ground pivots, mm.
    pub ground_mm: f64,
    /// Driven link length, mm.
    pub crank_mm: f64,
    /// Floating link length (carries the fingertip), mm.
    pub coupler_mm: f64,
    /// Follower link length, mm.
    pub rocker_mm: f64,
    /// Fingertip offset in the coupler frame `(along x toward B, along y)`, mm.
    pub coupler_point: Vector2<f64>,
    pub branch: Branch,
    /// Input (crank) angle limits, radians.
    pub input_limits: JointLimits,
    /// Pose of the linkage base frame; the linkage lives in its x-y plane.
    pub base_pose: RigidTransform,
}

impl FourBarLinkage {
    /// Solve the loop closure at `input_angle`, returning the in-plane
    /// joint positions. Fails when the two circles do not intersect (or
    /// come within [`FOURBAR_CLOSURE_EPS_MM`] of tangency).
    pub fn solve_loop(&self, input_angle: f64) -> Result<FourBarJoints, KinematicsError> {
        let o1 = Vector2::zeros();
        let o2 = Vector2::new(self.ground_mm, 0.0);
        let a = self.crank_mm * Vector2::new(input_angle.cos(), input_angle.sin());
        let ao2 = o2 - a;
        let d = ao2.norm();

        let b_len = self.coupler_mm;
        let c_len = self.rocker_mm;
        if d < (b_len - c_len).abs() + FOURBAR_CLOSURE_EPS_MM
            || d > b_len + c_len - FOURBAR_CLOSURE_EPS_MM
        {
            return Err(KinematicsError::LoopClosureFailure { input_angle });
        }

        let along = (b_len * b_len - c_len * c_len + d * d) / (2.0 * d);
        let perp = (b_len * b_len - along * along).max(0.0).sqrt();
        let u = ao2 / d;
        let v = Vector2::new(-u.y, u.x);
        let b = a + along * u + self.branch.sign() * perp * v;

        Ok(FourBarJoints { o1, o2, a, b })
    }

    /// Coupler frame x-axis (unit, in-plane) of a solved configuration.
    fn coupler_x(&self, joints: &FourBarJoints) -> Vector2<f64> {
        (joints.b - joints.a) / self.coupler_mm
    }

    /// Fingertip pose at `input_angle`, in the frame `base_pose` is
    /// expressed in. Input limits are not checked here; they are enforced
    /// by the owning mechanism so the raw linkage can be probed anywhere.
    pub fn fk(&self, input_angle: f64) -> Result<Pose, KinematicsError> {
        let joints = self.solve_loop(input_angle)?;
        let x = self.coupler_x(&joints);
        let y = Vector2::new(-x.y, x.x);
        let p = joints.a + self.coupler_point.x * x + self.coupler_point.y * y;

        let position = self.base_pose * Point3::new(p.x, p.y, 0.0);
        let direction = self.base_pose.rotation * Vector3::new(x.x, x.y, 0.0);
        Ok(Pose {
            position: position.coords,
            direction: Unit::new_normalize(direction),
        })
    }

    /// Probe `n + 1` evenly spaced input angles across the limit range
    /// (endpoints inclusive) and require every one to close.
    ///
    /// Reports [`KinematicsError::BranchDiscontinuity`] when both endpoints
    /// close but an interior angle does not. That case means the workspace
    /// splits into disconnected arcs, which a physical finger cannot
    /// traverse.
    pub fn validate_range(&self, n: usize) -> Result<(), KinematicsError> {
        debug_assert!(n >= 2);
        let lim = self.input_limits;
        let angle_at = |i: usize| lim.min + (lim.max - lim.min) * (i as f64) / (n as f64);
        let mut first_failure = None;
        for i in 0..=n {
            let th = angle_at(i);
            if self.solve_loop(th).is_err() && first_failure.is_none() {
                first_failure = Some((i, th));
            }
        }
        match first_failure {
            None => Ok(()),
            Some((i, th)) => {
                let endpoints_ok =
                    self.solve_loop(lim.min).is_ok() && self.solve_loop(lim.max).is_ok();
                if endpoints_ok && i != 0 && i != n {
                    Err(KinematicsError::BranchDiscontinuity { near_angle: th })
                } else {
                    Err(KinematicsError::LoopClosureFailure { input_angle: th })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinemodel::transform_from_parts;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn demo() -> FourBarLinkage {
        crate::synth::demo_fourbar()
    }

    #[test]
    fn closure_residual_is_tiny_on_demo_sweep() {
        let l = demo();
        for i in 0..=64 {
            let th = l.input_limits.min + l.input_limits.span() * (i as f64) / 64.0;
            let joints = l.solve_loop(th).unwrap();
            assert!(
                joints.closure_residual(&l) <= 1e-9,
                "residual {} at angle {}",
                joints.closure_residual(&l),
                th
            );
        }
    }

    #[test]
    fn closure_residual_random_linkages() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let l = crate::synth::random_solvable_fourbar(&mut rng);
            for i in 0..=64 {
                let th = l.input_limits.min + l.input_limits.span() * (i as f64) / 64.0;
                let joints = l.solve_loop(th).unwrap();
                assert!(joints.closure_residual(&l) <= 1e-9);
            }
        }
    }

    #[test]
    fn parallelogram_coupler_stays_parallel_to_ground() {
        // ground == coupler and crank == rocker: the coupler translates on a
        // circle without rotating, and the rocker mirrors the crank angle.
        let l = FourBarLinkage {
            ground_mm: 50.0,
            crank_mm: 30.0,
            coupler_mm: 50.0,
            rocker_mm: 30.0,
            coupler_point: Vector2::new(25.0, 10.0),
            branch: Branch::Positive,
            input_limits: JointLimits::new(0.35, PI - 0.35),
            base_pose: RigidTransform::identity(),
        };
        for i in 0..=64 {
            let th = l.input_limits.min + l.input_limits.span() * (i as f64) / 64.0;
            let joints = l.solve_loop(th).unwrap();
            let x = (joints.b - joints.a) / l.coupler_mm;
            assert_relative_eq!(x.x, 1.0, epsilon = 1e-9);
            assert!(x.y.abs() <= 1e-9, "coupler tilted by {}", x.y);
            // Rocker angle about O2 equals the crank angle about O1.
            let rocker = joints.b - joints.o2;
            let rocker_angle = rocker.y.atan2(rocker.x);
            assert_relative_eq!(rocker_angle, th, epsilon = 1e-9);
            // Fingertip direction is the base x-axis for every input.
            let pose = l.fk(th).unwrap();
            assert_relative_eq!(
                pose.direction.into_inner(),
                Vector3::new(1.0, 0.0, 0.0),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn branches_mirror_across_the_a_o2_line() {
        let l = demo();
        let mut flipped = l.clone();
        flipped.branch = Branch::Negative;
        let th = 1.1;
        let jp = l.solve_loop(th).unwrap();
        let jn = flipped.solve_loop(th).unwrap();
        // Same chord foot, opposite perpendicular offset: midpoint of the
        // two B solutions lies on the A -> O2 line.
        let mid = (jp.b + jn.b) / 2.0;
        let u = (jp.o2 - jp.a).normalize();
        let rel = mid - jp.a;
        let off = rel - u * rel.dot(&u);
        assert!(off.norm() <= 1e-9);
        assert!((jp.b - jn.b).norm() > 1.0, "branches should differ");
    }

    #[test]
    fn stretched_linkage_fails_to_close() {
        let mut l = demo();
        l.coupler_mm = 10.0;
        l.rocker_mm = 10.0; // crank tip can move far beyond 20mm reach of B
        match l.solve_loop(PI / 2.0) {
            Err(KinematicsError::LoopClosureFailure { .. }) => {}
            other => panic!("expected closure failure, got {other:?}"),
        }
    }

    #[test]
    fn coupler_point_extremes_land_on_pivots() {
        let mut l = demo();
        let th = 0.9;
        let joints = l.solve_loop(th).unwrap();

        l.coupler_point = Vector2::zeros();
        let at_a = l.fk(th).unwrap();
        assert_relative_eq!(
            at_a.position,
            Vector3::new(joints.a.x, joints.a.y, 0.0),
            epsilon = 1e-9
        );

        l.coupler_point = Vector2::new(l.coupler_mm, 0.0);
        let at_b = l.fk(th).unwrap();
        assert_relative_eq!(
            at_b.position,
            Vector3::new(joints.b.x, joints.b.y, 0.0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn base_pose_moves_output_rigidly() {
        let mut l = demo();
        let flat = l.fk(1.0).unwrap();
        let t = transform_from_parts([3.0, -8.0, 12.0], [0.7, -0.3, 0.25]);
        l.base_pose = t;
        let moved = l.fk(1.0).unwrap();
        let expected = flat.transformed(&t);
        assert_relative_eq!(moved.position, expected.position, epsilon = 1e-9);
        assert_relative_eq!(
            moved.direction.into_inner(),
            expected.direction.into_inner(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn validate_range_flags_interior_gap_as_branch_discontinuity() {
        // Crank reach d(th) = sqrt(g^2 + a^2 - 2 g a cos th) grows with th on
        // [0, pi]; choose b + c so the circle pair separates mid-range when
        // th is large, while both limit endpoints stay solvable.
        let l = FourBarLinkage {
            ground_mm: 60.0,
            crank_mm: 30.0,
            coupler_mm: 40.0,
            rocker_mm: 40.0,
            coupler_point: Vector2::new(20.0, 0.0),
            branch: Branch::Positive,
            // d at 0 is 30, at pi is 90 > 80 = b + c: unsolvable there. A
            // symmetric limit range keeps endpoints solvable and breaks in
            // the middle only for ranges that wrap through pi.
            input_limits: JointLimits::new(0.5 * PI, 2.5 * PI),
            base_pose: RigidTransform::identity(),
        };
        assert!(l.solve_loop(l.input_limits.min).is_ok());
        assert!(l.solve_loop(l.input_limits.max).is_ok());
        match l.validate_range(64) {
            Err(KinematicsError::BranchDiscontinuity { .. }) => {}
            other => panic!("expected branch discontinuity, got {other:?}"),
        }
    }

    #[test]
    fn validate_range_accepts_demo() {
        demo().validate_range(64).unwrap();
    }
}
