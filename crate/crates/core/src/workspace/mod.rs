//! Fingertip workspace sampling and the bidirectional similarity score
//! between an exoskeleton finger design and a target robot finger.
//!
//! The score compares two sampled pose sets: for every robot sample the
//! squared pose distance to the nearest exoskeleton sample (coverage), and
//! for every exoskeleton sample the squared distance back to the nearest
//! robot sample (containment). The final score is the negated sum of both
//! terms, so a perfect bidirectional match scores exactly zero and
//! everything else is negative. Coverage pulls the design toward reaching
//! every target pose; the containment term penalizes designs that can also
//! reach poses the robot cannot, which would let a demonstrator record
//! unreachable motions.

mod fit;
mod index;

pub use fit::{fit_equivalent_linkage, LinkageFit};
pub use index::PoseIndex;

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinemodel::{FingerMechanism, KinematicsError, Pose};

/// Number of worst-match pairs kept in a [`SimilarityReport`].
const OFFENDER_COUNT: usize = 10;

/// First primes, one per sampled DoF, for the low-discrepancy sequence.
const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace set is empty")]
    EmptyWorkspace,
    #[error("sampling counts invalid: {0}")]
    BadSampleSpec(String),
    #[error("kinematics failure during sampling: {0}")]
    Kinematics(#[from] KinematicsError),
    #[error("CSV I/O failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("file I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV row {row}: {message}")]
    BadRow { row: usize, message: String },
}

/// Weight of the direction term in the pose metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMetricParams {
    /// Millimeters of position error equivalent to one unit of direction
    /// error; 0 recovers position-only matching.
    pub lambda_mm: f64,
}

impl Default for PoseMetricParams {
    fn default() -> Self {
        Self { lambda_mm: 10.0 }
    }
}

/// Squared distance between fingertip poses:
/// `|p1 - p2|^2 + lambda^2 * |d1 - d2|^2`, in mm².
///
/// This function is the single definition of the metric; the spatial index
/// and every brute-force scan call it, so they agree bit for bit.
pub fn pose_distance_sq(a: &Pose, b: &Pose, m: &PoseMetricParams) -> f64 {
    let dp = a.position - b.position;
    let dd = a.direction.into_inner() - b.direction.into_inner();
    dp.norm_squared() + m.lambda_mm * m.lambda_mm * dd.norm_squared()
}

/// One workspace sample: the joint configuration and the pose it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceSample {
    pub config: Vec<f64>,
    pub pose: Pose,
}

/// A sampled fingertip workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct FingertipPoseSet {
    pub samples: Vec<WorkspaceSample>,
    /// Identifier of the generating mechanism or input file.
    pub source: String,
}

impl FingertipPoseSet {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            samples: Vec::new(),
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    /// Copy with a rigid transform applied to every pose (configs kept).
    pub fn transformed(&self, t: &crate::kinemodel::RigidTransform) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| WorkspaceSample {
                    config: s.config.clone(),
                    pose: s.pose.transformed(t),
                })
                .collect(),
            source: self.source.clone(),
        }
    }
}

/// How to draw joint configurations from the limit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Per-DoF uniform grid, both endpoints included.
    Grid { per_dof: Vec<usize> },
    /// Halton low-discrepancy sequence over the limit box; `offset` shifts
    /// the starting index so independent draws stay deterministic.
    LowDiscrepancy {
        count: usize,
        #[serde(default)]
        offset: u64,
    },
}

/// Counts from one sampling run. Samples whose loop closure fails are
/// skipped but never silently: they show up here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub requested: usize,
    pub produced: usize,
    pub skipped: usize,
}

/// Radical-inverse of `i` in the given base, in [0, 1).
fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Sample the fingertip workspace of one finger mechanism.
///
/// Deterministic for a fixed `(scheme, mechanism)`. Configurations always
/// lie inside the joint limits; configurations whose four-bar loop fails to
/// close are counted in the report and excluded from the set.
pub fn sample_workspace(
    mech: &FingerMechanism,
    scheme: &SamplingScheme,
) -> Result<(FingertipPoseSet, SampleReport), WorkspaceError> {
    let limits = mech.joint_limits();
    let dofs = limits.len();
    let configs: Vec<Vec<f64>> = match scheme {
        SamplingScheme::Grid { per_dof } => {
            if per_dof.len() != dofs {
                return Err(WorkspaceError::BadSampleSpec(format!(
                    "grid has {} counts, mechanism has {} DoFs",
                    per_dof.len(),
                    dofs
                )));
            }
            if per_dof.iter().any(|&n| n < 2) {
                return Err(WorkspaceError::BadSampleSpec(
                    "grid needs at least 2 samples per DoF".into(),
                ));
            }
            let total: usize = per_dof.iter().product();
            let mut configs = Vec::with_capacity(total);
            let mut idx = vec![0usize; dofs];
            loop {
                let cfg: Vec<f64> = (0..dofs)
                    .map(|d| {
                        // Endpoint-exact interpolation: `min + span*i/(n-1)`
                        // can round an ulp past `max` and fail the limit
                        // check downstream.
                        let t = (idx[d] as f64) / ((per_dof[d] - 1) as f64);
                        limits[d].clamp(limits[d].min * (1.0 - t) + limits[d].max * t)
                    })
                    .collect();
                configs.push(cfg);
                // Odometer increment, last DoF fastest.
                let mut d = dofs;
                loop {
                    if d == 0 {
                        break;
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < per_dof[d] {
                        break;
                    }
                    idx[d] = 0;
                }
                if idx.iter().all(|&i| i == 0) {
                    break;
                }
            }
            configs
        }
        SamplingScheme::LowDiscrepancy { count, offset } => {
            if *count == 0 {
                return Err(WorkspaceError::BadSampleSpec("count must be > 0".into()));
            }
            if dofs > HALTON_BASES.len() {
                return Err(WorkspaceError::BadSampleSpec(format!(
                    "low-discrepancy sampling supports up to {} DoFs",
                    HALTON_BASES.len()
                )));
            }
            (0..*count)
                .map(|i| {
                    (0..dofs)
                        .map(|d| {
                            let u = halton(offset + i as u64 + 1, HALTON_BASES[d]);
                            limits[d].clamp(limits[d].min + limits[d].span() * u)
                        })
                        .collect()
                })
                .collect()
        }
    };

    let requested = configs.len();
    let mut set = FingertipPoseSet::new(mech.name.clone());
    let mut skipped = 0usize;
    for config in configs {
        match mech.fk(&config) {
            Ok(pose) => set.samples.push(WorkspaceSample { config, pose }),
            Err(KinematicsError::LoopClosureFailure { .. })
            | Err(KinematicsError::BranchDiscontinuity { .. }) => skipped += 1,
            Err(other) => return Err(other.into()),
        }
    }
    let produced = set.len();
    Ok((
        set,
        SampleReport {
            requested,
            produced,
            skipped,
        },
    ))
}

/// One matched pair inside a similarity term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    /// Index of the sample the minimum was taken for.
    pub query: usize,
    /// Index of its nearest sample in the opposing set.
    pub matched: usize,
    pub dist_sq: f64,
}

/// Result of a similarity evaluation. `score` is `-(coverage + subset)`,
/// so larger (closer to zero) is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Sum over robot samples of the squared distance to the nearest
    /// exoskeleton sample, mm².
    pub coverage_term: f64,
    /// Sum over exoskeleton samples of the squared distance to the nearest
    /// robot sample, mm².
    pub subset_term: f64,
    /// `-(coverage_term + subset_term)`, mm².
    pub score: f64,
    pub robot_samples: usize,
    pub exo_samples: usize,
    /// Worst robot samples by coverage distance, largest first.
    pub coverage_offenders: Vec<PairDistance>,
    /// Worst exoskeleton samples by containment distance, largest first.
    pub subset_offenders: Vec<PairDistance>,
}

/// Optional local refinement of the inner minimization.
///
/// Nearest-neighbor lookup bounds the inner minimum from above by the
/// sample cloud density; refinement runs coordinate descent with step
/// halving on the matched sample's joint configuration, evaluating true
/// forward kinematics, and keeps only improvements. It therefore never
/// worsens a term and tightens the sampling bias when a mechanism is
/// available for the searched side.
#[derive(Debug, Clone, Copy, Default)]
pub struct RefineParams<'a> {
    /// Step-halving sweeps; 0 disables refinement.
    pub iterations: usize,
    /// Initial per-DoF step in radians; halved each sweep.
    pub initial_step: f64,
    /// Mechanism generating the exoskeleton set (refines coverage matches).
    pub exo_mech: Option<&'a FingerMechanism>,
    /// Mechanism generating the robot set (refines containment matches).
    pub robot_mech: Option<&'a FingerMechanism>,
}

impl RefineParams<'_> {
    /// No refinement: pure nearest-neighbor evaluation.
    pub fn off() -> Self {
        Self::default()
    }
}

/// Coordinate descent from `start` toward `target`, inside joint limits.
/// Returns the best squared distance found (never worse than the start).
fn refine_config(
    mech: &FingerMechanism,
    start: &[f64],
    start_dist_sq: f64,
    target: &Pose,
    metric: &PoseMetricParams,
    iterations: usize,
    initial_step: f64,
) -> f64 {
    // Sweep cap per step level; each accepted move strictly improves, so
    // this only guards against pathological slow creep.
    const MAX_SWEEPS: usize = 1000;

    let limits = mech.joint_limits();
    let mut cfg = start.to_vec();
    let mut best = start_dist_sq;
    let mut step = initial_step;
    for _ in 0..iterations {
        for _ in 0..MAX_SWEEPS {
            let mut improved = false;
            for d in 0..cfg.len() {
                for sign in [1.0, -1.0] {
                    let prev = cfg[d];
                    let trial = limits[d].clamp(prev + sign * step);
                    if trial == prev {
                        continue;
                    }
                    cfg[d] = trial;
                    match mech.fk(&cfg) {
                        Ok(pose) => {
                            let d2 = pose_distance_sq(&pose, target, metric);
                            if d2 < best {
                                best = d2;
                                improved = true;
                            } else {
                                cfg[d] = prev;
                            }
                        }
                        Err(_) => cfg[d] = prev,
                    }
                }
            }
            if !improved {
                break;
            }
        }
        step *= 0.5;
    }
    best
}

/// Sum of nearest-distances from every `queries` sample into `targets`.
fn directed_term(
    queries: &FingertipPoseSet,
    targets: &FingertipPoseSet,
    target_index: &PoseIndex,
    target_mech: Option<&FingerMechanism>,
    metric: &PoseMetricParams,
    refine_iterations: usize,
    refine_step: f64,
) -> (f64, Vec<PairDistance>) {
    let pairs: Vec<PairDistance> = queries
        .samples
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let (matched, nn_dist) = target_index.nearest(&q.pose);
            let dist_sq = match target_mech {
                Some(mech) if refine_iterations > 0 => refine_config(
                    mech,
                    &targets.samples[matched].config,
                    nn_dist,
                    &q.pose,
                    metric,
                    refine_iterations,
                    refine_step,
                ),
                _ => nn_dist,
            };
            PairDistance {
                query: qi,
                matched,
                dist_sq,
            }
        })
        .collect();

    // Summation in query order keeps the result independent of thread
    // scheduling.
    let sum = pairs.iter().map(|p| p.dist_sq).sum();
    let mut offenders = pairs;
    offenders.sort_by(|a, b| {
        b.dist_sq
            .partial_cmp(&a.dist_sq)
            .expect("distances are finite")
            .then(a.query.cmp(&b.query))
    });
    offenders.truncate(OFFENDER_COUNT);
    (sum, offenders)
}

/// Bidirectional workspace similarity between an exoskeleton sample set and
/// a robot sample set. See the module docs for the construction.
pub fn similarity(
    exo: &FingertipPoseSet,
    robot: &FingertipPoseSet,
    metric: &PoseMetricParams,
    refine: &RefineParams,
) -> Result<SimilarityReport, WorkspaceError> {
    if exo.is_empty() || robot.is_empty() {
        return Err(WorkspaceError::EmptyWorkspace);
    }
    let exo_index = PoseIndex::build(&exo.poses(), metric);
    let robot_index = PoseIndex::build(&robot.poses(), metric);

    let (coverage_term, coverage_offenders) = directed_term(
        robot,
        exo,
        &exo_index,
        refine.exo_mech,
        metric,
        refine.iterations,
        refine.initial_step,
    );
    let (subset_term, subset_offenders) = directed_term(
        exo,
        robot,
        &robot_index,
        refine.robot_mech,
        metric,
        refine.iterations,
        refine.initial_step,
    );

    Ok(SimilarityReport {
        coverage_term,
        subset_term,
        score: -(coverage_term + subset_term),
        robot_samples: robot.len(),
        exo_samples: exo.len(),
        coverage_offenders,
        subset_offenders,
    })
}

/// Reference similarity via an O(N·K) double loop; used as the oracle the
/// indexed implementation is tested against, and available for debugging.
pub fn similarity_brute_force(
    exo: &FingertipPoseSet,
    robot: &FingertipPoseSet,
    metric: &PoseMetricParams,
) -> Result<SimilarityReport, WorkspaceError> {
    if exo.is_empty() || robot.is_empty() {
        return Err(WorkspaceError::EmptyWorkspace);
    }
    let scan = |queries: &FingertipPoseSet, targets: &FingertipPoseSet| {
        let mut sum = 0.0;
        let mut pairs = Vec::with_capacity(queries.len());
        for (qi, q) in queries.samples.iter().enumerate() {
            let mut best = (usize::MAX, f64::INFINITY);
            for (ti, t) in targets.samples.iter().enumerate() {
                let d2 = pose_distance_sq(&q.pose, &t.pose, metric);
                if d2 < best.1 || (d2 == best.1 && ti < best.0) {
                    best = (ti, d2);
                }
            }
            sum += best.1;
            pairs.push(PairDistance {
                query: qi,
                matched: best.0,
                dist_sq: best.1,
            });
        }
        pairs.sort_by(|a, b| {
            b.dist_sq
                .partial_cmp(&a.dist_sq)
                .expect("finite")
                .then(a.query.cmp(&b.query))
        });
        pairs.truncate(OFFENDER_COUNT);
        (sum, pairs)
    };
    let (coverage_term, coverage_offenders) = scan(robot, exo);
    let (subset_term, subset_offenders) = scan(exo, robot);
    Ok(SimilarityReport {
        coverage_term,
        subset_term,
        score: -(coverage_term + subset_term),
        robot_samples: robot.len(),
        exo_samples: exo.len(),
        coverage_offenders,
        subset_offenders,
    })
}

/// Write a pose set as CSV: per-DoF config columns (radians), then
/// `px_mm,py_mm,pz_mm,dx,dy,dz`.
pub fn write_pose_set_csv<W: Write>(w: W, set: &FingertipPoseSet) -> Result<(), WorkspaceError> {
    let dofs = set.samples.first().map_or(0, |s| s.config.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..dofs).map(|d| format!("cfg{d}")).collect();
    header.extend(
        ["px_mm", "py_mm", "pz_mm", "dx", "dy", "dz"]
            .iter()
            .map(|s| s.to_string()),
    );
    out.write_record(&header)?;
    for s in &set.samples {
        let mut row: Vec<String> = s.config.iter().map(|v| v.to_string()).collect();
        let d = s.pose.direction.into_inner();
        for v in [
            s.pose.position.x,
            s.pose.position.y,
            s.pose.position.z,
            d.x,
            d.y,
            d.z,
        ] {
            row.push(v.to_string());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a pose set written by [`write_pose_set_csv`]. Directions are
/// re-normalized on input; a zero direction is rejected.
pub fn read_pose_set_csv<R: Read>(
    r: R,
    source: impl Into<String>,
) -> Result<FingertipPoseSet, WorkspaceError> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    let px_col = headers
        .iter()
        .position(|h| h == "px_mm")
        .ok_or_else(|| WorkspaceError::BadRow {
            row: 0,
            message: "missing px_mm column".into(),
        })?;
    if headers.len() != px_col + 6 {
        return Err(WorkspaceError::BadRow {
            row: 0,
            message: format!(
                "expected 6 pose columns after px_mm, found {}",
                headers.len() - px_col
            ),
        });
    }
    let mut set = FingertipPoseSet::new(source);
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64, WorkspaceError> {
            record
                .get(i)
                .ok_or(())
                .and_then(|v| v.parse::<f64>().map_err(|_| ()))
                .map_err(|_| WorkspaceError::BadRow {
                    row: row_idx + 2,
                    message: format!("column {i} is not a number"),
                })
        };
        let config: Vec<f64> = (0..px_col).map(parse).collect::<Result<_, _>>()?;
        let p = nalgebra::Vector3::new(parse(px_col)?, parse(px_col + 1)?, parse(px_col + 2)?);
        let d = nalgebra::Vector3::new(parse(px_col + 3)?, parse(px_col + 4)?, parse(px_col + 5)?);
        if d.norm() < 1e-9 {
            return Err(WorkspaceError::BadRow {
                row: row_idx + 2,
                message: "direction vector is zero".into(),
            });
        }
        set.samples.push(WorkspaceSample {
            config,
            pose: Pose::new(p, d),
        });
    }
    Ok(set)
}

pub fn save_pose_set_csv(
    path: impl AsRef<Path>,
    set: &FingertipPoseSet,
) -> Result<(), WorkspaceError> {
    write_pose_set_csv(std::fs::File::create(path)?, set)
}

pub fn load_pose_set_csv(path: impl AsRef<Path>) -> Result<FingertipPoseSet, WorkspaceError> {
    let source = path.as_ref().display().to_string();
    read_pose_set_csv(std::fs::File::open(path.as_ref())?, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinemodel::{
        transform_from_parts, JointLimits, Mechanism, RevoluteJoint, RigidTransform, SerialChain,
    };
    use approx::assert_relative_eq;
    use nalgebra::{Vector3, Unit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn one_dof_finger(min: f64, max: f64) -> FingerMechanism {
        FingerMechanism::new(
            "f1",
            Mechanism::Serial(SerialChain::new(
                vec![RevoluteJoint::new(
                    RigidTransform::identity(),
                    Vector3::z(),
                    JointLimits::new(min, max),
                )],
                transform_from_parts([80.0, 0.0, 0.0], [0.0; 3]),
            )),
        )
    }

    fn planar_two_dof() -> FingerMechanism {
        FingerMechanism::new(
            "f2",
            Mechanism::Serial(SerialChain::new(
                vec![
                    RevoluteJoint::new(
                        RigidTransform::identity(),
                        Vector3::z(),
                        JointLimits::new(-1.2, 1.2),
                    ),
                    RevoluteJoint::new(
                        transform_from_parts([45.0, 0.0, 0.0], [0.0; 3]),
                        Vector3::z(),
                        JointLimits::new(-0.3, 1.6),
                    ),
                ],
                transform_from_parts([30.0, 0.0, 0.0], [0.0; 3]),
            )),
        )
    }

    fn random_set(rng: &mut impl Rng, n: usize) -> FingertipPoseSet {
        let mut set = FingertipPoseSet::new("random");
        for _ in 0..n {
            set.samples.push(WorkspaceSample {
                config: vec![],
                pose: Pose::new(
                    Vector3::new(
                        rng.random_range(-60.0..60.0),
                        rng.random_range(-60.0..60.0),
                        rng.random_range(-60.0..60.0),
                    ),
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(0.1..1.0),
                    ),
                ),
            });
        }
        set
    }

    #[test]
    fn metric_direct_formula_points() {
        let m = PoseMetricParams { lambda_mm: 10.0 };
        let a = Pose::new(Vector3::zeros(), Vector3::x());
        assert_eq!(pose_distance_sq(&a, &a, &m), 0.0);

        let b = Pose::new(Vector3::new(3.0, 0.0, 0.0), Vector3::x());
        assert_relative_eq!(pose_distance_sq(&a, &b, &m), 9.0, epsilon = 1e-12);

        let c = Pose::new(Vector3::zeros(), Vector3::y());
        assert_relative_eq!(pose_distance_sq(&a, &c, &m), 200.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn metric_symmetry_and_identity(
            ax in -100.0..100.0f64, ay in -100.0..100.0f64, az in -100.0..100.0f64,
            bx in -100.0..100.0f64, by in -100.0..100.0f64, bz in -100.0..100.0f64,
            da in 0.0..PI, db in 0.0..PI,
        ) {
            let m = PoseMetricParams::default();
            let a = Pose::new(Vector3::new(ax, ay, az), Vector3::new(da.cos(), da.sin(), 0.2));
            let b = Pose::new(Vector3::new(bx, by, bz), Vector3::new(db.cos(), db.sin(), 0.2));
            prop_assert_eq!(pose_distance_sq(&a, &b, &m), pose_distance_sq(&b, &a, &m));
            prop_assert_eq!(pose_distance_sq(&a, &a, &m), 0.0);
            if (ax, ay, az, da) != (bx, by, bz, db) {
                prop_assert!(pose_distance_sq(&a, &b, &m) > 0.0);
            }
        }

        #[test]
        fn metric_sqrt_triangle_inequality(
            seeds in proptest::array::uniform3(0u64..u64::MAX),
        ) {
            let m = PoseMetricParams::default();
            let mk = |s: u64| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                Pose::new(
                    Vector3::new(
                        rng.random_range(-100.0..100.0),
                        rng.random_range(-100.0..100.0),
                        rng.random_range(-100.0..100.0),
                    ),
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ) + Vector3::new(0.0, 0.0, 1.5),
                )
            };
            let (a, b, c) = (mk(seeds[0]), mk(seeds[1]), mk(seeds[2]));
            let dab = pose_distance_sq(&a, &b, &m).sqrt();
            let dbc = pose_distance_sq(&b, &c, &m).sqrt();
            let dac = pose_distance_sq(&a, &c, &m).sqrt();
            prop_assert!(dac <= dab + dbc + 1e-9);
        }
    }

    #[test]
    fn grid_sampling_hits_endpoints() {
        let finger = one_dof_finger(0.0, PI);
        let (set, report) = sample_workspace(
            &finger,
            &SamplingScheme::Grid { per_dof: vec![5] },
        )
        .unwrap();
        assert_eq!(report.produced, 5);
        assert_eq!(report.skipped, 0);
        let expected = [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI];
        for (s, e) in set.samples.iter().zip(expected) {
            assert_relative_eq!(s.config[0], e, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_endpoints_never_leave_limits() {
        // `min + span*i/(n-1)` rounds an ulp past `max` for some counts
        // (100 degrees with 6 or 11 points, for instance); the sampler must
        // land on `max` exactly instead of failing the FK limit check.
        let max = 100.0f64.to_radians();
        for n in 2..=33 {
            let finger = one_dof_finger(0.0, max);
            let (set, report) =
                sample_workspace(&finger, &SamplingScheme::Grid { per_dof: vec![n] }).unwrap();
            assert_eq!(report.produced, n, "n = {n}");
            assert_eq!(set.samples[0].config[0], 0.0);
            assert_eq!(set.samples[n - 1].config[0], max);
            for s in &set.samples {
                assert!(finger.joint_limits()[0].contains(s.config[0]));
            }
        }
    }

    #[test]
    fn low_discrepancy_is_deterministic_and_in_limits() {
        let finger = planar_two_dof();
        let scheme = SamplingScheme::LowDiscrepancy {
            count: 64,
            offset: 9,
        };
        let (a, _) = sample_workspace(&finger, &scheme).unwrap();
        let (b, _) = sample_workspace(&finger, &scheme).unwrap();
        assert_eq!(a, b);
        let limits = finger.joint_limits();
        for s in &a.samples {
            for (v, l) in s.config.iter().zip(&limits) {
                assert!(l.contains(*v));
            }
        }
        // Different offsets give a different point set.
        let (c, _) = sample_workspace(
            &finger,
            &SamplingScheme::LowDiscrepancy {
                count: 64,
                offset: 10,
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_positions_respect_reach_bound() {
        let finger = planar_two_dof();
        let (set, _) = sample_workspace(
            &finger,
            &SamplingScheme::LowDiscrepancy { count: 256, offset: 0 },
        )
        .unwrap();
        for s in &set.samples {
            assert!(s.pose.position.norm() <= 45.0 + 30.0 + 1e-9);
        }
    }

    #[test]
    fn fourbar_unsolvable_samples_are_counted_not_dropped_silently() {
        // Limits reach into an unsolvable region (validate is bypassed by
        // constructing the mechanism directly).
        let mut linkage = crate::synth::demo_fourbar();
        linkage.coupler_mm = 24.0;
        linkage.rocker_mm = 24.0; // b + c = 48 < max reach 55: fails at large angles
        linkage.input_limits = JointLimits::new(0.0, PI);
        let finger = FingerMechanism::new("fb", Mechanism::FourBar(linkage));
        let (set, report) = sample_workspace(
            &finger,
            &SamplingScheme::Grid { per_dof: vec![64] },
        )
        .unwrap();
        assert!(report.skipped > 0);
        assert_eq!(report.produced + report.skipped, report.requested);
        assert_eq!(set.len(), report.produced);
        assert!(report.produced > 0);
    }

    #[test]
    fn self_similarity_is_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let set = random_set(&mut rng, 200);
        let m = PoseMetricParams::default();
        let report = similarity(&set, &set, &m, &RefineParams::off()).unwrap();
        assert_eq!(report.coverage_term, 0.0);
        assert_eq!(report.subset_term, 0.0);
        assert_eq!(report.score, 0.0);
    }

    #[test]
    fn singleton_sets_collapse_to_twice_the_distance() {
        let m = PoseMetricParams { lambda_mm: 10.0 };
        let mut exo = FingertipPoseSet::new("e");
        let mut robot = FingertipPoseSet::new("r");
        exo.samples.push(WorkspaceSample {
            config: vec![],
            pose: Pose::new(Vector3::zeros(), Vector3::x()),
        });
        robot.samples.push(WorkspaceSample {
            config: vec![],
            pose: Pose::new(Vector3::new(4.0, 0.0, 0.0), Vector3::x()),
        });
        let report = similarity(&exo, &robot, &m, &RefineParams::off()).unwrap();
        assert_relative_eq!(report.score, -32.0, epsilon = 1e-12);
    }

    #[test]
    fn indexed_similarity_matches_brute_force() {
        let m = PoseMetricParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let exo_n = rng.random_range(1..40);
            let robot_n = rng.random_range(1..40);
            let exo = random_set(&mut rng, exo_n);
            let robot = random_set(&mut rng, robot_n);
            let fast = similarity(&exo, &robot, &m, &RefineParams::off()).unwrap();
            let slow = similarity_brute_force(&exo, &robot, &m).unwrap();
            assert_relative_eq!(fast.coverage_term, slow.coverage_term, max_relative = 1e-12);
            assert_relative_eq!(fast.subset_term, slow.subset_term, max_relative = 1e-12);
            assert_eq!(
                fast.coverage_offenders.iter().map(|p| p.matched).collect::<Vec<_>>(),
                slow.coverage_offenders.iter().map(|p| p.matched).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn rigid_transform_applied_to_both_sets_preserves_score() {
        let m = PoseMetricParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let exo = random_set(&mut rng, 64);
        let robot = random_set(&mut rng, 80);
        let t = transform_from_parts([10.0, -20.0, 5.0], [0.3, 1.0, -0.7]);
        let before = similarity(&exo, &robot, &m, &RefineParams::off()).unwrap();
        let after = similarity(
            &exo.transformed(&t),
            &robot.transformed(&t),
            &m,
            &RefineParams::off(),
        )
        .unwrap();
        assert_relative_eq!(before.score, after.score, max_relative = 1e-9);
    }

    #[test]
    fn adding_exo_samples_never_increases_coverage() {
        let m = PoseMetricParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let robot = random_set(&mut rng, 50);
        let mut exo = random_set(&mut rng, 10);
        let mut prev = similarity(&exo, &robot, &m, &RefineParams::off())
            .unwrap()
            .coverage_term;
        for _ in 0..20 {
            let extra = random_set(&mut rng, 1);
            exo.samples.extend(extra.samples);
            let cov = similarity(&exo, &robot, &m, &RefineParams::off())
                .unwrap()
                .coverage_term;
            assert!(cov <= prev + 1e-12);
            prev = cov;
        }
    }

    #[test]
    fn refinement_never_worsens_and_can_improve() {
        let m = PoseMetricParams::default();
        let finger = one_dof_finger(0.0, PI);
        // Coarse exo cloud: 4 samples; robot cloud dense: 33 samples.
        let (exo, _) = sample_workspace(&finger, &SamplingScheme::Grid { per_dof: vec![4] })
            .unwrap();
        let (robot, _) = sample_workspace(&finger, &SamplingScheme::Grid { per_dof: vec![33] })
            .unwrap();
        let plain = similarity(&exo, &robot, &m, &RefineParams::off()).unwrap();
        let refined = similarity(
            &exo,
            &robot,
            &m,
            &RefineParams {
                iterations: 20,
                initial_step: 0.2,
                exo_mech: Some(&finger),
                robot_mech: Some(&finger),
            },
        )
        .unwrap();
        assert!(refined.coverage_term <= plain.coverage_term);
        assert!(refined.subset_term <= plain.subset_term);
        // The same mechanism generated both clouds, so refinement should
        // drive coverage near zero despite the coarse exo sampling.
        assert!(refined.coverage_term < plain.coverage_term * 0.01);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let m = PoseMetricParams::default();
        let empty = FingertipPoseSet::new("e");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = random_set(&mut rng, 3);
        assert!(matches!(
            similarity(&empty, &full, &m, &RefineParams::off()),
            Err(WorkspaceError::EmptyWorkspace)
        ));
        assert!(matches!(
            similarity(&full, &empty, &m, &RefineParams::off()),
            Err(WorkspaceError::EmptyWorkspace)
        ));
    }

    #[test]
    fn csv_round_trip_preserves_samples() {
        let finger = planar_two_dof();
        let (set, _) = sample_workspace(
            &finger,
            &SamplingScheme::LowDiscrepancy { count: 40, offset: 3 },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_pose_set_csv(&mut buf, &set).unwrap();
        let back = read_pose_set_csv(buf.as_slice(), "roundtrip").unwrap();
        assert_eq!(back.len(), set.len());
        for (a, b) in set.samples.iter().zip(&back.samples) {
            assert_eq!(a.config, b.config);
            assert_eq!(a.pose.position, b.pose.position);
            assert_relative_eq!(
                a.pose.direction.into_inner(),
                b.pose.direction.into_inner(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn csv_zero_direction_is_rejected() {
        let csv_text = "cfg0,px_mm,py_mm,pz_mm,dx,dy,dz\n0.0,1.0,2.0,3.0,0.0,0.0,0.0\n";
        assert!(matches!(
            read_pose_set_csv(csv_text.as_bytes(), "bad"),
            Err(WorkspaceError::BadRow { row: 2, .. })
        ));
    }

    #[test]
    fn direction_is_normalized_on_import() {
        let csv_text = "px_mm,py_mm,pz_mm,dx,dy,dz\n0.0,0.0,0.0,0.0,3.0,4.0\n";
        let set = read_pose_set_csv(csv_text.as_bytes(), "n").unwrap();
        let d = set.samples[0].pose.direction.into_inner();
        assert_relative_eq!(d, Vector3::new(0.0, 0.6, 0.8), epsilon = 1e-12);
        let _ = Unit::new_normalize(d); // stays a valid unit vector
    }
}
