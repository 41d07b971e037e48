//! Bound-constrained search over exoskeleton design parameters, maximizing
//! fingertip-workspace similarity against a target robot hand, plus the
//! physical build adjustments applied to a finished design.
//!
//! The design vector gathers the movable joint anchor positions and link
//! lengths of one finger mechanism. A [`DesignTemplate`] freezes everything
//! else about the mechanism (joint axes, fixed rotations, limits, branch
//! choice) and rebuilds a concrete mechanism from any parameter vector.
//! Wearability enters purely as per-scalar box bounds.

mod de;

pub(crate) use de::{run_de, DeConfig};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;
use crate::kinemodel::{
    DesignBounds, FingerMechanism, FourBarLinkage, Mechanism, SerialChain, SwingFourBar,
};
use crate::workspace::{
    sample_workspace, similarity, FingertipPoseSet, PoseMetricParams, RefineParams,
    SamplingScheme, SimilarityReport,
};

#[derive(Debug, Error)]
pub enum DesignOptError {
    #[error("optimizer config invalid: {0}")]
    ConfigInvalid(String),
    #[error("design bounds invalid: {0}")]
    BoundsInvalid(String),
    #[error("starting parameters violate bounds: {0:?}")]
    StartOutOfBounds(Vec<BoundViolation>),
    #[error("template/parameter shape mismatch: {0}")]
    TemplateShape(String),
    #[error("template instantiation failed: {0}")]
    TemplateInstantiation(String),
    #[error("robot workspace is empty")]
    EmptyRobotWorkspace,
    #[error("optimization diverged: best score {best_score} below floor {floor}")]
    OptimizationDiverged { best_score: f64, floor: f64 },
    #[error("joint {joint}: limit tightening empties the interval")]
    LimitCollapse { joint: usize },
    #[error("adjustment spec invalid: {0}")]
    AdjustmentInvalid(String),
}

/// One out-of-bounds scalar found by [`DesignParams::constraint_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub scalar: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// The optimization vector: anchor positions (mm, flange frame) and link
/// lengths (mm), with per-scalar bounds of identical shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub anchors: Vec<[f64; 3]>,
    pub lengths: Vec<f64>,
    pub bounds: DesignBounds,
}

impl DesignParams {
    /// Number of scalars (3 per anchor plus one per length).
    pub fn dim(&self) -> usize {
        self.anchors.len() * 3 + self.lengths.len()
    }

    /// Scalars in flattening order: `anchor0.x, anchor0.y, anchor0.z, …,
    /// length0, length1, …`.
    pub fn scalar_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for i in 0..self.anchors.len() {
            for axis in ["x", "y", "z"] {
                names.push(format!("anchor{i}.{axis}"));
            }
        }
        for j in 0..self.lengths.len() {
            names.push(format!("length{j}"));
        }
        names
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for a in &self.anchors {
            out.extend_from_slice(a);
        }
        out.extend_from_slice(&self.lengths);
        out
    }

    pub fn flat_bounds(&self) -> Vec<Interval> {
        let mut out = Vec::with_capacity(self.dim());
        for a in &self.bounds.anchors {
            out.extend_from_slice(a);
        }
        out.extend_from_slice(&self.bounds.lengths);
        out
    }

    /// Same bounds, values replaced from a flat vector.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.dim(), "flat vector length mismatch");
        let mut anchors = Vec::with_capacity(self.anchors.len());
        for i in 0..self.anchors.len() {
            anchors.push([flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]]);
        }
        let lengths = flat[3 * self.anchors.len()..].to_vec();
        Self {
            anchors,
            lengths,
            bounds: self.bounds.clone(),
        }
    }

    /// All scalars currently outside their bounds; empty means feasible.
    pub fn constraint_check(&self) -> Vec<BoundViolation> {
        let names = self.scalar_names();
        let values = self.flatten();
        let bounds = self.flat_bounds();
        names
            .into_iter()
            .zip(values)
            .zip(bounds)
            .filter(|&((_, v), b)| !b.contains(v))
            .map(|((scalar, value), b)| BoundViolation {
                scalar,
                value,
                lo: b.lo,
                hi: b.hi,
            })
            .collect()
    }

    /// Clamp every scalar into its bound.
    pub fn project(&self) -> Self {
        let flat: Vec<f64> = self
            .flatten()
            .iter()
            .zip(self.flat_bounds())
            .map(|(&v, b)| b.clamp(v))
            .collect();
        self.with_flat(&flat)
    }

    fn validate_shape(&self) -> Result<(), DesignOptError> {
        if self.bounds.anchors.len() != self.anchors.len()
            || self.bounds.lengths.len() != self.lengths.len()
        {
            return Err(DesignOptError::BoundsInvalid(format!(
                "bounds shape ({} anchors, {} lengths) does not match values ({}, {})",
                self.bounds.anchors.len(),
                self.bounds.lengths.len(),
                self.anchors.len(),
                self.lengths.len()
            )));
        }
        for (j, b) in self.bounds.lengths.iter().enumerate() {
            if b.lo <= 0.0 {
                return Err(DesignOptError::BoundsInvalid(format!(
                    "length{j} lower bound must be positive, got {}",
                    b.lo
                )));
            }
        }
        Ok(())
    }
}

/// Rebuilds a concrete finger mechanism from design parameters.
///
/// Parameter layout per mechanism kind:
///
/// * serial chain: one anchor per joint origin translation plus one for the
///   tip offset translation; no lengths (rotations and axes are structure).
/// * four-bar: one anchor for the coupler-mounted fingertip point
///   `(e, f, 0)` (the z scalar must stay 0), lengths
///   `[ground, crank, coupler, rocker]`.
/// * swing + four-bar: the swing origin anchor, then the coupler point
///   anchor, then the same four lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTemplate {
    pub name: String,
    donor: Mechanism,
}

impl DesignTemplate {
    /// Capture the structure of an existing finger as a template.
    pub fn from_finger(finger: &FingerMechanism) -> Self {
        Self {
            name: finger.name.clone(),
            donor: finger.mech.clone(),
        }
    }

    /// Expected `(anchors, lengths)` counts for this template.
    pub fn shape(&self) -> (usize, usize) {
        match &self.donor {
            Mechanism::Serial(c) => (c.joints.len() + 1, 0),
            Mechanism::FourBar(_) => (1, 4),
            Mechanism::SwingFourBar(_) => (2, 4),
        }
    }

    /// Nominal parameter values read off the donor mechanism, with bounds
    /// from the finger's declared design bounds when present, otherwise a
    /// relative margin around each nominal value (`default_margin`, e.g.
    /// 0.2 for ±20%; anchor half-widths are floored at 2 mm so coordinates
    /// near zero stay searchable). Four-bar coupler anchors keep z frozen
    /// at 0.
    pub fn params_from_finger(
        &self,
        finger: &FingerMechanism,
        default_margin: f64,
    ) -> Result<DesignParams, DesignOptError> {
        let (anchors, lengths) = self.nominal_values()?;
        let bounds = match &finger.design_bounds {
            Some(b) => b.clone(),
            None => {
                let anchor_bounds = anchors
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let planar_z = self.anchor_z_frozen(i);
                        let mut axes = [Interval::point(0.0); 3];
                        for (k, &v) in a.iter().enumerate() {
                            axes[k] = if k == 2 && planar_z {
                                Interval::point(0.0)
                            } else {
                                let hw = (v.abs() * default_margin).max(2.0);
                                Interval::new(v - hw, v + hw)
                            };
                        }
                        axes
                    })
                    .collect();
                let length_bounds = lengths
                    .iter()
                    .map(|&v| Interval::new(v * (1.0 - default_margin), v * (1.0 + default_margin)))
                    .collect();
                DesignBounds {
                    anchors: anchor_bounds,
                    lengths: length_bounds,
                }
            }
        };
        let params = DesignParams {
            anchors,
            lengths,
            bounds,
        };
        params.validate_shape()?;
        let violations = params.constraint_check();
        if !violations.is_empty() {
            return Err(DesignOptError::BoundsInvalid(format!(
                "declared bounds exclude the nominal design: {violations:?}"
            )));
        }
        Ok(params)
    }

    /// Whether anchor `i` is a planar coupler point whose z must stay 0.
    fn anchor_z_frozen(&self, i: usize) -> bool {
        match &self.donor {
            Mechanism::Serial(_) => false,
            Mechanism::FourBar(_) => i == 0,
            Mechanism::SwingFourBar(_) => i == 1,
        }
    }

    fn nominal_values(&self) -> Result<(Vec<[f64; 3]>, Vec<f64>), DesignOptError> {
        Ok(match &self.donor {
            Mechanism::Serial(c) => {
                let mut anchors: Vec<[f64; 3]> = c
                    .joints
                    .iter()
                    .map(|j| j.origin.translation.vector.into())
                    .collect();
                anchors.push(c.tip_offset.translation.vector.into());
                (anchors, Vec::new())
            }
            Mechanism::FourBar(l) => (
                vec![[l.coupler_point.x, l.coupler_point.y, 0.0]],
                vec![l.ground_mm, l.crank_mm, l.coupler_mm, l.rocker_mm],
            ),
            Mechanism::SwingFourBar(s) => (
                vec![
                    s.swing.origin.translation.vector.into(),
                    [s.linkage.coupler_point.x, s.linkage.coupler_point.y, 0.0],
                ],
                vec![
                    s.linkage.ground_mm,
                    s.linkage.crank_mm,
                    s.linkage.coupler_mm,
                    s.linkage.rocker_mm,
                ],
            ),
        })
    }

    /// Build a concrete mechanism from parameters. Structural validity
    /// (positive lengths, shape match) is enforced here; loop-closure
    /// solvability is a property of sampling, not instantiation, so
    /// candidate designs with partially unreachable input ranges are
    /// scored on their reachable part rather than rejected outright.
    pub fn instantiate(&self, p: &DesignParams) -> Result<FingerMechanism, DesignOptError> {
        let (want_anchors, want_lengths) = self.shape();
        if p.anchors.len() != want_anchors || p.lengths.len() != want_lengths {
            return Err(DesignOptError::TemplateShape(format!(
                "template `{}` expects {} anchors and {} lengths, got {} and {}",
                self.name,
                want_anchors,
                want_lengths,
                p.anchors.len(),
                p.lengths.len()
            )));
        }
        if let Some(bad) = p.lengths.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
            return Err(DesignOptError::TemplateInstantiation(format!(
                "non-positive link length {bad}"
            )));
        }
        let set_fourbar = |l: &FourBarLinkage, anchor: &[f64; 3], lengths: &[f64]| {
            let mut l = l.clone();
            l.coupler_point = Vector2::new(anchor[0], anchor[1]);
            l.ground_mm = lengths[0];
            l.crank_mm = lengths[1];
            l.coupler_mm = lengths[2];
            l.rocker_mm = lengths[3];
            l
        };
        let mech = match &self.donor {
            Mechanism::Serial(c) => {
                let mut c = c.clone();
                for (joint, a) in c.joints.iter_mut().zip(&p.anchors) {
                    joint.origin.translation.vector = Vector3::new(a[0], a[1], a[2]);
                }
                let tip = p.anchors[c.joints.len()];
                c.tip_offset.translation.vector = Vector3::new(tip[0], tip[1], tip[2]);
                Mechanism::Serial(c)
            }
            Mechanism::FourBar(l) => {
                if p.anchors[0][2] != 0.0 {
                    return Err(DesignOptError::TemplateInstantiation(
                        "coupler anchor z must be 0 for a planar linkage".into(),
                    ));
                }
                Mechanism::FourBar(set_fourbar(l, &p.anchors[0], &p.lengths))
            }
            Mechanism::SwingFourBar(s) => {
                if p.anchors[1][2] != 0.0 {
                    return Err(DesignOptError::TemplateInstantiation(
                        "coupler anchor z must be 0 for a planar linkage".into(),
                    ));
                }
                let mut s = s.clone();
                s.swing.origin.translation.vector =
                    Vector3::new(p.anchors[0][0], p.anchors[0][1], p.anchors[0][2]);
                s.linkage = set_fourbar(&s.linkage, &p.anchors[1], &p.lengths);
                Mechanism::SwingFourBar(s)
            }
        };
        Ok(FingerMechanism {
            name: self.name.clone(),
            mech,
            design_bounds: None,
        })
    }
}

/// Search configuration. Defaults follow the library's standard setup:
/// population 32, mutation 0.7, crossover 0.9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_f: f64,
    pub crossover_cr: f64,
    pub seed: u64,
    /// How candidate exoskeleton workspaces are sampled each evaluation.
    pub sampling: SamplingScheme,
    pub metric: PoseMetricParams,
    /// Coordinate-descent sweeps refining each nearest-neighbor match
    /// during objective evaluation; 0 keeps pure NN.
    pub refine_iterations: usize,
    pub refine_step: f64,
    /// Stop early once score ≥ −tolerance (mm²).
    pub early_stop_tolerance: Option<f64>,
    /// Declare divergence if the final best score is below this (mm²).
    pub score_floor: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 32,
            generations: 200,
            mutation_f: 0.7,
            crossover_cr: 0.9,
            seed: 0,
            sampling: SamplingScheme::LowDiscrepancy {
                count: 512,
                offset: 0,
            },
            metric: PoseMetricParams::default(),
            refine_iterations: 0,
            refine_step: 0.05,
            early_stop_tolerance: None,
            score_floor: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), DesignOptError> {
        if self.population < 4 {
            return Err(DesignOptError::ConfigInvalid(
                "population must be at least 4".into(),
            ));
        }
        if !(self.crossover_cr > 0.0 && self.crossover_cr <= 1.0) {
            return Err(DesignOptError::ConfigInvalid(format!(
                "crossover must be in (0, 1], got {}",
                self.crossover_cr
            )));
        }
        if !(self.mutation_f > 0.0 && self.mutation_f < 2.0) {
            return Err(DesignOptError::ConfigInvalid(format!(
                "mutation factor must be in (0, 2), got {}",
                self.mutation_f
            )));
        }
        if self.generations == 0 {
            return Err(DesignOptError::ConfigInvalid(
                "generations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Best design state after one generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_score: f64,
    pub coverage_term: f64,
    pub subset_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub best: DesignParams,
    pub report: SimilarityReport,
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
}

/// Score one candidate design: instantiate, sample its workspace, compare
/// against the target cloud. Anything that cannot be scored (structural
/// failure, fully unreachable workspace) is worst-possible rather than an
/// error, so the population search simply moves away from it.
fn candidate_score(
    template: &DesignTemplate,
    shaped: &DesignParams,
    flat: &[f64],
    robot_ws: &FingertipPoseSet,
    cfg: &OptimizerConfig,
) -> f64 {
    let params = shaped.with_flat(flat);
    let mech = match template.instantiate(&params) {
        Ok(m) => m,
        Err(_) => return f64::NEG_INFINITY,
    };
    let (exo_ws, _) = match sample_workspace(&mech, &cfg.sampling) {
        Ok(r) => r,
        Err(_) => return f64::NEG_INFINITY,
    };
    if exo_ws.is_empty() {
        return f64::NEG_INFINITY;
    }
    let refine = RefineParams {
        iterations: cfg.refine_iterations,
        initial_step: cfg.refine_step,
        exo_mech: Some(&mech),
        robot_mech: None,
    };
    match similarity(&exo_ws, robot_ws, &cfg.metric, &refine) {
        Ok(report) => report.score,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Maximize workspace similarity over the template's design parameters.
///
/// Returns the best parameters found, their full similarity report, and a
/// per-generation history whose best score is monotone non-decreasing.
pub fn optimize_design(
    template: &DesignTemplate,
    p0: &DesignParams,
    robot_ws: &FingertipPoseSet,
    cfg: &OptimizerConfig,
) -> Result<OptimizeOutcome, DesignOptError> {
    cfg.validate()?;
    p0.validate_shape()?;
    if robot_ws.is_empty() {
        return Err(DesignOptError::EmptyRobotWorkspace);
    }
    let violations = p0.constraint_check();
    if !violations.is_empty() {
        return Err(DesignOptError::StartOutOfBounds(violations));
    }
    // Fail fast when the starting design itself cannot be built.
    template.instantiate(p0)?;

    let objective = |flat: &[f64]| candidate_score(template, p0, flat, robot_ws, cfg);
    let de_cfg = DeConfig {
        population: cfg.population,
        generations: cfg.generations,
        mutation_f: cfg.mutation_f,
        crossover_cr: cfg.crossover_cr,
        seed: cfg.seed,
        early_stop_f: cfg.early_stop_tolerance.map(|t| -t.abs()),
    };
    let result = run_de(&p0.flat_bounds(), &p0.flatten(), &objective, &de_cfg);

    if let Some(floor) = cfg.score_floor {
        if result.best_f < floor {
            return Err(DesignOptError::OptimizationDiverged {
                best_score: result.best_f,
                floor,
            });
        }
    }

    let report_for = |flat: &[f64]| -> Result<SimilarityReport, DesignOptError> {
        let params = p0.with_flat(flat);
        let mech = template.instantiate(&params)?;
        let (exo_ws, _) = sample_workspace(&mech, &cfg.sampling)
            .map_err(|e| DesignOptError::TemplateInstantiation(e.to_string()))?;
        let refine = RefineParams {
            iterations: cfg.refine_iterations,
            initial_step: cfg.refine_step,
            exo_mech: Some(&mech),
            robot_mech: None,
        };
        similarity(&exo_ws, robot_ws, &cfg.metric, &refine)
            .map_err(|e| DesignOptError::TemplateInstantiation(e.to_string()))
    };

    let mut history = Vec::with_capacity(result.generations.len());
    for g in &result.generations {
        let report = report_for(&g.best_x)?;
        history.push(GenerationRecord {
            generation: g.generation,
            best_score: g.best_f,
            coverage_term: report.coverage_term,
            subset_term: report.subset_term,
        });
    }
    let report = report_for(&result.best_x)?;
    Ok(OptimizeOutcome {
        best: p0.with_flat(&result.best_x),
        report,
        history,
        evaluations: result.evaluations,
    })
}

/// Physical build adjustments applied to a finished design: lengthen the
/// fingertip link so the exoskeleton silhouette fully covers the robot
/// finger on camera, and pull every joint limit inward so commands stay
/// strictly inside the hardware's reachable range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjustmentSpec {
    pub tip_extension_mm: f64,
    pub limit_tightening_deg: f64,
}

impl Default for AdjustmentSpec {
    fn default() -> Self {
        Self {
            tip_extension_mm: 3.0,
            limit_tightening_deg: 5.0,
        }
    }
}

/// Apply [`AdjustmentSpec`] to a finger. The distal-most length grows by
/// `tip_extension_mm` (serial chains extend the tip offset along its own
/// direction; four-bars extend the coupler point along the coupler axis);
/// every input-angle interval `[min, max]` becomes `[min + t, max − t]`.
pub fn apply_adjustments(
    finger: &FingerMechanism,
    adj: &AdjustmentSpec,
) -> Result<FingerMechanism, DesignOptError> {
    if adj.tip_extension_mm < 0.0 || adj.limit_tightening_deg < 0.0 {
        return Err(DesignOptError::AdjustmentInvalid(
            "adjustments must be non-negative".into(),
        ));
    }
    let t = adj.limit_tightening_deg.to_radians();
    let tighten = |lims: crate::kinemodel::JointLimits,
                   joint: usize|
     -> Result<crate::kinemodel::JointLimits, DesignOptError> {
        let (min, max) = (lims.min + t, lims.max - t);
        if !(min < max) {
            return Err(DesignOptError::LimitCollapse { joint });
        }
        Ok(crate::kinemodel::JointLimits::new(min, max))
    };
    let extend_fourbar = |l: &FourBarLinkage| {
        let mut l = l.clone();
        l.coupler_point.x += adj.tip_extension_mm;
        l
    };
    let mech = match &finger.mech {
        Mechanism::Serial(c) => {
            let mut c = SerialChain::new(c.joints.clone(), c.tip_offset);
            for (i, j) in c.joints.iter_mut().enumerate() {
                j.limits = tighten(j.limits, i)?;
            }
            let v = c.tip_offset.translation.vector;
            let norm = v.norm();
            c.tip_offset.translation.vector = if norm > 1e-9 {
                v * ((norm + adj.tip_extension_mm) / norm)
            } else {
                Vector3::new(adj.tip_extension_mm, 0.0, 0.0)
            };
            Mechanism::Serial(c)
        }
        Mechanism::FourBar(l) => {
            let mut l = extend_fourbar(l);
            l.input_limits = tighten(l.input_limits, 0)?;
            Mechanism::FourBar(l)
        }
        Mechanism::SwingFourBar(s) => {
            let mut s = SwingFourBar {
                swing: s.swing.clone(),
                linkage: extend_fourbar(&s.linkage),
            };
            s.swing.limits = tighten(s.swing.limits, 0)?;
            s.linkage.input_limits = tighten(s.linkage.input_limits, 1)?;
            Mechanism::SwingFourBar(s)
        }
    };
    Ok(FingerMechanism {
        name: finger.name.clone(),
        mech,
        design_bounds: finger.design_bounds.clone(),
    })
}
