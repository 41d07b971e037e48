//! Fit a four-bar linkage whose fingertip workspace matches a target pose
//! set. This is how an underactuated robot finger (known only through
//! sampled fingertip poses) gets an equivalent one-input linkage, and how a
//! two-input thumb gets a single linkage structure shared across all of its
//! swing settings.

use serde::Serialize;

use crate::designopt::{
    run_de, DeConfig, DesignOptError, DesignTemplate, GenerationRecord, OptimizerConfig,
    optimize_design,
};
use crate::kinemodel::{FingerMechanism, FourBarLinkage, JointLimits, Mechanism};

use super::{
    similarity, FingertipPoseSet, RefineParams, SamplingScheme, SimilarityReport, WorkspaceSample,
};

/// Similarity of the fitted mechanism against one target partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwingReport {
    /// Swing input value (radians) this partition was evaluated at; `None`
    /// for single-linkage fits.
    pub swing: Option<f64>,
    pub report: SimilarityReport,
}

/// Result of [`fit_equivalent_linkage`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageFit {
    /// The full fitted mechanism (four-bar, or swing + four-bar).
    pub mechanism: FingerMechanism,
    /// The fitted linkage itself (the swing joint, if any, is structure).
    pub linkage: FourBarLinkage,
    /// Total score: sum of partition scores (0 is a perfect fit).
    pub score: f64,
    pub per_swing: Vec<SwingReport>,
    pub history: Vec<GenerationRecord>,
}

fn linkage_of(mech: &Mechanism) -> Result<FourBarLinkage, DesignOptError> {
    match mech {
        Mechanism::FourBar(l) => Ok(l.clone()),
        Mechanism::SwingFourBar(s) => Ok(s.linkage.clone()),
        Mechanism::Serial(_) => Err(DesignOptError::TemplateShape(
            "equivalent-linkage fitting needs a four-bar or swing four-bar template".into(),
        )),
    }
}

/// Bend-input values drawn from the 1-DoF projection of a sampling scheme.
fn bend_values(limits: JointLimits, scheme: &SamplingScheme) -> Result<Vec<f64>, DesignOptError> {
    let count = match scheme {
        SamplingScheme::Grid { per_dof } => *per_dof.first().ok_or_else(|| {
            DesignOptError::ConfigInvalid("sampling grid has no counts".into())
        })?,
        SamplingScheme::LowDiscrepancy { count, .. } => *count,
    };
    if count < 2 {
        return Err(DesignOptError::ConfigInvalid(
            "need at least 2 bend samples".into(),
        ));
    }
    // Endpoint-exact interpolation, clamped: see `sample_workspace`.
    Ok((0..count)
        .map(|i| {
            let t = (i as f64) / ((count - 1) as f64);
            limits.clamp(limits.min * (1.0 - t) + limits.max * t)
        })
        .collect())
}

/// Workspace of a swing mechanism with the swing input pinned.
fn sample_at_swing(
    mech: &FingerMechanism,
    swing: f64,
    bends: &[f64],
) -> FingertipPoseSet {
    let mut set = FingertipPoseSet::new(format!("{}@swing{}", mech.name, swing));
    for &bend in bends {
        if let Ok(pose) = mech.fk(&[swing, bend]) {
            set.samples.push(WorkspaceSample {
                config: vec![swing, bend],
                pose,
            });
        }
    }
    set
}

fn partition_by_swing(
    target: &FingertipPoseSet,
    swing_values: &[f64],
) -> Result<Vec<FingertipPoseSet>, DesignOptError> {
    let mut parts = Vec::with_capacity(swing_values.len());
    for &s in swing_values {
        let mut part = FingertipPoseSet::new(format!("{}@swing{}", target.source, s));
        for sample in &target.samples {
            let Some(&cfg_swing) = sample.config.first() else {
                return Err(DesignOptError::ConfigInvalid(
                    "target samples carry no swing configuration value".into(),
                ));
            };
            if (cfg_swing - s).abs() <= 1e-9 {
                part.samples.push(sample.clone());
            }
        }
        if part.is_empty() {
            return Err(DesignOptError::ConfigInvalid(format!(
                "no target samples at swing value {s}"
            )));
        }
        parts.push(part);
    }
    Ok(parts)
}

/// Fit linkage parameters so the mechanism's fingertip workspace matches
/// `target`, maximizing the bidirectional similarity score.
///
/// `template` supplies the structure and the search bounds (declared
/// design bounds, or ±20% around its nominal values). With `swing_values`,
/// the template must be a swing four-bar and `target` must carry the swing
/// value as its first configuration entry: the loss is then the sum of
/// per-swing-value scores with one shared linkage structure, and the
/// nearest-neighbor matches are not locally refined (refinement would move
/// the pinned swing input).
pub fn fit_equivalent_linkage(
    target: &FingertipPoseSet,
    template_finger: &FingerMechanism,
    swing_values: Option<&[f64]>,
    cfg: &OptimizerConfig,
) -> Result<LinkageFit, DesignOptError> {
    if target.is_empty() {
        return Err(DesignOptError::EmptyRobotWorkspace);
    }
    linkage_of(&template_finger.mech)?;
    let template = DesignTemplate::from_finger(template_finger);
    let p0 = template.params_from_finger(template_finger, 0.2)?;

    let Some(swings) = swing_values else {
        // Single-linkage fit: exactly the design optimization problem.
        let outcome = optimize_design(&template, &p0, target, cfg)?;
        let mechanism = template.instantiate(&outcome.best)?;
        let linkage = linkage_of(&mechanism.mech)?;
        return Ok(LinkageFit {
            mechanism,
            linkage,
            score: outcome.report.score,
            per_swing: vec![SwingReport {
                swing: None,
                report: outcome.report,
            }],
            history: outcome.history,
        });
    };

    if swings.is_empty() {
        return Err(DesignOptError::ConfigInvalid(
            "swing value list is empty".into(),
        ));
    }
    if !matches!(template_finger.mech, Mechanism::SwingFourBar(_)) {
        return Err(DesignOptError::TemplateShape(
            "swing-partitioned fitting needs a swing four-bar template".into(),
        ));
    }
    cfg.validate()?;
    let parts = partition_by_swing(target, swings)?;

    let score_candidate = |mech: &FingerMechanism| -> f64 {
        let bend_limits = mech.joint_limits()[1];
        let Ok(bends) = bend_values(bend_limits, &cfg.sampling) else {
            return f64::NEG_INFINITY;
        };
        let mut total = 0.0;
        for (&s, part) in swings.iter().zip(&parts) {
            let exo = sample_at_swing(mech, s, &bends);
            if exo.is_empty() {
                return f64::NEG_INFINITY;
            }
            match similarity(&exo, part, &cfg.metric, &RefineParams::off()) {
                Ok(report) => total += report.score,
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        total
    };
    let objective = |flat: &[f64]| -> f64 {
        match template.instantiate(&p0.with_flat(flat)) {
            Ok(mech) => score_candidate(&mech),
            Err(_) => f64::NEG_INFINITY,
        }
    };

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

    let reports_for = |flat: &[f64]| -> Result<(FingerMechanism, Vec<SwingReport>), DesignOptError> {
        let mech = template.instantiate(&p0.with_flat(flat))?;
        let bends = bend_values(mech.joint_limits()[1], &cfg.sampling)?;
        let mut reports = Vec::with_capacity(swings.len());
        for (&s, part) in swings.iter().zip(&parts) {
            let exo = sample_at_swing(&mech, s, &bends);
            let report = similarity(&exo, part, &cfg.metric, &RefineParams::off())
                .map_err(|e| DesignOptError::TemplateInstantiation(e.to_string()))?;
            reports.push(SwingReport {
                swing: Some(s),
                report,
            });
        }
        Ok((mech, reports))
    };

    let mut history = Vec::with_capacity(result.generations.len());
    for g in &result.generations {
        let (_, reports) = reports_for(&g.best_x)?;
        history.push(GenerationRecord {
            generation: g.generation,
            best_score: g.best_f,
            coverage_term: reports.iter().map(|r| r.report.coverage_term).sum(),
            subset_term: reports.iter().map(|r| r.report.subset_term).sum(),
        });
    }
    let (mechanism, per_swing) = reports_for(&result.best_x)?;
    let linkage = linkage_of(&mechanism.mech)?;
    Ok(LinkageFit {
        mechanism,
        linkage,
        score: result.best_f,
        per_swing,
        history,
    })
}
