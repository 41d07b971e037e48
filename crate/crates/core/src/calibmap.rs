//! Per-joint regression between exoskeleton encoder angles and robot motor
//! values, fitted from paired calibration recordings.
//!
//! Mechanical backlash and friction make the realized mapping depend on
//! travel direction, so a table can hold separate closing and opening
//! models next to the shared model fitted over all pairs. Evaluation falls
//! back to the shared model when a direction-specific one is absent.
//!
//! Tables are immutable after fitting and evaluation is pure, so they can
//! be shared freely across threads.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("not enough pairs: need {need}, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("encoder angles are all identical; cannot regress")]
    DegenerateAbscissa,
    #[error("pair {index}: motor value {value} outside range [{lo}, {hi}]")]
    OutOfRangePair {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("model parameters invalid: {0}")]
    BadModelSpec(String),
    #[error("least-squares solve failed: {0}")]
    SolveFailed(String),
    #[error("CSV I/O failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("file I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Travel direction of a calibration pair or a lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Closing,
    Opening,
    Unspecified,
}

/// One observed (encoder angle, motor value) correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibPair {
    pub encoder_angle: f64,
    pub motor_value: f64,
    pub direction: Direction,
}

/// Regression model family, with its shape parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Polynomial { degree: usize },
    MonotonePiecewiseLinear { knots: usize },
}

/// A fitted model, evaluable at any encoder angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    /// Coefficients in ascending power order.
    Polynomial { coeffs: Vec<f64> },
    /// Knot abscissae (strictly increasing, uniform over the data range)
    /// and monotone knot ordinates; evaluation is linear between knots and
    /// constant outside them.
    MonotonePiecewiseLinear {
        knots_x: Vec<f64>,
        knots_y: Vec<f64>,
    },
}

impl FittedModel {
    pub fn eval(&self, angle: f64) -> f64 {
        match self {
            FittedModel::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * angle + c;
                }
                acc
            }
            FittedModel::MonotonePiecewiseLinear { knots_x, knots_y } => {
                let n = knots_x.len();
                if angle <= knots_x[0] {
                    return knots_y[0];
                }
                if angle >= knots_x[n - 1] {
                    return knots_y[n - 1];
                }
                // partition_point: first knot strictly above `angle`.
                let hi = knots_x.partition_point(|&x| x <= angle);
                let lo = hi - 1;
                let t = (angle - knots_x[lo]) / (knots_x[hi] - knots_x[lo]);
                knots_y[lo] + t * (knots_y[hi] - knots_y[lo])
            }
        }
    }
}

/// Fit quality of one direction group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupResidual {
    pub pairs: usize,
    pub rms: f64,
}

/// The calibration mapping for one joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub joint: String,
    pub kind: ModelKind,
    pub motor_range: Interval,
    /// Fitted over all pairs regardless of direction tag; always present.
    pub shared: FittedModel,
    pub closing: Option<FittedModel>,
    pub opening: Option<FittedModel>,
    pub residuals: BTreeMap<String, GroupResidual>,
}

impl CalibrationTable {
    fn model_for(&self, direction: Direction) -> &FittedModel {
        match direction {
            Direction::Closing => self.closing.as_ref().unwrap_or(&self.shared),
            Direction::Opening => self.opening.as_ref().unwrap_or(&self.shared),
            Direction::Unspecified => &self.shared,
        }
    }

    /// Evaluate the mapping; the returned flag is true when the raw model
    /// output fell outside the motor range and was clamped. Clamping is
    /// defined behavior, not an error, so callers can count clamp events.
    pub fn encoder_to_motor_flagged(&self, angle: f64, direction: Direction) -> (f64, bool) {
        let raw = self.model_for(direction).eval(angle);
        let clamped = self.motor_range.clamp(raw);
        (clamped, clamped != raw)
    }

    pub fn encoder_to_motor(&self, angle: f64, direction: Direction) -> f64 {
        self.encoder_to_motor_flagged(angle, direction).0
    }
}

fn polynomial_fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<FittedModel, CalibError> {
    let n = xs.len();
    let cols = degree + 1;
    if n < cols {
        return Err(CalibError::InsufficientData { need: cols, got: n });
    }
    let mut a = DMatrix::zeros(n, cols);
    for (i, &x) in xs.iter().enumerate() {
        let mut p = 1.0;
        for j in 0..cols {
            a[(i, j)] = p;
            p *= x;
        }
    }
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let coeffs = svd
        .solve(&b, 1e-12)
        .map_err(|e| CalibError::SolveFailed(e.to_string()))?;
    Ok(FittedModel::Polynomial {
        coeffs: coeffs.iter().copied().collect(),
    })
}

/// Pool-adjacent-violators projection onto non-decreasing sequences,
/// weighted by per-knot data mass.
fn pava_non_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // Blocks of (pooled mean, total weight, member count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.0 <= last.0 {
                break;
            }
            blocks.pop();
            blocks.pop();
            let w_total = prev.1 + last.1;
            let mean = (prev.0 * prev.1 + last.0 * last.1) / w_total;
            blocks.push((mean, w_total, prev.2 + last.2));
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (mean, _, count) in blocks {
        out.extend(std::iter::repeat(mean).take(count));
    }
    out
}

fn monotone_pwl_fit(xs: &[f64], ys: &[f64], knots: usize) -> Result<FittedModel, CalibError> {
    if knots < 2 {
        return Err(CalibError::BadModelSpec(
            "piecewise-linear model needs at least 2 knots".into(),
        ));
    }
    let n = xs.len();
    if n < 2 {
        return Err(CalibError::InsufficientData { need: 2, got: n });
    }
    let (x_min, x_max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let knots_x: Vec<f64> = (0..knots)
        .map(|k| x_min + (x_max - x_min) * (k as f64) / ((knots - 1) as f64))
        .collect();

    // Least squares over hat-function coefficients: each sample spreads
    // linearly onto its two bracketing knots.
    let mut a = DMatrix::zeros(n, knots);
    let mut mass = vec![0.0_f64; knots];
    let span = (x_max - x_min) / ((knots - 1) as f64);
    for (i, &x) in xs.iter().enumerate() {
        let cell = (((x - x_min) / span) as usize).min(knots - 2);
        let t = ((x - knots_x[cell]) / span).clamp(0.0, 1.0);
        a[(i, cell)] = 1.0 - t;
        a[(i, cell + 1)] = t;
        mass[cell] += 1.0 - t;
        mass[cell + 1] += t;
    }
    // Tiny ridge keeps unsupported knots tied to their neighbors instead
    // of collapsing toward zero under the minimum-norm solution.
    let mut normal = a.transpose() * &a;
    for k in 0..knots {
        normal[(k, k)] += 1e-9;
        if k + 1 < knots {
            normal[(k, k)] += 1e-9;
            normal[(k + 1, k + 1)] += 1e-9;
            normal[(k, k + 1)] -= 1e-9;
            normal[(k + 1, k)] -= 1e-9;
        }
    }
    let rhs = a.transpose() * DVector::from_column_slice(ys);
    let raw = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CalibError::SolveFailed("normal equations are singular".into()))?;
    let raw: Vec<f64> = raw.iter().copied().collect();

    // Monotonicity direction from the data's covariance sign.
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let cov: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x - mx) * (y - my))
        .sum();
    let weights: Vec<f64> = mass.iter().map(|&m| m.max(1e-9)).collect();
    let knots_y = if cov >= 0.0 {
        pava_non_decreasing(&raw, &weights)
    } else {
        let flipped: Vec<f64> = raw.iter().map(|v| -v).collect();
        pava_non_decreasing(&flipped, &weights)
            .into_iter()
            .map(|v| -v)
            .collect()
    };
    Ok(FittedModel::MonotonePiecewiseLinear { knots_x, knots_y })
}

fn fit_group(xs: &[f64], ys: &[f64], kind: ModelKind) -> Result<FittedModel, CalibError> {
    let spread = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if !(spread.1 > spread.0) {
        return Err(CalibError::DegenerateAbscissa);
    }
    match kind {
        ModelKind::Polynomial { degree } => polynomial_fit(xs, ys, degree),
        ModelKind::MonotonePiecewiseLinear { knots } => monotone_pwl_fit(xs, ys, knots),
    }
}

fn rms(model: &FittedModel, xs: &[f64], ys: &[f64]) -> f64 {
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = model.eval(x) - y;
            e * e
        })
        .sum();
    (sse / xs.len() as f64).sqrt()
}

/// Fit a calibration table for one joint.
///
/// The shared model is fitted over every pair; pairs tagged `Closing` or
/// `Opening` additionally produce direction-specific models when their
/// group is large enough for the model kind. Motor values must lie inside
/// `motor_range`.
pub fn fit_calibration(
    joint: impl Into<String>,
    pairs: &[CalibPair],
    kind: ModelKind,
    motor_range: Interval,
) -> Result<CalibrationTable, CalibError> {
    let min_pairs = match kind {
        ModelKind::Polynomial { degree } => degree + 1,
        ModelKind::MonotonePiecewiseLinear { .. } => 2,
    };
    if pairs.len() < min_pairs {
        return Err(CalibError::InsufficientData {
            need: min_pairs,
            got: pairs.len(),
        });
    }
    for (index, p) in pairs.iter().enumerate() {
        if !motor_range.contains(p.motor_value) {
            return Err(CalibError::OutOfRangePair {
                index,
                value: p.motor_value,
                lo: motor_range.lo,
                hi: motor_range.hi,
            });
        }
    }

    let collect = |dir: Option<Direction>| -> (Vec<f64>, Vec<f64>) {
        pairs
            .iter()
            .filter(|p| dir.is_none_or(|d| p.direction == d))
            .map(|p| (p.encoder_angle, p.motor_value))
            .unzip()
    };

    let (all_x, all_y) = collect(None);
    let shared = fit_group(&all_x, &all_y, kind)?;
    let mut residuals = BTreeMap::new();
    residuals.insert(
        "shared".to_string(),
        GroupResidual {
            pairs: all_x.len(),
            rms: rms(&shared, &all_x, &all_y),
        },
    );

    let mut fit_direction = |dir: Direction, name: &str| -> Result<Option<FittedModel>, CalibError> {
        let (xs, ys) = collect(Some(dir));
        if xs.len() < min_pairs {
            return Ok(None);
        }
        let model = fit_group(&xs, &ys, kind)?;
        residuals.insert(
            name.to_string(),
            GroupResidual {
                pairs: xs.len(),
                rms: rms(&model, &xs, &ys),
            },
        );
        Ok(Some(model))
    };
    let closing = fit_direction(Direction::Closing, "closing")?;
    let opening = fit_direction(Direction::Opening, "opening")?;

    Ok(CalibrationTable {
        joint: joint.into(),
        kind,
        motor_range,
        shared,
        closing,
        opening,
        residuals,
    })
}

/// Infers travel direction from consecutive encoder angles, holding the
/// previous direction inside a deadband so sensor jitter does not flip the
/// hysteresis branch every frame. Increasing angle reads as closing.
#[derive(Debug, Clone)]
pub struct DirectionTracker {
    deadband_rad: f64,
    last_angle: Option<f64>,
    current: Direction,
}

impl DirectionTracker {
    /// Default deadband: 0.5 degrees per frame.
    pub fn new() -> Self {
        Self::with_deadband(0.5_f64.to_radians())
    }

    pub fn with_deadband(deadband_rad: f64) -> Self {
        Self {
            deadband_rad,
            last_angle: None,
            current: Direction::Unspecified,
        }
    }

    pub fn update(&mut self, angle: f64) -> Direction {
        if let Some(last) = self.last_angle {
            let delta = angle - last;
            if delta > self.deadband_rad {
                self.current = Direction::Closing;
            } else if delta < -self.deadband_rad {
                self.current = Direction::Opening;
            }
        }
        self.last_angle = Some(angle);
        self.current
    }
}

impl Default for DirectionTracker {
    fn default() -> Self {
        Self::new()
    }
}

/// Read calibration pairs grouped by joint from CSV with columns
/// `joint,encoder_angle_rad,motor_value,direction` (direction one of
/// `closing`, `opening`, or empty/`unspecified`).
pub fn read_calib_csv<R: Read>(r: R) -> Result<BTreeMap<String, Vec<CalibPair>>, CalibError> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out: BTreeMap<String, Vec<CalibPair>> = BTreeMap::new();
    for (i, record) in reader.deserialize::<CsvRow>().enumerate() {
        let row = record.map_err(|e| CalibError::BadRow {
            row: i + 2,
            message: e.to_string(),
        })?;
        let direction = match row.direction.as_deref() {
            None | Some("") | Some("unspecified") => Direction::Unspecified,
            Some("closing") => Direction::Closing,
            Some("opening") => Direction::Opening,
            Some(other) => {
                return Err(CalibError::BadRow {
                    row: i + 2,
                    message: format!("unknown direction `{other}`"),
                })
            }
        };
        out.entry(row.joint).or_default().push(CalibPair {
            encoder_angle: row.encoder_angle_rad,
            motor_value: row.motor_value,
            direction,
        });
    }
    Ok(out)
}

pub fn write_calib_csv<W: Write>(
    w: W,
    groups: &BTreeMap<String, Vec<CalibPair>>,
) -> Result<(), CalibError> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["joint", "encoder_angle_rad", "motor_value", "direction"])?;
    for (joint, pairs) in groups {
        for p in pairs {
            let dir = match p.direction {
                Direction::Closing => "closing",
                Direction::Opening => "opening",
                Direction::Unspecified => "unspecified",
            };
            writer.write_record([
                joint.as_str(),
                &p.encoder_angle.to_string(),
                &p.motor_value.to_string(),
                dir,
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CsvRow {
    joint: String,
    encoder_angle_rad: f64,
    motor_value: f64,
    direction: Option<String>,
}

pub fn load_calib_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<CalibPair>>, CalibError> {
    read_calib_csv(std::fs::File::open(path)?)
}

/// Serialize tables (one per joint) as pretty JSON.
pub fn tables_to_json(tables: &[CalibrationTable]) -> Result<String, CalibError> {
    Ok(serde_json::to_string_pretty(tables)?)
}

pub fn tables_from_json(text: &str) -> Result<Vec<CalibrationTable>, CalibError> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RANGE: Interval = Interval {
        lo: 0.0,
        hi: 1000.0,
    };

    fn pairs_from(f: impl Fn(f64) -> f64, xs: &[f64], dir: Direction) -> Vec<CalibPair> {
        xs.iter()
            .map(|&x| CalibPair {
                encoder_angle: x,
                motor_value: f(x),
                direction: dir,
            })
            .collect()
    }

    #[test]
    fn exact_line_recovers_slope_and_intercept() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.2).collect();
        let pairs = pairs_from(|x| 500.0 * x, &xs, Direction::Unspecified);
        let table = fit_calibration("j0", &pairs, ModelKind::Polynomial { degree: 1 }, RANGE)
            .unwrap();
        let FittedModel::Polynomial { coeffs } = &table.shared else {
            panic!("expected polynomial")
        };
        assert_relative_eq!(coeffs[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(coeffs[1], 500.0, epsilon = 1e-9);
        assert!(table.residuals["shared"].rms < 1e-9);
        assert_relative_eq!(
            table.encoder_to_motor(1.0, Direction::Unspecified),
            500.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn perfect_cubic_fit_has_zero_residual_on_training_points() {
        let gen = |x: f64| 100.0 + 300.0 * x - 40.0 * x * x + 12.0 * x * x * x;
        let xs: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let pairs = pairs_from(gen, &xs, Direction::Unspecified);
        let table = fit_calibration("j", &pairs, ModelKind::Polynomial { degree: 3 }, RANGE)
            .unwrap();
        for &x in &xs {
            assert_relative_eq!(
                table.encoder_to_motor(x, Direction::Unspecified),
                gen(x),
                epsilon = 1e-7
            );
        }
        assert!(table.residuals["shared"].rms < 1e-7);
    }

    // Independent oracle: normal equations + Gaussian elimination with
    // partial pivoting, no linear-algebra library involved.
    fn normal_equations_cubic(xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let d = 4usize;
        let mut n = vec![vec![0.0_f64; d + 1]; d]; // augmented [N | b]
        for (&x, &y) in xs.iter().zip(ys) {
            let powers: Vec<f64> = (0..d).map(|k| x.powi(k as i32)).collect();
            for r in 0..d {
                for c in 0..d {
                    n[r][c] += powers[r] * powers[c];
                }
                n[r][d] += powers[r] * y;
            }
        }
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&a, &b| n[a][col].abs().partial_cmp(&n[b][col].abs()).unwrap())
                .unwrap();
            n.swap(col, pivot);
            for row in 0..d {
                if row == col {
                    continue;
                }
                let factor = n[row][col] / n[col][col];
                for c in col..=d {
                    n[row][c] -= factor * n[col][c];
                }
            }
        }
        (0..d).map(|r| n[r][d] / n[r][r]).collect()
    }

    #[test]
    fn noisy_cubic_matches_normal_equations_oracle() {
        // 16 motor samples spread uniformly over the commanded range, read
        // back through a cubic with bounded sensor noise.
        let gen = |x: f64| 20.0 + 410.0 * x + 55.0 * x * x - 30.0 * x * x * x;
        let xs: Vec<f64> = (0..16).map(|i| i as f64 * (1.5 / 15.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| gen(x) + rng.random_range(-2.0..2.0))
            .collect();
        let pairs: Vec<CalibPair> = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| CalibPair {
                encoder_angle: x,
                motor_value: y,
                direction: Direction::Unspecified,
            })
            .collect();

        let table = fit_calibration("j", &pairs, ModelKind::Polynomial { degree: 3 }, RANGE)
            .unwrap();
        let FittedModel::Polynomial { coeffs } = &table.shared else {
            panic!("expected polynomial")
        };
        let oracle = normal_equations_cubic(&xs, &ys);
        for (a, b) in coeffs.iter().zip(&oracle) {
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn polynomial_evaluation_matches_direct_formula() {
        let model = FittedModel::Polynomial {
            coeffs: vec![3.0, -2.0, 0.5, 1.25],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let direct = 3.0 - 2.0 * x + 0.5 * x * x + 1.25 * x * x * x;
            assert_relative_eq!(model.eval(x), direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn hysteresis_groups_get_separate_models() {
        let width = 40.0;
        let base = |x: f64| 200.0 + 350.0 * x;
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.08).collect();
        let mut pairs = pairs_from(|x| base(x) + width / 2.0, &xs, Direction::Closing);
        pairs.extend(pairs_from(|x| base(x) - width / 2.0, &xs, Direction::Opening));

        let table = fit_calibration("j", &pairs, ModelKind::Polynomial { degree: 1 }, RANGE)
            .unwrap();
        assert!(table.closing.is_some());
        assert!(table.opening.is_some());
        assert!(table.residuals["closing"].rms < width);
        assert!(table.residuals["opening"].rms < width);
        // The branches stay separated by the loop width at mid-range.
        let c = table.encoder_to_motor(0.8, Direction::Closing);
        let o = table.encoder_to_motor(0.8, Direction::Opening);
        assert_relative_eq!(c - o, width, epsilon = 1e-6);
        // The shared model splits the difference.
        let s = table.encoder_to_motor(0.8, Direction::Unspecified);
        assert_relative_eq!(s, (c + o) / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn direction_lookup_falls_back_to_shared() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.2).collect();
        let pairs = pairs_from(|x| 100.0 * x, &xs, Direction::Unspecified);
        let table = fit_calibration("j", &pairs, ModelKind::Polynomial { degree: 1 }, RANGE)
            .unwrap();
        assert!(table.closing.is_none());
        assert_eq!(
            table.encoder_to_motor(1.0, Direction::Closing),
            table.encoder_to_motor(1.0, Direction::Unspecified)
        );
    }

    #[test]
    fn clamping_saturates_and_flags() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.2).collect();
        let pairs = pairs_from(|x| 600.0 * x, &xs, Direction::Unspecified);
        let table = fit_calibration("j", &pairs, ModelKind::Polynomial { degree: 1 }, RANGE)
            .unwrap();
        let (v, clamped) = table.encoder_to_motor_flagged(50.0, Direction::Unspecified);
        assert_eq!(v, 1000.0);
        assert!(clamped);
        let (v, clamped) = table.encoder_to_motor_flagged(-50.0, Direction::Unspecified);
        assert_eq!(v, 0.0);
        assert!(clamped);
        let (_, clamped) = table.encoder_to_motor_flagged(0.5, Direction::Unspecified);
        assert!(!clamped);
    }

    #[test]
    fn monotone_model_is_monotone_on_dense_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Noisy increasing data.
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.025).collect();
        let pairs: Vec<CalibPair> = xs
            .iter()
            .map(|&x| CalibPair {
                encoder_angle: x,
                motor_value: (600.0 * x + rng.random_range(-40.0..40.0)).clamp(0.0, 1000.0),
                direction: Direction::Unspecified,
            })
            .collect();
        let table = fit_calibration(
            "j",
            &pairs,
            ModelKind::MonotonePiecewiseLinear { knots: 9 },
            RANGE,
        )
        .unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..10_000 {
            let x = -0.5 + 2.5 * (i as f64) / 9_999.0;
            let y = table.encoder_to_motor(x, Direction::Unspecified);
            assert!(y >= prev, "non-monotone at x={x}: {y} < {prev}");
            prev = y;
        }
    }

    #[test]
    fn decreasing_data_yields_non_increasing_model() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.05).collect();
        let pairs = pairs_from(|x| 900.0 - 500.0 * x, &xs, Direction::Unspecified);
        let table = fit_calibration(
            "j",
            &pairs,
            ModelKind::MonotonePiecewiseLinear { knots: 6 },
            RANGE,
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let x = -0.2 + 2.0 * (i as f64) / 999.0;
            let y = table.encoder_to_motor(x, Direction::Unspecified);
            assert!(y <= prev + 1e-12);
            prev = y;
        }
    }

    #[test]
    fn monotone_fit_reproduces_piecewise_linear_generator() {
        // Data generated from knot values the model class can represent.
        let xs: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let gen = FittedModel::MonotonePiecewiseLinear {
            knots_x: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            knots_y: vec![10.0, 200.0, 450.0, 700.0, 950.0],
        };
        let pairs: Vec<CalibPair> = xs
            .iter()
            .map(|&x| CalibPair {
                encoder_angle: x,
                motor_value: gen.eval(x),
                direction: Direction::Unspecified,
            })
            .collect();
        let table = fit_calibration(
            "j",
            &pairs,
            ModelKind::MonotonePiecewiseLinear { knots: 5 },
            RANGE,
        )
        .unwrap();
        for &x in &xs {
            assert_relative_eq!(
                table.encoder_to_motor(x, Direction::Unspecified),
                gen.eval(x),
                epsilon = 1e-5
            );
        }
    }

    #[test]
    fn insufficient_and_degenerate_data_are_rejected() {
        let pairs = pairs_from(|x| x, &[0.1, 0.2], Direction::Unspecified);
        assert!(matches!(
            fit_calibration("j", &pairs, ModelKind::Polynomial { degree: 3 }, RANGE),
            Err(CalibError::InsufficientData { .. })
        ));

        let same = pairs_from(|_| 5.0, &[0.4, 0.4, 0.4, 0.4, 0.4], Direction::Unspecified);
        assert!(matches!(
            fit_calibration("j", &same, ModelKind::Polynomial { degree: 1 }, RANGE),
            Err(CalibError::DegenerateAbscissa)
        ));
    }

    #[test]
    fn out_of_range_pairs_are_rejected() {
        let pairs = pairs_from(|x| 2000.0 * x, &[0.0, 0.5, 1.0], Direction::Unspecified);
        assert!(matches!(
            fit_calibration("j", &pairs, ModelKind::Polynomial { degree: 1 }, RANGE),
            Err(CalibError::OutOfRangePair { index: 2, .. })
        ));
    }

    #[test]
    fn direction_tracker_holds_inside_deadband() {
        let mut tracker = DirectionTracker::new();
        let step = 1.0_f64.to_radians();
        let jitter = 0.2_f64.to_radians();
        assert_eq!(tracker.update(0.0), Direction::Unspecified);
        assert_eq!(tracker.update(jitter), Direction::Unspecified);
        assert_eq!(tracker.update(jitter + step), Direction::Closing);
        // Jitter downward smaller than the deadband keeps the direction.
        assert_eq!(tracker.update(jitter + step - jitter), Direction::Closing);
        assert_eq!(tracker.update(0.0), Direction::Opening);
    }

    #[test]
    fn csv_round_trip_groups_by_joint() {
        let mut groups: BTreeMap<String, Vec<CalibPair>> = BTreeMap::new();
        groups.insert(
            "index".into(),
            vec![
                CalibPair {
                    encoder_angle: 0.1,
                    motor_value: 100.0,
                    direction: Direction::Closing,
                },
                CalibPair {
                    encoder_angle: 0.2,
                    motor_value: 220.0,
                    direction: Direction::Opening,
                },
            ],
        );
        groups.insert(
            "thumb".into(),
            vec![CalibPair {
                encoder_angle: 0.3,
                motor_value: 50.0,
                direction: Direction::Unspecified,
            }],
        );
        let mut buf = Vec::new();
        write_calib_csv(&mut buf, &groups).unwrap();
        let back = read_calib_csv(buf.as_slice()).unwrap();
        assert_eq!(back, groups);
    }

    #[test]
    fn table_json_round_trip() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.2).collect();
        let pairs = pairs_from(|x| 450.0 * x + 25.0, &xs, Direction::Unspecified);
        let table = fit_calibration("j3", &pairs, ModelKind::Polynomial { degree: 1 }, RANGE)
            .unwrap();
        let json = tables_to_json(std::slice::from_ref(&table)).unwrap();
        let back = tables_from_json(&json).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], table);
    }
}
