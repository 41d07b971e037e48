//! Latency compensation, multi-rate alignment to camera timestamps, and
//! factor-N downsampling to assemble training-ready episodes.
//!
//! All timestamps are nanoseconds on one monotonic clock; cross-device
//! clock offset estimation is out of scope. Alignment never extrapolates:
//! camera frames not bracketed by every non-camera channel are dropped
//! and counted.
//!
//! Everything here is a pure batch transform over immutable inputs, so
//! episodes can be processed in parallel, one worker per episode.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("timestamps must be strictly increasing; violation at index {index}")]
    NonIncreasingTime { index: usize },
    #[error("series has {times} timestamps but {values} values")]
    LengthMismatch { times: usize, values: usize },
    #[error("no latency configured for channel {0:?}")]
    MissingLatency(Channel),
    #[error("computed camera latency is negative: {latency_ns} ns")]
    NegativeLatency { latency_ns: i64 },
    #[error("no records to aggregate")]
    EmptyBatch,
    #[error("downsample factor must be at least 1")]
    InvalidFactor,
    #[error("{channel:?} row {index} has width {got}, expected {expected}")]
    InconsistentWidth {
        channel: Channel,
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON line {line}: {source}")]
    JsonLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Camera,
    Encoder,
    Tactile,
    WristPose,
}

/// A time-indexed sequence with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    times_ns: Vec<i64>,
    values: Vec<T>,
}

impl<T> Series<T> {
    pub fn new(times_ns: Vec<i64>, values: Vec<T>) -> Result<Self, TimelineError> {
        if times_ns.len() != values.len() {
            return Err(TimelineError::LengthMismatch {
                times: times_ns.len(),
                values: values.len(),
            });
        }
        for (i, pair) in times_ns.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(TimelineError::NonIncreasingTime { index: i + 1 });
            }
        }
        Ok(Self { times_ns, values })
    }

    pub fn len(&self) -> usize {
        self.times_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ns.is_empty()
    }

    pub fn times_ns(&self) -> &[i64] {
        &self.times_ns
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Uniformly shift every timestamp; ordering is preserved.
    pub fn shifted(&self, delta_ns: i64) -> Series<T>
    where
        T: Clone,
    {
        Series {
            times_ns: self.times_ns.iter().map(|t| t + delta_ns).collect(),
            values: self.values.clone(),
        }
    }

    /// Bracket `t`: `(lo, hi, w)` with `times[lo] <= t <= times[hi]` and
    /// interpolation weight `w` toward `hi`. `lo == hi` marks an exact
    /// knot. Returns None when `t` lies outside the series (no
    /// extrapolation).
    fn bracket(&self, t: i64) -> Option<(usize, usize, f64)> {
        let n = self.times_ns.len();
        let hi = self.times_ns.partition_point(|&x| x < t);
        if hi == n {
            return None;
        }
        if self.times_ns[hi] == t {
            return Some((hi, hi, 0.0));
        }
        if hi == 0 {
            return None;
        }
        let lo = hi - 1;
        let w = (t - self.times_ns[lo]) as f64 / (self.times_ns[hi] - self.times_ns[lo]) as f64;
        Some((lo, hi, w))
    }
}

/// Per-channel capture-to-receive latencies plus the display latency used
/// when deriving camera latency from logged QR sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyConfig {
    pub sensor_ns: BTreeMap<Channel, i64>,
    #[serde(default)]
    pub display_ns: i64,
}

impl LatencyConfig {
    pub fn sensor_latency(&self, channel: Channel) -> Result<i64, TimelineError> {
        self.sensor_ns
            .get(&channel)
            .copied()
            .ok_or(TimelineError::MissingLatency(channel))
    }
}

/// Convert receive timestamps to capture timestamps:
/// t_capture = t_receive - l_sensor for the series' channel.
pub fn correct_capture_times<T: Clone>(
    series: &Series<T>,
    channel: Channel,
    cfg: &LatencyConfig,
) -> Result<Series<T>, TimelineError> {
    let latency = cfg.sensor_latency(channel)?;
    Ok(series.shifted(-latency))
}

/// Camera latency from one logged QR-session record:
/// l_camera = t_receive - t_display - l_display.
pub fn camera_latency_from_qr(
    t_receive_ns: i64,
    t_display_ns: i64,
    l_display_ns: i64,
) -> Result<i64, TimelineError> {
    let latency_ns = t_receive_ns - t_display_ns - l_display_ns;
    if latency_ns < 0 {
        return Err(TimelineError::NegativeLatency { latency_ns });
    }
    Ok(latency_ns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrRecord {
    pub t_receive_ns: i64,
    pub t_display_ns: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraLatencyReport {
    pub per_record_ns: Vec<i64>,
    pub median_ns: f64,
}

/// Batch form over a QR session: per-record latencies plus their median.
pub fn camera_latency_report(
    records: &[QrRecord],
    l_display_ns: i64,
) -> Result<CameraLatencyReport, TimelineError> {
    if records.is_empty() {
        return Err(TimelineError::EmptyBatch);
    }
    let per_record_ns: Vec<i64> = records
        .iter()
        .map(|r| camera_latency_from_qr(r.t_receive_ns, r.t_display_ns, l_display_ns))
        .collect::<Result<_, _>>()?;
    let mut sorted = per_record_ns.clone();
    sorted.sort_unstable();
    let n = sorted.len();
    let median_ns = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    };
    Ok(CameraLatencyReport {
        per_record_ns,
        median_ns,
    })
}

/// Wrist pose sample: position plus orientation quaternion in (w,x,y,z)
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WristSample {
    pub position_mm: [f64; 3],
    pub quat_wxyz: [f64; 4],
}

fn to_quat(q: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(Quaternion::new(q[0], q[1], q[2], q[3]))
}

/// Shortest-arc spherical interpolation between two quaternions given in
/// (w,x,y,z) order.
fn slerp_shortest(a: [f64; 4], b: [f64; 4], w: f64) -> [f64; 4] {
    let qa = to_quat(a);
    let mut qb = to_quat(b);
    if qa.coords.dot(&qb.coords) < 0.0 {
        qb = UnitQuaternion::new_unchecked(-qb.into_inner());
    }
    let q = qa.try_slerp(&qb, w, 1e-12).unwrap_or_else(|| {
        // After hemisphere alignment only near-identical quaternions can
        // defeat slerp; normalized lerp is exact there.
        UnitQuaternion::new_normalize(qa.lerp(&qb, w))
    });
    [q.w, q.i, q.j, q.k]
}

fn lerp_row(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x + w * (y - x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFrame {
    pub t_capture_ns: i64,
    pub wrist: WristSample,
    pub joint_angles_deg: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tactile: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub recorded_fps: f64,
    pub downsample_factor: u32,
}

/// A camera-aligned episode: every non-camera field of every frame was
/// interpolated between bracketing capture-corrected samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub meta: EpisodeMeta,
    pub frames: Vec<EpisodeFrame>,
}

/// Capture-corrected input channels for alignment. Camera values are
/// optional image references carried through to the episode.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentInput<'a> {
    pub camera: &'a Series<Option<String>>,
    pub encoder: &'a Series<Vec<f64>>,
    pub tactile: Option<&'a Series<Vec<f64>>>,
    pub wrist: &'a Series<WristSample>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignReport {
    pub emitted: usize,
    pub dropped: usize,
    /// Capture times of camera frames dropped for lack of bracketing.
    pub dropped_times_ns: Vec<i64>,
}

fn check_uniform_width(
    series: &Series<Vec<f64>>,
    channel: Channel,
) -> Result<(), TimelineError> {
    if let Some(first) = series.values().first() {
        let expected = first.len();
        for (index, row) in series.values().iter().enumerate() {
            if row.len() != expected {
                return Err(TimelineError::InconsistentWidth {
                    channel,
                    index,
                    got: row.len(),
                    expected,
                });
            }
        }
    }
    Ok(())
}

/// Interpolate every non-camera channel at each camera capture time.
/// Scalars interpolate linearly; wrist orientation interpolates on the
/// shortest arc. Camera frames without full bracketing are dropped and
/// reported, never extrapolated.
pub fn align_to_camera(
    input: &AlignmentInput,
    recorded_fps: f64,
) -> Result<(Episode, AlignReport), TimelineError> {
    check_uniform_width(input.encoder, Channel::Encoder)?;
    if let Some(tactile) = input.tactile {
        check_uniform_width(tactile, Channel::Tactile)?;
    }

    let mut frames = Vec::with_capacity(input.camera.len());
    let mut report = AlignReport::default();
    for (idx, &t) in input.camera.times_ns().iter().enumerate() {
        let enc = input.encoder.bracket(t);
        let wrist = input.wrist.bracket(t);
        let tac = match input.tactile {
            Some(series) => match series.bracket(t) {
                Some(b) => Some(Some(b)),
                None => None,
            },
            None => Some(None),
        };
        let (Some(enc), Some(wrist_b), Some(tac)) = (enc, wrist, tac) else {
            report.dropped += 1;
            report.dropped_times_ns.push(t);
            continue;
        };

        let joint_angles_deg = {
            let (lo, hi, w) = enc;
            if lo == hi {
                input.encoder.values()[lo].clone()
            } else {
                lerp_row(&input.encoder.values()[lo], &input.encoder.values()[hi], w)
            }
        };
        let wrist = {
            let (lo, hi, w) = wrist_b;
            if lo == hi {
                input.wrist.values()[lo].clone()
            } else {
                let a = &input.wrist.values()[lo];
                let b = &input.wrist.values()[hi];
                let p = lerp_row(&a.position_mm, &b.position_mm, w);
                WristSample {
                    position_mm: [p[0], p[1], p[2]],
                    quat_wxyz: slerp_shortest(a.quat_wxyz, b.quat_wxyz, w),
                }
            }
        };
        let tactile = tac.map(|(lo, hi, w)| {
            let series = input.tactile.expect("bracket exists only with a series");
            if lo == hi {
                series.values()[lo].clone()
            } else {
                lerp_row(&series.values()[lo], &series.values()[hi], w)
            }
        });

        frames.push(EpisodeFrame {
            t_capture_ns: t,
            wrist,
            joint_angles_deg,
            tactile,
            image_ref: input.camera.values()[idx].clone(),
        });
        report.emitted += 1;
    }

    Ok((
        Episode {
            meta: EpisodeMeta {
                recorded_fps,
                downsample_factor: 1,
            },
            frames,
        },
        report,
    ))
}

/// Keep frames at indices 0, factor, 2*factor, ...; the episode's
/// downsample factor multiplies accordingly.
pub fn downsample(episode: &Episode, factor: u32) -> Result<Episode, TimelineError> {
    if factor == 0 {
        return Err(TimelineError::InvalidFactor);
    }
    Ok(Episode {
        meta: EpisodeMeta {
            recorded_fps: episode.meta.recorded_fps,
            downsample_factor: episode.meta.downsample_factor * factor,
        },
        frames: episode
            .frames
            .iter()
            .step_by(factor as usize)
            .cloned()
            .collect(),
    })
}

/// Diagnostic residual-lag estimator: the integer sample lag of `delayed`
/// relative to `reference` that maximizes the Pearson correlation over
/// the overlapping window. Ties prefer the smallest absolute lag, then
/// the smaller signed lag. This is an aid for tuning latency configs, not
/// part of alignment itself.
pub fn estimate_lag_xcorr(reference: &[f64], delayed: &[f64], max_lag: usize) -> isize {
    let mut best_lag = 0isize;
    let mut best_score = f64::NEG_INFINITY;
    let max_lag = max_lag as isize;
    for lag in -max_lag..=max_lag {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, &r) in reference.iter().enumerate() {
            let j = i as isize + lag;
            if j >= 0 && (j as usize) < delayed.len() {
                xs.push(r);
                ys.push(delayed[j as usize]);
            }
        }
        if xs.len() < 2 {
            continue;
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (&x, &y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        if sxx == 0.0 || syy == 0.0 {
            continue;
        }
        let score = sxy / (sxx * syy).sqrt();
        let better = score > best_score
            || (score == best_score
                && (lag.abs() < best_lag.abs()
                    || (lag.abs() == best_lag.abs() && lag < best_lag)));
        if better {
            best_score = score;
            best_lag = lag;
        }
    }
    best_lag
}

/// Write an episode as JSONL: one metadata line, then one line per frame.
pub fn write_episode_jsonl<W: Write>(mut w: W, episode: &Episode) -> Result<(), TimelineError> {
    serde_json::to_writer(&mut w, &episode.meta)?;
    w.write_all(b"\n")?;
    for frame in &episode.frames {
        serde_json::to_writer(&mut w, frame)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_jsonl<R: BufRead>(r: R) -> Result<Episode, TimelineError> {
    let mut lines = r.lines();
    let meta_line = lines.next().ok_or(TimelineError::EmptyBatch)??;
    let meta: EpisodeMeta =
        serde_json::from_str(&meta_line).map_err(|source| TimelineError::JsonLine {
            line: 1,
            source,
        })?;
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(
            serde_json::from_str(&line).map_err(|source| TimelineError::JsonLine {
                line: i + 2,
                source,
            })?,
        );
    }
    Ok(Episode { meta, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MS: i64 = 1_000_000;

    fn latency_cfg(pairs: &[(Channel, i64)]) -> LatencyConfig {
        LatencyConfig {
            sensor_ns: pairs.iter().copied().collect(),
            display_ns: 0,
        }
    }

    fn identity_wrist() -> WristSample {
        WristSample {
            position_mm: [0.0, 0.0, 0.0],
            quat_wxyz: [1.0, 0.0, 0.0, 0.0],
        }
    }

    fn wrist_about_z(angle_rad: f64, pos: [f64; 3]) -> WristSample {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle_rad);
        WristSample {
            position_mm: pos,
            quat_wxyz: [q.w, q.i, q.j, q.k],
        }
    }

    fn scalar_series(times: &[i64], values: &[f64]) -> Series<Vec<f64>> {
        Series::new(times.to_vec(), values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    fn camera_series(times: &[i64]) -> Series<Option<String>> {
        Series::new(times.to_vec(), vec![None; times.len()]).unwrap()
    }

    fn wide_wrist_series(times: &[i64]) -> Series<WristSample> {
        Series::new(times.to_vec(), vec![identity_wrist(); times.len()]).unwrap()
    }

    #[test]
    fn series_rejects_unsorted_times_and_uneven_lengths() {
        assert!(matches!(
            Series::new(vec![0, 10, 10], vec![1, 2, 3]),
            Err(TimelineError::NonIncreasingTime { index: 2 })
        ));
        assert!(matches!(
            Series::new(vec![0, 10], vec![1]),
            Err(TimelineError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn capture_correction_subtracts_channel_latency() {
        let series = scalar_series(&[100 * MS, 200 * MS], &[1.0, 2.0]);
        let cfg = latency_cfg(&[(Channel::Encoder, 20 * MS)]);
        let corrected = correct_capture_times(&series, Channel::Encoder, &cfg).unwrap();
        assert_eq!(corrected.times_ns(), &[80 * MS, 180 * MS]);
        assert_eq!(corrected.values(), series.values());

        let zero = latency_cfg(&[(Channel::Encoder, 0)]);
        let same = correct_capture_times(&series, Channel::Encoder, &zero).unwrap();
        assert_eq!(same, series);

        assert!(matches!(
            correct_capture_times(&series, Channel::Tactile, &cfg),
            Err(TimelineError::MissingLatency(Channel::Tactile))
        ));
    }

    #[test]
    fn latency_shift_moves_capture_times_uniformly() {
        let series = scalar_series(&[100 * MS, 250 * MS, 400 * MS], &[1.0, 2.0, 3.0]);
        let base = latency_cfg(&[(Channel::Encoder, 15 * MS)]);
        let bumped = latency_cfg(&[(Channel::Encoder, 15 * MS + 7 * MS)]);
        let a = correct_capture_times(&series, Channel::Encoder, &base).unwrap();
        let b = correct_capture_times(&series, Channel::Encoder, &bumped).unwrap();
        for (ta, tb) in a.times_ns().iter().zip(b.times_ns()) {
            assert_eq!(ta - tb, 7 * MS);
        }
    }

    #[test]
    fn qr_latency_formula_and_median() {
        assert_eq!(
            camera_latency_from_qr(1000 * MS, 900 * MS, 16 * MS).unwrap(),
            84 * MS
        );
        assert_eq!(camera_latency_from_qr(500, 500, 0).unwrap(), 0);
        assert!(matches!(
            camera_latency_from_qr(100, 200, 0),
            Err(TimelineError::NegativeLatency { latency_ns: -100 })
        ));

        let records: Vec<QrRecord> = [30, 10, 50, 20]
            .iter()
            .map(|&l| QrRecord {
                t_receive_ns: 1000 + l,
                t_display_ns: 1000,
            })
            .collect();
        let report = camera_latency_report(&records, 0).unwrap();
        assert_eq!(report.per_record_ns, vec![30, 10, 50, 20]);
        assert_eq!(report.median_ns, 25.0);
        let odd = camera_latency_report(&records[..3], 0).unwrap();
        assert_eq!(odd.median_ns, 30.0);
    }

    #[test]
    fn alignment_interpolates_linear_midpoint() {
        let camera = camera_series(&[50 * MS]);
        let encoder = scalar_series(&[0, 100 * MS], &[0.0, 10.0]);
        let wrist = wide_wrist_series(&[0, 100 * MS]);
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: None,
            wrist: &wrist,
        };
        let (episode, report) = align_to_camera(&input, 45.0).unwrap();
        assert_eq!(report.emitted, 1);
        assert_eq!(report.dropped, 0);
        assert_eq!(episode.frames[0].joint_angles_deg, vec![5.0]);
        assert!(episode.frames[0].tactile.is_none());
    }

    #[test]
    fn alignment_is_exact_at_sample_knots() {
        let times = [0, 30 * MS, 70 * MS, 100 * MS];
        let values = [1.25, -3.5, 42.0, 7.0];
        let camera = camera_series(&times);
        let encoder = scalar_series(&times, &values);
        let wrist = wide_wrist_series(&[0, 100 * MS]);
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: None,
            wrist: &wrist,
        };
        let (episode, _) = align_to_camera(&input, 45.0).unwrap();
        for (frame, &v) in episode.frames.iter().zip(&values) {
            assert_eq!(frame.joint_angles_deg, vec![v]);
        }
    }

    #[test]
    fn alignment_error_within_quadratic_bound() {
        // Quadratic signal sampled at 45 Hz, camera at 30 Hz: linear
        // interpolation error is at most h^2 * max|f''| / 8.
        let f = |t: f64| 3.0 + 2.0 * t - 4.5 * t * t;
        let f2_max = 9.0;
        let h = 1.0 / 45.0;
        let enc_times: Vec<i64> = (0..=45).map(|i| (i as f64 * h * 1e9) as i64).collect();
        let enc_values: Vec<f64> = enc_times.iter().map(|&t| f(t as f64 / 1e9)).collect();
        let cam_times: Vec<i64> = (1..30).map(|i| (i as f64 / 30.0 * 1e9) as i64).collect();

        let camera = camera_series(&cam_times);
        let encoder = scalar_series(&enc_times, &enc_values);
        let wrist = wide_wrist_series(&[0, 2_000_000_000]);
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: None,
            wrist: &wrist,
        };
        let (episode, report) = align_to_camera(&input, 30.0).unwrap();
        assert_eq!(report.dropped, 0);
        let bound = h * h * f2_max / 8.0 + 1e-9;
        for frame in &episode.frames {
            let truth = f(frame.t_capture_ns as f64 / 1e9);
            assert!(
                (frame.joint_angles_deg[0] - truth).abs() <= bound,
                "error {} above bound {bound}",
                (frame.joint_angles_deg[0] - truth).abs()
            );
        }
    }

    #[test]
    fn wrist_interpolation_takes_shortest_arc() {
        let a = wrist_about_z(0.0, [0.0, 0.0, 0.0]);
        let b = wrist_about_z(std::f64::consts::FRAC_PI_2, [10.0, -4.0, 2.0]);
        let camera = camera_series(&[50 * MS]);
        let encoder = scalar_series(&[0, 100 * MS], &[0.0, 1.0]);
        let wrist = Series::new(vec![0, 100 * MS], vec![a, b.clone()]).unwrap();
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: None,
            wrist: &wrist,
        };
        let (episode, _) = align_to_camera(&input, 45.0).unwrap();
        let got = &episode.frames[0].wrist;
        assert_eq!(got.position_mm, [5.0, -2.0, 1.0]);
        let expect = UnitQuaternion::from_axis_angle(
            &Vector3::z_axis(),
            std::f64::consts::FRAC_PI_4,
        );
        let q = to_quat(got.quat_wxyz);
        assert!(q.angle_to(&expect) < 1e-12);

        // The same rotation presented on the opposite hemisphere must not
        // flip the arc.
        let mut b_neg = b;
        b_neg.quat_wxyz = b_neg.quat_wxyz.map(|c| -c);
        let wrist_neg = Series::new(
            vec![0, 100 * MS],
            vec![wrist_about_z(0.0, [0.0; 3]), b_neg],
        )
        .unwrap();
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: None,
            wrist: &wrist_neg,
        };
        let (episode, _) = align_to_camera(&input, 45.0).unwrap();
        let q = to_quat(episode.frames[0].wrist.quat_wxyz);
        assert!(q.angle_to(&expect) < 1e-12);
    }

    #[test]
    fn unbracketed_camera_frames_are_dropped_not_extrapolated() {
        let camera = camera_series(&[-10 * MS, 10 * MS, 90 * MS, 150 * MS]);
        let encoder = scalar_series(&[0, 100 * MS], &[0.0, 10.0]);
        let wrist = wide_wrist_series(&[0, 100 * MS]);
        let tactile = scalar_series(&[5 * MS, 95 * MS], &[0.5, 0.7]);
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: Some(&tactile),
            wrist: &wrist,
        };
        let (episode, report) = align_to_camera(&input, 45.0).unwrap();
        // -10ms precedes everything; 10ms and 90ms are inside; 150ms is
        // beyond; 10ms must also be bracketed by tactile (starts at 5ms).
        assert_eq!(report.emitted, 2);
        assert_eq!(report.dropped, 2);
        assert_eq!(report.dropped_times_ns, vec![-10 * MS, 150 * MS]);
        assert_eq!(episode.frames.len(), 2);
        assert_eq!(episode.frames[0].t_capture_ns, 10 * MS);
    }

    #[test]
    fn alignment_commutes_with_time_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let enc_times: Vec<i64> = (0..40).map(|i| i * 22 * MS).collect();
        let enc_values: Vec<f64> = (0..40).map(|_| rng.random_range(-5.0..5.0)).collect();
        let cam_times: Vec<i64> = (1..25).map(|i| i * 33 * MS).collect();
        let delta = 123_456_789;

        let run = |shift: i64| {
            let camera = camera_series(&cam_times).shifted(shift);
            let encoder = scalar_series(&enc_times, &enc_values).shifted(shift);
            let wrist = wide_wrist_series(&[-MS, 1000 * MS]).shifted(shift);
            let input = AlignmentInput {
                camera: &camera,
                encoder: &encoder,
                tactile: None,
                wrist: &wrist,
            };
            align_to_camera(&input, 30.0).unwrap().0
        };
        let base = run(0);
        let shifted = run(delta);
        assert_eq!(base.frames.len(), shifted.frames.len());
        for (a, b) in base.frames.iter().zip(&shifted.frames) {
            assert_eq!(a.t_capture_ns + delta, b.t_capture_ns);
            // Weights depend only on time differences, so values match
            // bit for bit.
            assert_eq!(a.joint_angles_deg, b.joint_angles_deg);
            assert_eq!(a.wrist, b.wrist);
        }
    }

    #[test]
    fn interpolated_values_stay_in_bracket_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let times: Vec<i64> = (0..30).map(|i| i * 10 * MS).collect();
        let values: Vec<f64> = (0..30).map(|_| rng.random_range(-100.0..100.0)).collect();
        let cam_times: Vec<i64> = (0..200)
            .map(|_| rng.random_range(0..290 * MS))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let camera = camera_series(&cam_times);
        let encoder = scalar_series(&times, &values);
        let wrist = wide_wrist_series(&[0, 300 * MS]);
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: None,
            wrist: &wrist,
        };
        let (episode, _) = align_to_camera(&input, 45.0).unwrap();
        for frame in &episode.frames {
            let t = frame.t_capture_ns;
            let hi = times.partition_point(|&x| x < t).min(times.len() - 1);
            let lo = hi.saturating_sub(if times[hi] == t { 0 } else { 1 });
            let (min, max) = (values[lo].min(values[hi]), values[lo].max(values[hi]));
            assert!(frame.joint_angles_deg[0] >= min - 1e-9);
            assert!(frame.joint_angles_deg[0] <= max + 1e-9);
        }
    }

    #[test]
    fn uneven_row_widths_are_rejected() {
        let camera = camera_series(&[50 * MS]);
        let encoder = Series::new(vec![0, 100 * MS], vec![vec![0.0], vec![1.0, 2.0]]).unwrap();
        let wrist = wide_wrist_series(&[0, 100 * MS]);
        let input = AlignmentInput {
            camera: &camera,
            encoder: &encoder,
            tactile: None,
            wrist: &wrist,
        };
        assert!(matches!(
            align_to_camera(&input, 45.0),
            Err(TimelineError::InconsistentWidth {
                channel: Channel::Encoder,
                index: 1,
                ..
            })
        ));
    }

    fn toy_episode(n: usize) -> Episode {
        Episode {
            meta: EpisodeMeta {
                recorded_fps: 45.0,
                downsample_factor: 1,
            },
            frames: (0..n)
                .map(|i| EpisodeFrame {
                    t_capture_ns: i as i64 * 22 * MS,
                    wrist: identity_wrist(),
                    joint_angles_deg: vec![i as f64],
                    tactile: None,
                    image_ref: Some(format!("{i:06}.png")),
                })
                .collect(),
        }
    }

    #[test]
    fn downsample_keeps_every_nth_frame() {
        let episode = toy_episode(10);
        let down = downsample(&episode, 3).unwrap();
        let kept: Vec<f64> = down.frames.iter().map(|f| f.joint_angles_deg[0]).collect();
        assert_eq!(kept, vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(down.meta.downsample_factor, 3);
        assert_eq!(down.frames.len(), episode.frames.len().div_ceil(3));

        assert_eq!(downsample(&episode, 1).unwrap(), episode);
        assert!(matches!(
            downsample(&episode, 0),
            Err(TimelineError::InvalidFactor)
        ));
    }

    #[test]
    fn downsample_composes_multiplicatively() {
        for n in [1usize, 5, 17, 30] {
            let episode = toy_episode(n);
            let two_then_three = downsample(&downsample(&episode, 2).unwrap(), 3).unwrap();
            let six = downsample(&episode, 6).unwrap();
            assert_eq!(two_then_three, six);
        }
    }

    #[test]
    fn xcorr_recovers_known_sample_lag() {
        let signal: Vec<f64> = (0..200)
            .map(|i| (i as f64 * 0.13).sin() + 0.3 * (i as f64 * 0.041).cos())
            .collect();
        for shift in [0isize, 3, 9, -4] {
            let delayed: Vec<f64> = (0..200)
                .map(|i| {
                    let j = i as isize - shift;
                    if j >= 0 && (j as usize) < signal.len() {
                        signal[j as usize]
                    } else {
                        0.0
                    }
                })
                .collect();
            assert_eq!(estimate_lag_xcorr(&signal, &delayed, 20), shift);
        }
    }

    #[test]
    fn episode_jsonl_round_trip() {
        let mut episode = toy_episode(5);
        episode.frames[2].tactile = Some(vec![1.0, -2.5, 0.0]);
        let mut buf = Vec::new();
        write_episode_jsonl(&mut buf, &episode).unwrap();
        let back = read_episode_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, episode);
        assert_relative_eq!(back.meta.recorded_fps, 45.0);
    }
}
