//! Exact nearest-neighbor index over fingertip poses.
//!
//! A static kd-tree over the 6 pose coordinates (3 position, 3 direction).
//! Query distances are computed with [`pose_distance_sq`], the same
//! function used by brute-force scans, so the index is exact under the
//! pose metric rather than merely approximate: identical arithmetic,
//! identical results. Ties are broken toward the lowest sample index.

use super::{pose_distance_sq, PoseMetricParams};
use crate::kinemodel::Pose;

const DIMS: usize = 6;

#[derive(Debug, Clone)]
pub struct PoseIndex {
    /// Raw 6D coordinates per sample, in original sample order.
    coords: Vec<[f64; DIMS]>,
    /// Sample indices arranged as an implicit kd-tree (median layout).
    order: Vec<u32>,
    lambda_sq: f64,
}

fn embed(pose: &Pose) -> [f64; DIMS] {
    let d = pose.direction.into_inner();
    [
        pose.position.x,
        pose.position.y,
        pose.position.z,
        d.x,
        d.y,
        d.z,
    ]
}

impl PoseIndex {
    /// Build an index over `poses` for queries under `metric`. O(n log n).
    pub fn build(poses: &[Pose], metric: &PoseMetricParams) -> Self {
        let coords: Vec<[f64; DIMS]> = poses.iter().map(embed).collect();
        let mut order: Vec<u32> = (0..coords.len() as u32).collect();
        let mut tree = Self {
            coords,
            order: Vec::new(),
            lambda_sq: metric.lambda_mm * metric.lambda_mm,
        };
        if !order.is_empty() {
            let len = order.len();
            tree.partition(&mut order, 0, len, 0);
        }
        tree.order = order;
        tree
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Arrange `order[lo..hi]` so the median element (by `axis`, sample
    /// index as tiebreak for a deterministic layout) sits at the midpoint,
    /// then recurse into both halves on the next axis.
    fn partition(&self, order: &mut [u32], lo: usize, hi: usize, axis: usize) {
        if hi - lo <= 1 {
            return;
        }
        let mid = (lo + hi) / 2;
        let coords = &self.coords;
        order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            let ca = coords[a as usize][axis];
            let cb = coords[b as usize][axis];
            ca.partial_cmp(&cb)
                .expect("pose coordinates are finite")
                .then(a.cmp(&b))
        });
        let next = (axis + 1) % DIMS;
        self.partition(order, lo, mid, next);
        self.partition(order, mid + 1, hi, next);
    }

    /// Squared per-axis weight: 1 for position axes, lambda^2 for direction
    /// axes, matching the pose metric term-by-term.
    fn axis_weight(&self, axis: usize) -> f64 {
        if axis < 3 {
            1.0
        } else {
            self.lambda_sq
        }
    }

    fn metric(&self) -> PoseMetricParams {
        PoseMetricParams {
            lambda_mm: self.lambda_sq.sqrt(),
        }
    }

    /// Exact nearest neighbor of `query`: `(sample index, distance²)`.
    /// Panics on an empty index.
    pub fn nearest(&self, query: &Pose) -> (usize, f64) {
        assert!(!self.is_empty(), "nearest() on empty index");
        let q = embed(query);
        let metric = self.metric();
        let qpose = *query;
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(&q, &qpose, &metric, 0, self.order.len(), 0, &mut best);
        (best.0 as usize, best.1)
    }

    fn search(
        &self,
        q: &[f64; DIMS],
        qpose: &Pose,
        metric: &PoseMetricParams,
        lo: usize,
        hi: usize,
        axis: usize,
        best: &mut (u32, f64),
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let node = &self.coords[idx as usize];

        let node_pose = Pose {
            position: nalgebra::Vector3::new(node[0], node[1], node[2]),
            direction: nalgebra::Unit::new_unchecked(nalgebra::Vector3::new(
                node[3], node[4], node[5],
            )),
        };
        let d2 = pose_distance_sq(qpose, &node_pose, metric);
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }

        let diff = q[axis] - node[axis];
        let next = (axis + 1) % DIMS;
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, qpose, metric, near.0, near.1, next, best);
        // The far half can still hold the winner when the splitting plane
        // is closer than the current best; `<=` keeps equal-distance
        // candidates reachable so the lowest-index tiebreak stays exact.
        if diff * diff * self.axis_weight(axis) <= best.1 {
            self.search(q, qpose, metric, far.0, far.1, next, best);
        }
    }
}
