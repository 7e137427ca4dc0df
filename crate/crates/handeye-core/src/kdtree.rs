//! Static k-d tree over 3D points with deterministic tie-breaking.
//!
//! All queries resolve distance ties by preferring the lower input index, so
//! neighbor searches (and everything built on them: outlier removal,
//! clustering, ICP correspondences) are reproducible regardless of
//! evaluation order.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use nalgebra::Vector3;

/// A neighbor candidate ordered by `(squared distance, input index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    dist2: f64,
    index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        // Coordinates are finite by the PointCloud invariant, so partial_cmp
        // cannot fail.
        self.dist2
            .partial_cmp(&other.dist2)
            .unwrap()
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Balanced k-d tree borrowing a point slice.
///
/// The tree is laid out implicitly: the splitting node of the sub-range
/// `[lo, hi)` of `order` sits at its midpoint, with the left subtree in
/// `[lo, mid)` and the right subtree in `(mid, hi)`. The split axis cycles
/// x → y → z with depth.
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    /// Builds the tree in O(n log n).
    pub fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build_range(points, &mut order, 0);
        Self { points, order }
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Whether the tree is empty.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest neighbor to `query` within `max_dist`, as
    /// `(input index, distance)`. Ties prefer the lower index.
    pub fn nearest(&self, query: &Vector3<f64>, max_dist: f64) -> Option<(usize, f64)> {
        let mut best: Option<Neighbor> = None;
        let bound = max_dist * max_dist;
        self.nearest_in(query, 0, self.order.len(), 0, bound, &mut best);
        best.map(|n| (n.index, n.dist2.sqrt()))
    }

    fn nearest_in(
        &self,
        query: &Vector3<f64>,
        lo: usize,
        hi: usize,
        depth: usize,
        bound: f64,
        best: &mut Option<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let index = self.order[mid];
        let candidate = Neighbor {
            dist2: (self.points[index] - query).norm_squared(),
            index,
        };
        if candidate.dist2 <= bound && best.map_or(true, |b| candidate < b) {
            *best = Some(candidate);
        }
        let axis = depth % 3;
        let delta = query[axis] - self.points[index][axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(query, near.0, near.1, depth + 1, bound, best);
        // Visit the far side only if the splitting plane is closer than the
        // current best (or the caller-imposed bound).
        let limit = best.map_or(bound, |b| b.dist2.min(bound));
        if delta * delta <= limit {
            self.nearest_in(query, far.0, far.1, depth + 1, bound, best);
        }
    }

    /// The `k` nearest neighbors to `query`, sorted by
    /// `(distance, input index)`; fewer if the tree holds fewer points.
    /// A query at an indexed point's position returns that point too.
    pub fn k_nearest(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        self.k_nearest_in(query, 0, self.order.len(), 0, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|n| (n.index, n.dist2.sqrt())).collect()
    }

    fn k_nearest_in(
        &self,
        query: &Vector3<f64>,
        lo: usize,
        hi: usize,
        depth: usize,
        k: usize,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let index = self.order[mid];
        let candidate = Neighbor {
            dist2: (self.points[index] - query).norm_squared(),
            index,
        };
        if heap.len() < k {
            heap.push(candidate);
        } else if candidate < *heap.peek().unwrap() {
            heap.push(candidate);
            heap.pop();
        }
        let axis = depth % 3;
        let delta = query[axis] - self.points[index][axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.k_nearest_in(query, near.0, near.1, depth + 1, k, heap);
        let prune = heap.len() == k && delta * delta > heap.peek().unwrap().dist2;
        if !prune {
            self.k_nearest_in(query, far.0, far.1, depth + 1, k, heap);
        }
    }

    /// All input indices within `radius` of `query`, sorted ascending.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_in(query, 0, self.order.len(), 0, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn within_in(
        &self,
        query: &Vector3<f64>,
        lo: usize,
        hi: usize,
        depth: usize,
        radius2: f64,
        out: &mut Vec<usize>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let index = self.order[mid];
        if (self.points[index] - query).norm_squared() <= radius2 {
            out.push(index);
        }
        let axis = depth % 3;
        let delta = query[axis] - self.points[index][axis];
        if delta < 0.0 || delta * delta <= radius2 {
            self.within_in(query, lo, mid, depth + 1, radius2, out);
        }
        if delta >= 0.0 || delta * delta <= radius2 {
            self.within_in(query, mid + 1, hi, depth + 1, radius2, out);
        }
    }
}

/// Arranges `order[..]` so every sub-range midpoint is its median along the
/// cycling axis, with `(coordinate, index)` comparisons for determinism.
fn build_range(points: &[Vector3<f64>], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    build_range(points, left, depth + 1);
    build_range(points, &mut rest[1..], depth + 1);
}
