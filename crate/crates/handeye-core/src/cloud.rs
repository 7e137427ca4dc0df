//! Point-cloud container and preprocessing: pass-through cropping,
//! statistical outlier removal, and Euclidean cluster segmentation.
//!
//! The pipeline order used for flange scenes is crop → outlier removal →
//! clustering; each stage is a pure function and never invents points.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::Vector3;

use crate::error::Error;
use crate::kdtree::KdTree;
use crate::se3::RigidTransform;

/// An ordered list of 3D points in meters, tagged with the frame it lives in
/// and a free-form provenance note.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    /// The points, meters. May be empty.
    pub points: Vec<Vector3<f64>>,
    /// Coordinate-frame label, e.g. `"cam"` or `"base"`.
    pub frame_tag: String,
    /// Where the cloud came from (file name, generator parameters, ...).
    pub source: String,
}

impl PointCloud {
    /// Wraps a point list with empty metadata.
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            frame_tag: String::new(),
            source: String::new(),
        }
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Whether the cloud holds no points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arithmetic mean of the points; `None` when empty.
    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    /// Returns the cloud mapped through a rigid transform, keeping metadata.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            points: self.points.iter().map(|p| t.transform_point(p)).collect(),
            frame_tag: self.frame_tag.clone(),
            source: self.source.clone(),
        }
    }

    /// Axis-aligned bounding box as `(min, max)`; `None` when empty.
    pub fn bounding_box(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.points.first()?;
        let mut min = first;
        let mut max = first;
        for p in &self.points[1..] {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Some((min, max))
    }
}

/// Axis-aligned crop box, closed on all faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassThroughBox {
    /// Minimum corner, meters.
    pub min: Vector3<f64>,
    /// Maximum corner, meters.
    pub max: Vector3<f64>,
}

impl PassThroughBox {
    /// Whether a point lies inside the closed box.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Parameters for statistical outlier removal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierParams {
    /// Number of nearest neighbors averaged per point.
    pub k_neighbors: usize,
    /// A point survives while its mean neighbor distance stays within
    /// `global mean + std_multiplier · global std`.
    pub std_multiplier: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            std_multiplier: 2.0,
        }
    }
}

/// Parameters for Euclidean cluster extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Two points closer than this belong to the same cluster.
    pub cluster_tolerance: f64,
    /// Clusters smaller than this are discarded.
    pub min_points: usize,
    /// Clusters whose largest bounding-box edge exceeds this are discarded;
    /// the default is the flange diameter plus 10%. The largest edge is used
    /// (not the box diagonal) because a flat disc of diameter d has a box
    /// diagonal of d·√2 in every orientation, which would discard the very
    /// cluster the constraint is meant to keep.
    pub max_extent: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            cluster_tolerance: 0.002,
            min_points: 50,
            max_extent: 0.0682,
        }
    }
}

/// Keeps exactly the points inside the closed box, preserving input order.
pub fn pass_through(cloud: &PointCloud, bbox: &PassThroughBox) -> PointCloud {
    PointCloud {
        points: cloud
            .points
            .iter()
            .filter(|p| bbox.contains(p))
            .copied()
            .collect(),
        frame_tag: cloud.frame_tag.clone(),
        source: cloud.source.clone(),
    }
}

/// Removes points whose mean distance to their `k` nearest neighbors is more
/// than `std_multiplier` standard deviations above the global mean of those
/// per-point means.
///
/// Requires at least `k_neighbors + 1` points so every point has `k` genuine
/// neighbors.
pub fn remove_statistical_outliers(
    cloud: &PointCloud,
    params: &OutlierParams,
) -> Result<PointCloud, Error> {
    let k = params.k_neighbors;
    let n = cloud.len();
    if n < k + 1 {
        return Err(Error::InsufficientPoints {
            required: k + 1,
            actual: n,
        });
    }

    let tree = KdTree::build(&cloud.points);
    let mean_dists: Vec<f64> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            // Query k+1 and drop the self-match (identified by index, so
            // coincident points keep their genuine neighbors).
            let sum: f64 = tree
                .k_nearest(p, k + 1)
                .into_iter()
                .filter(|&(j, _)| j != i)
                .take(k)
                .map(|(_, d)| d)
                .sum();
            sum / k as f64
        })
        .collect();

    let global_mean = mean_dists.iter().sum::<f64>() / n as f64;
    let variance = mean_dists
        .iter()
        .map(|d| (d - global_mean) * (d - global_mean))
        .sum::<f64>()
        / n as f64;
    let threshold = global_mean + params.std_multiplier * variance.sqrt();

    Ok(PointCloud {
        points: cloud
            .points
            .iter()
            .zip(&mean_dists)
            .filter(|(_, &d)| d <= threshold)
            .map(|(p, _)| *p)
            .collect(),
        frame_tag: cloud.frame_tag.clone(),
        source: cloud.source.clone(),
    })
}

/// Splits the cloud into connected components under the "within
/// `cluster_tolerance`" adjacency relation.
///
/// Components with fewer than `min_points` points or a largest bounding-box
/// edge above `max_extent` are discarded. Surviving clusters are returned
/// largest-first (ties broken by lowest member index), each with its points
/// in input order.
pub fn euclidean_clusters(cloud: &PointCloud, params: &ClusterParams) -> Vec<PointCloud> {
    let n = cloud.len();
    let tree = KdTree::build(&cloud.points);
    let mut visited = alloc::vec![false; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Breadth-first flood fill from the lowest unvisited index.
        let mut member = Vec::new();
        let mut frontier = alloc::vec![seed];
        visited[seed] = true;
        while let Some(i) = frontier.pop() {
            member.push(i);
            for j in tree.within_radius(&cloud.points[i], params.cluster_tolerance) {
                if !visited[j] {
                    visited[j] = true;
                    frontier.push(j);
                }
            }
        }
        member.sort_unstable();
        clusters.push(member);
    }

    clusters.retain(|m| m.len() >= params.min_points);
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

    clusters
        .into_iter()
        .map(|member| PointCloud {
            points: member.iter().map(|&i| cloud.points[i]).collect(),
            frame_tag: cloud.frame_tag.clone(),
            source: cloud.source.clone(),
        })
        .filter(|c| {
            let (min, max) = c.bounding_box().expect("clusters are non-empty");
            (max - min).max() <= params.max_extent
        })
        .collect()
}
