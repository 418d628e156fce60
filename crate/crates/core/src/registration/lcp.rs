use crate::geometry::{PointCloud, RigidTransform};
use crate::spatial::KdTree;

/// Fraction of `model_sample` points that, moved by `pose`, have a segment
/// point strictly within `delta`.
pub fn lcp_score(model_sample: &PointCloud, segment: &PointCloud, pose: &RigidTransform, delta: f64) -> f64 {
    let tree = KdTree::new(&segment.points);
    lcp_with_tree(model_sample, &tree, pose, delta)
}

pub(crate) fn lcp_with_tree(model_sample: &PointCloud, tree: &KdTree, pose: &RigidTransform, delta: f64) -> f64 {
    if model_sample.is_empty() {
        return 0.0;
    }
    let hits = model_sample
        .points
        .iter()
        .filter(|p| tree.any_within(&pose.apply(p), delta))
        .count();
    hits as f64 / model_sample.len() as f64
}
