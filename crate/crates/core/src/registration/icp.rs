use super::kabsch::best_fit_transform;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform, Vec3};
use crate::spatial::KdTree;

const MIN_ROTATION_STEP: f64 = 1e-4;
const MIN_TRANSLATION_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct IcpOutcome {
    pub pose: RigidTransform,
    pub iterations: usize,
    /// Trimmed mean squared residual after each accepted iteration.
    pub residuals: Vec<f64>,
}

/// ICP trim for a pose explaining `lcp` of the model. Keeping a bit less than
/// the overlap stops borderline pairs from dragging the fit.
pub fn trim_for_overlap(lcp: f64) -> f64 {
    (0.7 * lcp).clamp(0.1, 0.9)
}

/// Trimmed ICP: model points (moved by the current pose) are paired with
/// their nearest segment points, the best `trim` fraction of pairs is kept
/// and a rigid fit is solved on those pairs.
pub fn trimmed_icp(
    model_sample: &PointCloud,
    segment: &PointCloud,
    init: RigidTransform,
    trim: f64,
    iters: usize,
) -> Result<RigidTransform> {
    if segment.is_empty() {
        return Err(Error::EmptySegment);
    }
    let tree = KdTree::new(&segment.points);
    Ok(trimmed_icp_with_tree(&model_sample.points, &tree, init, trim, iters).pose)
}

pub(crate) fn trimmed_icp_with_tree(
    model: &[Vec3],
    tree: &KdTree,
    init: RigidTransform,
    trim: f64,
    iters: usize,
) -> IcpOutcome {
    let trim = trim.clamp(f64::MIN_POSITIVE, 1.0);
    let keep = ((model.len() as f64 * trim).ceil() as usize).clamp(3.min(model.len()), model.len());
    let mut pose = init;
    let mut residuals = Vec::new();
    let mut iterations = 0;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(model.len());
    let mut prev = f64::INFINITY;
    if tree.is_empty() || model.len() < 3 {
        return IcpOutcome { pose, iterations, residuals };
    }
    for _ in 0..iters {
        pairs.clear();
        for (i, p) in model.iter().enumerate() {
            if let Some((j, d2)) = tree.nearest(&pose.apply(p)) {
                pairs.push((d2, i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let kept = &pairs[..keep.min(pairs.len())];
        let current = kept.iter().map(|e| e.0).sum::<f64>() / kept.len() as f64;
        if current > prev {
            // the previous fit already is the fixed point of this pairing rule
            break;
        }
        let src: Vec<Vec3> = kept.iter().map(|e| model[e.1]).collect();
        let dst: Vec<Vec3> = kept.iter().map(|e| *tree.point(e.2)).collect();
        let Some(next) = best_fit_transform(&src, &dst) else {
            break;
        };
        let step = next.compose(&pose.inverse());
        let fitted = src
            .iter()
            .zip(&dst)
            .map(|(s, d)| (next.apply(s) - d).norm_squared())
            .sum::<f64>()
            / src.len() as f64;
        iterations += 1;
        residuals.push(fitted);
        prev = fitted;
        pose = next;
        if step.rotation_angle_to(&RigidTransform::identity()) < MIN_ROTATION_STEP
            && step.translation().norm() < MIN_TRANSLATION_STEP
        {
            break;
        }
    }
    IcpOutcome { pose, iterations, residuals }
}
