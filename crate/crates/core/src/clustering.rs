//! Two-level compression of a hypothesis set: K-Means on translations, then
//! kernel K-Means on rotations inside each translation cluster. Every
//! representative is a medoid, i.e. one of the input poses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, SymmetryGroup, Vec3};
use crate::registration::ScoredPose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k_t: usize,
    pub k_r: usize,
    /// Kernel width in degrees.
    pub sigma_deg: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_t: 5,
            k_r: 5,
            sigma_deg: 15.0,
            max_iters: 50,
            seed: 0,
        }
    }
}

/// Clusters with default kernel width, iteration cap and seed.
pub fn cluster_poses(hyps: &[ScoredPose], k_t: usize, k_r: usize, g: &SymmetryGroup) -> Vec<RigidTransform> {
    let cfg = ClusterConfig {
        k_t,
        k_r,
        ..Default::default()
    };
    cluster_scored(hyps, &cfg, g).into_iter().map(|s| s.pose).collect()
}

/// Representatives with their LCP, best LCP first (ties keep cluster order).
pub fn cluster_scored(hyps: &[ScoredPose], cfg: &ClusterConfig, g: &SymmetryGroup) -> Vec<ScoredPose> {
    let mut unique: Vec<ScoredPose> = Vec::with_capacity(hyps.len());
    for h in hyps {
        if !unique.iter().any(|u| u.pose == h.pose) {
            unique.push(h.clone());
        }
    }
    let k_t = cfg.k_t.max(1);
    let k_r = cfg.k_r.max(1);
    if unique.len() <= k_t * k_r {
        return unique;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let translations: Vec<Vec3> = unique.iter().map(|h| *h.pose.translation()).collect();
    let labels = kmeans(&translations, k_t, cfg.max_iters, &mut rng);
    let sigma = cfg.sigma_deg.to_radians();
    let mut reps = Vec::new();
    for c in 0..k_t {
        let members: Vec<usize> = (0..unique.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len();
        let mut kernel = vec![1.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let d = g.rotation_distance(unique[members[a]].pose.rotation(), unique[members[b]].pose.rotation());
                let k = (-(d * d) / (sigma * sigma)).exp();
                kernel[a * n + b] = k;
                kernel[b * n + a] = k;
            }
        }
        let sub = kernel_kmeans(&kernel, n, k_r, cfg.max_iters, &mut rng);
        for r in 0..k_r {
            let inner: Vec<usize> = (0..n).filter(|&i| sub[i] == r).collect();
            if let Some(m) = medoid(&kernel, n, &inner) {
                reps.push(unique[members[m]].clone());
            }
        }
    }
    // stable: equal LCP keeps cluster order
    reps.sort_by(|a, b| b.lcp.total_cmp(&a.lcp));
    reps
}

/// Member maximizing the summed kernel similarity to its cluster; lowest index on ties.
fn medoid(kernel: &[f64], n: usize, members: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in members {
        let s: f64 = members.iter().map(|&j| kernel[i * n + j]).sum();
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|b| b.0)
}

fn nearest(points: &Vec3, centers: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = (points - center).norm_squared();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Index drawn with probability proportional to `weights`; uniform if all zero.
fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Lloyd's algorithm with k-means++ seeding; returns a label per point.
pub(crate) fn kmeans(points: &[Vec3], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = k.min(points.len()).max(1);
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    while centers.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centers).1).collect();
        centers.push(points[weighted_pick(&weights, rng)]);
    }
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iters {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let (sum, count) = points
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == c)
                .fold((Vec3::zeros(), 0usize), |(s, n), (p, _)| (s + p, n + 1));
            if count > 0 {
                *center = sum / count as f64;
            }
        }
    }
    labels
}

/// Kernel K-Means over a precomputed `n × n` kernel; seeding picks points
/// with probability proportional to their feature-space distance.
fn kernel_kmeans(kernel: &[f64], n: usize, k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = k.min(n).max(1);
    let dist = |i: usize, j: usize| kernel[i * n + i] + kernel[j * n + j] - 2.0 * kernel[i * n + j];
    let mut seeds = vec![rng.random_range(0..n)];
    while seeds.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| seeds.iter().map(|&s| dist(i, s)).fold(f64::INFINITY, f64::min).max(0.0))
            .collect();
        seeds.push(weighted_pick(&weights, rng));
    }
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            (0..k)
                .min_by(|&a, &b| dist(i, seeds[a]).total_cmp(&dist(i, seeds[b])))
                .unwrap_or(0)
        })
        .collect();
    for _ in 0..max_iters {
        let mut size = vec![0usize; k];
        let mut self_term = vec![0.0; k];
        for (i, &l) in labels.iter().enumerate() {
            size[l] += 1;
            for (j, &m) in labels.iter().enumerate() {
                if m == l {
                    self_term[l] += kernel[i * n + j];
                }
            }
        }
        let next: Vec<usize> = (0..n)
            .map(|i| {
                let mut cross = vec![0.0; k];
                for (j, &l) in labels.iter().enumerate() {
                    cross[l] += kernel[i * n + j];
                }
                let mut best = (0, f64::INFINITY);
                for c in 0..k {
                    if size[c] == 0 {
                        continue;
                    }
                    let s = size[c] as f64;
                    let d = kernel[i * n + i] - 2.0 * cross[c] / s + self_term[c] / (s * s);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best.0
            })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn scored(pose: RigidTransform) -> ScoredPose {
        ScoredPose { pose, lcp: 0.5 }
    }

    #[test]
    fn underfull_returns_inputs() {
        let hyps: Vec<ScoredPose> = (0..10)
            .map(|i| scored(RigidTransform::from_translation(Vec3::new(i as f64 * 0.01, 0.0, 0.0))))
            .collect();
        let out = cluster_poses(&hyps, 5, 5, &SymmetryGroup::trivial());
        assert_eq!(out, hyps.iter().map(|h| h.pose).collect::<Vec<_>>());
    }

    #[test]
    fn identical_inputs_collapse() {
        let hyps = vec![scored(RigidTransform::from_axis_angle(Vec3::x(), 0.3)); 40];
        let out = cluster_poses(&hyps, 2, 2, &SymmetryGroup::trivial());
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn kernel_kmeans_splits_two_groups() {
        // block-diagonal kernel: {0,1,2} and {3,4} are mutually dissimilar
        let n = 5;
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if (i < 3) == (j < 3) {
                    kernel[i * n + j] = 1.0;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels = kernel_kmeans(&kernel, n, 2, 50, &mut rng);
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[1], labels[2]);
        assert_eq!(labels[3], labels[4]);
        assert_ne!(labels[0], labels[3]);
    }

    #[test]
    fn two_bundles_yield_one_representative_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hyps = Vec::new();
        for center in [Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.1, 0.0, 0.5)] {
            for _ in 0..30 {
                let t = center + Vec3::new(rng.random_range(-0.005..0.005), rng.random_range(-0.005..0.005), 0.0);
                let q = UnitQuaternion::from_euler_angles(rng.random_range(-0.05..0.05), 0.0, 0.0);
                hyps.push(scored(RigidTransform::new(q, t)));
            }
        }
        let out = cluster_poses(&hyps, 2, 1, &SymmetryGroup::trivial());
        assert_eq!(out.len(), 2);
        let near = |c: f64| out.iter().filter(|p| (p.translation().x - c).abs() < 0.01).count();
        assert_eq!(near(0.0), 1);
        assert_eq!(near(0.1), 1);
        for p in &out {
            assert!(hyps.iter().any(|h| h.pose == *p));
        }
    }

    #[test]
    fn deterministic_and_medoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hyps: Vec<ScoredPose> = (0..200)
            .map(|_| {
                let q = UnitQuaternion::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0));
                let t = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.4..0.6));
                ScoredPose { pose: RigidTransform::new(q, t), lcp: rng.random_range(0.0..1.0) }
            })
            .collect();
        let g = SymmetryGroup::box_symmetry();
        let cfg = ClusterConfig::default();
        let a = cluster_scored(&hyps, &cfg, &g);
        let b = cluster_scored(&hyps, &cfg, &g);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.len() <= 25 && a.len() > 5);
        for r in &a {
            assert!(hyps.contains(r));
        }
        for w in a.windows(2) {
            assert!(w[0].lcp >= w[1].lcp);
        }
    }
}
