//! Four-point congruent-set matching.
//!
//! A coplanar base `(a, b, c, d)` is drawn from the segment such that the
//! diagonals `ab` and `cd` cross at `e`. The ratios `|ae|/|ab|` and `|ce|/|cd|`
//! and the angle between the diagonals survive any rigid motion, so model
//! pairs with the right lengths (looked up in a distance-bucket table) whose
//! interpolated crossing points coincide form candidate congruent sets.
//! Pairs are additionally filtered by the sign-free angles between the
//! surface normals at both ends and the pair direction.

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::icp::{trim_for_overlap, trimmed_icp_with_tree};
use super::kabsch::best_fit_transform;
use super::lcp::lcp_with_tree;
use super::ScoredPose;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform, TriangleMesh, Vec3};
use crate::spatial::KdTree;

/// Settings for hypothesis generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// LCP inlier radius and congruence tolerance, meters.
    pub delta: f64,
    /// Largest base diagonal as a fraction of the segment diameter.
    pub overlap_estimate: f64,
    /// Wall-clock cap in seconds; 0 disables it. Results are only
    /// reproducible while `max_bases` is the binding limit.
    pub time_budget: f64,
    pub max_bases: usize,
    pub model_sample_count: usize,
    /// Candidates are kept when their LCP reaches this fraction of the best.
    pub min_lcp_ratio: f64,
    /// Number of top-LCP candidates polished with trimmed ICP.
    pub refine_top: usize,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            delta: 0.005,
            overlap_estimate: 0.8,
            time_budget: 2.0,
            max_bases: 100,
            model_sample_count: 500,
            min_lcp_ratio: 0.3,
            refine_top: 8,
            seed: 0,
        }
    }
}

pub(crate) const MODEL_SAMPLE_SEED: u64 = 0x5eed_0001;
const COPLANAR_TOLERANCE: f64 = 1e-3;
const MIN_DIAGONAL_FRACTION: f64 = 0.3;
const BASE_ATTEMPTS: usize = 200;
const QUICK_SAMPLE: usize = 64;
const DEDUP_ANGLE: f64 = 1.0 * std::f64::consts::PI / 180.0;
const DEDUP_TRANSLATION: f64 = 2e-3;
const MAX_SEGMENT_POINTS: usize = 4000;
const NORMAL_TOLERANCE: f64 = 20.0 * std::f64::consts::PI / 180.0;
const MAX_FULL_SCORING: usize = 6000;
const MAX_SETS_PER_BASE: usize = 4000;

/// Sign-free angles of an oriented pair: normal at the start vs direction,
/// normal at the end vs direction, normal vs normal.
fn pair_angles(p: &Vec3, np: &Vec3, q: &Vec3, nq: &Vec3) -> [f64; 3] {
    let d = (q - p).normalize();
    let a = |x: f64| x.abs().min(1.0).acos();
    [a(np.dot(&d)), a(nq.dot(&d)), a(np.dot(nq))]
}

fn angles_match(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= NORMAL_TOLERANCE)
}

struct PairEntry {
    i: u32,
    j: u32,
    length: f64,
    angles: [f64; 3],
}

/// Distance-bucketed table of all unordered model point pairs.
pub struct PairTable {
    points: Vec<Vec3>,
    bucket_width: f64,
    buckets: Vec<Vec<PairEntry>>,
}

impl PairTable {
    /// `samples` are model points with their outward unit normals.
    pub fn new(samples: &[(Vec3, Vec3)], bucket_width: f64) -> Self {
        let mut buckets: Vec<Vec<PairEntry>> = Vec::new();
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let (p, np) = &samples[i];
                let (q, nq) = &samples[j];
                let length = (p - q).norm();
                if length <= 0.0 {
                    continue;
                }
                let b = (length / bucket_width) as usize;
                if b >= buckets.len() {
                    buckets.resize_with(b + 1, Vec::new);
                }
                buckets[b].push(PairEntry {
                    i: i as u32,
                    j: j as u32,
                    length,
                    angles: pair_angles(p, np, q, nq),
                });
            }
        }
        Self {
            points: samples.iter().map(|s| s.0).collect(),
            bucket_width,
            buckets,
        }
    }

    /// Oriented pairs `(i, j)` with `| |p_i - p_j| - length | <= tol` whose
    /// normal angles match `angles` (when given).
    fn pairs_near(&self, length: f64, tol: f64, angles: Option<&[f64; 3]>, out: &mut Vec<(u32, u32)>) {
        out.clear();
        let lo = ((length - tol).max(0.0) / self.bucket_width) as usize;
        let hi = ((length + tol) / self.bucket_width) as usize;
        for b in lo..=hi.min(self.buckets.len().saturating_sub(1)) {
            for e in &self.buckets[b] {
                if (e.length - length).abs() > tol {
                    continue;
                }
                let Some(want) = angles else {
                    out.push((e.i, e.j));
                    out.push((e.j, e.i));
                    continue;
                };
                if angles_match(&e.angles, want) {
                    out.push((e.i, e.j));
                }
                if angles_match(&[e.angles[1], e.angles[0], e.angles[2]], want) {
                    out.push((e.j, e.i));
                }
            }
        }
    }
}

/// Dense uniform grid over a bounding box, CSR layout.
struct PointGrid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl PointGrid {
    fn new(points: &[Vec3], cell: f64) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / cell) as usize + 1).min(512));
        let mut counts = vec![0u32; dims[0] * dims[1] * dims[2] + 1];
        let mut grid = Self {
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            items: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.key(p)).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        for (idx, &k) in keys.iter().enumerate() {
            grid.items[fill[k] as usize] = idx as u32;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid
    }

    fn coord(&self, p: &Vec3, k: usize) -> usize {
        (((p[k] - self.origin[k]) / self.cell).max(0.0) as usize).min(self.dims[k] - 1)
    }

    fn key(&self, p: &Vec3) -> usize {
        let (x, y, z) = (self.coord(p, 0), self.coord(p, 1), self.coord(p, 2));
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    /// Calls `f` with every stored index whose cell neighbours the cell of `p`.
    fn for_neighbours(&self, p: &Vec3, mut f: impl FnMut(u32)) {
        let mut c = [0i64; 3];
        for k in 0..3 {
            let raw = ((p[k] - self.origin[k]) / self.cell).floor();
            if raw < -1.0 || raw > self.dims[k] as f64 {
                return;
            }
            c[k] = raw as i64;
        }
        for dz in -1..=1i64 {
            let z = c[2] + dz;
            if z < 0 || z >= self.dims[2] as i64 {
                continue;
            }
            for dy in -1..=1i64 {
                let y = c[1] + dy;
                if y < 0 || y >= self.dims[1] as i64 {
                    continue;
                }
                for dx in -1..=1i64 {
                    let x = c[0] + dx;
                    if x < 0 || x >= self.dims[0] as i64 {
                        continue;
                    }
                    let key = ((z as usize * self.dims[1]) + y as usize) * self.dims[0] + x as usize;
                    for &item in &self.items[self.starts[key] as usize..self.starts[key + 1] as usize] {
                        f(item);
                    }
                }
            }
        }
    }
}

/// Voxel bitmap of everything within `radius` of a point set; a fast,
/// slightly generous stand-in for the exact radius query.
struct Occupancy {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    bits: Vec<u64>,
}

impl Occupancy {
    fn new(points: &[Vec3], radius: f64) -> Self {
        let cell = radius / 2.0;
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let origin = lo - Vec3::repeat(radius + cell);
        let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k] + 2.0 * (radius + cell)) / cell) as usize + 1);
        let total = dims[0] * dims[1] * dims[2];
        let mut occ = Self {
            origin,
            cell,
            dims,
            bits: vec![0; total.div_ceil(64)],
        };
        let reach = radius + cell * 0.5 * 3f64.sqrt();
        let span = (reach / cell).ceil() as i64;
        for p in points {
            let c = [0, 1, 2].map(|k| ((p[k] - origin[k]) / cell) as i64);
            for dz in -span..=span {
                for dy in -span..=span {
                    for dx in -span..=span {
                        let idx = [c[0] + dx, c[1] + dy, c[2] + dz];
                        if (0..3).any(|k| idx[k] < 0 || idx[k] >= dims[k] as i64) {
                            continue;
                        }
                        let center = Vec3::new(
                            origin.x + (idx[0] as f64 + 0.5) * cell,
                            origin.y + (idx[1] as f64 + 0.5) * cell,
                            origin.z + (idx[2] as f64 + 0.5) * cell,
                        );
                        if (center - p).norm() <= reach {
                            let key = (idx[2] as usize * dims[1] + idx[1] as usize) * dims[0] + idx[0] as usize;
                            occ.bits[key / 64] |= 1 << (key % 64);
                        }
                    }
                }
            }
        }
        occ
    }

    fn contains(&self, p: &Vec3) -> bool {
        let mut key = 0usize;
        for k in (0..3).rev() {
            let f = (p[k] - self.origin[k]) / self.cell;
            if !(f >= 0.0 && f < self.dims[k] as f64) {
                return false;
            }
            key = key * self.dims[k] + f as usize;
        }
        self.bits[key / 64] & (1 << (key % 64)) != 0
    }

    /// Hit count over `points` moved by `pose`, abandoning once `needed` is out of reach.
    fn hits(&self, points: &[Vec3], pose: &RigidTransform, needed: usize) -> usize {
        let mut hits = 0;
        for (i, p) in points.iter().enumerate() {
            if self.contains(&pose.apply(p)) {
                hits += 1;
            }
            if hits + (points.len() - i - 1) < needed {
                break;
            }
        }
        hits
    }
}

#[derive(Clone, Copy, Debug)]
struct Base {
    pts: [Vec3; 4],
    r1: f64,
    r2: f64,
    cos_angle: f64,
    /// Pair angles of the diagonals `ab` and `cd`, when normals are known.
    angles: Option<[[f64; 3]; 2]>,
}

impl Base {
    fn d1(&self) -> f64 {
        (self.pts[1] - self.pts[0]).norm()
    }

    fn d2(&self) -> f64 {
        (self.pts[3] - self.pts[2]).norm()
    }
}

/// Parameters `(λ, μ)` of the closest points `a + λ(b-a)` and `c + μ(d-c)`.
fn line_crossing(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Option<(f64, f64)> {
    let u = b - a;
    let v = d - c;
    let w = a - c;
    let (uu, uv, vv, uw, vw) = (u.dot(&u), u.dot(&v), v.dot(&v), u.dot(&w), v.dot(&w));
    let den = uu * vv - uv * uv;
    if den.abs() < 1e-18 {
        return None;
    }
    Some(((uv * vw - vv * uw) / den, (uu * vw - uv * uw) / den))
}

fn is_degenerate(points: &[Vec3]) -> bool {
    if points.len() < 4 {
        return true;
    }
    let mean = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// Unit normal of the local plane fit around `p`; `None` with too few neighbours.
fn estimate_normal(tree: &KdTree, p: &Vec3, radius: f64) -> Option<Vec3> {
    let idx = tree.within(p, radius);
    if idx.len() < 5 {
        return None;
    }
    let pts: Vec<Vec3> = idx.iter().map(|&i| *tree.point(i)).collect();
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let mut cov = nalgebra::Matrix3::zeros();
    for q in &pts {
        let d = q - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let ev = &eig.eigenvalues;
    let mut sorted = [ev[0], ev[1], ev[2]];
    sorted.sort_by(f64::total_cmp);
    if sorted[1] <= 1e-12 {
        return None;
    }
    Some(eig.eigenvectors.column(k).into_owned().normalize())
}

fn approximate_diameter(points: &[Vec3]) -> f64 {
    let stride = (points.len() / 300).max(1);
    let sub: Vec<Vec3> = points.iter().step_by(stride).copied().collect();
    PointCloud::model(sub).diameter()
}

fn select_base(points: &[Vec3], diameter: f64, max_fraction: f64, rng: &mut ChaCha8Rng) -> Option<Base> {
    let dmin = MIN_DIAGONAL_FRACTION * diameter;
    let dmax = (max_fraction * diameter).max(dmin * 1.2);
    for _ in 0..BASE_ATTEMPTS {
        let a = *points.choose(rng)?;
        let Some(b) = (0..50)
            .map(|_| *points.choose(rng).expect("non-empty"))
            .find(|b| (b - a).norm() >= dmin && (b - a).norm() <= dmax)
        else {
            continue;
        };
        let ab = b - a;
        let Some(c) = (0..50).map(|_| *points.choose(rng).expect("non-empty")).find(|c| {
            let off_line = ab.cross(&(c - a)).norm() / ab.norm();
            off_line >= 0.5 * dmin
        }) else {
            continue;
        };
        let normal = ab.cross(&(c - a)).normalize();
        let mut candidates: Vec<(Vec3, f64, f64)> = Vec::new();
        for d in points {
            if normal.dot(&(d - a)).abs() > COPLANAR_TOLERANCE {
                continue;
            }
            let cd = (d - c).norm();
            if cd < dmin || cd > dmax {
                continue;
            }
            if let Some((l, m)) = line_crossing(&a, &b, &c, d) {
                if (0.2..=0.8).contains(&l) && (0.2..=0.8).contains(&m) {
                    candidates.push((*d, l, m));
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }
        let (d, r1, r2) = candidates[rng.random_range(0..candidates.len())];
        let cos_angle = ab.normalize().dot(&(d - c).normalize());
        return Some(Base {
            pts: [a, b, c, d],
            r1,
            r2,
            cos_angle,
            angles: None,
        });
    }
    None
}

/// Enumerates congruent 4-point sets for one base and returns the candidate
/// model→segment transforms.
fn congruent_candidates(
    table: &PairTable,
    base: &Base,
    delta: f64,
    scratch: &mut (Vec<(u32, u32)>, Vec<(u32, u32)>),
) -> Vec<RigidTransform> {
    let pts = &table.points;
    let (pairs1, pairs2) = scratch;
    table.pairs_near(base.d1(), delta, base.angles.as_ref().map(|a| &a[0]), pairs1);
    table.pairs_near(base.d2(), delta, base.angles.as_ref().map(|a| &a[1]), pairs2);
    if pairs1.is_empty() || pairs2.is_empty() {
        return Vec::new();
    }
    let crossings: Vec<Vec3> = pairs1
        .iter()
        .map(|&(i, j)| pts[i as usize] + (pts[j as usize] - pts[i as usize]) * base.r1)
        .collect();
    let grid = PointGrid::new(&crossings, delta);
    let [a, b, c, d] = base.pts;
    let cross_dists = [(a - c).norm(), (a - d).norm(), (b - c).norm(), (b - d).norm()];
    let angle_tol = (2.0 * delta / base.d1().min(base.d2())).min(0.5);
    let base_angle = base.cos_angle.clamp(-1.0, 1.0).acos();
    let dist_tol = 2.0 * delta;
    let delta2 = delta * delta;

    let mut sets: Vec<[u32; 4]> = Vec::new();
    for &(k, l) in pairs2.iter() {
        let (pk, pl) = (pts[k as usize], pts[l as usize]);
        let e2 = pk + (pl - pk) * base.r2;
        let dir2 = (pl - pk).normalize();
        grid.for_neighbours(&e2, |m| {
            if (crossings[m as usize] - e2).norm_squared() > delta2 {
                return;
            }
            let (i, j) = pairs1[m as usize];
            if i == k || i == l || j == k || j == l {
                return;
            }
            let (pi, pj) = (pts[i as usize], pts[j as usize]);
            let angle = (pj - pi).normalize().dot(&dir2).clamp(-1.0, 1.0).acos();
            if (angle - base_angle).abs() > angle_tol {
                return;
            }
            let dists = [(pi - pk).norm(), (pi - pl).norm(), (pj - pk).norm(), (pj - pl).norm()];
            if dists.iter().zip(&cross_dists).any(|(x, y)| (x - y).abs() > dist_tol) {
                return;
            }
            sets.push([i, j, k, l]);
        });
    }
    // symmetric or planar models can yield vast numbers of equivalent sets
    let stride = sets.len().div_ceil(MAX_SETS_PER_BASE).max(1);
    let mut out = Vec::new();
    for set in sets.iter().step_by(stride) {
        let src = set.map(|i| pts[i as usize]);
        if let Some(pose) = best_fit_transform(&src, &base.pts) {
            let rms = (src
                .iter()
                .zip(&base.pts)
                .map(|(s, t)| (pose.apply(s) - t).norm_squared())
                .sum::<f64>()
                / 4.0)
                .sqrt();
            if rms <= delta {
                out.push(pose);
            }
        }
    }
    out
}

fn pose_key(p: &ScoredPose) -> [f64; 7] {
    let q = p.pose.quaternion_wxyz();
    let t = p.pose.translation();
    [q[0], q[1], q[2], q[3], t.x, t.y, t.z]
}

/// Descending LCP, ties broken by the pose's numeric components.
pub(crate) fn sort_scored(poses: &mut [ScoredPose]) {
    poses.sort_by(|a, b| {
        b.lcp.total_cmp(&a.lcp).then_with(|| {
            let (ka, kb) = (pose_key(a), pose_key(b));
            ka.iter()
                .zip(&kb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
}

/// Greedy suppression in LCP order: drops poses within (1°, 2 mm) of a kept one.
pub(crate) fn dedup_sorted(poses: Vec<ScoredPose>) -> Vec<ScoredPose> {
    use std::collections::HashMap;
    let cell = DEDUP_TRANSLATION;
    let key = |t: &Vec3| {
        (
            (t.x / cell).floor() as i64,
            (t.y / cell).floor() as i64,
            (t.z / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<ScoredPose> = Vec::new();
    for cand in poses {
        let t = *cand.pose.translation();
        let (x, y, z) = key(&t);
        let mut duplicate = false;
        'outer: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(x + dx, y + dy, z + dz)) {
                        for &k in list {
                            let other = &kept[k].pose;
                            if other.translation_distance(&cand.pose) < DEDUP_TRANSLATION
                                && other.rotation_angle_to(&cand.pose) < DEDUP_ANGLE
                            {
                                duplicate = true;
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        if !duplicate {
            grid.entry((x, y, z)).or_default().push(kept.len());
            kept.push(cand);
        }
    }
    kept
}

/// Matches `model` against `segment` and returns scored candidate poses,
/// model frame → segment frame, best LCP first.
pub fn congruent_set_matching(model: &TriangleMesh, segment: &PointCloud, cfg: &MatchConfig) -> Result<Vec<ScoredPose>> {
    let samples = model.sample_with_normals(cfg.model_sample_count.max(4), MODEL_SAMPLE_SEED);
    let table = PairTable::new(&samples, cfg.delta);
    let sample = PointCloud::model(samples.into_iter().map(|s| s.0).collect());
    match_with_table(&table, &sample, segment, cfg)
}

pub(crate) fn match_with_table(
    table: &PairTable,
    sample: &PointCloud,
    segment: &PointCloud,
    cfg: &MatchConfig,
) -> Result<Vec<ScoredPose>> {
    if is_degenerate(&segment.points) {
        return Err(Error::DegenerateSegment);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tree = KdTree::new(&segment.points);
    let occupancy = Occupancy::new(&segment.points, cfg.delta);
    let base_pool: Vec<Vec3> = if segment.len() > MAX_SEGMENT_POINTS {
        let stride = segment.len().div_ceil(MAX_SEGMENT_POINTS);
        segment.points.iter().step_by(stride).copied().collect()
    } else {
        segment.points.clone()
    };
    let diameter = approximate_diameter(&base_pool);
    let quick = &sample.points[..QUICK_SAMPLE.min(sample.len())];

    let mut scratch = (Vec::new(), Vec::new());
    let mut best_quick = 0usize;
    let mut found: Vec<(RigidTransform, usize)> = Vec::new();
    for _ in 0..cfg.max_bases {
        if cfg.time_budget > 0.0 && start.elapsed().as_secs_f64() > cfg.time_budget {
            break;
        }
        let Some(mut base) = select_base(&base_pool, diameter, cfg.overlap_estimate, &mut rng) else {
            continue;
        };
        let radius = (3.0 * cfg.delta).max(0.25 * diameter.min(0.06));
        let normals: Option<Vec<Vec3>> = base.pts.iter().map(|p| estimate_normal(&tree, p, radius)).collect();
        let Some(n) = normals else {
            continue;
        };
        let [a, b, c, d] = base.pts;
        base.angles = Some([pair_angles(&a, &n[0], &b, &n[1]), pair_angles(&c, &n[2], &d, &n[3])]);
        for pose in congruent_candidates(table, &base, cfg.delta, &mut scratch) {
            let needed = (best_quick / 4).max(1);
            let hits = occupancy.hits(quick, &pose, needed);
            if hits >= needed {
                best_quick = best_quick.max(hits);
                found.push((pose, hits));
            }
        }
    }
    let cutoff = (best_quick / 4).max(1);
    found.retain(|(_, hits)| *hits >= cutoff);
    // stable: equal quick scores keep discovery order
    found.sort_by(|a, b| b.1.cmp(&a.1));
    found.truncate(MAX_FULL_SCORING);
    let mut scored: Vec<ScoredPose> = found
        .into_iter()
        .map(|(pose, _)| ScoredPose {
            pose,
            lcp: lcp_with_tree(sample, &tree, &pose, cfg.delta),
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::NoCongruentSets);
    }
    sort_scored(&mut scored);
    let refine = cfg.refine_top.min(scored.len());
    for item in scored.iter_mut().take(refine) {
        let trim = trim_for_overlap(item.lcp);
        let refined = trimmed_icp_with_tree(&sample.points, &tree, item.pose, trim, 30).pose;
        let lcp = lcp_with_tree(sample, &tree, &refined, cfg.delta);
        if lcp >= item.lcp {
            item.pose = refined;
            item.lcp = lcp;
        }
    }
    let best = scored.iter().map(|s| s.lcp).fold(0.0, f64::max);
    scored.retain(|s| s.lcp >= cfg.min_lcp_ratio * best);
    sort_scored(&mut scored);
    Ok(dedup_sorted(scored))
}
